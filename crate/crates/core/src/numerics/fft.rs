//! Spatial 2-D FFT over every (frame, channel) plane, center shifting, and
//! radial low/high frequency masks.
//!
//! The forward transform is unnormalized and the inverse carries the
//! `1/(H·W)` factor, so `Σ|X|² = H·W·Σ|x|²` per plane. Transforms run in
//! `f64` internally; tensors stay `f32`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::tensor::{LatentTensor, Shape};
use crate::error::{Error, Result};

/// Complex spectrum with the same (F, C, H, W) layout as the tensor it came
/// from. `centered` records whether the DC bin sits at `(H/2, W/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTensor {
    shape: Shape,
    data: Vec<Complex64>,
    centered: bool,
}

impl SpectrumTensor {
    pub fn zeros(shape: Shape, centered: bool) -> Self {
        Self {
            shape,
            data: vec![Complex64::new(0.0, 0.0); shape.iter().product()],
            centered,
        }
    }

    pub fn from_parts(shape: Shape, data: Vec<Complex64>, centered: bool) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::BadLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self {
            shape,
            data,
            centered,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, f: usize, c: usize, y: usize, x: usize) -> Complex64 {
        let [_, ch, h, w] = self.shape;
        self.data[((f * ch + c) * h + y) * w + x]
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                actual: other.shape,
            });
        }
        if self.centered != other.centered {
            return Err(Error::InvalidArgument(
                "mixing centered and uncentered spectra".into(),
            ));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            centered: self.centered,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| v * k).collect(),
            centered: self.centered,
        }
    }

    /// Keeps bins where `mask` is set, zeroes the rest. Requires a centered
    /// spectrum since masks are defined on the centered grid.
    pub fn masked(&self, mask: &[bool]) -> Result<Self> {
        let [_, _, h, w] = self.shape;
        if !self.centered {
            return Err(Error::InvalidArgument("masking needs a centered spectrum".into()));
        }
        if mask.len() != h * w {
            return Err(Error::InvalidArgument(format!(
                "mask has {} bins, spectrum plane has {}",
                mask.len(),
                h * w
            )));
        }
        let zero = Complex64::new(0.0, 0.0);
        let data = self
            .data
            .chunks_exact(h * w)
            .flat_map(|plane| plane.iter().zip(mask).map(|(&v, &m)| if m { v } else { zero }))
            .collect();
        Ok(Self {
            shape: self.shape,
            data,
            centered: true,
        })
    }

    /// Σ|X|² over bins where `mask` is set (all bins when `None`).
    pub fn energy(&self, mask: Option<&[bool]>) -> f64 {
        let [_, _, h, w] = self.shape;
        match mask {
            None => self.data.iter().map(|v| v.norm_sqr()).sum(),
            Some(m) => self
                .data
                .chunks_exact(h * w)
                .flat_map(|plane| plane.iter().zip(m).filter(|(_, &on)| on).map(|(v, _)| v.norm_sqr()))
                .sum(),
        }
    }

    pub fn shifted(&self) -> Self {
        if self.centered {
            return self.clone();
        }
        Self {
            shape: self.shape,
            data: shift_planes(&self.data, self.shape, true),
            centered: true,
        }
    }

    pub fn unshifted(&self) -> Self {
        if !self.centered {
            return self.clone();
        }
        Self {
            shape: self.shape,
            data: shift_planes(&self.data, self.shape, false),
            centered: false,
        }
    }
}

fn shift_planes(data: &[Complex64], shape: Shape, forward: bool) -> Vec<Complex64> {
    let [_, _, h, w] = shape;
    let (oy, ox) = (h / 2, w / 2);
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for (src, dst) in data.chunks_exact(h * w).zip(out.chunks_exact_mut(h * w)) {
        for y in 0..h {
            for x in 0..w {
                // fftshift moves bin 0 to (h/2, w/2); ifftshift undoes it.
                let (sy, sx) = ((y + oy) % h, (x + ox) % w);
                if forward {
                    dst[sy * w + sx] = src[y * w + x];
                } else {
                    dst[y * w + x] = src[sy * w + sx];
                }
            }
        }
    }
    out
}

fn transform_planes(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for plane in data.chunks_exact_mut(h * w) {
        row.process(plane);
        for x in 0..w {
            for y in 0..h {
                column[y] = plane[y * w + x];
            }
            col.process(&mut column);
            for y in 0..h {
                plane[y * w + x] = column[y];
            }
        }
    }
}

/// Uncentered forward DFT of every H×W plane.
pub fn fft2(x: &LatentTensor) -> Result<SpectrumTensor> {
    if x.is_empty() {
        return Err(Error::Empty);
    }
    let [_, _, h, w] = x.shape();
    let mut data: Vec<Complex64> = x.data().iter().map(|&v| Complex64::new(v as f64, 0.0)).collect();
    transform_planes(&mut data, h, w, false);
    SpectrumTensor::from_parts(x.shape(), data, false)
}

/// Inverse of [`fft2`]; centered spectra are unshifted first. The imaginary
/// residue is dropped.
pub fn ifft2(s: &SpectrumTensor) -> Result<LatentTensor> {
    let shape = s.shape();
    if s.data.len() != shape.iter().product::<usize>() {
        return Err(Error::BadLength {
            shape,
            len: s.data.len(),
        });
    }
    if s.data.is_empty() {
        return Err(Error::Empty);
    }
    let [_, _, h, w] = shape;
    let mut data = s.unshifted().data;
    transform_planes(&mut data, h, w, true);
    let norm = 1.0 / (h * w) as f64;
    if cfg!(debug_assertions) {
        let max_re = data.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
        let max_im = data.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        debug_assert!(
            max_im <= 1e-5 * max_re.max(1e-30),
            "imaginary residue {max_im} exceeds tolerance (real peak {max_re})"
        );
    }
    let real = data.iter().map(|v| (v.re * norm) as f32).collect();
    LatentTensor::from_vec(shape, real)
}

/// Binary partition of the centered H×W frequency grid at a radial cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMask {
    pub height: usize,
    pub width: usize,
    pub cutoff: f64,
    pub low: Vec<bool>,
    pub high: Vec<bool>,
}

impl FrequencyMask {
    pub fn low_count(&self) -> usize {
        self.low.iter().filter(|&&b| b).count()
    }
}

/// Low bins satisfy `r ≤ ρ·r_max` with `r` measured from the centered DC bin
/// and `r_max = √((H/2)² + (W/2)²)`.
pub fn make_masks(height: usize, width: usize, cutoff: f64) -> Result<FrequencyMask> {
    if !(0.0..=1.0).contains(&cutoff) {
        return Err(Error::InvalidArgument(format!("cutoff {cutoff} outside [0, 1]")));
    }
    if height == 0 || width == 0 {
        return Err(Error::Empty);
    }
    let (hh, hw) = (height as f64 / 2.0, width as f64 / 2.0);
    let limit = cutoff * cutoff * (hh * hh + hw * hw);
    let (cy, cx) = ((height / 2) as i64, (width / 2) as i64);
    let low: Vec<bool> = (0..height)
        .flat_map(|y| (0..width).map(move |x| (y as i64 - cy, x as i64 - cx)))
        .map(|(dy, dx)| ((dy * dy + dx * dx) as f64) <= limit)
        .collect();
    let high = low.iter().map(|&b| !b).collect();
    Ok(FrequencyMask {
        height,
        width,
        cutoff,
        low,
        high,
    })
}

/// Centered low- and high-band spectra of `x`. Their sum is the full
/// centered spectrum.
pub fn split_frequency(x: &LatentTensor, cutoff: f64) -> Result<(SpectrumTensor, SpectrumTensor)> {
    let spectrum = fft2(x)?.shifted();
    let mask = make_masks(x.height(), x.width(), cutoff)?;
    Ok((spectrum.masked(&mask.low)?, spectrum.masked(&mask.high)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_only_dc() {
        let x = LatentTensor::filled([1, 1, 4, 4], 0.5);
        let s = fft2(&x).unwrap();
        assert!((s.get(0, 0, 0, 0).re - 8.0).abs() < 1e-12);
        for (i, v) in s.data().iter().enumerate().skip(1) {
            assert!(v.norm() < 1e-12, "bin {i} = {v}");
        }
    }

    #[test]
    fn impulse_is_flat() {
        let mut x = LatentTensor::zeros([1, 1, 4, 4]);
        x.data_mut()[0] = 1.0;
        let s = fft2(&x).unwrap();
        for v in s.data() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(fft2(&LatentTensor::zeros([0, 1, 4, 4])), Err(Error::Empty));
    }

    #[test]
    fn zero_spectrum_inverts_to_zero() {
        let s = SpectrumTensor::zeros([1, 2, 4, 6], true);
        let x = ifft2(&s).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_cosine_bin_pair() {
        // X[ky, kx] = X[-ky, -kx] = HW/2 → x = cos(2π(ky·y/H + kx·x/W)).
        let (h, w, ky, kx) = (8usize, 8usize, 1usize, 2usize);
        let mut data = vec![Complex64::new(0.0, 0.0); h * w];
        let half = (h * w) as f64 / 2.0;
        data[ky * w + kx] = Complex64::new(half, 0.0);
        data[((h - ky) % h) * w + (w - kx) % w] = Complex64::new(half, 0.0);
        let s = SpectrumTensor::from_parts([1, 1, h, w], data, false).unwrap();
        let x = ifft2(&s).unwrap();
        for y in 0..h {
            for xx in 0..w {
                let phase = 2.0 * std::f64::consts::PI * (ky as f64 * y as f64 / h as f64 + kx as f64 * xx as f64 / w as f64);
                assert!((x.get(0, 0, y, xx) as f64 - phase.cos()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn mask_extremes() {
        let all = make_masks(6, 8, 1.0).unwrap();
        assert!(all.low.iter().all(|&b| b) && all.high.iter().all(|&b| !b));
        let dc = make_masks(6, 8, 0.0).unwrap();
        assert_eq!(dc.low_count(), 1);
        assert!(dc.low[3 * 8 + 4]);
        assert!(make_masks(4, 4, 1.5).is_err());
        assert!(make_masks(4, 4, -0.1).is_err());
    }

    #[test]
    fn mask_count_by_enumeration() {
        // 8×8 at ρ = 0.5: r² ≤ 8 around (4, 4).
        let mut expected = 0;
        for dy in -4i32..4 {
            for dx in -4i32..4 {
                if dy * dy + dx * dx <= 8 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 25);
        assert_eq!(make_masks(8, 8, 0.5).unwrap().low_count(), expected);
    }

    #[test]
    fn shift_round_trips_odd_sizes() {
        let x = LatentTensor::randn([1, 1, 5, 7], 3, 0);
        let s = fft2(&x).unwrap();
        assert_eq!(s.shifted().unshifted(), s);
        assert_eq!(s.shifted().get(0, 0, 2, 3), s.get(0, 0, 0, 0));
    }

    #[test]
    fn constant_has_no_high_band() {
        let x = LatentTensor::filled([2, 1, 8, 8], 3.0);
        for rho in [0.0, 0.1, 0.25, 0.9] {
            let (_, high) = split_frequency(&x, rho).unwrap();
            assert!(high.energy(None) < 1e-18);
        }
    }
}
