//! Fidelity metrics between two tensors of equal shape.

use super::tensor::LatentTensor;
use crate::error::{Error, Result};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

pub fn mse(a: &LatentTensor, b: &LatentTensor) -> Result<f64> {
    a.check_same_shape(b)?;
    if a.is_empty() {
        return Err(Error::Empty);
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Peak signal-to-noise ratio in dB. Identical inputs give `f64::INFINITY`.
pub fn psnr(a: &LatentTensor, b: &LatentTensor, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument(format!("peak must be positive, got {peak}")));
    }
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable "valid" Gaussian filtering of one plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11×11 Gaussian window (σ = 1.5), evaluated per frame
/// and channel over the valid region and averaged.
pub fn ssim(a: &LatentTensor, b: &LatentTensor, peak: f64) -> Result<f64> {
    a.check_same_shape(b)?;
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument(format!("peak must be positive, got {peak}")));
    }
    let [f, c, h, w] = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs spatial dims ≥ {SSIM_WINDOW}, got {h}×{w}"
        )));
    }
    if f * c == 0 {
        return Err(Error::Empty);
    }
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let k = gaussian_window();
    let mut total = 0.0;
    for fi in 0..f {
        for ci in 0..c {
            let pa: Vec<f64> = a.plane(fi, ci).iter().map(|&v| v as f64).collect();
            let pb: Vec<f64> = b.plane(fi, ci).iter().map(|&v| v as f64).collect();
            let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
            let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
            let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
            let mu_a = filter_valid(&pa, h, w, &k);
            let mu_b = filter_valid(&pb, h, w, &k);
            let e_aa = filter_valid(&aa, h, w, &k);
            let e_bb = filter_valid(&bb, h, w, &k);
            let e_ab = filter_valid(&ab, h, w, &k);
            let n = mu_a.len();
            let mut acc = 0.0;
            for i in 0..n {
                let (ma, mb) = (mu_a[i], mu_b[i]);
                let va = e_aa[i] - ma * ma;
                let vb = e_bb[i] - mb * mb;
                let cov = e_ab[i] - ma * mb;
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
            total += acc / n as f64;
        }
    }
    Ok(total / (f * c) as f64)
}
