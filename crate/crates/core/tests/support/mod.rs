//! Independent reference implementations used only by tests.
#![allow(dead_code)]

use fastercache::numerics::{Complex64, LatentTensor};

/// Direct O(N²) DFT of one H×W plane, uncentered, unnormalized.
pub fn naive_dft(plane: &[f32], h: usize, w: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for ky in 0..h {
        for kx in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let phase = -2.0 * std::f64::consts::PI * ((ky * y) as f64 / h as f64 + (kx * x) as f64 / w as f64);
                    acc += Complex64::from_polar(plane[y * w + x] as f64, phase);
                }
            }
            out[ky * w + kx] = acc;
        }
    }
    out
}

/// Signed frequency of bin `k` on an axis of length `n`, matching the
/// centered layout (`-n/2 .. n/2`, Nyquist on the negative side).
pub fn signed_freq(k: usize, n: usize) -> i64 {
    let k = k as i64;
    let n = n as i64;
    if k >= n - n / 2 {
        k - n
    } else {
        k
    }
}

/// Whether uncentered bin (ky, kx) is in the low band at cutoff ρ.
pub fn is_low(ky: usize, kx: usize, h: usize, w: usize, rho: f64) -> bool {
    let fy = signed_freq(ky, h) as f64;
    let fx = signed_freq(kx, w) as f64;
    let rmax2 = (h as f64 / 2.0).powi(2) + (w as f64 / 2.0).powi(2);
    fy * fy + fx * fx <= rho * rho * rmax2
}

/// (low, high) band energies of `x` via the naive DFT.
pub fn naive_band_energy(x: &LatentTensor, rho: f64) -> (f64, f64) {
    let [f, c, h, w] = x.shape();
    let (mut lo, mut hi) = (0.0, 0.0);
    for fi in 0..f {
        for ci in 0..c {
            let s = naive_dft(x.plane(fi, ci), h, w);
            for ky in 0..h {
                for kx in 0..w {
                    let e = s[ky * w + kx].norm_sqr();
                    if is_low(ky, kx, h, w, rho) {
                        lo += e;
                    } else {
                        hi += e;
                    }
                }
            }
        }
    }
    (lo, hi)
}

/// Loop-based multi-head softmax attention.
pub fn brute_attention(q: &[f32], k: &[f32], v: &[f32], n: usize, m: usize, d: usize, heads: usize) -> Vec<f64> {
    let dh = d / heads;
    let mut out = vec![0.0f64; n * d];
    for h in 0..heads {
        for i in 0..n {
            let mut scores = vec![0.0f64; m];
            for j in 0..m {
                let mut dot = 0.0;
                for e in 0..dh {
                    dot += q[i * d + h * dh + e] as f64 * k[j * d + h * dh + e] as f64;
                }
                scores[j] = dot / (dh as f64).sqrt();
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            for j in 0..m {
                let p = (scores[j] - max).exp() / z;
                for e in 0..dh {
                    out[i * d + h * dh + e] += p * v[j * d + h * dh + e] as f64;
                }
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

pub fn rel_err(a: &LatentTensor, b: &LatentTensor) -> f64 {
    let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| ((x - y) as f64).powi(2)).sum();
    num.sqrt() / b.sum_sq().sqrt().max(1e-30)
}
