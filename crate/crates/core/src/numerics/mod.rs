//! Tensor arithmetic, spatial FFT with radial masks, and fidelity metrics.

mod fft;
mod metrics;
mod tensor;

pub use fft::{fft2, ifft2, make_masks, split_frequency, FrequencyMask, SpectrumTensor};
pub use metrics::{mse, psnr, psnr_from_mse, ssim};
pub use tensor::{LatentTensor, Shape};

pub use rustfft::num_complex::Complex64;
