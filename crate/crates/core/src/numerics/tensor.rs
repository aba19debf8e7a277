//! Dense 4-D `f32` tensors laid out as frames × channels × height × width.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frames, channels, height, width.
pub type Shape = [usize; 4];

/// Row-major 4-D array used for latents, noise predictions and cached features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTensor {
    shape: Shape,
    data: Vec<f32>,
}

impl LatentTensor {
    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::BadLength {
                shape,
                len: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("from_vec"));
        }
        Ok(Self { shape, data })
    }

    /// Standard-normal entries from a seeded ChaCha stream.
    pub fn randn(shape: Shape, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let data = (0..shape.iter().product::<usize>())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn frames(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Flat offset of `(f, c, y, x)`.
    #[inline]
    pub fn index(&self, f: usize, c: usize, y: usize, x: usize) -> usize {
        ((f * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    pub fn get(&self, f: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(f, c, y, x)]
    }

    /// Contiguous H×W plane for frame `f`, channel `c`.
    pub fn plane(&self, f: usize, c: usize) -> &[f32] {
        let hw = self.shape[2] * self.shape[3];
        let start = (f * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                actual: other.shape,
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(op))
        }
    }

    /// Elementwise `f(a, b)` over two equally shaped tensors.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self {
            shape: self.shape,
            data,
        }
        .ensure_finite("zip_map")
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
        .ensure_finite("map")
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f32) -> Result<Self> {
        self.map(|v| v * k)
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: f32, other: &Self, b: f32) -> Result<Self> {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum()
    }
}
