//! Multi-head scaled dot-product attention on row-major token matrices.

use super::macs::{matmul, MacSink, MacTally};
use crate::error::{Error, Result};

/// A `rows × cols` matrix of token vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokens {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Tokens {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "token matrix {rows}×{cols} given {} values",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub(crate) fn softmax_rows(scores: &mut [f32], cols: usize) {
    for row in scores.chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = 1.0 / sum;
        row.iter_mut().for_each(|v| *v *= inv);
    }
}

/// Scratch buffers reused across calls.
#[derive(Default)]
pub(crate) struct AttnScratch {
    qh: Vec<f32>,
    kt: Vec<f32>,
    vh: Vec<f32>,
    scores: Vec<f32>,
    oh: Vec<f32>,
}

/// `softmax(Q_h·K_hᵀ/√d_h)·V_h` per head, heads concatenated into `out`.
/// `q` is `n×d`, `k` and `v` are `m×d`. When `probs` is given, the softmax
/// matrices are appended head by head.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attend<S: MacSink>(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    n: usize,
    m: usize,
    d: usize,
    heads: usize,
    out: &mut [f32],
    scratch: &mut AttnScratch,
    sink: &mut S,
    mut probs: Option<&mut Vec<f32>>,
) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let s = scratch;
    s.qh.resize(n * dh, 0.0);
    s.kt.resize(dh * m, 0.0);
    s.vh.resize(m * dh, 0.0);
    s.scores.resize(n * m, 0.0);
    s.oh.resize(n * dh, 0.0);
    for head in 0..heads {
        let off = head * dh;
        for i in 0..n {
            for j in 0..dh {
                s.qh[i * dh + j] = q[i * d + off + j] * scale;
            }
        }
        for i in 0..m {
            for j in 0..dh {
                s.kt[j * m + i] = k[i * d + off + j];
                s.vh[i * dh + j] = v[i * d + off + j];
            }
        }
        matmul(&s.qh, &s.kt, &mut s.scores, n, dh, m, sink);
        softmax_rows(&mut s.scores, m);
        if let Some(p) = probs.as_deref_mut() {
            p.extend_from_slice(&s.scores);
        }
        matmul(&s.scores, &s.vh, &mut s.oh, n, m, dh, sink);
        for i in 0..n {
            out[i * d + off..i * d + off + dh].copy_from_slice(&s.oh[i * dh..(i + 1) * dh]);
        }
    }
}

fn check(q: &Tokens, k: &Tokens, v: &Tokens, heads: usize) -> Result<()> {
    if q.cols != k.cols || k.cols != v.cols || k.rows != v.rows {
        return Err(Error::InvalidArgument(format!(
            "attention dims: Q {}×{}, K {}×{}, V {}×{}",
            q.rows, q.cols, k.rows, k.cols, v.rows, v.cols
        )));
    }
    if heads == 0 || q.cols % heads != 0 {
        return Err(Error::InvalidArgument(format!(
            "width {} not divisible into {heads} heads",
            q.cols
        )));
    }
    if k.rows == 0 {
        return Err(Error::InvalidArgument("attention over zero keys".into()));
    }
    Ok(())
}

/// Multi-head attention over already projected Q, K, V.
pub fn attention(q: &Tokens, k: &Tokens, v: &Tokens, heads: usize) -> Result<Tokens> {
    check(q, k, v, heads)?;
    let mut out = vec![0.0; q.rows * q.cols];
    attend(
        &q.data,
        &k.data,
        &v.data,
        q.rows,
        k.rows,
        q.cols,
        heads,
        &mut out,
        &mut AttnScratch::default(),
        &mut MacTally::default(),
        None,
    );
    Tokens::new(q.rows, q.cols, out)
}

/// Like [`attention`], also returning each head's `n×m` probability matrix.
pub fn attention_with_probs(q: &Tokens, k: &Tokens, v: &Tokens, heads: usize) -> Result<(Tokens, Vec<Vec<f32>>)> {
    check(q, k, v, heads)?;
    let mut out = vec![0.0; q.rows * q.cols];
    let mut probs = Vec::new();
    attend(
        &q.data,
        &k.data,
        &v.data,
        q.rows,
        k.rows,
        q.cols,
        heads,
        &mut out,
        &mut AttnScratch::default(),
        &mut MacTally::default(),
        Some(&mut probs),
    );
    let per_head = q.rows * k.rows;
    let probs = probs.chunks_exact(per_head).map(<[f32]>::to_vec).collect();
    Ok((Tokens::new(q.rows, q.cols, out)?, probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_returns_its_value() {
        let q = Tokens::new(1, 4, vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        let k = Tokens::new(1, 4, vec![1.0, 1.0, -1.0, 0.2]).unwrap();
        let v = Tokens::new(1, 4, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let out = attention(&q, &k, &v, 2).unwrap();
        assert_eq!(out.data, v.data);
    }

    #[test]
    fn zero_queries_average_values() {
        let q = Tokens::new(2, 2, vec![0.0; 4]).unwrap();
        let k = Tokens::new(3, 2, vec![1.0, 2.0, -3.0, 0.5, 4.0, 4.0]).unwrap();
        let v = Tokens::new(3, 2, vec![1.0, 10.0, 2.0, 20.0, 6.0, 0.0]).unwrap();
        let out = attention(&q, &k, &v, 1).unwrap();
        for r in 0..2 {
            assert!((out.row(r)[0] - 3.0).abs() < 1e-6);
            assert!((out.row(r)[1] - 10.0).abs() < 1e-5);
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let mk = |seed: u64, rows| {
            let t = crate::numerics::LatentTensor::randn([1, 1, rows, 8], seed, 0);
            Tokens::new(rows, 8, t.into_vec()).unwrap()
        };
        let (_, probs) = attention_with_probs(&mk(1, 5), &mk(2, 7), &mk(3, 7), 4).unwrap();
        assert_eq!(probs.len(), 4);
        for head in probs {
            for row in head.chunks_exact(7) {
                assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let a = Tokens::new(2, 4, vec![0.0; 8]).unwrap();
        let b = Tokens::new(2, 3, vec![0.0; 6]).unwrap();
        assert!(attention(&a, &b, &b, 1).is_err());
        assert!(attention(&a, &a, &a, 3).is_err());
        assert!(Tokens::new(2, 2, vec![0.0]).is_err());
    }
}
