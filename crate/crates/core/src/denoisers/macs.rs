//! Multiply-accumulate accounting.
//!
//! Every matrix product in the tiny DiT goes through [`matmul`], which
//! reports to a [`MacSink`]. [`MacTally`] books `m·k·n` once per call;
//! [`MacProbe`] ticks once inside the innermost loop and is only meant for
//! checking the analytic formula.

use serde::{Deserialize, Serialize};

use super::dit::TinyDitConfig;

pub trait MacSink {
    /// When set, the kernel ticks per multiply-accumulate instead of per call.
    const PER_MAC: bool;
    fn add(&mut self, n: u64);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct MacTally(pub u64);

impl MacSink for MacTally {
    const PER_MAC: bool = false;
    #[inline]
    fn add(&mut self, n: u64) {
        self.0 += n;
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct MacProbe(pub u64);

impl MacSink for MacProbe {
    const PER_MAC: bool = true;
    #[inline]
    fn add(&mut self, n: u64) {
        self.0 += n;
    }
}

/// `out (m×n) = a (m×k) · b (k×n)`, all row-major.
pub fn matmul<S: MacSink>(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize, sink: &mut S) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
                if S::PER_MAC {
                    sink.add(1);
                }
            }
        }
    }
    if !S::PER_MAC {
        sink.add((m * k * n) as u64);
    }
}

/// Self-attention over one sequence of `n` tokens of width `d`:
/// scores and weighted sum `2·n²·d`, Q/K/V/O projections `4·n·d²`.
pub fn attention_macs(n: u64, d: u64) -> u64 {
    attention_score_macs(n, d) + 4 * n * d * d
}

pub fn attention_score_macs(n: u64, d: u64) -> u64 {
    2 * n * n * d
}

/// Cross-attention of `n` query tokens against `m` condition tokens.
pub fn cross_attention_macs(n: u64, m: u64, d: u64) -> u64 {
    2 * n * m * d + 2 * n * d * d + 2 * m * d * d
}

/// Two-layer feed-forward with a 4× hidden width.
pub fn ffn_macs(n: u64, d: u64) -> u64 {
    8 * n * d * d
}

/// Analytic MAC cost of one tiny DiT forward pass, split by component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacBreakdown {
    pub patch_embed: u64,
    pub patch_unembed: u64,
    /// Spatial or temporal self-attention cost of each block.
    pub self_attention: Vec<u64>,
    pub cross_attention: u64,
    pub ffn: u64,
}

impl MacBreakdown {
    pub fn total(&self) -> u64 {
        self.full_minus_attention() + self.self_attention.iter().sum::<u64>()
    }

    /// Cost of a pass whose self-attention outputs are all supplied by hooks.
    pub fn full_minus_attention(&self) -> u64 {
        let blocks = self.self_attention.len() as u64;
        self.patch_embed + self.patch_unembed + blocks * (self.cross_attention + self.ffn)
    }

    /// Cost of a pass where the layers flagged in `reused` skip self-attention.
    pub fn with_reuse(&self, reused: &[bool]) -> u64 {
        self.full_minus_attention()
            + self
                .self_attention
                .iter()
                .zip(reused.iter().chain(std::iter::repeat(&false)))
                .filter(|(_, &r)| !r)
                .map(|(c, _)| c)
                .sum::<u64>()
    }
}

/// MACs per forward pass for a latent of shape `(F, C, H, W)`.
pub fn count_macs(config: &TinyDitConfig, shape: [usize; 4]) -> MacBreakdown {
    let [f, c, h, w] = shape.map(|v| v as u64);
    let p = config.patch as u64;
    let d = config.dim as u64;
    let m = config.condition_tokens as u64;
    let sites = (h / p) * (w / p);
    let tokens = f * sites;
    let patch_dim = c * p * p;
    let self_attention = (0..config.layers)
        .map(|l| {
            if l % 2 == 0 {
                f * attention_macs(sites, d)
            } else {
                sites * attention_macs(f, d)
            }
        })
        .collect();
    MacBreakdown {
        patch_embed: tokens * patch_dim * d,
        patch_unembed: tokens * d * patch_dim,
        self_attention,
        cross_attention: cross_attention_macs(tokens, m, d),
        ffn: ffn_macs(tokens, d),
    }
}
