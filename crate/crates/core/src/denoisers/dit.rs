//! A tiny seeded-random diffusion transformer over video latents.
//!
//! Blocks alternate spatial attention (tokens of one frame) and temporal
//! attention (one spatial site across frames); each block then applies
//! cross-attention against condition tokens and a 4× feed-forward, all
//! pre-normalized with residual adds. The self-attention output of every
//! block is a hook point.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{attend, AttnScratch};
use super::macs::{count_macs, matmul, MacBreakdown, MacProbe, MacSink, MacTally};
use super::{ConditionId, HookSet, LayerHook, NoisePredictor, Prediction, NULL_CONDITION};
use crate::error::{Error, Result};
use crate::numerics::{LatentTensor, Shape};

const LN_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TinyDitConfig {
    /// Number of blocks; even blocks are spatial, odd ones temporal.
    pub layers: usize,
    pub dim: usize,
    pub heads: usize,
    pub patch: usize,
    pub channels: usize,
    pub condition_vocab: usize,
    pub condition_tokens: usize,
    pub seed: u64,
}

impl Default for TinyDitConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            dim: 32,
            heads: 4,
            patch: 4,
            channels: 4,
            condition_vocab: 16,
            condition_tokens: 4,
            seed: 0,
        }
    }
}

impl TinyDitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.layers == 0 || self.layers % 2 != 0 {
            return bad(format!("layer count {} must be even and positive", self.layers));
        }
        if self.heads == 0 || self.dim % self.heads != 0 {
            return bad(format!("dim {} not divisible by {} heads", self.dim, self.heads));
        }
        if self.dim < 2 || self.dim % 2 != 0 {
            return bad(format!("dim {} must be even", self.dim));
        }
        if self.patch == 0 || self.channels == 0 || self.condition_tokens == 0 || self.condition_vocab < 2 {
            return bad("patch, channels, condition tokens must be positive; vocab ≥ 2".into());
        }
        Ok(())
    }

    pub fn check_latent(&self, shape: Shape) -> Result<()> {
        let [f, c, h, w] = shape;
        if f == 0 || c != self.channels || h == 0 || w == 0 || h % self.patch != 0 || w % self.patch != 0 {
            return Err(Error::InvalidArgument(format!(
                "latent {shape:?} incompatible with {} channels and patch {}",
                self.channels, self.patch
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Linear {
    inputs: usize,
    outputs: usize,
    weight: Vec<f32>,
}

impl Linear {
    fn seeded(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> Self {
        let bound = 1.0 / (inputs as f32).sqrt();
        let weight = (0..inputs * outputs).map(|_| rng.gen_range(-bound..bound)).collect();
        Self { inputs, outputs, weight }
    }

    fn apply<S: MacSink>(&self, x: &[f32], rows: usize, sink: &mut S) -> Vec<f32> {
        let mut out = vec![0.0; rows * self.outputs];
        matmul(x, &self.weight, &mut out, rows, self.inputs, self.outputs, sink);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    cross_q: Linear,
    cross_k: Linear,
    cross_v: Linear,
    cross_o: Linear,
    ff_in: Linear,
    ff_out: Linear,
}

impl Block {
    fn seeded(rng: &mut ChaCha8Rng, d: usize) -> Self {
        let mut sq = || Linear::seeded(rng, d, d);
        let (q, k, v, o) = (sq(), sq(), sq(), sq());
        let (cross_q, cross_k, cross_v, cross_o) = (sq(), sq(), sq(), sq());
        Self {
            q,
            k,
            v,
            o,
            cross_q,
            cross_k,
            cross_v,
            cross_o,
            ff_in: Linear::seeded(rng, d, 4 * d),
            ff_out: Linear::seeded(rng, 4 * d, d),
        }
    }

    fn linears(&self) -> [(&'static str, &Linear); 10] {
        [
            ("q", &self.q),
            ("k", &self.k),
            ("v", &self.v),
            ("o", &self.o),
            ("cross_q", &self.cross_q),
            ("cross_k", &self.cross_k),
            ("cross_v", &self.cross_v),
            ("cross_o", &self.cross_o),
            ("ff_in", &self.ff_in),
            ("ff_out", &self.ff_out),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyDit {
    config: TinyDitConfig,
    embed: Linear,
    blocks: Vec<Block>,
    unembed: Linear,
}

fn layer_norm(x: &[f32], d: usize) -> Vec<f32> {
    let mut out = vec![0.0; x.len()];
    for (src, dst) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        let mean = src.iter().sum::<f32>() / d as f32;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for (o, &v) in dst.iter_mut().zip(src) {
            *o = (v - mean) * inv;
        }
    }
    out
}

fn gelu(v: f32) -> f32 {
    const C: f32 = 0.797_884_6; // √(2/π)
    0.5 * v * (1.0 + (C * (v + 0.044_715 * v * v * v)).tanh())
}

fn sinusoid(position: f32, d: usize) -> Vec<f32> {
    let half = d / 2;
    let mut out = vec![0.0; d];
    for k in 0..half {
        let freq = (-(10_000f32).ln() * k as f32 / half as f32).exp();
        out[k] = (position * freq).sin();
        out[half + k] = (position * freq).cos();
    }
    out
}

fn add_assign(x: &mut [f32], y: &[f32]) {
    x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
}

impl TinyDit {
    pub fn new(config: TinyDitConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.dim;
        let patch_dim = config.channels * config.patch * config.patch;
        let embed = Linear::seeded(&mut rng, patch_dim, d);
        let blocks = (0..config.layers).map(|_| Block::seeded(&mut rng, d)).collect();
        let unembed = Linear::seeded(&mut rng, d, patch_dim);
        Ok(Self {
            config,
            embed,
            blocks,
            unembed,
        })
    }

    pub fn config(&self) -> &TinyDitConfig {
        &self.config
    }

    /// Condition tokens; the null condition maps to all zeros.
    pub fn condition_tokens(&self, condition: ConditionId) -> Result<Vec<f32>> {
        let (m, d) = (self.config.condition_tokens, self.config.dim);
        if condition as usize >= self.config.condition_vocab {
            return Err(Error::InvalidArgument(format!(
                "condition {condition} outside vocabulary of {}",
                self.config.condition_vocab
            )));
        }
        if condition == NULL_CONDITION {
            return Ok(vec![0.0; m * d]);
        }
        Ok((0..m)
            .flat_map(|j| sinusoid((condition as usize * m + j + 1) as f32, d))
            .collect())
    }

    fn patchify(&self, x: &LatentTensor) -> Vec<f32> {
        let [f, c, h, w] = x.shape();
        let p = self.config.patch;
        let (gh, gw) = (h / p, w / p);
        let mut out = Vec::with_capacity(x.len());
        for fi in 0..f {
            for py in 0..gh {
                for px in 0..gw {
                    for ci in 0..c {
                        for dy in 0..p {
                            for dx in 0..p {
                                out.push(x.get(fi, ci, py * p + dy, px * p + dx));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn unpatchify(&self, tokens: &[f32], shape: Shape) -> Result<LatentTensor> {
        let [f, c, h, w] = shape;
        let p = self.config.patch;
        let (gh, gw) = (h / p, w / p);
        let mut out = LatentTensor::zeros(shape);
        let mut it = tokens.iter();
        for fi in 0..f {
            for py in 0..gh {
                for px in 0..gw {
                    for ci in 0..c {
                        for dy in 0..p {
                            for dx in 0..p {
                                let idx = out.index(fi, ci, py * p + dy, px * p + dx);
                                out.data_mut()[idx] = *it.next().expect("token count matches shape");
                            }
                        }
                    }
                }
            }
        }
        out.ensure_finite("tiny_dit")
    }

    /// Self-attention of block `layer` over the normalized hidden state.
    #[allow(clippy::too_many_arguments)]
    fn self_attention<S: MacSink>(
        &self,
        block: &Block,
        layer: usize,
        h: &[f32],
        frames: usize,
        sites: usize,
        scratch: &mut AttnScratch,
        sink: &mut S,
    ) -> Vec<f32> {
        let d = self.config.dim;
        let heads = self.config.heads;
        let n = frames * sites;
        let q = block.q.apply(h, n, sink);
        let k = block.k.apply(h, n, sink);
        let v = block.v.apply(h, n, sink);
        let mut mixed = vec![0.0; n * d];
        if layer % 2 == 0 {
            for f in 0..frames {
                let r = f * sites * d..(f + 1) * sites * d;
                attend(&q[r.clone()], &k[r.clone()], &v[r.clone()], sites, sites, d, heads, &mut mixed[r], scratch, sink, None);
            }
        } else {
            let gather = |src: &[f32], j: usize| -> Vec<f32> {
                (0..frames)
                    .flat_map(|f| src[(f * sites + j) * d..(f * sites + j + 1) * d].iter().copied())
                    .collect()
            };
            let mut out = vec![0.0; frames * d];
            for j in 0..sites {
                let (gq, gk, gv) = (gather(&q, j), gather(&k, j), gather(&v, j));
                attend(&gq, &gk, &gv, frames, frames, d, heads, &mut out, scratch, sink, None);
                for f in 0..frames {
                    mixed[(f * sites + j) * d..(f * sites + j + 1) * d].copy_from_slice(&out[f * d..(f + 1) * d]);
                }
            }
        }
        block.o.apply(&mixed, n, sink)
    }

    fn forward<S: MacSink>(
        &self,
        x_t: &LatentTensor,
        t: usize,
        condition: ConditionId,
        hooks: &HookSet,
        sink: &mut S,
    ) -> Result<(LatentTensor, Vec<Option<LatentTensor>>, usize)> {
        let cfg = &self.config;
        cfg.check_latent(x_t.shape())?;
        hooks.check(cfg.layers)?;
        let [frames, _, h, w] = x_t.shape();
        let d = cfg.dim;
        let sites = (h / cfg.patch) * (w / cfg.patch);
        let n = frames * sites;
        let feature_shape = [frames, 1, sites, d];
        let cond = self.condition_tokens(condition)?;
        let m = cfg.condition_tokens;

        let mut x = self.embed.apply(&self.patchify(x_t), n, sink);
        let mut shift = sinusoid(t as f32, d);
        for j in 0..m {
            for (s, &c) in shift.iter_mut().zip(&cond[j * d..(j + 1) * d]) {
                *s += c / m as f32;
            }
        }
        for row in x.chunks_exact_mut(d) {
            add_assign(row, &shift);
        }

        let mut scratch = AttnScratch::default();
        let mut recorded = vec![None; cfg.layers];
        let mut evals = 0;
        for (layer, block) in self.blocks.iter().enumerate() {
            let attn = match hooks.get(layer) {
                LayerHook::Replace(feature) => {
                    if feature.shape() != feature_shape {
                        return Err(Error::ShapeMismatch {
                            expected: feature_shape,
                            actual: feature.shape(),
                        });
                    }
                    feature.data().to_vec()
                }
                hook => {
                    let normed = layer_norm(&x, d);
                    let out = self.self_attention(block, layer, &normed, frames, sites, &mut scratch, sink);
                    evals += 1;
                    if matches!(hook, LayerHook::Record) {
                        recorded[layer] = Some(LatentTensor::from_vec(feature_shape, out.clone())?);
                    }
                    out
                }
            };
            add_assign(&mut x, &attn);

            let normed = layer_norm(&x, d);
            let q = block.cross_q.apply(&normed, n, sink);
            let k = block.cross_k.apply(&cond, m, sink);
            let v = block.cross_v.apply(&cond, m, sink);
            let mut mixed = vec![0.0; n * d];
            attend(&q, &k, &v, n, m, d, cfg.heads, &mut mixed, &mut scratch, sink, None);
            add_assign(&mut x, &block.cross_o.apply(&mixed, n, sink));

            let normed = layer_norm(&x, d);
            let mut hidden = block.ff_in.apply(&normed, n, sink);
            hidden.iter_mut().for_each(|v| *v = gelu(*v));
            add_assign(&mut x, &block.ff_out.apply(&hidden, n, sink));
        }
        let normed = layer_norm(&x, d);
        let out = self.unembed.apply(&normed, n, sink);
        Ok((self.unpatchify(&out, x_t.shape())?, recorded, evals))
    }

    /// Forward pass counting every multiply-accumulate individually.
    pub fn predict_probed(&self, x_t: &LatentTensor, t: usize, condition: ConditionId, hooks: &HookSet) -> Result<(LatentTensor, u64)> {
        let mut probe = MacProbe::default();
        let (eps, _, _) = self.forward(x_t, t, condition, hooks, &mut probe)?;
        Ok((eps, probe.0))
    }

    fn tensors(&self) -> Vec<(String, &Linear)> {
        let mut out = vec![("embed".to_string(), &self.embed)];
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(b.linears().into_iter().map(|(n, l)| (format!("blocks.{i}.{n}"), l)));
        }
        out.push(("unembed".to_string(), &self.unembed));
        out
    }

    /// Writes weights as flat little-endian `f32` plus a JSON sidecar
    /// describing the tensor layout.
    pub fn save(&self, weights: &Path, sidecar: &Path) -> Result<()> {
        let io = |p: &Path, e: std::io::Error| Error::Weights(format!("{}: {e}", p.display()));
        let tensors = self.tensors();
        let mut bytes = Vec::new();
        let mut entries = Vec::new();
        for (name, lin) in &tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                rows: lin.inputs,
                cols: lin.outputs,
            });
            for v in &lin.weight {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let meta = WeightsMeta {
            schema_version: crate::SCHEMA_VERSION,
            dtype: "f32le".into(),
            config: self.config.clone(),
            tensors: entries,
        };
        fs::write(weights, bytes).map_err(|e| io(weights, e))?;
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Weights(e.to_string()))?;
        fs::write(sidecar, json).map_err(|e| io(sidecar, e))
    }

    pub fn load(weights: &Path, sidecar: &Path) -> Result<Self> {
        let io = |p: &Path, e: std::io::Error| Error::Weights(format!("{}: {e}", p.display()));
        let meta: WeightsMeta = serde_json::from_str(&fs::read_to_string(sidecar).map_err(|e| io(sidecar, e))?)
            .map_err(|e| Error::Weights(format!("{}: {e}", sidecar.display())))?;
        if meta.dtype != "f32le" {
            return Err(Error::Weights(format!("unsupported dtype {}", meta.dtype)));
        }
        let bytes = fs::read(weights).map_err(|e| io(weights, e))?;
        let mut model = Self::new(meta.config)?;
        let expected: Vec<(String, usize, usize)> = model
            .tensors()
            .into_iter()
            .map(|(n, l)| (n, l.inputs, l.outputs))
            .collect();
        let found: Vec<(String, usize, usize)> = meta.tensors.iter().map(|e| (e.name.clone(), e.rows, e.cols)).collect();
        if expected != found {
            return Err(Error::Weights("sidecar layout does not match config".into()));
        }
        let total: usize = expected.iter().map(|(_, r, c)| r * c).sum();
        if bytes.len() != total * 4 {
            return Err(Error::Weights(format!("expected {} bytes, found {}", total * 4, bytes.len())));
        }
        let mut values = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        let mut fill = |lin: &mut Linear| {
            lin.weight.iter_mut().for_each(|w| *w = values.next().expect("length checked"));
        };
        fill(&mut model.embed);
        for b in &mut model.blocks {
            for lin in [
                &mut b.q,
                &mut b.k,
                &mut b.v,
                &mut b.o,
                &mut b.cross_q,
                &mut b.cross_k,
                &mut b.cross_v,
                &mut b.cross_o,
                &mut b.ff_in,
                &mut b.ff_out,
            ] {
                fill(lin);
            }
        }
        fill(&mut model.unembed);
        if model.tensors().iter().any(|(_, l)| l.weight.iter().any(|v| !v.is_finite())) {
            return Err(Error::Weights("non-finite weight".into()));
        }
        Ok(model)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsMeta {
    schema_version: u32,
    dtype: String,
    config: TinyDitConfig,
    tensors: Vec<TensorEntry>,
}

impl NoisePredictor for TinyDit {
    fn layer_count(&self) -> usize {
        self.config.layers
    }

    fn feature_shape(&self, shape: Shape) -> Shape {
        let [f, _, h, w] = shape;
        let p = self.config.patch;
        [f, 1, (h / p) * (w / p), self.config.dim]
    }

    fn mac_breakdown(&self, shape: Shape) -> Option<MacBreakdown> {
        Some(count_macs(&self.config, shape))
    }

    fn predict(&self, x_t: &LatentTensor, t: usize, condition: ConditionId, hooks: &HookSet) -> Result<Prediction> {
        let mut tally = MacTally::default();
        let (eps, recorded, attention_evals) = self.forward(x_t, t, condition, hooks, &mut tally)?;
        Ok(Prediction {
            eps,
            recorded,
            macs: tally.0,
            attention_evals,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (TinyDit, LatentTensor) {
        let cfg = TinyDitConfig {
            layers: 2,
            dim: 8,
            heads: 2,
            patch: 2,
            channels: 2,
            condition_vocab: 4,
            condition_tokens: 2,
            seed: 5,
        };
        (TinyDit::new(cfg).unwrap(), LatentTensor::randn([3, 2, 4, 6], 1, 0))
    }

    #[test]
    fn patchify_round_trips() {
        let (model, x) = small();
        let tokens = model.patchify(&x);
        assert_eq!(model.unpatchify(&tokens, x.shape()).unwrap(), x);
    }

    #[test]
    fn record_hooks_are_transparent() {
        let (model, x) = small();
        let a = model.predict(&x, 400, 1, &HookSet::pass(2)).unwrap();
        let b = model.predict(&x, 400, 1, &HookSet::record(2)).unwrap();
        assert_eq!(a.eps, b.eps);
        assert_eq!(a.macs, b.macs);
        assert!(b.recorded.iter().all(Option::is_some));
        assert_eq!(b.recorded[0].as_ref().unwrap().shape(), model.feature_shape(x.shape()));
    }

    #[test]
    fn replay_reproduces_output() {
        let (model, x) = small();
        let rec = model.predict(&x, 400, 2, &HookSet::record(2)).unwrap();
        let hooks = HookSet::new(rec.recorded.iter().map(|r| LayerHook::Replace(r.clone().unwrap())).collect());
        let replay = model.predict(&x, 400, 2, &hooks).unwrap();
        assert_eq!(replay.eps, rec.eps);
        assert_eq!(replay.attention_evals, 0);
        let breakdown = model.mac_breakdown(x.shape()).unwrap();
        assert_eq!(replay.macs, breakdown.full_minus_attention());
        assert_eq!(rec.macs, breakdown.total());
    }

    #[test]
    fn hook_count_and_shape_checked() {
        let (model, x) = small();
        assert!(matches!(
            model.predict(&x, 10, 1, &HookSet::pass(3)),
            Err(Error::HookCount { hooks: 3, layers: 2 })
        ));
        let bad = HookSet::new(vec![LayerHook::Replace(LatentTensor::zeros([1, 1, 1, 1])), LayerHook::Pass]);
        assert!(model.predict(&x, 10, 1, &bad).is_err());
        assert!(model.predict(&LatentTensor::zeros([1, 2, 3, 4]), 10, 1, &HookSet::pass(2)).is_err());
        assert!(model.predict(&x, 10, 9, &HookSet::pass(2)).is_err());
    }

    #[test]
    fn conditions_change_output() {
        let (model, x) = small();
        let a = model.predict(&x, 100, 0, &HookSet::pass(2)).unwrap();
        let b = model.predict(&x, 100, 1, &HookSet::pass(2)).unwrap();
        assert_ne!(a.eps, b.eps);
        assert!(model.condition_tokens(0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn config_validation() {
        let mut cfg = TinyDitConfig::default();
        cfg.layers = 3;
        assert!(TinyDit::new(cfg.clone()).is_err());
        cfg.layers = 4;
        cfg.heads = 5;
        assert!(TinyDit::new(cfg).is_err());
    }
}
