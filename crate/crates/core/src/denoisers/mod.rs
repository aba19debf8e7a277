//! Noise predictors with per-layer hook points.
//!
//! A hook sits on the output of each spatial/temporal attention module,
//! before its residual add. It can pass the output through, record it, or
//! replace it outright, in which case the module is not evaluated at all.

mod analytic;
mod attention;
mod dit;
mod macs;

pub use analytic::{analytic_predict, AnalyticDenoiser, GaussianWorld};
pub use attention::{attention, attention_with_probs, Tokens};
pub use dit::{TinyDit, TinyDitConfig};
pub use macs::{
    attention_macs, attention_score_macs, count_macs, cross_attention_macs, ffn_macs, matmul, MacBreakdown,
    MacProbe, MacSink, MacTally,
};

use crate::error::{Error, Result};
use crate::numerics::{LatentTensor, Shape};

/// Condition index; 0 is the null condition.
pub type ConditionId = u32;

pub const NULL_CONDITION: ConditionId = 0;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerHook {
    Pass,
    Record,
    Replace(LatentTensor),
}

/// One hook per attention layer of a predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct HookSet {
    layers: Vec<LayerHook>,
}

impl HookSet {
    pub fn new(layers: Vec<LayerHook>) -> Self {
        Self { layers }
    }

    pub fn pass(count: usize) -> Self {
        Self::new(vec![LayerHook::Pass; count])
    }

    pub fn record(count: usize) -> Self {
        Self::new(vec![LayerHook::Record; count])
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn get(&self, layer: usize) -> &LayerHook {
        &self.layers[layer]
    }

    pub fn replaced_layers(&self) -> Vec<bool> {
        self.layers
            .iter()
            .map(|h| matches!(h, LayerHook::Replace(_)))
            .collect()
    }

    pub(crate) fn check(&self, layers: usize) -> Result<()> {
        if self.layers.len() != layers {
            return Err(Error::HookCount {
                hooks: self.layers.len(),
                layers,
            });
        }
        Ok(())
    }
}

/// Output of one predictor call.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub eps: LatentTensor,
    /// Attention outputs captured by `Record` hooks, indexed by layer.
    pub recorded: Vec<Option<LatentTensor>>,
    /// Multiply-accumulates actually executed.
    pub macs: u64,
    /// Attention modules actually evaluated.
    pub attention_evals: usize,
}

pub trait NoisePredictor: Send + Sync {
    fn layer_count(&self) -> usize;

    /// Shape of the feature tensor seen by hooks for a latent of `shape`.
    fn feature_shape(&self, shape: Shape) -> Shape;

    /// Analytic per-call MAC breakdown, when the predictor has one.
    fn mac_breakdown(&self, shape: Shape) -> Option<MacBreakdown>;

    fn predict(&self, x_t: &LatentTensor, t: usize, condition: ConditionId, hooks: &HookSet) -> Result<Prediction>;
}
