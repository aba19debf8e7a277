//! Per-layer feature cache and first-order feature extrapolation.

use super::plan::StepDirective;
use crate::denoisers::{HookSet, LayerHook};
use crate::error::{Error, Result};
use crate::numerics::LatentTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct CacheSlot {
    pub step: usize,
    pub feature: LatentTensor,
}

/// The two most recent fully computed outputs of one attention layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerCache {
    pub last: Option<CacheSlot>,
    pub prev: Option<CacheSlot>,
}

impl LayerCache {
    pub fn push(&mut self, step: usize, feature: LatentTensor) {
        self.prev = self.last.take();
        self.last = Some(CacheSlot { step, feature });
    }

    pub fn is_warm(&self) -> bool {
        self.last.is_some() && self.prev.is_some()
    }
}

/// `last + (last − prev)·w`; `w = 0` is plain reuse.
pub fn dynamic_reuse(last: &LatentTensor, prev: &LatentTensor, w: f64) -> Result<LatentTensor> {
    let w = w as f32;
    last.zip_map(prev, |l, p| l + (l - p) * w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    layers: Vec<LayerCache>,
}

impl FeatureCache {
    pub fn new(layers: usize) -> Self {
        Self {
            layers: vec![LayerCache::default(); layers],
        }
    }

    pub fn layer(&self, i: usize) -> &LayerCache {
        &self.layers[i]
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Stores whatever the predictor recorded at `step`.
    pub fn absorb(&mut self, step: usize, recorded: &[Option<LatentTensor>]) {
        for (slot, rec) in self.layers.iter_mut().zip(recorded) {
            if let Some(f) = rec {
                slot.push(step, f.clone());
            }
        }
    }

    pub fn extrapolate(&self, layer: usize, step: usize, w: f64) -> Result<LatentTensor> {
        let entry = &self.layers[layer];
        match (&entry.last, &entry.prev) {
            (Some(last), Some(prev)) if last.step > prev.step && last.step < step => {
                dynamic_reuse(&last.feature, &prev.feature, w)
            }
            _ => Err(Error::CacheUnderflow { layer, step }),
        }
    }
}

/// Hooks for one predictor call: record everything on full-attention steps,
/// replace every attention output with its extrapolation on reuse steps.
pub fn apply_strategy(directive: &StepDirective, cache: &FeatureCache, w: f64) -> Result<HookSet> {
    let hooks = if directive.attn_reuse {
        (0..cache.layer_count())
            .map(|l| cache.extrapolate(l, directive.step, w).map(LayerHook::Replace))
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![LayerHook::Record; cache.layer_count()]
    };
    Ok(HookSet::new(hooks))
}
