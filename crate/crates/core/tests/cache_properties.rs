mod support;

use fastercache::cache::{build_plan, dynamic_reuse, w_of, FeatureCache};
use fastercache::cfg_cache::{reconstruct_uncond, record_bias};
use fastercache::numerics::make_masks;
use fastercache::{CacheConfig, LatentTensor, WeightMode};
use proptest::prelude::*;

fn scalar(v: f64) -> LatentTensor {
    LatentTensor::filled([1, 1, 1, 1], v as f32)
}

#[test]
fn weight_schedule_examples() {
    assert_eq!(w_of(10, 10, 30, WeightMode::Linear).unwrap(), 0.0);
    assert_eq!(w_of(29, 10, 30, WeightMode::Linear).unwrap(), 1.0);
    assert!((w_of(20, 10, 30, WeightMode::Linear).unwrap() - 10.0 / 19.0).abs() < 1e-12);
    assert_eq!(w_of(29, 29, 30, WeightMode::Linear).unwrap(), 1.0);
    assert_eq!(w_of(12, 3, 30, WeightMode::Constant(0.5)).unwrap(), 0.5);
    assert_eq!(w_of(12, 3, 30, WeightMode::None).unwrap(), 0.0);
    assert!(w_of(2, 3, 30, WeightMode::Linear).is_err());
}

#[test]
fn late_activation_leaves_only_final_step() {
    let cfg = CacheConfig { cfg_start_fraction: 0.999, ..CacheConfig::default() };
    let plan = build_plan(30, &cfg).unwrap();
    assert_eq!(plan.cfg_activation, 29);
    assert!(plan.reconstructed_steps().next().is_none());
    assert_eq!(plan.steps.iter().filter(|d| d.record_cfg_bias).count(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plans_are_sound(
        steps in 2usize..60,
        dfr_interval in 1usize..6,
        cfg_interval in 1usize..8,
        frac in 0.0f64..0.99,
    ) {
        let cfg = CacheConfig { dfr_interval, cfg_interval, cfg_start_fraction: frac, ..CacheConfig::default() };
        let plan = build_plan(steps, &cfg).unwrap();
        plan.validate().unwrap();
        prop_assert_eq!(plan.len(), steps);
        let first = plan.steps[0];
        prop_assert!(first.cond_full && first.uncond_full && !first.attn_reuse);
        let mut full = 0;
        for d in &plan.steps {
            if d.record_cfg_bias {
                prop_assert!(d.cond_full && d.uncond_full);
            }
            if d.attn_reuse {
                prop_assert!(d.step % dfr_interval != 0);
                prop_assert!(full >= 2);
            } else {
                full += 1;
            }
            if !d.uncond_full {
                prop_assert!(d.step > plan.cfg_activation);
            }
        }
        if dfr_interval == 1 {
            prop_assert!(plan.reuse_steps().next().is_none());
        }
    }

    #[test]
    fn reuse_is_exact_on_affine_trajectories(a in -10.0f64..10.0, b in -10.0f64..10.0, s in 2usize..40) {
        let f = |k: usize| a + b * k as f64;
        let last = scalar(f(2 * s));
        let prev = scalar(f(2 * s - 2));
        let dynamic = dynamic_reuse(&last, &prev, 0.5).unwrap().data()[0] as f64;
        let vanilla = dynamic_reuse(&last, &prev, 0.0).unwrap().data()[0] as f64;
        let truth = f(2 * s + 1);
        let tol = 1e-6 * (1.0 + truth.abs());
        prop_assert!((dynamic - truth).abs() <= tol);
        prop_assert!(((truth - vanilla) - b).abs() <= tol);
    }

    #[test]
    fn dynamic_beats_vanilla_on_quadratics(c in 0.1f64..5.0, s in 1usize..30) {
        // F(k) = c·k², full at 2s and 2s + 2, reuse at 2s + 3.
        let f = |k: usize| c * (k * k) as f64;
        let (lo, hi) = (2 * s, 2 * s + 2);
        let dynamic = f(hi) + (f(hi) - f(lo)) * 0.5;
        let truth = f(hi + 1);
        prop_assert!((truth - dynamic).abs() < (truth - f(hi)).abs());
    }

    #[test]
    fn cache_keeps_two_latest(k in 2usize..20) {
        let mut cache = FeatureCache::new(1);
        for s in 0..k {
            cache.absorb(s, &[Some(scalar(s as f64))]);
        }
        let layer = cache.layer(0);
        prop_assert_eq!(layer.last.as_ref().unwrap().step, k - 1);
        prop_assert_eq!(layer.prev.as_ref().unwrap().step, k - 2);
        prop_assert_eq!(&layer.prev.as_ref().unwrap().feature, &scalar((k - 2) as f64));
    }

    #[test]
    fn bias_is_confined_to_its_band(h in 2usize..=16, w in 2usize..=16, rho in 0.0f64..=1.0, seed in any::<u64>()) {
        let c = LatentTensor::randn([1, 2, h, w], seed, 0);
        let u = LatentTensor::randn([1, 2, h, w], seed, 1);
        let bias = record_bias(&c, &u, rho, 0).unwrap();
        let mask = make_masks(h, w, rho).unwrap();
        prop_assert_eq!(bias.delta_low.energy(Some(&mask.high)), 0.0);
        prop_assert_eq!(bias.delta_high.energy(Some(&mask.low)), 0.0);
        let back = reconstruct_uncond(&c, &bias, 1.0, 1.0, rho).unwrap();
        prop_assert!(support::rel_err(&back, &u) < 1e-5);
    }

    #[test]
    fn reconstruction_is_affine(w1 in -1.0f64..3.0, w2 in -1.0f64..3.0, a in -2.0f32..2.0, seed in any::<u64>()) {
        let shape = [1, 2, 8, 8];
        let c1 = LatentTensor::randn(shape, seed, 0);
        let c2 = LatentTensor::randn(shape, seed, 1);
        let u1 = LatentTensor::randn(shape, seed, 2);
        let u2 = LatentTensor::randn(shape, seed, 3);
        let b1 = record_bias(&c1, &u1, 0.25, 0).unwrap();
        let b2 = record_bias(&c2, &u2, 0.25, 0).unwrap();
        // Mixed inputs and mixed biases.
        let cm = c1.lincomb(a, &c2, 1.0 - a).unwrap();
        let um = u1.lincomb(a, &u2, 1.0 - a).unwrap();
        let bm = record_bias(&c1.lincomb(a, &c2, 1.0 - a).unwrap(), &um, 0.25, 0).unwrap();
        let lhs = reconstruct_uncond(&cm, &bm, w1, w2, 0.25).unwrap();
        let r1 = reconstruct_uncond(&c1, &b1, w1, w2, 0.25).unwrap();
        let r2 = reconstruct_uncond(&c2, &b2, w1, w2, 0.25).unwrap();
        let rhs = r1.lincomb(a, &r2, 1.0 - a).unwrap();
        let scale = 1.0 + rhs.sum_sq().sqrt();
        prop_assert!(lhs.sub(&rhs).unwrap().sum_sq().sqrt() < 1e-4 * scale);
    }
}
