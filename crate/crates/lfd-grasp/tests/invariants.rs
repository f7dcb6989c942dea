//! Property-based invariants across the pipeline: standardization
//! round-trips, loss translation invariance, post-processing idempotence,
//! tactile-rule equivariances, and augmentation bookkeeping.

use lfd_grasp::eval::Table1Config;
use lfd_grasp::model::{ActionVector, Standardization, ACTION_DIM};
use lfd_grasp::perception::significant_pressure;
use lfd_grasp::policy::{postprocess_action, scalar_loss, GripperLimits};
use lfd_grasp::synth::{augment, generate_demos, TeacherConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardize_round_trip(
        rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 3..40)
    ) {
        let rec = Standardization::fit(&rows).unwrap();
        for row in &rows {
            let back = rec.invert(&rec.apply(row));
            for (a, b) in row.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn scalar_loss_is_translation_invariant(
        a in -1e3f64..1e3,
        b in -1e3f64..1e3,
        t in -1e3f64..1e3,
        eps in 0.0f64..10.0,
    ) {
        let base = scalar_loss(a, b, eps);
        let moved = scalar_loss(a + t, b + t, eps);
        prop_assert!((base - moved).abs() < 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn postprocess_is_idempotent(raw in prop::collection::vec(-10.0f64..10.0, ACTION_DIM)) {
        let action = ActionVector::from_array(&raw, false).unwrap();
        let limits = GripperLimits::default();
        match postprocess_action(&action, &limits) {
            Ok(once) => {
                let twice = postprocess_action(&once, &limits).unwrap();
                for (x, y) in once.to_array().iter().zip(twice.to_array()) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
                prop_assert!(once.executable);
            }
            // degenerate orientations are rejected, never silently patched
            Err(e) => prop_assert!(e.to_string().contains("degenerate")),
        }
    }

    #[test]
    fn significant_pressure_equivariances(
        values in prop::collection::vec(0.0f64..100.0, 9),
        scale in 0.1f64..10.0,
        rotation in 0usize..9,
    ) {
        let t: [f64; 9] = values.clone().try_into().unwrap();
        let base = significant_pressure(&t);

        let scaled: [f64; 9] = t.map(|v| v * scale);
        prop_assert!((significant_pressure(&scaled) - scale * base).abs() < 1e-9 * (1.0 + base));

        let mut permuted = [0.0; 9];
        for (i, &v) in t.iter().enumerate() {
            permuted[(i + rotation) % 9] = v;
        }
        prop_assert!((significant_pressure(&permuted) - base).abs() < 1e-12);
    }
}

/// Augmentation keeps the originals, inherits labels, and assigns fresh
/// unique ids to the copies.
#[test]
fn augment_bookkeeping() {
    let cfg = Table1Config::default();
    let teacher = TeacherConfig::default().with_default_corruption();
    let set = generate_demos(60, &cfg.sampler, &cfg.render, &teacher, 9).unwrap();
    let out = augment(&set, 2, 42).unwrap();
    assert_eq!(out.len(), 3 * set.len());

    let mut ids: Vec<u64> = out.demos.iter().map(|d| d.id).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), out.len(), "duplicate ids after augmentation");

    for original in &set.demos {
        let copy = out.demos.iter().find(|d| d.id == original.id).unwrap();
        assert_eq!(copy, original, "original demo {} was altered", original.id);
    }

    // labels of augmented copies match their source distribution in total
    let count = |s: &lfd_grasp::model::DemonstrationSet, label: &Option<lfd_grasp::model::Label>| {
        s.demos.iter().filter(|d| d.label == *label).count()
    };
    let mut seen: Vec<Option<lfd_grasp::model::Label>> = Vec::new();
    for d in &out.demos {
        if !seen.contains(&d.label) {
            seen.push(d.label);
        }
    }
    for label in &seen {
        assert_eq!(count(&out, label), 3 * count(&set, label), "label {label:?} imbalance");
    }
}
