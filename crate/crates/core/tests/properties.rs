use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use gvqa_core::advantage::{self, AdvantageMode};
use gvqa_core::filter::{self, RolloutStats};
use gvqa_core::interval::{self, IntervalSet};
use gvqa_core::planner::{self, BudgetConfig};
use gvqa_core::response::{self, TokenSpanMap};
use gvqa_core::reward::RewardVector;

fn spans() -> impl Strategy<Value = IntervalSet> {
    prop::collection::vec((0u32..2000, 0u32..300), 0..5).prop_map(|raw| {
        IntervalSet::normalize(raw.into_iter().map(|(a, len)| (f64::from(a) / 10.0, f64::from(a + len) / 10.0))).unwrap()
    })
}

fn nonempty_spans() -> impl Strategy<Value = IntervalSet> {
    spans().prop_filter("non-empty", |s| s.measure() > 0.0)
}

proptest! {
    #[test]
    fn set_operations_commute(a in spans(), b in spans()) {
        prop_assert!(a.intersect(&b).approx_eq(&b.intersect(&a)));
        prop_assert!(a.union(&b).approx_eq(&b.union(&a)));
    }

    #[test]
    fn set_operations_are_idempotent(a in spans()) {
        prop_assert!(a.intersect(&a).approx_eq(&a));
        prop_assert!(a.union(&a).approx_eq(&a));
    }

    #[test]
    fn inclusion_exclusion(a in spans(), b in spans()) {
        let lhs = a.measure() + b.measure();
        let rhs = a.union(&b).measure() + a.intersect(&b).measure();
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn overlap_ratios_are_ordered(a in nonempty_spans(), b in nonempty_spans()) {
        let iou = interval::iou(&a, &b).unwrap();
        let iog = interval::iog(&a, &b).unwrap();
        let iop = interval::iop(&a, &b).unwrap();
        for r in [iou, iog, iop] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
        }
        prop_assert!(iou <= iog.min(iop) + 1e-12);
        prop_assert!((interval::iou(&b, &a).unwrap() - iou).abs() < 1e-12);
    }

    #[test]
    fn interval_sets_survive_json(a in spans()) {
        let back: IntervalSet = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn normalization_is_affine_invariant(
        xs in prop::collection::vec(0.0f64..1.0, 2..12),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let base = advantage::group_normalize(&xs, advantage::DEFAULT_EPS).unwrap();
        let moved: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
        let other = advantage::group_normalize(&moved, advantage::DEFAULT_EPS).unwrap();
        let spread = base.iter().any(|a| *a != 0.0);
        if spread {
            for (p, q) in base.iter().zip(&other) {
                prop_assert!((p - q).abs() < 1e-6);
            }
            let n = base.len() as f64;
            let mean = base.iter().sum::<f64>() / n;
            let var = base.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn normalization_commutes_with_permutation(xs in prop::collection::vec(0.0f64..1.0, 2..10), rot in 0usize..10) {
        let k = rot % xs.len();
        let mut rotated = xs.clone();
        rotated.rotate_left(k);
        let mut a = advantage::group_normalize(&xs, advantage::DEFAULT_EPS).unwrap();
        a.rotate_left(k);
        let b = advantage::group_normalize(&rotated, advantage::DEFAULT_EPS).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn token_routing(
        rewards in prop::collection::vec((0u8..2, 0u8..2, 0.0f64..1.0, 0u8..2), 2..8),
        flags in prop::collection::vec(any::<bool>(), 0..20),
    ) {
        let rv: Vec<RewardVector> = rewards
            .iter()
            .map(|&(f, a, i, z)| RewardVector { format: f.into(), acc: a.into(), iou: i, zoom: z.into() })
            .collect();
        let mask = TokenSpanMap::from_flags(flags.clone());
        for mode in [AdvantageMode::TokenAdv, AdvantageMode::Summed] {
            let ga = advantage::normalize_per_reward(&rv, mode, advantage::DEFAULT_EPS).unwrap();
            for i in 0..rv.len() {
                let adv = advantage::token_advantages(&ga, &mask, i).unwrap();
                prop_assert_eq!(adv.len(), flags.len());
                for (t, v) in adv.values.iter().enumerate() {
                    let want = match mode {
                        AdvantageMode::Summed => ga.summed[i],
                        AdvantageMode::TokenAdv if flags[t] => (ga.format[i] + ga.zoom[i] + ga.iou[i]) / 3.0,
                        AdvantageMode::TokenAdv => (ga.format[i] + ga.zoom[i] + ga.acc[i]) / 3.0,
                    };
                    prop_assert!((v - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn delta_is_nonnegative_and_zero_only_for_constant(ious in prop::collection::vec(0.0f64..1.0, 1..10)) {
        let d = filter::delta(&ious).unwrap();
        prop_assert!(d >= 0.0);
        let constant = ious.iter().all(|x| *x == ious[0]);
        prop_assert_eq!(d == 0.0, constant);
    }

    #[test]
    fn filter_is_idempotent(
        rows in prop::collection::vec((prop::collection::vec(0.0f64..1.0, 1..9), any::<u8>()), 0..12),
        threshold in 0.0f64..0.5,
    ) {
        let records: Vec<RolloutStats> = rows
            .into_iter()
            .enumerate()
            .map(|(k, (ious, bits))| {
                let correct = (0..ious.len()).map(|i| bits >> (i % 8) & 1 == 1).collect();
                RolloutStats { id: format!("r{k}"), ious, correct }
            })
            .collect();
        let first = filter::filter_examples(&records, threshold).unwrap();
        let kept: Vec<RolloutStats> = filter::kept_records(&records, &first).into_iter().cloned().collect();
        let second = filter::filter_examples(&kept, threshold).unwrap();
        prop_assert!(second.iter().all(|d| d.kept));
        for d in &first {
            prop_assert_eq!(d.kept, !d.all_correct && d.delta >= threshold);
        }
    }

    #[test]
    fn plans_respect_the_budget(
        duration_ds in 1u32..100_000,
        vmin in 1u32..64,
        extra in 0u32..2000,
        slack in 0u32..30000,
    ) {
        let vmax = vmin + extra;
        let cfg = BudgetConfig { total_tokens: vmax + slack, min_tokens_per_frame: vmin, max_tokens_per_frame: vmax, fps: 1.0 };
        let duration = f64::from(duration_ds) / 10.0;
        let plan = planner::coarse_plan(duration, &cfg).unwrap();
        prop_assert!(plan.total_tokens() <= u64::from(cfg.total_tokens));
        prop_assert!((vmin..=vmax).contains(&plan.tokens_per_frame));
        prop_assert!(plan.n_frames() as u32 <= cfg.max_frames());
        prop_assert!(plan.frame_times.iter().all(|t| (0.0..=duration).contains(t)));
    }

    #[test]
    fn glue_spans_round_trip(letter in "[A-D]", raw in nonempty_spans()) {
        let list: Vec<String> = raw.intervals().iter().map(|iv| format!("({}, {})", iv.start, iv.end)).collect();
        let text = format!("<think>look</think><answer>{letter}</answer><glue>[{}]</glue>", list.join(", "));
        let parsed = response::parse_response(&text, &["A", "B", "C", "D"]).unwrap();
        prop_assert_eq!(parsed.answer_letter, letter);
        prop_assert!(parsed.glue_spans.approx_eq(&raw));
        prop_assert_eq!(response::format_reward(&text, &["A", "B", "C", "D"]), 1.0);
    }
}

#[test]
fn golden_summed_column() {
    let rewards: Vec<RewardVector> = [(0.0, 1.0), (0.5, 0.0), (0.4, 1.0), (0.8, 0.0), (0.2, 1.0)]
        .iter()
        .map(|&(iou, acc)| RewardVector { iou, acc, ..Default::default() })
        .collect();
    let sum = advantage::summed_advantage(&rewards, advantage::DEFAULT_EPS).unwrap();
    for (got, want) in sum.iter().zip([0.06, -1.54, 1.34, -0.58, 0.70]) {
        assert_abs_diff_eq!(*got, want, epsilon = 0.01);
    }
}
