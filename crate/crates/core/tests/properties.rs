use proptest::prelude::*;

use valuegate::calibration::{apply_thresholds, tune_label_thresholds, ThresholdPolicy, ThresholdVector};
use valuegate::dataset::{compute_prevalence, read_scores_str, render_scores, Format, Split, SplitManifest};
use valuegate::ensembling::{hard_vote, soft_vote, weighted_vote};
use valuegate::gating::{
    run_cascade, subset_violations, trace_violation, GateAssignment, HierarchySpec, ScoreBundle, Variant,
};
use valuegate::label_space::{derive_ho, derive_presence, ho_labels, presence_labels, value_labels, HoMapping};
use valuegate::llm_adapter::{derive_llm_ho, parse_generation, parse_generations, RawGeneration};
use valuegate::stats::{bh_reject, mcnemar_chi2, mcnemar_exact_p, paired_bootstrap, BootstrapConfig};
use valuegate::{Keyed, LabelMatrix, ScoreMatrix, SentenceId};

fn ids(n: usize) -> Vec<SentenceId> {
    (0..n).map(|i| SentenceId::new("p", i.to_string())).collect()
}

fn value_matrix(bits: Vec<bool>) -> LabelMatrix {
    let n = bits.len() / 19;
    LabelMatrix::new(ids(n), value_labels(), bits).unwrap()
}

fn bundle_strategy() -> impl Strategy<Value = (ScoreBundle, f64, f64, f64)> {
    (1usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0..=1.0f64, n * 19),
            prop::collection::vec(0.0..=1.0f64, n * 8),
            prop::collection::vec(0.0..=1.0f64, n),
            0.0..=1.0f64,
            0.0..=1.0f64,
            0.0..=1.0f64,
        )
            .prop_map(move |(v, h, p, tv, th, tp)| {
                let bundle = ScoreBundle {
                    values: ScoreMatrix::new(ids(n), value_labels(), v).unwrap(),
                    ho: Some(ScoreMatrix::new(ids(n), ho_labels(), h).unwrap()),
                    presence: Some(ScoreMatrix::new(ids(n), presence_labels(), p).unwrap()),
                };
                (bundle, tv, th, tp)
            })
    })
}

fn gate_strategy() -> impl Strategy<Value = GateAssignment> {
    prop_oneof![
        Just(GateAssignment::quadrant_default(&HoMapping::builtin())),
        Just(GateAssignment::AnyParent),
        Just(GateAssignment::AllParents),
        (0usize..8).prop_map(|category| GateAssignment::Slice { category }),
    ]
}

fn spec(variant: Variant, gate: GateAssignment, tv: f64, th: f64, tp: f64) -> HierarchySpec {
    HierarchySpec {
        variant,
        mapping: HoMapping::builtin(),
        gate: Some(gate),
        values: ThresholdVector::fixed(&value_labels(), tv),
        ho: Some(ThresholdVector::fixed(&ho_labels(), th)),
        presence: Some(ThresholdVector::fixed(&presence_labels(), tp)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn derived_labels_are_hierarchy_consistent(bits in prop::collection::vec(any::<bool>(), 0..40 * 19)) {
        let bits = bits[..bits.len() / 19 * 19].to_vec();
        let values = value_matrix(bits);
        let mapping = HoMapping::builtin();
        let ho = derive_ho(&values, &mapping).unwrap();
        let presence = derive_presence(&values).unwrap();
        for r in 0..values.n_rows() {
            for v in 0..19 {
                if values.get(r, v) {
                    for c in mapping.parents(v) {
                        prop_assert!(ho.get(r, c));
                    }
                }
            }
            prop_assert_eq!(presence.get(r, 0), values.row(r).iter().any(|&b| b));
            for c in 0..8 {
                if ho.get(r, c) {
                    prop_assert!(mapping.members(c).iter().any(|&v| values.get(r, v)));
                }
            }
        }
        prop_assert_eq!(derive_llm_ho(&values, &mapping).unwrap(), ho);
    }

    #[test]
    fn cascade_only_removes_positives(
        (bundle, tv, th, tp) in bundle_strategy(),
        gate in gate_strategy(),
        with_presence in any::<bool>(),
    ) {
        let direct = run_cascade(&HierarchySpec::direct(ThresholdVector::fixed(&value_labels(), tv)), &bundle).unwrap();
        prop_assert_eq!(&direct.values, &apply_thresholds(&bundle.values, &ThresholdVector::fixed(&value_labels(), tv)).unwrap());
        let variant = if with_presence { Variant::PresenceCategoryValues } else { Variant::CategoryValues };
        let s = spec(variant, gate, tv, th, tp);
        let out = run_cascade(&s, &bundle).unwrap();
        prop_assert_eq!(subset_violations(&out.values, &direct.values).unwrap(), 0);
        prop_assert_eq!(trace_violation(&s, &out), None);
        if let (Some(p), Some(ho)) = (&out.trace.presence, &out.trace.ho) {
            for r in 0..p.n_rows() {
                if !p.get(r, 0) {
                    prop_assert!(ho.row(r).iter().all(|&b| !b));
                }
            }
        }
    }

    #[test]
    fn open_gates_are_identity((bundle, tv, _, _) in bundle_strategy(), gate in gate_strategy()) {
        let direct = run_cascade(&HierarchySpec::direct(ThresholdVector::fixed(&value_labels(), tv)), &bundle).unwrap();
        let out = run_cascade(&spec(Variant::PresenceCategoryValues, gate, tv, 0.0, 0.0), &bundle).unwrap();
        prop_assert_eq!(out.values, direct.values);
    }

    #[test]
    fn votes_are_permutation_invariant(
        cells in prop::collection::vec(prop::collection::vec(0.0..=1.0f64, 12), 1..6),
        weights in prop::collection::vec(0.01..1.0f64, 6),
        tau in 0.0..=1.0f64,
        rot in 0usize..6,
    ) {
        let labels: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let ms: Vec<ScoreMatrix> = cells.iter().map(|c| ScoreMatrix::new(ids(4), labels.clone(), c.clone()).unwrap()).collect();
        let ws = &weights[..ms.len()];
        let tv = ThresholdVector::fixed(&labels, tau);
        let r = rot % ms.len();
        let refs: Vec<&ScoreMatrix> = ms.iter().collect();
        let mut rotated = refs.clone();
        rotated.rotate_left(r);
        let mut rw = ws.to_vec();
        rw.rotate_left(r);
        prop_assert_eq!(soft_vote(&refs, &tv).unwrap(), soft_vote(&rotated, &tv).unwrap());
        prop_assert_eq!(weighted_vote(&refs, ws, &tv).unwrap(), weighted_vote(&rotated, &rw, &tv).unwrap());
        let decisions: Vec<LabelMatrix> = ms.iter().map(|m| apply_thresholds(m, &tv).unwrap()).collect();
        let drefs: Vec<&LabelMatrix> = decisions.iter().collect();
        let mut drot = drefs.clone();
        drot.rotate_left(r);
        prop_assert_eq!(hard_vote(&drefs).unwrap(), hard_vote(&drot).unwrap());
        prop_assert_eq!(soft_vote(&refs[..1], &tv).unwrap(), decisions[0].clone());
    }

    #[test]
    fn bh_is_monotone_in_alpha(p in prop::collection::vec(0.0..=1.0f64, 0..30), a in 0.0..0.5f64, d in 0.0..0.5f64) {
        let lo = bh_reject(&p, a);
        let hi = bh_reject(&p, a + d);
        for (l, h) in lo.iter().zip(&hi) {
            prop_assert!(!l || *h);
        }
    }

    #[test]
    fn mcnemar_branches_agree_for_large_counts(b in 0u64..400, c in 0u64..400) {
        prop_assume!(b + c >= 100);
        let exact = mcnemar_exact_p(b, c);
        let (_, chi) = mcnemar_chi2(b, c);
        prop_assert!((exact - chi).abs() <= 0.02, "b={} c={} exact={} chi={}", b, c, exact, chi);
    }

    #[test]
    fn llm_parsing_never_fails(texts in prop::collection::vec(".{0,60}", 0..20), lenient in any::<bool>()) {
        let gens: Vec<RawGeneration> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| RawGeneration { id: SentenceId::new("g", i.to_string()), text: t.clone() })
            .collect();
        let parsed = parse_generations(&gens, lenient, None).unwrap();
        let s = &parsed.stats;
        prop_assert_eq!(s.valid + s.valid_empty + s.invalid, gens.len());
        prop_assert_eq!(s.rows, gens.len());
        for t in &texts {
            prop_assert_eq!(parse_generation(t, lenient).bits.len(), 19);
        }
    }

    #[test]
    fn six_digit_scores_round_trip_exactly(micro in prop::collection::vec(0u32..=1_000_000, 1..60)) {
        let n = micro.len();
        let data: Vec<f64> = micro.iter().map(|&m| m as f64 / 1e6).collect();
        let labels = vec!["s".to_string()];
        let m = ScoreMatrix::new(ids(n), labels.clone(), data).unwrap();
        for format in [Format::Tsv, Format::Jsonl] {
            let back = read_scores_str(&render_scores(&m, format), "mem", &labels, format).unwrap();
            prop_assert_eq!(&back, &m);
        }
    }

    #[test]
    fn prevalence_ignores_row_order(bits in prop::collection::vec(any::<bool>(), 1..50), seed in any::<u64>()) {
        let n = bits.len();
        let m = LabelMatrix::new(ids(n), vec!["x".into()], bits).unwrap();
        let manifest = SplitManifest { split: Split::Train, ids: ids(n) };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (i as u64).wrapping_mul(seed | 1).rotate_left(17));
        let shuffled = m.select_rows(&order);
        prop_assert_eq!(compute_prevalence(&m, &manifest).unwrap(), compute_prevalence(&shuffled, &manifest).unwrap());
    }

    #[test]
    fn feasible_thresholds_meet_the_floor(
        scores in prop::collection::vec(0.0..=1.0f64, 1..200),
        gold in prop::collection::vec(any::<bool>(), 200),
    ) {
        let n = scores.len();
        let g = LabelMatrix::new(ids(n), vec!["x".into()], gold[..n].to_vec()).unwrap();
        let s = ScoreMatrix::new(ids(n), vec!["x".into()], scores).unwrap();
        let tv = tune_label_thresholds(&s, &g, &ThresholdPolicy::constrained(Split::Validation)).unwrap();
        let d = &tv.diagnostics["x"];
        if d.flag.is_none() {
            prop_assert!(d.precision >= 0.40);
        }
        let tau = tv.get("x").unwrap();
        prop_assert!((tau * 100.0 - (tau * 100.0).round()).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bootstrap_is_schedule_independent(
        bits in prop::collection::vec(any::<bool>(), 3 * 30),
        flips_a in prop::collection::vec(any::<bool>(), 3 * 30),
        flips_b in prop::collection::vec(any::<bool>(), 3 * 30),
        seed in any::<u64>(),
    ) {
        let labels: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let mk = |v: Vec<bool>| LabelMatrix::new(ids(30), labels.clone(), v).unwrap();
        let gold = mk(bits.clone());
        let a = mk(bits.iter().zip(&flips_a).map(|(g, f)| g ^ (f & g)).collect());
        let b = mk(bits.iter().zip(&flips_b).map(|(g, f)| g ^ f).collect());
        let cfg = BootstrapConfig::new(100, seed);
        let one = paired_bootstrap(&gold, &a, &b, &BootstrapConfig { workers: 1, ..cfg }).unwrap();
        let four = paired_bootstrap(&gold, &a, &b, &BootstrapConfig { workers: 4, ..cfg }).unwrap();
        prop_assert_eq!(&one, &four);
        prop_assert_eq!(one.deltas, four.deltas);
        prop_assert!(one.p_value > 0.0 && one.p_value <= 1.0);
    }
}
