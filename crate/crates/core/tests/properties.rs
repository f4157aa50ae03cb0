use clblk::expansion::{expansion_report, ReportOptions};
use clblk::harness::{run_experiment, ExperimentConfig, Rule, Target};
use clblk::series_io::{decode_binary, decode_text, encode_binary, encode_text};
use clblk::{disjoint_stat, sliding_stat, BlockConfig, ClusterFunctional, MagnitudeSeries, ModelSpec};
use proptest::prelude::*;

fn functionals() -> Vec<ClusterFunctional> {
    vec![
        ClusterFunctional::indicator(),
        ClusterFunctional::length(),
        ClusterFunctional::count(),
        ClusterFunctional::length_pow(1.5).unwrap(),
    ]
}

/// Values below 1 with sparse exceedances, which exercises every event type.
fn series_strategy() -> impl Strategy<Value = (Vec<f64>, usize)> {
    (2usize..12).prop_flat_map(|r| {
        let len = (3 * r)..(3 * r + 120);
        (
            prop::collection::vec(prop_oneof![4 => 0.0f64..1.0, 1 => 1.0001f64..20.0], len),
            Just(r),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn identity_closes_and_paths_agree((values, r) in series_strategy(), which in 0usize..4) {
        let h = functionals().swap_remove(which);
        let s = MagnitudeSeries::from_values(values).unwrap();
        let cfg = BlockConfig::new(r, 1.0, 0.05).unwrap();
        let rep = expansion_report(&s, &cfg, &h, ReportOptions::default()).unwrap();
        if h.is_integer_valued() {
            prop_assert_eq!(rep.residual_identity, 0.0);
            prop_assert_eq!(rep.checks.max_abs_diff(), 0.0);
        } else {
            prop_assert!(rep.residual_identity.abs() <= 1e-9 * rep.scale());
            prop_assert!(rep.checks.max_abs_diff() <= 1e-9 * rep.scale());
        }
        if let Some(cx) = &rep.counterexample {
            prop_assert!(cx.explained_by_boundary_term);
        }
    }

    #[test]
    fn built_ins_ignore_entries_outside_the_exceedance_range(
        quiet in prop::collection::vec(0.0f64..=1.0, 1..30),
        hits in prop::collection::vec((0usize..30, 1.0001f64..100.0), 1..5),
    ) {
        let mut x = quiet.clone();
        for h in functionals() {
            prop_assert_eq!(h.eval(&x), 0.0);
        }
        for (at, v) in hits {
            let i = at % x.len();
            x[i] = v;
        }
        let first = x.iter().position(|v| *v > 1.0).unwrap();
        let last = x.iter().rposition(|v| *v > 1.0).unwrap();
        for h in functionals() {
            prop_assert_eq!(h.eval(&x), h.eval(&x[first..=last]));
            prop_assert!(h.eval(&x) >= 0.0);
        }
    }

    #[test]
    fn statistics_are_scale_equivariant((values, r) in series_strategy(), k in -20i32..20) {
        let f = 2f64.powi(k);
        let s = MagnitudeSeries::from_values(values.clone()).unwrap();
        let t = MagnitudeSeries::from_values(values.iter().map(|v| v * f).collect()).unwrap();
        let cfg = BlockConfig::new(r, 1.0, 0.05).unwrap();
        let scaled = BlockConfig { u: f, ..cfg };
        for h in functionals() {
            prop_assert_eq!(disjoint_stat(&s, &cfg, &h).unwrap().value, disjoint_stat(&t, &scaled, &h).unwrap().value);
            prop_assert_eq!(sliding_stat(&s, &cfg, &h).unwrap().value, sliding_stat(&t, &scaled, &h).unwrap().value);
            let a = expansion_report(&s, &cfg, &h, ReportOptions::default()).unwrap();
            let b = expansion_report(&t, &scaled, &h, ReportOptions::default()).unwrap();
            prop_assert_eq!(a.ic, b.ic);
            prop_assert_eq!(a.bc1, b.bc1);
            prop_assert_eq!(a.bc2, b.bc2);
        }
    }

    #[test]
    fn series_formats_round_trip(values in prop::collection::vec(0.0f64..1e300, 0..200)) {
        prop_assert_eq!(decode_binary(&encode_binary(&values)).unwrap(), values.clone());
        prop_assert_eq!(decode_text(&encode_text(&values)).unwrap(), values);
    }

    #[test]
    fn model_strings_round_trip(c0 in 0.1f64..10.0, c1 in 0.1f64..10.0, alpha in 0.1f64..5.0, r in 2usize..100) {
        let base = ModelSpec::mma1(c0, c1, alpha).unwrap();
        let pw = ModelSpec::piecewise(base.clone(), r).unwrap();
        let q = ModelSpec::mmaq(vec![c0, c1, c0 * c1], alpha).unwrap();
        for m in [base, pw, q, ModelSpec::iid(alpha).unwrap()] {
            prop_assert_eq!(m.to_string().parse::<ModelSpec>().unwrap(), m);
        }
    }
}

#[test]
fn experiment_tables_ignore_thread_count() {
    let mut cfg = ExperimentConfig::new(
        ModelSpec::piecewise(ModelSpec::mma1(1.0, 2.0, 1.0).unwrap(), 4).unwrap(),
        "length",
        &[3000, 9000],
        Rule::Power { coef: 1.0, exp: 0.3 },
        Rule::Power { coef: 2.0, exp: -0.5 },
        7,
        123,
        vec![Target::IcNorm, Target::BcNorm, Target::ClmLarge(1.0), Target::JlLarge(1.0), Target::GapLarge],
    );
    cfg.threads = Some(1);
    let one = run_experiment(&cfg).unwrap();
    for t in [2, 5] {
        cfg.threads = Some(t);
        let many = run_experiment(&cfg).unwrap();
        assert_eq!(one.rows, many.rows);
        assert_eq!(one.to_csv().unwrap(), many.to_csv().unwrap());
    }
}

#[test]
fn single_replicate_runs_are_bit_identical() {
    let cfg = ExperimentConfig::new(
        ModelSpec::mma1(1.0, 1.0, 1.0).unwrap(),
        "indicator",
        &[10_000],
        Rule::Power { coef: 1.0, exp: 0.15 },
        Rule::Power { coef: 1.0, exp: -0.6 },
        1,
        42,
        vec![Target::IcNorm, Target::BcNorm, Target::ScaledGap],
    );
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.metadata.config_hash, b.metadata.config_hash);
}

#[test]
fn custom_functional_probes() {
    let excess = ClusterFunctional::custom("excess", 1.0, 1e3, |x| x.iter().map(|v| (v - 1.0).max(0.0)).sum());
    assert!(excess.is_ok());
    let width = ClusterFunctional::custom("width", 1.0, 10.0, |x| x.len() as f64);
    assert!(width.is_err());
    let negative = ClusterFunctional::custom("neg", 0.0, 1.0, |x| if x.iter().any(|v| *v > 1.0) { -1.0 } else { 0.0 });
    assert!(negative.is_err());
}
