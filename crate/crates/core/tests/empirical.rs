use clblk::analytic::joint_exceedance;
use clblk::harness::{run_experiment, ExperimentConfig, Rule, Target};
use clblk::ModelSpec;

fn binomial_z(hits: usize, trials: usize, p: f64) -> f64 {
    let phat = hits as f64 / trials as f64;
    (phat - p) / (p * (1.0 - p) / trials as f64).sqrt()
}

#[test]
fn empirical_marginal_matches_exact_tail() {
    for spec in [
        ModelSpec::mma1(1.0, 2.0, 1.5).unwrap(),
        ModelSpec::mmaq(vec![1.0, 0.5, 2.0], 1.0).unwrap(),
        ModelSpec::iid(2.0).unwrap(),
    ] {
        let n = 400_000;
        let s = spec.generate(n, 9).unwrap();
        for w in [0.2, 0.05, 0.01] {
            let u = spec.threshold_for_w(w).unwrap();
            assert!((spec.marginal_tail(u).unwrap() - w).abs() < 1e-12);
            let hits = s.values().iter().filter(|v| **v > u).count();
            let z = binomial_z(hits, n, w);
            assert!(z.abs() < 4.5, "{spec} w={w}: z = {z}");
        }
    }
}

#[test]
fn lag_one_joint_exceedance_matches_exact() {
    let spec = ModelSpec::mma1(1.0, 2.0, 1.0).unwrap();
    let n = 500_000;
    let s = spec.generate(n, 4).unwrap();
    let v = s.values();
    for w in [0.1, 0.02] {
        let u = spec.threshold_for_w(w).unwrap();
        for lag in [1usize, 2] {
            let p = joint_exceedance(&spec, u, lag).unwrap();
            let hits = (0..n - lag).filter(|&i| v[i] > u && v[i + lag] > u).count();
            let z = binomial_z(hits, n - lag, p);
            assert!(z.abs() < 4.5, "w={w} lag={lag}: z = {z}");
        }
    }
}

#[test]
fn piecewise_blocks_are_independent_across_the_boundary() {
    let spec = ModelSpec::piecewise(ModelSpec::mma1(1.0, 1.0, 1.0).unwrap(), 5).unwrap();
    let n = 1_000_000;
    let s = spec.generate(n, 21).unwrap();
    let v = s.values();
    let w = 0.1;
    let u = spec.threshold_for_w(w).unwrap();
    let pairs: Vec<usize> = (1..n / 5).map(|b| b * 5).collect();
    let hits = pairs.iter().filter(|&&i| v[i - 1] > u && v[i] > u).count();
    let z = binomial_z(hits, pairs.len(), w * w);
    assert!(z.abs() < 4.5, "z = {z}");
    // Inside a block the pair is strongly dependent.
    let inside = (0..n / 5).filter(|b| v[b * 5] > u && v[b * 5 + 1] > u).count();
    assert!(inside as f64 / (n / 5) as f64 > 3.0 * w * w);
}

#[test]
fn disjoint_and_sliding_means_agree() {
    let cfg = ExperimentConfig::new(
        ModelSpec::mma1(1.0, 1.0, 1.0).unwrap(),
        "indicator",
        &[200_000],
        Rule::Absolute(10.0),
        Rule::Absolute(0.005),
        60,
        8,
        vec![Target::DisjointStat, Target::SlidingStat],
    );
    let t = run_experiment(&cfg).unwrap();
    let d = &t.series("disjoint_stat")[0];
    let s = &t.series("sliding_stat")[0];
    let se = (d.se.powi(2) + s.se.powi(2)).sqrt();
    assert!((d.mean - s.mean).abs() < 4.0 * se + 1e-3, "{} vs {}", d.mean, s.mean);
    // Both estimate the exact block probability over r w.
    let f = (1.0f64 - 0.005).sqrt();
    let exact = (1.0 - f.powi(11)) / (10.0 * 0.005);
    assert!((d.mean - exact).abs() < 4.0 * d.se, "{} vs {exact}", d.mean);
}
