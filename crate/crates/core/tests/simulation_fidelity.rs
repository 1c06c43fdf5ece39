use proxyaudit::estimators::{ci_violation, naive_bias, true_bias};
use proxyaudit::simulate::{exact_summary, exact_table, sample_records, SimParams};
use proxyaudit::{build_joint_table, AttributeSource};

#[test]
fn empirical_naive_bias_tracks_exact_table() {
    let params = SimParams { seed: 11, ..SimParams::default() };
    let exact = exact_summary(&params).unwrap();
    let recs = sample_records(&params, 200_000).unwrap();
    let t = build_joint_table(&recs, AttributeSource::Both).unwrap();
    assert!((naive_bias(&t).unwrap() - exact.naive_bias).abs() < 0.01);
    assert!((true_bias(&t).unwrap() - exact.true_bias).abs() < 0.01);
    assert!(ci_violation(&t).unwrap() <= 0.02);
}

#[test]
fn cell_frequencies_within_five_standard_errors() {
    let params = SimParams { coupling: 0.4, seed: 5, ..SimParams::default() };
    let n = 100_000usize;
    let exact = exact_table(&params).unwrap();
    let recs = sample_records(&params, n).unwrap();
    let emp = build_joint_table(&recs, AttributeSource::Both).unwrap();
    for (p, c) in exact.cells().iter().zip(emp.cells()) {
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let freq = c / n as f64;
        assert!((freq - p).abs() <= 5.0 * se + 1e-12, "p={p} freq={freq}");
    }
}

#[test]
fn same_seed_same_records() {
    let params = SimParams { seed: 42, coupling: 0.2, ..SimParams::default() };
    assert_eq!(sample_records(&params, 5000).unwrap(), sample_records(&params, 5000).unwrap());
    let other = SimParams { seed: 43, ..params };
    assert_ne!(sample_records(&params, 5000).unwrap(), sample_records(&other, 5000).unwrap());
}

#[test]
fn scores_point_toward_the_prediction() {
    let recs = sample_records(&SimParams::default(), 20_000).unwrap();
    for r in &recs {
        let s = r.score.unwrap();
        assert!((0.0..=1.0).contains(&s));
        if s != 0.5 {
            assert_eq!(s > 0.5, r.a_hat.unwrap(), "{r:?}");
        }
    }
    // Mistakes sit closer to the boundary on average.
    let mean_key = |wrong: bool| {
        let v: Vec<f64> = recs
            .iter()
            .filter(|r| (r.a != r.a_hat) == wrong)
            .map(|r| r.uncertainty_key().unwrap())
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean_key(true) < mean_key(false));
}
