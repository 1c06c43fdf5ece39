use proxyaudit::report::{audit, EstimatorSet};
use proxyaudit::sampling::*;
use proxyaudit::simulate::{sample_records, SimParams};

fn labels(
    pool: &[proxyaudit::PredictionRecord],
    seed: u64,
    kind: EstimatorKind,
) -> (usize, usize, usize) {
    let truth = direct_estimation(pool).unwrap();
    let bc = BaselineConfig { seed, max_iters: 1000, ..BaselineConfig::default() };
    let ac = ActiveConfig { b: 400, w: 100, epsilon: 1e-9, seed, max_iters: 1000, ..ActiveConfig::default() };
    let oracle = || InMemoryOracle::from_records(pool).unwrap();
    let reach = |t: &SamplingTrace| t.labels_to_reach(truth, 0.02, kind).unwrap_or(pool.len());
    let a = active_sampling(pool, &ac, &mut oracle()).unwrap();
    let u = uniform_sampling(pool, &bc, &mut oracle()).unwrap();
    let p = positive_sampling(pool, &bc, &mut oracle()).unwrap();
    (reach(&a.trace), reach(&u.trace), reach(&p.trace))
}

fn pool(seed: u64) -> Vec<proxyaudit::PredictionRecord> {
    sample_records(&SimParams { coupling: 0.1, seed, ..SimParams::default() }, 14_000).unwrap()
}

#[test]
fn positive_needs_fewer_labels_than_uniform_on_average() {
    let (mut u_total, mut p_total) = (0, 0);
    for seed in 0..10 {
        let (_, u, p) = labels(&pool(seed), seed, EstimatorKind::General);
        u_total += u;
        p_total += p;
    }
    assert!(p_total <= u_total, "positive {p_total} vs uniform {u_total}");
}

#[test]
fn uncertainty_ordering_speeds_up_the_plug_in_estimate() {
    let mut wins = 0;
    for seed in 0..10 {
        let (a, _, p) = labels(&pool(seed), seed, EstimatorKind::PlugIn);
        wins += usize::from(a < p);
    }
    assert!(wins >= 8, "active beat positive on {wins} of 10 pools");
}

#[test]
fn corrected_beats_direct_with_a_hundred_labels() {
    let (mut direct_err, mut corrected_err) = (0.0, 0.0);
    for run in 0..100u64 {
        let eval = sample_records(&SimParams { seed: 1000 + run, ..SimParams::default() }, 10_000).unwrap();
        let common = sample_records(&SimParams { seed: 5000 + run, ..SimParams::default() }, 100).unwrap();
        let truth = direct_estimation(&eval).unwrap().abs();
        let rep = audit(&eval, &common, EstimatorSet::ALL).unwrap();
        direct_err += (rep.direct_abs.value.unwrap_or(0.0) - truth).abs();
        corrected_err += (rep.corrected_abs.value.unwrap_or(0.0) - truth).abs();
    }
    assert!(corrected_err < direct_err, "corrected {corrected_err} direct {direct_err}");
}
