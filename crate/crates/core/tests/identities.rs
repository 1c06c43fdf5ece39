use proptest::prelude::*;
use proxyaudit::estimators::{
    distortion_factor, error_profile, forward_noisy_estimates, general_corrected_bias, naive_bias,
    naive_rates, rates, true_bias, ErrorProfile, Rates,
};
use proxyaudit::theory::{gamma_scan_budget, optimal_error_split, ErrorBudget};
use proxyaudit::{build_joint_table, AttributeSource, Cell, JointTable, PredictionRecord};

/// Table in which `y_hat` and `a_hat` are independent given `(y, a)`,
/// built cell by cell without going through the forward map.
fn ci_table(alpha: f64, beta: f64, r: f64, s: f64, g1: f64, g2: f64) -> JointTable {
    JointTable::from_fn(|c: Cell| {
        if !c.y {
            return (1.0 - r - s) / 8.0;
        }
        let (mass, rate, err) = if c.a { (r, alpha, g2) } else { (s, beta, g1) };
        let p_yhat = if c.y_hat { rate } else { 1.0 - rate };
        let p_ahat = if c.a_hat != c.a { err } else { 1.0 - err };
        mass * p_yhat * p_ahat
    })
    .unwrap()
}

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

fn rates_strategy() -> impl Strategy<Value = (f64, f64)> {
    (0.01..0.99f64, 0.01..0.99f64).prop_map(|(r, frac)| (r * 0.5, (1.0 - r * 0.5) * frac * 0.5 + 0.005))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn gamma_in_unit_interval(g1 in unit(), g2 in unit(), (r, s) in rates_strategy()) {
        let gamma = distortion_factor(g1, g2, Rates::new(r, s).unwrap()).unwrap();
        prop_assert!((0.0..=1.0).contains(&gamma));
    }

    #[test]
    fn forward_map_matches_independent_table(
        alpha in unit(), beta in unit(), (r, s) in rates_strategy(),
        g1 in 0.0..0.99f64, g2 in 0.0..0.99f64,
    ) {
        let rt = Rates::new(r, s).unwrap();
        let (ah, bh) = forward_noisy_estimates(alpha, beta, rt, g1, g2).unwrap();
        let (th, tb) = naive_rates(&ci_table(alpha, beta, r, s, g1, g2)).unwrap();
        prop_assert!((ah - th).abs() < 1e-12);
        prop_assert!((bh - tb).abs() < 1e-12);
        let gamma = distortion_factor(g1, g2, rt).unwrap();
        prop_assert!(((ah - bh).abs() - gamma * (alpha - beta).abs()).abs() < 1e-12);
        prop_assert!((ah - bh).abs() <= (alpha - beta).abs() + 1e-12);
    }

    #[test]
    fn general_inversion_recovers_truth(cells in prop::array::uniform16(0.05..1.0f64)) {
        let table = JointTable::from_cells(cells).unwrap();
        let profile = error_profile(&table).unwrap();
        prop_assume!((1.0 - profile.delta1 - profile.delta2).abs() > 1e-3);
        let (ah, bh) = naive_rates(&table).unwrap();
        let got = general_corrected_bias(ah, bh, &profile, rates(&table).unwrap()).unwrap();
        prop_assert!((got - true_bias(&table).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn perfect_proxy_collapses_everything(alpha in unit(), beta in unit(), (r, s) in rates_strategy()) {
        let table = ci_table(alpha, beta, r, s, 0.0, 0.0);
        let rt = rates(&table).unwrap();
        prop_assert_eq!(distortion_factor(0.0, 0.0, rt).unwrap(), 1.0);
        let t = true_bias(&table).unwrap();
        prop_assert!((naive_bias(&table).unwrap() - t).abs() < 1e-12);
        let p = ErrorProfile::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let (ah, bh) = naive_rates(&table).unwrap();
        prop_assert!((general_corrected_bias(ah, bh, &p, rt).unwrap() - t).abs() < 1e-12);
    }

    #[test]
    fn counts_agree_with_brute_force(rows in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>()), 1..200)) {
        let records: Vec<_> = rows.iter().enumerate()
            .map(|(i, &(y, a, y_hat, a_hat))| PredictionRecord::new(i.to_string(), y, y_hat).with_a(a).with_a_hat(a_hat))
            .collect();
        let table = build_joint_table(&records, AttributeSource::Both).unwrap();
        let count = |pred: &dyn Fn(&(bool, bool, bool, bool)) -> bool| rows.iter().filter(|r| pred(r)).count() as f64;
        let pos_a1 = count(&|r| r.0 && r.1);
        let pos_a0 = count(&|r| r.0 && !r.1);
        prop_assume!(pos_a1 > 0.0 && pos_a0 > 0.0);
        let alpha = count(&|r| r.0 && r.1 && r.2) / pos_a1;
        let beta = count(&|r| r.0 && !r.1 && r.2) / pos_a0;
        prop_assert!((true_bias(&table).unwrap() - (alpha - beta)).abs() < 1e-12);
        prop_assert_eq!(table.total(), rows.len() as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn closed_form_split_beats_grid(u_frac in 0.0..=1.0f64, r in 0.02..=0.5f64) {
        let u = u_frac * 2.0 * r;
        let budget = ErrorBudget::new(u, r).unwrap();
        let split = optimal_error_split(budget).unwrap();
        let scan = gamma_scan_budget(budget, 1e-3).unwrap();
        let rt = Rates::new(r, r).unwrap();
        let best = split
            .iter()
            .map(|&(g1, g2)| distortion_factor(g1, g2, rt).unwrap_or(0.0))
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(best >= scan.max_gamma() - 1e-12);
        for p in scan.argmax_points() {
            prop_assert!(split.iter().any(|&(g1, _)| (g1 - p.g1).abs() <= 1e-3 + 1e-12));
        }
        // At equal rates gamma peaks at an end of the feasible segment.
        let (lo, hi) = scan.interval;
        prop_assert!(scan.argmax_points().all(|p| (p.g1 - lo).abs() < 1e-9 || (p.g1 - hi).abs() < 1e-9));
    }
}
