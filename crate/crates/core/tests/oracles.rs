use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sindy_delay::sparsify::{greedy_eliminate, masked_least_squares, removal_costs, Mask};
use sindy_delay::GreedyConfig;

fn normal_equations_cost(
    theta: &DMatrix<f64>,
    target: &DVector<f64>,
    active: &[usize],
) -> (DVector<f64>, f64) {
    let mut coeffs = DVector::zeros(theta.ncols());
    if !active.is_empty() {
        let a = theta.select_columns(active);
        let x = (a.transpose() * &a)
            .cholesky()
            .unwrap()
            .solve(&(a.transpose() * target));
        for (k, &j) in active.iter().enumerate() {
            coeffs[j] = x[k];
        }
    }
    let cost = (target - theta * &coeffs).norm_squared();
    (coeffs, cost)
}

fn instance() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, Vec<bool>)> {
    (3usize..7).prop_flat_map(|cols| {
        let rows = 4 * cols;
        (
            prop::collection::vec(-1.0f64..1.0, rows * cols),
            prop::collection::vec(-1.0f64..1.0, rows),
            prop::collection::vec(any::<bool>(), cols),
        )
            .prop_map(move |(m, t, mask)| {
                (DMatrix::from_vec(rows, cols, m), DVector::from_vec(t), mask)
            })
    })
}

fn well_conditioned(theta: &DMatrix<f64>) -> bool {
    let s = theta.clone().svd(false, false).singular_values;
    s.min() > 1e-3 * s.max()
}

proptest! {
    #[test]
    fn masked_fit_matches_normal_equations((theta, target, active) in instance()) {
        prop_assume!(well_conditioned(&theta));
        let mask = Mask::from_active(active);
        let fit = masked_least_squares(&theta, &target, &mask).unwrap();
        let (oracle, cost) = normal_equations_cost(&theta, &target, &mask.active_indices());
        prop_assert!((&fit.coeffs - &oracle).amax() <= 1e-8 * oracle.amax().max(1.0));
        prop_assert!((fit.cost - cost).abs() <= 1e-8 * cost.max(1e-300));
        for j in 0..theta.ncols() {
            if !mask.is_active(j) {
                prop_assert_eq!(fit.coeffs[j], 0.0);
            }
        }
    }

    #[test]
    fn removal_costs_match_exhaustive_refits((theta, target, active) in instance()) {
        prop_assume!(well_conditioned(&theta));
        let mask = Mask::from_active(active);
        for (q, cost, _) in removal_costs(&theta, &target, &mask).unwrap() {
            let rest: Vec<usize> = mask.active_indices().into_iter().filter(|&j| j != q).collect();
            let (_, oracle) = normal_equations_cost(&theta, &target, &rest);
            prop_assert!((cost - oracle).abs() <= 1e-8 * oracle.max(1e-12));
        }
    }

    #[test]
    fn greedy_path_follows_cheapest_removal((theta, target, _) in instance()) {
        prop_assume!(well_conditioned(&theta));
        let fit = greedy_eliminate(&theta, &target, &GreedyConfig::default()).unwrap();
        prop_assert_eq!(fit.trace.steps.len(), theta.ncols());
        let mut active: Vec<usize> = (0..theta.ncols()).collect();
        for step in &fit.trace.steps {
            let costs: Vec<(usize, f64)> = active
                .iter()
                .map(|&q| {
                    let rest: Vec<usize> = active.iter().copied().filter(|&j| j != q).collect();
                    (q, normal_equations_cost(&theta, &target, &rest).1)
                })
                .collect();
            let min = costs.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            let chosen = costs.iter().find(|c| c.0 == step.term).unwrap().1;
            prop_assert!(chosen <= min * (1.0 + 1e-9) + 1e-15);
            active.retain(|&j| j != step.term);
        }
        let last = fit.trace.steps.last().unwrap();
        prop_assert!((last.normalized_cost - 1.0).abs() < 1e-12);
    }
}
