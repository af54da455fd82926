use holoreg::hilbert::SystemParams;
use holoreg::optctl::*;
use holoreg::pulses::{Channel, SweepSpec};
use proptest::prelude::*;

fn quadratic(x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.3).powi(2)).sum()
}

#[test]
fn same_seed_same_record() {
    let p = SystemParams::reference();
    let init = default_initial(GateTarget::Cphase, p.g_c, DEFAULT_CPHASE_DURATION, 8).unwrap();
    let o = OptimizerOptions::new(300, 5);
    let (a, pa, _) = optimize_gate(&init, GateTarget::Cphase, &p, &o).unwrap();
    let (b, pb, _) = optimize_gate(&init, GateTarget::Cphase, &p, &o).unwrap();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
}

#[test]
fn optimization_improves_on_start() {
    let p = SystemParams::reference();
    let init = default_initial(GateTarget::Swap, p.g_c, DEFAULT_SWAP_DURATION, 10).unwrap();
    let (rec, best, report) = optimize_gate(&init, GateTarget::Swap, &p, &OptimizerOptions::new(500, 1)).unwrap();
    assert!(rec.best_objective <= rec.initial_objective);
    assert!(rec.evaluations <= 500);
    assert!(rec.history.windows(2).all(|w| w[1] <= w[0]));
    assert!((report_objective(&report) - rec.best_objective).abs() < 1e-12);
    let s = best.render().unwrap();
    let v = s.channel(Channel::DeltaCpb).unwrap();
    assert!(v.iter().all(|x| *x >= best.delta_min && *x <= best.delta_max));
    assert_eq!(v[0], init.start_value);
    assert_eq!(v[v.len() - 1], init.end_value);
}

#[test]
fn fourier_basis_renders_and_optimizes() {
    let p = SystemParams::reference();
    let init =
        PulseParametrization::fourier_from_sweep(&SweepSpec::cphase(20.0 * p.g_c, 0.0, 5e-9), p.g_c, 6, 200).unwrap();
    let (rec, _, _) = optimize_gate(&init, GateTarget::Cphase, &p, &OptimizerOptions::new(200, 2)).unwrap();
    assert!(rec.best_objective <= rec.initial_objective);
}

#[test]
fn small_budget_is_rejected() {
    assert!(optimize(quadratic, &[0.0], &[1.0], &OptimizerOptions::new(10, 0)).is_err());
}

#[test]
fn invalid_parametrization_is_rejected() {
    let p = SystemParams::reference();
    let mut init = default_initial(GateTarget::Swap, p.g_c, 6e-9, 4).unwrap();
    init.coefficients.pop();
    assert!(init.validate().is_err());
    assert!(optimize_gate(&init, GateTarget::Swap, &p, &OptimizerOptions::new(200, 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn optimizer_contract(seed in 0u64..1000, dim in 1usize..5, budget in 100usize..600) {
        let x0 = vec![-1.0; dim];
        let scale = vec![1.0; dim];
        let o = OptimizerOptions::new(budget, seed);
        let a = optimize(quadratic, &x0, &scale, &o).unwrap();
        let b = optimize(quadratic, &x0, &scale, &o).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.evaluations <= budget);
        prop_assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(a.best_objective <= a.initial_objective);
        prop_assert!((quadratic(&a.best_parameters) - a.best_objective).abs() < 1e-15);
    }
}
