//! Property tests for the invariants of each module.

use num_complex::Complex64;
use proptest::prelude::*;

use tomonet::estimation::{
    bic_select, crlb_elevation, estimate_from_profile, ls_reestimate, order_criterion, EstimationConfig,
};
use tomonet::geometry::{stack_real_imag, stack_vector, unstack_vector, AcquisitionGeometry, ElevationGrid, SteeringMatrix};
use tomonet::kernels::stack_rows;
use tomonet::network::{init_network, piecewise_linear, Activation, NetworkConfig, SupportSchedule};
use tomonet::simulation::{Scatterer, Scene, SnrReference};
use tomonet::solvers::{complex_soft_threshold, fista_solve, ista_solve, lasso_kkt_residual, SolverConfig};

fn cvec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| Complex64::new(a, b)), len)
}

fn baselines(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-300.0..300.0f64, n).prop_filter("distinct", |b| {
        let mut s = b.clone();
        s.sort_by(f64::total_cmp);
        s.windows(2).all(|w| w[1] - w[0] > 1.0)
    })
}

fn small_steering() -> SteeringMatrix {
    let geo = AcquisitionGeometry::regular(8, -120.0, 120.0, 22680.0).unwrap();
    SteeringMatrix::build(&geo, &ElevationGrid::new(0.0, 60.0, 2.0).unwrap()).unwrap()
}

fn default_steering() -> SteeringMatrix {
    SteeringMatrix::build(&AcquisitionGeometry::default_stack(), &ElevationGrid::default_grid()).unwrap()
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn steering_entries_have_unit_modulus(b in baselines(7), lr in 1e3..1e5f64) {
        let geo = AcquisitionGeometry::new(b, lr).unwrap();
        let r = SteeringMatrix::build(&geo, &ElevationGrid::new(-50.0, 50.0, 2.5).unwrap()).unwrap();
        for z in r.entries() {
            prop_assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rayleigh_resolution_ignores_baseline_offset(b in baselines(6), shift in -1e3..1e3f64) {
        let geo = AcquisitionGeometry::new(b.clone(), 22680.0).unwrap();
        let moved = geo.with_baselines(b.iter().map(|x| x + shift).collect()).unwrap();
        prop_assert!((geo.rayleigh_resolution() - moved.rayleigh_resolution()).abs() < 1e-9 * geo.rayleigh_resolution());
    }

    #[test]
    fn stacking_commutes_with_complex_products(m in cvec(24), x in cvec(6)) {
        let a = ndarray::Array2::from_shape_vec((4, 6), m).unwrap();
        let stacked = stack_real_imag(&a).unwrap();
        prop_assert_eq!(stacked.unstack(), a.clone());
        prop_assert_eq!(unstack_vector(&stack_vector(&x).unwrap()), x.clone());
        let direct: Vec<Complex64> = (0..4).map(|i| (0..6).map(|j| a[[i, j]] * x[j]).sum()).collect();
        let via = unstack_vector(&stacked.mul_vector(&stack_vector(&x).unwrap()));
        prop_assert!(max_diff(&direct, &via) < 1e-12);
    }

    #[test]
    fn soft_threshold_is_non_expansive(x in cvec(16), y in cvec(16), theta in 0.0..2.0f64) {
        let (fx, fy) = (complex_soft_threshold(&x, theta).unwrap(), complex_soft_threshold(&y, theta).unwrap());
        prop_assert!(dist(&fx, &fy) <= dist(&x, &y) + 1e-12);
    }

    #[test]
    fn ista_objective_never_increases(g in cvec(8), lam in 0.05..2.0f64) {
        let r = small_steering();
        let cfg = SolverConfig { max_iters: 300, record_objective: true, ..SolverConfig::new(lam, 0.0) };
        let cfg = SolverConfig { step_beta: tomonet::solvers::lipschitz_step(&r).unwrap(), ..cfg };
        let (_, trace) = ista_solve(&g, &r, &cfg).unwrap();
        for w in trace.objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn ista_and_fista_agree_and_satisfy_kkt(g in cvec(8), lam in 0.2..2.0f64) {
        let r = small_steering();
        let cfg = SolverConfig {
            max_iters: 200_000,
            tol: 1e-13,
            ..SolverConfig::new(lam, tomonet::solvers::lipschitz_step(&r).unwrap())
        };
        let (xi, ti) = ista_solve(&g, &r, &cfg).unwrap();
        let (xf, tf) = fista_solve(&g, &r, &cfg).unwrap();
        prop_assume!(ti.converged && tf.converged);
        let oi = tomonet::solvers::lasso_objective(&xi, &g, &r, lam);
        let of = tomonet::solvers::lasso_objective(&xf, &g, &r, lam);
        prop_assert!((oi - of).abs() < 1e-8, "{oi} vs {of}");
        prop_assert!(lasso_kkt_residual(&xi, &g, &r, lam) < 1e-6);
        prop_assert!(lasso_kkt_residual(&xf, &g, &r, lam) < 1e-6);
    }

    #[test]
    fn network_is_phase_equivariant(g in cvec(25), phi in 0.0..std::f64::consts::TAU, act in prop::bool::ANY) {
        let r = default_steering();
        let activation = if act { Activation::Piecewise } else { Activation::Soft };
        let net = init_network(&r, NetworkConfig { layers: 4, activation, ..Default::default() }, 0.5).unwrap();
        let rot = Complex64::from_polar(1.0, phi);
        let a = net.forward(&g.iter().map(|z| z * rot).collect::<Vec<_>>()).unwrap();
        let b: Vec<Complex64> = net.forward(&g).unwrap().iter().map(|z| z * rot).collect();
        prop_assert!(max_diff(&a, &b) < 1e-10);
    }

    #[test]
    fn stacked_and_complex_forward_agree(gs in prop::collection::vec(cvec(25), 1..5), scaled in prop::bool::ANY) {
        let r = default_steering();
        let cfg = NetworkConfig { layers: 3, input_scaling: scaled, ..Default::default() };
        let net = init_network(&r, cfg, 0.5).unwrap();
        let batch = net.forward_batch(&stack_rows(gs.iter().map(|g| g.as_slice()), 25)).unwrap();
        for (row, g) in batch.rows().into_iter().zip(&gs) {
            let v = unstack_vector(row.as_slice().unwrap());
            prop_assert!(max_diff(&v, &net.forward(g).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn piecewise_shrinkage_is_lipschitz(
        x in cvec(12),
        d in cvec(12),
        t1 in 0.0..1.0f64,
        gap in 0.0..1.0f64,
        slopes in prop::array::uniform3(0.0..3.0f64),
    ) {
        let theta = [t1, t1 + gap, slopes[0], slopes[1], slopes[2]];
        let delta: Vec<Complex64> = d.iter().map(|z| z * 1e-3).collect();
        let y: Vec<Complex64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let (fx, fy) = (piecewise_linear(&x, &theta).unwrap(), piecewise_linear(&y, &theta).unwrap());
        let bound = slopes.iter().copied().fold(1.0, f64::max);
        for ((a, b), dz) in fx.iter().zip(&fy).zip(&delta) {
            prop_assert!((a - b).norm() <= bound * dz.norm() * (1.0 + 1e-9) + 1e-15);
        }
    }

    #[test]
    fn ls_residual_is_orthogonal_to_support(g in cvec(25), support in prop::collection::btree_set(0usize..201, 1..4)) {
        let r = default_steering();
        let support: Vec<usize> = support.into_iter().collect();
        let fit = ls_reestimate(&g, &r, &support).unwrap();
        let model: Vec<Complex64> = (0..25)
            .map(|n| fit.support.iter().zip(&fit.amplitudes).map(|(&l, a)| r.entries()[[n, l]] * a).sum())
            .collect();
        let resid: Vec<Complex64> = g.iter().zip(&model).map(|(a, b)| a - b).collect();
        for &l in &fit.support {
            let ip: Complex64 = (0..25).map(|n| r.entries()[[n, l]].conj() * resid[n]).sum();
            prop_assert!(ip.norm() < 1e-8, "inner product {}", ip.norm());
        }
    }

    #[test]
    fn order_criterion_matches_independent_evaluation(g in cvec(25), sigma2 in 0.05..3.0f64) {
        let r = default_steering();
        let cands = [40usize, 90, 150];
        let res = bic_select(&g, &r, &cands, sigma2, &EstimationConfig::default()).unwrap();
        for p in 0..=3 {
            let fit = ls_reestimate(&g, &r, &cands[..p]).unwrap();
            let expect = fit.residual / sigma2 + 1.5 * p as f64 * 25f64.ln();
            prop_assert!((res.criteria[p] - expect).abs() <= 1e-9 * expect.abs().max(1.0));
            prop_assert_eq!(res.criteria[p], order_criterion(fit.residual, sigma2, p, 25, 1.5));
        }
    }

    #[test]
    fn inversion_is_phase_invariant(g in cvec(25), phi in 0.0..std::f64::consts::TAU) {
        let r = default_steering();
        let net = init_network(&r, NetworkConfig::default(), 0.5).unwrap();
        let est = EstimationConfig::default();
        let rot = Complex64::from_polar(1.0, phi);
        let g2: Vec<Complex64> = g.iter().map(|z| z * rot).collect();
        let a = estimate_from_profile(&g, &r, &net.forward(&g).unwrap(), 0.5, &est).unwrap();
        let b = estimate_from_profile(&g2, &r, &net.forward(&g2).unwrap(), 0.5, &est).unwrap();
        prop_assert_eq!(a.order, b.order);
        prop_assert_eq!(&a.elevations, &b.elevations);
        for (x, y) in a.amplitudes.iter().zip(&b.amplitudes) {
            prop_assert!((x * rot - y).norm() < 1e-8);
        }
    }

    #[test]
    fn crlb_scales_with_snr_and_baseline_count(snr in -5.0..20.0f64, n in 4usize..40) {
        let geo = AcquisitionGeometry::regular(n, -135.0, 135.0, 22680.0).unwrap();
        let scene = Scene::single(Scatterer::new(100.0, 2.0, 0.4));
        let at = |s: f64| crlb_elevation(&scene, &geo, s, SnrReference::TotalSignal).unwrap().elevation_std[0];
        // +10 dB shrinks the bound by sqrt(10)
        prop_assert!((at(snr) / at(snr + 10.0) - 10f64.sqrt()).abs() < 1e-9);
        // at a fixed SNR the bound times sqrt(N) times the baseline spread
        // is the same for any regular stack
        let other = AcquisitionGeometry::regular(4 * n, -135.0, 135.0, 22680.0).unwrap();
        let d = crlb_elevation(&scene, &other, snr, SnrReference::TotalSignal).unwrap().elevation_std[0];
        let k = |g: &AcquisitionGeometry, v: f64| v * (g.num_baselines() as f64).sqrt() * g.baseline_std();
        prop_assert!((k(&geo, at(snr)) / k(&other, d) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn fresh_soft_network_without_support_selection_is_ista() {
    use tomonet::simulation::{make_sample, DatasetConfig};
    let r = default_steering();
    let cfg = NetworkConfig {
        layers: 10,
        activation: Activation::Soft,
        support: SupportSchedule::Constant(0.0),
        input_scaling: false,
    };
    let net = init_network(&r, cfg, 0.7).unwrap();
    for i in 0..20 {
        let s = make_sample(&DatasetConfig { seed: 99, ..Default::default() }, &r, i).unwrap();
        let ista = tomonet::solvers::ista_iterations(&s.g, &r, 0.7, net.step_beta(), 10);
        assert!(max_diff(&net.forward(&s.g).unwrap(), &ista) < 1e-12);
    }
}
