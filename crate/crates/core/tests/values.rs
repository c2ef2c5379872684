//! Published values and hand-derivable quantities, each against an oracle
//! computed independently of the library path.

use nalgebra::DMatrix;
use num_complex::Complex64;

use tomonet::estimation::{
    bic_select, crlb_elevation, crlb_single_closed_form, estimate_from_profile, ls_reestimate, EstimationConfig,
};
use tomonet::evaluation::{binomial_std_error, perturb_baselines};
use tomonet::geometry::{AcquisitionGeometry, ElevationGrid, SteeringMatrix};
use tomonet::network::{selected_count, NetworkConfig, SupportSchedule};
use tomonet::simulation::{db_to_linear, scene_to_profile, Scatterer, Scene, SnrReference};
use tomonet::solvers::{fista_solve, ista_solve, lasso_objective, lipschitz_step, ridge_baseline, SolverConfig};

fn default_r() -> SteeringMatrix {
    SteeringMatrix::build(&AcquisitionGeometry::default_stack(), &ElevationGrid::default_grid()).unwrap()
}

#[test]
fn steering_entry_at_half_cycle_is_minus_one() {
    // ξ = -2(-135)/22680, ξ·42 = 0.5, so exp(-j2π·0.5) = -1
    let geo = AcquisitionGeometry::new(vec![-135.0, 135.0], 22680.0).unwrap();
    let r = SteeringMatrix::build(&geo, &ElevationGrid::new(0.0, 42.0, 42.0).unwrap()).unwrap();
    let z = r.entries()[[0, 1]];
    assert!((z - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn rayleigh_resolution_of_published_stacks() {
    // about 42 m for the 25-baseline stack, about 12 m for the six-baseline one
    let main = AcquisitionGeometry::default_stack();
    assert_eq!(main.num_baselines(), 25);
    assert!((main.rayleigh_resolution() - 42.0).abs() < 1e-9);
    let six = AcquisitionGeometry::six_baseline_stack();
    assert_eq!(six.num_baselines(), 6);
    assert_eq!(six.baselines()[0], -565.5);
    assert!((six.baselines()[5] - 373.2).abs() < 1e-9);
    assert!((six.rayleigh_resolution() - 12.08).abs() < 0.01);
}

#[test]
fn baseline_spread_matches_regular_grid_formula() {
    // n regular points with spacing d have population std d·sqrt((n²-1)/12)
    let d = 270.0 / 24.0;
    let oracle = d * ((25.0f64 * 25.0 - 1.0) / 12.0).sqrt();
    assert!((AcquisitionGeometry::default_stack().baseline_std() - oracle).abs() < 1e-9);
    assert!((oracle - 81.12).abs() < 0.01);
}

#[test]
fn step_size_matches_top_singular_value() {
    let r = default_r();
    let m = DMatrix::from_fn(r.rows(), r.cols(), |i, j| r.entries()[[i, j]]);
    // squared top singular value of R equals the top eigenvalue of R R^H
    let top = m.singular_values().iter().copied().fold(0.0, f64::max).powi(2);
    let beta = lipschitz_step(&r).unwrap();
    let rel = (beta * 2.0 * top - 1.0).abs();
    assert!(rel < 1e-8, "relative error {rel}");
    // the 200 m window covers a fifth of the 1008 m ambiguity height, so the
    // top eigenvalue is far below N·L
    assert!(top < 0.25 * 25.0 * 201.0 && top > 201.0, "{top}");
}

#[test]
fn single_scatterer_crlb_reproduces_published_table() {
    let geo = AcquisitionGeometry::default_stack();
    let scene = Scene::single(Scatterer::new(100.0, 1.0, 0.0));
    for (snr, printed) in [(0.0, 7.0), (3.0, 5.0), (6.0, 3.0), (10.0, 2.0)] {
        let b = crlb_elevation(&scene, &geo, snr, SnrReference::TotalSignal).unwrap();
        let hundredths = 100.0 * b.normalized[0];
        assert!((hundredths - printed).abs() <= 1.0, "{snr} dB: {hundredths}");
        // closed form from the textbook single-tone bound
        let snr_lin = db_to_linear(snr);
        let n = 25.0;
        let sigma_b = geo.baseline_std();
        let oracle = 22680.0 / (4.0 * std::f64::consts::PI * sigma_b * (2.0 * n * snr_lin).sqrt());
        assert!((crlb_single_closed_form(&geo, snr_lin) - oracle).abs() < 1e-12 * oracle);
        assert!((b.elevation_std[0] - oracle).abs() < 0.01 * oracle);
    }
}

#[test]
fn perturbation_spread_is_seven_percent_of_baseline_std() {
    // U(-10, 10) has std 10/sqrt(3)
    let oracle = 10.0 / 3f64.sqrt();
    assert!((oracle - 5.77).abs() < 0.01);
    let rel = oracle / AcquisitionGeometry::default_stack().baseline_std();
    assert!((rel - 0.0712).abs() < 1e-3);
    let g = AcquisitionGeometry::default_stack();
    let offsets: Vec<f64> = (0..400)
        .flat_map(|seed| {
            let p = perturb_baselines(&g, 10.0, seed).unwrap();
            p.baselines().iter().zip(g.baselines()).map(|(a, b)| a - b).collect::<Vec<_>>()
        })
        .collect();
    let var = offsets.iter().map(|o| o * o).sum::<f64>() / offsets.len() as f64;
    assert!((var.sqrt() - oracle).abs() < 0.1, "{}", var.sqrt());
}

#[test]
fn default_support_fraction_is_five_percent() {
    let cfg = NetworkConfig::default();
    for i in 1..=20 {
        assert_eq!(cfg.support.fraction(i), 0.05);
    }
    assert_eq!(selected_count(0.05, 201), 11);
    let ramp = SupportSchedule::Linear { p: 0.012, p_max: 0.05 };
    let f: Vec<f64> = (1..=12).map(|i| ramp.fraction(i)).collect();
    assert!(f.windows(2).all(|w| w[1] >= w[0]) && f.iter().all(|&x| x <= 0.05));
}

#[test]
fn noiseless_single_is_recovered_on_its_node() {
    let r = default_r();
    let scene = Scene::single(Scatterer::new(73.0, 2.0, 0.7));
    let gamma = scene_to_profile(&scene, r.grid()).unwrap();
    let g = r.apply(&gamma);
    let cfg = SolverConfig {
        max_iters: 20_000,
        tol: 1e-12,
        ..SolverConfig::new(0.05, lipschitz_step(&r).unwrap())
    };
    let (x, _) = fista_solve(&g, &r, &cfg).unwrap();
    let peak = (0..x.len()).max_by(|&a, &b| x[a].norm().total_cmp(&x[b].norm())).unwrap();
    assert_eq!(peak, 73);
    let res = estimate_from_profile(&g, &r, &x, 1e-4, &EstimationConfig::default()).unwrap();
    assert_eq!(res.order, 1);
    assert_eq!(res.elevations, vec![73.0]);
}

#[test]
fn fista_reaches_ista_500_objective_within_100_iterations() {
    let r = default_r();
    let scene = Scene::double(Scatterer::new(60.0, 1.0, 0.0), Scatterer::new(95.0, 0.8, 1.0)).unwrap();
    let g = tomonet::simulation::simulate_measurement(&scene_to_profile(&scene, r.grid()).unwrap(), &r, 6.0, 4).unwrap();
    let base = SolverConfig::new(1.0, lipschitz_step(&r).unwrap());
    let (xi, _) = ista_solve(&g, &r, &SolverConfig { max_iters: 500, tol: 0.0, ..base }).unwrap();
    let (xf, _) = fista_solve(&g, &r, &SolverConfig { max_iters: 100, tol: 0.0, ..base }).unwrap();
    assert!(lasso_objective(&xf, &g, &r, 1.0) <= lasso_objective(&xi, &g, &r, 1.0) + 1e-9);
}

#[test]
fn ridge_shows_sidelobes_around_the_true_peak() {
    let r = default_r();
    let g = r.apply(&scene_to_profile(&Scene::single(Scatterer::new(100.0, 1.0, 0.0)), r.grid()).unwrap());
    let x = ridge_baseline(&g, &r, 1e-3).unwrap();
    let mag: Vec<f64> = x.iter().map(|z| z.norm()).collect();
    let peak = (0..mag.len()).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
    assert_eq!(peak, 100);
    let local_maxima = (1..mag.len() - 1).filter(|&l| mag[l] > mag[l - 1] && mag[l] > mag[l + 1]).count();
    assert!(local_maxima >= 3, "{local_maxima}");
}

#[test]
fn adding_a_column_never_increases_the_residual() {
    let r = default_r();
    let g = tomonet::simulation::simulate_measurement(
        &scene_to_profile(&Scene::single(Scatterer::new(30.0, 1.0, 0.0)), r.grid()).unwrap(),
        &r,
        3.0,
        8,
    )
    .unwrap();
    let mut support = Vec::new();
    let mut last = f64::INFINITY;
    for l in [30, 75, 140, 10, 199] {
        support.push(l);
        let fit = ls_reestimate(&g, &r, &support).unwrap();
        assert!(fit.residual <= last + 1e-12);
        last = fit.residual;
    }
}

#[test]
fn exact_single_support_selects_order_one() {
    let r = default_r();
    let g = r.apply(&scene_to_profile(&Scene::single(Scatterer::new(120.0, 1.5, 2.0)), r.grid()).unwrap());
    let res = bic_select(&g, &r, &[120, 60, 170], 0.01, &EstimationConfig::default()).unwrap();
    assert_eq!(res.order, 1);
    assert_eq!(res.indices, vec![120]);
}

#[test]
fn binomial_error_formula() {
    let se = binomial_std_error(0.95, 20_000);
    assert!((se - (0.95f64 * 0.05 / 20_000.0).sqrt()).abs() < 1e-15);
}
