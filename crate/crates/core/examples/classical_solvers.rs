//! ISTA, FISTA and ridge on one noisy double-scatterer pixel.

use std::time::Instant;

use tomonet::geometry::{AcquisitionGeometry, ElevationGrid, SteeringMatrix};
use tomonet::simulation::{noise_variance, scene_to_profile, simulate_measurement, Scatterer, Scene, SnrReference};
use tomonet::solvers::{fista_solve, ista_solve, lasso_kkt_residual, lasso_objective, ridge_baseline, SolverConfig};

fn main() -> tomonet::Result<()> {
    let r = SteeringMatrix::build(&AcquisitionGeometry::default_stack(), &ElevationGrid::default_grid())?;
    let scene = Scene::double(Scatterer::new(70.0, 1.0, 0.3), Scatterer::new(112.0, 1.0, 2.0))?;
    let snr = 10.0;
    let g = simulate_measurement(&scene_to_profile(&scene, r.grid())?, &r, snr, 7)?;
    let sigma2 = noise_variance(&scene, snr, SnrReference::TotalSignal)?;
    let cfg = SolverConfig {
        max_iters: 5000,
        tol: 1e-9,
        ..SolverConfig::for_noise(&r, sigma2)?
    };
    println!("lambda {:.4}, step {:.3e}", cfg.reg_lambda, cfg.step_beta);

    for (name, solve) in [("ista", ista_solve as fn(_, _, _) -> _), ("fista", fista_solve)] {
        let t = Instant::now();
        let (x, trace) = solve(&g, &r, &cfg)?;
        let top = strongest(&x, 2).iter().map(|&l| r.grid().position(l)).collect::<Vec<_>>();
        println!(
            "{name:>5}: {:5} iterations, converged {}, objective {:.5}, KKT {:.1e}, peaks {:?} m, {:.1} ms",
            trace.iterations,
            trace.converged,
            lasso_objective(&x, &g, &r, cfg.reg_lambda),
            lasso_kkt_residual(&x, &g, &r, cfg.reg_lambda),
            top,
            t.elapsed().as_secs_f64() * 1e3
        );
    }
    let x = ridge_baseline(&g, &r, r.cols() as f64 * sigma2)?;
    println!("ridge: peaks {:?} m", strongest(&x, 2).iter().map(|&l| r.grid().position(l)).collect::<Vec<_>>());
    Ok(())
}

fn strongest(x: &[num_complex::Complex64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].norm().total_cmp(&x[a].norm()));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}
