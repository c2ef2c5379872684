//! Monte Carlo detection rates for a classical source at a few hundred
//! trials per point. Swap in a trained network (any `ProfileSource`) to
//! reproduce the full tables; the `tomonet evaluate` command does this.

use tomonet::estimation::{ClassicalMethod, ClassicalSource};
use tomonet::evaluation::{
    curve_table, false_detection_table, run_double_curve, run_false_detection, run_single_suite, single_table,
    EvaluationConfig,
};
use tomonet::geometry::{AcquisitionGeometry, ElevationGrid, SteeringMatrix};

fn main() -> tomonet::Result<()> {
    let trials: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let r = SteeringMatrix::build(&AcquisitionGeometry::default_stack(), &ElevationGrid::default_grid())?;
    let src = ClassicalSource::new(r.clone(), ClassicalMethod::Fista { iters: 100 })?;
    let ev = EvaluationConfig::default();
    let est = &ev.estimation;
    let provenance = format!("# fista-100, {trials} trials per point");

    print!("{}", single_table(&run_single_suite(&src, &r, &ev.single_snrs, trials, 1, est)?).render(&provenance));
    println!();
    let curve = run_double_curve(&src, &r, 6.0, &[0.4, 0.8, 1.2], 0.0, 1.0, trials, 1, est)?;
    print!("{}", curve_table("alpha", &curve).render(&provenance));
    println!();
    print!("{}", false_detection_table(&run_false_detection(&src, &r, None, trials, 1, est)?).render(&provenance));
    Ok(())
}
