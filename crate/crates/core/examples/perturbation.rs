//! Detection with baselines perturbed on the test data only.

use tomonet::estimation::{ClassicalMethod, ClassicalSource, EstimationConfig};
use tomonet::evaluation::{perturbation_table, run_perturbation};
use tomonet::geometry::{AcquisitionGeometry, ElevationGrid, SteeringMatrix};

fn main() -> tomonet::Result<()> {
    let r = SteeringMatrix::build(&AcquisitionGeometry::default_stack(), &ElevationGrid::default_grid())?;
    let src = ClassicalSource::new(r, ClassicalMethod::Fista { iters: 100 })?;
    let rep = run_perturbation(&src, 10.0, 6.0, 400, 3, &EstimationConfig::default())?;
    print!("{}", perturbation_table(&rep).render("# fista-100, +-10 m uniform offsets"));
    println!("\nperturbed baselines: {:.1?}", rep.perturbed_geometry.baselines());
    println!("rate drop: {:.1} points", rep.rate_drop_points());
    Ok(())
}
