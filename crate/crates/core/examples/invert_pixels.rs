//! Per-pixel inversion: profile, cleaning, least-squares refit and order
//! selection, with the network or a classical solver supplying profiles.

use tomonet::estimation::{invert_with, ClassicalMethod, ClassicalSource, EstimationConfig, ProfileSource};
use tomonet::geometry::{AcquisitionGeometry, ElevationGrid, SteeringMatrix};
use tomonet::network::NetworkConfig;
use tomonet::simulation::{make_dataset, DatasetConfig, DatasetKind};
use tomonet::training::init_from_data;

fn main() -> tomonet::Result<()> {
    let r = SteeringMatrix::build(&AcquisitionGeometry::default_stack(), &ElevationGrid::default_grid())?;
    let pixels = make_dataset(
        &DatasetConfig {
            kind: DatasetKind::Mixed,
            count: 8,
            fixed_snr_db: Some(10.0),
            alpha_levels: vec![1.2],
            seed: 5,
            ..Default::default()
        },
        &r,
    )?;
    let gs: Vec<_> = pixels.iter().map(|s| s.g.clone()).collect();
    let vars: Vec<f64> = pixels.iter().map(|s| s.noise_variance).collect();
    let est = EstimationConfig::default();

    // an untrained network is a truncated ISTA; see train_small for training
    let net = init_from_data(&r, NetworkConfig::default(), &pixels)?;
    let fista = ClassicalSource::new(r.clone(), ClassicalMethod::Fista { iters: 100 })?;
    let sources: [&dyn ProfileSource; 2] = [&net, &fista];
    for src in sources {
        println!("{}:", src.label());
        for (s, res) in pixels.iter().zip(invert_with(src, &r, &gs, &vars, &est)?) {
            let truth: Vec<f64> = s.scene.sorted().iter().map(|x| x.elevation).collect();
            println!("  truth {truth:?} -> order {} at {:?}", res.order, res.elevations);
        }
    }
    Ok(())
}
