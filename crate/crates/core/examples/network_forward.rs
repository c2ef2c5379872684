//! A freshly initialized network is ISTA; support selection and the
//! piecewise shrinkage are what training builds on.

use tomonet::geometry::{AcquisitionGeometry, ElevationGrid, SteeringMatrix};
use tomonet::network::{init_network, piecewise_magnitude, Activation, NetworkConfig, SupportSchedule};
use tomonet::simulation::{make_sample, DatasetConfig};
use tomonet::solvers::ista_iterations;

fn main() -> tomonet::Result<()> {
    let r = SteeringMatrix::build(&AcquisitionGeometry::default_stack(), &ElevationGrid::default_grid())?;
    let sample = make_sample(&DatasetConfig { seed: 3, ..Default::default() }, &r, 1)?;
    let lambda = 0.5;

    let plain = NetworkConfig {
        layers: 12,
        activation: Activation::Soft,
        support: SupportSchedule::Constant(0.0),
        input_scaling: false,
    };
    let net = init_network(&r, plain, lambda)?;
    let ista = ista_iterations(&sample.g, &r, lambda, net.step_beta(), 12);
    let out = net.forward(&sample.g)?;
    let diff = out.iter().zip(&ista).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    println!("soft net, no support selection, K = 12: max |net - ISTA| = {diff:.2e}");
    println!("parameters: {}", net.parameter_count());

    let full = init_network(&r, NetworkConfig::default(), lambda)?;
    let trace = full.forward_trace(&sample.g)?;
    println!("\ndefault net (piecewise, 5% support selection), per-layer output energy:");
    for (k, x) in trace.iter().enumerate().skip(1) {
        println!("  layer {k:2}: {:.4}", x.iter().map(|z| z.norm_sqr()).sum::<f64>());
    }

    let theta = &full.layers[0].thresholds;
    println!("\npiecewise shrinkage with knots {:.3?}:", &theta[..2]);
    for r in [0.0, 0.5 * theta[0], theta[0], 0.5 * (theta[0] + theta[1]), theta[1], 2.0 * theta[1]] {
        println!("  |x| = {r:.4} -> {:.4}", piecewise_magnitude(r, theta));
    }
    Ok(())
}
