//! Analytic gradients against central finite differences on a small net.

use tomonet::network::Activation;
use tomonet::training::{grad_check, grad_check_fixture, GradCheckConfig, ParamBlock};

fn main() -> tomonet::Result<()> {
    for act in [Activation::Soft, Activation::Piecewise] {
        let (net, batch) = grad_check_fixture(act, 0)?;
        let report = grad_check(&net, &batch, &GradCheckConfig::default())?;
        println!("{}: max relative error {:.2e}, {} kink probes skipped", act.name(), report.max_rel_error(), report.excluded());
        for b in &report.blocks {
            println!("  layer {} {:5} {:.2e} over {} probes", b.layer, b.block.name(), b.max_rel_error, b.probes);
        }
    }
    // a deliberately wrong gradient is caught
    let (net, batch) = grad_check_fixture(Activation::Piecewise, 0)?;
    let bad = grad_check(
        &net,
        &batch,
        &GradCheckConfig {
            corrupt: Some((1, ParamBlock::Thresholds, 1.1)),
            ..Default::default()
        },
    )?;
    println!("corrupted thresholds in layer 1: max relative error {:.2e}", bad.max_rel_error());
    Ok(())
}
