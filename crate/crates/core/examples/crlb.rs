//! Elevation Cramér–Rao bounds for single and double scatterers.

use tomonet::estimation::{crlb_elevation, crlb_single_closed_form};
use tomonet::geometry::AcquisitionGeometry;
use tomonet::simulation::{db_to_linear, Scatterer, Scene, SnrReference};

fn main() -> tomonet::Result<()> {
    let geo = AcquisitionGeometry::default_stack();
    let rho = geo.rayleigh_resolution();
    println!("single scatterer, bound / Rayleigh resolution");
    println!("snr_db  closed_form  numerical");
    for snr in [0.0, 3.0, 6.0, 10.0] {
        let closed = crlb_single_closed_form(&geo, db_to_linear(snr)) / rho;
        let num = crlb_elevation(&Scene::single(Scatterer::new(100.0, 1.0, 0.0)), &geo, snr, SnrReference::TotalSignal)?;
        println!("{snr:6}  {closed:11.4}  {:9.4}", num.normalized[0]);
    }

    println!("\nequal-amplitude pair at 6 dB, bound on each elevation / Rayleigh resolution");
    for alpha in [0.2, 0.4, 0.6, 0.8, 1.0, 1.2] {
        let d = alpha * rho;
        let scene = Scene::double(Scatterer::new(80.0, 1.0, 0.0), Scatterer::new(80.0 + d, 1.0, 0.0))?;
        let b = crlb_elevation(&scene, &geo, 6.0, SnrReference::TotalSignal)?;
        println!("alpha {alpha:.1}: {:.4} {:.4}", b.normalized[0], b.normalized[1]);
    }
    Ok(())
}
