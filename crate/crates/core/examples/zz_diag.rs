use std::collections::BTreeMap;
use tomonet::estimation::EstimationConfig;
use tomonet::evaluation::run_trials;
use tomonet::formats::read_checkpoint;
use tomonet::simulation::{DatasetConfig, DatasetKind};
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ck = read_checkpoint(std::path::Path::new(&args[1])).unwrap();
    let net = ck.network;
    let r = net.steering().clone();
    for snr in [0.0, 6.0, 10.0] {
        let data = DatasetConfig { kind: DatasetKind::Single, fixed_snr_db: Some(snr), seed: 77, ..Default::default() };
        let recs = run_trials(&net, &r, &data, 2000, &EstimationConfig::default()).unwrap();
        let mut orders = BTreeMap::new();
        let mut errs = BTreeMap::new();
        for rec in &recs {
            *orders.entry(rec.result.order).or_insert(0) += 1;
            if rec.result.order == 1 {
                let e = (rec.result.elevations[0] - rec.truth.scatterers[0].elevation).round() as i64;
                *errs.entry(e.clamp(-6, 6)).or_insert(0) += 1;
            }
        }
        println!("{snr} dB orders {orders:?} errs {errs:?}");
    }
}
