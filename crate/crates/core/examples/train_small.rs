//! Train a small network end to end and save a checkpoint.
//!
//! `cargo run --release --example train_small -- [samples] [epochs]`

use std::path::Path;

use tomonet::formats::{read_checkpoint, write_checkpoint, Checkpoint};
use tomonet::geometry::{AcquisitionGeometry, ElevationGrid, SteeringMatrix};
use tomonet::network::NetworkConfig;
use tomonet::simulation::{make_dataset, DatasetConfig};
use tomonet::training::{init_from_data, train, validation_nmse, TrainConfig};

fn main() -> tomonet::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(4000);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);

    let r = SteeringMatrix::build(&AcquisitionGeometry::default_stack(), &ElevationGrid::default_grid())?;
    let train_set = make_dataset(&DatasetConfig { count, seed: 1, ..Default::default() }, &r)?;
    let val = make_dataset(
        &DatasetConfig {
            count: count / 10,
            seed: 2,
            noise_free: true,
            ..Default::default()
        },
        &r,
    )?;
    let net = init_from_data(&r, NetworkConfig { layers: 8, ..Default::default() }, &train_set)?;
    println!("initial val NMSE {:.4}", validation_nmse(&net, &val)?);

    let cfg = TrainConfig {
        epochs,
        batch_size: 128,
        ..Default::default()
    };
    let out = train(net, &train_set, &val, &cfg, None, &mut |rec, _, _| {
        println!(
            "epoch {:3}  train MSE {:.4}  val NMSE {:.4}  lr {:.1e}{}",
            rec.epoch,
            rec.train_mse,
            rec.val_nmse,
            rec.learning_rate,
            if rec.is_best { "  *" } else { "" }
        );
        Ok(())
    })?;

    let path = std::env::temp_dir().join("tomonet-train-small.ckpt");
    let best = out.history.iter().map(|h| h.val_nmse).fold(f64::INFINITY, f64::min);
    write_checkpoint(
        &path,
        &Checkpoint {
            network: out.best,
            optimizer: Some(out.state),
            epoch: out.history.len(),
            val_nmse: best,
            config_hash: "example".into(),
            seed: 1,
        },
    )?;
    let back = read_checkpoint(Path::new(&path))?;
    println!("saved {} (K = {}, val NMSE {:.4})", path.display(), back.network.num_layers(), back.val_nmse);
    Ok(())
}
