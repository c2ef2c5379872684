//! Run configuration, dataset files and provenance.

use tomonet::config::{provenance_line, RunConfig};
use tomonet::formats::{manifest_path, read_dataset, write_dataset};
use tomonet::geometry::SteeringMatrix;
use tomonet::simulation::make_dataset;

fn main() -> tomonet::Result<()> {
    let cfg = RunConfig::parse_str(
        "# six-baseline stack, small splits\n\
         seed = 9\n\
         geometry.preset = six-baseline\n\
         dataset.train_count = 500\n",
    )?;
    println!("config hash {}", cfg.hash());
    println!("{}", cfg.canonical().lines().filter(|l| l.starts_with("geometry")).collect::<Vec<_>>().join("\n"));

    let r = SteeringMatrix::build(&cfg.geometry, &cfg.grid)?;
    let split = cfg.dataset.train(cfg.seed);
    let samples = make_dataset(&split, &r)?;
    let dir = tempdir()?;
    let path = dir.join("train.tnds");
    write_dataset(&path, &samples, &r, &provenance_line(&cfg.hash(), cfg.seed))?;
    let (header, back) = read_dataset(&path)?;
    println!(
        "\n{}: N = {}, L = {}, {} records, identical: {}",
        path.display(),
        header.geometry.num_baselines(),
        header.grid.len(),
        header.count,
        back == samples
    );
    println!("manifest: {}", std::fs::read_to_string(manifest_path(&path))?.trim());
    Ok(())
}

fn tempdir() -> std::io::Result<std::path::PathBuf> {
    let d = std::env::temp_dir().join(format!("tomonet-example-{}", std::process::id()));
    std::fs::create_dir_all(&d)?;
    Ok(d)
}
