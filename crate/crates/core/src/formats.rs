//! On-disk formats: datasets, checkpoints and result tables.
//!
//! Datasets are binary: the magic `TNDS`, a little-endian header
//! `(version u32, N u32, L u32, count u64, λr f64, grid min/max/spacing f64,
//! N baselines f64)` and then `count` fixed-size records of little-endian
//! `f64`s:
//!
//! ```text
//! snr_db, noise_variance, P, (elevation, amplitude, phase) × 2, (Re g_n, Im g_n) × N
//! ```
//!
//! Unused scatterer slots are zero. A text sidecar `<file>.manifest` records
//! provenance.
//!
//! Checkpoints start with `key value` text lines ending at `end_header`,
//! followed by little-endian `f64` blocks per layer: `W_re` (L×N, row-major),
//! `W_im`, thresholds. When `moments yes`, the Adam first-moment blocks and
//! then the second-moment blocks follow in the same layout.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;

use crate::geometry::{AcquisitionGeometry, ElevationGrid, SteeringMatrix};
use crate::network::{Activation, LayerParams, Network, NetworkConfig, SupportSchedule};
use crate::simulation::{LabeledSample, Scatterer, Scene};
use crate::training::OptimizerState;
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"TNDS";
pub const DATASET_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &str = "tomonet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn put_f64s(w: &mut impl Write, values: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, out: &mut [f64]) -> std::io::Result<()> {
    let mut buf = [0u8; 8];
    for v in out.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Geometry and grid a dataset was generated with.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub geometry: AcquisitionGeometry,
    pub grid: ElevationGrid,
    pub count: usize,
}

impl DatasetHeader {
    /// Error unless the dataset matches the given acquisition setup.
    pub fn check_matches(&self, geometry: &AcquisitionGeometry, grid: &ElevationGrid, path: &Path) -> Result<()> {
        if self.geometry != *geometry || self.grid != *grid {
            return Err(format_err(
                path,
                format!(
                    "dataset geometry ({} baselines, {} grid nodes) does not match the configured one ({} baselines, {} grid nodes)",
                    self.geometry.num_baselines(),
                    self.grid.len(),
                    geometry.num_baselines(),
                    grid.len()
                ),
            ));
        }
        Ok(())
    }
}

const RECORD_FIXED: usize = 3 + 6;

/// Write a dataset and its `.manifest` sidecar.
pub fn write_dataset(path: &Path, samples: &[LabeledSample], steering: &SteeringMatrix, manifest: &str) -> Result<()> {
    let geometry = steering.geometry();
    let grid = steering.grid();
    let n = geometry.num_baselines();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(grid.len() as u32).to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    put_f64s(&mut w, [geometry.lambda_range(), grid.s_min(), grid.s_max(), grid.spacing()])?;
    put_f64s(&mut w, geometry.baselines().iter().copied())?;
    for s in samples {
        if s.g.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: s.g.len(),
            });
        }
        if s.scene.len() > 2 {
            return Err(format_err(path, "records hold at most two scatterers"));
        }
        let mut rec = vec![0.0; RECORD_FIXED + 2 * n];
        rec[0] = s.snr_db;
        rec[1] = s.noise_variance;
        rec[2] = s.scene.len() as f64;
        for (k, sc) in s.scene.scatterers.iter().enumerate() {
            rec[3 + 3 * k] = sc.elevation;
            rec[4 + 3 * k] = sc.amplitude;
            rec[5 + 3 * k] = sc.phase;
        }
        for (i, z) in s.g.iter().enumerate() {
            rec[RECORD_FIXED + 2 * i] = z.re;
            rec[RECORD_FIXED + 2 * i + 1] = z.im;
        }
        put_f64s(&mut w, rec)?;
    }
    w.flush()?;
    std::fs::write(manifest_path(path), manifest)?;
    Ok(())
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".manifest");
    PathBuf::from(p)
}

/// Read a dataset file.
pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<LabeledSample>)> {
    let mut r = BufReader::new(File::open(path)?);
    let io = |e: std::io::Error| format_err(path, format!("truncated or unreadable: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != DATASET_MAGIC {
        return Err(format_err(path, "not a tomonet dataset (bad magic)"));
    }
    let version = read_u32(&mut r).map_err(io)?;
    if version != DATASET_VERSION {
        return Err(format_err(path, format!("unsupported dataset version {version}")));
    }
    let n = read_u32(&mut r).map_err(io)? as usize;
    let l = read_u32(&mut r).map_err(io)? as usize;
    let count = read_u64(&mut r).map_err(io)? as usize;
    let mut head = [0.0; 4];
    read_f64s(&mut r, &mut head).map_err(io)?;
    let mut baselines = vec![0.0; n];
    read_f64s(&mut r, &mut baselines).map_err(io)?;
    let geometry = AcquisitionGeometry::new(baselines, head[0])?;
    let grid = ElevationGrid::new(head[1], head[2], head[3])?;
    if grid.len() != l {
        return Err(format_err(path, format!("header grid has {} nodes, L = {l}", grid.len())));
    }
    let mut samples = Vec::with_capacity(count.min(1 << 24));
    let mut rec = vec![0.0; RECORD_FIXED + 2 * n];
    for _ in 0..count {
        read_f64s(&mut r, &mut rec).map_err(io)?;
        let p = rec[2] as usize;
        if p > 2 || rec[2] != p as f64 {
            return Err(format_err(path, format!("invalid scatterer count {}", rec[2])));
        }
        let scene = Scene {
            scatterers: (0..p)
                .map(|k| Scatterer::new(rec[3 + 3 * k], rec[4 + 3 * k], rec[5 + 3 * k]))
                .collect(),
        };
        let mut support = Vec::with_capacity(p);
        for s in &scene.scatterers {
            let idx = grid.index_of(s.elevation).ok_or(Error::OffGrid { elevation: s.elevation })?;
            support.push((idx, s.reflectivity()));
        }
        let g = (0..n)
            .map(|i| Complex64::new(rec[RECORD_FIXED + 2 * i], rec[RECORD_FIXED + 2 * i + 1]))
            .collect();
        samples.push(LabeledSample {
            g,
            scene,
            snr_db: rec[0],
            noise_variance: rec[1],
            support,
        });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(format_err(path, "trailing bytes after the last record"));
    }
    Ok((DatasetHeader { geometry, grid, count }, samples))
}

/// Measurements to invert: a dataset file or a plain table of
/// `re_1,im_1,…,re_N,im_N[,noise_variance]` rows.
pub fn read_measurement_table(path: &Path, n: usize) -> Result<Vec<(Vec<Complex64>, Option<f64>)>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        let vals: Vec<f64> = t
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(path, format!("line {}: {e}", lineno + 1)))?;
        let sigma = match vals.len() {
            x if x == 2 * n => None,
            x if x == 2 * n + 1 => Some(vals[2 * n]),
            x => {
                return Err(format_err(
                    path,
                    format!("line {}: expected {} or {} values for N = {n}, found {x}", lineno + 1, 2 * n, 2 * n + 1),
                ))
            }
        };
        let g = (0..n).map(|i| Complex64::new(vals[2 * i], vals[2 * i + 1])).collect();
        out.push((g, sigma));
    }
    Ok(out)
}

/// A network plus optional optimizer state and provenance.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network,
    pub optimizer: Option<OptimizerState>,
    pub epoch: usize,
    pub val_nmse: f64,
    pub config_hash: String,
    pub seed: u64,
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn layer_blocks(layers: &[LayerParams]) -> impl Iterator<Item = f64> + '_ {
    layers.iter().flat_map(|p| {
        p.w_re
            .iter()
            .copied()
            .chain(p.w_im.iter().copied())
            .chain(p.thresholds.iter().copied())
    })
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let net = &ck.network;
    let cfg = net.config();
    let geo = net.steering().geometry();
    let grid = net.steering().grid();
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = vec![
        format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}"),
        format!("tool_version {}", env!("CARGO_PKG_VERSION")),
        format!("config {}", ck.config_hash),
        format!("seed {}", ck.seed),
        format!("n {}", geo.num_baselines()),
        format!("l {}", grid.len()),
        format!("k {}", net.num_layers()),
        format!("activation {}", cfg.activation.name()),
        format!("support {}", cfg.support),
        format!("input_scaling {}", cfg.input_scaling),
        format!("lambda_range {}", geo.lambda_range()),
        format!("baselines {}", join(geo.baselines())),
        format!("grid {},{},{}", grid.s_min(), grid.s_max(), grid.spacing()),
        format!("step_beta {}", net.step_beta()),
        format!("init_lambda {}", net.init_lambda()),
        format!("epoch {}", ck.epoch),
        format!("val_nmse {}", ck.val_nmse),
    ];
    match &ck.optimizer {
        Some(st) => header.extend([
            "moments yes".to_string(),
            format!("adam_step {}", st.step),
            format!("learning_rate {}", st.learning_rate),
            format!("weight_lr_scale {}", st.weight_lr_scale),
            format!("beta1 {}", st.beta1),
            format!("beta2 {}", st.beta2),
            format!("eps {}", st.eps),
        ]),
        None => header.push("moments no".to_string()),
    }
    header.push("end_header".to_string());
    for line in header {
        writeln!(w, "{line}")?;
    }
    put_f64s(&mut w, layer_blocks(&net.layers))?;
    if let Some(st) = &ck.optimizer {
        put_f64s(&mut w, layer_blocks(&st.first_moment))?;
        put_f64s(&mut w, layer_blocks(&st.second_moment))?;
    }
    w.flush()?;
    Ok(())
}

fn read_layers(r: &mut impl Read, k: usize, n: usize, l: usize, t: usize) -> std::io::Result<Vec<LayerParams>> {
    (0..k)
        .map(|_| {
            let mut re = vec![0.0; l * n];
            let mut im = vec![0.0; l * n];
            let mut th = vec![0.0; t];
            read_f64s(r, &mut re)?;
            read_f64s(r, &mut im)?;
            read_f64s(r, &mut th)?;
            Ok(LayerParams {
                w_re: Array2::from_shape_vec((l, n), re).expect("shape"),
                w_im: Array2::from_shape_vec((l, n), im).expect("shape"),
                thresholds: th,
            })
        })
        .collect()
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let mut fields = std::collections::HashMap::new();
    let mut first = true;
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(format_err(path, "missing end_header"));
        }
        let line = line.trim_end_matches('\n');
        if first {
            let expected = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
            if line != expected {
                return Err(format_err(path, format!("expected '{expected}', found '{line}'")));
            }
            first = false;
            continue;
        }
        if line == "end_header" {
            break;
        }
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| format_err(path, format!("malformed header line '{line}'")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| -> Result<&str> {
        fields
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| format_err(path, format!("header lacks '{k}'")))
    };
    fn num<T: std::str::FromStr>(path: &Path, k: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| format_err(path, format!("bad value '{v}' for '{k}'")))
    }
    let list = |k: &str| -> Result<Vec<f64>> { get(k)?.split(',').map(|v| num(path, k, v)).collect() };
    let n: usize = num(path, "n", get("n")?)?;
    let l: usize = num(path, "l", get("l")?)?;
    let k: usize = num(path, "k", get("k")?)?;
    let activation: Activation = get("activation")?.parse()?;
    let support: SupportSchedule = get("support")?.parse()?;
    let input_scaling: bool = num(path, "input_scaling", get("input_scaling")?)?;
    let baselines = list("baselines")?;
    let grid = list("grid")?;
    if baselines.len() != n || grid.len() != 3 {
        return Err(format_err(path, "baseline or grid entry has the wrong length"));
    }
    let geometry = AcquisitionGeometry::new(baselines, num(path, "lambda_range", get("lambda_range")?)?)?;
    let grid = ElevationGrid::new(grid[0], grid[1], grid[2])?;
    if grid.len() != l {
        return Err(format_err(path, format!("grid has {} nodes but l = {l}", grid.len())));
    }
    let steering = SteeringMatrix::build(&geometry, &grid)?;
    let io = |e: std::io::Error| format_err(path, format!("truncated parameter block: {e}"));
    let t = activation.num_thresholds();
    let layers = read_layers(&mut r, k, n, l, t).map_err(io)?;
    let optimizer = match get("moments")? {
        "yes" => {
            let first_moment = read_layers(&mut r, k, n, l, t).map_err(io)?;
            let second_moment = read_layers(&mut r, k, n, l, t).map_err(io)?;
            Some(OptimizerState {
                first_moment,
                second_moment,
                step: num(path, "adam_step", get("adam_step")?)?,
                learning_rate: num(path, "learning_rate", get("learning_rate")?)?,
                weight_lr_scale: num(path, "weight_lr_scale", get("weight_lr_scale")?)?,
                beta1: num(path, "beta1", get("beta1")?)?,
                beta2: num(path, "beta2", get("beta2")?)?,
                eps: num(path, "eps", get("eps")?)?,
            })
        }
        "no" => None,
        other => return Err(format_err(path, format!("bad moments flag '{other}'"))),
    };
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(format_err(path, "trailing bytes after parameter blocks"));
    }
    let config = NetworkConfig {
        layers: k,
        activation,
        support,
        input_scaling,
    };
    let network = Network::from_parts(
        steering,
        config,
        layers,
        num(path, "step_beta", get("step_beta")?)?,
        num(path, "init_lambda", get("init_lambda")?)?,
    )?;
    Ok(Checkpoint {
        network,
        optimizer,
        epoch: num(path, "epoch", get("epoch")?)?,
        val_nmse: num(path, "val_nmse", get("val_nmse")?)?,
        config_hash: get("config")?.to_string(),
        seed: num(path, "seed", get("seed")?)?,
    })
}

/// A comma-delimited table with a provenance comment and a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, provenance: &str) -> String {
        let mut out = String::new();
        out.push_str(provenance);
        out.push('\n');
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path, provenance: &str) -> Result<()> {
        std::fs::write(path, self.render(provenance))?;
        Ok(())
    }
}
