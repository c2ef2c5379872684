//! Command-line front end shared by the `tomonet` binary and the tests.
//!
//! [`run`] parses the arguments, executes one subcommand inside a rayon pool
//! capped by `--threads`, and returns the process exit status: 0 on success,
//! 1 for usage, configuration and I/O problems, 2 for numerical failures.

use std::ffi::OsString;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use crate::config::{provenance_line, RunConfig};
use crate::estimation::{crlb_elevation, crlb_single_closed_form, invert_with, ClassicalMethod, ClassicalSource, ProfileSource};
use crate::evaluation::{
    curve_table, false_detection_table, perturbation_table, run_amplitude_ratio, run_double_curve, run_false_detection,
    run_perturbation, run_phase_sweep, run_single_suite, runtime_benchmark, runtime_table, single_table,
};
use crate::formats::{
    read_checkpoint, read_dataset, read_measurement_table, write_checkpoint, write_dataset, Checkpoint, Table,
};
use crate::geometry::SteeringMatrix;
use crate::network::{Activation, Network};
use crate::simulation::{db_to_linear, make_dataset, Scatterer, Scene, SnrReference};
use crate::training::{
    grad_check, grad_check_fixture, init_from_data, train, validation_nmse, GradCheckConfig, OptimizerState, ParamBlock,
    TrainConfig,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "tomonet", version, about = "Unrolled sparse recovery for SAR tomography")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set training.epochs=20` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let pairs = self
            .overrides
            .iter()
            .map(|s| {
                s.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| Error::Config(format!("override must be KEY=VALUE, got '{s}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        cfg.apply(&pairs)?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write train/val/test dataset files.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (defaults to the config's `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a network on simulated datasets.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory holding `train.tnds` and `val.tnds`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory for checkpoints and history (defaults to `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Invert measurements pixel by pixel.
    Invert {
        #[command(flatten)]
        config: ConfigArgs,
        /// Trained checkpoint; also fixes the geometry.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset file (`.tnds`) or CSV of `re,im` pairs per pixel.
        #[arg(long)]
        input: PathBuf,
        /// Replace the network by a classical solver.
        #[arg(long, value_name = "ista|fista|ridge")]
        solver: Option<String>,
        /// Noise variance for CSV rows that do not carry one.
        #[arg(long)]
        noise_variance: Option<f64>,
        /// Write the CSV table here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run one Monte Carlo evaluation suite.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Trained checkpoint to evaluate.
        #[arg(long)]
        model: Option<PathBuf>,
        /// single, double-curve, amplitude-ratio, phase-sweep,
        /// false-detection, limited-baseline, perturbation or runtime.
        #[arg(long)]
        suite: String,
        /// Evaluate a classical solver instead of a network.
        #[arg(long, value_name = "ista|fista|ridge")]
        solver: Option<String>,
        /// Trials per point (overrides `evaluation.trials`).
        #[arg(long)]
        trials: Option<usize>,
        /// Write the CSV table here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences on a small net.
    Gradcheck {
        /// soft, piecewise or both.
        #[arg(long, default_value = "both")]
        activation: String,
        /// Number of random networks to check per activation.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        /// Scale one analytic gradient block, `LAYER:BLOCK:FACTOR` with
        /// BLOCK one of W_re, W_im, theta (debugging aid).
        #[arg(long, value_name = "LAYER:BLOCK:FACTOR")]
        corrupt: Option<String>,
        /// Write the CSV table here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Single-scatterer elevation CRLB, closed form against numerical.
    Crlb {
        #[command(flatten)]
        config: ConfigArgs,
        /// SNR values in dB (comma separated).
        #[arg(long, value_delimiter = ',', default_value = "0,3,6,10")]
        snr: Vec<f64>,
        /// Write the CSV table here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 1;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, out } => simulate(&config.load()?, out),
        Command::Train {
            config,
            data,
            out,
            resume,
        } => {
            let cfg = config.load()?;
            cmd_train(&cfg, data, out, resume.as_deref())
        }
        Command::Invert {
            config,
            model,
            input,
            solver,
            noise_variance,
            output,
        } => invert(&config.load()?, model.as_deref(), &input, solver.as_deref(), noise_variance, output.as_deref()),
        Command::Evaluate {
            config,
            model,
            suite,
            solver,
            trials,
            output,
        } => {
            let mut cfg = config.load()?;
            if let Some(t) = trials {
                cfg.evaluation.trials = t;
                cfg.evaluation.validate(cfg.geometry.num_baselines())?;
            }
            evaluate(&cfg, model.as_deref(), &suite, solver.as_deref(), output.as_deref())
        }
        Command::Gradcheck {
            activation,
            seeds,
            tolerance,
            corrupt,
            output,
        } => gradcheck(&activation, seeds, tolerance, corrupt.as_deref(), output.as_deref()),
        Command::Crlb { config, snr, output } => crlb(&config.load()?, &snr, output.as_deref()),
    }
}

fn emit(table: &Table, provenance: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => table.write(p, provenance),
        None => {
            print!("{}", table.render(provenance));
            Ok(())
        }
    }
}

fn simulate(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&dir)?;
    let steering = SteeringMatrix::build(&cfg.geometry, &cfg.grid)?;
    let hash = cfg.hash();
    let splits = [
        ("train", cfg.dataset.train(cfg.seed)),
        ("val", cfg.dataset.validation(cfg.seed)),
        ("test", cfg.dataset.test(cfg.seed)),
    ];
    for (name, split) in splits {
        let samples = make_dataset(&split, &steering)?;
        let path = dir.join(format!("{name}.tnds"));
        let manifest = format!(
            "{}\nsplit = {name}\ncount = {}\nsplit_seed = {}\nnoise_free = {}\n{}",
            provenance_line(&hash, cfg.seed),
            split.count,
            split.seed,
            split.noise_free,
            cfg.canonical()
        );
        write_dataset(&path, &samples, &steering, &manifest)?;
        println!("wrote {} ({} samples)", path.display(), samples.len());
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig, data: Option<PathBuf>, out: Option<PathBuf>, resume: Option<&Path>) -> Result<()> {
    let data = data.unwrap_or_else(|| cfg.output_dir.clone());
    let out = out.unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&out)?;
    let load = |name: &str| -> Result<Vec<_>> {
        let path = data.join(name);
        let (header, samples) = read_dataset(&path)?;
        header.check_matches(&cfg.geometry, &cfg.grid, &path)?;
        Ok(samples)
    };
    let train_set = load("train.tnds")?;
    let val = load("val.tnds")?;
    let steering = SteeringMatrix::build(&cfg.geometry, &cfg.grid)?;
    let hash = cfg.hash();
    let provenance = provenance_line(&hash, cfg.seed);

    let mut tcfg = TrainConfig {
        seed: cfg.seed,
        ..cfg.training.clone()
    };
    let (net, state, mut best_nmse) = match resume {
        Some(path) => {
            let ck = read_checkpoint(path)?;
            if ck.network.steering().geometry() != &cfg.geometry || ck.network.steering().grid() != &cfg.grid {
                return Err(Error::Config(format!(
                    "{}: checkpoint geometry does not match the configuration",
                    path.display()
                )));
            }
            if tcfg.curriculum.is_some() {
                return Err(Error::Config("resuming a depth-curriculum run is not supported".into()));
            }
            if ck.epoch >= tcfg.epochs {
                return Err(Error::Config(format!(
                    "checkpoint is at epoch {} of {}; nothing left to train",
                    ck.epoch, tcfg.epochs
                )));
            }
            tcfg.start_epoch = ck.epoch;
            tcfg.epochs -= ck.epoch;
            let best = read_checkpoint(&out.join("best.ckpt")).map_or(f64::INFINITY, |b| b.val_nmse);
            println!("resuming at epoch {} (lr {:e})", ck.epoch, ck.optimizer.as_ref().map_or(tcfg.learning_rate, |s| s.learning_rate));
            (ck.network, ck.optimizer, best)
        }
        None => {
            let net = init_from_data(&steering, cfg.network, &train_set)?;
            let v0 = validation_nmse(&net, &val)?;
            println!("initial val_nmse {v0:.6} (init lambda {:.6})", net.init_lambda());
            (net, None, f64::INFINITY)
        }
    };

    let history_path = out.join("history.csv");
    let append = resume.is_some() && history_path.exists();
    let mut history = if append {
        OpenOptions::new().append(true).open(&history_path)?
    } else {
        let mut f = File::create(&history_path)?;
        writeln!(f, "{provenance}")?;
        writeln!(f, "epoch,layers,train_mse,val_nmse,learning_rate,is_best")?;
        f
    };
    let checkpoint = |net: &Network, state: Option<&OptimizerState>, epoch: usize, val_nmse: f64| Checkpoint {
        network: net.clone(),
        optimizer: state.cloned(),
        epoch,
        val_nmse,
        config_hash: hash.clone(),
        seed: cfg.seed,
    };
    let every = cfg.checkpoint_every;
    let outcome = train(net, &train_set, &val, &tcfg, state, &mut |rec, net, state| {
        let is_best = rec.val_nmse < best_nmse;
        writeln!(
            history,
            "{},{},{:.9},{:.9},{:e},{is_best}",
            rec.epoch, rec.layers, rec.train_mse, rec.val_nmse, rec.learning_rate
        )?;
        history.flush()?;
        println!(
            "epoch {} layers {} train_mse {:.6} val_nmse {:.6} lr {:e}",
            rec.epoch, rec.layers, rec.train_mse, rec.val_nmse, rec.learning_rate
        );
        write_checkpoint(&out.join("last.ckpt"), &checkpoint(net, Some(state), rec.epoch, rec.val_nmse))?;
        if is_best {
            best_nmse = rec.val_nmse;
            write_checkpoint(&out.join("best.ckpt"), &checkpoint(net, None, rec.epoch, rec.val_nmse))?;
        }
        if every > 0 && rec.epoch % every == 0 {
            let name = format!("epoch-{:04}.ckpt", rec.epoch);
            write_checkpoint(&out.join(name), &checkpoint(net, Some(state), rec.epoch, rec.val_nmse))?;
        }
        Ok(())
    })?;
    if tcfg.curriculum.is_some() {
        let mut t = Table::new(["layers", "best_val_nmse"]);
        for (k, v) in &outcome.depth_nmse {
            t.push(vec![k.to_string(), format!("{v:.9}")]);
        }
        t.write(&out.join("depth.csv"), &provenance)?;
    }
    println!("best val_nmse {best_nmse:.6}");
    Ok(())
}

fn classical(steering: SteeringMatrix, solver: &str) -> Result<ClassicalSource> {
    ClassicalSource::new(steering, solver.parse::<ClassicalMethod>()?)
}

/// The network of `model`, or a classical solver when `solver` is given
/// (on the model's geometry if there is one, else the configured one).
fn profile_source(cfg: &RunConfig, model: Option<&Path>, solver: Option<&str>) -> Result<(Box<dyn ProfileSource>, Option<Network>)> {
    let net = model.map(|p| read_checkpoint(p).map(|ck| ck.network)).transpose()?;
    match (solver, net) {
        (Some(s), net) => {
            let steering = match &net {
                Some(n) => n.steering().clone(),
                None => SteeringMatrix::build(&cfg.geometry, &cfg.grid)?,
            };
            Ok((Box::new(classical(steering, s)?), net))
        }
        (None, Some(n)) => Ok((Box::new(n.clone()), Some(n))),
        (None, None) => Err(Error::Config("either --model or --solver is required".into())),
    }
}

fn invert(
    cfg: &RunConfig,
    model: Option<&Path>,
    input: &Path,
    solver: Option<&str>,
    noise_variance: Option<f64>,
    output: Option<&Path>,
) -> Result<()> {
    let (source, _) = profile_source(cfg, model, solver)?;
    let steering = source.steering().clone();
    let n = steering.rows();
    let is_dataset = input.extension().is_some_and(|e| e == "tnds");
    let (gs, vars): (Vec<Vec<Complex64>>, Vec<f64>) = if is_dataset {
        let (header, samples) = read_dataset(input)?;
        if header.geometry.num_baselines() != n {
            return Err(Error::Dimension {
                expected: n,
                found: header.geometry.num_baselines(),
            });
        }
        samples.into_iter().map(|s| (s.g, s.noise_variance)).unzip()
    } else {
        read_measurement_table(input, n)?
            .into_iter()
            .enumerate()
            .map(|(i, (g, v))| {
                v.or(noise_variance)
                    .map(|v| (g, v))
                    .ok_or_else(|| Error::Config(format!("pixel {i} has no noise variance; pass --noise-variance")))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip()
    };
    if let Some(v) = vars.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("noise variance must be positive, got {v}")));
    }
    let est = &cfg.evaluation.estimation;
    let results = invert_with(source.as_ref(), &steering, &gs, &vars, est)?;
    let mut columns = vec!["pixel".to_string(), "order".to_string()];
    for k in 1..=est.max_order {
        columns.extend([format!("elevation_{k}"), format!("amplitude_{k}"), format!("phase_{k}")]);
    }
    columns.extend(["residual".to_string(), "rank_deficient".to_string()]);
    let mut table = Table::new(columns);
    for (i, r) in results.iter().enumerate() {
        let mut row = vec![i.to_string(), r.order.to_string()];
        for k in 0..est.max_order {
            match (r.elevations.get(k), r.amplitudes.get(k)) {
                (Some(e), Some(a)) => row.extend([format!("{e:.6}"), format!("{:.6}", a.norm()), format!("{:.6}", a.arg())]),
                _ => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        row.extend([format!("{:.9}", r.residual), r.rank_deficient.to_string()]);
        table.push(row);
    }
    let provenance = format!("{} source={}", provenance_line(&cfg.hash(), cfg.seed), source.label());
    emit(&table, &provenance, output)
}

fn prefixed(name: &str, value: f64, mut t: Table) -> Table {
    t.columns.insert(0, name.to_string());
    for row in &mut t.rows {
        row.insert(0, value.to_string());
    }
    t
}

fn concat(tables: Vec<Table>) -> Table {
    let mut it = tables.into_iter();
    let mut first = it.next().unwrap_or_else(|| Table::new(Vec::<String>::new()));
    for t in it {
        first.rows.extend(t.rows);
    }
    first
}

fn evaluate(cfg: &RunConfig, model: Option<&Path>, suite: &str, solver: Option<&str>, output: Option<&Path>) -> Result<()> {
    const SUITES: [&str; 8] = [
        "single",
        "double-curve",
        "amplitude-ratio",
        "phase-sweep",
        "false-detection",
        "limited-baseline",
        "perturbation",
        "runtime",
    ];
    if !SUITES.contains(&suite) {
        return Err(Error::Config(format!("unknown suite '{suite}' (expected one of: {})", SUITES.join(", "))));
    }
    let (source, net) = profile_source(cfg, model, solver)?;
    let source = source.as_ref();
    let r = source.steering().clone();
    let ev = &cfg.evaluation;
    let (trials, seed, est) = (ev.trials, cfg.seed, &ev.estimation);
    est.validate(r.rows())?;
    let double_curves = || -> Result<Table> {
        let tables = ev
            .double_snrs
            .iter()
            .map(|&snr| {
                let pts = run_double_curve(source, &r, snr, &ev.alphas, 0.0, 1.0, trials, seed, est)?;
                Ok(prefixed("snr_db", snr, curve_table("alpha", &pts)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(concat(tables))
    };
    let table = match suite {
        "single" => single_table(&run_single_suite(source, &r, &ev.single_snrs, trials, seed, est)?),
        "double-curve" => double_curves()?,
        "limited-baseline" => prefixed("baselines", r.rows() as f64, double_curves()?),
        "amplitude-ratio" => {
            let pts = run_amplitude_ratio(source, &r, ev.sweep_snr, ev.ratio_alpha, &ev.amplitude_ratios, trials, seed, est)?;
            curve_table("amplitude_ratio", &pts)
        }
        "phase-sweep" => {
            let pts = run_phase_sweep(source, &r, ev.sweep_snr, ev.phase_alpha, &ev.phase_differences, trials, seed, est)?;
            curve_table("phase_difference_deg", &pts)
        }
        "false-detection" => false_detection_table(&run_false_detection(source, &r, ev.noise_snr, trials, seed, est)?),
        "perturbation" => perturbation_table(&run_perturbation(source, ev.perturbation, ev.sweep_snr, trials, seed, est)?),
        "runtime" => {
            let net = net.ok_or_else(|| Error::Config("the runtime suite needs --model".into()))?;
            runtime_table(&runtime_benchmark(&net, ev.runtime_pixels, 2000, 100, seed)?)
        }
        _ => unreachable!("suite names checked above"),
    };
    let provenance = format!(
        "{} suite={suite} source={}",
        provenance_line(&cfg.hash(), cfg.seed),
        source.label()
    );
    emit(&table, &provenance, output)
}

fn parse_corrupt(spec: &str) -> Result<(usize, ParamBlock, f64)> {
    let bad = || Error::Config(format!("--corrupt expects LAYER:BLOCK:FACTOR, got '{spec}'"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [layer, block, factor] = parts.as_slice() else {
        return Err(bad());
    };
    let block = match *block {
        "W_re" => ParamBlock::WeightRe,
        "W_im" => ParamBlock::WeightIm,
        "theta" => ParamBlock::Thresholds,
        _ => return Err(bad()),
    };
    Ok((layer.parse().map_err(|_| bad())?, block, factor.parse().map_err(|_| bad())?))
}

fn gradcheck(activation: &str, seeds: u64, tolerance: f64, corrupt: Option<&str>, output: Option<&Path>) -> Result<()> {
    let activations = match activation {
        "both" => vec![Activation::Soft, Activation::Piecewise],
        a => vec![a.parse::<Activation>()?],
    };
    let corrupt = corrupt.map(parse_corrupt).transpose()?;
    let mut table = Table::new(["activation", "seed", "layer", "block", "max_rel_error", "probes", "excluded"]);
    let mut worst = 0.0f64;
    for &act in &activations {
        for seed in 0..seeds {
            let (net, batch) = grad_check_fixture(act, seed)?;
            let report = grad_check(
                &net,
                &batch,
                &GradCheckConfig {
                    seed,
                    corrupt,
                    ..Default::default()
                },
            )?;
            for b in &report.blocks {
                table.push(vec![
                    act.name().into(),
                    seed.to_string(),
                    b.layer.to_string(),
                    b.block.name().into(),
                    format!("{:.3e}", b.max_rel_error),
                    b.probes.to_string(),
                    b.excluded.to_string(),
                ]);
            }
            worst = worst.max(report.max_rel_error());
        }
    }
    emit(&table, &provenance_line("gradcheck", 0), output)?;
    if worst < tolerance {
        println!("gradient check passed: max relative error {worst:.3e} < {tolerance:e}");
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "gradient check failed: max relative error {worst:.3e} >= {tolerance:e}"
        )))
    }
}

fn crlb(cfg: &RunConfig, snrs: &[f64], output: Option<&Path>) -> Result<()> {
    let geo = &cfg.geometry;
    let mid = 0.5 * (cfg.grid.s_min() + cfg.grid.s_max());
    let scene = Scene::single(Scatterer::new(mid, 1.0, 0.0));
    let mut table = Table::new(["snr_db", "closed_form_m", "numerical_m", "normalized", "relative_difference"]);
    for &snr in snrs {
        let closed = crlb_single_closed_form(geo, db_to_linear(snr));
        let numeric = crlb_elevation(&scene, geo, snr, SnrReference::TotalSignal)?;
        let num = numeric.elevation_std[0];
        table.push(vec![
            snr.to_string(),
            format!("{closed:.6}"),
            format!("{num:.6}"),
            format!("{:.6}", numeric.normalized[0]),
            format!("{:.3e}", (num - closed).abs() / closed),
        ]);
    }
    emit(&table, &provenance_line(&cfg.hash(), cfg.seed), output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["tomonet", "no-such-command"]), 1);
        assert_eq!(run(["tomonet", "crlb", "--set", "bogus.key=1"]), 1);
        assert_eq!(run(["tomonet", "--help"]), 0);
    }

    #[test]
    fn corrupt_spec_parses() {
        assert_eq!(parse_corrupt("1:W_im:2").unwrap(), (1, ParamBlock::WeightIm, 2.0));
        assert!(parse_corrupt("1:W:2").is_err());
        assert!(parse_corrupt("1:theta").is_err());
    }
}
