//! Run configuration as flat `section.key = value` text.
//!
//! ```text
//! # comment
//! seed = 7
//! geometry.preset = six-baseline
//! network.activation = soft
//! training.epochs = 50
//! ```
//!
//! Unknown keys are rejected. Every key has a default, so an empty file is a
//! valid configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::evaluation::EvaluationConfig;
use crate::geometry::{AcquisitionGeometry, ElevationGrid};
use crate::network::NetworkConfig;
use crate::simulation::{DatasetConfig, DatasetKind, SnrReference};
use crate::training::TrainConfig;
use crate::{Error, Result};

/// Sizes of the generated splits.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    /// Template for the training split; `count` and `seed` are set per split.
    pub template: DatasetConfig,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            template: DatasetConfig::default(),
            train_count: 200_000,
            val_count: 20_000,
            test_count: 20_000,
        }
    }
}

impl DatasetSpec {
    /// Noisy mixed training split.
    pub fn train(&self, seed: u64) -> DatasetConfig {
        DatasetConfig {
            count: self.train_count,
            seed,
            ..self.template.clone()
        }
    }

    /// Noise-free validation split.
    pub fn validation(&self, seed: u64) -> DatasetConfig {
        DatasetConfig {
            count: self.val_count,
            seed: seed.wrapping_add(1),
            noise_free: true,
            ..self.template.clone()
        }
    }

    /// Noisy held-out split drawn like the training data.
    pub fn test(&self, seed: u64) -> DatasetConfig {
        DatasetConfig {
            count: self.test_count,
            seed: seed.wrapping_add(2),
            ..self.template.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: AcquisitionGeometry,
    pub grid: ElevationGrid,
    pub dataset: DatasetSpec,
    pub network: NetworkConfig,
    pub training: TrainConfig,
    /// Write a checkpoint every this many epochs (0 = only best and last).
    pub checkpoint_every: usize,
    pub evaluation: EvaluationConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: AcquisitionGeometry::default_stack(),
            grid: ElevationGrid::default_grid(),
            dataset: DatasetSpec::default(),
            network: NetworkConfig::default(),
            training: TrainConfig::default(),
            checkpoint_every: 10,
            evaluation: EvaluationConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse '{value}' for key '{key}'")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_option<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".into(), |v| v.to_string())
}

fn parse_option<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl RunConfig {
    /// Parse config text on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{raw}'", n + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = Self::default();
        cfg.apply(&pairs)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Apply `key = value` overrides in order.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        // geometry keys interact, so collect them and build once
        let mut preset: Option<String> = None;
        let mut baselines: Option<Vec<f64>> = None;
        let mut lambda_range: Option<f64> = None;
        let (mut gmin, mut gmax, mut gstep) = (self.grid.s_min(), self.grid.s_max(), self.grid.spacing());
        for (key, value) in pairs {
            let (k, v) = (key.as_str(), value.as_str());
            let ds = &mut self.dataset.template;
            let tr = &mut self.training;
            let ev = &mut self.evaluation;
            match k {
                "seed" => self.seed = parse(k, v)?,
                "output_dir" => self.output_dir = PathBuf::from(v),
                "geometry.preset" => preset = Some(v.to_string()),
                "geometry.baselines" => baselines = Some(parse_list(k, v)?),
                "geometry.lambda_range" => lambda_range = Some(parse(k, v)?),
                "grid.min" => gmin = parse(k, v)?,
                "grid.max" => gmax = parse(k, v)?,
                "grid.spacing" => gstep = parse(k, v)?,
                "dataset.kind" => ds.kind = v.parse()?,
                "dataset.train_count" => self.dataset.train_count = parse(k, v)?,
                "dataset.val_count" => self.dataset.val_count = parse(k, v)?,
                "dataset.test_count" => self.dataset.test_count = parse(k, v)?,
                "dataset.snr_levels" => ds.snr_levels = parse_list(k, v)?,
                "dataset.alpha_levels" => ds.alpha_levels = parse_list(k, v)?,
                "dataset.amplitude_min" => ds.amplitude_range.0 = parse(k, v)?,
                "dataset.amplitude_max" => ds.amplitude_range.1 = parse(k, v)?,
                "dataset.snr_reference" => ds.snr_reference = parse_reference(v)?,
                "network.layers" => self.network.layers = parse(k, v)?,
                "network.activation" => self.network.activation = v.parse()?,
                "network.support" => self.network.support = v.parse()?,
                "network.input_scaling" => self.network.input_scaling = parse(k, v)?,
                "training.epochs" => tr.epochs = parse(k, v)?,
                "training.batch_size" => tr.batch_size = parse(k, v)?,
                "training.learning_rate" => tr.learning_rate = parse(k, v)?,
                "training.weight_lr_scale" => tr.weight_lr_scale = parse(k, v)?,
                "training.lr_patience" => tr.lr_patience = parse(k, v)?,
                "training.lr_decay" => tr.lr_decay = parse(k, v)?,
                "training.min_learning_rate" => tr.min_learning_rate = parse(k, v)?,
                "training.validate_every" => tr.validate_every = parse(k, v)?,
                "training.checkpoint_every" => self.checkpoint_every = parse(k, v)?,
                "training.curriculum" => {
                    tr.curriculum = match v {
                        "none" => None,
                        _ => {
                            let (a, b) = v
                                .split_once(':')
                                .ok_or_else(|| Error::Config(format!("curriculum must be 'start:end', got '{v}'")))?;
                            Some((parse(k, a)?, parse(k, b)?))
                        }
                    }
                }
                "evaluation.trials" => ev.trials = parse(k, v)?,
                "evaluation.single_snrs" => ev.single_snrs = parse_list(k, v)?,
                "evaluation.double_snrs" => ev.double_snrs = parse_list(k, v)?,
                "evaluation.alphas" => ev.alphas = parse_list(k, v)?,
                "evaluation.amplitude_ratios" => ev.amplitude_ratios = parse_list(k, v)?,
                "evaluation.ratio_alpha" => ev.ratio_alpha = parse(k, v)?,
                "evaluation.phase_differences" => ev.phase_differences = parse_list(k, v)?,
                "evaluation.phase_alpha" => ev.phase_alpha = parse(k, v)?,
                "evaluation.sweep_snr" => ev.sweep_snr = parse(k, v)?,
                "evaluation.perturbation" => ev.perturbation = parse(k, v)?,
                "evaluation.runtime_pixels" => ev.runtime_pixels = parse(k, v)?,
                "evaluation.clean_fraction" => ev.estimation.clean_fraction = parse(k, v)?,
                "evaluation.max_order" => ev.estimation.max_order = parse(k, v)?,
                "evaluation.penalty" => ev.estimation.penalty = parse(k, v)?,
                "evaluation.noise_snr" => ev.noise_snr = parse_option(k, v)?,
                _ => return Err(Error::Config(format!("unknown key '{k}'"))),
            }
        }
        if preset.is_some() || baselines.is_some() || lambda_range.is_some() {
            let base = match preset.as_deref() {
                None => self.geometry.clone(),
                Some("default") => AcquisitionGeometry::default_stack(),
                Some("six-baseline") => AcquisitionGeometry::six_baseline_stack(),
                Some(other) => return Err(Error::Config(format!("unknown geometry preset '{other}'"))),
            };
            let lr = lambda_range.unwrap_or(base.lambda_range());
            let b = baselines.unwrap_or_else(|| base.baselines().to_vec());
            self.geometry = AcquisitionGeometry::new(b, lr)?;
        }
        if (gmin, gmax, gstep) != (self.grid.s_min(), self.grid.s_max(), self.grid.spacing()) {
            self.grid = ElevationGrid::new(gmin, gmax, gstep)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.template.validate()?;
        self.network.validate()?;
        self.training.validate()?;
        self.evaluation.validate(self.geometry.num_baselines())
    }

    /// Canonical `key = value` listing of every setting, sorted by key.
    pub fn canonical(&self) -> String {
        let mut m = BTreeMap::new();
        let ds = &self.dataset.template;
        let tr = &self.training;
        let ev = &self.evaluation;
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("seed", self.seed.to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("geometry.baselines", fmt_list(self.geometry.baselines()));
        put("geometry.lambda_range", self.geometry.lambda_range().to_string());
        put("grid.min", self.grid.s_min().to_string());
        put("grid.max", self.grid.s_max().to_string());
        put("grid.spacing", self.grid.spacing().to_string());
        put("dataset.kind", kind_name(ds.kind).into());
        put("dataset.train_count", self.dataset.train_count.to_string());
        put("dataset.val_count", self.dataset.val_count.to_string());
        put("dataset.test_count", self.dataset.test_count.to_string());
        put("dataset.snr_levels", fmt_list(&ds.snr_levels));
        put("dataset.alpha_levels", fmt_list(&ds.alpha_levels));
        put("dataset.amplitude_min", ds.amplitude_range.0.to_string());
        put("dataset.amplitude_max", ds.amplitude_range.1.to_string());
        put("dataset.snr_reference", reference_name(ds.snr_reference).into());
        put("network.layers", self.network.layers.to_string());
        put("network.activation", self.network.activation.name().into());
        put("network.support", self.network.support.to_string());
        put("network.input_scaling", self.network.input_scaling.to_string());
        put("training.epochs", tr.epochs.to_string());
        put("training.batch_size", tr.batch_size.to_string());
        put("training.learning_rate", tr.learning_rate.to_string());
        put("training.weight_lr_scale", tr.weight_lr_scale.to_string());
        put("training.lr_patience", tr.lr_patience.to_string());
        put("training.lr_decay", tr.lr_decay.to_string());
        put("training.min_learning_rate", tr.min_learning_rate.to_string());
        put("training.validate_every", tr.validate_every.to_string());
        put("training.checkpoint_every", self.checkpoint_every.to_string());
        put(
            "training.curriculum",
            tr.curriculum.map_or_else(|| "none".into(), |(a, b)| format!("{a}:{b}")),
        );
        put("evaluation.trials", ev.trials.to_string());
        put("evaluation.single_snrs", fmt_list(&ev.single_snrs));
        put("evaluation.double_snrs", fmt_list(&ev.double_snrs));
        put("evaluation.alphas", fmt_list(&ev.alphas));
        put("evaluation.amplitude_ratios", fmt_list(&ev.amplitude_ratios));
        put("evaluation.ratio_alpha", ev.ratio_alpha.to_string());
        put("evaluation.phase_differences", fmt_list(&ev.phase_differences));
        put("evaluation.phase_alpha", ev.phase_alpha.to_string());
        put("evaluation.sweep_snr", ev.sweep_snr.to_string());
        put("evaluation.perturbation", ev.perturbation.to_string());
        put("evaluation.runtime_pixels", ev.runtime_pixels.to_string());
        put("evaluation.clean_fraction", ev.estimation.clean_fraction.to_string());
        put("evaluation.max_order", ev.estimation.max_order.to_string());
        put("evaluation.penalty", ev.estimation.penalty.to_string());
        put("evaluation.noise_snr", fmt_option(&ev.noise_snr));
        let mut out = String::new();
        for (k, v) in m {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn kind_name(kind: DatasetKind) -> &'static str {
    match kind {
        DatasetKind::Single => "single",
        DatasetKind::Double => "double",
        DatasetKind::NoiseOnly => "noise-only",
        DatasetKind::Mixed => "mixed",
    }
}

fn reference_name(r: SnrReference) -> &'static str {
    match r {
        SnrReference::TotalSignal => "total",
        SnrReference::PerScatterer => "per-scatterer",
    }
}

fn parse_reference(v: &str) -> Result<SnrReference> {
    match v {
        "total" => Ok(SnrReference::TotalSignal),
        "per-scatterer" => Ok(SnrReference::PerScatterer),
        other => Err(Error::Config(format!("unknown SNR reference '{other}'"))),
    }
}

/// Header line embedded in every output artifact.
pub fn provenance_line(config_hash: &str, seed: u64) -> String {
    format!("# tomonet {} config={config_hash} seed={seed}", env!("CARGO_PKG_VERSION"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::EstimationConfig;
    use crate::geometry::DEFAULT_LAMBDA_RANGE;
    use crate::network::{Activation, SupportSchedule};

    #[test]
    fn empty_text_is_default() {
        assert_eq!(RunConfig::parse_str("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::parse_str(
            "seed = 9\ngeometry.preset = six-baseline\nnetwork.activation = soft # inline\ntraining.curriculum = 3:20\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.geometry.num_baselines(), 6);
        assert_eq!(cfg.network.activation, Activation::Soft);
        assert_eq!(cfg.training.curriculum, Some((3, 20)));
        assert_eq!(cfg.geometry.lambda_range(), DEFAULT_LAMBDA_RANGE);
    }

    #[test]
    fn unknown_key_and_bad_value_are_rejected() {
        assert!(matches!(RunConfig::parse_str("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse_str("seed = x"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse_str("seed"), Err(Error::Config(_))));
        assert!(RunConfig::parse_str("network.layers = 0").is_err());
    }

    #[test]
    fn canonical_round_trips_and_hash_tracks_changes() {
        let mut cfg = RunConfig::default();
        cfg.network.support = SupportSchedule::Linear { p: 0.01, p_max: 0.1 };
        cfg.evaluation.estimation = EstimationConfig {
            max_order: 2,
            ..Default::default()
        };
        let back = RunConfig::parse_str(&cfg.canonical()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
        let other = RunConfig {
            seed: 1,
            ..cfg.clone()
        };
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn splits_use_distinct_seeds() {
        let spec = DatasetSpec::default();
        let (a, b, c) = (spec.train(5), spec.validation(5), spec.test(5));
        assert!(b.noise_free && !a.noise_free);
        assert!(a.seed != b.seed && b.seed != c.seed && a.seed != c.seed);
        assert_eq!(a.count, 200_000);
        assert_eq!(b.count, 20_000);
    }
}
