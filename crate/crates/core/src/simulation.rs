//! Scene generation, noisy measurements and labeled datasets.
//!
//! Every sample owns an RNG stream derived from `(seed, sample index)`, so a
//! dataset is bit-reproducible from its seed and config regardless of how
//! the generation is split across workers.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ElevationGrid, SteeringMatrix};

/// Deterministic RNG for one `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Point scatterer with complex reflectivity `A·exp(jφ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub elevation: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl Scatterer {
    pub fn new(elevation: f64, amplitude: f64, phase: f64) -> Self {
        Self {
            elevation,
            amplitude,
            phase,
        }
    }

    pub fn reflectivity(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

/// Ground truth of one resolution cell: zero, one or two scatterers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub scatterers: Vec<Scatterer>,
}

impl Scene {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(s: Scatterer) -> Self {
        Self { scatterers: vec![s] }
    }

    pub fn double(a: Scatterer, b: Scatterer) -> Result<Self> {
        if a.elevation == b.elevation {
            return Err(Error::InvalidArgument(
                "double scene needs distinct elevations".into(),
            ));
        }
        Ok(Self {
            scatterers: vec![a, b],
        })
    }

    pub fn len(&self) -> usize {
        self.scatterers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scatterers.is_empty()
    }

    /// `Σ_p A_p²`.
    pub fn signal_power(&self) -> f64 {
        self.scatterers.iter().map(|s| s.amplitude * s.amplitude).sum()
    }

    /// Scatterers sorted by ascending elevation.
    pub fn sorted(&self) -> Vec<Scatterer> {
        let mut s = self.scatterers.clone();
        s.sort_by(|a, b| a.elevation.total_cmp(&b.elevation));
        s
    }
}

/// Which signal power an SNR value refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnrReference {
    /// Total signal power `Σ_p A_p²` per measurement.
    #[default]
    TotalSignal,
    /// Mean per-scatterer power `Σ_p A_p² / P`.
    PerScatterer,
}

/// Reference power used for scenes without scatterers.
pub const NOISE_ONLY_REFERENCE_POWER: f64 = 1.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Complex noise variance `σ²` for a scene at the given SNR.
///
/// Infinite SNR yields zero noise. Empty scenes use a unit reference power.
pub fn noise_variance(scene: &Scene, snr_db: f64, reference: SnrReference) -> Result<f64> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(format!("invalid SNR {snr_db} dB")));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    let power = if scene.is_empty() {
        NOISE_ONLY_REFERENCE_POWER
    } else {
        match reference {
            SnrReference::TotalSignal => scene.signal_power(),
            SnrReference::PerScatterer => scene.signal_power() / scene.len() as f64,
        }
    };
    Ok(power / db_to_linear(snr_db))
}

/// Dense reflectivity profile of a scene on the grid.
pub fn scene_to_profile(scene: &Scene, grid: &ElevationGrid) -> Result<Vec<Complex64>> {
    let mut profile = vec![Complex64::new(0.0, 0.0); grid.len()];
    for s in &scene.scatterers {
        if !s.amplitude.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite amplitude {}", s.amplitude)));
        }
        let idx = grid.index_of(s.elevation).ok_or(Error::OffGrid {
            elevation: s.elevation,
        })?;
        profile[idx] += s.reflectivity();
    }
    Ok(profile)
}

/// Add circular complex Gaussian noise of variance `sigma2` to `clean`.
pub fn add_noise<R: Rng + ?Sized>(clean: &mut [Complex64], sigma2: f64, rng: &mut R) {
    if sigma2 <= 0.0 {
        return;
    }
    let sd = (sigma2 / 2.0).sqrt();
    for z in clean.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z += Complex64::new(sd * re, sd * im);
    }
}

/// `g = Rγ + ε` with `σ² = ‖γ‖² / SNR` (total-signal reference).
pub fn simulate_measurement(
    profile: &[Complex64],
    steering: &SteeringMatrix,
    snr_db: f64,
    seed: u64,
) -> Result<Vec<Complex64>> {
    if profile.len() != steering.cols() {
        return Err(Error::Dimension {
            expected: steering.cols(),
            found: profile.len(),
        });
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidArgument("SNR is NaN".into()));
    }
    let mut g = steering.apply(profile);
    if snr_db == f64::INFINITY {
        return Ok(g);
    }
    let power: f64 = profile.iter().map(|z| z.norm_sqr()).sum();
    if power == 0.0 {
        return Err(Error::InvalidArgument(
            "zero-signal profile has undefined noise level at finite SNR".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise(&mut g, power / db_to_linear(snr_db), &mut rng);
    Ok(g)
}

/// One training / test example.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub g: Vec<Complex64>,
    pub scene: Scene,
    pub snr_db: f64,
    /// Complex noise variance used to draw `g`.
    pub noise_variance: f64,
    /// Nonzero entries of the true profile as `(grid index, value)`.
    pub support: Vec<(usize, Complex64)>,
}

impl LabeledSample {
    pub fn from_scene(
        scene: Scene,
        steering: &SteeringMatrix,
        snr_db: f64,
        reference: SnrReference,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let grid = steering.grid();
        let mut support = Vec::with_capacity(scene.len());
        for s in &scene.scatterers {
            let idx = grid.index_of(s.elevation).ok_or(Error::OffGrid {
                elevation: s.elevation,
            })?;
            support.push((idx, s.reflectivity()));
        }
        let sigma2 = noise_variance(&scene, snr_db, reference)?;
        let mut g = vec![Complex64::new(0.0, 0.0); steering.rows()];
        for &(idx, value) in &support {
            for (gn, r) in g.iter_mut().zip(steering.entries().column(idx)) {
                *gn += r * value;
            }
        }
        add_noise(&mut g, sigma2, rng);
        Ok(Self {
            g,
            scene,
            snr_db,
            noise_variance: sigma2,
            support,
        })
    }

    /// Dense true profile of length `len`.
    pub fn gamma_true(&self, len: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); len];
        for &(idx, value) in &self.support {
            out[idx] += value;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Single,
    Double,
    NoiseOnly,
    /// Alternating single / double samples (1:1).
    Mixed,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "double" => Ok(Self::Double),
            "noise-only" | "noise" => Ok(Self::NoiseOnly),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::Config(format!("unknown dataset kind '{other}'"))),
        }
    }
}

/// Generator settings. Overrides pin one of the otherwise random parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub count: usize,
    /// SNR levels in dB a sample draws from uniformly.
    pub snr_levels: Vec<f64>,
    /// Normalized separations `α = d_s / ρ_s` for double scenes.
    pub alpha_levels: Vec<f64>,
    /// `A ~ U(lo, hi)`.
    pub amplitude_range: (f64, f64),
    pub snr_reference: SnrReference,
    pub fixed_snr_db: Option<f64>,
    pub fixed_alpha: Option<f64>,
    /// Fixed phase difference `φ₂ − φ₁`.
    pub fixed_phase_difference: Option<f64>,
    /// Fixed amplitude ratio `A₁ / A₂ ≥ 1`.
    pub fixed_amplitude_ratio: Option<f64>,
    /// Equal amplitudes and zero phase difference.
    pub worst_case: bool,
    pub noise_free: bool,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Mixed,
            count: 200_000,
            snr_levels: (0..=10).map(f64::from).collect(),
            alpha_levels: (1..=12).map(|k| k as f64 / 10.0).collect(),
            amplitude_range: (1.0, 4.0),
            snr_reference: SnrReference::TotalSignal,
            fixed_snr_db: None,
            fixed_alpha: None,
            fixed_phase_difference: None,
            fixed_amplitude_ratio: None,
            worst_case: false,
            noise_free: false,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.amplitude_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo) {
            return Err(Error::Config(format!("invalid amplitude range ({lo}, {hi})")));
        }
        if self.fixed_snr_db.is_none() && !self.noise_free && self.snr_levels.is_empty() {
            return Err(Error::Config("no SNR levels".into()));
        }
        if matches!(self.kind, DatasetKind::Double | DatasetKind::Mixed)
            && self.fixed_alpha.is_none()
            && self.alpha_levels.is_empty()
        {
            return Err(Error::Config("no alpha levels".into()));
        }
        if let Some(r) = self.fixed_amplitude_ratio {
            if !(r.is_finite() && r >= 1.0) {
                return Err(Error::Config(format!("amplitude ratio must be >= 1, got {r}")));
            }
        }
        Ok(())
    }
}

/// Draw a scene of the requested kind.
pub fn draw_scene(
    kind: DatasetKind,
    cfg: &DatasetConfig,
    grid: &ElevationGrid,
    rayleigh: f64,
    rng: &mut impl Rng,
) -> Result<Scene> {
    let (lo, hi) = cfg.amplitude_range;
    let amplitude = |rng: &mut dyn rand::RngCore| -> f64 {
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    };
    match kind {
        DatasetKind::NoiseOnly => Ok(Scene::empty()),
        DatasetKind::Single => {
            let idx = rng.random_range(0..grid.len());
            let a = amplitude(rng);
            let phase = rng.random_range(0.0..TAU);
            Ok(Scene::single(Scatterer::new(grid.position(idx), a, phase)))
        }
        DatasetKind::Double => {
            let alpha = match cfg.fixed_alpha {
                Some(a) => a,
                None => cfg.alpha_levels[rng.random_range(0..cfg.alpha_levels.len())],
            };
            let offset = separation_steps(alpha, rayleigh, grid)?;
            if offset >= grid.len() {
                return Err(Error::InvalidArgument(format!(
                    "separation of {offset} grid steps does not fit on a grid of {} nodes",
                    grid.len()
                )));
            }
            // resampling the first elevation until the second fits is the
            // same as drawing it uniformly over the admissible range
            let first = rng.random_range(0..grid.len() - offset);
            let a1 = amplitude(rng);
            let phi1 = rng.random_range(0.0..TAU);
            let (a2, phi2) = if cfg.worst_case {
                (a1, phi1)
            } else {
                let a2 = match cfg.fixed_amplitude_ratio {
                    Some(ratio) => a1 / ratio,
                    None => amplitude(rng),
                };
                let phi2 = match cfg.fixed_phase_difference {
                    Some(d) => (phi1 + d).rem_euclid(TAU),
                    None => rng.random_range(0.0..TAU),
                };
                (a2, phi2)
            };
            Scene::double(
                Scatterer::new(grid.position(first), a1, phi1),
                Scatterer::new(grid.position(first + offset), a2, phi2),
            )
        }
        DatasetKind::Mixed => unreachable!("mixed kind is resolved per sample"),
    }
}

/// Grid steps between two scatterers at normalized separation `alpha`,
/// rounded to the nearest node and at least one step.
pub fn separation_steps(alpha: f64, rayleigh: f64, grid: &ElevationGrid) -> Result<usize> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    Ok(((alpha * rayleigh / grid.spacing()).round() as usize).max(1))
}

/// Generate one sample with index `index` of the dataset.
pub fn make_sample(
    cfg: &DatasetConfig,
    steering: &SteeringMatrix,
    index: usize,
) -> Result<LabeledSample> {
    let mut rng = stream_rng(cfg.seed, index as u64);
    let kind = match cfg.kind {
        DatasetKind::Mixed if index.is_multiple_of(2) => DatasetKind::Single,
        DatasetKind::Mixed => DatasetKind::Double,
        k => k,
    };
    let rayleigh = steering.geometry().rayleigh_resolution();
    let scene = draw_scene(kind, cfg, steering.grid(), rayleigh, &mut rng)?;
    let snr_db = if cfg.noise_free {
        f64::INFINITY
    } else if let Some(s) = cfg.fixed_snr_db {
        s
    } else {
        cfg.snr_levels[rng.random_range(0..cfg.snr_levels.len())]
    };
    LabeledSample::from_scene(scene, steering, snr_db, cfg.snr_reference, &mut rng)
}

/// Generate a whole dataset; parallel over samples, ordered by index.
pub fn make_dataset(cfg: &DatasetConfig, steering: &SteeringMatrix) -> Result<Vec<LabeledSample>> {
    cfg.validate()?;
    if cfg.noise_free && cfg.kind == DatasetKind::NoiseOnly {
        return Err(Error::Config("a noise-free noise-only dataset is empty".into()));
    }
    (0..cfg.count)
        .into_par_iter()
        .map(|i| make_sample(cfg, steering, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AcquisitionGeometry;

    fn steering() -> SteeringMatrix {
        SteeringMatrix::build(&AcquisitionGeometry::default_stack(), &ElevationGrid::default_grid())
            .unwrap()
    }

    #[test]
    fn empty_scene_gives_zero_profile() {
        let p = scene_to_profile(&Scene::empty(), &ElevationGrid::default_grid()).unwrap();
        assert!(p.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn single_scatterer_profile() {
        let grid = ElevationGrid::default_grid();
        let p = scene_to_profile(&Scene::single(Scatterer::new(100.0, 2.0, 0.0)), &grid).unwrap();
        assert_eq!(p[100], Complex64::new(2.0, 0.0));
        assert_eq!(p.iter().filter(|z| z.norm() > 0.0).count(), 1);
    }

    #[test]
    fn off_grid_scatterer_is_rejected() {
        let grid = ElevationGrid::default_grid();
        let err = scene_to_profile(&Scene::single(Scatterer::new(10.5, 1.0, 0.0)), &grid);
        assert!(matches!(err, Err(Error::OffGrid { .. })));
    }

    #[test]
    fn half_rayleigh_double_is_21_steps_apart() {
        let grid = ElevationGrid::default_grid();
        let steps = separation_steps(0.5, 42.0, &grid).unwrap();
        assert_eq!(steps, 21);
        let scene = Scene::double(
            Scatterer::new(50.0, 1.0, 0.0),
            Scatterer::new(50.0 + steps as f64, 1.0, 0.0),
        )
        .unwrap();
        let p = scene_to_profile(&scene, &grid).unwrap();
        let nz: Vec<usize> = (0..p.len()).filter(|&i| p[i].norm() > 0.0).collect();
        assert_eq!(nz, vec![50, 71]);
    }

    #[test]
    fn infinite_snr_is_noiseless() {
        let r = steering();
        let p = scene_to_profile(&Scene::single(Scatterer::new(30.0, 1.5, 1.0)), r.grid()).unwrap();
        let g = simulate_measurement(&p, &r, f64::INFINITY, 3).unwrap();
        assert_eq!(g, r.apply(&p));
    }

    #[test]
    fn zero_db_unit_scatterer_noise_variance() {
        let scene = Scene::single(Scatterer::new(0.0, 1.0, 0.0));
        let s2 = noise_variance(&scene, 0.0, SnrReference::TotalSignal).unwrap();
        assert!((s2 - 1.0).abs() < 1e-15);
        // per-channel variance is half of the complex variance
        let mut rng = stream_rng(11, 0);
        let mut z = vec![Complex64::new(0.0, 0.0); 100_000];
        add_noise(&mut z, s2, &mut rng);
        let var_re = z.iter().map(|v| v.re * v.re).sum::<f64>() / z.len() as f64;
        let var_im = z.iter().map(|v| v.im * v.im).sum::<f64>() / z.len() as f64;
        assert!((var_re - 0.5).abs() < 0.01, "{var_re}");
        assert!((var_im - 0.5).abs() < 0.01, "{var_im}");
    }

    #[test]
    fn zero_signal_at_finite_snr_is_an_error() {
        let r = steering();
        let p = vec![Complex64::new(0.0, 0.0); r.cols()];
        assert!(simulate_measurement(&p, &r, 5.0, 0).is_err());
    }

    #[test]
    fn empirical_snr_matches_request() {
        let r = steering();
        let p = scene_to_profile(&Scene::single(Scatterer::new(80.0, 2.0, 0.3)), r.grid()).unwrap();
        let clean = r.apply(&p);
        let mut noise_power = 0.0;
        let draws = 100_000 / r.rows();
        for seed in 0..draws {
            let g = simulate_measurement(&p, &r, 5.0, seed as u64).unwrap();
            noise_power += g.iter().zip(&clean).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        }
        let sigma2 = noise_power / (draws * r.rows()) as f64;
        let snr = 4.0 / sigma2;
        assert!((snr / db_to_linear(5.0) - 1.0).abs() < 0.01, "{snr}");
    }

    #[test]
    fn noise_only_dataset_has_zero_truth() {
        let cfg = DatasetConfig {
            kind: DatasetKind::NoiseOnly,
            count: 20,
            ..Default::default()
        };
        for s in make_dataset(&cfg, &steering()).unwrap() {
            assert!(s.gamma_true(201).iter().all(|z| z.norm() == 0.0));
            assert!(s.noise_variance > 0.0);
        }
    }

    #[test]
    fn double_at_unit_alpha_is_42_m_apart() {
        let cfg = DatasetConfig {
            kind: DatasetKind::Double,
            count: 50,
            fixed_alpha: Some(1.0),
            ..Default::default()
        };
        for s in make_dataset(&cfg, &steering()).unwrap() {
            let sc = s.scene.sorted();
            assert_eq!(sc[1].elevation - sc[0].elevation, 42.0);
            assert!(sc[1].elevation <= 200.0);
            assert_eq!(s.support.len(), 2);
        }
    }

    #[test]
    fn worst_case_doubles_share_amplitude_and_phase() {
        let cfg = DatasetConfig {
            kind: DatasetKind::Double,
            count: 10,
            worst_case: true,
            ..Default::default()
        };
        for s in make_dataset(&cfg, &steering()).unwrap() {
            let [a, b] = [s.scene.scatterers[0], s.scene.scatterers[1]];
            assert_eq!(a.amplitude, b.amplitude);
            assert_eq!(a.phase, b.phase);
        }
    }

    #[test]
    fn datasets_are_reproducible() {
        let cfg = DatasetConfig {
            count: 64,
            seed: 99,
            ..Default::default()
        };
        let r = steering();
        assert_eq!(make_dataset(&cfg, &r).unwrap(), make_dataset(&cfg, &r).unwrap());
        let other = DatasetConfig { seed: 100, ..cfg.clone() };
        assert_ne!(make_dataset(&other, &r).unwrap()[0], make_dataset(&cfg, &r).unwrap()[0]);
    }

    #[test]
    fn mixed_dataset_alternates_kinds_and_levels() {
        let cfg = DatasetConfig {
            count: 400,
            ..Default::default()
        };
        let data = make_dataset(&cfg, &steering()).unwrap();
        for (i, s) in data.iter().enumerate() {
            assert_eq!(s.scene.len(), if i % 2 == 0 { 1 } else { 2 });
            assert!((0.0..=10.0).contains(&s.snr_db) && s.snr_db.fract() == 0.0);
        }
    }

    #[test]
    fn measured_noise_power_matches_configured_variance() {
        let r = steering();
        let cfg = DatasetConfig {
            count: 10_000,
            seed: 5,
            ..Default::default()
        };
        let data = make_dataset(&cfg, &r).unwrap();
        let (mut measured, mut expected) = (0.0, 0.0);
        for s in &data {
            let clean = r.apply(&s.gamma_true(r.cols()));
            measured += s.g.iter().zip(&clean).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
            expected += s.noise_variance * r.rows() as f64;
        }
        assert!((measured / expected - 1.0).abs() < 0.05);
    }

    #[test]
    fn amplitude_ratio_override() {
        let cfg = DatasetConfig {
            kind: DatasetKind::Double,
            count: 10,
            fixed_amplitude_ratio: Some(4.0),
            fixed_phase_difference: Some(0.5),
            ..Default::default()
        };
        for s in make_dataset(&cfg, &steering()).unwrap() {
            let [a, b] = [s.scene.scatterers[0], s.scene.scatterers[1]];
            assert!((a.amplitude / b.amplitude - 4.0).abs() < 1e-12);
            assert!(((b.phase - a.phase).rem_euclid(TAU) - 0.5).abs() < 1e-9);
        }
    }
}
