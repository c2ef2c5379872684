//! Statistical checks of the data generator.

use num_complex::Complex64;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use tomonet::geometry::{AcquisitionGeometry, ElevationGrid, SteeringMatrix};
use tomonet::simulation::{make_dataset, DatasetConfig, DatasetKind};

fn r() -> SteeringMatrix {
    SteeringMatrix::build(&AcquisitionGeometry::default_stack(), &ElevationGrid::default_grid()).unwrap()
}

/// Pearson statistic of `values` against equal-width bins on `[lo, hi)`.
fn uniform_chi2(values: &[f64], lo: f64, hi: f64, bins: usize) -> f64 {
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / (hi - lo)) * bins as f64) as usize;
        counts[k.min(bins - 1)] += 1;
    }
    let expect = values.len() as f64 / bins as f64;
    counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum()
}

#[test]
fn noise_power_matches_the_configured_variance() {
    let r = r();
    let cfg = DatasetConfig {
        count: 20_000,
        seed: 17,
        ..Default::default()
    };
    let data = make_dataset(&cfg, &r).unwrap();
    // normalized residual power 2|ε|²/σ² is χ² with 2 degrees of freedom per entry
    let mut total = 0.0;
    let mut per_sample = Vec::with_capacity(data.len());
    for s in &data {
        let clean = r.apply(&s.gamma_true(r.cols()));
        let power: f64 = s.g.iter().zip(&clean).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / s.noise_variance;
        total += power;
        per_sample.push(2.0 * power);
    }
    let mean = total / (data.len() as f64 * 25.0);
    assert!((mean - 1.0).abs() < 0.01, "empirical noise power ratio {mean}");

    // each sample's 2·Σ|ε|²/σ² is χ²(50); compare decile occupancy
    let chi = ChiSquared::new(50.0).unwrap();
    let probs: Vec<f64> = per_sample.iter().map(|&x| chi.cdf(x)).collect();
    let stat = uniform_chi2(&probs, 0.0, 1.0, 10);
    let critical = ChiSquared::new(9.0).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi-square {stat} >= {critical}");
}

#[test]
fn amplitudes_are_uniform_on_one_to_four() {
    let r = r();
    let cfg = DatasetConfig {
        kind: DatasetKind::Single,
        count: 100_000,
        noise_free: true,
        seed: 3,
        ..Default::default()
    };
    let amps: Vec<f64> = make_dataset(&cfg, &r)
        .unwrap()
        .iter()
        .map(|s| s.scene.scatterers[0].amplitude)
        .collect();
    assert!(amps.iter().all(|&a| (1.0..4.0).contains(&a)));
    let stat = uniform_chi2(&amps, 1.0, 4.0, 20);
    let critical = ChiSquared::new(19.0).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi-square {stat} >= {critical}");
}

#[test]
fn worst_case_doubles_share_amplitude_and_phase() {
    let r = r();
    let cfg = DatasetConfig {
        kind: DatasetKind::Double,
        count: 200,
        worst_case: true,
        fixed_alpha: Some(0.6),
        seed: 8,
        ..Default::default()
    };
    for s in make_dataset(&cfg, &r).unwrap() {
        let [a, b] = [s.scene.scatterers[0], s.scene.scatterers[1]];
        assert_eq!(a.amplitude, b.amplitude);
        assert_eq!(a.phase, b.phase);
        assert_eq!((b.elevation - a.elevation).abs(), 25.0);
    }
}

#[test]
fn datasets_are_bit_reproducible() {
    let r = r();
    let cfg = DatasetConfig {
        count: 500,
        seed: 123,
        ..Default::default()
    };
    let a = make_dataset(&cfg, &r).unwrap();
    let b = make_dataset(&cfg, &r).unwrap();
    let bits = |d: &[tomonet::simulation::LabeledSample]| -> Vec<u64> {
        d.iter().flat_map(|s| s.g.iter().flat_map(|z: &Complex64| [z.re.to_bits(), z.im.to_bits()])).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    let c = make_dataset(&DatasetConfig { seed: 124, ..cfg }, &r).unwrap();
    assert_ne!(bits(&a), bits(&c));
}
