//! Acquisition geometry, elevation grid and the steering matrix.
//!
//! The steering matrix maps a reflectivity profile sampled on the elevation
//! grid to the complex measurements of the baseline stack:
//! `R[n, l] = exp(-j 2π ξ_n s_l)` with elevation frequency `ξ_n = -2 b_n / (λ r)`.
//! Wavelength and slant range only ever appear as the product `λ r`, so the
//! geometry stores that product directly.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default `λ r` product in m². With 25 baselines spread over 270 m this
/// gives a Rayleigh resolution of 42 m.
pub const DEFAULT_LAMBDA_RANGE: f64 = 22_680.0;

/// Perpendicular baselines of the stack plus the `λ r` product.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionGeometry {
    baselines: Vec<f64>,
    lambda_range: f64,
}

impl AcquisitionGeometry {
    pub fn new(baselines: Vec<f64>, lambda_range: f64) -> Result<Self> {
        if baselines.len() < 2 {
            return Err(Error::Geometry(format!(
                "need at least 2 baselines, got {}",
                baselines.len()
            )));
        }
        if let Some(b) = baselines.iter().find(|b| !b.is_finite()) {
            return Err(Error::Geometry(format!("non-finite baseline {b}")));
        }
        if !(lambda_range.is_finite() && lambda_range > 0.0) {
            return Err(Error::Geometry(format!(
                "lambda*range must be positive and finite, got {lambda_range}"
            )));
        }
        let (lo, hi) = min_max(&baselines);
        if hi - lo <= 0.0 {
            return Err(Error::Geometry("all baselines are equal".into()));
        }
        Ok(Self {
            baselines,
            lambda_range,
        })
    }

    pub fn from_wavelength_range(baselines: Vec<f64>, wavelength: f64, range: f64) -> Result<Self> {
        if !(wavelength > 0.0 && range > 0.0) {
            return Err(Error::Geometry(format!(
                "wavelength and range must be positive (got {wavelength}, {range})"
            )));
        }
        Self::new(baselines, wavelength * range)
    }

    /// `count` baselines spaced regularly over `[first, last]`.
    pub fn regular(count: usize, first: f64, last: f64, lambda_range: f64) -> Result<Self> {
        if count < 2 {
            return Err(Error::Geometry(format!("need at least 2 baselines, got {count}")));
        }
        let step = (last - first) / (count - 1) as f64;
        let baselines = (0..count).map(|i| first + step * i as f64).collect();
        Self::new(baselines, lambda_range)
    }

    /// 25 regular baselines over [-135, 135] m, `λ r` = 22680 m².
    pub fn default_stack() -> Self {
        Self::regular(25, -135.0, 135.0, DEFAULT_LAMBDA_RANGE).expect("valid default geometry")
    }

    /// Six baselines spanning [-565.5, 373.2] m, regularly spaced.
    pub fn six_baseline_stack() -> Self {
        Self::regular(6, -565.5, 373.2, DEFAULT_LAMBDA_RANGE).expect("valid six-baseline geometry")
    }

    pub fn baselines(&self) -> &[f64] {
        &self.baselines
    }

    pub fn num_baselines(&self) -> usize {
        self.baselines.len()
    }

    pub fn lambda_range(&self) -> f64 {
        self.lambda_range
    }

    /// Elevation frequencies `ξ_n = -2 b_n / (λ r)` in cycles per meter.
    pub fn elevation_frequencies(&self) -> Vec<f64> {
        self.baselines
            .iter()
            .map(|b| -2.0 * b / self.lambda_range)
            .collect()
    }

    /// Baseline aperture `max(b) - min(b)`.
    pub fn aperture(&self) -> f64 {
        let (lo, hi) = min_max(&self.baselines);
        hi - lo
    }

    /// Rayleigh elevation resolution `λ r / (2 Δb)` in meters.
    pub fn rayleigh_resolution(&self) -> f64 {
        self.lambda_range / (2.0 * self.aperture())
    }

    /// Population standard deviation of the baselines.
    pub fn baseline_std(&self) -> f64 {
        let n = self.baselines.len() as f64;
        let mean = self.baselines.iter().sum::<f64>() / n;
        (self.baselines.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    /// Same geometry with every baseline replaced.
    pub fn with_baselines(&self, baselines: Vec<f64>) -> Result<Self> {
        Self::new(baselines, self.lambda_range)
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Regular elevation grid, ascending; index 0 is `s_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElevationGrid {
    s_min: f64,
    spacing: f64,
    len: usize,
}

impl ElevationGrid {
    pub fn new(s_min: f64, s_max: f64, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Geometry(format!("grid spacing must be positive, got {spacing}")));
        }
        if !(s_min.is_finite() && s_max.is_finite()) || s_max <= s_min {
            return Err(Error::Geometry(format!("invalid grid bounds [{s_min}, {s_max}]")));
        }
        let len = ((s_max - s_min) / spacing).round() as usize + 1;
        if len < 2 {
            return Err(Error::Geometry(format!("grid needs at least 2 nodes, got {len}")));
        }
        Ok(Self { s_min, spacing, len })
    }

    /// 0 m to 200 m at 1 m sampling (201 nodes).
    pub fn default_grid() -> Self {
        Self::new(0.0, 200.0, 1.0).expect("valid default grid")
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn s_min(&self) -> f64 {
        self.s_min
    }

    pub fn s_max(&self) -> f64 {
        self.position(self.len - 1)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total extent `Δs`.
    pub fn extent(&self) -> f64 {
        self.spacing * (self.len - 1) as f64
    }

    pub fn position(&self, index: usize) -> f64 {
        self.s_min + self.spacing * index as f64
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.len).map(|l| self.position(l)).collect()
    }

    /// Index of the node at `elevation`, if it lies on the grid.
    pub fn index_of(&self, elevation: f64) -> Option<usize> {
        let t = (elevation - self.s_min) / self.spacing;
        let idx = t.round();
        if (t - idx).abs() > 1e-6 || idx < 0.0 || idx as usize >= self.len {
            return None;
        }
        Some(idx as usize)
    }

    /// Nearest node index, clamped to the grid.
    pub fn nearest_index(&self, elevation: f64) -> usize {
        let t = ((elevation - self.s_min) / self.spacing).round();
        t.clamp(0.0, (self.len - 1) as f64) as usize
    }
}

/// The complex N×L dictionary of the imaging model.
#[derive(Debug, Clone)]
pub struct SteeringMatrix {
    entries: Array2<Complex64>,
    geometry: AcquisitionGeometry,
    grid: ElevationGrid,
}

impl SteeringMatrix {
    pub fn build(geometry: &AcquisitionGeometry, grid: &ElevationGrid) -> Result<Self> {
        let freqs = geometry.elevation_frequencies();
        if freqs.iter().any(|f| !f.is_finite()) {
            return Err(Error::Geometry("non-finite elevation frequency".into()));
        }
        let entries = Array2::from_shape_fn((freqs.len(), grid.len()), |(n, l)| {
            Complex64::from_polar(1.0, -2.0 * PI * freqs[n] * grid.position(l))
        });
        Ok(Self {
            entries,
            geometry: geometry.clone(),
            grid: *grid,
        })
    }

    /// Replace the dictionary entries, keeping the nominal geometry; lets
    /// unit tests build shapes the geometry invariants forbid.
    #[cfg(test)]
    pub(crate) fn with_entries(mut self, entries: Array2<Complex64>) -> Self {
        self.entries = entries;
        self
    }

    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    pub fn geometry(&self) -> &AcquisitionGeometry {
        &self.geometry
    }

    pub fn grid(&self) -> &ElevationGrid {
        &self.grid
    }

    /// Number of measurements N.
    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of grid nodes L.
    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn column(&self, l: usize) -> Vec<Complex64> {
        self.entries.column(l).to_vec()
    }

    /// `R γ`.
    pub fn apply(&self, gamma: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(gamma.len(), self.cols());
        self.entries
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(gamma).map(|(r, x)| r * x).sum())
            .collect()
    }

    /// `R^H v`.
    pub fn adjoint_apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(v.len(), self.rows());
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols()];
        for (row, vn) in self.entries.rows().into_iter().zip(v) {
            for (o, r) in out.iter_mut().zip(row.iter()) {
                *o += r.conj() * vn;
            }
        }
        out
    }

    /// `R^H` as an L×N matrix.
    pub fn adjoint(&self) -> Array2<Complex64> {
        self.entries.t().mapv(|z| z.conj())
    }

    pub fn stacked(&self) -> StackedMatrix {
        StackedMatrix::from_complex(&self.entries).expect("steering entries are finite")
    }
}

/// Real `2m×2n` embedding `[[Re, -Im], [Im, Re]]` of a complex `m×n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedMatrix(Array2<f64>);

impl StackedMatrix {
    pub fn from_complex(m: &Array2<Complex64>) -> Result<Self> {
        if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidArgument("non-finite matrix entry".into()));
        }
        Ok(Self(stack_parts(&m.mapv(|z| z.re), &m.mapv(|z| z.im))))
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    /// Recover the complex matrix from the top-left and bottom-left blocks.
    pub fn unstack(&self) -> Array2<Complex64> {
        let (r2, c2) = self.0.dim();
        let (rows, cols) = (r2 / 2, c2 / 2);
        Array2::from_shape_fn((rows, cols), |(i, j)| {
            Complex64::new(self.0[[i, j]], self.0[[i + rows, j]])
        })
    }

    /// `stack(A) · stack_vector(x)`.
    pub fn mul_vector(&self, x: &[f64]) -> Vec<f64> {
        self.0.dot(&Array1::from(x.to_vec())).to_vec()
    }
}

/// Build `[[re, -im], [im, re]]` from real and imaginary parts.
pub fn stack_parts(re: &Array2<f64>, im: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = re.dim();
    let mut out = Array2::zeros((2 * rows, 2 * cols));
    for i in 0..rows {
        for j in 0..cols {
            let (a, b) = (re[[i, j]], im[[i, j]]);
            out[[i, j]] = a;
            out[[i, j + cols]] = -b;
            out[[i + rows, j]] = b;
            out[[i + rows, j + cols]] = a;
        }
    }
    out
}

pub fn stack_real_imag(m: &Array2<Complex64>) -> Result<StackedMatrix> {
    StackedMatrix::from_complex(m)
}

/// `[Re(v); Im(v)]`.
pub fn stack_vector(v: &[Complex64]) -> Result<Vec<f64>> {
    if v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::InvalidArgument("non-finite vector entry".into()));
    }
    Ok(v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect())
}

pub fn unstack_vector(v: &[f64]) -> Vec<Complex64> {
    let half = v.len() / 2;
    (0..half).map(|i| Complex64::new(v[i], v[i + half])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_baseline_row_is_all_ones() {
        let geo = AcquisitionGeometry::new(vec![0.0, 50.0], DEFAULT_LAMBDA_RANGE).unwrap();
        let r = SteeringMatrix::build(&geo, &ElevationGrid::default_grid()).unwrap();
        for z in r.entries().row(0) {
            assert_eq!(*z, c(1.0, 0.0));
        }
    }

    #[test]
    fn half_cycle_entry_is_minus_one() {
        let geo = AcquisitionGeometry::new(vec![-135.0, 135.0], 22_680.0).unwrap();
        let grid = ElevationGrid::new(0.0, 84.0, 42.0).unwrap();
        let r = SteeringMatrix::build(&geo, &grid).unwrap();
        let z = r.entries()[[0, 1]];
        assert!((z - c(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn opposite_baselines_are_conjugate() {
        let geo = AcquisitionGeometry::new(vec![-37.5, 37.5, 90.0], DEFAULT_LAMBDA_RANGE).unwrap();
        let r = SteeringMatrix::build(&geo, &ElevationGrid::default_grid()).unwrap();
        for l in 0..r.cols() {
            assert!((r.entries()[[0, l]] - r.entries()[[1, l]].conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn entries_have_unit_modulus() {
        let r = SteeringMatrix::build(&AcquisitionGeometry::default_stack(), &ElevationGrid::default_grid())
            .unwrap();
        for z in r.entries() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rayleigh_resolution_of_default_stacks() {
        assert!((AcquisitionGeometry::default_stack().rayleigh_resolution() - 42.0).abs() < 1e-12);
        let six = AcquisitionGeometry::six_baseline_stack().rayleigh_resolution();
        assert!((six - 12.08).abs() < 0.01, "{six}");
    }

    #[test]
    fn rayleigh_resolution_scaling_and_shift() {
        let g = AcquisitionGeometry::regular(10, -50.0, 50.0, 1000.0).unwrap();
        let wide = AcquisitionGeometry::regular(10, -100.0, 100.0, 1000.0).unwrap();
        assert!((g.rayleigh_resolution() - 2.0 * wide.rayleigh_resolution()).abs() < 1e-12);
        let shifted = g.with_baselines(g.baselines().iter().map(|b| b + 321.5).collect()).unwrap();
        assert!((g.rayleigh_resolution() - shifted.rayleigh_resolution()).abs() < 1e-12);
    }

    #[test]
    fn default_baseline_std() {
        let std = AcquisitionGeometry::default_stack().baseline_std();
        assert!((std - 81.12).abs() < 0.01, "{std}");
    }

    #[test]
    fn geometry_rejects_bad_input() {
        assert!(AcquisitionGeometry::new(vec![1.0], 1.0).is_err());
        assert!(AcquisitionGeometry::new(vec![1.0, 1.0], 1.0).is_err());
        assert!(AcquisitionGeometry::new(vec![0.0, f64::NAN], 1.0).is_err());
        assert!(AcquisitionGeometry::new(vec![0.0, 1.0], 0.0).is_err());
        assert!(AcquisitionGeometry::from_wavelength_range(vec![0.0, 1.0], 0.031, 0.0).is_err());
    }

    #[test]
    fn grid_counts_and_lookup() {
        let g = ElevationGrid::default_grid();
        assert_eq!(g.len(), 201);
        assert_eq!(g.index_of(100.0), Some(100));
        assert_eq!(g.index_of(100.5), None);
        assert_eq!(g.index_of(201.0), None);
        assert!(ElevationGrid::new(0.0, 1.0, 0.0).is_err());
        assert!(ElevationGrid::new(0.0, 0.2, 1.0).is_err());
    }

    #[test]
    fn stacking_single_imaginary_unit() {
        let m = Array2::from_elem((1, 1), c(0.0, 1.0));
        let s = stack_real_imag(&m).unwrap();
        assert_eq!(s.as_array(), &ndarray::array![[0.0, -1.0], [1.0, 0.0]]);
    }

    #[test]
    fn stacking_real_matrix_is_block_diagonal() {
        let m = Array2::from_shape_fn((2, 3), |(i, j)| c((i * 3 + j) as f64, 0.0));
        let s = stack_real_imag(&m).unwrap().into_array();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(s[[i, j]], s[[i + 2, j + 3]]);
                assert_eq!(s[[i, j + 3]], 0.0);
                assert_eq!(s[[i + 2, j]], 0.0);
            }
        }
    }

    #[test]
    fn stacking_rejects_non_finite() {
        let m = Array2::from_elem((1, 1), c(f64::INFINITY, 0.0));
        assert!(stack_real_imag(&m).is_err());
        assert!(stack_vector(&[c(0.0, f64::NAN)]).is_err());
    }

    #[test]
    fn stacked_product_matches_complex_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = Array2::from_shape_fn((4, 6), |_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let x: Vec<Complex64> = (0..6)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            // complex oracle, written out explicitly
            let mut ax = vec![c(0.0, 0.0); 4];
            for i in 0..4 {
                for j in 0..6 {
                    let (p, q) = (a[[i, j]], x[j]);
                    ax[i] += c(p.re * q.re - p.im * q.im, p.re * q.im + p.im * q.re);
                }
            }
            let stacked = stack_real_imag(&a).unwrap().mul_vector(&stack_vector(&x).unwrap());
            let expected = stack_vector(&ax).unwrap();
            for (s, e) in stacked.iter().zip(&expected) {
                assert!((s - e).abs() < 1e-12);
            }
            assert_eq!(stack_real_imag(&a).unwrap().unstack(), a);
            assert_eq!(unstack_vector(&stack_vector(&x).unwrap()), x);
        }
    }
}
