//! Bloch bands of the untilted lattice and the band-gap / phase formulas.
//!
//! Units: energies in recoil energies, quasi-momenta in recoil momenta
//! (zone edge at |k| = 1), times in ħ/E_rec. In the plane-wave basis
//! e^{i(k+2n)x}, n = -N..N, the lattice couples neighbouring momenta with
//! amplitude V0/4, which is the Mathieu problem with q = V0/4.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BASIS_HALFWIDTH: usize = 15;
pub const DEFAULT_BZ_GRID_POINTS: usize = 512;
/// Smallest truncation for which bands 1 and 2 are trusted.
pub const MIN_ACCURATE_HALFWIDTH: usize = 5;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Dimensionless definition of one lattice problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeParams {
    /// Lattice depth in recoil energies.
    pub v0: f64,
    /// Force in recoil energies per lattice period.
    pub f0: f64,
    /// Initial quasi-momentum in recoil momenta, |k0| <= 1.
    #[serde(default)]
    pub k0: f64,
    #[serde(default = "default_halfwidth")]
    pub basis_halfwidth: usize,
    #[serde(default = "default_grid")]
    pub bz_grid_points: usize,
}

fn default_halfwidth() -> usize {
    DEFAULT_BASIS_HALFWIDTH
}

fn default_grid() -> usize {
    DEFAULT_BZ_GRID_POINTS
}

impl LatticeParams {
    pub fn new(v0: f64, f0: f64, k0: f64) -> Self {
        Self {
            v0,
            f0,
            k0,
            basis_halfwidth: DEFAULT_BASIS_HALFWIDTH,
            bz_grid_points: DEFAULT_BZ_GRID_POINTS,
        }
    }

    pub fn with_basis_halfwidth(mut self, n: usize) -> Self {
        self.basis_halfwidth = n;
        self
    }

    pub fn with_grid_points(mut self, points: usize) -> Self {
        self.bz_grid_points = points;
        self
    }

    /// Number of plane waves, 2N + 1.
    pub fn dim(&self) -> usize {
        2 * self.basis_halfwidth + 1
    }

    /// Checks the static invariants. `F0 = 0` is allowed here; operations
    /// that need a tilt check it themselves.
    pub fn validate(&self) -> Result<()> {
        if !(self.v0.is_finite() && self.v0 >= 0.0) {
            return Err(Error::invalid(format!("V0 must be finite and >= 0, got {}", self.v0)));
        }
        if !(self.f0.is_finite() && self.f0 >= 0.0) {
            return Err(Error::invalid(format!("F0 must be finite and >= 0, got {}", self.f0)));
        }
        if !(self.k0.is_finite() && self.k0.abs() <= 1.0) {
            return Err(Error::invalid(format!("|k0| must be <= 1, got {}", self.k0)));
        }
        if self.basis_halfwidth < 1 {
            return Err(Error::invalid("basis_halfwidth must be >= 1"));
        }
        if self.bz_grid_points < 2 {
            return Err(Error::invalid("bz_grid_points must be >= 2"));
        }
        Ok(())
    }

    pub(crate) fn validate_tilted(&self) -> Result<()> {
        self.validate()?;
        if self.f0 <= 0.0 {
            return Err(Error::invalid(format!(
                "F0 must be > 0 for a tilted run, got {}",
                self.f0
            )));
        }
        Ok(())
    }

    /// Rate of change of the quasi-momentum, dk/dt = F0/π in recoil units.
    pub fn sweep_velocity(&self) -> f64 {
        self.f0 / PI
    }
}

/// Eigenvalues (ascending) and eigenvectors (columns, same order) at one k.
#[derive(Debug, Clone)]
pub struct BlochEigen {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl BlochEigen {
    pub fn gap(&self, lower: usize, upper: usize) -> f64 {
        self.energies[upper] - self.energies[lower]
    }
}

/// Band energies and gauge-fixed eigenvectors on a quasi-momentum grid.
///
/// The Hamiltonian is real symmetric, so the eigenvectors are real and the
/// gauge freedom reduces to a sign per band and grid point.
#[derive(Debug, Clone)]
pub struct BlochSpectrum {
    pub k_grid: Vec<f64>,
    /// `energies[i][alpha]` is band `alpha` (0-based) at `k_grid[i]`.
    pub energies: Vec<Vec<f64>>,
    /// `eigenvectors[i]` holds band vectors as columns.
    pub eigenvectors: Vec<DMatrix<f64>>,
}

impl BlochSpectrum {
    pub fn band(&self, alpha: usize) -> Vec<f64> {
        self.energies.iter().map(|e| e[alpha]).collect()
    }
}

/// Momentum-space Hamiltonian at quasi-momentum `k`: diagonal (k + 2n)^2,
/// nearest-neighbour coupling V0/4. `k` may lie outside the first zone.
pub fn bloch_hamiltonian(params: &LatticeParams, k: f64) -> DMatrix<f64> {
    let n = params.basis_halfwidth as i64;
    let dim = params.dim();
    let coupling = params.v0 / 4.0;
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            let m = i as i64 - n;
            let p = k + 2.0 * m as f64;
            p * p
        } else if i.abs_diff(j) == 1 {
            coupling
        } else {
            0.0
        }
    })
}

/// Diagonalizes a real symmetric matrix, returning ascending eigenpairs.
pub(crate) fn sorted_eigen(matrix: DMatrix<f64>, k: f64) -> Result<BlochEigen> {
    let eig = SymmetricEigen::try_new(matrix, EIGEN_EPS, EIGEN_MAX_ITER).ok_or(Error::EigenSolver { k })?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    Ok(BlochEigen { energies, vectors })
}

pub fn bloch_eigensystem(params: &LatticeParams, k: f64) -> Result<BlochEigen> {
    sorted_eigen(bloch_hamiltonian(params, k), k)
}

/// Flips column signs of `current` so each has a non-negative overlap with
/// the matching column of `previous`.
pub(crate) fn align_signs(previous: &DMatrix<f64>, current: &mut DMatrix<f64>) {
    for c in 0..current.ncols() {
        if previous.column(c).dot(&current.column(c)) < 0.0 {
            current.column_mut(c).neg_mut();
        }
    }
}

/// Uniform grid over the first zone, [-1, 1].
pub fn zone_grid(points: usize) -> Vec<f64> {
    let step = 2.0 / (points - 1) as f64;
    (0..points).map(|i| -1.0 + step * i as f64).collect()
}

pub fn band_spectrum(params: &LatticeParams) -> Result<BlochSpectrum> {
    params.validate()?;
    let k_grid = zone_grid(params.bz_grid_points);
    let mut energies = Vec::with_capacity(k_grid.len());
    let mut eigenvectors: Vec<DMatrix<f64>> = Vec::with_capacity(k_grid.len());
    for &k in &k_grid {
        let mut eig = bloch_eigensystem(params, k)?;
        if let Some(prev) = eigenvectors.last() {
            align_signs(prev, &mut eig.vectors);
        }
        energies.push(eig.energies);
        eigenvectors.push(eig.vectors);
    }
    Ok(BlochSpectrum {
        k_grid,
        energies,
        eigenvectors,
    })
}

/// Zone average of ε2(k) − ε1(k) by the trapezoidal rule.
///
/// The bands are even in k, so the average is taken over [0, 1] with
/// `bz_grid_points` nodes.
pub fn average_band_gap(params: &LatticeParams) -> Result<f64> {
    params.validate()?;
    let points = params.bz_grid_points;
    let step = 1.0 / (points - 1) as f64;
    let mut sum = 0.0;
    for i in 0..points {
        let k = step * i as f64;
        let eig = bloch_eigensystem(params, k)?;
        let weight = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
        sum += weight * eig.gap(0, 1);
    }
    Ok(sum * step)
}

/// Landau-Zener gap integration, accurate for shallow lattices.
pub fn gap_estimate_small_v(v0: f64) -> Result<f64> {
    if !(v0.is_finite() && v0 >= 0.0) {
        return Err(Error::invalid(format!("V0 must be >= 0, got {v0}")));
    }
    if v0 == 0.0 {
        return Ok(2.0);
    }
    Ok(0.25 * (64.0 + v0 * v0).sqrt() + v0 * v0 / 32.0 * (8.0 / v0).asinh())
}

/// Harmonic-oscillator estimate for deep lattices.
pub fn gap_estimate_large_v(v0: f64) -> Result<f64> {
    if !(v0.is_finite() && v0 > 0.25) {
        return Err(Error::invalid(format!("large-V estimate needs V0 > 0.25, got {v0}")));
    }
    Ok((4.0 * v0).sqrt() - 1.0)
}

pub fn bloch_period(f0: f64) -> Result<f64> {
    if !(f0.is_finite() && f0 > 0.0) {
        return Err(Error::invalid(format!("F0 must be > 0, got {f0}")));
    }
    Ok(2.0 * PI / f0)
}

/// Relative phase between bands 2 and 1 accumulated over one Bloch period.
pub fn bloch_phase(params: &LatticeParams) -> Result<f64> {
    params.validate_tilted()?;
    Ok(2.0 * PI / params.f0 * average_band_gap(params)?)
}

/// Force giving `phi_over_2pi` for a known average gap: F0 = ⟨ΔE⟩ / (φ/2π).
pub fn force_for_phase(average_gap: f64, phi_over_2pi: f64) -> Result<f64> {
    if !(phi_over_2pi.is_finite() && phi_over_2pi > 0.0) {
        return Err(Error::invalid(format!("phi/2pi must be > 0, got {phi_over_2pi}")));
    }
    Ok(average_gap / phi_over_2pi)
}

/// Splits `k` into a first-zone representative in [-1, 1) and the number of
/// reciprocal-lattice steps removed: k = folded + 2 * shift.
pub fn fold_quasi_momentum(k: f64) -> (f64, i64) {
    let shift = ((k + 1.0) / 2.0).floor();
    (k - 2.0 * shift, shift as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn free_particle_hamiltonian() {
        let p = LatticeParams::new(0.0, 1.0, 0.0).with_basis_halfwidth(1);
        let h = bloch_hamiltonian(&p, 0.0);
        assert_eq!(
            h,
            DMatrix::from_row_slice(3, 3, &[4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0])
        );
    }

    #[test]
    fn coupling_is_quarter_depth() {
        let p = LatticeParams::new(4.0, 1.0, 0.0);
        let h = bloch_hamiltonian(&p, 0.37);
        for i in 0..p.dim() - 1 {
            assert_eq!(h[(i, i + 1)], 1.0);
            assert_eq!(h[(i + 1, i)], 1.0);
        }
        assert_eq!(h[(0, 2)], 0.0);
    }

    #[test]
    fn zone_edge_splitting_matches_degenerate_perturbation_theory() {
        let p = LatticeParams::new(2.0, 1.0, 0.0).with_basis_halfwidth(1);
        let eig = bloch_eigensystem(&p, 1.0).unwrap();
        // ε± = 1 ± V0/4 to first order; the third plane wave shifts both slightly.
        assert_abs_diff_eq!(eig.gap(0, 1), 1.0, epsilon = 0.05);
        assert_abs_diff_eq!(eig.energies[0], 0.5, epsilon = 0.05);
    }

    #[test]
    fn free_bands_fold_exactly() {
        let p = LatticeParams::new(0.0, 1.0, 0.0).with_grid_points(33);
        let spec = band_spectrum(&p).unwrap();
        for (k, e) in spec.k_grid.iter().zip(&spec.energies) {
            assert_abs_diff_eq!(e[0], k * k, epsilon = 1e-12);
            assert_abs_diff_eq!(e[1], (2.0 - k.abs()).powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn spectrum_invariants() {
        let p = LatticeParams::new(3.0, 1.0, 0.0).with_grid_points(65);
        let spec = band_spectrum(&p).unwrap();
        let m = spec.k_grid.len();
        for i in 0..m {
            let e = &spec.energies[i];
            assert!(e.windows(2).all(|w| w[0] <= w[1]));
            for (a, b) in e.iter().zip(&spec.energies[m - 1 - i]) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
            for c in 0..p.dim() {
                assert_abs_diff_eq!(spec.eigenvectors[i].column(c).norm(), 1.0, epsilon = 1e-12);
            }
        }
        // parallel transport: successive overlaps of band 1 are positive
        for w in spec.eigenvectors.windows(2) {
            assert!(w[0].column(0).dot(&w[1].column(0)) > 0.0);
        }
    }

    #[test]
    fn gap_at_zone_edge_for_shallow_lattice() {
        let p = LatticeParams::new(2.0, 1.0, 0.0);
        let eig = bloch_eigensystem(&p, 1.0).unwrap();
        assert!((eig.gap(0, 1) - 1.0).abs() < 0.05);
    }

    #[test]
    fn small_v_estimate_values() {
        assert_eq!(gap_estimate_small_v(0.0).unwrap(), 2.0);
        assert_abs_diff_eq!(gap_estimate_small_v(1e-9).unwrap(), 2.0, epsilon = 1e-12);
        // 0.25 * sqrt(80) + 0.5 * asinh(2)
        assert_abs_diff_eq!(
            gap_estimate_small_v(4.0).unwrap(),
            2.957_885_715_089_195,
            epsilon = 1e-12
        );
        assert!(gap_estimate_small_v(1.0).unwrap() > 2.0);
        assert!(gap_estimate_small_v(-1.0).is_err());
    }

    #[test]
    fn large_v_estimate_values() {
        assert_eq!(gap_estimate_large_v(4.0).unwrap(), 3.0);
        assert_eq!(gap_estimate_large_v(9.0).unwrap(), 5.0);
        assert_eq!(gap_estimate_large_v(25.0).unwrap(), 9.0);
        assert!(gap_estimate_large_v(0.25).is_err());
    }

    #[test]
    fn bloch_period_values() {
        assert_abs_diff_eq!(bloch_period(1.0).unwrap(), 2.0 * PI);
        assert_abs_diff_eq!(bloch_period(2.0 * PI).unwrap(), 1.0);
        assert_abs_diff_eq!(bloch_period(0.383).unwrap(), 16.405_183_569_659_495, epsilon = 1e-12);
        assert!(bloch_period(0.0).is_err());
        assert!(bloch_period(-1.0).is_err());
    }

    #[test]
    fn free_average_gap_and_phase() {
        let p = LatticeParams::new(0.0, 1.0, 0.0);
        assert_abs_diff_eq!(average_band_gap(&p).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bloch_phase(&p).unwrap(), 4.0 * PI, epsilon = 1e-10);
    }

    #[test]
    fn phase_by_construction() {
        for (v0, target) in [(1.5, 2.0), (4.5, 1.0)] {
            let gap = average_band_gap(&LatticeParams::new(v0, 1.0, 0.0)).unwrap();
            let f0 = force_for_phase(gap, target).unwrap();
            let phi = bloch_phase(&LatticeParams::new(v0, f0, 0.0)).unwrap();
            assert_abs_diff_eq!(phi, 2.0 * PI * target, epsilon = 1e-10);
        }
    }

    #[test]
    fn fold_into_first_zone() {
        assert_eq!(fold_quasi_momentum(0.3), (0.3, 0));
        let (k, m) = fold_quasi_momentum(2.2);
        assert_abs_diff_eq!(k, 0.2, epsilon = 1e-12);
        assert_eq!(m, 1);
        assert_eq!(fold_quasi_momentum(1.0), (-1.0, 1));
        let (k, m) = fold_quasi_momentum(-3.5);
        assert_abs_diff_eq!(k, 0.5, epsilon = 1e-12);
        assert_eq!(m, -2);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(LatticeParams::new(-1.0, 1.0, 0.0).validate().is_err());
        assert!(LatticeParams::new(1.0, 1.0, 1.5).validate().is_err());
        assert!(LatticeParams::new(1.0, 0.0, 0.0).validate().is_ok());
        assert!(bloch_phase(&LatticeParams::new(1.0, 0.0, 0.0)).is_err());
        assert!(LatticeParams::new(1.0, 1.0, 0.0)
            .with_grid_points(1)
            .validate()
            .is_err());
    }
}
