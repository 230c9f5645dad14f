//! Two-band cascade model: one Bloch period is a non-unitary 2×2 map on
//! {band 1, band 2} at the zone edge. Band 2 loses population to the
//! continuum (amplitude s23) and picks up the relative phase φ; the zone-edge
//! crossing mixes the bands with survival amplitude s12.
//!
//! Brute-force iteration of the map is the reference; the eigenvalue rate,
//! the projection Z and the closed-form Z are checked against it.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{average_band_gap, LatticeParams};

/// Eigenvalue-modulus ratio above which the model has no dominant mode.
pub const DEGENERACY_THRESHOLD: f64 = 1.0 - 1e-9;
/// Largest tolerated |closed form − projection| for Z.
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-6;

type Matrix2 = [[Complex64; 2]; 2];
type Vector2 = [Complex64; 2];

/// The per-period operator U together with its eigensystem.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    pub s12: f64,
    pub s23: f64,
    pub phi: f64,
    pub u: Matrix2,
    /// Dominant eigenvalue, |e1| >= |e2|.
    pub e1: Complex64,
    pub e2: Complex64,
    /// Unit eigenvectors, first nonzero component real-positive.
    pub psi1: Vector2,
    pub psi2: Vector2,
    /// Expansion of the initial state |1> = c1 ψ1 + c2 ψ2; `None` when the
    /// eigenvectors are parallel (defective U).
    pub c: Option<(Complex64, Complex64)>,
}

/// Survival amplitudes at the band 1/2 (zone edge) and band 2/3 (zone
/// centre) crossings, lowest order in V0.
pub fn survival_amplitudes(v0: f64, f0: f64) -> Result<(f64, f64)> {
    if !(v0.is_finite() && v0 >= 0.0) {
        return Err(Error::invalid(format!("V0 must be >= 0, got {v0}")));
    }
    if !(f0.is_finite() && f0 > 0.0) {
        return Err(Error::invalid(format!("F0 must be > 0, got {f0}")));
    }
    let pi2 = PI * PI;
    let p12 = (-pi2 * v0 * v0 / (32.0 * f0)).exp();
    let p23 = (-pi2 * v0.powi(4) / (32.0 * 256.0 * 2.0 * f0)).exp();
    Ok(((1.0 - p12).sqrt(), (1.0 - p23).sqrt()))
}

/// Landau-Zener transition probability for gap `delta_e` swept at `alpha`
/// (diabatic energies ±αt, ħ = 1).
pub fn lz_probability(delta_e: f64, alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("sweep rate must be > 0, got {alpha}")));
    }
    Ok((-PI * delta_e * delta_e / (4.0 * alpha)).exp())
}

fn check_amplitude(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::invalid(format!("{name} must lie in [0, 1], got {value}")));
    }
    Ok(())
}

fn normalize_phase(v: Vector2) -> Vector2 {
    let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let lead = if v[0].norm() > 1e-300 { v[0] } else { v[1] };
    let phase = lead / lead.norm();
    [v[0] / (phase * norm), v[1] / (phase * norm)]
}

/// Eigenvector of the 2×2 matrix `u` for eigenvalue `lambda`, picking the
/// better conditioned of the two row-derived candidates.
fn eigenvector(u: &Matrix2, lambda: Complex64) -> Vector2 {
    let from_first = [u[0][1], lambda - u[0][0]];
    let from_second = [lambda - u[1][1], u[1][0]];
    let n1 = from_first[0].norm_sqr() + from_first[1].norm_sqr();
    let n2 = from_second[0].norm_sqr() + from_second[1].norm_sqr();
    if n1.max(n2) < 1e-300 {
        // u is a multiple of the identity on this eigenspace
        return [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    }
    normalize_phase(if n1 >= n2 { from_first } else { from_second })
}

pub fn cascade_operator(s12: f64, s23: f64, phi: f64) -> Result<CascadeModel> {
    check_amplitude("s12", s12)?;
    check_amplitude("s23", s23)?;
    if !phi.is_finite() {
        return Err(Error::invalid("phi must be finite"));
    }
    let p12 = (1.0 - s12 * s12).sqrt();
    let loss = Complex64::from_polar(s23, phi);
    let u = [
        [Complex64::new(s12, 0.0), -p12 * loss],
        [Complex64::new(p12, 0.0), s12 * loss],
    ];

    let trace = u[0][0] + u[1][1];
    let det = u[0][0] * u[1][1] - u[0][1] * u[1][0];
    let root = (trace * trace - 4.0 * det).sqrt();
    let (plus, minus) = ((trace + root) / 2.0, (trace - root) / 2.0);
    let big = if plus.norm() >= minus.norm() { plus } else { minus };
    // the small root from Vieta avoids cancellation
    let small = if big.norm() > 0.0 {
        det / big
    } else {
        Complex64::new(0.0, 0.0)
    };
    let (e1, e2) = (big, small);

    let psi1 = eigenvector(&u, e1);
    let psi2 = eigenvector(&u, e2);
    let cross = psi1[0] * psi2[1] - psi2[0] * psi1[1];
    let c = if cross.norm() > 1e-14 {
        // Cramer's rule for [ψ1 ψ2] c = (1, 0)
        Some((psi2[1] / cross, -psi1[1] / cross))
    } else {
        None
    };
    Ok(CascadeModel {
        s12,
        s23,
        phi,
        u,
        e1,
        e2,
        psi1,
        psi2,
        c,
    })
}

impl CascadeModel {
    pub fn p12(&self) -> f64 {
        (1.0 - self.s12 * self.s12).sqrt()
    }

    pub fn determinant(&self) -> Complex64 {
        self.u[0][0] * self.u[1][1] - self.u[0][1] * self.u[1][0]
    }

    /// |e2| / |e1|; 1 when both vanish.
    pub fn eigen_ratio(&self) -> f64 {
        if self.e1.norm() == 0.0 {
            1.0
        } else {
            self.e2.norm() / self.e1.norm()
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.eigen_ratio() > DEGENERACY_THRESHOLD || self.c.is_none()
    }

    fn require_dominant(&self) -> Result<()> {
        if self.is_degenerate() {
            Err(Error::Degenerate {
                ratio: self.eigen_ratio(),
            })
        } else {
            Ok(())
        }
    }

    pub fn apply(&self, v: Vector2) -> Vector2 {
        [
            self.u[0][0] * v[0] + self.u[0][1] * v[1],
            self.u[1][0] * v[0] + self.u[1][1] * v[1],
        ]
    }
}

/// P_n = |<1|U^n|1>|^2 for n = 0..=n_max, by repeated multiplication.
pub fn iterate_cascade(model: &CascadeModel, n_max: usize) -> Result<Vec<f64>> {
    if n_max < 1 {
        return Err(Error::invalid("n_max must be >= 1"));
    }
    let mut state = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    for _ in 0..n_max {
        state = model.apply(state);
        out.push(state[0].norm_sqr());
    }
    Ok(out)
}

/// Like [`iterate_cascade`], but the band-2 amplitude is discarded after
/// every period, so nothing returns from the upper band.
pub fn iterate_cascade_emptied(model: &CascadeModel, n_max: usize) -> Result<Vec<f64>> {
    if n_max < 1 {
        return Err(Error::invalid("n_max must be >= 1"));
    }
    let mut state = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    for _ in 0..n_max {
        state = model.apply(state);
        state[1] = Complex64::new(0.0, 0.0);
        out.push(state[0].norm_sqr());
    }
    Ok(out)
}

/// Asymptotic decay rate per Bloch period, −log |e1|^2.
pub fn asymptotic_rate(model: &CascadeModel) -> Result<f64> {
    model.require_dominant()?;
    Ok(-(model.e1.norm_sqr()).ln())
}

/// Z = |c1|^2 |<1|ψ1>|^2, the back-extrapolated weight of the dominant mode.
pub fn z_projection(model: &CascadeModel) -> Result<f64> {
    model.require_dominant()?;
    let (c1, _) = model.c.expect("dominant model has an expansion");
    Ok(c1.norm_sqr() * model.psi1[0].norm_sqr())
}

/// Closed-form Z together with its auxiliary quantity K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormZ {
    pub z: f64,
    pub k: f64,
}

/// Auxiliary K = 2 (Re √X)^2 with X = tr(U)^2 − 4 det U.
///
/// Written out as Re X + |X|. The square on (1 + 2 s23 cos φ + s23^2) under
/// the root is required for |X|; see `k_matches_discriminant` in the tests.
pub fn k_auxiliary(s12: f64, s23: f64, phi: f64) -> f64 {
    let (c, c2) = (phi.cos(), (2.0 * phi).cos());
    let a2 = s12 * s12;
    let real = a2 * (1.0 + 2.0 * s23 * c + s23 * s23 * c2) - 4.0 * s23 * c;
    let ring = 1.0 + 2.0 * s23 * c + s23 * s23;
    let modulus_sq = a2 * a2 * ring * ring - 8.0 * s23 * a2 * (c + 2.0 * s23 + s23 * s23 * c) + 16.0 * s23 * s23;
    real + modulus_sq.max(0.0).sqrt()
}

/// Evaluates the closed-form Z without cross-checking.
pub fn z_closed_form_unchecked(s12: f64, s23: f64, phi: f64) -> ClosedFormZ {
    let k = k_auxiliary(s12, s23, phi);
    let (c, s) = (phi.cos(), phi.sin());
    let a2 = s12 * s12;
    let bracket = 2.0 - a2 * (1.0 + s23 * c);
    let sin_term = s23 * s23 * s * s;
    let num = (s12 / 2.0 * (1.0 - s23 * c) + (k / 8.0).sqrt()).powi(2)
        + sin_term * (bracket / (2.0 * k).sqrt() + s12 / 2.0).powi(2);
    let den = k / 2.0 + 2.0 * sin_term / k * bracket * bracket;
    ClosedFormZ { z: num / den, k }
}

/// Closed-form Z, reconciled against the eigen-projection (which wins).
pub fn z_closed_form(s12: f64, s23: f64, phi: f64) -> Result<ClosedFormZ> {
    let model = cascade_operator(s12, s23, phi)?;
    let projection = z_projection(&model)?;
    let closed = z_closed_form_unchecked(s12, s23, phi);
    if !closed.z.is_finite() || (closed.z - projection).abs() > CLOSED_FORM_TOLERANCE {
        return Err(Error::ClosedFormMismatch {
            closed: closed.z,
            projection,
        });
    }
    Ok(closed)
}

/// First-order estimate from extrapolating the second step back to t = 0.
pub fn z_first_order(s12: f64, s23: f64, phi: f64) -> Result<f64> {
    if !(s12 > 0.0 && s12 <= 1.0) {
        return Err(Error::invalid(format!("s12 must lie in (0, 1], got {s12}")));
    }
    let ratio = (1.0 - s12 * s12) / (s12 * s12);
    Ok(1.0 + 2.0 * s23 * ratio * phi.cos())
}

/// Per-step rates γ_n = −log(P_{n+1}/P_n), n = 0..=count-1.
pub fn step_rates(p: &[f64], count: usize) -> Result<Vec<f64>> {
    if p.len() < count + 1 {
        return Err(Error::InsufficientData(format!(
            "need {} probabilities, got {}",
            count + 1,
            p.len()
        )));
    }
    if let Some((index, &value)) = p[..=count].iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveProbability { index, value });
    }
    Ok(p[..=count].windows(2).map(|w| -(w[1] / w[0]).ln()).collect())
}

/// (Z_N, γ_N) from the first N+2 plateau values.
pub fn finite_step_estimates(p: &[f64], n: usize) -> Result<(f64, f64)> {
    if n < 1 {
        return Err(Error::invalid("N must be >= 1"));
    }
    let rates = step_rates(p, n + 1)?;
    let gamma_n = rates[n];
    let partial: f64 = rates[..n].iter().sum();
    Ok(((n as f64 * gamma_n - partial).exp(), gamma_n))
}

/// One point of a γ / Z resonance scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonancePoint {
    pub f0: f64,
    pub phi_over_2pi: f64,
    pub s12: f64,
    pub s23: f64,
    /// NaN where the model has no dominant eigenvalue.
    pub gamma_per_period: f64,
    pub z_closed: f64,
    pub z_projection: f64,
    pub z1: f64,
}

/// Evaluates the cascade at a fixed average gap; no lattice work.
pub fn resonance_point(average_gap: f64, v0: f64, f0: f64) -> Result<ResonancePoint> {
    let phi = 2.0 * PI * average_gap / f0;
    let (s12, s23) = survival_amplitudes(v0, f0)?;
    let model = cascade_operator(s12, s23, phi)?;
    let (gamma, zp, zc) = if model.is_degenerate() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            asymptotic_rate(&model)?,
            z_projection(&model)?,
            z_closed_form_unchecked(s12, s23, phi).z,
        )
    };
    let z1 = if s12 > 0.0 {
        z_first_order(s12, s23, phi)?
    } else {
        f64::NAN
    };
    Ok(ResonancePoint {
        f0,
        phi_over_2pi: phi / (2.0 * PI),
        s12,
        s23,
        gamma_per_period: gamma,
        z_closed: zc,
        z_projection: zp,
        z1,
    })
}

/// γ and Z across forces at fixed depth, ordered by F0 ascending.
pub fn resonance_map(v0: f64, f0_grid: &[f64], grid_points: usize) -> Result<Vec<ResonancePoint>> {
    let params = LatticeParams::new(v0, 1.0, 0.0).with_grid_points(grid_points);
    let gap = average_band_gap(&params)?;
    let mut out = f0_grid
        .iter()
        .map(|&f0| resonance_point(gap, v0, f0))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.f0.total_cmp(&b.f0));
    Ok(out)
}

pub const RESONANCE_CSV_HEADER: &str = "F0,phi_over_2pi,s12,s23,gamma_per_period,Z_closed,Z_projection,Z1";

pub fn write_resonance_csv<W: std::io::Write>(points: &[ResonancePoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{RESONANCE_CSV_HEADER}")?;
    for p in points {
        writeln!(
            w,
            "{:.12e},{:.12e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
            p.f0, p.phi_over_2pi, p.s12, p.s23, p.gamma_per_period, p.z_closed, p.z_projection, p.z1
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn amplitudes_reference_values() {
        assert_eq!(survival_amplitudes(0.0, 1.0).unwrap(), (0.0, 0.0));
        let (s12, _) = survival_amplitudes(2.0, 1.0).unwrap();
        assert_abs_diff_eq!(s12, 0.841_894_926_214_654_8, epsilon = 1e-12);
        let (_, s23) = survival_amplitudes(4.0, 1.0).unwrap();
        assert_abs_diff_eq!(s23, 0.378_034_639_786_222_3, epsilon = 1e-12);
        assert!(survival_amplitudes(1.0, 0.0).is_err());
    }

    #[test]
    fn lz_probability_limits_and_reduction() {
        assert_eq!(lz_probability(0.0, 1.0).unwrap(), 1.0);
        assert!(lz_probability(1.0, 1e-6).unwrap() < 1e-100);
        // band 1/2: gap V0/2, diabatic energies (k)^2 vs (k-2)^2 separate at 2α = 4F0/π
        let (v0, f0) = (1.7, 0.8);
        let p = lz_probability(v0 / 2.0, 2.0 * f0 / PI).unwrap();
        let (s12, s23) = survival_amplitudes(v0, f0).unwrap();
        assert_abs_diff_eq!(1.0 - s12 * s12, p, epsilon = 1e-14);
        // band 2/3: second-order gap V0^2/32 at k = 0, 2α = 8F0/π
        let p = lz_probability(v0 * v0 / 32.0, 4.0 * f0 / PI).unwrap();
        assert_abs_diff_eq!(1.0 - s23 * s23, p, epsilon = 1e-14);
    }

    #[test]
    fn no_interband_coupling() {
        let m = cascade_operator(1.0, 0.3, 1.1).unwrap();
        assert_abs_diff_eq!(m.e1.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.e1.im, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.u[0][1].norm(), 0.0);
        assert_abs_diff_eq!(m.u[1][0].norm(), 0.0);
        let p = iterate_cascade(&m, 10).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0).abs() < 1e-15));
        assert_eq!(asymptotic_rate(&m).unwrap(), 0.0);
        assert_abs_diff_eq!(z_projection(&m).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn full_loss_has_zero_eigenvalue() {
        let m = cascade_operator(0.6, 0.0, 0.4).unwrap();
        assert_abs_diff_eq!(m.determinant().norm(), 0.0);
        assert_abs_diff_eq!(m.e2.norm(), 0.0);
        let p = iterate_cascade(&m, 12).unwrap();
        for (n, x) in p.iter().enumerate() {
            assert_abs_diff_eq!(*x, 0.36f64.powi(n as i32), epsilon = 1e-15);
        }
        assert_abs_diff_eq!(asymptotic_rate(&m).unwrap(), -2.0 * 0.6f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(z_projection(&m).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn reference_point_is_dominant_and_contracting() {
        let m = cascade_operator(0.8418, 0.3780, PI).unwrap();
        assert!(m.e1.norm() > m.e2.norm());
        assert!(m.e1.norm() < 1.0 && m.e2.norm() < 1.0);
        assert!(!m.is_degenerate());
    }

    #[test]
    fn emptied_cascade_is_pure_geometric() {
        let m = cascade_operator(0.83, 0.4, 1.3).unwrap();
        let p = iterate_cascade_emptied(&m, 30).unwrap();
        for (n, &pn) in p.iter().enumerate() {
            assert_abs_diff_eq!(pn, 0.83f64.powi(2 * n as i32), epsilon = 1e-14);
        }
    }

    #[test]
    fn first_step_and_first_order_second_step() {
        let m = cascade_operator(0.7, 0.01, 0.9).unwrap();
        let p = iterate_cascade(&m, 2).unwrap();
        assert_abs_diff_eq!(p[1], 0.49, epsilon = 1e-15);
        let p12sq = 1.0 - 0.49;
        let approx = (0.49 - 2.0 * 0.01 * p12sq * 0.9f64.cos()) * p[1];
        assert_abs_diff_eq!(p[2], approx, epsilon = 2e-4);
    }

    #[test]
    fn rate_matches_iteration_slope() {
        let m = cascade_operator(0.8418, 0.1, PI).unwrap();
        let gamma = asymptotic_rate(&m).unwrap();
        let p = iterate_cascade(&m, 60).unwrap();
        let slope = -(p[60] / p[59]).ln();
        assert_abs_diff_eq!(gamma, slope, epsilon = 1e-9);
    }

    #[test]
    fn z_sign_follows_phase() {
        let zp0 = z_projection(&cascade_operator(0.8418, 0.1, 0.0).unwrap()).unwrap();
        let zpi = z_projection(&cascade_operator(0.8418, 0.1, PI).unwrap()).unwrap();
        assert!(zp0 > 1.0, "{zp0}");
        assert!(zpi < 1.0, "{zpi}");
        // finite-step estimate at N = 20 converges to the projection
        for (phi, z) in [(0.0, zp0), (PI, zpi)] {
            let p = iterate_cascade(&cascade_operator(0.8418, 0.1, phi).unwrap(), 25).unwrap();
            let (zn, _) = finite_step_estimates(&p, 20).unwrap();
            assert_abs_diff_eq!(zn, z, epsilon = 1e-8);
        }
    }

    #[test]
    fn closed_form_reductions() {
        let cf = z_closed_form(0.73, 0.0, 1.3).unwrap();
        assert_abs_diff_eq!(cf.k, 2.0 * 0.73 * 0.73, epsilon = 1e-14);
        assert_abs_diff_eq!(cf.z, 1.0, epsilon = 1e-12);
        // φ = 0: sin φ terms vanish
        let (s12, s23) = (0.8418, 0.1);
        let k = k_auxiliary(s12, s23, 0.0);
        let by_hand = (s12 / 2.0 * (1.0 - s23) + (k / 8.0).sqrt()).powi(2) / (k / 2.0);
        assert_abs_diff_eq!(z_closed_form(s12, s23, 0.0).unwrap().z, by_hand, epsilon = 1e-14);
    }

    #[test]
    fn k_matches_discriminant() {
        // K = Re X + |X| for X = tr(U)^2 − 4 det U
        for &(s12, s23, phi) in &[(0.5, 0.2, 0.7), (0.9, 0.35, 2.9), (0.31, 0.05, 5.1)] {
            let m = cascade_operator(s12, s23, phi).unwrap();
            let tr = m.u[0][0] + m.u[1][1];
            let x = tr * tr - 4.0 * m.determinant();
            assert_abs_diff_eq!(k_auxiliary(s12, s23, phi), x.re + x.norm(), epsilon = 1e-13);
        }
    }

    #[test]
    fn closed_form_matches_projection_at_reference() {
        let cf = z_closed_form(0.8418, 0.1, 0.0).unwrap();
        let zp = z_projection(&cascade_operator(0.8418, 0.1, 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(cf.z, zp, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_models_are_flagged() {
        // φ = 0 with a negative discriminant gives a complex-conjugate pair
        let m = cascade_operator(0.5166666666666666, 0.09666666666666666, 0.0).unwrap();
        assert!(m.is_degenerate());
        assert!(matches!(asymptotic_rate(&m), Err(Error::Degenerate { .. })));
        assert!(matches!(z_projection(&m), Err(Error::Degenerate { .. })));
        assert!(z_closed_form(m.s12, m.s23, 0.0).is_err());
        assert!(cascade_operator(1.2, 0.1, 0.0).is_err());
    }

    #[test]
    fn first_order_values() {
        assert_eq!(z_first_order(0.8, 0.0, 1.0).unwrap(), 1.0);
        let expected = 1.0 + 2.0 * 0.1 * (1.0 - 0.8418f64.powi(2)) / 0.8418f64.powi(2);
        assert_abs_diff_eq!(z_first_order(0.8418, 0.1, 0.0).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 1.0822, epsilon = 1e-4);
        assert_abs_diff_eq!(z_first_order(0.8418, 0.1, PI / 2.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(z_first_order(0.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn finite_step_on_exact_exponential() {
        let gamma0: f64 = 0.37;
        let p: Vec<f64> = (0..15).map(|n| (-gamma0 * n as f64).exp()).collect();
        for n in 1..=12 {
            let (z, g) = finite_step_estimates(&p, n).unwrap();
            assert_abs_diff_eq!(z, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(g, gamma0, epsilon = 1e-12);
        }
        assert!(finite_step_estimates(&[1.0, 0.5, 0.0, 0.1], 2).is_err());
        assert!(finite_step_estimates(&[1.0, 0.5], 1).is_err());
    }

    #[test]
    fn first_finite_step_matches_first_order_in_s23() {
        let (s12, phi) = (0.8, 0.6);
        let s23 = 0.01;
        let p = iterate_cascade(&cascade_operator(s12, s23, phi).unwrap(), 4).unwrap();
        let (z1_num, _) = finite_step_estimates(&p, 1).unwrap();
        let z1 = z_first_order(s12, s23, phi).unwrap();
        // the difference is second order in s23
        assert!((z1_num - z1).abs() < 10.0 * s23 * s23, "{z1_num} vs {z1}");
        assert!((z1_num - z1).abs() > 0.0);
    }

    proptest! {
        #[test]
        fn determinant_identity(s12 in 0.0f64..=1.0, s23 in 0.0f64..=1.0, phi in 0.0f64..(2.0 * PI)) {
            let m = cascade_operator(s12, s23, phi).unwrap();
            prop_assert!((m.determinant().norm() - s23).abs() < 1e-12);
            prop_assert!(m.e1.norm() <= 1.0 + 1e-12);
            prop_assert!(m.e2.norm() <= 1.0 + 1e-12);
            prop_assert!((m.u[1][0].re - (1.0 - s12 * s12).sqrt()).abs() < 1e-15);
        }

        #[test]
        fn geometric_approach_to_asymptote(s12 in 0.4f64..0.95, s23 in 0.01f64..0.3, phi in 0.0f64..(2.0 * PI)) {
            let m = cascade_operator(s12, s23, phi).unwrap();
            prop_assume!(m.eigen_ratio() < 0.9);
            let gamma = asymptotic_rate(&m).unwrap();
            let z = z_projection(&m).unwrap();
            let p = iterate_cascade(&m, 30).unwrap();
            let ratio = m.eigen_ratio();
            // |P_n − Z e^{−γn}| e^{γn} <= (2|a||b| + |b|^2) ratio^n with a = c1 ψ1[0], b = c2 ψ2[0]
            let (c1, c2) = m.c.unwrap();
            let (a, b) = ((c1 * m.psi1[0]).norm(), (c2 * m.psi2[0]).norm());
            let bound = 2.0 * a * b + b * b;
            for (n, &pn) in p.iter().enumerate() {
                let scale = (-gamma * n as f64).exp();
                let deviation = (pn - z * scale).abs() / scale;
                prop_assert!(deviation <= bound * ratio.powi(n as i32) * (1.0 + 1e-9) + 1e-12);
            }
        }
    }
}
