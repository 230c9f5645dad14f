//! Non-adiabatic coupling c(t) = <1(t)|∂t|2(t)> between the two lowest
//! instantaneous eigenstates along the sweep k(t) = k0 + F0 t / π, and the
//! two-level Landau-Zener reference curve.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lattice::{bloch_eigensystem, LatticeParams};

/// Successive overlaps below this magnitude make the sign transport
/// meaningless.
const GAUGE_MIN_OVERLAP: f64 = 1e-3;
/// Finite-difference half-step expressed as a quasi-momentum increment.
const FD_DELTA_K: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSeries {
    pub t: Vec<f64>,
    pub c: Vec<f64>,
}

impl CouplingSeries {
    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// |c(t)| scaled to a maximum of one.
    pub fn normalized(&self) -> Vec<f64> {
        let m = self.max_abs();
        self.c.iter().map(|x| if m > 0.0 { x.abs() / m } else { 0.0 }).collect()
    }

    pub fn peak_time(&self) -> f64 {
        let (i, _) = self.c.iter().enumerate().fold(
            (0, 0.0),
            |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) },
        );
        self.t[i]
    }

    /// Half width at half maximum of |c| around its peak, by linear
    /// interpolation. Returns `None` if |c| does not fall to half on both
    /// sides within the grid.
    pub fn half_width(&self) -> Option<f64> {
        let abs: Vec<f64> = self.c.iter().map(|x| x.abs()).collect();
        let peak = abs
            .iter()
            .enumerate()
            .fold(0, |best, (i, &x)| if x > abs[best] { i } else { best });
        let half = 0.5 * abs[peak];
        let crossing = |range: &mut dyn Iterator<Item = usize>, step_back: isize| -> Option<f64> {
            for i in range {
                if abs[i] <= half {
                    let j = (i as isize + step_back) as usize;
                    let frac = (abs[j] - half) / (abs[j] - abs[i]);
                    return Some(self.t[j] + frac * (self.t[i] - self.t[j]));
                }
            }
            None
        };
        let right = crossing(&mut (peak + 1..abs.len()), -1)?;
        let left = crossing(&mut (0..peak).rev(), 1)?;
        Some(0.5 * (right - left))
    }
}

fn band_pair(params: &LatticeParams, k: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let eig = bloch_eigensystem(params, k)?;
    Ok((eig.vectors.column(0).into_owned(), eig.vectors.column(1).into_owned()))
}

fn align(reference: &DVector<f64>, v: &mut DVector<f64>) -> f64 {
    let overlap = reference.dot(v);
    if overlap < 0.0 {
        v.neg_mut();
    }
    overlap.abs()
}

/// c(t) on `t_grid` by central differences of sign-transported eigenvectors.
///
/// The quasi-momentum is not folded, so the grid should stay within a few
/// Bloch periods of t = 0 for the truncated basis to remain accurate.
pub fn adiabatic_coupling(params: &LatticeParams, t_grid: &[f64]) -> Result<CouplingSeries> {
    params.validate_tilted()?;
    let velocity = params.sweep_velocity();
    let dt = FD_DELTA_K / velocity;
    let mut c = Vec::with_capacity(t_grid.len());
    let mut previous: Option<(DVector<f64>, DVector<f64>)> = None;
    for &t in t_grid {
        let k = params.k0 + velocity * t;
        let (mut v1, mut v2) = band_pair(params, k)?;
        if let Some((p1, p2)) = &previous {
            let o1 = align(p1, &mut v1);
            let o2 = align(p2, &mut v2);
            let worst = o1.min(o2);
            if worst < GAUGE_MIN_OVERLAP {
                return Err(Error::Gauge { t, overlap: worst });
            }
        }
        let (_, mut plus) = band_pair(params, k + velocity * dt)?;
        let (_, mut minus) = band_pair(params, k - velocity * dt)?;
        for v in [&mut plus, &mut minus] {
            let o = align(&v2, v);
            if o < GAUGE_MIN_OVERLAP {
                return Err(Error::Gauge { t, overlap: o });
            }
        }
        c.push(v1.dot(&(plus - minus)) / (2.0 * dt));
        previous = Some((v1, v2));
    }
    Ok(CouplingSeries { t: t_grid.to_vec(), c })
}

/// Two-level Landau-Zener coupling: the mixing angle of
/// [[α t, δ/2], [δ/2, −α t]] changes at the rate (1/2) w / (w^2 + t^2)
/// with w = δ / (2α).
pub fn lz_coupling_lorentzian(gap: f64, sweep_rate: f64, t_grid: &[f64], t_center: f64) -> Result<Vec<f64>> {
    if !(gap > 0.0 && gap.is_finite()) {
        return Err(Error::invalid(format!("gap must be > 0, got {gap}")));
    }
    if !(sweep_rate > 0.0 && sweep_rate.is_finite()) {
        return Err(Error::invalid(format!("sweep rate must be > 0, got {sweep_rate}")));
    }
    let w = gap / (2.0 * sweep_rate);
    Ok(t_grid
        .iter()
        .map(|&t| {
            let x = t - t_center;
            0.5 * w / (w * w + x * x)
        })
        .collect())
}
