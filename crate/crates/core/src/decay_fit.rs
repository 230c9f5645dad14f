//! Exponential fits P_n ≈ Z exp(−γ n) to survival probabilities sampled at
//! whole Bloch periods.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{bloch_period, LatticeParams};
use crate::propagator::Trajectory;

pub const DEFAULT_SKIP_TRANSIENT: usize = 2;
/// RMS log-residual above which the decay is flagged as non-exponential.
pub const NON_EXPONENTIAL_RESIDUAL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSamples {
    pub n_values: Vec<usize>,
    pub p_values: Vec<f64>,
    /// Bloch period used to convert rates to per-time units.
    pub bloch_period: f64,
    pub source: String,
}

impl PlateauSamples {
    pub fn new(n_values: Vec<usize>, p_values: Vec<f64>, bloch_period: f64, source: impl Into<String>) -> Result<Self> {
        if n_values.len() != p_values.len() {
            return Err(Error::invalid("n_values and p_values differ in length"));
        }
        if n_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("n_values must be strictly increasing"));
        }
        if let Some((index, &value)) = p_values.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
            return Err(Error::NonPositiveProbability { index, value });
        }
        if !(bloch_period > 0.0 && bloch_period.is_finite()) {
            return Err(Error::invalid(format!("Bloch period must be > 0, got {bloch_period}")));
        }
        Ok(Self {
            n_values,
            p_values,
            bloch_period,
            source: source.into(),
        })
    }

    /// P_n = p[n] for n = 0..p.len().
    pub fn from_sequence(p: &[f64], bloch_period: f64, source: impl Into<String>) -> Result<Self> {
        Self::new((0..p.len()).collect(), p.to_vec(), bloch_period, source)
    }
}

/// Survival probability at the sample nearest each t = n T_B.
pub fn sample_plateaus(trajectory: &Trajectory, params: &LatticeParams) -> Result<PlateauSamples> {
    let tb = bloch_period(params.f0)?;
    let (Some(&first), Some(&last)) = (trajectory.sample_times.first(), trajectory.sample_times.last()) else {
        return Err(Error::InsufficientData("empty trajectory".into()));
    };
    let periods = ((last - first) / tb + 1e-9).floor() as usize;
    if periods < 3 {
        return Err(Error::InsufficientData(format!(
            "trajectory covers {periods} Bloch periods, need at least 3"
        )));
    }
    let density = (trajectory.sample_times.len() - 1) as f64 / periods as f64;
    if density < 8.0 {
        return Err(Error::InsufficientData(format!(
            "{density:.1} samples per Bloch period, need at least 8"
        )));
    }
    let n_first = (first / tb - 1e-9).ceil().max(0.0) as usize;
    let n_last = (last / tb + 1e-9).floor() as usize;
    let n_values: Vec<usize> = (n_first..=n_last).collect();
    let p_values = n_values
        .iter()
        .map(|&n| trajectory.survival_series[trajectory.nearest_sample(n as f64 * tb)])
        .collect();
    PlateauSamples::new(n_values, p_values, tb, "trajectory")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub z: f64,
    pub gamma_per_period: f64,
    pub gamma_per_time: f64,
    pub fit_window: (usize, usize),
    /// RMS deviation of log P from the fitted line.
    pub residual: f64,
    pub non_exponential: bool,
}

impl DecayEstimate {
    pub const CSV_HEADER: &'static str = "Z,gamma_per_period,gamma_per_time,n_min,n_max,residual";

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        writeln!(
            w,
            "{:.15e},{:.15e},{:.15e},{},{},{:.6e}",
            self.z, self.gamma_per_period, self.gamma_per_time, self.fit_window.0, self.fit_window.1, self.residual
        )
    }
}

/// Ordinary least squares of log P_n on n over n ≥ `skip_transient`.
pub fn fit_exponential(samples: &PlateauSamples, skip_transient: usize) -> Result<DecayEstimate> {
    let points: Vec<(f64, f64)> = samples
        .n_values
        .iter()
        .zip(&samples.p_values)
        .filter(|(&n, _)| n >= skip_transient)
        .map(|(&n, &p)| (n as f64, p))
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} points after skipping {skip_transient}, need at least 3",
            points.len()
        )));
    }
    if let Some((index, &(_, value))) = points.iter().enumerate().find(|(_, (_, p))| !(*p > 0.0)) {
        return Err(Error::NonPositiveProbability { index, value });
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / m;
    let y_mean = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    let non_exponential = residual > NON_EXPONENTIAL_RESIDUAL;
    if non_exponential {
        log::warn!(
            "log-linear fit residual {residual:.3e} exceeds {NON_EXPONENTIAL_RESIDUAL}: decay is not exponential"
        );
    }
    let gamma_per_period = -slope;
    Ok(DecayEstimate {
        z: intercept.exp(),
        gamma_per_period,
        gamma_per_time: gamma_per_period / samples.bloch_period,
        fit_window: (points[0].0 as usize, points[points.len() - 1].0 as usize),
        residual,
        non_exponential,
    })
}

/// First index from which `window` successive step rates agree to
/// `tolerance`, i.e. where the plateau sequence has become geometric.
pub fn transient_length(p: &[f64], window: usize, tolerance: f64) -> Option<usize> {
    if p.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let rates: Vec<f64> = p.windows(2).map(|w| -(w[1] / w[0]).ln()).collect();
    (0..rates.len().saturating_sub(window)).find(|&start| {
        rates[start..=start + window]
            .windows(2)
            .all(|w| (w[1] - w[0]).abs() < tolerance)
    })
}
