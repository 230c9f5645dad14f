//! Exact propagation of a single-quasi-momentum wave packet in the tilted
//! lattice, with adiabatic band projections and the period-boundary
//! protocols (phase-reversal halts, randomized halts, second-band emptying).
//!
//! The amplitude vector is indexed by plane waves n = -N..N on momenta
//! `quasi_momentum + 2n`. After every Bloch period the quasi-momentum has
//! advanced by 2; the vector is shifted by one index so the working
//! quasi-momentum returns to k0. Population carried out of the top of the
//! truncated basis by this relabeling is continuum that has been accelerated
//! away; it is accumulated in [`Trajectory::truncated_norm`].

mod coupling;
mod stepper;

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{bloch_eigensystem, bloch_period, fold_quasi_momentum, BlochEigen, LatticeParams};

pub use coupling::{adiabatic_coupling, lz_coupling_lorentzian, CouplingSeries};
use stepper::SplitStepper;

/// Number of individually tracked adiabatic bands in a trajectory.
pub const TRACKED_BANDS: usize = 4;

/// Amplitudes over plane waves at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct WavePacketState {
    pub amplitudes: Vec<Complex64>,
    /// Driven time in ħ/E_rec. Halts do not advance it.
    pub time: f64,
    /// Quasi-momentum labelling the amplitude vector (momenta k + 2n).
    pub quasi_momentum: f64,
}

impl WavePacketState {
    /// Eigenstate of band `band` (0-based) at quasi-momentum `k`.
    pub fn band_eigenstate(params: &LatticeParams, k: f64, band: usize) -> Result<Self> {
        let eig = bloch_eigensystem(params, k)?;
        if band >= eig.energies.len() {
            return Err(Error::invalid(format!("band {band} outside basis")));
        }
        Ok(Self {
            amplitudes: eig
                .vectors
                .column(band)
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect(),
            time: 0.0,
            quasi_momentum: k,
        })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Relabels momenta k + 2n = (k − 2m) + 2(n + m). Amplitude pushed past
    /// the basis edge is dropped; its weight is returned.
    fn shift_labels(&mut self, m: i64) -> f64 {
        if m == 0 {
            return 0.0;
        }
        let dim = self.amplitudes.len();
        let mut shifted = vec![Complex64::new(0.0, 0.0); dim];
        let mut lost = 0.0;
        for (i, &a) in self.amplitudes.iter().enumerate() {
            let j = i as i64 + m;
            if (0..dim as i64).contains(&j) {
                shifted[j as usize] = a;
            } else {
                lost += a.norm_sqr();
            }
        }
        self.amplitudes = shifted;
        self.quasi_momentum -= 2.0 * m as f64;
        lost
    }
}

/// What happens at the end of each Bloch period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Protocol {
    ConstantForce,
    /// Switch the force off for π/ΔE, reversing the band-2/band-1 phase.
    PhaseReversalHalt,
    /// Halt with probability `halt_probability`, decided by a seeded stream.
    RandomizedHalt {
        halt_probability: f64,
        rng_seed: u64,
    },
    /// Remove every adiabatic component outside band 1.
    EmptySecondBand,
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if let Protocol::RandomizedHalt { halt_probability, .. } = self {
            if !(0.0..=1.0).contains(halt_probability) {
                return Err(Error::invalid(format!(
                    "halt_probability must lie in [0, 1], got {halt_probability}"
                )));
            }
        }
        Ok(())
    }

    /// Whether the protocol conserves the norm of the state.
    pub fn is_unitary(&self) -> bool {
        !matches!(self, Protocol::EmptySecondBand)
    }

    pub fn rng_seed(&self) -> Option<u64> {
        match self {
            Protocol::RandomizedHalt { rng_seed, .. } => Some(*rng_seed),
            _ => None,
        }
    }
}

/// Outcome of one period-boundary action.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ActionRecord {
    pub halted: bool,
    pub halt_duration: f64,
    /// Norm removed by second-band emptying.
    pub removed_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub steps_per_period: usize,
    /// Largest tolerated |‖ψ‖² change| over one period of unitary evolution.
    pub norm_tolerance: f64,
    /// Step-doubling retries before a period is declared failed.
    pub max_halvings: u32,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            steps_per_period: 4096,
            norm_tolerance: 1e-8,
            max_halvings: 4,
        }
    }
}

/// Sampled adiabatic populations along one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub bloch_period: f64,
    pub sample_times: Vec<f64>,
    /// First [`TRACKED_BANDS`] adiabatic populations per sample.
    pub band_populations: Vec<Vec<f64>>,
    /// Band-1 population, P(t).
    pub survival_series: Vec<f64>,
    /// Squared norm of the retained state.
    pub norm_series: Vec<f64>,
    /// One record per completed period boundary (n = 1 .. n_periods-1).
    pub actions: Vec<ActionRecord>,
    pub truncated_norm: f64,
    pub rng_seed: Option<u64>,
}

impl Trajectory {
    pub const CSV_HEADER: &'static str = "time,time_over_TB,P_band1,P_band2,P_rest,norm";

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for (i, &t) in self.sample_times.iter().enumerate() {
            let pops = &self.band_populations[i];
            let norm = self.norm_series[i];
            let rest = norm - pops[0] - pops[1];
            writeln!(
                w,
                "{:.12e},{:.12e},{:.15e},{:.15e},{:.15e},{:.15e}",
                t,
                t / self.bloch_period,
                pops[0],
                pops[1],
                rest,
                norm
            )?;
        }
        Ok(())
    }

    /// Index of the sample closest to `t`.
    pub fn nearest_sample(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &s) in self.sample_times.iter().enumerate() {
            if (s - t).abs() < (self.sample_times[best] - t).abs() {
                best = i;
            }
        }
        best
    }
}

fn project_populations(eig: &BlochEigen, amplitudes: &[Complex64]) -> Vec<f64> {
    (0..eig.vectors.ncols())
        .map(|band| {
            let col = eig.vectors.column(band);
            let overlap: Complex64 = col.iter().zip(amplitudes).map(|(&v, &a)| a * v).sum();
            overlap.norm_sqr()
        })
        .collect()
}

fn folded_amplitudes(state: &WavePacketState) -> (f64, Vec<Complex64>) {
    let (k, m) = fold_quasi_momentum(state.quasi_momentum);
    let mut folded = state.clone();
    folded.shift_labels(m);
    (k, folded.amplitudes)
}

/// Populations of every adiabatic band at the state's quasi-momentum,
/// folded into the first zone.
pub fn adiabatic_populations(state: &WavePacketState, params: &LatticeParams) -> Result<Vec<f64>> {
    if state.amplitudes.len() != params.dim() {
        return Err(Error::invalid(format!(
            "state has {} amplitudes, basis has {}",
            state.amplitudes.len(),
            params.dim()
        )));
    }
    let (k, amps) = folded_amplitudes(state);
    let eig = bloch_eigensystem(params, k)?;
    Ok(project_populations(&eig, &amps))
}

/// Evolves the state under the force-free Hamiltonian at its quasi-momentum.
fn free_evolution(state: &mut WavePacketState, eig: &BlochEigen, duration: f64) {
    let dim = state.amplitudes.len();
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for (band, &energy) in eig.energies.iter().enumerate() {
        let col = eig.vectors.column(band);
        let overlap: Complex64 = col.iter().zip(&state.amplitudes).map(|(&v, &a)| a * v).sum();
        let coeff = overlap * Complex64::from_polar(1.0, -energy * duration);
        for (o, &v) in out.iter_mut().zip(col.iter()) {
            *o += coeff * v;
        }
    }
    state.amplitudes = out;
}

/// Whether the randomized protocol halts after period `period_index`.
fn halt_decision(probability: f64, seed: u64, period_index: usize) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(period_index as u64);
    rng.random_bool(probability)
}

/// Applies the protocol action due at t = period_index * T_B.
pub fn apply_protocol_action(
    state: &WavePacketState,
    params: &LatticeParams,
    protocol: &Protocol,
    period_index: usize,
) -> Result<(WavePacketState, ActionRecord)> {
    protocol.validate()?;
    let tb = bloch_period(params.f0)?;
    let periods = state.time / tb;
    if (periods - periods.round()).abs() > 1e-9 * periods.abs().max(1.0)
        || periods.round() as i64 != period_index as i64
    {
        return Err(Error::ProtocolTiming { time: state.time });
    }
    let mut next = state.clone();
    let mut record = ActionRecord::default();
    let halt = match *protocol {
        Protocol::ConstantForce => false,
        Protocol::PhaseReversalHalt => true,
        Protocol::RandomizedHalt {
            halt_probability,
            rng_seed,
        } => halt_decision(halt_probability, rng_seed, period_index),
        Protocol::EmptySecondBand => {
            let eig = bloch_eigensystem(params, state.quasi_momentum)?;
            let col = eig.vectors.column(0);
            let overlap: Complex64 = col.iter().zip(&state.amplitudes).map(|(&v, &a)| a * v).sum();
            next.amplitudes = col.iter().map(|&v| overlap * v).collect();
            record.removed_norm = state.norm_sqr() - overlap.norm_sqr();
            false
        }
    };
    if halt {
        let eig = bloch_eigensystem(params, state.quasi_momentum)?;
        let duration = PI / eig.gap(0, 1);
        free_evolution(&mut next, &eig, duration);
        record.halted = true;
        record.halt_duration = duration;
    }
    Ok((next, record))
}

/// Drives one period at a given step count; `None` if the norm drifted.
fn integrate_period(
    state: &WavePacketState,
    params: &LatticeParams,
    steps_per_sample: usize,
    samples_per_period: usize,
    tb: f64,
    tolerance: f64,
    mut sample: impl FnMut(usize, &WavePacketState),
) -> Result<std::result::Result<WavePacketState, f64>> {
    let steps = steps_per_sample * samples_per_period;
    let h = tb / steps as f64;
    let mut stepper = SplitStepper::new(params.basis_halfwidth, params.v0 / 4.0, params.sweep_velocity(), h)?;
    let start_norm = state.norm_sqr();
    let mut current = state.clone();
    let t0 = current.time;
    let k_start = current.quasi_momentum;
    for j in 0..samples_per_period {
        sample(j, &current);
        for s in 0..steps_per_sample {
            current.quasi_momentum = stepper.step(&mut current.amplitudes, current.quasi_momentum);
            let done = j * steps_per_sample + s + 1;
            current.time = t0 + done as f64 * stepper.step_length();
        }
    }
    // pin the period end exactly to avoid accumulating rounding in k and t
    current.time = t0 + tb;
    current.quasi_momentum = k_start + 2.0;
    let drift = (current.norm_sqr() - start_norm).abs();
    if drift > tolerance {
        Ok(Err(drift))
    } else {
        Ok(Ok(current))
    }
}

pub fn evolve(
    params: &LatticeParams,
    protocol: &Protocol,
    n_bloch_periods: usize,
    samples_per_period: usize,
) -> Result<Trajectory> {
    evolve_with(
        params,
        protocol,
        n_bloch_periods,
        samples_per_period,
        &IntegratorSettings::default(),
    )
}

/// Runs `n_bloch_periods` periods from the band-1 eigenstate at k0.
pub fn evolve_with(
    params: &LatticeParams,
    protocol: &Protocol,
    n_bloch_periods: usize,
    samples_per_period: usize,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    params.validate_tilted()?;
    protocol.validate()?;
    if samples_per_period < 2 {
        return Err(Error::invalid("samples_per_period must be >= 2"));
    }
    if n_bloch_periods < 1 {
        return Err(Error::invalid("need at least one Bloch period"));
    }
    if settings.steps_per_period == 0 {
        return Err(Error::invalid("steps_per_period must be > 0"));
    }
    let tb = bloch_period(params.f0)?;
    let mut state = WavePacketState::band_eigenstate(params, params.k0, 0)?;

    // the Hamiltonian at sample j is the same in every period
    let mut sample_eigen: Vec<Option<(f64, BlochEigen)>> = vec![None; samples_per_period];
    let mut traj = Trajectory {
        bloch_period: tb,
        sample_times: Vec::new(),
        band_populations: Vec::new(),
        survival_series: Vec::new(),
        norm_series: Vec::new(),
        actions: Vec::new(),
        truncated_norm: 0.0,
        rng_seed: protocol.rng_seed(),
    };
    let mut failure: Option<Error> = None;
    let mut record = |j: usize, s: &WavePacketState, traj: &mut Trajectory| {
        let (k, amps) = folded_amplitudes(s);
        let slot = &mut sample_eigen[j];
        if slot.as_ref().is_none_or(|(kk, _)| (kk - k).abs() > 1e-12) {
            match bloch_eigensystem(params, k) {
                Ok(e) => *slot = Some((k, e)),
                Err(e) => {
                    failure.get_or_insert(e);
                    return;
                }
            }
        }
        let (_, eig) = slot.as_ref().expect("filled above");
        let pops = project_populations(eig, &amps);
        traj.sample_times.push(s.time);
        traj.survival_series.push(pops[0]);
        traj.band_populations
            .push(pops[..TRACKED_BANDS.min(pops.len())].to_vec());
        traj.norm_series.push(s.norm_sqr());
    };

    let base_steps = settings.steps_per_period.div_ceil(samples_per_period);
    for period in 0..n_bloch_periods {
        let mut steps_per_sample = base_steps;
        let mut halvings = 0;
        let next = loop {
            let mut pending = Vec::new();
            let outcome = integrate_period(
                &state,
                params,
                steps_per_sample,
                samples_per_period,
                tb,
                settings.norm_tolerance,
                |j, s| pending.push((j, s.clone())),
            )?;
            match outcome {
                Ok(next) => {
                    for (j, s) in &pending {
                        record(*j, s, &mut traj);
                    }
                    break next;
                }
                Err(drift) => {
                    if halvings >= settings.max_halvings {
                        return Err(Error::StepSize {
                            period,
                            drift,
                            halvings,
                        });
                    }
                    halvings += 1;
                    steps_per_sample *= 2;
                    log::debug!("period {period}: norm drift {drift:.3e}, halving step");
                }
            }
        };
        state = next;
        traj.truncated_norm += state.shift_labels(1);
        if period + 1 < n_bloch_periods {
            let (after, action) = apply_protocol_action(&state, params, protocol, period + 1)?;
            state = after;
            traj.actions.push(action);
        }
    }
    record(0, &state, &mut traj);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(traj)
}
