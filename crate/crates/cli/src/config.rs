use std::path::Path;

use ret_core::{average_band_gap, gap_estimate_large_v, gap_estimate_small_v, LatticeParams, Protocol};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Bands,
    GapCurve,
    Simulate,
    EffectiveMap,
    ZScaling,
    CouplingMap,
    BroadAverage,
    Sweep,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Bands => "bands",
            Experiment::GapCurve => "gap_curve",
            Experiment::Simulate => "simulate",
            Experiment::EffectiveMap => "effective_map",
            Experiment::ZScaling => "z_scaling",
            Experiment::CouplingMap => "coupling_map",
            Experiment::BroadAverage => "broad_average",
            Experiment::Sweep => "sweep",
        }
    }

    /// Grid used when the config gives none.
    pub fn default_sweep(self) -> Option<SweepSpec> {
        let spec = |parameter, min, max, count| {
            Some(SweepSpec {
                parameter,
                min,
                max,
                count,
            })
        };
        match self {
            Experiment::Bands | Experiment::Simulate => None,
            Experiment::GapCurve => spec(SweepParameter::V0, 0.0, 10.0, 51),
            Experiment::EffectiveMap => spec(SweepParameter::PhiOver2Pi, 1.0, 12.0, 221),
            Experiment::ZScaling => spec(SweepParameter::PhiOver2Pi, 1.0, 8.0, 57),
            Experiment::CouplingMap => spec(SweepParameter::V0, 0.25, 6.0, 24),
            Experiment::BroadAverage => spec(SweepParameter::PhiOver2Pi, 2.0, 5.0, 13),
            Experiment::Sweep => spec(SweepParameter::PhiOver2Pi, 2.0, 8.0, 31),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    V0,
    F0,
    K0,
    /// F0 is set from the zone-averaged gap so that φ/2π hits each value.
    #[serde(rename = "phi_over_2pi")]
    PhiOver2Pi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.count < 2 {
            return Err(CliError::Validation(format!(
                "sweep count must be >= 2, got {}",
                self.count
            )));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(CliError::Validation(format!(
                "sweep needs min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.max
                } else {
                    self.min + step * i as f64
                }
            })
            .collect()
    }
}

/// Which gap sets φ = 2π ⟨ΔE⟩ / F0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseSource {
    #[default]
    Numerical,
    SmallV,
    LargeV,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    #[default]
    ConstantForce,
    PhaseReversalHalt,
    RandomizedHalt,
    EmptySecondBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    #[serde(default)]
    pub kind: ProtocolKind,
    #[serde(default = "default_halt_probability")]
    pub halt_probability: f64,
}

fn default_halt_probability() -> f64 {
    0.5
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::ConstantForce,
            halt_probability: default_halt_probability(),
        }
    }
}

impl ProtocolSpec {
    pub fn build(&self, seed: u64) -> Protocol {
        match self.kind {
            ProtocolKind::ConstantForce => Protocol::ConstantForce,
            ProtocolKind::PhaseReversalHalt => Protocol::PhaseReversalHalt,
            ProtocolKind::RandomizedHalt => Protocol::RandomizedHalt {
                halt_probability: self.halt_probability,
                rng_seed: seed,
            },
            ProtocolKind::EmptySecondBand => Protocol::EmptySecondBand,
        }
    }
}

/// Knobs shared by the experiments; each uses the subset it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub periods: usize,
    pub samples_per_period: usize,
    pub skip_transient: usize,
    pub steps_per_period: usize,
    /// Sets F0 for `simulate` from the average gap when present.
    pub phi_over_2pi: Option<f64>,
    pub phase_source: PhaseSource,
    pub bands: usize,
    pub time_points: usize,
    pub k0_points: usize,
    pub v0_values: Vec<f64>,
    /// Also run the full propagator in `z_scaling`.
    pub full_propagator: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            periods: 12,
            samples_per_period: 32,
            skip_transient: ret_core::decay_fit::DEFAULT_SKIP_TRANSIENT,
            steps_per_period: ret_core::IntegratorSettings::default().steps_per_period,
            phi_over_2pi: None,
            phase_source: PhaseSource::Numerical,
            bands: 5,
            time_points: 201,
            k0_points: 32,
            v0_values: vec![1.0, 2.0, 3.0, 4.0],
            full_propagator: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_params")]
    pub params: LatticeParams,
    #[serde(default)]
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default = "default_output")]
    pub output_path: String,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_params() -> LatticeParams {
    LatticeParams::new(2.0, 1.0, 0.0)
}

fn default_output() -> String {
    "out".into()
}

fn default_workers() -> usize {
    1
}

/// The file form: identical, except the experiment may come from the
/// subcommand instead.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: Option<Experiment>,
    #[serde(default = "default_params")]
    params: LatticeParams,
    #[serde(default)]
    protocol: ProtocolSpec,
    #[serde(default)]
    sweep: Option<SweepSpec>,
    #[serde(default)]
    run: RunSettings,
    #[serde(default = "default_output")]
    output_path: String,
    #[serde(default)]
    rng_seed: u64,
    #[serde(default = "default_workers")]
    workers: usize,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            params: default_params(),
            protocol: ProtocolSpec::default(),
            sweep: None,
            run: RunSettings::default(),
            output_path: default_output(),
            rng_seed: 0,
            workers: default_workers(),
        }
    }

    pub fn from_toml(text: &str, experiment: Experiment) -> Result<Self, CliError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        if let Some(declared) = file.experiment {
            if declared != experiment {
                return Err(CliError::Validation(format!(
                    "config declares experiment {} but {} was requested",
                    declared.name(),
                    experiment.name()
                )));
            }
        }
        Ok(Self {
            experiment,
            params: file.params,
            protocol: file.protocol,
            sweep: file.sweep,
            run: file.run,
            output_path: file.output_path,
            rng_seed: file.rng_seed,
            workers: file.workers,
        })
    }

    pub fn load(path: &Path, experiment: Experiment) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, experiment)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol.build(self.rng_seed)
    }

    pub fn sweep_or_default(&self) -> Option<SweepSpec> {
        self.sweep.or_else(|| self.experiment.default_sweep())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate()?;
        self.protocol().validate()?;
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        if self.workers == 0 {
            return Err(CliError::Validation("workers must be >= 1".into()));
        }
        let run = &self.run;
        if run.samples_per_period < 2 {
            return Err(CliError::Validation("samples_per_period must be >= 2".into()));
        }
        if run.steps_per_period == 0 {
            return Err(CliError::Validation("steps_per_period must be >= 1".into()));
        }
        if run.time_points < 3 {
            return Err(CliError::Validation("time_points must be >= 3".into()));
        }
        if run.k0_points == 0 {
            return Err(CliError::Validation("k0_points must be >= 1".into()));
        }
        if let Some(x) = run.phi_over_2pi {
            if !(x.is_finite() && x > 0.0) {
                return Err(CliError::Validation(format!("phi_over_2pi must be > 0, got {x}")));
            }
        }
        if run.v0_values.is_empty() {
            return Err(CliError::Validation("v0_values must not be empty".into()));
        }
        Ok(())
    }

    pub fn average_gap_numerical(&self, v0: f64) -> Result<f64, CliError> {
        Ok(average_band_gap(&LatticeParams { v0, ..self.params })?)
    }

    /// Zone-averaged gap at depth `v0` from the configured source.
    pub fn average_gap(&self, v0: f64) -> Result<f64, CliError> {
        Ok(match self.run.phase_source {
            PhaseSource::Numerical => self.average_gap_numerical(v0)?,
            PhaseSource::SmallV => gap_estimate_small_v(v0)?,
            PhaseSource::LargeV => gap_estimate_large_v(v0)?,
        })
    }

    /// Lattice parameters at one sweep value; `gap` is ⟨ΔE⟩ at the
    /// resulting depth, needed only for φ sweeps.
    pub fn params_at(&self, parameter: SweepParameter, value: f64, gap: Option<f64>) -> LatticeParams {
        let mut p = self.params;
        match parameter {
            SweepParameter::V0 => p.v0 = value,
            SweepParameter::F0 => p.f0 = value,
            SweepParameter::K0 => p.k0 = value,
            SweepParameter::PhiOver2Pi => p.f0 = gap.expect("φ sweep needs the average gap") / value,
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let c = ExperimentConfig::from_toml("", Experiment::Bands).unwrap();
        assert_eq!(c, ExperimentConfig::new(Experiment::Bands));
    }

    #[test]
    fn full_file_round_trips() {
        let text = r#"
            experiment = "simulate"
            rng_seed = 7
            workers = 2
            output_path = "runs/a"
            [params]
            v0 = 1.5
            f0 = 1.05
            k0 = 0.2
            [protocol]
            kind = "randomized_halt"
            halt_probability = 0.25
            [sweep]
            parameter = "phi_over_2pi"
            min = 2.0
            max = 8.0
            count = 4
            [run]
            periods = 5
        "#;
        let c = ExperimentConfig::from_toml(text, Experiment::Simulate).unwrap();
        assert_eq!(c.params.v0, 1.5);
        assert_eq!(c.run.periods, 5);
        assert_eq!(c.run.samples_per_period, 32);
        assert_eq!(
            c.protocol(),
            Protocol::RandomizedHalt {
                halt_probability: 0.25,
                rng_seed: 7
            }
        );
        let again = ExperimentConfig::from_toml(&c.to_toml(), Experiment::Simulate).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn experiment_mismatch_and_unknown_keys() {
        assert!(ExperimentConfig::from_toml("experiment = \"bands\"", Experiment::Simulate).is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1", Experiment::Bands).is_err());
        assert!(ExperimentConfig::from_toml("[params]\nv0 = 1\nf0 = 1\nextra = 2", Experiment::Bands).is_err());
    }

    #[test]
    fn sweep_validation() {
        let mut c = ExperimentConfig::new(Experiment::GapCurve);
        c.sweep = Some(SweepSpec {
            parameter: SweepParameter::V0,
            min: 0.0,
            max: 1.0,
            count: 1,
        });
        assert!(c.validate().is_err());
        c.sweep = Some(SweepSpec {
            parameter: SweepParameter::V0,
            min: 1.0,
            max: 1.0,
            count: 3,
        });
        assert!(c.validate().is_err());
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let s = SweepSpec {
            parameter: SweepParameter::F0,
            min: 0.1,
            max: 0.7,
            count: 7,
        };
        let v = s.values();
        assert_eq!(v.len(), 7);
        assert_eq!(v[0], 0.1);
        assert_eq!(v[6], 0.7);
    }
}
