use std::f64::consts::PI;
use std::fmt::Write as _;

use ret_core::decay_fit::{fit_exponential, sample_plateaus};
use ret_core::{
    adiabatic_coupling, band_spectrum, bloch_eigensystem, bloch_period, evolve_with, gap_estimate_large_v,
    gap_estimate_small_v, lz_coupling_lorentzian, resonance_point, write_resonance_csv, DecayEstimate,
    IntegratorSettings, LatticeParams, Protocol, Trajectory,
};

use crate::config::{Experiment, ExperimentConfig, SweepParameter, SweepSpec};
use crate::sweep::sweep_runner;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

/// Everything an experiment produced, before anything touches the disk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub files: Vec<OutputFile>,
    pub summary: Vec<String>,
    /// Suggested (x, y) column pairings for plotting.
    pub plots: Vec<String>,
}

impl Report {
    fn file(&mut self, name: &str, contents: String) {
        self.files.push(OutputFile {
            name: name.into(),
            contents,
        });
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.name == name).map(|f| f.contents.as_str())
    }
}

fn e(x: f64) -> String {
    format!("{x:.12e}")
}

fn io(err: std::io::Error) -> CliError {
    CliError::Io(err.to_string())
}

pub fn execute(config: &ExperimentConfig) -> Result<Report, CliError> {
    config.validate()?;
    match config.experiment {
        Experiment::Bands => bands(config),
        Experiment::GapCurve => gap_curve(config),
        Experiment::Simulate => simulate(config),
        Experiment::EffectiveMap => effective_map(config),
        Experiment::ZScaling => z_scaling(config),
        Experiment::CouplingMap => coupling_map(config),
        Experiment::BroadAverage => broad_average(config),
        Experiment::Sweep => sweep(config),
    }
}

fn grid(config: &ExperimentConfig) -> Result<SweepSpec, CliError> {
    let spec = config
        .sweep_or_default()
        .ok_or_else(|| CliError::Validation(format!("{} needs a sweep", config.experiment.name())))?;
    spec.validate()?;
    Ok(spec)
}

fn require(spec: &SweepSpec, allowed: &[SweepParameter], experiment: Experiment) -> Result<(), CliError> {
    if allowed.contains(&spec.parameter) {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{} cannot sweep {:?}",
            experiment.name(),
            spec.parameter
        )))
    }
}

/// Lattice parameters for each sweep value, resolving φ sweeps through the
/// average gap at the base depth.
fn sweep_params(config: &ExperimentConfig, spec: &SweepSpec) -> Result<Vec<LatticeParams>, CliError> {
    let gap = match spec.parameter {
        SweepParameter::PhiOver2Pi => Some(config.average_gap(config.params.v0)?),
        _ => None,
    };
    Ok(spec
        .values()
        .into_iter()
        .map(|x| config.params_at(spec.parameter, x, gap))
        .collect())
}

fn integrator(config: &ExperimentConfig) -> IntegratorSettings {
    IntegratorSettings {
        steps_per_period: config.run.steps_per_period,
        ..IntegratorSettings::default()
    }
}

fn run_trajectory(
    config: &ExperimentConfig,
    params: &LatticeParams,
    protocol: &Protocol,
) -> Result<Trajectory, CliError> {
    Ok(evolve_with(
        params,
        protocol,
        config.run.periods,
        config.run.samples_per_period,
        &integrator(config),
    )?)
}

fn fit_trajectory(
    config: &ExperimentConfig,
    params: &LatticeParams,
    traj: &Trajectory,
) -> Result<DecayEstimate, CliError> {
    let samples = sample_plateaus(traj, params)?;
    Ok(fit_exponential(&samples, config.run.skip_transient)?)
}

/// Full propagation followed by the plateau fit.
pub fn simulate_and_fit(
    config: &ExperimentConfig,
    params: &LatticeParams,
) -> Result<(Trajectory, DecayEstimate), CliError> {
    let traj = run_trajectory(config, params, &config.protocol())?;
    let fit = fit_trajectory(config, params, &traj)?;
    Ok((traj, fit))
}

fn phi_over_2pi(gap: f64, f0: f64) -> f64 {
    gap / f0
}

fn bands(config: &ExperimentConfig) -> Result<Report, CliError> {
    let params = LatticeParams {
        f0: 0.0,
        ..config.params
    };
    let spectrum = band_spectrum(&params)?;
    let count = config.run.bands.clamp(1, params.dim());
    let mut csv = String::from("k");
    for b in 1..=count {
        write!(csv, ",band{b}").unwrap();
    }
    csv.push('\n');
    for (i, &k) in spectrum.k_grid.iter().enumerate() {
        csv.push_str(&e(k));
        for b in 0..count {
            write!(csv, ",{}", e(spectrum.energies[i][b])).unwrap();
        }
        csv.push('\n');
    }
    let gap = config.average_gap(params.v0)?;
    let mut report = Report::default();
    report.file("bands.csv", csv);
    report
        .summary
        .push(format!("V0 = {}: average band-1/2 gap {gap:.10}", params.v0));
    if config.params.f0 > 0.0 {
        report.summary.push(format!(
            "F0 = {}: phi/2pi = {:.6}",
            config.params.f0,
            phi_over_2pi(gap, config.params.f0)
        ));
    }
    report.plots.push("bands.csv: k vs band1..bandN".into());
    Ok(report)
}

fn gap_curve(config: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = grid(config)?;
    require(&spec, &[SweepParameter::V0], config.experiment)?;
    let values = spec.values();
    let rows = sweep_runner(&values, config.workers, |&v0| {
        let numerical = config.average_gap_numerical(v0)?;
        let small = gap_estimate_small_v(v0).unwrap_or(f64::NAN);
        let large = gap_estimate_large_v(v0).unwrap_or(f64::NAN);
        Ok((v0, numerical, small, large))
    })?;
    let mut csv = String::from("V0,gap_numerical,gap_small_v,gap_large_v\n");
    for (v0, n, s, l) in rows {
        writeln!(csv, "{},{},{},{}", e(v0), e(n), e(s), e(l)).unwrap();
    }
    let mut report = Report::default();
    report.file("gap_curve.csv", csv);
    report
        .plots
        .push("gap_curve.csv: V0 vs gap_numerical, gap_small_v, gap_large_v".into());
    Ok(report)
}

fn simulate(config: &ExperimentConfig) -> Result<Report, CliError> {
    let mut params = config.params;
    if let Some(x) = config.run.phi_over_2pi {
        params.f0 = config.average_gap(params.v0)? / x;
    }
    let traj = run_trajectory(config, &params, &config.protocol())?;
    let mut report = Report::default();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).map_err(io)?;
    report.file("trajectory.csv", String::from_utf8(buf).expect("ascii"));

    let mut actions = String::from("period,halted,halt_duration,removed_norm\n");
    for (i, a) in traj.actions.iter().enumerate() {
        writeln!(
            actions,
            "{},{},{},{}",
            i + 1,
            a.halted,
            e(a.halt_duration),
            e(a.removed_norm)
        )
        .unwrap();
    }
    report.file("actions.csv", actions);
    report.summary.push(format!(
        "V0 = {}, F0 = {:.10}, k0 = {}, T_B = {:.10}, {} periods",
        params.v0, params.f0, params.k0, traj.bloch_period, config.run.periods
    ));
    if traj.truncated_norm > 0.0 {
        report
            .summary
            .push(format!("norm carried past the basis edge: {:.3e}", traj.truncated_norm));
    }
    // plateaus n = 0..=periods, minus the skipped transient, need three points
    if config.run.periods >= config.run.skip_transient + 2 {
        let fit = fit_trajectory(config, &params, &traj)?;
        let mut buf = Vec::new();
        fit.write_csv(&mut buf).map_err(io)?;
        report.file("decay_fit.csv", String::from_utf8(buf).expect("ascii"));
        report.summary.push(format!(
            "fit over n = {}..{}: Z = {:.6}, gamma = {:.6} per period, residual {:.2e}",
            fit.fit_window.0, fit.fit_window.1, fit.z, fit.gamma_per_period, fit.residual
        ));
    } else {
        report.summary.push(format!(
            "no decay fit: needs at least {} periods",
            config.run.skip_transient + 2
        ));
    }
    report
        .plots
        .push("trajectory.csv: time_over_TB vs P_band1 (log y)".into());
    Ok(report)
}

fn effective_map(config: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = grid(config)?;
    require(
        &spec,
        &[SweepParameter::F0, SweepParameter::PhiOver2Pi],
        config.experiment,
    )?;
    let v0 = config.params.v0;
    let gap = config.average_gap(v0)?;
    let forces: Vec<f64> = sweep_params(config, &spec)?.iter().map(|p| p.f0).collect();
    let mut points = sweep_runner(&forces, config.workers, |&f0| Ok(resonance_point(gap, v0, f0)?))?;
    points.sort_by(|a, b| a.f0.total_cmp(&b.f0));
    let degenerate = points.iter().filter(|p| p.gamma_per_period.is_nan()).count();
    let mut buf = Vec::new();
    write_resonance_csv(&points, &mut buf).map_err(io)?;
    let mut report = Report::default();
    report.file("resonance_map.csv", String::from_utf8(buf).expect("ascii"));
    if degenerate > 0 {
        report
            .summary
            .push(format!("{degenerate} points without a dominant eigenvalue (NaN)"));
    }
    report
        .plots
        .push("resonance_map.csv: phi_over_2pi vs gamma_per_period; phi_over_2pi vs Z_projection, Z1".into());
    Ok(report)
}

fn z_scaling(config: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = grid(config)?;
    require(&spec, &[SweepParameter::PhiOver2Pi], config.experiment)?;
    let mut points = Vec::new();
    for &v0 in &config.run.v0_values {
        let gap = config.average_gap(v0)?;
        for x in spec.values() {
            points.push((v0, gap, x));
        }
    }
    let rows = sweep_runner(&points, config.workers, |&(v0, gap, x)| {
        let params = LatticeParams {
            v0,
            f0: gap / x,
            ..config.params
        };
        let model = resonance_point(gap, v0, params.f0)?;
        let full = if config.run.full_propagator {
            let (_, fit) = simulate_and_fit(config, &params)?;
            (fit.z - 1.0, fit.gamma_per_period)
        } else {
            (f64::NAN, f64::NAN)
        };
        Ok((
            v0,
            params.f0,
            2.0 * PI * x,
            model.z_projection - 1.0,
            model.gamma_per_period,
            full.0,
            full.1,
        ))
    })?;
    let mut csv = String::from("V0,F0,phi,Z_minus_1_model,gamma_model,Z_minus_1_full,gamma_full\n");
    for r in rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            e(r.0),
            e(r.1),
            e(r.2),
            e(r.3),
            e(r.4),
            e(r.5),
            e(r.6)
        )
        .unwrap();
    }
    let mut report = Report::default();
    report.file("z_scaling.csv", csv);
    report
        .plots
        .push("z_scaling.csv: phi vs Z_minus_1_model (one curve per V0), Z_minus_1_full as points".into());
    Ok(report)
}

/// Per-depth coupling curve over one Bloch period and its half widths.
pub struct CouplingCurve {
    pub v0: f64,
    pub t_over_tb: Vec<f64>,
    pub c: Vec<f64>,
    pub normalized: Vec<f64>,
    pub lorentzian: Vec<f64>,
    pub half_width_over_tb: f64,
    pub lorentzian_half_width_over_tb: f64,
}

pub fn coupling_curve(params: &LatticeParams, time_points: usize) -> Result<CouplingCurve, CliError> {
    let tb = bloch_period(params.f0)?;
    let t: Vec<f64> = (0..time_points)
        .map(|i| tb * i as f64 / (time_points - 1) as f64)
        .collect();
    let series = adiabatic_coupling(params, &t)?;
    // zone-edge crossing time and the two-level reduction around it:
    // diabatic energies k^2 and (k - 2)^2 separate at 2 α t with α = 2 F0 / π
    let t_cross = (1.0 - params.k0) * PI / params.f0;
    let rate = 2.0 * params.f0 / PI;
    let gap = bloch_eigensystem(params, 1.0)?.gap(0, 1);
    let lorentz = lz_coupling_lorentzian(gap, rate, &t, t_cross)?;
    let w = gap / (2.0 * rate);
    let half_width = series
        .half_width()
        .ok_or_else(|| CliError::Numerical(format!("V0 = {}: coupling never falls to half maximum", params.v0)))?;
    Ok(CouplingCurve {
        v0: params.v0,
        t_over_tb: t.iter().map(|x| x / tb).collect(),
        normalized: series.normalized(),
        c: series.c,
        lorentzian: lorentz.iter().map(|l| l * 2.0 * w).collect(),
        half_width_over_tb: half_width / tb,
        lorentzian_half_width_over_tb: w / tb,
    })
}

fn coupling_map(config: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = grid(config)?;
    require(&spec, &[SweepParameter::V0], config.experiment)?;
    if config.params.f0 <= 0.0 {
        return Err(CliError::Validation("coupling_map needs F0 > 0".into()));
    }
    let params = sweep_params(config, &spec)?;
    let curves = sweep_runner(&params, config.workers, |p| coupling_curve(p, config.run.time_points))?;
    let mut csv = String::from("V0,t_over_TB,c,c_normalized,lorentzian_normalized\n");
    let mut widths = String::from("V0,half_width_over_TB,lorentzian_half_width_over_TB\n");
    for c in &curves {
        for i in 0..c.t_over_tb.len() {
            writeln!(
                csv,
                "{},{},{},{},{}",
                e(c.v0),
                e(c.t_over_tb[i]),
                e(c.c[i]),
                e(c.normalized[i]),
                e(c.lorentzian[i])
            )
            .unwrap();
        }
        writeln!(
            widths,
            "{},{},{}",
            e(c.v0),
            e(c.half_width_over_tb),
            e(c.lorentzian_half_width_over_tb)
        )
        .unwrap();
    }
    let mut report = Report::default();
    report.file("coupling_map.csv", csv);
    report.file("coupling_widths.csv", widths);
    report
        .plots
        .push("coupling_map.csv: (t_over_TB, V0) surface of c_normalized".into());
    report
        .plots
        .push("coupling_widths.csv: V0 vs half_width_over_TB, lorentzian_half_width_over_TB".into());
    Ok(report)
}

/// Midpoints of `count` equal cells covering [-1, 1); one point gives k0 = 0.
pub fn k0_grid(count: usize) -> Vec<f64> {
    (0..count).map(|j| -1.0 + (2 * j + 1) as f64 / count as f64).collect()
}

/// Band-1 survival averaged over initial quasi-momenta (incoherent mixture).
pub fn averaged_trajectory(trajectories: &[Trajectory]) -> Trajectory {
    let mut avg = trajectories[0].clone();
    let m = trajectories.len() as f64;
    for (i, p) in avg.survival_series.iter_mut().enumerate() {
        *p = trajectories.iter().map(|t| t.survival_series[i]).sum::<f64>() / m;
    }
    for (i, n) in avg.norm_series.iter_mut().enumerate() {
        *n = trajectories.iter().map(|t| t.norm_series[i]).sum::<f64>() / m;
    }
    for (i, pops) in avg.band_populations.iter_mut().enumerate() {
        for (b, p) in pops.iter_mut().enumerate() {
            *p = trajectories.iter().map(|t| t.band_populations[i][b]).sum::<f64>() / m;
        }
    }
    avg.truncated_norm = trajectories.iter().map(|t| t.truncated_norm).sum::<f64>() / m;
    avg
}

fn broad_average(config: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = grid(config)?;
    require(
        &spec,
        &[SweepParameter::PhiOver2Pi, SweepParameter::F0],
        config.experiment,
    )?;
    let count = config.run.k0_points;
    if count < 32 && count != 1 {
        log::warn!("k0 grid of {count} points is too coarse for a zone average (32 recommended)");
    }
    let ks = k0_grid(count);
    let bases = sweep_params(config, &spec)?;
    let mut jobs = Vec::new();
    for i in 0..bases.len() {
        jobs.push((i, None));
        for &k0 in &ks {
            jobs.push((i, Some(k0)));
        }
    }
    let protocol = config.protocol();
    let trajectories = sweep_runner(&jobs, config.workers, |&(i, k0)| {
        let params = LatticeParams {
            k0: k0.unwrap_or(bases[i].k0),
            ..bases[i]
        };
        run_trajectory(config, &params, &protocol)
    })?;
    let gap = config.average_gap(config.params.v0)?;
    let mut csv = String::from("phi_over_2pi,F0,Z_broad_minus_1,gamma_broad,Z_narrow_minus_1,gamma_narrow\n");
    let stride = count + 1;
    for (i, base) in bases.iter().enumerate() {
        let narrow = fit_trajectory(config, base, &trajectories[i * stride])?;
        let broad_traj = averaged_trajectory(&trajectories[i * stride + 1..(i + 1) * stride]);
        let broad = fit_trajectory(config, base, &broad_traj)?;
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            e(phi_over_2pi(gap, base.f0)),
            e(base.f0),
            e(broad.z - 1.0),
            e(broad.gamma_per_period),
            e(narrow.z - 1.0),
            e(narrow.gamma_per_period)
        )
        .unwrap();
    }
    let mut report = Report::default();
    report.file("broad_average.csv", csv);
    report
        .plots
        .push("broad_average.csv: phi_over_2pi vs Z_broad_minus_1 and Z_narrow_minus_1".into());
    Ok(report)
}

fn sweep(config: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = grid(config)?;
    let params = sweep_params(config, &spec)?;
    let gap_at = |v0: f64| config.average_gap(v0);
    let rows = sweep_runner(&params, config.workers, |p| {
        let (_, fit) = simulate_and_fit(config, p)?;
        Ok((*p, phi_over_2pi(gap_at(p.v0)?, p.f0), fit))
    })?;
    let mut csv = format!("V0,F0,k0,phi_over_2pi,{}\n", DecayEstimate::CSV_HEADER);
    for (p, x, fit) in rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            e(p.v0),
            e(p.f0),
            e(p.k0),
            e(x),
            e(fit.z),
            e(fit.gamma_per_period),
            e(fit.gamma_per_time),
            fit.fit_window.0,
            fit.fit_window.1,
            e(fit.residual)
        )
        .unwrap();
    }
    let mut report = Report::default();
    report.file("sweep.csv", csv);
    report
        .plots
        .push("sweep.csv: phi_over_2pi vs gamma_per_period; phi_over_2pi vs Z".into());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k0_grid_is_uniform_midpoints() {
        assert_eq!(k0_grid(1), vec![0.0]);
        let g = k0_grid(4);
        assert_eq!(g, vec![-0.75, -0.25, 0.25, 0.75]);
    }

    #[test]
    fn gap_curve_columns() {
        let mut c = ExperimentConfig::new(Experiment::GapCurve);
        c.sweep = Some(SweepSpec {
            parameter: SweepParameter::V0,
            min: 0.0,
            max: 20.0,
            count: 3,
        });
        let r = execute(&c).unwrap();
        let text = r.get("gap_curve.csv").unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "V0,gap_numerical,gap_small_v,gap_large_v");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with("NaN"));
        let first: Vec<f64> = lines[1].split(',').take(3).map(|x| x.parse().unwrap()).collect();
        assert!((first[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bands_file_shape() {
        let mut c = ExperimentConfig::new(Experiment::Bands);
        c.params.bz_grid_points = 9;
        c.run.bands = 3;
        let r = execute(&c).unwrap();
        let text = r.get("bands.csv").unwrap();
        assert_eq!(text.lines().next().unwrap(), "k,band1,band2,band3");
        assert_eq!(text.lines().count(), 10);
    }

    #[test]
    fn effective_map_is_ordered_by_force() {
        let mut c = ExperimentConfig::new(Experiment::EffectiveMap);
        c.sweep = Some(SweepSpec {
            parameter: SweepParameter::PhiOver2Pi,
            min: 1.0,
            max: 4.0,
            count: 7,
        });
        let r = execute(&c).unwrap();
        let text = r.get("resonance_map.csv").unwrap();
        let f0: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert!(f0.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn wrong_sweep_parameter_is_rejected() {
        let mut c = ExperimentConfig::new(Experiment::GapCurve);
        c.sweep = Some(SweepSpec {
            parameter: SweepParameter::F0,
            min: 1.0,
            max: 2.0,
            count: 3,
        });
        assert_eq!(execute(&c).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn single_point_broad_average_equals_narrow() {
        let mut c = ExperimentConfig::new(Experiment::BroadAverage);
        c.params.v0 = 3.0;
        c.run.k0_points = 1;
        c.run.periods = 5;
        c.run.samples_per_period = 8;
        c.run.steps_per_period = 1024;
        c.sweep = Some(SweepSpec {
            parameter: SweepParameter::PhiOver2Pi,
            min: 2.0,
            max: 2.5,
            count: 2,
        });
        let r = execute(&c).unwrap();
        for line in r.get("broad_average.csv").unwrap().lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[2], f[4]);
            assert_eq!(f[3], f[5]);
        }
    }
}
