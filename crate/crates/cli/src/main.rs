use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ret_cli::{run, CliError, Experiment, ExperimentConfig, ProtocolKind};

/// Resonantly enhanced tunneling in a tilted optical lattice: band
/// structure, exact propagation and the two-band cascade model.
#[derive(Parser)]
#[command(name = "ret", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Band energies over the first Brillouin zone.
    Bands(Common),
    /// Zone-averaged band gap against its small- and large-depth estimates.
    GapCurve(Common),
    /// Full propagation of one wave packet, with a plateau fit.
    Simulate(Common),
    /// Cascade-model decay rate and Z over a force or phase grid.
    EffectiveMap(Common),
    /// Z - 1 against the Bloch phase for several depths.
    ZScaling(Common),
    /// Non-adiabatic coupling over one Bloch period for a range of depths.
    CouplingMap(Common),
    /// Survival averaged over initial quasi-momenta, against the narrow case.
    BroadAverage(Common),
    /// Full-propagator fits over a one-parameter grid.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    v0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    f0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    k0: Option<f64>,
    /// Set F0 from the average gap so that φ/2π takes this value.
    #[arg(long)]
    phi_over_2pi: Option<f64>,
    #[arg(long)]
    periods: Option<usize>,
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    #[arg(long)]
    halt_probability: Option<f64>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ProtocolArg {
    ConstantForce,
    PhaseReversalHalt,
    RandomizedHalt,
    EmptySecondBand,
}

impl From<ProtocolArg> for ProtocolKind {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::ConstantForce => ProtocolKind::ConstantForce,
            ProtocolArg::PhaseReversalHalt => ProtocolKind::PhaseReversalHalt,
            ProtocolArg::RandomizedHalt => ProtocolKind::RandomizedHalt,
            ProtocolArg::EmptySecondBand => ProtocolKind::EmptySecondBand,
        }
    }
}

fn build_config(experiment: Experiment, args: Common) -> Result<ExperimentConfig, CliError> {
    let mut c = match &args.config {
        Some(path) => ExperimentConfig::load(path, experiment)?,
        None => ExperimentConfig::new(experiment),
    };
    if let Some(v) = args.out {
        c.output_path = v;
    }
    if let Some(v) = args.seed {
        c.rng_seed = v;
    }
    if let Some(v) = args.workers {
        c.workers = v;
    }
    if let Some(v) = args.v0 {
        c.params.v0 = v;
    }
    if let Some(v) = args.f0 {
        c.params.f0 = v;
    }
    if let Some(v) = args.k0 {
        c.params.k0 = v;
    }
    if let Some(v) = args.phi_over_2pi {
        c.run.phi_over_2pi = Some(v);
    }
    if let Some(v) = args.periods {
        c.run.periods = v;
    }
    if let Some(v) = args.protocol {
        c.protocol.kind = v.into();
    }
    if let Some(v) = args.halt_probability {
        c.protocol.halt_probability = v;
    }
    Ok(c)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors are validation errors (exit 1); clap would use 2
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (experiment, args) = match cli.command {
        Command::Bands(a) => (Experiment::Bands, a),
        Command::GapCurve(a) => (Experiment::GapCurve, a),
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::EffectiveMap(a) => (Experiment::EffectiveMap, a),
        Command::ZScaling(a) => (Experiment::ZScaling, a),
        Command::CouplingMap(a) => (Experiment::CouplingMap, a),
        Command::BroadAverage(a) => (Experiment::BroadAverage, a),
        Command::Sweep(a) => (Experiment::Sweep, a),
    };
    let outcome = build_config(experiment, args).and_then(|c| run(&c).map(|r| (c, r)));
    match outcome {
        Ok((config, (report, meta))) => {
            for line in &report.summary {
                println!("{line}");
            }
            for f in &meta.outputs {
                println!("wrote {}/{f}", config.output_path);
            }
            for p in &report.plots {
                println!("plot: {p}");
            }
            println!("done in {:.2} s", meta.wall_time_seconds);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
