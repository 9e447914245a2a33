//! `msol`: command-line driver for the multi-soliton laboratory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use msol_core::diagnostics::{energy, mass};
use msol_core::evolution::{step_count, Direction, Stepper};
use msol_core::ground_state::{rescale, solve_ground_state};
use msol_core::harness::{
    fit_decay, read_records, run_backward_construction, run_equivalence_study, write_slope_table, DecayModel, RunConfig,
    RunOptions, OUTPUT_ROOT_VAR,
};
use msol_core::modulation::{decompose, DecomposeOptions};
use msol_core::noise::sample_drive;
use msol_core::soliton::{soliton_sum, Mode, ModulationParams};
use msol_core::spectral::{read_binary, write_binary};
use msol_core::{Error, Result};

#[derive(Parser)]
#[command(name = "msol", version, about = "Multi-soliton construction laboratory for stochastic NLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the ground state and write its profile and certificate.
    GroundState(GroundStateArgs),
    /// Sample the soliton sum of a configuration at one time.
    Soliton(SolitonArgs),
    /// Sample the Brownian drive of a configuration.
    Drive(DriveArgs),
    /// Evolve the soliton sum of a configuration.
    Simulate(SimulateArgs),
    /// Decompose a stored snapshot into modulated solitons plus a remainder.
    Decompose(DecomposeArgs),
    /// Backward multi-soliton construction for every (seed, horizon).
    Construct(ConstructArgs),
    /// Fit exponential and power-law decay to stored run records.
    DecayFit(DecayFitArgs),
    /// Forward-time transform equivalence under a time-step sweep.
    Equivalence(EquivalenceArgs),
    /// Summarize the run records of a directory.
    Report(ReportArgs),
}

/// The configuration file plus the overrides shared by every run.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replaces the configured seeds; repeat for several.
    #[arg(long)]
    seed: Vec<u64>,
    /// Replaces the configured horizons; repeat for several.
    #[arg(long)]
    horizon: Vec<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    /// Sets every noise amplitude.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Output directory (default: the configured one, under the output root).
    #[arg(long)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
        }
        if !self.horizon.is_empty() {
            cfg.horizons = self.horizon.clone();
        }
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(stride) = self.stride {
            cfg.stride = stride;
        }
        if let Some(a) = self.amplitude {
            cfg.noise.amplitudes.iter_mut().for_each(|x| *x = a);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn output(&self, cfg: &RunConfig) -> PathBuf {
        self.output.clone().unwrap_or_else(|| cfg.output_dir())
    }

    fn first_seed(&self, cfg: &RunConfig) -> u64 {
        cfg.seeds.first().copied().unwrap_or(0)
    }
}

#[derive(Args)]
struct GroundStateArgs {
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    frequency: f64,
    #[arg(long, default_value_t = 1e-11)]
    tol: f64,
    /// Profile samples are written on [0, r_max].
    #[arg(long, default_value_t = 20.0)]
    r_max: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SolitonArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 0.0)]
    t: f64,
}

#[derive(Args)]
struct DriveArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 0.0)]
    t_start: f64,
    #[arg(long)]
    t_end: f64,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Snapshot written by `simulate`, `soliton` or a construction checkpoint.
    #[arg(long)]
    state: PathBuf,
}

#[derive(Args)]
struct ConstructArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    plots: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Exp,
    Power,
}

#[derive(Args)]
struct DecayFitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Samples closer than this to the horizon are dropped.
    #[arg(long, default_value_t = 5.0)]
    end_offset: f64,
    /// Samples of `‖ε‖²_{H¹}` below this are dropped.
    #[arg(long, default_value_t = 1e-18)]
    floor: f64,
    /// Slope table path (default `<in>/slopes.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EquivalenceArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    /// Time steps, coarse to fine.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e-2, 5e-3, 2.5e-3])]
    dts: Vec<f64>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

fn default_output(path: Option<PathBuf>, name: &str) -> PathBuf {
    path.unwrap_or_else(|| match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) => PathBuf::from(root).join(name),
        None => PathBuf::from("runs").join(name),
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn write_snapshot(path: &Path, field: &msol_core::spectral::Field, t: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_binary(field, t, &mut w)?;
    w.flush()?;
    Ok(())
}

fn ground_state(args: GroundStateArgs) -> Result<()> {
    let base = solve_ground_state(args.p, args.d, args.tol)?;
    let q = if args.frequency == 1.0 { base } else { rescale(&base, args.frequency)? };
    let dir = default_output(args.output, "ground_state");
    std::fs::create_dir_all(&dir)?;
    let stem = format!("Q_p{}_d{}_w{}", args.p, args.d, args.frequency);
    let mut csv = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
    q.write_csv(&mut csv, args.r_max)?;
    csv.flush()?;
    let cert = q.certificate();
    write_json(&dir.join(format!("{stem}_certificate.json")), &cert)?;
    println!(
        "ode_residual {:.3e}  pohozaev_residual {:.3e}  mass {:.12}  -> {}",
        cert.ode_residual,
        cert.pohozaev_residual,
        cert.norms.mass,
        dir.display()
    );
    Ok(())
}

fn soliton(args: SolitonArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let grid = cfg.make_grid()?;
    let u = soliton_sum(&cfg.profile()?, &cfg.specs()?, args.t, &grid);
    let dir = args.config.output(&cfg);
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("soliton_t{}.bin", args.t));
    write_snapshot(&path, &u, args.t)?;
    println!("mass {:.12}  energy {:.12}  -> {}", mass(&u), energy(&u, cfg.p), path.display());
    Ok(())
}

fn drive(args: DriveArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let seed = args.config.first_seed(&cfg);
    let count = cfg.noise.amplitudes.len();
    let horizon = cfg.drive_horizon();
    let drive = sample_drive(count, horizon, cfg.dt / cfg.noise.refinement as f64, cfg.dt, seed)?;
    let dir = args.config.output(&cfg);
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("drive_seed{seed}.bin"));
    let mut w = BufWriter::new(File::create(&path)?);
    drive.write_binary(&mut w)?;
    w.flush()?;
    println!("{count} paths, {} steps to t = {horizon} -> {}", drive.steps(), path.display());
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let seed = args.config.first_seed(&cfg);
    let direction = if args.t_end >= args.t_start { Direction::Forward } else { Direction::Backward };
    let grid = cfg.make_grid()?;
    let noise = cfg.noise_model(&grid, seed)?;
    let stepper = Stepper::new(cfg.evolution(direction), grid.clone(), noise)?;
    let u0 = soliton_sum(&cfg.profile()?, &cfg.specs()?, args.t_start, &grid);
    let steps = step_count(args.t_start, args.t_end, cfg.dt)?;
    let dir = args.config.output(&cfg);
    std::fs::create_dir_all(&dir)?;
    let stem = format!("simulate_seed{seed}_t{}_{}", args.t_start, args.t_end);
    let mut csv = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
    writeln!(csv, "t,mass,energy")?;
    let u = stepper.evolve(&u0, args.t_start, steps, |n, t, u| {
        if n % cfg.stride == 0 {
            writeln!(csv, "{t},{:e},{:e}", mass(u), energy(u, cfg.p))?;
        }
        Ok(())
    })?;
    csv.flush()?;
    write_snapshot(&dir.join(format!("{stem}.bin")), &u, args.t_end)?;
    println!("mass drift {:.3e} -> {}", (mass(&u) - mass(&u0)).abs() / mass(&u0), dir.display());
    Ok(())
}

fn decompose_snapshot(args: DecomposeArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let (u, t) = read_binary(File::open(&args.state)?)?;
    let grid = cfg.make_grid()?;
    if u.grid().n() != grid.n() || u.grid().dim() != grid.dim() || u.grid().half_extent() != grid.half_extent() {
        return Err(Error::invalid("snapshot grid differs from the configured grid"));
    }
    let profile = cfg.profile()?;
    let specs = cfg.specs()?;
    let guess = ModulationParams::at_target(&specs, Mode::for_profile(&profile));
    let state = decompose(&u, t, &profile, &specs, &guess, &DecomposeOptions::default())?;
    let out = serde_json::json!({
        "t": t,
        "params": state.params,
        "residual": state.residual,
        "iterations": state.iterations,
        "eps_l2": state.eps_l2(),
        "eps_h1": state.eps_h1(),
    });
    let text = serde_json::to_string_pretty(&out).map_err(|e| Error::Format(e.to_string()))?;
    println!("{text}");
    Ok(())
}

/// Exit code 3 when any run ended in a failure status.
fn construct(args: ConstructArgs) -> Result<ExitCode> {
    let cfg = args.config.load()?;
    let dir = args.config.output(&cfg);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    let opts = RunOptions {
        jobs: args.jobs,
        output: Some(dir.clone()),
        plots: args.plots,
    };
    let set = run_backward_construction(&cfg, &opts)?;
    let mut failed = false;
    for r in &set.records {
        let rate = r.decay.as_ref().map_or("-".to_string(), |d| format!("{:.4}", d.rate));
        println!("{}: {:?} t0 {:?} decay rate {rate}", r.stem(), r.status, r.t0);
        failed |= !r.status.is_success();
    }
    println!("cauchy trend {} -> {}", set.cauchy_trend(), dir.display());
    Ok(if failed { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn decay_fit(args: DecayFitArgs) -> Result<()> {
    let model = match args.model {
        ModelArg::Exp => DecayModel::Exponential,
        ModelArg::Power => DecayModel::Power,
    };
    let records = read_records(&args.input)?;
    if records.is_empty() {
        return Err(Error::invalid(format!("no run records in {}", args.input.display())));
    }
    let mut rows = Vec::with_capacity(records.len());
    for r in &records {
        let (times, values): (Vec<f64>, Vec<f64>) = r
            .diagnostics
            .iter()
            .filter(|d| d.t <= r.horizon - args.end_offset && d.eps_h1 * d.eps_h1 > args.floor)
            .map(|d| (d.t, d.eps_h1 * d.eps_h1))
            .unzip();
        match fit_decay(&times, &values, model) {
            Ok(fit) => rows.push((r.stem(), fit)),
            Err(e) => eprintln!("{}: {e}", r.stem()),
        }
    }
    let path = args.out.unwrap_or_else(|| args.input.join("slopes.csv"));
    let mut w = BufWriter::new(File::create(&path)?);
    write_slope_table(&rows, &mut w)?;
    w.flush()?;
    println!("{} fits -> {}", rows.len(), path.display());
    Ok(())
}

fn equivalence(args: EquivalenceArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let seed = args.config.first_seed(&cfg);
    let study = run_equivalence_study(&cfg, seed, args.t_end, &args.dts)?;
    let dir = args.config.output(&cfg);
    std::fs::create_dir_all(&dir)?;
    write_json(&dir.join(format!("equivalence_seed{seed}.json")), &study)?;
    let mut w = BufWriter::new(File::create(dir.join(format!("equivalence_seed{seed}.csv")))?);
    writeln!(w, "dt,residual,star_residual,ratio,order,mass_drift,modulus_gap")?;
    for (i, level) in study.levels.iter().enumerate() {
        let ratio = i.checked_sub(1).map_or(String::new(), |j| format!("{:e}", study.ratios[j]));
        let order = i.checked_sub(1).map_or(String::new(), |j| format!("{:.4}", study.orders[j]));
        writeln!(
            w,
            "{},{:e},{:e},{ratio},{order},{:e},{:e}",
            level.dt, level.residual, level.star_residual, level.mass_drift, level.modulus_gap
        )?;
        println!("dt {:<8} residual {:.3e} ratio {ratio:<12} order {order}", level.dt, level.residual);
    }
    w.flush()?;
    println!("zero-noise residual {:.3e} -> {}", study.zero_noise_residual, dir.display());
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let records = read_records(&args.input)?;
    let mut rows = Vec::with_capacity(records.len());
    println!("{:<22} {:<10} {:>8} {:>10} {:>9} {:>10}", "run", "status", "t0", "rate", "bounds", "partition");
    for r in &records {
        let status = match &r.status {
            msol_core::harness::RunStatus::Success => "success",
            msol_core::harness::RunStatus::Failed { .. } => "failed",
            msol_core::harness::RunStatus::BlowUp { .. } => "blow-up",
        };
        let dominated = r.monitors.iter().all(|m| m.dominated);
        let rate = r.decay.as_ref().map(|d| d.rate);
        println!(
            "{:<22} {status:<10} {:>8} {:>10} {:>9} {:>10.2e}",
            r.stem(),
            r.t0.map_or("-".into(), |t| format!("{t}")),
            rate.map_or("-".into(), |x| format!("{x:.4}")),
            dominated,
            r.partition_error
        );
        rows.push(serde_json::json!({
            "run": r.stem(),
            "status": status,
            "t0": r.t0,
            "decay": r.decay,
            "monitors_dominated": dominated,
            "partition_error": r.partition_error,
        }));
    }
    write_json(&args.input.join("summary.json"), &rows)?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GroundState(a) => ground_state(a)?,
        Command::Soliton(a) => soliton(a)?,
        Command::Drive(a) => drive(a)?,
        Command::Simulate(a) => simulate(a)?,
        Command::Decompose(a) => decompose_snapshot(a)?,
        Command::Construct(a) => return construct(a),
        Command::DecayFit(a) => decay_fit(a)?,
        Command::Equivalence(a) => equivalence(a)?,
        Command::Report(a) => report(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // clap exits with code 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
