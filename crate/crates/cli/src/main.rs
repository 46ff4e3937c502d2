//! `enslab` command-line driver.
//!
//! Failures print one line `error kind=<kind> message=<text>` to stderr and
//! exit with status 1; usage errors exit with status 2.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use enslab::experiments::{self, PerturbTarget, Perturbation};
use enslab::functionals::{self, EnergyLedger, Running, LEDGER_COLUMNS};
use enslab::io;
use enslab::solver::Simulation;
use enslab::state::MonitorConfig;
use enslab::{Error, Result, RunConfig};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "enslab", version, about = "Pseudo-spectral Euler-Navier-Stokes laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration; writes ledger.csv, monitor.csv, config.cfg and checkpoints.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Continue from a checkpoint written by an earlier run of the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Recompute every ledger functional of a checkpointed state.
    Diagnose {
        checkpoint: PathBuf,
        /// Also write the values as a one-row ledger CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_besov: bool,
        #[arg(long)]
        no_higher_order: bool,
    },
    /// Fit c(1 + a t)^(−β) to a ledger column.
    DecayFit {
        ledger: PathBuf,
        #[arg(long, default_value = "e1")]
        column: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
    },
    /// Twin-run stability experiment.
    Twin {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Target::Velocity)]
        target: Target,
        /// Perturbation size; repeat for several.
        #[arg(long = "epsilon", default_values_t = vec![1e-3])]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        band: i64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Random-field sweep of the functional inequalities.
    Inequalities {
        #[arg(long, value_delimiter = ',', default_values_t = vec![32, 64])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        band: i64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2.0 * std::f64::consts::PI)]
        box_len: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Long-time density analysis of a run.
    DensityLongtime {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        from: f64,
        /// Defaults to t_end/2.
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a matplotlib script plotting a ledger CSV.
    EmitPlots {
        ledger: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Velocity,
    Density,
    Particle,
}

impl From<Target> for PerturbTarget {
    fn from(t: Target) -> Self {
        match t {
            Target::Velocity => PerturbTarget::Velocity,
            Target::Density => PerturbTarget::Density,
            Target::Particle => PerturbTarget::Particle,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|_| dispatch(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error kind={} message={message}", e.kind());
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("ENSLAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("ENSLAB_THREADS = '{raw}' is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out, resume } => run(&config, &out, resume.as_deref()),
        Command::Diagnose {
            checkpoint,
            out,
            no_besov,
            no_higher_order,
        } => diagnose(&checkpoint, out.as_deref(), !no_besov, !no_higher_order),
        Command::DecayFit { ledger, column, from, to } => decay_fit(&ledger, &column, from, to),
        Command::Twin {
            config,
            target,
            epsilons,
            seed,
            band,
            out,
        } => twin(&config, target.into(), &epsilons, seed, band, &out),
        Command::Inequalities {
            sizes,
            count,
            band,
            seed,
            box_len,
            out,
        } => inequalities(&sizes, count, band, seed, box_len, out.as_deref()),
        Command::DensityLongtime { config, from, to, out } => density_longtime(&config, from, to, out.as_deref()),
        Command::EmitPlots { ledger, out } => emit_plots(&ledger, out.as_deref()),
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    io::parse_config(&fs::read_to_string(path)?)
}

fn checkpoint_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("checkpoint_{step:08}.bin"))
}

fn run(config_path: &Path, out: &Path, resume: Option<&Path>) -> Result<()> {
    let config = load_config(config_path)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.cfg"), io::emit_config(&config))?;
    let mut sim = match resume {
        Some(p) => {
            let ckpt = io::read_checkpoint(p)?;
            if ckpt.scheme != config.scheme {
                return Err(Error::Checkpoint(format!(
                    "checkpoint was written by the {} scheme, config asks for {}",
                    ckpt.scheme, config.scheme
                )));
            }
            Simulation::resume(&config, ckpt.state)?
        }
        None => Simulation::new(&config)?,
    };
    let write_now = |sim: &Simulation| io::write_checkpoint(sim.state(), config.scheme, &checkpoint_path(out, sim.steps_done()));
    if resume.is_none() {
        write_now(&sim)?;
    }
    while sim.steps_done() < sim.total_steps() {
        sim.advance()?;
        let at_cadence = config.checkpoint_every > 0 && sim.steps_done() % config.checkpoint_every == 0;
        if at_cadence || sim.steps_done() == sim.total_steps() {
            write_now(&sim)?;
        }
        log::info!("step {}/{}", sim.steps_done(), sim.total_steps());
    }
    let output = sim.finish()?;
    io::write_ledger(&output.ledger, &out.join("ledger.csv"))?;
    let report = experiments::monitor(&output.ledger);
    fs::write(out.join("monitor.csv"), io::monitor_to_csv(&report))?;

    let first = output.ledger.rows().first();
    let last = output.ledger.rows().last();
    println!("t_end = {}", output.final_state.time());
    println!("ledger_rows = {}", output.ledger.len());
    if let (Some(a), Some(b)) = (first, last) {
        println!("mass_drift = {:e}", (b.mass - a.mass).abs() / a.mass.abs().max(f64::MIN_POSITIVE));
        println!("e0 = {:e} -> {:e}", a.e0, b.e0);
    }
    println!("max_energy_residual = {:e}", report.max_abs_energy_residual);
    println!("min_w_slack = {:e}", report.min_w_slack);
    println!("w_bound_holds = {}", report.w_bound_holds);
    let negative = output.ledger.negative_columns();
    if !negative.is_empty() {
        println!("negative_columns = {}", negative.join(","));
    }
    Ok(())
}

fn diagnose(path: &Path, out: Option<&Path>, besov: bool, higher_order: bool) -> Result<()> {
    let ckpt = io::read_checkpoint(path)?;
    let state = &ckpt.state;
    let monitor = MonitorConfig {
        besov,
        higher_order,
        ..MonitorConfig::default()
    };
    let r = functionals::r_constant(state.rho());
    let row = functionals::ledger_row(state, r, &monitor, &Running::new(state.w().max_norm()))?;
    for (name, value) in LEDGER_COLUMNS.iter().zip(row.values()) {
        println!("{name} = {value:.16e}");
    }
    if let Some(out) = out {
        let mut ledger = EnergyLedger::new();
        ledger.push(row)?;
        io::write_ledger(&ledger, out)?;
    }
    Ok(())
}

fn decay_fit(path: &Path, column: &str, from: f64, to: f64) -> Result<()> {
    let ledger = io::read_ledger(path)?;
    let fit = experiments::decay_fit(&ledger.series(column)?, (from, to))?;
    println!("column = {column}");
    println!("a = {:e}", fit.a);
    println!("beta = {}", fit.beta);
    println!("amplitude = {:e}", fit.amplitude);
    println!("window = [{}, {}]", fit.t_lo, fit.t_hi);
    println!("points = {}", fit.points);
    println!("residual = {:e}", fit.residual);
    Ok(())
}

fn twin(config_path: &Path, target: PerturbTarget, epsilons: &[f64], seed: u64, band: i64, out: &Path) -> Result<()> {
    let config = load_config(config_path)?;
    let perturbations: Vec<Perturbation> = epsilons
        .iter()
        .map(|&epsilon| Perturbation {
            epsilon,
            seed,
            band,
            ..Perturbation::new(target, epsilon)
        })
        .collect();
    let reports = experiments::twin_runs(&config, &perturbations)?;
    fs::create_dir_all(out)?;
    for (i, r) in reports.iter().enumerate() {
        fs::write(out.join(format!("twin_{i}.csv")), io::stability_to_csv(r))?;
        let eps = r.perturbation.epsilon;
        println!(
            "epsilon = {eps:e}  sup_delta_e = {:e}  sup_delta_e/eps^2 = {:e}  worst_violation = {:e}",
            r.sup_delta_e(),
            r.sup_delta_e() / (eps * eps),
            r.worst_violation()
        );
    }
    Ok(())
}

fn inequalities(sizes: &[usize], count: usize, band: i64, seed: u64, box_len: f64, out: Option<&Path>) -> Result<()> {
    let stats = experiments::inequality_sweep(sizes, box_len, count, band, seed)?;
    for s in &stats {
        println!(
            "{:8} n = {:4}  max = {:.6e}  min = {:.6e}  amplitude_defect = {:.3e}",
            s.id.name(),
            s.n,
            s.max_ratio,
            s.min_ratio,
            s.amplitude_defect
        );
    }
    if let Some(out) = out {
        fs::write(out, io::inequalities_to_csv(&stats))?;
    }
    Ok(())
}

fn density_longtime(config_path: &Path, from: f64, to: Option<f64>, out: Option<&Path>) -> Result<()> {
    let mut config = load_config(config_path)?;
    if config.checkpoint_every == 0 {
        config.checkpoint_every = config.cadence;
    }
    let to = to.unwrap_or(config.t_end / 2.0);
    let output = enslab::solver::run(&config)?;
    let report = experiments::density_longtime(&output.snapshots, from, to)?;
    println!("window = [{}, {}]", report.window.0, report.window.1);
    println!("converged = {}", report.converged);
    println!("monotone = {}", report.monotone);
    if let Some(rate) = report.rate {
        println!("rate = {rate}");
    }
    if let Some(&(t, flux)) = report.tail_flux.first() {
        println!("tail_flux({t}) = {flux:e}");
    }
    if let Some(out) = out {
        fs::write(out, io::density_longtime_to_csv(&report))?;
    }
    Ok(())
}

fn emit_plots(ledger: &Path, out: Option<&Path>) -> Result<()> {
    // Validate the ledger before pointing a script at it.
    io::read_ledger(ledger)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| ledger.with_extension("py"));
    fs::write(&out, io::plot_script(&ledger.to_string_lossy()))?;
    println!("{}", out.display());
    Ok(())
}
