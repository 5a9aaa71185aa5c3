use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use mkvlab::coefficients::FieldSpec;
use mkvlab::distances::{
    relative_entropy, total_variation, w_psi_dual, w_psi_primal, wasserstein_k, EntropyMode, TvMode,
    WkMethod,
};
use mkvlab::harness::{run, RunOverrides};
use mkvlab::measures::{DistanceMethod, DistanceReport};
use mkvlab::mkv::{particle_simulate, picard_solve, PicardOptions, RhoOptions};
use mkvlab::sde::{euler_maruyama, DiffusionSpec, InitialLaw, SimulationOptions};
use mkvlab::{EmpiricalMeasure, PsiModulus};

#[derive(Parser)]
#[command(name = "mkvlab", version, about = "Probability metrics, SDE simulation and McKean-Vlasov experiments")]
struct Cli {
    /// Overrides the seed of the config (or of a one-shot command).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distance between two measures stored as `weight,x1,..,xd` CSV files.
    Metric(MetricArgs),
    /// Euler-Maruyama paths of a measure-free field.
    Simulate(SimulateArgs),
    /// McKean-Vlasov solvers.
    Mkv {
        #[command(subcommand)]
        solver: MkvCommand,
    },
    /// Runs a scaling experiment from `--config`.
    Experiment,
}

#[derive(Args)]
struct MetricArgs {
    mu: PathBuf,
    nu: PathBuf,
    #[arg(long, value_enum, default_value = "wk")]
    metric: MetricKind,
    #[arg(long, default_value_t = 2.0)]
    k: f64,
    #[arg(long, value_enum, default_value = "exact")]
    method: WkArg,
    /// `linear`, `power:<alpha>`, `constant:<c>`, `log:<beta>` or inline JSON.
    #[arg(long, default_value = "linear")]
    psi: String,
    /// Neighbour index for the kNN entropy estimator.
    #[arg(long, default_value_t = 5)]
    knn: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricKind {
    Wk,
    Wpsi,
    WpsiDual,
    Tv,
    KlKnn,
    KlGaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum WkArg {
    Exact,
    Quantile,
    Sinkhorn,
}

#[derive(Args)]
struct SimulateArgs {
    /// Also write the raw `MKVPATHS` binary dump.
    #[arg(long)]
    binary: bool,
}

#[derive(Subcommand)]
enum MkvCommand {
    /// Interacting particle system.
    Particle,
    /// Picard iteration on measure flows.
    Picard,
}

/// Config for `simulate` and `mkv`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSpec {
    field: FieldSpec,
    initial: InitialLaw,
    horizon: f64,
    n_paths: usize,
    n_steps: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    record_stride: usize,
    #[serde(default)]
    picard: Option<PicardSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PicardSpec {
    lambda: f64,
    tol: f64,
    max_iter: usize,
    #[serde(default = "PsiModulus::linear")]
    psi: PsiModulus,
    #[serde(default = "two")]
    k: f64,
    #[serde(default)]
    lambda_sweep: Vec<f64>,
}

fn one() -> usize {
    1
}

fn two() -> f64 {
    2.0
}

fn parse_psi(text: &str) -> Result<PsiModulus> {
    let text = text.trim();
    if text.starts_with('{') {
        return Ok(serde_json::from_str(text)?);
    }
    let (name, arg) = text.split_once(':').unwrap_or((text, ""));
    let value = || arg.parse::<f64>().with_context(|| format!("bad ψ parameter `{arg}`"));
    Ok(match name {
        "linear" => PsiModulus::linear(),
        "power" => PsiModulus::power(value()?)?,
        "constant" => PsiModulus::constant(value()?)?,
        "log" => PsiModulus::log_reciprocal(value()?)?,
        _ => bail!("unknown ψ `{text}`"),
    })
}

fn read_spec(cli: &Cli) -> Result<RunSpec> {
    let path = cli.config.as_ref().context("--config is required")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let mut spec: RunSpec = serde_path_to_error::deserialize(&mut de).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("mkvlab-out"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn metric(args: &MetricArgs) -> Result<DistanceReport> {
    let read = |p: &Path| EmpiricalMeasure::read_csv_file(p).with_context(|| format!("reading {}", p.display()));
    let (mu, nu) = (read(&args.mu)?, read(&args.nu)?);
    let psi = parse_psi(&args.psi)?;
    Ok(match args.metric {
        MetricKind::Wk => {
            let method = match args.method {
                WkArg::Exact => WkMethod::ExactLp,
                WkArg::Quantile => WkMethod::Quantile1d,
                WkArg::Sinkhorn => WkMethod::Sinkhorn { epsilon: None },
            };
            wasserstein_k(&mu, &nu, args.k, method)?
        }
        MetricKind::Wpsi => w_psi_primal(&mu, &nu, &psi)?,
        MetricKind::WpsiDual => w_psi_dual(&mu, &nu, &psi)?,
        MetricKind::Tv => total_variation(&mu, &nu, TvMode::Atomic)?,
        MetricKind::KlKnn | MetricKind::KlGaussian => {
            let (mode, method) = match args.metric {
                MetricKind::KlKnn => (EntropyMode::Knn { k: args.knn }, DistanceMethod::Knn),
                _ => (EntropyMode::GaussianClosedForm, DistanceMethod::ClosedForm),
            };
            DistanceReport::new("relative_entropy", relative_entropy(&mu, &nu, mode)?, method)
        }
    })
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let spec = read_spec(cli)?;
    let field = spec.field.build()?;
    let diffusion = DiffusionSpec::new(field, 0.0, spec.horizon)?;
    let opts = SimulationOptions::new(spec.n_paths, spec.n_steps, spec.seed).with_record_stride(spec.record_stride);
    let ens = euler_maruyama(&diffusion, &spec.initial, opts)?;
    let dir = out_dir(cli)?;
    ens.write_csv(BufWriter::new(File::create(dir.join("paths.csv"))?))?;
    if args.binary {
        ens.write_binary(BufWriter::new(File::create(dir.join("paths.bin"))?))?;
    }
    println!("wrote {} paths to {}", ens.n_paths, dir.display());
    Ok(())
}

fn mkv(cli: &Cli, solver: &MkvCommand) -> Result<()> {
    let spec = read_spec(cli)?;
    let field = spec.field.build()?;
    let diffusion = DiffusionSpec::new(Arc::clone(&field), 0.0, spec.horizon)?;
    let dir = out_dir(cli)?;
    match solver {
        MkvCommand::Particle => {
            let opts = SimulationOptions::new(spec.n_paths, spec.n_steps, spec.seed).with_record_stride(spec.record_stride);
            let run = particle_simulate(&diffusion, &spec.initial, opts)?;
            run.flow.write_csv(dir.join("flow.csv"), 1)?;
            println!("wrote particle flow to {}", dir.join("flow.csv").display());
        }
        MkvCommand::Picard => {
            let p = spec.picard.context("config needs a `picard` section")?;
            let mut opts = PicardOptions::new(p.lambda, p.tol, p.max_iter, RhoOptions::new(p.psi, p.k));
            opts.lambda_sweep = p.lambda_sweep;
            opts.output_dir = Some(dir.clone());
            let state = picard_solve(&diffusion, &spec.initial, spec.n_paths, spec.n_steps, spec.seed, &opts)?;
            for step in &state.history {
                println!(
                    "iteration {:>3}  rho {:.6e}  ratio {}",
                    step.iteration,
                    step.rho,
                    step.ratio.map(|r| format!("{r:.4}")).unwrap_or_else(|| "-".into())
                );
            }
            println!(
                "converged: {}{}; run directory {}",
                state.converged,
                if state.non_contraction { " (non-contraction detected)" } else { "" },
                dir.display()
            );
            if !state.converged {
                bail!("Picard iteration did not reach tol = {}", p.tol);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        mkvlab::par::init_thread_pool(n);
    }
    let result = match &cli.command {
        Command::Metric(args) => metric(args).map(|r| println!("{}", serde_json::to_string_pretty(&r).unwrap())),
        Command::Simulate(args) => simulate(&cli, args),
        Command::Mkv { solver } => mkv(&cli, solver),
        Command::Experiment => {
            let Some(config) = cli.config.as_ref() else {
                eprintln!("error: --config is required");
                return ExitCode::from(1);
            };
            let outcome = run(
                config,
                &RunOverrides {
                    seed: cli.seed,
                    out_dir: cli.out_dir.clone(),
                    threads: None,
                },
            );
            if let Some(report) = &outcome.report {
                print!("{}", report.summary_table());
            }
            if let Some((json, csv)) = &outcome.paths {
                println!("report: {} {}", json.display(), csv.display());
            }
            if let Some(err) = &outcome.error {
                eprintln!("error: {err}");
            }
            return ExitCode::from(outcome.exit_code as u8);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
