//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage, config or input errors, 2 when a
//! filter blows up numerically.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use collective_core::collective_hmm::filter_path;
use collective_core::models::{simulate_ctmc_agents, simulate_lg_agents};
use collective_core::DVector;
use serde::Serialize;

use crate::config::{ExperimentConfig, OutputFormat};
use crate::harness::{self, Experiment, HarnessError};
use crate::io::{self as files, AtomicFile, HmmDocument, IoError, JsonResults, Manifest};
use crate::oracle::oracle_check;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_BLOW_UP: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "collective-fpf", version, about = "Collective filtering of anonymous agent ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent here and in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate ground-truth agents and write their paths.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of agents.
        #[arg(long, default_value_t = 30)]
        agents: usize,
        /// Use the finite-state chain instead of the linear-Gaussian model.
        #[arg(long)]
        finite: bool,
    },
    /// Run the collective HMM filter on a JSON model and observation file.
    FilterHmm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
    },
    /// Independent Kalman filters vs the collective Kalman filter over M.
    ExperimentChangeM(Common),
    /// Linear-Gaussian FPF vs the collective Kalman filter over N.
    ExperimentChangeN(Common),
    /// Finite-state FPF vs the collective Wonham filter over N.
    ExperimentFinite(Common),
    /// Compare the collective HMM update with the KL-projection oracle.
    OracleCheck {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Harness(HarnessError::Run(f)) if f.is_blow_up() => EXIT_BLOW_UP,
            CliError::Numerical(_) => EXIT_BLOW_UP,
            _ => EXIT_USAGE,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.into())
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(HarnessError::from)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.experiment.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output.path = Some(out.clone());
    }
    if let Some(format) = common.format {
        config.output.format = format;
    }
    Ok(config)
}

/// Writes through `body` to `path` atomically, or to stdout.
fn emit(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> Result<(), IoError>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut f = AtomicFile::create(p)?;
            body(&mut f)?;
            f.commit()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn json_to<T: Serialize>(value: &T, w: &mut dyn Write) -> Result<(), IoError> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

fn experiment(common: &Common, which: Experiment) -> Result<(), CliError> {
    let config = load_config(common)?;
    let output = harness::run(&config, which)?;
    let manifest = Manifest::new(&config, &output);
    let path = config.output.path.as_deref();
    match config.output.format {
        OutputFormat::Csv => {
            if let Some(p) = path {
                // results are the primary artifact; write the manifest only
                // once they are in place
                emit(path, |w| files::write_results_csv(&output.runs, config.output.record_runtime, w))?;
                emit(Some(&files::manifest_path(p)), |w| json_to(&manifest, w))?;
            } else {
                emit(None, |w| files::write_results_csv(&output.runs, config.output.record_runtime, w))?;
            }
        }
        OutputFormat::Json => emit(path, |w| {
            json_to(
                &JsonResults {
                    manifest: &manifest,
                    runs: &output.runs,
                },
                w,
            )
        })?,
    }
    for row in manifest.summary {
        log::info!(
            "{which} {}: mean_err {:.4e} ± {:.1e}, var_err {:.4e} ± {:.1e} ({} seeds)",
            row.sweep,
            row.mean_err,
            row.mean_err_sd,
            row.var_err,
            row.var_err_sd,
            row.seeds
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct AgentJson<'a, S: Serialize> {
    states: &'a [S],
    increments: &'a [f64],
}

#[derive(Serialize)]
struct EnsembleJson<'a, S: Serialize> {
    dt: f64,
    agents: Vec<AgentJson<'a, S>>,
}

fn simulate(common: &Common, agents: usize, finite: bool) -> Result<(), CliError> {
    let config = load_config(common)?;
    config.validate().map_err(HarnessError::from)?;
    let seed = config.experiment.seed;
    let path = config.output.path.as_deref();
    let sim_error = |e: collective_core::Error| {
        if e.is_blow_up() {
            CliError::Numerical(format!("simulation failed: {e}"))
        } else {
            CliError::Input(format!("simulation failed: {e}"))
        }
    };
    if finite {
        let f = &config.finite;
        let model = config.finite_model().map_err(HarnessError::from)?;
        let ens = simulate_ctmc_agents(&model, agents, f.dt, f.horizon, seed).map_err(sim_error)?;
        match config.output.format {
            OutputFormat::Csv => emit(path, |w| files::write_ctmc_ensemble_csv(&ens, w)),
            OutputFormat::Json => emit(path, |w| {
                let doc = EnsembleJson {
                    dt: ens.dt(),
                    agents: ens.agents().iter().map(|a| AgentJson { states: &a.states, increments: &a.increments }).collect(),
                };
                json_to(&doc, w)
            }),
        }
    } else {
        let e = &config.experiment;
        let model = config.linear_gaussian_model().map_err(HarnessError::from)?;
        let ens = simulate_lg_agents(&model, agents, e.dt, e.horizon, seed).map_err(sim_error)?;
        match config.output.format {
            OutputFormat::Csv => emit(path, |w| files::write_lg_ensemble_csv(&ens, w)),
            OutputFormat::Json => emit(path, |w| {
                let states: Vec<Vec<Vec<f64>>> = ens
                    .agents()
                    .iter()
                    .map(|a| a.states.iter().map(|x: &DVector<f64>| x.iter().copied().collect()).collect())
                    .collect();
                let doc = EnsembleJson {
                    dt: ens.dt(),
                    agents: ens
                        .agents()
                        .iter()
                        .zip(&states)
                        .map(|(a, s)| AgentJson { states: s, increments: &a.increments })
                        .collect(),
                };
                json_to(&doc, w)
            }),
        }
    }
}

fn filter_hmm(input: &Path, out: Option<&Path>, format: OutputFormat) -> Result<(), CliError> {
    let doc = HmmDocument::load(input)?;
    let (model, qs) = doc.resolve().map_err(|m| CliError::Input(format!("{}: {m}", input.display())))?;
    let beliefs = filter_path(&model, &qs).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    match format {
        OutputFormat::Csv => emit(out, |w| files::write_beliefs_csv(&beliefs, w)),
        OutputFormat::Json => emit(out, |w| {
            let rows: Vec<&[f64]> = beliefs.iter().map(|b| b.as_slice()).collect();
            json_to(&rows, w)
        }),
    }
}

fn oracle(trials: usize, seed: u64) -> Result<(), CliError> {
    const TOL: f64 = 1e-6;
    let report = oracle_check(trials, seed).map_err(|(t, e)| CliError::Numerical(format!("trial {t}: {e}")))?;
    println!(
        "max deviation {:.3e} (max residual {:.3e}) over {} trials",
        report.max_deviation, report.max_residual, report.trials
    );
    if report.max_deviation < TOL {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("max deviation {:.3e} exceeds {TOL:e}", report.max_deviation)))
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Simulate { common, agents, finite } => simulate(common, *agents, *finite),
        Command::FilterHmm { input, out, format } => filter_hmm(input, out.as_deref(), *format),
        Command::ExperimentChangeM(c) => experiment(c, Experiment::ChangeM),
        Command::ExperimentChangeN(c) => experiment(c, Experiment::ChangeN),
        Command::ExperimentFinite(c) => experiment(c, Experiment::FiniteState),
        Command::OracleCheck { trials, seed } => oracle(*trials, *seed),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
