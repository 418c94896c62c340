//! File formats: result CSVs, run manifests, agent/particle snapshots and
//! the HMM input document.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use collective_core::aggregate::{empirical_symbol_distribution, EmpiricalSymbolDistribution};
use collective_core::fpf::{EuclideanEnsemble, FiniteEnsemble};
use collective_core::{AgentEnsemble, DMatrix, DVector, HmmModel, SimplexBelief};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::harness::{BlowUpRecord, Experiment, ExperimentOutput, ResultRow, SeedResult};

pub const RESULTS_HEADER: [&str; 5] = ["sweep", "seed", "mean_err", "var_err", "runtime_s"];

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", .path.display())]
    File { path: PathBuf, source: io::Error },
    #[error("{}: {message}", .path.display())]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A file written under a `.partial` name and renamed into place on
/// [`commit`](Self::commit). Dropping it uncommitted deletes the partial
/// file.
pub struct AtomicFile {
    target: PathBuf,
    partial: PathBuf,
    writer: Option<BufWriter<File>>,
}

impl AtomicFile {
    pub fn create(target: &Path) -> Result<Self, IoError> {
        let mut name = target.file_name().unwrap_or_default().to_os_string();
        name.push(".partial");
        let partial = target.with_file_name(name);
        let file = File::create(&partial).map_err(|source| IoError::File {
            path: partial.clone(),
            source,
        })?;
        Ok(Self {
            target: target.to_path_buf(),
            partial,
            writer: Some(BufWriter::new(file)),
        })
    }

    pub fn commit(mut self) -> Result<(), IoError> {
        let writer = self.writer.take().expect("uncommitted");
        writer.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&self.partial, &self.target).map_err(|source| IoError::File {
            path: self.target.clone(),
            source,
        })
    }
}

impl Write for AtomicFile {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.writer.as_mut().expect("uncommitted").write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.writer.as_mut().expect("uncommitted").flush()
    }
}

impl Drop for AtomicFile {
    fn drop(&mut self) {
        if self.writer.take().is_some() {
            let _ = fs::remove_file(&self.partial);
        }
    }
}

/// One row per `(sweep, seed)`. With `record_runtime` off the runtime
/// column is written as 0 so the file depends only on the config.
pub fn write_results_csv<W: Write>(runs: &[SeedResult], record_runtime: bool, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in runs {
        let runtime = if record_runtime { r.runtime_s } else { 0.0 };
        w.write_record([
            r.sweep.to_string(),
            r.seed.to_string(),
            r.mean_err.to_string(),
            r.var_err.to_string(),
            runtime.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: io::Read>(input: R) -> Result<Vec<SeedResult>, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != RESULTS_HEADER {
        return Err(IoError::Format {
            path: PathBuf::from("<results>"),
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, IoError> {
            rec[i].parse().map_err(|_| IoError::Format {
                path: PathBuf::from("<results>"),
                message: format!("line {}: bad number {:?}", rec.position().map_or(0, |p| p.line()), &rec[i]),
            })
        };
        rows.push(SeedResult {
            sweep: num(0)? as usize,
            seed: num(1)? as usize,
            mean_err: num(2)?,
            var_err: num(3)?,
            runtime_s: num(4)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorDefinition {
    pub column: &'static str,
    pub definition: &'static str,
}

/// Everything needed to interpret and reproduce a results file.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: Experiment,
    pub master_seed: u64,
    pub seed_scheme: &'static str,
    pub config: ExperimentConfig,
    pub errors: Vec<ErrorDefinition>,
    pub summary: Vec<ResultRow>,
    pub blowups: Vec<BlowUpRecord>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig, output: &ExperimentOutput) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            experiment: output.experiment,
            master_seed: config.experiment.seed,
            seed_scheme: "per-run seeds derived from (master seed, experiment, seed index) by splitmix64; \
                          agent j uses ChaCha8 stream j; sweep values share agents and initial particles",
            config: config.clone(),
            errors: output
                .experiment
                .error_definitions()
                .into_iter()
                .map(|(column, definition)| ErrorDefinition { column, definition })
                .collect(),
            summary: output.summary(),
            blowups: output.blowups.clone(),
            wall_time_s: output.wall_time_s,
        }
    }
}

/// `--format json` document: manifest plus per-seed rows.
#[derive(Debug, Serialize)]
pub struct JsonResults<'a> {
    pub manifest: &'a Manifest,
    pub runs: &'a [SeedResult],
}

/// Path of the manifest written next to a CSV result file.
pub fn manifest_path(results: &Path) -> PathBuf {
    let mut name = results.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    results.with_file_name(name)
}

fn write_snapshot<W: Write, S>(
    ensemble: &AgentEnsemble<S>,
    state_columns: &[String],
    state_fields: impl Fn(&S) -> Vec<String>,
    out: W,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_owned(), "agent_id".to_owned()];
    header.extend_from_slice(state_columns);
    header.push("dZ".to_owned());
    w.write_record(&header)?;
    let dt = ensemble.dt();
    for k in 0..=ensemble.num_steps() {
        for (j, agent) in ensemble.agents().iter().enumerate() {
            let mut rec = vec![(k as f64 * dt).to_string(), j.to_string()];
            rec.extend(state_fields(&agent.states[k]));
            // the increment over [t_k, t_k+1); none after the last state
            rec.push(agent.increments.get(k).map(f64::to_string).unwrap_or_default());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `time, agent_id, x0..x{d-1}, dZ`.
pub fn write_lg_ensemble_csv<W: Write>(ensemble: &AgentEnsemble<DVector<f64>>, out: W) -> Result<(), IoError> {
    let d = ensemble.agents().first().map_or(0, |a| a.states[0].len());
    let cols: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    write_snapshot(ensemble, &cols, |x| x.iter().map(f64::to_string).collect(), out)
}

/// Columns `time, agent_id, state, dZ`.
pub fn write_ctmc_ensemble_csv<W: Write>(ensemble: &AgentEnsemble<usize>, out: W) -> Result<(), IoError> {
    write_snapshot(ensemble, &["state".to_owned()], |x| vec![x.to_string()], out)
}

/// Appends `step, particle_id, x0..` rows; writes the header when `header`.
pub fn write_particles_csv<W: Write>(step: usize, ensemble: &EuclideanEnsemble, header: bool, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    if header {
        let mut h = vec!["step".to_owned(), "particle_id".to_owned()];
        h.extend((0..ensemble.dim()).map(|i| format!("x{i}")));
        w.write_record(&h)?;
    }
    for (i, col) in ensemble.particles().column_iter().enumerate() {
        let mut rec = vec![step.to_string(), i.to_string()];
        rec.extend(col.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Appends `step, particle_id, state` rows; writes the header when `header`.
pub fn write_finite_particles_csv<W: Write>(step: usize, ensemble: &FiniteEnsemble, header: bool, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    if header {
        w.write_record(["step", "particle_id", "state"])?;
    }
    for (i, s) in ensemble.states().iter().enumerate() {
        w.write_record([step.to_string(), i.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// HMM input document. Matrices are row-major nested arrays:
/// `transition[x][x'] = p(x | x')`, `emission[z][x] = o(z | x)`. The
/// observation sequence is given either as per-step symbol distributions
/// `q[t][z]` or as per-step lists of raw agent symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmmDocument {
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
    pub prior: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<Vec<Vec<usize>>>,
}

fn nested(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let ncols = rows.first()?.len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl HmmDocument {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(|source| IoError::File {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| IoError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Validated model and observation sequence.
    pub fn resolve(&self) -> Result<(HmmModel, Vec<EmpiricalSymbolDistribution>), String> {
        let transition = nested(&self.transition).ok_or("transition: empty or ragged matrix")?;
        let emission = nested(&self.emission).ok_or("emission: empty or ragged matrix")?;
        let prior = SimplexBelief::new(self.prior.clone()).map_err(|e| format!("prior: {e}"))?;
        let model = HmmModel::new(transition, emission, prior).map_err(|e| e.to_string())?;
        let m = model.num_symbols();
        let qs = match (&self.q, &self.symbols) {
            (Some(q), None) => q
                .iter()
                .enumerate()
                .map(|(t, row)| EmpiricalSymbolDistribution::from_probabilities(row.clone()).map_err(|e| format!("q[{t}]: {e}")))
                .collect::<Result<Vec<_>, _>>()?,
            (None, Some(s)) => s
                .iter()
                .enumerate()
                .map(|(t, row)| empirical_symbol_distribution(row, m).map_err(|e| format!("symbols[{t}]: {e}")))
                .collect::<Result<Vec<_>, _>>()?,
            _ => return Err("give exactly one of `q` or `symbols`".into()),
        };
        if qs.is_empty() {
            return Err("observation sequence is empty".into());
        }
        if let Some(t) = qs.iter().position(|q| q.num_symbols() != m) {
            return Err(format!("q[{t}] has {} entries, alphabet has {m}", qs[t].num_symbols()));
        }
        Ok((model, qs))
    }
}

/// Filtered beliefs as `t, p0..p{d-1}` rows, `t` starting at 1.
pub fn write_beliefs_csv<W: Write>(beliefs: &[SimplexBelief], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let d = beliefs.first().map_or(0, SimplexBelief::dim);
    let mut header = vec!["t".to_owned()];
    header.extend((0..d).map(|x| format!("p{x}")));
    w.write_record(&header)?;
    for (t, b) in beliefs.iter().enumerate() {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(b.as_slice().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
