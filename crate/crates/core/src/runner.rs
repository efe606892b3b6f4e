//! Replica execution across seeds and horizons, sweep reports and output files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{AppliedDefault, ScenarioDoc};
use crate::contract::ChainMode;
use crate::error::{ConfigError, Error, Result};
use crate::metrics::{regret_diagnostics, Diagnostics, HorizonPoint, Summary, CSV_HEADER};
use crate::sim::{run_scenario, RunOptions, RunOutput};
use crate::{Preset, ScenarioConfig};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "BCUCB_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "bcucb-out";

/// Where the scenario comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Preset(Preset),
    /// A scenario document; `name` labels the output directory.
    Document { name: String, text: String },
}

impl ScenarioSource {
    pub fn name(&self) -> &str {
        match self {
            ScenarioSource::Preset(p) => p.name(),
            ScenarioSource::Document { name, .. } => name,
        }
    }

    fn doc(&self) -> Result<ScenarioDoc, ConfigError> {
        match self {
            ScenarioSource::Preset(p) => Ok(ScenarioDoc {
                preset: Some(p.name().to_string()),
                ..ScenarioDoc::default()
            }),
            ScenarioSource::Document { text, .. } => ScenarioDoc::parse(text),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub source: ScenarioSource,
    /// Empty keeps the document's seed.
    pub seeds: Vec<u64>,
    /// Empty keeps the document's horizon.
    pub horizons: Vec<u64>,
    pub out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially, 0 lets the pool decide.
    pub jobs: usize,
    pub chain: ChainMode,
}

impl RunRequest {
    pub fn new(source: ScenarioSource) -> Self {
        Self {
            source,
            seeds: Vec::new(),
            horizons: Vec::new(),
            out: None,
            jobs: 1,
            chain: ChainMode::HeadOnly,
        }
    }
}

/// One fully resolved replica.
#[derive(Debug, Clone, PartialEq)]
pub struct Replica {
    pub horizon: u64,
    pub seed: u64,
    pub config: ScenarioConfig,
}

/// Resolves every (horizon, seed) pair, horizons outermost. Overrides go
/// through the document so that a horizon change also moves the default
/// burn-in.
pub fn plan(request: &RunRequest) -> Result<(Vec<Replica>, Vec<AppliedDefault>), ConfigError> {
    let base = request.source.doc()?;
    let base_cfg = base.clone().resolve()?;
    let horizons = if request.horizons.is_empty() {
        vec![base_cfg.config.horizon]
    } else {
        request.horizons.clone()
    };
    let seeds = if request.seeds.is_empty() {
        vec![base_cfg.config.master_seed]
    } else {
        request.seeds.clone()
    };
    let mut replicas = Vec::with_capacity(horizons.len() * seeds.len());
    for &horizon in &horizons {
        for &seed in &seeds {
            let doc = ScenarioDoc {
                horizon: Some(horizon),
                master_seed: Some(seed),
                ..base.clone()
            };
            replicas.push(Replica {
                horizon,
                seed,
                config: doc.resolve()?.config,
            });
        }
    }
    Ok((replicas, base_cfg.defaults))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub seed: u64,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub horizon: u64,
    pub seeds: usize,
    pub mean_regret: f64,
    pub stderr: f64,
    pub ratio: f64,
    pub mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario: String,
    pub rows: Vec<SweepRow>,
    /// Present with three or more horizons.
    pub diagnostics: Option<Diagnostics>,
    pub replicas: Vec<ReplicaSummary>,
}

/// Runs `f` over `items`, in parallel when `jobs != 1` and the feature is
/// on. Output order always follows input order.
pub fn map_replicas<T, R, F>(jobs: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if jobs != 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build();
        if let Ok(pool) = pool {
            return pool.install(|| items.par_iter().map(&f).collect());
        }
    }
    let _ = jobs;
    items.iter().map(f).collect()
}

/// Runs every replica and returns outputs in plan order.
pub fn run_replicas(replicas: &[Replica], jobs: usize, options: RunOptions) -> Result<Vec<RunOutput>> {
    map_replicas(jobs, replicas, |r| run_scenario(&r.config, options))
        .into_iter()
        .collect()
}

/// Aggregates replica summaries into per-horizon rows.
pub fn sweep_report(scenario: &str, summaries: Vec<ReplicaSummary>) -> SweepReport {
    let mut horizons: Vec<u64> = summaries.iter().map(|s| s.summary.horizon).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut points = Vec::new();
    let rows = horizons
        .iter()
        .map(|&h| {
            let at: Vec<&ReplicaSummary> = summaries.iter().filter(|s| s.summary.horizon == h).collect();
            let regrets: Vec<f64> = at.iter().map(|s| s.summary.regret).collect();
            let p = HorizonPoint::from_samples(h, &regrets);
            points.push(p);
            SweepRow {
                horizon: h,
                seeds: at.len(),
                mean_regret: p.mean,
                stderr: p.stderr,
                ratio: p.mean / (h as f64).ln(),
                mean_cost: at.iter().map(|s| s.summary.total_cost).sum::<f64>() / at.len() as f64,
            }
        })
        .collect();
    SweepReport {
        scenario: scenario.to_string(),
        rows,
        diagnostics: regret_diagnostics(&points).ok(),
        replicas: summaries,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Writes `T<h>_seed<s>.csv` and `.json` for one replica, plus
/// `.chain.jsonl` when the full chain was kept.
pub fn write_replica(dir: &Path, replica: &Replica, output: &RunOutput) -> Result<()> {
    let stem = format!("T{}_seed{}", replica.horizon, replica.seed);
    write_file(&dir.join(format!("{stem}.csv")), |w| {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &output.ledger.records {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    })?;
    let summary = ReplicaSummary {
        seed: replica.seed,
        summary: output.summary.clone(),
    };
    write_file(&dir.join(format!("{stem}.json")), |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        writeln!(w)
    })?;
    if let Some(chain) = output.chain.as_ref().filter(|c| !c.blocks().is_empty()) {
        write_file(&dir.join(format!("{stem}.chain.jsonl")), |w| chain.export_jsonl(w))?;
    }
    Ok(())
}

/// Resolves the output directory: explicit path, then the environment
/// variable, then `bcucb-out`.
pub fn output_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Executes a request and writes all files under `<out>/<scenario>/`.
pub fn run(request: &RunRequest) -> Result<SweepReport> {
    let (replicas, _) = plan(request)?;
    let options = RunOptions {
        chain: request.chain,
        keep_records: true,
    };
    let dir = output_dir(request.out.as_deref()).join(request.source.name());
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let outputs = map_replicas(request.jobs, &replicas, |r| {
        let out = run_scenario(&r.config, options)?;
        write_replica(&dir, r, &out)?;
        Ok(ReplicaSummary {
            seed: r.seed,
            summary: out.summary,
        })
    });
    let summaries = outputs.into_iter().collect::<Result<Vec<_>>>()?;
    let report = sweep_report(request.source.name(), summaries);
    let path = dir.join("sweep.json");
    write_file(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)
    })?;
    Ok(report)
}
