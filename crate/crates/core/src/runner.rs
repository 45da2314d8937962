//! Run orchestration, CSV output and CSV comparison.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::changed_vars::{to_physical, MbSdeSystem, PhysObservables};
use crate::config::{serialize, Engine, RunConfig};
use crate::error::{Error, Result};
use crate::init::init_points;
use crate::mb::{evolve_mb, MbState};
use crate::model::{sample_initial, JcSystem, PhaseState};
use crate::observables::{JcObservables, ObservableKind, ObservableSet};
use crate::reference::{evolve, initial_density, TruncatedSpace};
use crate::sde::{run_ensemble, EnsembleOptions, EnsembleResult};

/// Time series of named complex observables, with standard errors for stochastic engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    /// `values[k][t]`.
    pub values: Vec<Vec<Complex64>>,
    pub stderr: Option<Vec<Vec<f64>>>,
}

impl Table {
    pub fn from_ensemble(result: &EnsembleResult) -> Self {
        let stderr = (0..result.names.len())
            .map(|k| (0..result.grid.points()).map(|t| result.stderr(k, t)).collect())
            .collect();
        Table {
            names: result.names.clone(),
            times: result.grid.times(),
            values: result.mean.clone(),
            stderr: Some(stderr),
        }
    }

    pub fn from_sets(kinds: &[ObservableKind], times: Vec<f64>, sets: &[ObservableSet], params: &crate::model::ModelParams) -> Self {
        Table {
            names: kinds.iter().map(|k| k.to_string()).collect(),
            times,
            values: kinds
                .iter()
                .map(|k| sets.iter().map(|s| k.value(s, params)).collect())
                .collect(),
            stderr: None,
        }
    }

    pub fn column(&self, name: &str) -> Option<&[Complex64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.values[k].as_slice())
    }

    /// Header: `t`, then `real_<name>`, `imag_<name>` and, for stochastic tables,
    /// `stderr_<name>` per observable.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for name in &self.names {
            h.push(format!("real_{name}"));
            h.push(format!("imag_{name}"));
            if self.stderr.is_some() {
                h.push(format!("stderr_{name}"));
            }
        }
        h
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for (t, time) in self.times.iter().enumerate() {
            let mut row = vec![time.to_string()];
            for k in 0..self.names.len() {
                let v = self.values[k][t];
                row.push(v.re.to_string());
                row.push(v.im.to_string());
                if let Some(se) = &self.stderr {
                    row.push(se[k][t].to_string());
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything needed to reproduce a run, written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub engine: String,
    pub config_sha256: String,
    pub seed: u64,
    pub runs_requested: usize,
    pub runs_diverged: usize,
    pub diverged_paths: Vec<usize>,
    pub bloch_violations: usize,
    pub version: String,
    pub config: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub table: Table,
    pub metadata: RunMetadata,
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Runs the configured engine.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let text = serialize(cfg);
    let mut meta = RunMetadata {
        engine: cfg.engine.name().to_string(),
        config_sha256: config_hash(&text),
        seed: cfg.seed,
        runs_requested: 0,
        runs_diverged: 0,
        diverged_paths: Vec::new(),
        bloch_violations: 0,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: text,
    };
    let kinds = cfg.columns();
    let options = EnsembleOptions {
        workers: cfg.workers,
        divergence_threshold: cfg.divergence_threshold,
    };
    let table = match cfg.engine {
        Engine::SdeJc => {
            let result = run_sde_jc(cfg, &kinds, &options)?;
            record_divergence(&mut meta, &result);
            Table::from_ensemble(&result)
        }
        Engine::SdeMbExperimental => {
            let system = MbSdeSystem::new(&cfg.model, &cfg.family)?;
            let dist = init_points(&cfg.atom, &cfg.family)?;
            let family = cfg.family;
            let sampler = |seed: u64| {
                let x = sample_initial(&cfg.alpha, &dist, seed);
                Ok(to_physical(&family, &PhaseState::from_flat(&x)?)?.flatten())
            };
            let obs = PhysObservables::new(kinds, cfg.model.clone())?;
            let result = run_ensemble(&system, sampler, &cfg.grid, cfg.runs, cfg.seed, &obs, &options)?;
            record_divergence(&mut meta, &result);
            Table::from_ensemble(&result)
        }
        Engine::Reference => {
            let space = TruncatedSpace::new(cfg.n_max, cfg.model.mode_count(), cfg.dimension_cap)?;
            let rho0 = initial_density(&space, &cfg.alpha, &cfg.atom)?;
            let traj = evolve(&cfg.model, &space, &rho0, &cfg.grid, cfg.substeps)?;
            Table::from_sets(&kinds, cfg.grid.times(), &traj.sets, &cfg.model)
        }
        Engine::Mb => {
            let traj = evolve_mb(&cfg.model, &MbState::from_initial(&cfg.alpha, &cfg.atom), &cfg.grid, cfg.substeps)?;
            meta.bloch_violations = traj.bloch_violations;
            Table::from_sets(&kinds, cfg.grid.times(), &traj.observables(), &cfg.model)
        }
    };
    Ok(RunOutput {
        table,
        metadata: meta,
    })
}

/// The positive-P ensemble for a configuration, with the given observable columns.
pub fn run_sde_jc(cfg: &RunConfig, kinds: &[ObservableKind], options: &EnsembleOptions) -> Result<EnsembleResult> {
    let system = JcSystem::new(&cfg.model, cfg.family)?;
    let dist = init_points(&cfg.atom, &cfg.family)?;
    let sampler = |seed: u64| Ok(sample_initial(&cfg.alpha, &dist, seed));
    let obs = JcObservables::new(kinds.to_vec(), cfg.family, cfg.model.clone())?;
    run_ensemble(&system, sampler, &cfg.grid, cfg.runs, cfg.seed, &obs, options)
}

fn record_divergence(meta: &mut RunMetadata, result: &EnsembleResult) {
    meta.runs_requested = result.runs_requested;
    meta.runs_diverged = result.runs_diverged;
    meta.diverged_paths = result.diverged.clone();
}

/// Sidecar path `<out>.meta.json`.
pub fn metadata_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes the CSV and its metadata sidecar.
pub fn write_output(output: &RunOutput, path: &Path) -> Result<()> {
    output.table.write_csv(path)?;
    let json = serde_json::to_string_pretty(&output.metadata)?;
    std::fs::write(metadata_path(path), json + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDeviation {
    pub column: String,
    pub max_abs: f64,
    pub rms: f64,
}

/// Per-column max-abs and RMS deviation over the columns both files share, except `t`.
pub fn compare_csv(a: &Path, b: &Path) -> Result<Vec<ColumnDeviation>> {
    let read = |p: &Path| -> Result<(Vec<String>, Vec<Vec<f64>>)> {
        let mut r = csv::Reader::from_path(p)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 2,
                        msg: format!("{}: '{f}' is not a number", p.display()),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok((header, rows))
    };
    let (ha, ra) = read(a)?;
    let (hb, rb) = read(b)?;
    if ra.len() != rb.len() {
        return Err(Error::Validation(format!(
            "row counts differ: {} vs {}",
            ra.len(),
            rb.len()
        )));
    }
    let mut out = Vec::new();
    for (ia, name) in ha.iter().enumerate() {
        if name == "t" {
            continue;
        }
        let Some(ib) = hb.iter().position(|n| n == name) else {
            continue;
        };
        let (mut max_abs, mut sq) = (0.0f64, 0.0);
        for (x, y) in ra.iter().zip(&rb) {
            let d = (x[ia] - y[ib]).abs();
            max_abs = max_abs.max(d);
            sq += d * d;
        }
        let rms = if ra.is_empty() { 0.0 } else { (sq / ra.len() as f64).sqrt() };
        out.push(ColumnDeviation {
            column: name.clone(),
            max_abs,
            rms,
        });
    }
    if out.is_empty() {
        return Err(Error::Validation("the files share no data columns".into()));
    }
    Ok(out)
}
