//! On-disk run records.
//!
//! ```text
//! <root>/runs/<run_id>/config.json   snapshot of the command and its configuration
//! <root>/runs/<run_id>/loss.csv      run_id,stage,dimension,step,loss
//! <root>/runs/<run_id>/eval.csv      run_id,stage,dimension,source,metric,dataset,value
//! <root>/runs/<run_id>/grid.csv      run_id,dataset,encoder_dim,pooler_dim,value (grid runs)
//! <root>/runs/<run_id>/*.edim        checkpoints
//! ```
//!
//! A run directory is written once; creating an existing run id fails unless
//! the caller asks to replace it.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::checkpoint::save_checkpoint;
use crate::error::{Error, Result};
use crate::eval::{EvalResult, GridReport};
use crate::training::TrainedBundle;

pub const EVAL_HEADER: &str = "run_id,stage,dimension,source,metric,dataset,value";
pub const GRID_HEADER: &str = "run_id,dataset,encoder_dim,pooler_dim,value";
pub const LOSS_HEADER: &str = "run_id,stage,dimension,step,loss";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub run_id: String,
    pub stage: String,
    /// Pooler dimension of the model scored (output width for baselines).
    pub dimension: usize,
    pub source: String,
    pub metric: String,
    pub dataset: String,
    pub value: f64,
}

impl EvalRecord {
    pub fn from_result(run_id: &str, stage: impl Into<String>, r: &EvalResult) -> Self {
        Self {
            run_id: run_id.to_string(),
            stage: stage.into(),
            dimension: r.dimension,
            source: r.source.to_string(),
            metric: r.metric.to_string(),
            dataset: r.dataset.clone(),
            value: r.value,
        }
    }

    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.run_id,
            self.stage,
            self.dimension,
            self.source,
            self.metric,
            self.dataset,
            self.value
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRecord {
    pub run_id: String,
    pub dataset: String,
    pub encoder_dim: usize,
    pub pooler_dim: usize,
    pub value: f64,
}

impl GridRecord {
    pub fn from_report(run_id: &str, dataset: &str, grid: &GridReport) -> Vec<Self> {
        let mut out = Vec::new();
        for (i, &e) in grid.dims.iter().enumerate() {
            for (j, &p) in grid.dims.iter().enumerate() {
                out.push(Self {
                    run_id: run_id.to_string(),
                    dataset: dataset.to_string(),
                    encoder_dim: e,
                    pooler_dim: p,
                    value: grid.scores[(i, j)],
                });
            }
        }
        out
    }
}

/// Rejects ids that would break the CSV layout or escape the store.
pub fn validate_id(kind: &str, id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | '+'));
    if ok {
        Ok(())
    } else {
        Err(Error::Input(format!(
            "{kind} {id:?} may only contain ASCII letters, digits, '-', '_', '.', '+'"
        )))
    }
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn run_path(&self, id: &str) -> PathBuf {
        self.runs_dir().join(id)
    }

    /// Creates an empty run directory. With `replace`, an existing run of the
    /// same id is deleted first.
    pub fn create_run(&self, id: &str, replace: bool) -> Result<RunWriter> {
        validate_id("run id", id)?;
        let path = self.run_path(id);
        if path.exists() {
            if !replace {
                return Err(Error::Input(format!(
                    "run {id:?} already exists at {} (pass --force to replace it)",
                    path.display()
                )));
            }
            fs::remove_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        }
        fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        Ok(RunWriter {
            id: id.to_string(),
            path,
        })
    }

    /// Run ids in lexicographic order.
    pub fn run_ids(&self) -> Result<Vec<String>> {
        let dir = self.runs_dir();
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            if entry.path().is_dir() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn read_config(&self, id: &str) -> Result<Value> {
        let path = self.run_path(id).join("config.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn read_evals(&self, id: &str) -> Result<Vec<EvalRecord>> {
        let path = self.run_path(id).join("eval.csv");
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_csv(&path, EVAL_HEADER, |f| {
            Ok(EvalRecord {
                run_id: f[0].to_string(),
                stage: f[1].to_string(),
                dimension: parse_field(f[2], "dimension")?,
                source: f[3].to_string(),
                metric: f[4].to_string(),
                dataset: f[5].to_string(),
                value: parse_field(f[6], "value")?,
            })
        })
    }

    pub fn read_grid(&self, id: &str) -> Result<Vec<GridRecord>> {
        let path = self.run_path(id).join("grid.csv");
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_csv(&path, GRID_HEADER, |f| {
            Ok(GridRecord {
                run_id: f[0].to_string(),
                dataset: f[1].to_string(),
                encoder_dim: parse_field(f[2], "encoder_dim")?,
                pooler_dim: parse_field(f[3], "pooler_dim")?,
                value: parse_field(f[4], "value")?,
            })
        })
    }

    /// Records of every run, in run-id order.
    pub fn all_evals(&self) -> Result<Vec<EvalRecord>> {
        let mut out = Vec::new();
        for id in self.run_ids()? {
            out.extend(self.read_evals(&id)?);
        }
        Ok(out)
    }

    pub fn all_grids(&self) -> Result<Vec<GridRecord>> {
        let mut out = Vec::new();
        for id in self.run_ids()? {
            out.extend(self.read_grid(&id)?);
        }
        Ok(out)
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("invalid {what} {s:?}"))
}

fn read_csv<T>(
    path: &Path,
    header: &str,
    parse: impl Fn(&[&str]) -> std::result::Result<T, String>,
) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let columns = header.split(',').count();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == header => {}
        _ => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                message: format!("expected header {header:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("expected {columns} columns, found {}", fields.len()),
            });
        }
        out.push(parse(&fields).map_err(|message| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message,
        })?);
    }
    Ok(out)
}

/// Handle for populating a freshly created run directory.
#[derive(Debug)]
pub struct RunWriter {
    id: String,
    path: PathBuf,
}

impl RunWriter {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write(&self, name: &str, contents: String) -> Result<PathBuf> {
        let path = self.path.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn write_config(&self, config: &Value) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(config).expect("JSON value serializes");
        self.write("config.json", text + "\n")
    }

    /// `traces` holds `(stage, dimension, per-step losses)`.
    pub fn write_loss(&self, traces: &[(String, usize, &[f64])]) -> Result<PathBuf> {
        let mut s = String::from(LOSS_HEADER);
        s.push('\n');
        for (stage, dim, trace) in traces {
            for (step, loss) in trace.iter().enumerate() {
                s.push_str(&format!("{},{stage},{dim},{step},{loss}\n", self.id));
            }
        }
        self.write("loss.csv", s)
    }

    pub fn write_evals(&self, records: &[EvalRecord]) -> Result<PathBuf> {
        let mut s = String::from(EVAL_HEADER);
        s.push('\n');
        for r in records {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        self.write("eval.csv", s)
    }

    pub fn write_grid(&self, records: &[GridRecord]) -> Result<PathBuf> {
        let mut s = String::from(GRID_HEADER);
        s.push('\n');
        for r in records {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.run_id, r.dataset, r.encoder_dim, r.pooler_dim, r.value
            ));
        }
        self.write("grid.csv", s)
    }

    pub fn save_checkpoint(&self, name: &str, bundle: &TrainedBundle) -> Result<PathBuf> {
        let path = self.path.join(format!("{name}.edim"));
        save_checkpoint(bundle, &path)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{Metric, SourceTag};

    fn record(run: &str, stage: &str, d: usize, v: f64) -> EvalRecord {
        EvalRecord::from_result(
            run,
            stage,
            &EvalResult {
                metric: Metric::Spearman,
                value: v,
                dimension: d,
                source: SourceTag::PoolerOutput,
                dataset: "test".into(),
            },
        )
    }

    #[test]
    fn eval_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let w = store.create_run("r1", false).unwrap();
        let recs = vec![
            record("r1", "step2", 4, 0.1 + 0.2),
            record("r1", "end-to-end", 32, -1e-300),
        ];
        w.write_evals(&recs).unwrap();
        assert_eq!(store.read_evals("r1").unwrap(), recs);
        assert_eq!(store.run_ids().unwrap(), vec!["r1".to_string()]);
    }

    #[test]
    fn runs_are_not_overwritten_by_accident() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        store
            .create_run("a", false)
            .unwrap()
            .write_config(&serde_json::json!({"x": 1}))
            .unwrap();
        assert!(matches!(store.create_run("a", false), Err(Error::Input(_))));
        store.create_run("a", true).unwrap();
        assert!(!store.run_path("a").join("config.json").exists());
    }

    #[test]
    fn run_ids_are_validated() {
        let store = RunStore::new("unused");
        for bad in ["", "..", "a/b", "a,b", "a b"] {
            assert!(store.create_run(bad, false).is_err());
        }
    }

    #[test]
    fn malformed_eval_rows_report_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let w = store.create_run("r", false).unwrap();
        fs::write(
            w.path().join("eval.csv"),
            format!("{EVAL_HEADER}\nr,step2,x,a,b,c,1\n"),
        )
        .unwrap();
        match store.read_evals("r") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
