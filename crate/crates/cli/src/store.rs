//! File-backed run store: `<workspace>/runs/<run_id>.json` per run plus an
//! index file used for listing.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use latentlayout::optim::SolveReport;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::request::SolveRequest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub model_ref: String,
    /// Run this one was resumed from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub request: SolveRequest,
    pub report: SolveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub model_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub satisfied: bool,
    pub max_violation: f64,
    pub iterations: usize,
}

impl From<&RunRecord> for RunSummary {
    fn from(r: &RunRecord) -> Self {
        RunSummary {
            run_id: r.run_id.clone(),
            created_at: r.created_at,
            model_ref: r.model_ref.clone(),
            parent: r.parent.clone(),
            satisfied: r.report.final_state.satisfied,
            max_violation: r.report.final_state.max_violation,
            iterations: r.report.outer_history.len(),
        }
    }
}

pub fn new_run_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

pub fn valid_run_id(id: &str) -> bool {
    (1..=64).contains(&id.len())
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Debug)]
pub struct RunStore {
    runs: PathBuf,
    index_lock: Mutex<()>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(|e| AppError::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| AppError::io(format!("replacing {}", path.display()), e))
}

impl RunStore {
    pub fn open(workspace: impl AsRef<Path>) -> Result<Self> {
        let runs = workspace.as_ref().join("runs");
        fs::create_dir_all(&runs)
            .map_err(|e| AppError::io(format!("creating {}", runs.display()), e))?;
        Ok(RunStore {
            runs,
            index_lock: Mutex::new(()),
        })
    }

    fn path(&self, id: &str) -> PathBuf {
        self.runs.join(format!("{id}.json"))
    }

    fn index_path(&self) -> PathBuf {
        self.runs.join("index.json")
    }

    pub fn exists(&self, id: &str) -> bool {
        valid_run_id(id) && id != "index" && self.path(id).exists()
    }

    /// Persists a new record; fails with a conflict if the id is taken.
    pub fn insert(&self, record: &RunRecord) -> Result<()> {
        let id = &record.run_id;
        if !valid_run_id(id) || id == "index" {
            return Err(AppError::field("run_id", format!("invalid run id `{id}`")));
        }
        let text = serde_json::to_vec_pretty(record).expect("records serialize");
        let path = self.path(id);
        let mut file = match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(AppError::Conflict(format!("run `{id}` already exists")))
            }
            Err(e) => return Err(AppError::io(format!("creating {}", path.display()), e)),
        };
        file.write_all(&text)
            .and_then(|_| file.sync_all())
            .map_err(|e| AppError::io(format!("writing {}", path.display()), e))?;

        let _guard = self.index_lock.lock().expect("index lock poisoned");
        let mut index = self.read_index()?;
        index.push(RunSummary::from(record));
        write_atomic(&self.index_path(), &serde_json::to_vec_pretty(&index).expect("index serializes"))
    }

    pub fn get(&self, id: &str) -> Result<RunRecord> {
        if !self.exists(id) {
            return Err(AppError::NotFound(format!("run `{id}`")));
        }
        let path = self.path(id);
        let text = fs::read(&path).map_err(|e| AppError::io(format!("reading {}", path.display()), e))?;
        serde_json::from_slice(&text).map_err(|e| {
            AppError::io(
                format!("parsing {}", path.display()),
                std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            )
        })
    }

    fn read_index(&self) -> Result<Vec<RunSummary>> {
        let path = self.index_path();
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| {
                AppError::io(
                    format!("parsing {}", path.display()),
                    std::io::Error::new(std::io::ErrorKind::InvalidData, e),
                )
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(AppError::io(format!("reading {}", path.display()), e)),
        }
    }

    /// Runs in creation order.
    pub fn list(&self) -> Result<Vec<RunSummary>> {
        let _guard = self.index_lock.lock().expect("index lock poisoned");
        self.read_index()
    }
}
