//! Persistent scenario and run records.
//!
//! Scenarios and run records live in one JSON file; each finished result
//! is a separate file under `results/`. Every mutation rewrites the index
//! through a temporary file and a rename.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use greenhouse_core::report::{Controller, ResultDocument};
use greenhouse_core::ScenarioConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl RunStatus {
    /// Transitions only move forward: queued, running, then done or failed.
    pub fn can_become(self, next: RunStatus) -> bool {
        use RunStatus::*;
        matches!(
            (self, next),
            (Queued, Running) | (Queued, Failed) | (Running, Done) | (Running, Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub scenario_id: String,
    pub config: ScenarioConfig,
    pub controller: Controller,
    pub charge_solver: bool,
    pub status: RunStatus,
    pub progress: f64,
    /// Path of the result document; set exactly when the run is done.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub created: DateTime<Utc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished: Option<DateTime<Utc>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    scenarios: BTreeMap<String, ScenarioConfig>,
    runs: BTreeMap<String, RunRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown {0} `{1}`")]
    NotFound(&'static str, String),
    #[error("run `{id}` cannot move from {from:?} to {to:?}")]
    Transition { id: String, from: RunStatus, to: RunStatus },
    #[error("store: {0}")]
    Io(String),
}

pub struct RunStore {
    dir: PathBuf,
    index: Mutex<Index>,
}

impl RunStore {
    /// Opens or creates the store in `dir`. Runs left unfinished by a
    /// previous process are marked failed.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("results")).map_err(io)?;
        let path = dir.join("index.json");
        let mut index: Index = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| StoreError::Io(format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Index::default(),
            Err(e) => return Err(io(e)),
        };
        let now = Utc::now();
        for r in index.runs.values_mut() {
            if matches!(r.status, RunStatus::Queued | RunStatus::Running) {
                r.status = RunStatus::Failed;
                r.error = Some("interrupted by a service restart".into());
                r.finished = Some(now);
            }
        }
        let store = Self {
            dir,
            index: Mutex::new(index),
        };
        store.save(&store.index.lock().unwrap())?;
        Ok(store)
    }

    fn save(&self, index: &Index) -> Result<(), StoreError> {
        let tmp = self.dir.join("index.json.tmp");
        fs::write(
            &tmp,
            serde_json::to_vec_pretty(index).map_err(|e| StoreError::Io(e.to_string()))?,
        )
        .map_err(io)?;
        fs::rename(&tmp, self.dir.join("index.json")).map_err(io)
    }

    /// Stores a scenario under its content hash. Returns the id and
    /// whether it was new.
    pub fn put_scenario(&self, config: ScenarioConfig) -> Result<(String, bool), StoreError> {
        let id = config.hash();
        let mut index = self.index.lock().unwrap();
        if index.scenarios.contains_key(&id) {
            return Ok((id, false));
        }
        index.scenarios.insert(id.clone(), config);
        self.save(&index)?;
        Ok((id, true))
    }

    pub fn scenario(&self, id: &str) -> Result<ScenarioConfig, StoreError> {
        self.index
            .lock()
            .unwrap()
            .scenarios
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound("scenario", id.into()))
    }

    pub fn scenarios(&self) -> Vec<(String, String)> {
        let index = self.index.lock().unwrap();
        index
            .scenarios
            .iter()
            .map(|(id, c)| (id.clone(), c.name.clone()))
            .collect()
    }

    pub fn delete_scenario(&self, id: &str) -> Result<(), StoreError> {
        let mut index = self.index.lock().unwrap();
        index
            .scenarios
            .remove(id)
            .ok_or_else(|| StoreError::NotFound("scenario", id.into()))?;
        self.save(&index)
    }

    pub fn create_run(
        &self,
        scenario_id: &str,
        controller: Controller,
        charge_solver: bool,
    ) -> Result<RunRecord, StoreError> {
        let mut index = self.index.lock().unwrap();
        let config = index
            .scenarios
            .get(scenario_id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound("scenario", scenario_id.into()))?;
        let record = RunRecord {
            run_id: uuid::Uuid::new_v4().to_string(),
            scenario_id: scenario_id.into(),
            config,
            controller,
            charge_solver,
            status: RunStatus::Queued,
            progress: 0.0,
            result: None,
            error: None,
            created: Utc::now(),
            finished: None,
        };
        index.runs.insert(record.run_id.clone(), record.clone());
        self.save(&index)?;
        Ok(record)
    }

    pub fn run(&self, id: &str) -> Result<RunRecord, StoreError> {
        self.index
            .lock()
            .unwrap()
            .runs
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound("run", id.into()))
    }

    pub fn runs(&self) -> Vec<RunRecord> {
        self.index.lock().unwrap().runs.values().cloned().collect()
    }

    fn transition(&self, id: &str, to: RunStatus, edit: impl FnOnce(&mut RunRecord)) -> Result<(), StoreError> {
        let mut index = self.index.lock().unwrap();
        let r = index
            .runs
            .get_mut(id)
            .ok_or_else(|| StoreError::NotFound("run", id.into()))?;
        if !r.status.can_become(to) {
            return Err(StoreError::Transition {
                id: id.into(),
                from: r.status,
                to,
            });
        }
        r.status = to;
        edit(r);
        self.save(&index)
    }

    pub fn start(&self, id: &str) -> Result<(), StoreError> {
        self.transition(id, RunStatus::Running, |_| {})
    }

    /// Raises the progress of a running run; lower values are ignored.
    /// Progress is held in memory until the next status change.
    pub fn set_progress(&self, id: &str, fraction: f64) {
        let mut index = self.index.lock().unwrap();
        if let Some(r) = index.runs.get_mut(id) {
            if r.status == RunStatus::Running && fraction > r.progress {
                r.progress = fraction.min(1.0);
            }
        }
    }

    pub fn finish(&self, id: &str, doc: &ResultDocument) -> Result<(), StoreError> {
        let name = format!("results/{id}.json");
        fs::write(self.dir.join(&name), doc.to_json()).map_err(io)?;
        self.transition(id, RunStatus::Done, |r| {
            r.progress = 1.0;
            r.result = Some(name);
            r.finished = Some(Utc::now());
        })
    }

    pub fn fail(&self, id: &str, error: String) -> Result<(), StoreError> {
        self.transition(id, RunStatus::Failed, |r| {
            r.error = Some(error);
            r.finished = Some(Utc::now());
        })
    }

    /// The stored result document, as written.
    pub fn result(&self, record: &RunRecord) -> Result<String, StoreError> {
        let name = record
            .result
            .as_ref()
            .ok_or_else(|| StoreError::NotFound("result of run", record.run_id.clone()))?;
        fs::read_to_string(self.dir.join(name)).map_err(io)
    }
}

fn io(e: std::io::Error) -> StoreError {
    StoreError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statuses_only_move_forward() {
        use RunStatus::*;
        let all = [Queued, Running, Done, Failed];
        for a in all {
            for b in all {
                if a.can_become(b) {
                    assert!(b > a, "{a:?} -> {b:?}");
                }
            }
        }
        assert!(!Done.can_become(Running));
        assert!(!Failed.can_become(Done));
    }

    #[test]
    fn unfinished_runs_fail_on_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let (sid, new) = store.put_scenario(ScenarioConfig::new(48.0, 17.0)).unwrap();
        assert!(new);
        assert!(!store.put_scenario(ScenarioConfig::new(48.0, 17.0)).unwrap().1);
        let r = store.create_run(&sid, Controller::None, false).unwrap();
        store.start(&r.run_id).unwrap();
        store.set_progress(&r.run_id, 0.5);
        store.set_progress(&r.run_id, 0.25);
        assert_eq!(store.run(&r.run_id).unwrap().progress, 0.5);
        drop(store);
        let store = RunStore::open(dir.path()).unwrap();
        let back = store.run(&r.run_id).unwrap();
        assert_eq!(back.status, RunStatus::Failed);
        assert!(store.start(&r.run_id).is_err());
        assert_eq!(store.scenario(&sid).unwrap(), ScenarioConfig::new(48.0, 17.0));
    }
}
