//! One canonical document per project under `<root>/projects/<id>.json`.
//!
//! Writes go to a temp file that is renamed over the live one, so a crash at
//! any point leaves the previous revision readable.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use storymap_core::canonical::to_canonical_pretty;
use storymap_core::Project;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("project `{0}` not found")]
    NotFound(String),
    #[error("project `{0}` already exists")]
    Exists(String),
    #[error("project `{id}` is at revision {current}, not {expected}")]
    Conflict { id: String, expected: u64, current: u64 },
    #[error("invalid project id `{0}`")]
    InvalidId(String),
    #[error("corrupt document for project `{id}`: {message}")]
    Corrupt { id: String, message: String },
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// A project together with its revision, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stored {
    pub revision: u64,
    pub project: Project,
}

/// Where a write can be interrupted by an injected fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Temp file fully written and synced, rename not yet done.
    BeforeRename,
}

pub type FaultHook = Arc<dyn Fn(FaultPoint, &Path) -> std::io::Result<()> + Send + Sync>;

pub struct ProjectStore {
    dir: PathBuf,
    /// Serializes writes per project.
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    /// Last committed snapshot per project; readers clone the `Arc`.
    snapshots: RwLock<HashMap<String, Arc<Stored>>>,
    fault: RwLock<Option<FaultHook>>,
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl ProjectStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = root.as_ref().join("projects");
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            locks: Mutex::default(),
            snapshots: RwLock::default(),
            fault: RwLock::default(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::InvalidId(id.into()));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    fn temp_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json.tmp"))
    }

    pub fn set_fault_hook(&self, hook: Option<FaultHook>) {
        *self.fault.write().unwrap() = hook;
    }

    fn lock_for(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks.lock().unwrap().entry(id.to_string()).or_default().clone()
    }

    /// Ids of all stored projects, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut ids: Vec<String> = std::fs::read_dir(&self.dir)?
            .filter_map(Result::ok)
            .filter_map(|e| e.file_name().to_str()?.strip_suffix(".json").map(str::to_string))
            .collect();
        ids.sort();
        Ok(ids)
    }

    /// Latest committed revision.
    pub fn load(&self, id: &str) -> Result<Arc<Stored>, StoreError> {
        if let Some(s) = self.snapshots.read().unwrap().get(id) {
            return Ok(s.clone());
        }
        let text = self.raw(id)?;
        let stored = Arc::new(parse(id, &text)?);
        self.snapshots.write().unwrap().insert(id.to_string(), stored.clone());
        Ok(stored)
    }

    /// The document bytes currently on disk.
    pub fn raw(&self, id: &str) -> Result<String, StoreError> {
        match std::fs::read_to_string(self.path(id)?) {
            Ok(t) => Ok(t),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(StoreError::NotFound(id.into())),
            Err(e) => Err(e.into()),
        }
    }

    /// Stores a new project at revision 1.
    pub async fn create(&self, project: Project) -> Result<Arc<Stored>, StoreError> {
        let id = project.id.clone();
        let path = self.path(&id)?;
        let lock = self.lock_for(&id);
        let _guard = lock.lock().await;
        if path.exists() {
            return Err(StoreError::Exists(id));
        }
        self.commit(Stored { revision: 1, project })
    }

    /// Replaces the project if it is still at `expected` and returns the new
    /// snapshot at `expected + 1`.
    pub async fn save(&self, expected: u64, project: Project) -> Result<Arc<Stored>, StoreError> {
        let id = project.id.clone();
        self.path(&id)?;
        let lock = self.lock_for(&id);
        let _guard = lock.lock().await;
        let current = self.load(&id)?.revision;
        if current != expected {
            return Err(StoreError::Conflict { id, expected, current });
        }
        self.commit(Stored {
            revision: current + 1,
            project,
        })
    }

    pub async fn delete(&self, id: &str) -> Result<(), StoreError> {
        let path = self.path(id)?;
        let lock = self.lock_for(id);
        let _guard = lock.lock().await;
        match std::fs::remove_file(&path) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(StoreError::NotFound(id.into())),
            Err(e) => return Err(e.into()),
        }
        let _ = std::fs::remove_file(self.temp_path(id));
        self.snapshots.write().unwrap().remove(id);
        Ok(())
    }

    /// Caller holds the project lock.
    fn commit(&self, stored: Stored) -> Result<Arc<Stored>, StoreError> {
        let id = stored.project.id.clone();
        let text = to_canonical_pretty(&stored).map_err(|e| StoreError::Corrupt {
            id: id.clone(),
            message: e.to_string(),
        })?;
        // Cache what a fresh load would see, not the unrounded input.
        let snapshot = Arc::new(parse(&id, &text)?);
        let tmp = self.temp_path(&id);
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(text.as_bytes())?;
            f.sync_all()?;
        }
        if let Some(hook) = self.fault.read().unwrap().clone() {
            hook(FaultPoint::BeforeRename, &tmp)?;
        }
        std::fs::rename(&tmp, self.path(&id)?)?;
        self.snapshots.write().unwrap().insert(id, snapshot.clone());
        Ok(snapshot)
    }
}

fn parse(id: &str, text: &str) -> Result<Stored, StoreError> {
    serde_json::from_str(text).map_err(|e| StoreError::Corrupt {
        id: id.into(),
        message: e.to_string(),
    })
}
