//! Local session store: one SessionRecord per session id, expired lazily on
//! access and by a periodic sweep. Each record sits behind its own async
//! mutex so one session's turns run one at a time while sessions proceed in
//! parallel.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex as StdMutex};

use chrono::{DateTime, Duration, Utc};
use pseudogate_core::{EntityMapping, SessionRecord};
use thiserror::Error;
use tokio::sync::Mutex;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Test clock moved by hand.
#[derive(Debug, Clone)]
pub struct ManualClock(Arc<StdMutex<DateTime<Utc>>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self(Arc::new(StdMutex::new(start)))
    }

    pub fn advance(&self, secs: i64) {
        *self.0.lock().unwrap() += Duration::seconds(secs);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("session file {path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub type SessionHandle = Arc<Mutex<SessionRecord>>;

pub struct SessionStore {
    sessions: StdMutex<HashMap<String, SessionHandle>>,
    ttl: u64,
    clock: Arc<dyn Clock>,
    persist_path: Option<PathBuf>,
}

impl std::fmt::Debug for SessionStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionStore").field("ttl", &self.ttl).field("persist_path", &self.persist_path).finish()
    }
}

impl SessionStore {
    pub fn new(ttl: u64, clock: Arc<dyn Clock>) -> Self {
        Self { sessions: StdMutex::new(HashMap::new()), ttl, clock, persist_path: None }
    }

    /// Loads live sessions from `path` if it exists; later saves go there too.
    pub fn with_persistence(mut self, path: impl Into<PathBuf>) -> Result<Self, PersistError> {
        let path = path.into();
        let now = self.clock.now();
        let records = read_records(&path)?;
        let map = self.sessions.get_mut().unwrap();
        for r in records.into_iter().filter(|r| !r.is_expired(now)) {
            map.insert(r.session_id.clone(), Arc::new(Mutex::new(r)));
        }
        self.persist_path = Some(path);
        Ok(self)
    }

    pub fn ttl(&self) -> u64 {
        self.ttl
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn handle(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    /// Returns the live session, touched, creating it on demand. An expired
    /// record is reset in place so concurrent holders of the handle agree.
    pub async fn get_or_create(&self, id: &str) -> SessionHandle {
        let h = self
            .sessions
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(SessionRecord::new(id, self.clock.now(), self.ttl))))
            .clone();
        {
            let mut r = h.lock().await;
            let now = self.clock.now();
            if r.is_expired(now) {
                *r = SessionRecord::new(id, now, self.ttl);
            }
            r.touch(now);
        }
        h
    }

    pub async fn create(&self, id: &str) -> SessionRecord {
        self.get_or_create(id).await.lock().await.clone()
    }

    /// A snapshot of the live session; expired records are dropped and read as absent.
    pub async fn get(&self, id: &str) -> Option<SessionRecord> {
        let h = self.handle(id)?;
        let record = h.lock().await.clone();
        if record.is_expired(self.clock.now()) {
            self.remove_if_same(id, &h);
            return None;
        }
        Some(record)
    }

    pub async fn touch(&self, id: &str) -> Option<SessionRecord> {
        let h = self.handle(id)?;
        let mut r = h.lock().await;
        let now = self.clock.now();
        if r.is_expired(now) {
            drop(r);
            self.remove_if_same(id, &h);
            return None;
        }
        r.touch(now);
        Some(r.clone())
    }

    pub async fn purge(&self, id: &str) -> Option<SessionRecord> {
        let h = self.sessions.lock().unwrap().remove(id)?;
        let r = h.lock().await.clone();
        Some(r)
    }

    /// Removes every expired record; returns how many went.
    pub async fn sweep(&self) -> usize {
        let now = self.clock.now();
        let handles: Vec<(String, SessionHandle)> =
            self.sessions.lock().unwrap().iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let mut removed = 0;
        for (id, h) in handles {
            if h.lock().await.is_expired(now) && self.remove_if_same(&id, &h) {
                removed += 1;
            }
        }
        removed
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn remove_if_same(&self, id: &str, h: &SessionHandle) -> bool {
        let mut map = self.sessions.lock().unwrap();
        if map.get(id).is_some_and(|cur| Arc::ptr_eq(cur, h)) {
            map.remove(id);
            return true;
        }
        false
    }

    pub async fn snapshot(&self) -> Vec<SessionRecord> {
        let handles: Vec<SessionHandle> = self.sessions.lock().unwrap().values().cloned().collect();
        let mut out = Vec::with_capacity(handles.len());
        for h in handles {
            out.push(h.lock().await.clone());
        }
        out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        out
    }

    /// Writes all sessions to the persistence file, if one is configured.
    pub async fn save(&self) -> Result<(), PersistError> {
        if let Some(path) = &self.persist_path {
            write_records(path, &self.snapshot().await)?;
        }
        Ok(())
    }
}

/// Merged pairs of all earlier turns, newest first, as pseudonymizer history.
pub fn history(record: &SessionRecord) -> EntityMapping {
    EntityMapping { pairs: record.mappings.iter().rev().flat_map(|m| m.pairs.iter().cloned()).collect() }
}

pub fn read_records(path: &Path) -> Result<Vec<SessionRecord>, PersistError> {
    let err = |message: String| PersistError::Io { path: path.to_path_buf(), message };
    match std::fs::read_to_string(path) {
        Ok(src) => serde_json::from_str(&src).map_err(|e| err(e.to_string())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(err(e.to_string())),
    }
}

/// Atomic replace via a sibling temp file.
pub fn write_records(path: &Path, records: &[SessionRecord]) -> Result<(), PersistError> {
    let err = |message: String| PersistError::Io { path: path.to_path_buf(), message };
    let json = serde_json::to_vec_pretty(records).map_err(|e| err(e.to_string()))?;
    let tmp = path.with_extension("tmp");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| err(e.to_string()))?;
    }
    std::fs::write(&tmp, json).map_err(|e| err(e.to_string()))?;
    std::fs::rename(&tmp, path).map_err(|e| err(e.to_string()))
}

/// Drops expired records (or all of them) from a persistence file. Returns
/// `(removed, remaining)`.
pub fn purge_file(path: &Path, now: DateTime<Utc>, all: bool) -> Result<(usize, usize), PersistError> {
    let records = read_records(path)?;
    let total = records.len();
    let live: Vec<SessionRecord> = if all { Vec::new() } else { records.into_iter().filter(|r| !r.is_expired(now)).collect() };
    write_records(path, &live)?;
    Ok((total - live.len(), live.len()))
}
