use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use acgan_core::conditioning::ConditionSet;
use acgan_core::dataset::{load_conditions, save_conditions};
use acgan_core::editing::EditScript;
use acgan_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Extracted conditions plus the edits applied since.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub base: ConditionSet,
    pub history: Vec<EditScript>,
    pub current: ConditionSet,
    pub no_segmentation: bool,
}

#[derive(Serialize, Deserialize)]
struct SessionMeta {
    no_segmentation: bool,
    history: Vec<EditScript>,
}

impl Session {
    pub fn new(id: String, base: ConditionSet, no_segmentation: bool) -> Self {
        Session { id, current: base.clone(), base, history: Vec::new(), no_segmentation }
    }

    /// Applies `script` atomically and records it.
    pub fn edit(&mut self, script: EditScript) -> Result<()> {
        self.current = script.apply(&self.current)?;
        self.history.push(script);
        Ok(())
    }

    /// Drops the last edit; false when there is nothing to undo.
    pub fn undo(&mut self) -> Result<bool> {
        if self.history.pop().is_none() {
            return Ok(false);
        }
        self.current = replay(&self.base, &self.history)?;
        Ok(true)
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let d = dir.join(&self.id);
        save_conditions(&d.join("base"), &self.base)?;
        let meta = SessionMeta { no_segmentation: self.no_segmentation, history: self.history.clone() };
        let path = d.join("session.json");
        std::fs::write(&path, serde_json::to_vec(&meta)?).map_err(|e| Error::io(&path, e))
    }

    fn load(dir: &Path, id: &str) -> Result<Self> {
        let d = dir.join(id);
        let base = load_conditions(&d.join("base"))?;
        let path = d.join("session.json");
        let meta: SessionMeta = serde_json::from_slice(&std::fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
        Ok(Session {
            id: id.to_string(),
            current: replay(&base, &meta.history)?,
            base,
            history: meta.history,
            no_segmentation: meta.no_segmentation,
        })
    }
}

pub fn replay(base: &ConditionSet, history: &[EditScript]) -> Result<ConditionSet> {
    history.iter().try_fold(base.clone(), |c, s| s.apply(&c))
}

pub type SessionHandle = Arc<tokio::sync::Mutex<Session>>;

struct Entry {
    session: SessionHandle,
    last_access: Instant,
}

/// In-memory sessions with idle eviction and optional directory mirroring.
pub struct SessionStore {
    entries: Mutex<HashMap<String, Entry>>,
    ttl: Duration,
    dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn new(ttl: Duration, dir: Option<PathBuf>) -> Result<Self> {
        let store = SessionStore { entries: Mutex::new(HashMap::new()), ttl, dir };
        if let Some(d) = &store.dir {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            let mut map = store.entries.lock().unwrap();
            for entry in std::fs::read_dir(d).map_err(|e| Error::io(d, e))? {
                let entry = entry.map_err(|e| Error::io(d, e))?;
                let id = entry.file_name().to_string_lossy().into_owned();
                match Session::load(d, &id) {
                    Ok(s) => {
                        let handle = Arc::new(tokio::sync::Mutex::new(s));
                        map.insert(id, Entry { session: handle, last_access: Instant::now() });
                    }
                    Err(e) => log::warn!("skipping persisted session {id}: {e}"),
                }
            }
            drop(map);
        }
        Ok(store)
    }

    fn evict(&self, map: &mut HashMap<String, Entry>, now: Instant) {
        let expired: Vec<String> =
            map.iter().filter(|(_, e)| now.duration_since(e.last_access) > self.ttl).map(|(k, _)| k.clone()).collect();
        for id in expired {
            map.remove(&id);
            self.remove_persisted(&id);
        }
    }

    fn remove_persisted(&self, id: &str) {
        if let Some(d) = &self.dir {
            let _ = std::fs::remove_dir_all(d.join(id));
        }
    }

    pub fn insert(&self, session: Session) -> Result<SessionHandle> {
        self.persist(&session)?;
        let id = session.id.clone();
        let handle = Arc::new(tokio::sync::Mutex::new(session));
        let now = Instant::now();
        let mut map = self.entries.lock().unwrap();
        self.evict(&mut map, now);
        map.insert(id, Entry { session: handle.clone(), last_access: now });
        Ok(handle)
    }

    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        let now = Instant::now();
        let mut map = self.entries.lock().unwrap();
        self.evict(&mut map, now);
        map.get_mut(id).map(|e| {
            e.last_access = now;
            e.session.clone()
        })
    }

    pub fn remove(&self, id: &str) -> bool {
        let found = self.entries.lock().unwrap().remove(id).is_some();
        if found {
            self.remove_persisted(id);
        }
        found
    }

    pub fn len(&self) -> usize {
        let mut map = self.entries.lock().unwrap();
        self.evict(&mut map, Instant::now());
        map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn persist(&self, session: &Session) -> Result<()> {
        match &self.dir {
            Some(d) => session.save(d),
            None => Ok(()),
        }
    }
}
