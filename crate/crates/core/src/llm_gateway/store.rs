use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{GatewayError, RawResponse, Stage};

/// One recorded completion; one JSON object per line in `stage<N>.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub key: String,
    pub stage: Stage,
    pub doc_id: String,
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
}

impl RecordEntry {
    pub fn to_response(&self) -> RawResponse {
        RawResponse {
            text: self.text.clone(),
            backend_id: self.backend_id.clone(),
            latency_ms: self.latency_ms,
            attempt_count: 1,
        }
    }
}

/// Key → response recordings under a cache directory.
pub struct RecordStore {
    dir: PathBuf,
    entries: RwLock<HashMap<String, RecordEntry>>,
    write_lock: Mutex<()>,
}

fn store_err(path: &Path, e: impl std::fmt::Display) -> GatewayError {
    GatewayError::Store(format!("{}: {e}", path.display()))
}

impl RecordStore {
    /// Opens (creating if needed) a recording directory.
    pub fn open(dir: &Path) -> Result<Self, GatewayError> {
        fs::create_dir_all(dir).map_err(|e| store_err(dir, e))?;
        Self::open_existing(dir)
    }

    /// Opens a recording directory that must already exist.
    pub fn open_existing(dir: &Path) -> Result<Self, GatewayError> {
        if !dir.is_dir() {
            return Err(store_err(dir, "recording directory does not exist"));
        }
        let mut entries = HashMap::new();
        for stage in Stage::ALL {
            let path = Self::file_for(dir, stage);
            if !path.exists() {
                continue;
            }
            let file = fs::File::open(&path).map_err(|e| store_err(&path, e))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| store_err(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: RecordEntry = serde_json::from_str(&line)
                    .map_err(|e| store_err(&path, format!("line {}: {e}", n + 1)))?;
                entries.entry(entry.key.clone()).or_insert(entry);
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: RwLock::new(entries),
            write_lock: Mutex::new(()),
        })
    }

    fn file_for(dir: &Path, stage: Stage) -> PathBuf {
        dir.join(format!("stage{}.jsonl", stage.number()))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<RecordEntry> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn append(&self, entry: RecordEntry) -> Result<(), GatewayError> {
        let _guard = self.write_lock.lock().unwrap();
        if self.entries.read().unwrap().contains_key(&entry.key) {
            return Ok(());
        }
        let path = Self::file_for(&self.dir, entry.stage);
        let mut line = serde_json::to_vec(&entry).map_err(|e| store_err(&path, e))?;
        line.push(b'\n');
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .and_then(|mut f| f.write_all(&line))
            .map_err(|e| store_err(&path, e))?;
        self.entries
            .write()
            .unwrap()
            .insert(entry.key.clone(), entry);
        Ok(())
    }

    /// Rewrites every stage file sorted by (doc_id, key) so recordings made by
    /// concurrent workers diff cleanly.
    pub fn compact(&self) -> Result<(), GatewayError> {
        let _guard = self.write_lock.lock().unwrap();
        let entries = self.entries.read().unwrap();
        for stage in Stage::ALL {
            let mut rows: Vec<&RecordEntry> =
                entries.values().filter(|e| e.stage == stage).collect();
            if rows.is_empty() {
                continue;
            }
            rows.sort_by(|a, b| (&a.doc_id, &a.key).cmp(&(&b.doc_id, &b.key)));
            let path = Self::file_for(&self.dir, stage);
            let mut out = Vec::new();
            for row in rows {
                serde_json::to_writer(&mut out, row).map_err(|e| store_err(&path, e))?;
                out.push(b'\n');
            }
            fs::write(&path, out).map_err(|e| store_err(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(key: &str, doc: &str, stage: Stage) -> RecordEntry {
        RecordEntry {
            key: key.into(),
            stage,
            doc_id: doc.into(),
            text: format!("text-{key}"),
            backend_id: "b".into(),
            latency_ms: 0,
        }
    }

    #[test]
    fn append_reload_and_compact() {
        let dir = tempfile::tempdir().unwrap();
        let store = RecordStore::open(dir.path()).unwrap();
        store.append(entry("k2", "b", Stage::Relationship)).unwrap();
        store.append(entry("k1", "a", Stage::Relationship)).unwrap();
        store.append(entry("k1", "a", Stage::Relationship)).unwrap();
        store
            .append(entry("k3", "a", Stage::SdgAllocation))
            .unwrap();
        store.compact().unwrap();

        let text = fs::read_to_string(dir.path().join("stage3.jsonl")).unwrap();
        let keys: Vec<_> = text
            .lines()
            .map(|l| serde_json::from_str::<RecordEntry>(l).unwrap().key)
            .collect();
        assert_eq!(keys, ["k1", "k2"]);

        let reloaded = RecordStore::open_existing(dir.path()).unwrap();
        assert_eq!(reloaded.len(), 3);
        assert_eq!(reloaded.get("k3").unwrap().text, "text-k3");
    }
}
