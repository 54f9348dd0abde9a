//! Storage state: a key-value file that outlives the engine.
//!
//! The file is a log of JSON lines, `{"k":key,"v":value}` for a put and
//! `{"k":key}` for a delete. Every write is synced before it is
//! acknowledged. Opening replays the log, drops a torn final line, and
//! rewrites the file compacted (temporary file, sync, rename).

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value as Json};

use crate::error::Error;
use crate::state::Value;

#[derive(Debug)]
pub struct Storage {
    path: PathBuf,
    file: File,
    map: BTreeMap<String, Value>,
}

fn storage_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Storage(format!("{}: {e}", path.display()))
}

fn replay(path: &Path, text: &str) -> Result<BTreeMap<String, Value>, Error> {
    let mut map = BTreeMap::new();
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        let rec: Json = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(_) if i + 1 == lines.len() && !complete => break,
            Err(e) => return Err(storage_err(path, format!("line {}: {e}", i + 1))),
        };
        let key = rec
            .get("k")
            .and_then(Json::as_str)
            .ok_or_else(|| storage_err(path, format!("line {}: missing key", i + 1)))?;
        match rec.get("v") {
            Some(v) => {
                map.insert(key.to_owned(), Value::from_json(v)?);
            }
            None => {
                map.remove(key);
            }
        }
    }
    Ok(map)
}

impl Storage {
    pub fn open(path: impl AsRef<Path>) -> Result<Storage, Error> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| storage_err(&path, e))?;
        }
        let map = match fs::read_to_string(&path) {
            Ok(text) => replay(&path, &text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(storage_err(&path, e)),
        };
        let mut tmp_name = path.as_os_str().to_owned();
        tmp_name.push(".tmp");
        let tmp = PathBuf::from(tmp_name);
        {
            let mut out = File::create(&tmp).map_err(|e| storage_err(&tmp, e))?;
            for (k, v) in &map {
                out.write_all(&record(k, Some(v))?).map_err(|e| storage_err(&tmp, e))?;
            }
            out.sync_all().map_err(|e| storage_err(&tmp, e))?;
        }
        fs::rename(&tmp, &path).map_err(|e| storage_err(&path, e))?;
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| storage_err(&path, e))?;
        Ok(Storage { path, file, map })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        self.map.get(key).cloned()
    }

    pub fn put(&mut self, key: &str, value: Value) -> Result<(), Error> {
        self.append(&record(key, Some(&value))?)?;
        self.map.insert(key.to_owned(), value);
        Ok(())
    }

    pub fn del(&mut self, key: &str) -> Result<(), Error> {
        self.append(&record(key, None)?)?;
        self.map.remove(key);
        Ok(())
    }

    fn append(&mut self, line: &[u8]) -> Result<(), Error> {
        self.file
            .write_all(line)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| storage_err(&self.path, e))
    }
}

fn record(key: &str, value: Option<&Value>) -> Result<Vec<u8>, Error> {
    let rec = match value {
        Some(v) => json!({"k": key, "v": v.to_json()?}),
        None => json!({"k": key}),
    };
    let mut line = rec.to_string().into_bytes();
    line.push(b'\n');
    Ok(line)
}
