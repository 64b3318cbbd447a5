use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::CharacterizationError;

const STORE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    version: u32,
    record: T,
}

/// Append-only line-delimited JSON file, one versioned document per record.
#[derive(Debug, Clone)]
pub struct JsonlStore<T> {
    path: PathBuf,
    _marker: PhantomData<T>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CharacterizationError {
    CharacterizationError::Store(format!("{}: {e}", path.display()))
}

impl<T: Serialize + DeserializeOwned> JsonlStore<T> {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, CharacterizationError> {
        let path = path.into();
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
        }
        Ok(JsonlStore {
            path,
            _marker: PhantomData,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append_all<'a, I>(&self, records: I) -> Result<(), CharacterizationError>
    where
        I: IntoIterator<Item = &'a T>,
        T: 'a,
    {
        let mut buf = Vec::new();
        for record in records {
            serde_json::to_writer(
                &mut buf,
                &Envelope {
                    version: STORE_VERSION,
                    record,
                },
            )
            .map_err(|e| io_err(&self.path, e))?;
            buf.push(b'\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| io_err(&self.path, e))?;
        f.write_all(&buf).map_err(|e| io_err(&self.path, e))?;
        f.sync_data().map_err(|e| io_err(&self.path, e))
    }

    pub fn load(&self) -> Result<Vec<T>, CharacterizationError> {
        let f = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&self.path, e)),
        };
        let mut out = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| io_err(&self.path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let env: Envelope<T> =
                serde_json::from_str(&line).map_err(|e| io_err(&self.path, format!("line {}: {e}", n + 1)))?;
            if env.version != STORE_VERSION {
                return Err(io_err(
                    &self.path,
                    format!("line {}: unsupported version {}", n + 1, env.version),
                ));
            }
            out.push(env.record);
        }
        Ok(out)
    }
}
