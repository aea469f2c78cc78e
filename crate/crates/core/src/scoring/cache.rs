//! Content-addressed response cache on disk.
//!
//! Entries live at `<dir>/<aa>/<sha256>.json`, where the digest covers the
//! chunk text hash, the question id and the model name. Writers go through a
//! temporary file and an atomic rename, so concurrent inserts of the same key
//! never leave a torn entry.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scoring::QuestionId;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub chunk_sha256: String,
    pub question: QuestionId,
    pub model: String,
}

impl CacheKey {
    pub fn new(chunk_text: &str, question: QuestionId, model: &str) -> Self {
        Self { chunk_sha256: sha256_hex(chunk_text.as_bytes()), question, model: model.to_string() }
    }

    fn digest(&self) -> String {
        sha256_hex(format!("{}\n{}\n{}", self.chunk_sha256, self.question.id(), self.model).as_bytes())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    chunk_sha256: String,
    question_id: QuestionId,
    model: String,
    response: String,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &CacheKey) -> PathBuf {
        let digest = key.digest();
        self.dir.join(&digest[..2]).join(format!("{digest}.json"))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<String>> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let entry: Entry = serde_json::from_slice(&bytes)?;
        // guard against digest collisions or hand-edited files
        if entry.chunk_sha256 != key.chunk_sha256 || entry.question_id != key.question || entry.model != key.model {
            return Ok(None);
        }
        Ok(Some(entry.response))
    }

    pub fn put(&self, key: &CacheKey, response: &str) -> Result<()> {
        let path = self.path_for(key);
        let parent = path.parent().expect("cache entries live in a shard directory");
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let entry = Entry {
            chunk_sha256: key.chunk_sha256.clone(),
            question_id: key.question,
            model: key.model.clone(),
            response: response.to_string(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(parent, e))?;
        serde_json::to_writer(&mut tmp, &entry)?;
        tmp.flush().map_err(|e| Error::io(&path, e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(())
    }
}
