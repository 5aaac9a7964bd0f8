//! JSONL files with PNG sidecar directories.
//!
//! A dataset `runs/train.jsonl` keeps its images under
//! `runs/train_images/`, and records reference them by a path relative to
//! the JSONL file's directory.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::raster::{RasterError, Sketch};

/// Version stamped on every persisted record.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: line {line}: {message}", path.display())]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("image {}: {source}", path.display())]
    Image { path: PathBuf, source: RasterError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct Sidecar {
    root: PathBuf,
    dir: String,
}

impl Sidecar {
    pub fn for_jsonl(path: &Path) -> Self {
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Self {
            root,
            dir: format!("{stem}_images"),
        }
    }

    /// Writes `sketch` as `<dir>/<name>` and returns that relative path.
    pub fn save(&self, name: &str, sketch: &Sketch) -> Result<String, DatasetError> {
        let rel = format!("{}/{name}", self.dir);
        let full = self.root.join(&rel);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let bytes = sketch.encode_png().map_err(|source| DatasetError::Image {
            path: full.clone(),
            source,
        })?;
        fs::write(&full, bytes).map_err(io_err(&full))?;
        Ok(rel)
    }

    pub fn load(&self, rel: &str) -> Result<Sketch, DatasetError> {
        let full = self.root.join(rel);
        let bytes = fs::read(&full).map_err(io_err(&full))?;
        Sketch::decode_png(&bytes).map_err(|source| DatasetError::Image { path: full, source })
    }
}

/// Replaces characters that are awkward in file names.
pub(crate) fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Parses every non-blank line; errors carry the 1-based line number.
pub(crate) fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| DatasetError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

pub(crate) fn line_error(path: &Path, line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Line {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Line-at-a-time JSONL writer.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self, DatasetError> {
        Self::open(path, false)
    }

    pub fn append(path: &Path) -> Result<Self, DatasetError> {
        Self::open(path, true)
    }

    fn open(path: &Path, append: bool) -> Result<Self, DatasetError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<(), DatasetError> {
        let line = serde_json::to_string(record).map_err(|e| DatasetError::Io {
            path: self.path.clone(),
            source: e.into(),
        })?;
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .map_err(io_err(&self.path))
    }

    pub fn finish(mut self) -> Result<(), DatasetError> {
        self.out.flush().map_err(io_err(&self.path))
    }
}
