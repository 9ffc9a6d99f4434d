//! Directory-backed stroke library: one `<id>.json` per recording.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use stroke_core::recording::{Keyframe, StrokeRecording};
use stroke_core::session::StrokeSource;
use stroke_core::skeleton::SkeletonTopology;

use crate::format::{self, FormatError};

#[derive(Debug, thiserror::Error)]
pub enum LibraryError {
    #[error("stroke `{0}` not found")]
    NotFound(String),
    #[error("invalid stroke id `{0}`: use letters, digits, `-` and `_`")]
    InvalidId(String),
    #[error("corrupt library file: {0}")]
    CorruptFile(FormatError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// What the library listing shows per recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokeSummary {
    pub id: String,
    pub name: String,
    pub frame_count: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    pub duration_ms: f64,
    pub expert_height_m: f64,
    pub keyframes: Vec<Keyframe>,
}

impl StrokeSummary {
    pub fn of(rec: &StrokeRecording) -> Self {
        Self {
            id: rec.id().to_string(),
            name: rec.name().to_string(),
            frame_count: rec.frame_count(),
            start_frame: rec.start_frame(),
            end_frame: rec.end_frame(),
            duration_ms: rec.duration_ms(),
            expert_height_m: rec.expert_height(),
            keyframes: rec.keyframes().to_vec(),
        }
    }
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

pub struct StrokeLibrary {
    dir: PathBuf,
    topo: Arc<SkeletonTopology>,
    strokes: RwLock<BTreeMap<String, Arc<StrokeRecording>>>,
}

impl StrokeLibrary {
    /// Loads every recording under `dir`, creating the directory if needed.
    pub fn open(dir: impl Into<PathBuf>, topo: Arc<SkeletonTopology>) -> Result<Self, LibraryError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| LibraryError::Io {
            path: dir.clone(),
            source,
        })?;
        let entries = fs::read_dir(&dir).map_err(|source| LibraryError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut strokes = BTreeMap::new();
        for entry in entries {
            let path = entry
                .map_err(|source| LibraryError::Io {
                    path: dir.clone(),
                    source,
                })?
                .path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let rec = format::read_recording(&path, &topo).map_err(LibraryError::CorruptFile)?;
            strokes.insert(rec.id().to_string(), Arc::new(rec));
        }
        Ok(Self {
            dir,
            topo,
            strokes: RwLock::new(strokes),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn topology(&self) -> &Arc<SkeletonTopology> {
        &self.topo
    }

    pub fn path_of(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn get(&self, id: &str) -> Result<Arc<StrokeRecording>, LibraryError> {
        self.strokes
            .read()
            .expect("library lock")
            .get(id)
            .cloned()
            .ok_or_else(|| LibraryError::NotFound(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.strokes.read().expect("library lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn list(&self) -> Vec<StrokeSummary> {
        self.strokes
            .read()
            .expect("library lock")
            .values()
            .map(|r| StrokeSummary::of(r))
            .collect()
    }

    /// Writes `rec` to disk and makes it visible, replacing any stroke with
    /// the same id.
    pub fn save(&self, rec: StrokeRecording) -> Result<Arc<StrokeRecording>, LibraryError> {
        if !valid_id(rec.id()) {
            return Err(LibraryError::InvalidId(rec.id().to_string()));
        }
        format::write_recording(&self.path_of(rec.id()), &rec, &self.topo)?;
        let rec = Arc::new(rec);
        self.strokes
            .write()
            .expect("library lock")
            .insert(rec.id().to_string(), rec.clone());
        Ok(rec)
    }
}

impl StrokeSource for StrokeLibrary {
    fn stroke(&self, id: &str) -> Option<Arc<StrokeRecording>> {
        self.get(id).ok()
    }
}
