//! Stream and recording file formats.
//!
//! Pose and paddle streams are newline-delimited JSON, one record per line:
//!
//! ```text
//! {"t": 0.0, "joints": {"pelvis": [0.0, 1.0, 0.0], ...}}
//! {"t": 0.0, "quat": [1.0, 0.0, 0.0, 0.0]}
//! ```
//!
//! Recordings are a single JSON document with the same per-frame shapes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use stroke_core::quat::{Quat, Vec3};
use stroke_core::recording::{Keyframe, RecordingError, RecordingParts, StrokeRecording};
use stroke_core::skeleton::{
    JointAngleFrame, PaddleFrame, PoseFrame, SkeletonError, SkeletonTopology, TopologyDef,
};

pub const RECORDING_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Schema(String),
    #[error("unsupported recording version {0}")]
    Version(u32),
    #[error(transparent)]
    Recording(#[from] RecordingError),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One line of a pose stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub t: f64,
    pub joints: BTreeMap<String, [f64; 3]>,
}

/// One line of a paddle stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaddleRecord {
    pub t: f64,
    pub quat: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRecord {
    pub t: f64,
    pub angles: BTreeMap<String, [f64; 4]>,
}

impl PoseRecord {
    pub fn from_frame(frame: &PoseFrame, topo: &SkeletonTopology) -> Self {
        Self {
            t: frame.timestamp,
            joints: topo
                .joint_names()
                .iter()
                .zip(&frame.positions)
                .map(|(n, p)| (n.clone(), [p.x, p.y, p.z]))
                .collect(),
        }
    }

    pub fn to_frame(
        &self,
        topo: &SkeletonTopology,
        aliases: &BTreeMap<String, String>,
    ) -> Result<PoseFrame, SkeletonError> {
        topo.pose_from_named(
            self.t,
            self.joints
                .iter()
                .map(|(n, p)| (n.as_str(), Vec3::new(p[0], p[1], p[2]))),
            aliases,
        )
    }
}

impl PaddleRecord {
    pub fn from_frame(frame: &PaddleFrame) -> Self {
        let q = frame.orientation;
        Self {
            t: frame.timestamp,
            quat: [q.w, q.x, q.y, q.z],
        }
    }

    pub fn to_frame(&self) -> PaddleFrame {
        let [w, x, y, z] = self.quat;
        PaddleFrame {
            timestamp: self.t,
            orientation: Quat::new(w, x, y, z),
        }
    }
}

impl AngleRecord {
    fn from_frame(frame: &JointAngleFrame, topo: &SkeletonTopology) -> Self {
        Self {
            t: frame.timestamp,
            angles: topo
                .comparison_names()
                .zip(&frame.angles)
                .map(|(n, q)| (n.to_string(), [q.w, q.x, q.y, q.z]))
                .collect(),
        }
    }

    fn to_frame(&self, topo: &SkeletonTopology) -> Result<JointAngleFrame, FormatError> {
        let angles = topo
            .comparison_names()
            .map(|n| {
                self.angles
                    .get(n)
                    .map(|&[w, x, y, z]| Quat::new(w, x, y, z))
                    .ok_or_else(|| FormatError::Schema(format!("angle frame at t={} lacks joint `{n}`", self.t)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(JointAngleFrame {
            timestamp: self.t,
            angles,
        })
    }
}

/// Parses newline-delimited JSON records; blank lines are skipped.
pub fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| FormatError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn write_ndjson<T: Serialize>(path: &Path, records: &[T]) -> Result<(), FormatError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_pose_stream(
    path: &Path,
    topo: &SkeletonTopology,
    aliases: &BTreeMap<String, String>,
) -> Result<Vec<PoseFrame>, FormatError> {
    read_ndjson::<PoseRecord>(path)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_frame(topo, aliases)
                .map_err(|e| FormatError::Schema(format!("{}: pose record {i}: {e}", path.display())))
        })
        .collect()
}

pub fn read_paddle_stream(path: &Path) -> Result<Vec<PaddleFrame>, FormatError> {
    Ok(read_ndjson::<PaddleRecord>(path)?
        .iter()
        .map(PaddleRecord::to_frame)
        .collect())
}

pub fn write_pose_stream(path: &Path, frames: &[PoseFrame], topo: &SkeletonTopology) -> Result<(), FormatError> {
    let records: Vec<PoseRecord> = frames.iter().map(|f| PoseRecord::from_frame(f, topo)).collect();
    write_ndjson(path, &records)
}

pub fn write_paddle_stream(path: &Path, frames: &[PaddleFrame]) -> Result<(), FormatError> {
    let records: Vec<PaddleRecord> = frames.iter().map(PaddleRecord::from_frame).collect();
    write_ndjson(path, &records)
}

/// On-disk shape of a [`StrokeRecording`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingFile {
    pub version: u32,
    pub id: String,
    pub name: String,
    pub expert_height_m: f64,
    pub topology: String,
    #[serde(default)]
    pub created_at: u64,
    pub start_frame: usize,
    pub end_frame: usize,
    #[serde(default)]
    pub keyframes: Vec<Keyframe>,
    pub pose_frames: Vec<PoseRecord>,
    pub angle_frames: Vec<AngleRecord>,
    pub paddle_frames: Vec<PaddleRecord>,
}

impl RecordingFile {
    pub fn from_recording(rec: &StrokeRecording, topo: &SkeletonTopology) -> Self {
        let p = rec.parts();
        Self {
            version: RECORDING_VERSION,
            id: p.id.clone(),
            name: p.name.clone(),
            expert_height_m: p.expert_height,
            topology: p.topology_name.clone(),
            created_at: p.created_at,
            start_frame: p.start_frame,
            end_frame: p.end_frame,
            keyframes: p.keyframes.clone(),
            pose_frames: p.pose_frames.iter().map(|f| PoseRecord::from_frame(f, topo)).collect(),
            angle_frames: p.angle_frames.iter().map(|f| AngleRecord::from_frame(f, topo)).collect(),
            paddle_frames: p.paddle_frames.iter().map(PaddleRecord::from_frame).collect(),
        }
    }

    pub fn into_recording(self, topo: &SkeletonTopology) -> Result<StrokeRecording, FormatError> {
        if self.version != RECORDING_VERSION {
            return Err(FormatError::Version(self.version));
        }
        if self.topology != topo.name() {
            return Err(RecordingError::TopologyMismatch {
                expected: topo.name().to_string(),
                found: self.topology,
            }
            .into());
        }
        let no_aliases = BTreeMap::new();
        let pose_frames = self
            .pose_frames
            .iter()
            .map(|r| r.to_frame(topo, &no_aliases))
            .collect::<Result<Vec<_>, _>>()?;
        let angle_frames = self
            .angle_frames
            .iter()
            .map(|r| r.to_frame(topo))
            .collect::<Result<Vec<_>, _>>()?;
        let parts = RecordingParts {
            id: self.id,
            name: self.name,
            expert_height: self.expert_height_m,
            created_at: self.created_at,
            topology_name: self.topology,
            pose_frames,
            angle_frames,
            paddle_frames: self.paddle_frames.iter().map(PaddleRecord::to_frame).collect(),
            start_frame: self.start_frame,
            end_frame: self.end_frame,
            keyframes: self.keyframes,
        };
        Ok(StrokeRecording::from_parts_with_topology(parts, topo)?)
    }
}

pub fn read_recording(path: &Path, topo: &SkeletonTopology) -> Result<StrokeRecording, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: RecordingFile = serde_json::from_str(&text).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        line: source.line(),
        source,
    })?;
    file.into_recording(topo)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_recording(path: &Path, rec: &StrokeRecording, topo: &SkeletonTopology) -> Result<(), FormatError> {
    let json = serde_json::to_vec_pretty(&RecordingFile::from_recording(rec, topo)).expect("recording serializes");
    let tmp = path.with_extension("json.tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(&json).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// `"default"` or a path to a JSON topology definition.
pub fn load_topology(spec: &str) -> Result<SkeletonTopology, FormatError> {
    if spec == "default" {
        return Ok(stroke_core::skeleton::default_topology());
    }
    let path = Path::new(spec);
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let def: TopologyDef = serde_json::from_str(&text).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        line: source.line(),
        source,
    })?;
    Ok(SkeletonTopology::from_def(def)?)
}
