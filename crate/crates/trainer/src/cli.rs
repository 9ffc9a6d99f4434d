//! Command-line front end.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use stroke_core::align::{CompareConfig, Thresholds, DEFAULT_THRESHOLD, DEFAULT_WINDOW};
use stroke_core::quat::Vec3;
use stroke_core::recording::{RecordingMeta, StrokeRecording};
use stroke_core::skeleton::SkeletonTopology;

use crate::format::{self, FormatError, PaddleRecord, PoseRecord};
use crate::library::{valid_id, LibraryError, StrokeLibrary};
use crate::replay::{self, ReplayOptions};
use crate::report::{self, AnalyzeError};
use crate::service::{self, AppState, ServiceConfig};
use crate::synthetic;

#[derive(Debug, Parser)]
#[command(name = "stroke-trainer", version, about = "Record, author, compare and coach table-tennis strokes")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Directory holding one JSON file per recording.
    #[arg(long, global = true, env = "STROKE_LIBRARY_DIR", default_value = "strokes")]
    pub library_dir: PathBuf,
    /// `default` or a path to a topology JSON file.
    #[arg(long, global = true, env = "STROKE_TOPOLOGY", default_value = "default")]
    pub topology: String,
    #[arg(long, global = true, env = "STROKE_XI_JOINT", default_value_t = DEFAULT_THRESHOLD)]
    pub xi_joint: f64,
    #[arg(long, global = true, env = "STROKE_XI_PADDLE", default_value_t = DEFAULT_THRESHOLD)]
    pub xi_paddle: f64,
    /// Live comparison window, frames.
    #[arg(long, global = true, env = "STROKE_WINDOW", default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Ingest a pose stream and a paddle stream into the library.
    Import(ImportArgs),
    /// Trim, mark keyframes or reset a stored recording.
    Edit(EditArgs),
    /// Compare a user recording against an expert recording.
    Analyze(AnalyzeArgs),
    /// Stream recorded files into a running service and print its feedback.
    Replay(ReplayArgs),
    /// Run the session service.
    Serve(ServeArgs),
    /// Write synthetic pose and paddle streams.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub pose: PathBuf,
    #[arg(long)]
    pub paddle: Option<PathBuf>,
    #[arg(long)]
    pub name: String,
    /// Expert height, meters.
    #[arg(long)]
    pub height: f64,
    /// Library id; defaults to a slug of the name.
    #[arg(long)]
    pub id: Option<String>,
    /// JSON object mapping input joint names to topology names.
    #[arg(long)]
    pub joint_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("op").required(true).args(["trim", "keyframe", "reset"])))]
pub struct EditArgs {
    /// Library id or recording file path.
    pub recording: String,
    /// New start and end frame, inclusive.
    #[arg(long, num_args = 2, value_names = ["START", "END"])]
    pub trim: Option<Vec<usize>>,
    /// Frame index and stage label.
    #[arg(long, num_args = 2, value_names = ["INDEX", "LABEL"])]
    pub keyframe: Option<Vec<String>>,
    /// Restore full bounds and clear keyframes.
    #[arg(long)]
    pub reset: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Library id or recording file path.
    pub user: String,
    /// Library id or recording file path.
    pub expert: String,
    /// Compare raw angles instead of Kalman-smoothed ones.
    #[arg(long)]
    pub no_smoothing: bool,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub pose: PathBuf,
    #[arg(long)]
    pub paddle: PathBuf,
    /// Expert stroke id to practise against.
    #[arg(long)]
    pub stroke: String,
    #[arg(long, env = "STROKE_SERVER", default_value = "http://127.0.0.1:8080")]
    pub server: String,
    /// Send speed relative to the recorded timestamps.
    #[arg(long, default_value_t = 1.0, conflicts_with = "unpaced")]
    pub rate: f64,
    /// Send frames as fast as the service accepts them.
    #[arg(long)]
    pub unpaced: bool,
    /// Expert playback speed.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// User height, meters; defaults to the expert's.
    #[arg(long)]
    pub user_height: Option<f64>,
    /// User starting pelvis position, meters.
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,0", allow_hyphen_values = true)]
    pub anchor: Vec3,
    /// Write the summary as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "STROKE_BIND", default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long, env = "STROKE_PORT", default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// File prefix; writes `<prefix>.pose.ndjson` and `<prefix>.paddle.ndjson`.
    #[arg(long, default_value = "stroke")]
    pub prefix: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 90)]
    pub frames: usize,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Rotate one joint by a constant angle, e.g. `L_elbow:60`.
    #[arg(long, value_name = "JOINT:DEGREES")]
    pub offset: Option<String>,
    /// Damp this joint's motion without offsetting it (the offset-free twin).
    #[arg(long, value_name = "JOINT")]
    pub damp: Option<String>,
    /// Uniform body size factor.
    #[arg(long, default_value_t = 1.0)]
    pub body_scale: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Analyze(#[from] AnalyzeError),
    #[error(transparent)]
    Recording(#[from] stroke_core::recording::RecordingError),
    #[error(transparent)]
    Replay(#[from] replay::ReplayError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl GlobalOpts {
    pub fn thresholds(&self) -> Result<Thresholds, CliError> {
        Thresholds::new(self.xi_joint, self.xi_paddle).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn compare_config(&self) -> Result<CompareConfig, CliError> {
        if self.window == 0 {
            return Err(CliError::Usage("--window must be at least 1".into()));
        }
        Ok(CompareConfig {
            thresholds: self.thresholds()?,
            window: self.window,
            ..CompareConfig::default()
        })
    }

    fn topology(&self) -> Result<Arc<SkeletonTopology>, CliError> {
        Ok(Arc::new(format::load_topology(&self.topology)?))
    }

    fn library(&self) -> Result<StrokeLibrary, CliError> {
        Ok(StrokeLibrary::open(&self.library_dir, self.topology()?)?)
    }
}

pub fn run(cli: Cli, out: &mut impl Write) -> Result<(), CliError> {
    match cli.command {
        Cmd::Import(a) => import(&cli.global, a, out),
        Cmd::Edit(a) => edit(&cli.global, a, out),
        Cmd::Analyze(a) => analyze(&cli.global, a, out),
        Cmd::Replay(a) => replay_cmd(&cli.global, a, out),
        Cmd::Serve(a) => serve(&cli.global, a, out),
        Cmd::Generate(a) => generate(&cli.global, a, out),
    }
}

fn slug(name: &str) -> String {
    let mut s = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('-') {
            s.push('-');
        }
    }
    s.trim_matches('-').to_string()
}

fn import(g: &GlobalOpts, a: ImportArgs, out: &mut impl Write) -> Result<(), CliError> {
    let Some(paddle_path) = a.paddle else {
        return Err(CliError::Domain("paddle stream required (--paddle FILE)".into()));
    };
    let id = a.id.unwrap_or_else(|| slug(&a.name));
    if !valid_id(&id) {
        return Err(LibraryError::InvalidId(id).into());
    }
    let lib = g.library()?;
    let aliases: BTreeMap<String, String> = match &a.joint_map {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| CliError::Domain(format!("{}: {e}", p.display())))?,
        None => BTreeMap::new(),
    };
    let poses = format::read_pose_stream(&a.pose, lib.topology(), &aliases)?;
    let paddle = format::read_paddle_stream(&paddle_path)?;
    // file time rather than wall time keeps repeated imports identical
    let created_at = std::fs::metadata(&a.pose)
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map_or(0, |d| d.as_millis() as u64);
    let rec = StrokeRecording::ingest(
        poses,
        &paddle,
        lib.topology(),
        RecordingMeta {
            id,
            name: a.name,
            expert_height: a.height,
            created_at,
        },
    )?;
    let rec = lib.save(rec)?;
    writeln!(out, "{}", rec.id())?;
    Ok(())
}

/// A library id, or a path to a recording file.
fn load(lib: &StrokeLibrary, what: &str) -> Result<(StrokeRecording, Option<PathBuf>), CliError> {
    let path = Path::new(what);
    if what.ends_with(".json") && path.is_file() {
        return Ok((format::read_recording(path, lib.topology())?, Some(path.to_path_buf())));
    }
    Ok(((*lib.get(what)?).clone(), None))
}

fn edit(g: &GlobalOpts, a: EditArgs, out: &mut impl Write) -> Result<(), CliError> {
    let lib = g.library()?;
    let (rec, path) = load(&lib, &a.recording)?;
    let rec = if let Some(t) = a.trim {
        rec.trim(t[0], t[1])?
    } else if let Some(k) = a.keyframe {
        let index: usize = k[0]
            .parse()
            .map_err(|_| CliError::Usage(format!("keyframe index `{}` is not a frame number", k[0])))?;
        rec.add_keyframe(index, Some(k[1].clone()))?
    } else {
        rec.reset()
    };
    match path {
        Some(p) => format::write_recording(&p, &rec, lib.topology())?,
        None => {
            lib.save(rec.clone())?;
        }
    }
    writeln!(
        out,
        "{}: frames {}..={}, keyframes {}",
        rec.id(),
        rec.start_frame(),
        rec.end_frame(),
        rec.keyframes()
            .iter()
            .map(|k| match &k.label {
                Some(l) => format!("{}:{l}", k.index),
                None => k.index.to_string(),
            })
            .collect::<Vec<_>>()
            .join(", ")
    )?;
    Ok(())
}

fn analyze(g: &GlobalOpts, a: AnalyzeArgs, out: &mut impl Write) -> Result<(), CliError> {
    let mut cfg = g.compare_config()?;
    let lib = g.library()?;
    let (user, _) = load(&lib, &a.user)?;
    let (expert, _) = load(&lib, &a.expert)?;
    if a.no_smoothing {
        cfg.smoothing = None;
    }
    let report = report::analyze(&user, &expert, lib.topology(), &cfg)?;
    if let Some(p) = &a.out {
        std::fs::write(p, serde_json::to_vec_pretty(&report).expect("report serializes"))?;
    }
    write!(out, "{}", report.table())?;
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn replay_cmd(_g: &GlobalOpts, a: ReplayArgs, out: &mut impl Write) -> Result<(), CliError> {
    if !(a.rate > 0.0) || !a.rate.is_finite() {
        return Err(CliError::Usage("--rate must be positive".into()));
    }
    let poses: Vec<PoseRecord> = format::read_ndjson(&a.pose)?;
    let paddle: Vec<PaddleRecord> = format::read_ndjson(&a.paddle)?;
    let mut opts = ReplayOptions::new(a.server, a.stroke);
    opts.rate = (!a.unpaced).then_some(a.rate);
    opts.playback_speed = a.speed;
    opts.user_height_m = a.user_height;
    opts.anchor = a.anchor;
    let mut lines = Vec::new();
    let summary = runtime()?.block_on(replay::replay(&poses, &paddle, &opts, |s| {
        let flags: Vec<String> = s.joint_flags.iter().map(|(j, n)| format!("{j}×{n}")).collect();
        lines.push(format!(
            "t={:>3}s events {:>3}  mean score {:.4}  paddle flags {:>3}  joints [{}]",
            s.second,
            s.events,
            s.mean_joint_score,
            s.paddle_flags,
            flags.join(", ")
        ));
    }))?;
    for l in lines {
        writeln!(out, "{l}")?;
    }
    for e in &summary.stream_errors {
        writeln!(out, "rejected: {} ({})", e.message, e.error)?;
    }
    writeln!(
        out,
        "{} frames, {} events, {} with joint flags, {} with paddle flag, mean joint score {:.6}, p95 latency {:.2} ms",
        summary.frames_sent,
        summary.events,
        summary.events_with_joint_flags,
        summary.events_with_paddle_flag,
        summary.mean_joint_score,
        replay::percentile(&summary.latencies_ms, 95.0)
    )?;
    if let Some(p) = &a.out {
        std::fs::write(p, serde_json::to_vec_pretty(&summary).expect("summary serializes"))?;
    }
    Ok(())
}

fn serve(g: &GlobalOpts, a: ServeArgs, out: &mut impl Write) -> Result<(), CliError> {
    let lib = Arc::new(g.library()?);
    let config = ServiceConfig::new(g.window, g.thresholds()?);
    let rt = runtime()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(SocketAddr::new(a.bind, a.port)).await?;
        writeln!(out, "serving {} strokes on http://{}", lib.len(), listener.local_addr()?)?;
        out.flush()?;
        let state = AppState::new(lib, config);
        service::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok::<_, CliError>(())
    })?;
    rt.shutdown_timeout(Duration::from_secs(1));
    Ok(())
}

fn generate(g: &GlobalOpts, a: GenerateArgs, out: &mut impl Write) -> Result<(), CliError> {
    if a.frames == 0 || !(a.fps > 0.0) {
        return Err(CliError::Usage("--frames and --fps must be positive".into()));
    }
    let topo = g.topology()?;
    let joint = |name: &str| {
        topo.joint_index(name)
            .ok_or_else(|| CliError::Usage(format!("unknown joint `{name}`")))
    };
    let mut stroke = synthetic::random_stroke(a.seed, &topo, a.frames, a.fps);
    if let Some(name) = &a.damp {
        stroke = synthetic::damp_joint(&stroke, joint(name)?);
    }
    if let Some(spec) = &a.offset {
        let (name, deg) = spec
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("--offset `{spec}` is not JOINT:DEGREES")))?;
        let deg: f64 = deg
            .parse()
            .map_err(|_| CliError::Usage(format!("--offset angle `{deg}` is not a number")))?;
        stroke = synthetic::offset_joint(&stroke, joint(name)?, deg);
    }
    stroke.body_scale = a.body_scale;
    std::fs::create_dir_all(&a.out_dir)?;
    let pose = a.out_dir.join(format!("{}.pose.ndjson", a.prefix));
    let paddle = a.out_dir.join(format!("{}.paddle.ndjson", a.prefix));
    format::write_pose_stream(&pose, &stroke.poses(&topo), &topo)?;
    format::write_paddle_stream(&paddle, &stroke.paddle_stream())?;
    writeln!(out, "{}\n{}", pose.display(), paddle.display())?;
    Ok(())
}

/// Parses `x,y,z`.
pub fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(format!("`{s}` is not x,y,z")),
    }
}
