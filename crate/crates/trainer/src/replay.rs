//! Streams recorded pose and paddle files into a running service session and
//! collects the feedback it sends back.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use stroke_core::quat::Vec3;
use stroke_core::session::Command;
use tokio_tungstenite::tungstenite::Message;

use crate::format::{PaddleRecord, PoseRecord};
use crate::library::StrokeSummary;
use crate::service::{ApiError, ApiSession, CreateSession, StreamError, WireFeedback};

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("cannot reach service: {0}")]
    Http(#[from] reqwest::Error),
    #[error("stream connection failed: {0}")]
    Stream(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("service rejected request: {0}")]
    Rejected(String),
    #[error("stroke `{0}` not in the service library")]
    UnknownStroke(String),
    #[error("nothing to replay: {0}")]
    Empty(&'static str),
    #[error("feedback stream sent malformed message: {0}")]
    BadFeedback(serde_json::Error),
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub server: String,
    pub stroke_id: String,
    /// Defaults to the expert's height.
    pub user_height_m: Option<f64>,
    pub anchor: Vec3,
    /// Wall-clock speedup over the recorded timestamps; `None` sends as fast
    /// as the service accepts frames.
    pub rate: Option<f64>,
    pub playback_speed: f64,
    /// How long to wait for trailing feedback once everything is sent.
    pub settle: Duration,
    /// Delete the session when done.
    pub cleanup: bool,
}

impl ReplayOptions {
    pub fn new(server: impl Into<String>, stroke_id: impl Into<String>) -> Self {
        Self {
            server: server.into(),
            stroke_id: stroke_id.into(),
            user_height_m: None,
            anchor: Vec3::ZERO,
            rate: Some(1.0),
            playback_speed: 1.0,
            settle: Duration::from_secs(2),
            cleanup: true,
        }
    }
}

/// Feedback aggregated over one second of user time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SecondSummary {
    pub second: i64,
    pub events: usize,
    pub joint_flags: BTreeMap<String, usize>,
    pub paddle_flags: usize,
    pub mean_joint_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub session_id: String,
    pub frames_sent: usize,
    pub paddle_records_sent: usize,
    pub events: usize,
    pub events_with_joint_flags: usize,
    pub events_with_paddle_flag: usize,
    pub joint_flag_counts: BTreeMap<String, usize>,
    pub mean_joint_score: f64,
    pub mean_paddle_score: f64,
    pub stream_errors: Vec<StreamError>,
    /// Send of a pose to arrival of its feedback, milliseconds.
    pub latencies_ms: Vec<f64>,
    pub wall_ms: f64,
}

fn ws_url(server: &str, path: &str) -> String {
    let base = server.trim_end_matches('/');
    let base = base
        .strip_prefix("http://")
        .map(|r| format!("ws://{r}"))
        .or_else(|| base.strip_prefix("https://").map(|r| format!("wss://{r}")))
        .unwrap_or_else(|| base.to_string());
    format!("{base}{path}")
}

async fn expect_ok<T: serde::de::DeserializeOwned>(resp: reqwest::Response) -> Result<T, ReplayError> {
    if resp.status().is_success() {
        return Ok(resp.json().await?);
    }
    let status = resp.status();
    let msg = match resp.json::<ApiError>().await {
        Ok(e) => format!("{status}: {} ({})", e.message, e.error),
        Err(_) => status.to_string(),
    };
    Err(ReplayError::Rejected(msg))
}

/// Opens a session, streams the records in timestamp order and returns the
/// collected feedback. `on_second` sees each completed second of user time.
pub async fn replay(
    poses: &[PoseRecord],
    paddle: &[PaddleRecord],
    opts: &ReplayOptions,
    mut on_second: impl FnMut(&SecondSummary),
) -> Result<ReplaySummary, ReplayError> {
    if poses.is_empty() {
        return Err(ReplayError::Empty("pose stream"));
    }
    if paddle.is_empty() {
        return Err(ReplayError::Empty("paddle stream"));
    }
    let http = reqwest::Client::new();
    let base = opts.server.trim_end_matches('/');

    let strokes: Vec<StrokeSummary> = expect_ok(http.get(format!("{base}/strokes")).send().await?).await?;
    let stroke = strokes
        .iter()
        .find(|s| s.id == opts.stroke_id)
        .ok_or_else(|| ReplayError::UnknownStroke(opts.stroke_id.clone()))?;
    let created: ApiSession = expect_ok(
        http.post(format!("{base}/sessions"))
            .json(&CreateSession {
                stroke_id: opts.stroke_id.clone(),
                user_height_m: opts.user_height_m.unwrap_or(stroke.expert_height_m),
                anchor: Some(opts.anchor),
            })
            .send()
            .await?,
    )
    .await?;
    let id = created.session_id.clone();
    let window = created.state.window;
    let control = |cmd: Command| {
        let req = http.post(format!("{base}/sessions/{id}/control")).json(&cmd);
        async move { expect_ok::<ApiSession>(req.send().await?).await }
    };
    control(Command::SetSpeed { value: opts.playback_speed }).await?;
    control(Command::Resume).await?;

    let (out_ws, _) = tokio_tungstenite::connect_async(ws_url(base, &format!("/sessions/{id}/out"))).await?;
    let (in_ws, _) = tokio_tungstenite::connect_async(ws_url(base, &format!("/sessions/{id}/in"))).await?;
    let (mut in_sink, mut in_stream) = in_ws.split();
    let (_out_sink, mut out_stream) = out_ws.split();

    let (sent_tx, mut sent_rx) = tokio::sync::mpsc::unbounded_channel::<(f64, Instant)>();
    let (err_tx, mut err_rx) = tokio::sync::mpsc::unbounded_channel::<StreamError>();
    let (done_tx, done_rx) = tokio::sync::oneshot::channel::<usize>();

    // rejected messages come back on the input stream
    let error_reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = in_stream.next().await {
            if let Message::Text(t) = msg {
                if let Ok(e) = serde_json::from_str::<StreamError>(t.as_str()) {
                    let _ = err_tx.send(e);
                }
            }
        }
    });

    let wall_start = Instant::now();
    let t0 = poses[0].t;
    let settle = opts.settle;
    let receiver = tokio::spawn(async move {
        let mut events: Vec<(WireFeedback, f64)> = Vec::new();
        let mut sent_at: BTreeMap<u64, Instant> = BTreeMap::new();
        let mut expected: Option<usize> = None;
        let mut errors: Vec<StreamError> = Vec::new();
        let mut done_rx = done_rx;
        let mut bucket: Option<SecondSummary> = None;
        let mut seconds: Vec<SecondSummary> = Vec::new();
        loop {
            if let Some(n) = expected {
                let missing_ok = n.saturating_sub(errors.len());
                if events.len() >= missing_ok {
                    break;
                }
            }
            let idle = async {
                if expected.is_some() {
                    tokio::time::sleep(settle).await
                } else {
                    std::future::pending().await
                }
            };
            tokio::select! {
                Some((t, at)) = sent_rx.recv() => { sent_at.insert(t.to_bits(), at); }
                Some(e) = err_rx.recv() => errors.push(e),
                n = &mut done_rx, if expected.is_none() => expected = Some(n.unwrap_or(0)),
                msg = out_stream.next() => {
                    let text = match msg {
                        Some(Ok(Message::Text(t))) => t,
                        Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                        Some(Ok(_)) => continue,
                    };
                    let now = Instant::now();
                    while let Ok((t, at)) = sent_rx.try_recv() {
                        sent_at.insert(t.to_bits(), at);
                    }
                    let fb: WireFeedback = serde_json::from_str(text.as_str()).map_err(ReplayError::BadFeedback)?;
                    let latency = sent_at
                        .remove(&fb.user_frame_timestamp.to_bits())
                        .map_or(f64::NAN, |at| now.duration_since(at).as_secs_f64() * 1000.0);
                    let second = ((fb.user_frame_timestamp - t0) / 1000.0).floor() as i64;
                    if bucket.as_ref().is_some_and(|b| b.second != second) {
                        seconds.push(bucket.take().expect("checked"));
                    }
                    let b = bucket.get_or_insert_with(|| SecondSummary { second, ..Default::default() });
                    b.mean_joint_score = (b.mean_joint_score * b.events as f64 + mean(&fb.per_joint_score)) / (b.events + 1) as f64;
                    b.events += 1;
                    for j in &fb.joint_errors {
                        *b.joint_flags.entry(j.clone()).or_default() += 1;
                    }
                    b.paddle_flags += usize::from(fb.paddle_error);
                    events.push((fb, latency));
                }
                _ = idle => break,
            }
        }
        while let Ok(e) = err_rx.try_recv() {
            errors.push(e);
        }
        seconds.extend(bucket);
        Ok::<_, ReplayError>((events, errors, seconds))
    });

    let mut paddle_sent = 0;
    let mut frames_sent: usize = 0;
    for pose in poses {
        if let Some(rate) = opts.rate {
            let due = wall_start + Duration::from_secs_f64(((pose.t - t0) / rate / 1000.0).max(0.0));
            tokio::time::sleep_until(due.into()).await;
        }
        // paddle samples through the first one at or after this pose
        while paddle_sent < paddle.len() {
            let p = &paddle[paddle_sent];
            in_sink.send(Message::text(serde_json::to_string(p).expect("record serializes"))).await?;
            paddle_sent += 1;
            if p.t >= pose.t {
                break;
            }
        }
        let _ = sent_tx.send((pose.t, Instant::now()));
        in_sink.send(Message::text(serde_json::to_string(pose).expect("record serializes"))).await?;
        frames_sent += 1;
    }
    let _ = done_tx.send(frames_sent.saturating_sub(window.saturating_sub(1)));
    let (events, stream_errors, seconds) = receiver.await.expect("receiver task")?;
    let wall_ms = wall_start.elapsed().as_secs_f64() * 1000.0;
    let _ = in_sink.close().await;
    error_reader.abort();
    if opts.cleanup {
        let _ = http.delete(format!("{base}/sessions/{id}")).send().await;
    }
    for s in &seconds {
        on_second(s);
    }

    let mut summary = ReplaySummary {
        session_id: id,
        frames_sent,
        paddle_records_sent: paddle_sent,
        events: events.len(),
        stream_errors,
        wall_ms,
        ..Default::default()
    };
    for (fb, latency) in &events {
        summary.events_with_joint_flags += usize::from(!fb.joint_errors.is_empty());
        summary.events_with_paddle_flag += usize::from(fb.paddle_error);
        for j in &fb.joint_errors {
            *summary.joint_flag_counts.entry(j.clone()).or_default() += 1;
        }
        summary.mean_joint_score += mean(&fb.per_joint_score);
        summary.mean_paddle_score += fb.paddle_score;
        if latency.is_finite() {
            summary.latencies_ms.push(*latency);
        }
    }
    if !events.is_empty() {
        summary.mean_joint_score /= events.len() as f64;
        summary.mean_paddle_score /= events.len() as f64;
    }
    Ok(summary)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Nearest-rank percentile of `xs`, `p` in `[0, 100]`.
pub fn percentile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}
