//! HTTP and websocket front end for live sessions.
//!
//! Each session is owned by one task fed through a queue, so control commands
//! and user frames are applied in arrival order. Feedback is fanned out over a
//! bounded broadcast channel; a subscriber that falls behind loses its oldest
//! events and never slows ingestion.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use stroke_core::align::{CompareConfig, Thresholds};
use stroke_core::quat::Vec3;
use stroke_core::session::{
    Command, CueToggles, GuidanceCue, Ingest, Session, SessionConfig, SessionError, SessionSnapshot,
};
use stroke_core::skeleton::{JointAngleFrame, PaddleFrame, PoseFrame, SkeletonError};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot, watch};

use crate::format::{PaddleRecord, PoseRecord};
use crate::library::{StrokeLibrary, StrokeSummary};

pub const WIRE_SCHEMA_VERSION: u32 = 1;
/// Close code sent to stream clients when their session disappears.
pub const CLOSE_NOT_FOUND: u16 = 4404;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub compare: CompareConfig,
    /// Events buffered per subscriber before the oldest are dropped.
    pub feedback_buffer: usize,
    /// Frames and commands queued per session.
    pub queue_depth: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            compare: CompareConfig::default(),
            feedback_buffer: 256,
            queue_depth: 1024,
        }
    }
}

impl ServiceConfig {
    pub fn new(window: usize, thresholds: Thresholds) -> Self {
        Self {
            compare: CompareConfig {
                thresholds,
                window,
                ..CompareConfig::default()
            },
            ..Self::default()
        }
    }
}

/// Session state as returned by the control endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSession {
    pub session_id: String,
    pub stroke: StrokeSummary,
    pub state: SessionSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub stroke_id: String,
    pub user_height_m: f64,
    #[serde(default)]
    pub anchor: Option<Vec3>,
}

/// One message on a session's feedback stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFeedback {
    pub schema_version: u32,
    pub session_id: String,
    pub user_frame_timestamp: f64,
    pub playback_position: f64,
    pub expert_frame: usize,
    /// Names of the comparison joints, matching `per_joint_score`.
    pub comparison_joints: Vec<String>,
    pub per_joint_score: Vec<f64>,
    /// Flagged comparison joints by name.
    pub joint_errors: Vec<String>,
    pub paddle_score: f64,
    pub paddle_error: bool,
    pub expert_angle_frame: JointAngleFrame,
    pub user_angle_frame: JointAngleFrame,
    /// Every topology joint, matching the two pose arrays.
    pub joint_names: Vec<String>,
    /// Expert pose mapped onto the user by scale and anchor.
    pub expert_pose: Vec<Vec3>,
    pub user_pose: Vec<Vec3>,
    pub guidance: Vec<GuidanceCue>,
    pub cue_toggles: CueToggles,
}

/// Reply sent on the input stream when a message is rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamError {
    pub error: String,
    pub message: String,
}

/// Anything a client may send on the input stream.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InRecord {
    Pose(PoseRecord),
    Paddle(PaddleRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub message: String,
}

fn api_error(status: StatusCode, kind: &str, message: impl ToString) -> Response {
    (
        status,
        Json(ApiError {
            error: kind.to_string(),
            message: message.to_string(),
        }),
    )
        .into_response()
}

fn session_error(e: SessionError) -> Response {
    let kind = match &e {
        SessionError::StrokeNotFound(_) => return api_error(StatusCode::NOT_FOUND, "StrokeNotFound", e),
        SessionError::InvalidSpeed(_) => "InvalidSpeed",
        SessionError::Skeleton(SkeletonError::InvalidHeight(_)) => "InvalidHeight",
        SessionError::StrokeTooShort { .. } => "StrokeTooShort",
        _ => "InvalidRequest",
    };
    api_error(StatusCode::UNPROCESSABLE_ENTITY, kind, e)
}

fn session_not_found(id: &str) -> Response {
    api_error(StatusCode::NOT_FOUND, "SessionNotFound", format!("session `{id}` not found"))
}

enum SessionMsg {
    Snapshot(oneshot::Sender<ApiSession>),
    Control(Command, oneshot::Sender<Result<ApiSession, SessionError>>),
    Frame {
        pose: PoseFrame,
        paddle: Vec<PaddleFrame>,
        reply: oneshot::Sender<Result<(), SessionError>>,
    },
}

#[derive(Clone)]
struct SessionHandle {
    queue: mpsc::Sender<SessionMsg>,
    feedback: broadcast::Sender<Arc<str>>,
    closed: watch::Receiver<bool>,
    close: Arc<watch::Sender<bool>>,
}

pub struct AppState {
    library: Arc<StrokeLibrary>,
    config: ServiceConfig,
    sessions: RwLock<HashMap<String, SessionHandle>>,
}

impl AppState {
    pub fn new(library: Arc<StrokeLibrary>, config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self {
            library,
            config,
            sessions: RwLock::new(HashMap::new()),
        })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("sessions lock").len()
    }

    fn handle(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.read().expect("sessions lock").get(id).cloned()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/strokes", get(list_strokes))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/control", post(control_session))
        .route("/sessions/{id}/in", get(stream_in))
        .route("/sessions/{id}/out", get(stream_out))
        .with_state(state)
}

/// Serves until the listener fails or `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Binds `addr` and serves in a background task; returns the bound address.
pub async fn spawn(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = serve(listener, state, std::future::pending()).await {
            tracing::error!("service stopped: {e}");
        }
    });
    Ok(local)
}

async fn list_strokes(State(state): State<Arc<AppState>>) -> Json<Vec<StrokeSummary>> {
    Json(state.library.list())
}

async fn create_session(State(state): State<Arc<AppState>>, Json(req): Json<CreateSession>) -> Response {
    let config = SessionConfig {
        compare: state.config.compare,
        ..SessionConfig::default()
    };
    let id = uuid::Uuid::new_v4().to_string();
    let stroke = match state.library.get(&req.stroke_id) {
        Ok(s) => s,
        Err(_) => return session_error(SessionError::StrokeNotFound(req.stroke_id)),
    };
    let session = match Session::new(
        id.clone(),
        stroke,
        state.library.topology().clone(),
        req.user_height_m,
        req.anchor.unwrap_or(Vec3::ZERO),
        config,
    ) {
        Ok(s) => s,
        Err(e) => return session_error(e),
    };
    let snapshot = api_session(&session);
    let (queue, rx) = mpsc::channel(state.config.queue_depth);
    let (feedback, _) = broadcast::channel(state.config.feedback_buffer.max(1));
    let (close, closed) = watch::channel(false);
    tokio::spawn(run_session(session, rx, feedback.clone()));
    state.sessions.write().expect("sessions lock").insert(
        id,
        SessionHandle {
            queue,
            feedback,
            closed,
            close: Arc::new(close),
        },
    );
    (StatusCode::CREATED, Json(snapshot)).into_response()
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(h) = state.handle(&id) else {
        return session_not_found(&id);
    };
    let (tx, rx) = oneshot::channel();
    if h.queue.send(SessionMsg::Snapshot(tx)).await.is_err() {
        return session_not_found(&id);
    }
    match rx.await {
        Ok(s) => Json(s).into_response(),
        Err(_) => session_not_found(&id),
    }
}

async fn control_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(command): Json<Command>,
) -> Response {
    let Some(h) = state.handle(&id) else {
        return session_not_found(&id);
    };
    let (tx, rx) = oneshot::channel();
    if h.queue.send(SessionMsg::Control(command, tx)).await.is_err() {
        return session_not_found(&id);
    }
    match rx.await {
        Ok(Ok(s)) => Json(s).into_response(),
        Ok(Err(e)) => session_error(e),
        Err(_) => session_not_found(&id),
    }
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let removed = state.sessions.write().expect("sessions lock").remove(&id);
    match removed {
        Some(h) => {
            let _ = h.close.send(true);
            StatusCode::NO_CONTENT.into_response()
        }
        None => session_not_found(&id),
    }
}

fn api_session(s: &Session) -> ApiSession {
    ApiSession {
        session_id: s.id().to_string(),
        stroke: StrokeSummary::of(s.stroke()),
        state: s.snapshot(),
    }
}

fn wire_feedback(s: &Session, ev: stroke_core::session::FeedbackEvent, user_pose: &PoseFrame) -> WireFeedback {
    let toggles = s.toggles();
    let mut guidance = Vec::new();
    if toggles.onbody_body || toggles.onbody_paddle {
        let joints: &[usize] = if toggles.onbody_body { &ev.joint_errors } else { &[] };
        guidance = s.guidance(joints, ev.paddle_error && toggles.onbody_paddle);
    }
    let topo = s.topology();
    WireFeedback {
        schema_version: WIRE_SCHEMA_VERSION,
        session_id: ev.session_id,
        user_frame_timestamp: ev.user_frame_timestamp,
        playback_position: ev.playback_position,
        expert_frame: ev.expert_frame,
        comparison_joints: topo.comparison_names().map(str::to_string).collect(),
        per_joint_score: ev.per_joint_score,
        joint_errors: s.joint_error_names(&ev.joint_errors),
        paddle_score: ev.paddle_score,
        paddle_error: ev.paddle_error,
        expert_angle_frame: ev.expert_angle_frame,
        user_angle_frame: ev.user_angle_frame,
        joint_names: topo.joint_names().to_vec(),
        expert_pose: s.mapped_expert_pose(ev.expert_frame),
        user_pose: user_pose.positions.clone(),
        guidance,
        cue_toggles: toggles,
    }
}

async fn run_session(mut session: Session, mut rx: mpsc::Receiver<SessionMsg>, feedback: broadcast::Sender<Arc<str>>) {
    let mut last_t: Option<f64> = None;
    while let Some(msg) = rx.recv().await {
        match msg {
            SessionMsg::Snapshot(reply) => {
                let _ = reply.send(api_session(&session));
            }
            SessionMsg::Control(cmd, reply) => {
                let _ = reply.send(session.control(cmd).map(|_| api_session(&session)));
            }
            SessionMsg::Frame { pose, paddle, reply } => {
                // playback advances by the user's own frame clock
                if let Some(prev) = last_t {
                    if pose.timestamp > prev {
                        session.advance_clock(pose.timestamp - prev);
                    }
                }
                let result = session.ingest_user(&pose, &paddle);
                if result.is_ok() {
                    last_t = Some(pose.timestamp);
                }
                match result {
                    Ok(Ingest::Pending(_)) => {
                        let _ = reply.send(Ok(()));
                    }
                    Ok(Ingest::Feedback(ev)) => {
                        let wire = wire_feedback(&session, ev, &pose);
                        let text: Arc<str> = serde_json::to_string(&wire).expect("feedback serializes").into();
                        let _ = feedback.send(text);
                        let _ = reply.send(Ok(()));
                    }
                    Err(e) => {
                        let _ = reply.send(Err(e));
                    }
                }
            }
        }
    }
}

/// Resolves once the session is deleted.
async fn wait_closed(mut rx: watch::Receiver<bool>) {
    let _ = rx.wait_for(|c| *c).await;
}

fn not_found_close() -> Message {
    Message::Close(Some(CloseFrame {
        code: CLOSE_NOT_FOUND,
        reason: "NotFound".into(),
    }))
}

async fn stream_in(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.handle(&id) {
        Some(h) => {
            let topo = state.library.topology().clone();
            ws.on_upgrade(move |socket| feed_session(socket, h, topo))
        }
        None => session_not_found(&id),
    }
}

async fn feed_session(socket: WebSocket, h: SessionHandle, topo: Arc<stroke_core::skeleton::SkeletonTopology>) {
    let (mut sink, mut stream) = socket.split();
    let closed = wait_closed(h.closed.clone());
    tokio::pin!(closed);
    let mut pending_paddle: Vec<PaddleFrame> = Vec::new();
    let no_aliases = Default::default();
    loop {
        let msg = tokio::select! {
            _ = &mut closed => {
                let _ = sink.send(not_found_close()).await;
                return;
            }
            msg = stream.next() => msg,
        };
        let text = match msg {
            Some(Ok(Message::Text(t))) => t,
            Some(Ok(Message::Binary(b))) => match String::from_utf8(b.to_vec()) {
                Ok(t) => t.into(),
                Err(_) => {
                    let _ = send_error(&mut sink, "SchemaError", "binary message is not UTF-8").await;
                    continue;
                }
            },
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
            Some(Ok(_)) => continue,
        };
        let record: InRecord = match serde_json::from_str(text.as_str()) {
            Ok(r) => r,
            Err(e) => {
                let _ = send_error(&mut sink, "SchemaError", e).await;
                continue;
            }
        };
        match record {
            InRecord::Paddle(p) => pending_paddle.push(p.to_frame()),
            InRecord::Pose(p) => {
                let pose = match p.to_frame(&topo, &no_aliases) {
                    Ok(f) => f,
                    Err(e) => {
                        let _ = send_error(&mut sink, "SchemaError", e).await;
                        continue;
                    }
                };
                let (reply, rx) = oneshot::channel();
                let frame = SessionMsg::Frame {
                    pose,
                    paddle: std::mem::take(&mut pending_paddle),
                    reply,
                };
                if h.queue.send(frame).await.is_err() {
                    let _ = sink.send(not_found_close()).await;
                    return;
                }
                match rx.await {
                    Ok(Ok(())) => {}
                    Ok(Err(e)) => {
                        let kind = match e {
                            SessionError::NonMonotonicTimestamps { .. } => "NonMonotonicTimestamps",
                            SessionError::MissingPaddle => "MissingPaddle",
                            _ => "IngestError",
                        };
                        let _ = send_error(&mut sink, kind, e).await;
                    }
                    Err(_) => {
                        let _ = sink.send(not_found_close()).await;
                        return;
                    }
                }
            }
        }
    }
}

async fn send_error<S>(sink: &mut S, kind: &str, message: impl ToString) -> Result<(), axum::Error>
where
    S: futures_util::Sink<Message, Error = axum::Error> + Unpin,
{
    let body = serde_json::to_string(&StreamError {
        error: kind.to_string(),
        message: message.to_string(),
    })
    .expect("error serializes");
    sink.send(Message::Text(body.into())).await
}

async fn stream_out(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.handle(&id) {
        // subscribe before the upgrade completes so no event after this
        // response is missed
        Some(h) => {
            let rx = h.feedback.subscribe();
            ws.on_upgrade(move |socket| push_feedback(socket, rx, h.closed))
        }
        None => session_not_found(&id),
    }
}

async fn push_feedback(socket: WebSocket, mut rx: broadcast::Receiver<Arc<str>>, closed: watch::Receiver<bool>) {
    let (mut sink, mut stream) = socket.split();
    let closed = wait_closed(closed);
    tokio::pin!(closed);
    loop {
        tokio::select! {
            _ = &mut closed => {
                let _ = sink.send(not_found_close()).await;
                return;
            }
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                _ => {}
            },
            ev = rx.recv() => match ev {
                Ok(text) => {
                    if sink.send(Message::Text(text.as_ref().into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::debug!("subscriber lagged, dropped {n} events");
                }
                Err(broadcast::error::RecvError::Closed) => {
                    let _ = sink.send(not_found_close()).await;
                    return;
                }
            },
        }
    }
}
