//! HTTP+JSON mapping of the client requests plus the alert-rule endpoints.
//!
//! | method | path                               |
//! |--------|------------------------------------|
//! | GET    | `/api/snapshot[?cluster=<addr>]`   |
//! | GET    | `/api/nodes`                       |
//! | GET    | `/api/series?addr=&channel=&from=&to=` |
//! | GET    | `/api/stream[?cluster=<addr>]` (server-sent events) |
//! | GET    | `/api/alerts/rules`                |
//! | POST   | `/api/alerts/rules`                |
//! | DELETE | `/api/alerts/rules/{id}`           |
//! | GET    | `/api/alerts/active`               |
//! | POST   | `/api/alerts/{rule}/{addr}/ack`    |

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use minewatch_core::alerting::{ActiveAlarm, AlarmEvent, AlertError, AlertRule, RuleCommand, RuleResponse};
use minewatch_core::{Channel, NodeAddress, NodeRole};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

use crate::request::{alarm_in_scope, ErrorCode, ErrorResponse, Subscription};
use crate::snapshot::{sim_time_ms, Snapshot};
use crate::state::Gateway;

type Shared = State<Arc<Gateway>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub addr: NodeAddress,
    pub values: BTreeMap<Channel, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotJson {
    pub seq: u64,
    pub sim_time_ms: u64,
    pub nodes: Vec<NodeJson>,
}

impl From<&Snapshot> for SnapshotJson {
    fn from(s: &Snapshot) -> Self {
        let mut nodes: Vec<NodeJson> = Vec::new();
        for e in &s.entries {
            match nodes.last_mut() {
                Some(n) if n.addr == e.address => {
                    n.values.insert(e.channel, e.value);
                }
                _ => nodes.push(NodeJson { addr: e.address.clone(), values: [(e.channel, e.value)].into() }),
            }
        }
        SnapshotJson { seq: s.seq, sim_time_ms: sim_time_ms(s.sim_time), nodes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyNodeJson {
    pub addr: NodeAddress,
    pub role: NodeRole,
    pub parent: Option<NodeAddress>,
    pub position: [f64; 2],
    pub channels: Vec<Channel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPointJson {
    pub seq: u64,
    pub sim_time_ms: u64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesJson {
    pub addr: NodeAddress,
    pub channel: Channel,
    pub points: Vec<SeriesPointJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorJson {
    pub code: u16,
    pub message: String,
}

impl IntoResponse for ErrorResponse {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(ErrorJson { code: self.status(), message: self.message })).into_response()
    }
}

fn alert_error(e: AlertError) -> ErrorResponse {
    let code = match e {
        AlertError::UnknownRule(_) => ErrorCode::NotFound,
        AlertError::DuplicateId(_) | AlertError::NotActive { .. } => ErrorCode::Conflict,
        AlertError::InvalidRule(_) => ErrorCode::BadRequest,
    };
    ErrorResponse::new(code, e.to_string())
}

fn address_param(raw: &str) -> Result<NodeAddress, ErrorResponse> {
    raw.parse().map_err(|_| ErrorResponse::new(ErrorCode::BadRequest, format!("bad address `{raw}`")))
}

#[derive(Deserialize)]
struct ClusterQuery {
    cluster: Option<String>,
}

impl ClusterQuery {
    fn root(&self, gw: &Gateway) -> Result<Option<NodeAddress>, ErrorResponse> {
        match &self.cluster {
            None => Ok(None),
            Some(raw) => {
                let a = address_param(raw)?;
                gw.known(&a)?;
                Ok(Some(a))
            }
        }
    }
}

async fn snapshot(State(gw): Shared, Query(q): Query<ClusterQuery>) -> Result<Json<SnapshotJson>, ErrorResponse> {
    let root = q.root(&gw)?;
    let p = gw.current_or_conflict()?;
    Ok(Json(match root {
        Some(r) => SnapshotJson::from(&p.snapshot.cluster(&r)),
        None => SnapshotJson::from(&p.snapshot),
    }))
}

async fn nodes(State(gw): Shared) -> Json<Vec<TopologyNodeJson>> {
    Json(
        gw.topology()
            .nodes()
            .map(|n| TopologyNodeJson {
                addr: n.address.clone(),
                role: n.role,
                parent: n.address.parent().ok(),
                position: [n.position.x, n.position.y],
                channels: n.channels.iter().copied().collect(),
            })
            .collect(),
    )
}

#[derive(Deserialize)]
struct SeriesQuery {
    addr: String,
    channel: String,
    from: Option<u64>,
    to: Option<u64>,
}

async fn series(State(gw): Shared, Query(q): Query<SeriesQuery>) -> Result<Json<SeriesJson>, ErrorResponse> {
    let addr = address_param(&q.addr)?;
    let channel: Channel = q
        .channel
        .parse()
        .map_err(|_| ErrorResponse::new(ErrorCode::NotFound, format!("unknown channel {}", q.channel)))?;
    let (from, to) = (q.from.unwrap_or(0), q.to.unwrap_or(u64::MAX));
    if from > to {
        return Err(ErrorResponse::new(ErrorCode::BadRequest, "from exceeds to"));
    }
    let points = gw
        .series_or_missing(&addr, channel, from, to)?
        .into_iter()
        .map(|p| SeriesPointJson { seq: p.seq, sim_time_ms: p.sim_time_ms, value: p.value })
        .collect();
    Ok(Json(SeriesJson { addr, channel, points }))
}

/// Events for one publication: the snapshot then any in-scope alarms.
fn publication_events(p: &crate::state::Publication, cluster: Option<&NodeAddress>) -> Vec<Event> {
    let snap = match cluster {
        Some(root) => SnapshotJson::from(&p.published.snapshot.cluster(root)),
        None => SnapshotJson::from(&p.published.snapshot),
    };
    let mut events = vec![Event::default()
        .event("snapshot")
        .id(snap.seq.to_string())
        .json_data(&snap)
        .expect("snapshot serialises")];
    events.extend(
        p.alarms
            .iter()
            .filter(|a| alarm_in_scope(a, cluster))
            .map(|a: &AlarmEvent| Event::default().event("alarm").json_data(a).expect("alarm serialises")),
    );
    events
}

fn event_stream(sub: Subscription, guard: crate::state::StreamGuard) -> impl Stream<Item = Result<Event, Infallible>> {
    let state = Some((sub, guard));
    stream::unfold(state, |state| async move {
        let (mut sub, guard) = state?;
        match sub.rx.recv().await {
            Ok(p) => {
                let events = publication_events(&p, sub.cluster.as_ref());
                let items: Vec<Result<Event, Infallible>> = events.into_iter().map(Ok).collect();
                Some((stream::iter(items), Some((sub, guard))))
            }
            Err(RecvError::Lagged(n)) => {
                let err = ErrorJson { code: 503, message: format!("subscriber too slow, {n} publications behind") };
                let ev = Event::default().event("error").json_data(&err).expect("error serialises");
                Some((stream::iter(vec![Ok(ev)]), None))
            }
            Err(RecvError::Closed) => None,
        }
    })
    .flatten()
}

async fn stream_snapshots(State(gw): Shared, Query(q): Query<ClusterQuery>) -> Result<Response, ErrorResponse> {
    let cluster = q.root(&gw)?;
    let rx = gw.subscribe().ok_or_else(|| ErrorResponse::new(ErrorCode::Unavailable, "gateway shutting down"))?;
    let guard = gw.stream_guard();
    Ok(Sse::new(event_stream(Subscription { rx, cluster }, guard)).keep_alive(KeepAlive::default()).into_response())
}

async fn list_rules(State(gw): Shared) -> Result<Json<Vec<AlertRule>>, ErrorResponse> {
    match gw.manage_rules(RuleCommand::List).map_err(alert_error)? {
        RuleResponse::Listing { rules, .. } => Ok(Json(rules)),
        _ => unreachable!("List answers with a listing"),
    }
}

async fn add_rule(
    State(gw): Shared,
    body: Result<Json<AlertRule>, JsonRejection>,
) -> Result<(StatusCode, Json<AlertRule>), ErrorResponse> {
    let Json(rule) = body.map_err(|e| ErrorResponse::new(ErrorCode::BadRequest, e.body_text()))?;
    gw.manage_rules(RuleCommand::Add(rule.clone())).map_err(alert_error)?;
    Ok((StatusCode::CREATED, Json(rule)))
}

async fn remove_rule(State(gw): Shared, Path(id): Path<String>) -> Result<Json<AlertRule>, ErrorResponse> {
    match gw.manage_rules(RuleCommand::Remove(id)).map_err(alert_error)? {
        RuleResponse::Removed(rule) => Ok(Json(rule)),
        _ => unreachable!("Remove answers with the removed rule"),
    }
}

async fn active_alarms(State(gw): Shared) -> Result<Json<Vec<ActiveAlarm>>, ErrorResponse> {
    match gw.manage_rules(RuleCommand::List).map_err(alert_error)? {
        RuleResponse::Listing { active, .. } => Ok(Json(active)),
        _ => unreachable!("List answers with a listing"),
    }
}

async fn ack_alarm(
    State(gw): Shared,
    Path((rule_id, addr)): Path<(String, String)>,
) -> Result<StatusCode, ErrorResponse> {
    let address = address_param(&addr)?;
    gw.manage_rules(RuleCommand::Ack { rule_id, address }).map_err(alert_error)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn not_found() -> ErrorResponse {
    ErrorResponse::new(ErrorCode::NotFound, "no such endpoint")
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/api/snapshot", get(snapshot))
        .route("/api/nodes", get(nodes))
        .route("/api/series", get(series))
        .route("/api/stream", get(stream_snapshots))
        .route("/api/alerts/rules", get(list_rules).post(add_rule))
        .route("/api/alerts/rules/{id}", delete(remove_rule))
        .route("/api/alerts/active", get(active_alarms))
        .route("/api/alerts/{rule}/{addr}/ack", post(ack_alarm))
        .fallback(not_found)
        .with_state(gateway)
}
