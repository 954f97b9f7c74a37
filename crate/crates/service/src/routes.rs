use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, Duration, Utc};
use erval_core::labeling::audit::record_audit_tag;
use erval_core::labeling::{
    audit_frequencies, qc_check, qc_task, AuditTag, BenchmarkSet, Direction, EditOp, LabelingSession,
    LabelingTask, QcFlag, SearchHit, SessionSpec, TagFrequency, TaskStatus, LEASE_MINUTES,
};
use erval_core::metrics::cluster_errors;
use erval_core::report::{benchmark_report, parse_metrics, to_json_bytes, EstimateOptions};
use erval_core::stats::{default_hill_grid, parse_hill_grid, SummaryReport};
use erval_core::{ClusterId, Design, NameIndex, RecordId};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};
use crate::state::AppState;

pub const DEFAULT_LIMIT: usize = 100;
pub const MAX_LIMIT: usize = 10_000;
const MAX_LEASE_MINUTES: i64 = 8 * 60;

type St = State<Arc<AppState>>;
type JsonBody<T> = Result<Json<T>, JsonRejection>;
type QueryParams<T> = Result<Query<T>, QueryRejection>;

fn one() -> u32 {
    1
}

fn check_v(v: u32) -> ApiResult<()> {
    if v == 1 {
        Ok(())
    } else {
        Err(ApiError::unprocessable(format!("unsupported schema version {v}")))
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct PageQuery {
    pub limit: Option<usize>,
    pub offset: Option<usize>,
}

impl PageQuery {
    fn resolve(&self) -> ApiResult<(usize, usize)> {
        let limit = self.limit.unwrap_or(DEFAULT_LIMIT);
        if limit > MAX_LIMIT {
            return Err(ApiError::bad_request(format!("limit must be at most {MAX_LIMIT}")));
        }
        Ok((limit, self.offset.unwrap_or(0)))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Page<T> {
    pub v: u32,
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
    pub items: Vec<T>,
}

fn paginate<T>(all: Vec<T>, q: &PageQuery) -> ApiResult<Page<T>> {
    let (limit, offset) = q.resolve()?;
    let total = all.len();
    let items = all.into_iter().skip(offset).take(limit).collect();
    Ok(Page {
        v: 1,
        total,
        limit,
        offset,
        items,
    })
}

fn json_bytes(status: StatusCode, bytes: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

pub async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "v": 1, "status": "ok" }))
}

// ---- sessions ----

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub design: Design,
    pub rng_seed: u64,
    pub prediction_snapshot: String,
    pub created_at: DateTime<Utc>,
    pub tasks: usize,
    pub finalized: usize,
    pub complete: bool,
}

impl SessionSummary {
    fn of(s: &LabelingSession) -> Self {
        let finalized = s.tasks.iter().filter(|t| t.status == TaskStatus::Finalized).count();
        Self {
            session_id: s.session_id.clone(),
            design: s.design,
            rng_seed: s.rng_seed,
            prediction_snapshot: s.prediction_snapshot.clone(),
            created_at: s.created_at,
            tasks: s.tasks.len(),
            finalized,
            complete: finalized == s.tasks.len(),
        }
    }
}

pub async fn list_sessions(State(state): St, q: QueryParams<PageQuery>) -> ApiResult<Json<Page<SessionSummary>>> {
    let Query(q) = q?;
    Ok(Json(paginate(state.read_all(SessionSummary::of), &q)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default = "one")]
    pub v: u32,
    pub session_id: String,
    pub design: Design,
    /// Number of seed records to sample.
    #[serde(default)]
    pub k: Option<usize>,
    pub rng_seed: u64,
    /// Explicit seed records instead of a random draw.
    #[serde(default)]
    pub seeds: Option<Vec<RecordId>>,
    /// Per-record weights for the expected-error design.
    #[serde(default)]
    pub record_weights: Option<HashMap<RecordId, f64>>,
}

pub async fn create_session(State(state): St, body: JsonBody<CreateSession>) -> ApiResult<Response> {
    let Json(body) = body?;
    check_v(body.v)?;
    let k = match (&body.seeds, body.k) {
        (Some(s), Some(k)) if s.len() != k => {
            return Err(ApiError::unprocessable(format!(
                "k = {k} disagrees with {} explicit seeds",
                s.len()
            )))
        }
        (Some(s), _) => s.len(),
        (None, Some(k)) => k,
        (None, None) => return Err(ApiError::unprocessable("either k or seeds is required")),
    };
    let spec = SessionSpec {
        session_id: body.session_id,
        design: body.design,
        k,
        rng_seed: body.rng_seed,
        prediction_snapshot: state.prediction_snapshot.clone(),
        record_weights: body.record_weights.as_ref(),
    };
    let session = state.create_session(spec, body.seeds)?;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

pub async fn get_session(State(state): St, Path(id): Path<String>) -> ApiResult<Json<LabelingSession>> {
    Ok(Json(state.read(&id, Clone::clone)?))
}

pub async fn list_tasks(
    State(state): St,
    Path(id): Path<String>,
    q: QueryParams<PageQuery>,
) -> ApiResult<Json<Page<LabelingTask>>> {
    let Query(q) = q?;
    let tasks = state.read(&id, |s| s.tasks.clone())?;
    Ok(Json(paginate(tasks, &q)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TaskView {
    pub v: u32,
    pub session_id: String,
    pub task: LabelingTask,
    pub resolved_cluster: Vec<RecordId>,
    pub flags: Vec<QcFlag>,
}

fn task_view(state: &AppState, s: &LabelingSession, task_id: &str) -> ApiResult<TaskView> {
    let task = s.task(task_id)?.clone();
    Ok(TaskView {
        v: 1,
        session_id: s.session_id.clone(),
        resolved_cluster: task.resolved_cluster().into_iter().collect(),
        flags: qc_task(&task, state.attributes.as_ref(), &state.qc),
        task,
    })
}

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub labeler: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NextTask {
    pub v: u32,
    /// Unfinalized tasks in the session.
    pub open: usize,
    pub task: Option<TaskView>,
}

pub async fn next_task(
    State(state): St,
    Path(id): Path<String>,
    q: QueryParams<NextQuery>,
) -> ApiResult<Json<NextTask>> {
    let Query(q) = q?;
    let now = state.now();
    let out = state.read(&id, |s| {
        let open = s.tasks.iter().filter(|t| t.status != TaskStatus::Finalized).count();
        let task = s
            .next_task(&q.labeler, now)
            .map(|t| task_view(&state, s, &t.task_id))
            .transpose()?;
        Ok::<_, ApiError>(NextTask { v: 1, open, task })
    })??;
    Ok(Json(out))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FlagsView {
    pub v: u32,
    pub flags: Vec<QcFlag>,
}

pub async fn session_qc(State(state): St, Path(id): Path<String>) -> ApiResult<Json<FlagsView>> {
    let flags = state.read(&id, |s| qc_check(s, state.attributes.as_ref(), &state.qc))?;
    Ok(Json(FlagsView { v: 1, flags }))
}

pub async fn session_benchmark(State(state): St, Path(id): Path<String>) -> ApiResult<Response> {
    let set = state.read(&id, BenchmarkSet::export)??;
    let mut buf = Vec::new();
    set.write_jsonl(&mut buf)?;
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, "application/x-ndjson")], buf).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AuditView {
    pub v: u32,
    pub tags: Vec<AuditTag>,
    pub frequencies: Vec<TagFrequency>,
}

pub async fn session_audit(State(state): St, Path(id): Path<String>) -> ApiResult<Json<AuditView>> {
    let tags = state.read(&id, |s| s.tags.clone())?;
    let frequencies = audit_frequencies(&tags)?;
    Ok(Json(AuditView {
        v: 1,
        tags,
        frequencies,
    }))
}

// ---- tasks ----

pub async fn get_task(State(state): St, Path(task_id): Path<String>) -> ApiResult<Json<TaskView>> {
    let sid = state.session_of_task(&task_id)?;
    Ok(Json(state.read(&sid, |s| task_view(&state, s, &task_id))??))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaseBody {
    #[serde(default = "one")]
    pub v: u32,
    pub labeler: String,
    #[serde(default)]
    pub ttl_minutes: Option<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelerBody {
    #[serde(default = "one")]
    pub v: u32,
    pub labeler: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditBody {
    #[serde(default = "one")]
    pub v: u32,
    pub labeler: String,
    pub op: EditOp,
    pub record: RecordId,
}

fn check_labeler(labeler: &str) -> ApiResult<()> {
    if labeler.trim().is_empty() {
        Err(ApiError::unprocessable("labeler is empty"))
    } else {
        Ok(())
    }
}

pub async fn lease_task(
    State(state): St,
    Path(task_id): Path<String>,
    body: JsonBody<LeaseBody>,
) -> ApiResult<Json<TaskView>> {
    let Json(body) = body?;
    check_v(body.v)?;
    check_labeler(&body.labeler)?;
    let minutes = body.ttl_minutes.unwrap_or(LEASE_MINUTES);
    if !(1..=MAX_LEASE_MINUTES).contains(&minutes) {
        return Err(ApiError::unprocessable(format!(
            "ttl_minutes must be between 1 and {MAX_LEASE_MINUTES}"
        )));
    }
    let sid = state.session_of_task(&task_id)?;
    let view = state.mutate(
        &sid,
        |s, now| s.lease_task(&task_id, &body.labeler, now, Duration::minutes(minutes)),
        |s| task_view(&state, s, &task_id),
    )??;
    Ok(Json(view))
}

pub async fn release_task(
    State(state): St,
    Path(task_id): Path<String>,
    body: JsonBody<LabelerBody>,
) -> ApiResult<Json<TaskView>> {
    let Json(body) = body?;
    check_v(body.v)?;
    let sid = state.session_of_task(&task_id)?;
    let view = state.mutate(
        &sid,
        |s, now| s.release_task(&task_id, &body.labeler, now),
        |s| task_view(&state, s, &task_id),
    )??;
    Ok(Json(view))
}

pub async fn edit_task(
    State(state): St,
    Path(task_id): Path<String>,
    body: JsonBody<EditBody>,
) -> ApiResult<Json<TaskView>> {
    let Json(body) = body?;
    check_v(body.v)?;
    if !state.prediction.contains(body.record.as_str()) {
        return Err(ApiError::unprocessable(format!("unknown record `{}`", body.record)));
    }
    let sid = state.session_of_task(&task_id)?;
    let view = state.mutate(
        &sid,
        |s, now| s.apply_edit(&task_id, &body.labeler, body.op, &body.record, now),
        |s| task_view(&state, s, &task_id),
    )??;
    Ok(Json(view))
}

pub async fn finalize_task(
    State(state): St,
    Path(task_id): Path<String>,
    body: JsonBody<LabelerBody>,
) -> ApiResult<Json<TaskView>> {
    let Json(body) = body?;
    check_v(body.v)?;
    let sid = state.session_of_task(&task_id)?;
    let view = state.mutate(
        &sid,
        |s, now| s.finalize(&task_id, &body.labeler, now),
        |s| task_view(&state, s, &task_id),
    )??;
    Ok(Json(view))
}

// ---- search ----

#[derive(Debug, Deserialize)]
pub struct SearchQuery {
    pub q: String,
    pub limit: Option<usize>,
    pub offset: Option<usize>,
}

pub async fn search(State(state): St, q: QueryParams<SearchQuery>) -> ApiResult<Json<Page<SearchHit>>> {
    let Query(q) = q?;
    let index = state.search.as_ref().ok_or_else(no_attributes)?;
    let (limit, offset) = PageQuery {
        limit: q.limit,
        offset: q.offset,
    }
    .resolve()?;
    let page = index.search(&q.q, offset, limit).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(Page {
        v: 1,
        total: page.total,
        limit,
        offset,
        items: page.hits,
    }))
}

fn no_attributes() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no_attributes", "the service has no attribute table")
}

// ---- clusters ----

/// A true cluster known to the service.
struct TrueCluster {
    members: Vec<RecordId>,
    p_c: f64,
    source: String,
    session_id: Option<String>,
}

/// Finalized tasks of one session (or the configured benchmark) keyed by
/// cluster id, which is the smallest member.
fn clusters_of_session(s: &LabelingSession) -> Vec<(String, TrueCluster)> {
    s.tasks
        .iter()
        .filter(|t| t.status == TaskStatus::Finalized)
        .map(|t| {
            let members: Vec<RecordId> = t.resolved_cluster().into_iter().collect();
            (
                members[0].to_string(),
                TrueCluster {
                    members,
                    p_c: t.p_c.unwrap_or(f64::NAN),
                    source: format!("session:{}", s.session_id),
                    session_id: Some(s.session_id.clone()),
                },
            )
        })
        .collect()
}

fn clusters_of_benchmark(b: &BenchmarkSet) -> Vec<(String, TrueCluster)> {
    b.draws
        .iter()
        .map(|d| {
            (
                d.cluster_id().to_string(),
                TrueCluster {
                    members: d.members.clone(),
                    p_c: d.p_c,
                    source: "benchmark".into(),
                    session_id: None,
                },
            )
        })
        .collect()
}

/// Every source that knows cluster `id`, restricted to one session if
/// named. Each hit comes with the other clusters of its source.
fn find_cluster(state: &AppState, id: &str, session: Option<&str>) -> ApiResult<Vec<(TrueCluster, Vec<(String, TrueCluster)>)>> {
    let mut sources: Vec<Vec<(String, TrueCluster)>> = match session {
        Some(sid) => vec![state.read(sid, clusters_of_session)?],
        None => state.read_all(clusters_of_session),
    };
    if session.is_none() {
        if let Some(b) = &state.benchmark {
            sources.push(clusters_of_benchmark(b));
        }
    }
    let mut hits = Vec::new();
    for mut src in sources {
        if let Some(i) = src.iter().position(|(cid, _)| cid == id) {
            let (_, hit) = src.swap_remove(i);
            hits.push((hit, src));
        }
    }
    if hits.is_empty() {
        return Err(ApiError::not_found("cluster", id));
    }
    Ok(hits)
}

#[derive(Debug, Deserialize)]
pub struct MatrixQuery {
    pub session: Option<String>,
    pub limit: Option<usize>,
    pub offset: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictedCluster {
    pub cluster_id: String,
    pub size: usize,
    /// Records shared with the true cluster.
    pub overlap: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MatrixRow {
    pub record_id: RecordId,
    /// Known true cluster of the record, if any.
    pub true_cluster: Option<String>,
    pub in_true_cluster: bool,
    pub predicted_cluster: String,
    pub label: Option<String>,
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MembershipMatrix {
    pub v: u32,
    pub cluster_id: String,
    pub source: String,
    pub members: Vec<RecordId>,
    pub predicted_clusters: Vec<PredictedCluster>,
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
    pub rows: Vec<MatrixRow>,
}

/// Records of every predicted cluster that intersects the true cluster,
/// with their true and predicted cluster ids.
pub async fn membership_matrix(
    State(state): St,
    Path(id): Path<String>,
    q: QueryParams<MatrixQuery>,
) -> ApiResult<Json<MembershipMatrix>> {
    let Query(q) = q?;
    let (limit, offset) = PageQuery {
        limit: q.limit,
        offset: q.offset,
    }
    .resolve()?;
    let (cluster, others) = find_cluster(&state, &id, q.session.as_deref())?.swap_remove(0);
    let mut known: HashMap<&RecordId, &str> = HashMap::new();
    for (cid, c) in &others {
        for r in &c.members {
            known.insert(r, cid);
        }
    }
    for r in &cluster.members {
        known.insert(r, &id);
    }

    let mut predicted: BTreeMap<&str, (&[RecordId], usize)> = BTreeMap::new();
    for r in &cluster.members {
        let (pid, members) = state
            .prediction
            .cluster_members_of(r.as_str())
            .ok_or_else(|| erval_core::Error::MissingFromPrediction(r.to_string()))?;
        predicted.entry(pid.as_str()).or_insert((members, 0)).1 += 1;
    }
    let predicted_clusters = predicted
        .iter()
        .map(|(&pid, &(members, overlap))| PredictedCluster {
            cluster_id: pid.into(),
            size: members.len(),
            overlap,
        })
        .collect();
    let mut rows: Vec<MatrixRow> = predicted
        .iter()
        .flat_map(|(&pid, &(members, _))| members.iter().map(move |r| (pid, r)))
        .map(|(pid, r)| {
            let attrs = state.attributes.as_ref();
            MatrixRow {
                record_id: r.clone(),
                true_cluster: known.get(r).map(|s| s.to_string()),
                in_true_cluster: cluster.members.binary_search(r).is_ok(),
                predicted_cluster: pid.into(),
                label: attrs.and_then(|a| a.label(r.as_str())).map(str::to_string),
                attributes: attrs
                    .and_then(|a| a.attributes(r.as_str()))
                    .map(|kv| kv.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
                    .unwrap_or_default(),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    let total = rows.len();
    let rows = rows.into_iter().skip(offset).take(limit).collect();
    Ok(Json(MembershipMatrix {
        v: 1,
        cluster_id: id,
        source: cluster.source,
        members: cluster.members,
        predicted_clusters,
        total,
        limit,
        offset,
        rows,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagBody {
    #[serde(default = "one")]
    pub v: u32,
    #[serde(default)]
    pub session_id: Option<String>,
    pub direction: String,
    pub label: String,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TagView {
    pub v: u32,
    pub session_id: String,
    pub tag: AuditTag,
}

/// Tags an error pattern on a finalized cluster. The tag is journaled in the
/// session that resolved the cluster.
pub async fn tag_cluster(
    State(state): St,
    Path(id): Path<String>,
    body: JsonBody<TagBody>,
) -> ApiResult<Response> {
    let Json(body) = body?;
    check_v(body.v)?;
    let direction = Direction::parse(&body.direction)?;
    let hits: Vec<TrueCluster> = find_cluster(&state, &id, body.session_id.as_deref())?
        .into_iter()
        .map(|(c, _)| c)
        .filter(|c| c.session_id.is_some())
        .collect();
    let cluster = match hits.as_slice() {
        [] => {
            return Err(ApiError::unprocessable(format!(
                "cluster `{id}` is not part of a labeling session"
            )))
        }
        [c] => c,
        _ => {
            return Err(ApiError::conflict(format!(
                "cluster `{id}` appears in several sessions; name one with session_id"
            )))
        }
    };
    let mut errors = cluster_errors(ClusterId::new(id.as_str()), &cluster.members, &state.prediction)?;
    errors.p_c = cluster.p_c;
    let tag = record_audit_tag(&errors, direction, &body.label, &body.note)?;
    let sid = cluster.session_id.clone().expect("filtered above");
    state.mutate(&sid, |s, now| s.record_tag(tag.clone(), now), |_| ())?;
    let view = TagView {
        v: 1,
        session_id: sid,
        tag,
    };
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

// ---- estimates and statistics ----

#[derive(Debug, Deserialize)]
pub struct EstimatesQuery {
    pub metrics: Option<String>,
    pub beta: Option<f64>,
    pub clamp: Option<bool>,
    /// Estimate from this session's benchmark instead of the configured one.
    pub session: Option<String>,
}

pub async fn estimates(State(state): St, q: QueryParams<EstimatesQuery>) -> ApiResult<Response> {
    let Query(q) = q?;
    let opts = EstimateOptions {
        metrics: parse_metrics(q.metrics.as_deref().unwrap_or("all"))?,
        beta: q.beta.unwrap_or(1.0),
        clamp: q.clamp.unwrap_or(false),
    };
    if !(opts.beta > 0.0 && opts.beta.is_finite()) {
        return Err(ApiError::unprocessable("beta must be positive"));
    }
    let exported;
    let benchmark = match &q.session {
        Some(sid) => {
            exported = state.read(sid, BenchmarkSet::export)??;
            &exported
        }
        None => state
            .benchmark
            .as_ref()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_benchmark", "the service has no benchmark; name a session"))?,
    };
    let report = benchmark_report(benchmark, &state.prediction, &opts)?;
    Ok(json_bytes(StatusCode::OK, to_json_bytes(&report, false)?))
}

#[derive(Debug, Deserialize)]
pub struct StatsQuery {
    pub hill_grid: Option<String>,
}

pub async fn summary_stats(State(state): St, q: QueryParams<StatsQuery>) -> ApiResult<Response> {
    let Query(q) = q?;
    let grid = match &q.hill_grid {
        Some(g) => parse_hill_grid(g)?,
        None => default_hill_grid(),
    };
    let names = state
        .attributes
        .as_ref()
        .map(|a| NameIndex::for_clustering(a, &state.prediction))
        .transpose()?;
    let report = SummaryReport::compute(&state.prediction, names.as_ref(), &grid)?;
    Ok(json_bytes(StatusCode::OK, to_json_bytes(&report, false)?))
}
