//! REST/JSON service over one site's notebook.

use std::sync::Arc;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Json, Router};
use provnote_core::fabric::{
    FabricError, ItemId, ItemKind, MetadataPatch, NewItem, Predicate, SinceVector,
};
use provnote_core::glp::GlpError;
use provnote_core::identity::{
    request_digest, IdentityError, IdentityToken, DN_HEADER, SIGNATURE_HEADER, TIMESTAMP_HEADER,
};
use provnote_core::opm::{Annotations, Graph};
use provnote_core::query::{
    self, evaluate, lineage, Answer, AnswerContext, LineageDirection, Question, ResultSet, Ruleset,
};
use provnote_core::signing::SignatureRecord;
use provnote_core::{
    AssertionBatch, BatchError, Digest, EdgeId, EdgeLabel, GraphError, Metadata, NodeId, NodeKind,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::content::ContentError;
use crate::error::Error;
use crate::notebook::{find_node, ImportRequest, Notebook, Payload, QUALITY_KEYS};

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 512 * 1024 * 1024;

pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

#[derive(Clone)]
pub struct AppState {
    pub notebook: Arc<Notebook>,
    /// Unix seconds, for identity freshness.
    pub clock: Clock,
}

/// DN of the authenticated caller.
#[derive(Debug, Clone)]
pub struct Caller(pub String);

pub fn router(notebook: Arc<Notebook>) -> Router {
    router_with_clock(
        notebook,
        Arc::new(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs() as i64)
                .unwrap_or(0)
        }),
    )
}

pub fn router_with_clock(notebook: Arc<Notebook>, clock: Clock) -> Router {
    let state = AppState { notebook, clock };
    let protected = Router::new()
        .route("/batch", post(post_batch))
        .route("/query", get(run_query))
        .route("/lineage/{kind}/{identifier}", get(get_lineage))
        .route("/stats", get(stats))
        .route("/items", post(create_item).get(query_items))
        .route(
            "/items/{id}",
            get(get_item).patch(patch_item).delete(delete_item),
        )
        .route("/items/{id}/copy", post(copy_item))
        .route("/items/{id}/signatures", post(attach_signature))
        .route("/items/{id}/verify", get(verify_item))
        .route("/content", axum::routing::put(put_content))
        .route("/content/{digest}", get(get_content).head(head_content))
        .route("/changes", get(get_changes).post(post_changes))
        .route("/changes/vector", get(since_vector))
        .route("/statedigest", get(state_digest))
        .route("/import", post(import))
        .route("/collections", post(create_collection))
        .route("/spec", get(get_spec))
        .route("/search", get(search))
        .route_layer(middleware::from_fn_with_state(state.clone(), authenticate));
    Router::new()
        .route("/health", get(health))
        .merge(protected)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

async fn authenticate(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let (mut parts, body) = req.into_parts();
    let bytes = match to_bytes(body, MAX_BODY_BYTES).await {
        Ok(b) => b,
        Err(_) => {
            return ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                "body_too_large",
                "request body too large",
            )
            .into_response()
        }
    };
    let header = |name: &str| parts.headers.get(name).and_then(|v| v.to_str().ok());
    let token = match (
        header(DN_HEADER),
        header(TIMESTAMP_HEADER),
        header(SIGNATURE_HEADER),
    ) {
        (Some(dn), Some(ts), Some(sig)) => IdentityToken::from_headers(dn, ts, sig),
        _ => Err(IdentityError::Malformed("missing identity headers")),
    };
    let pq = parts
        .uri
        .path_and_query()
        .map_or(parts.uri.path(), |pq| pq.as_str());
    let digest = request_digest(parts.method.as_str(), pq, &bytes);
    let verified = token.and_then(|t| {
        t.verify(&state.notebook.keys(), (state.clock)(), &digest)?;
        Ok(t.dn)
    });
    match verified {
        Ok(dn) => {
            parts.extensions.insert(Caller(dn));
            next.run(Request::from_parts(parts, Body::from(bytes)))
                .await
        }
        Err(e) => ApiError::from(Error::BadIdentity(e)).into_response(),
    }
}

/// An error as sent over the wire: `{"error": code, "message": text, ...}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl ToString) -> Self {
        ApiError {
            status,
            body: json!({ "error": code, "message": message.to_string() }),
        }
    }

    fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.body[key] = serde_json::to_value(value).unwrap_or(Value::Null);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        use StatusCode as S;
        let msg = e.to_string();
        match e {
            Error::BadIdentity(_) => ApiError::new(S::UNAUTHORIZED, "bad_identity", msg),
            Error::Batch(BatchError::Graph(GraphError::DuplicateIdentifier { .. })) => {
                ApiError::new(S::CONFLICT, "duplicate_identifier", msg)
            }
            Error::Batch(BatchError::Graph(GraphError::EndpointKindViolation { .. })) => {
                ApiError::new(S::UNPROCESSABLE_ENTITY, "endpoint_kind_violation", msg)
            }
            Error::Batch(_) => ApiError::new(S::UNPROCESSABLE_ENTITY, "invalid_batch", msg),
            Error::Query(q) => {
                let (line, column) = q.position();
                let (status, code) = match q {
                    query::QueryError::Syntax { .. } => (S::BAD_REQUEST, "syntax_error"),
                    query::QueryError::UnboundVariable { .. } => {
                        (S::BAD_REQUEST, "unbound_variable")
                    }
                    query::QueryError::TypeMismatch { .. } => {
                        (S::UNPROCESSABLE_ENTITY, "type_mismatch")
                    }
                };
                ApiError::new(status, code, msg)
                    .with("line", line)
                    .with("column", column)
            }
            Error::Eval(_) => ApiError::new(S::UNPROCESSABLE_ENTITY, "type_mismatch", msg),
            Error::UnknownNode { .. } => ApiError::new(S::NOT_FOUND, "unknown_node", msg),
            Error::Fabric(FabricError::UnknownItem(_)) => {
                ApiError::new(S::NOT_FOUND, "unknown_item", msg)
            }
            Error::Fabric(
                FabricError::PathTaken(_)
                | FabricError::ItemIdTaken(_)
                | FabricError::CollectionNotEmpty(_),
            ) => ApiError::new(S::CONFLICT, "conflict", msg),
            Error::Fabric(FabricError::SequenceGap { .. }) => {
                ApiError::new(S::CONFLICT, "sequence_gap", msg)
            }
            Error::Fabric(FabricError::BadPredicate(_)) => {
                ApiError::new(S::BAD_REQUEST, "bad_predicate", msg)
            }
            Error::Fabric(_) => ApiError::new(S::UNPROCESSABLE_ENTITY, "fabric_rule", msg),
            Error::Content(ContentError::UnknownDigest(_)) => {
                ApiError::new(S::NOT_FOUND, "unknown_digest", msg)
            }
            Error::Content(ContentError::Io(_)) => {
                ApiError::new(S::INTERNAL_SERVER_ERROR, "io", msg)
            }
            Error::Content(_) | Error::MissingPayload(_) => {
                ApiError::new(S::INTERNAL_SERVER_ERROR, "integrity", msg)
            }
            Error::Placement(ref g) => {
                let violation = match g {
                    GlpError::Violation(v) => Some(v.clone()),
                    _ => None,
                };
                ApiError::new(S::UNPROCESSABLE_ENTITY, "placement_violation", msg)
                    .with("violations", violation.into_iter().collect::<Vec<_>>())
            }
            Error::MetadataViolation(v) => {
                ApiError::new(S::UNPROCESSABLE_ENTITY, "metadata_violation", msg)
                    .with("violations", v)
            }
            Error::UnknownInfluence(_) => {
                ApiError::new(S::UNPROCESSABLE_ENTITY, "unknown_influence", msg)
            }
            Error::UnknownSignerKey(_) => {
                ApiError::new(S::UNPROCESSABLE_ENTITY, "unknown_signer_key", msg)
            }
            Error::InvalidSignature(v) => {
                ApiError::new(S::UNPROCESSABLE_ENTITY, "invalid_signature", msg).with("verdict", v)
            }
            Error::MissingContent(_) => ApiError::new(S::CONFLICT, "missing_content", msg),
            Error::DigestMismatch { .. } => {
                ApiError::new(S::UNPROCESSABLE_ENTITY, "digest_mismatch", msg)
            }
            Error::InvalidArgument(_) | Error::Json(_) => {
                ApiError::new(S::BAD_REQUEST, "invalid_argument", msg)
            }
            Error::UnresolvedArtifact(_) => {
                ApiError::new(S::UNPROCESSABLE_ENTITY, "unresolved_artifact", msg)
            }
            Error::ProvenanceUnavailable(_) => {
                ApiError::new(S::SERVICE_UNAVAILABLE, "provenance_unavailable", msg)
            }
            _ => ApiError::new(S::INTERNAL_SERVER_ERROR, "internal", msg),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs `f` on the blocking pool.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> crate::Result<T> + Send + 'static,
) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            e,
        )),
    }
}

fn bad_request(message: impl ToString) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "invalid_argument", message)
}

fn parse_item_id(text: &str) -> ApiResult<ItemId> {
    text.parse()
        .map_err(|_| bad_request(format!("`{text}` is not an item id")))
}

fn parse_digest(text: &str) -> ApiResult<Digest> {
    text.parse()
        .map_err(|_| bad_request(format!("`{text}` is not a digest")))
}

/// How a node appears in responses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDescriptor {
    pub id: NodeId,
    pub kind: NodeKind,
    pub identifier: String,
    pub annotations: Annotations,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDescriptor {
    pub id: EdgeId,
    pub label: EdgeLabel,
    pub source: NodeId,
    pub target: NodeId,
    pub annotations: Annotations,
}

/// A query result set on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "items", rename_all = "snake_case")]
pub enum WireResultSet {
    Nodes(Vec<NodeDescriptor>),
    Edges(Vec<EdgeDescriptor>),
    Values(Vec<String>),
}

pub fn describe_nodes(graph: &Graph, ids: impl IntoIterator<Item = NodeId>) -> Vec<NodeDescriptor> {
    ids.into_iter()
        .filter_map(|id| graph.node(id))
        .map(|n| NodeDescriptor {
            id: n.id,
            kind: n.kind,
            identifier: n.identifier.clone(),
            annotations: n.annotations.clone(),
        })
        .collect()
}

pub fn wire_result(graph: &Graph, set: &ResultSet) -> WireResultSet {
    match set {
        ResultSet::Nodes(ids) => WireResultSet::Nodes(describe_nodes(graph, ids.iter().copied())),
        ResultSet::Edges(ids) => WireResultSet::Edges(
            ids.iter()
                .filter_map(|id| graph.edge(*id))
                .map(|e| EdgeDescriptor {
                    id: e.id,
                    label: e.label,
                    source: e.source,
                    target: e.target,
                    annotations: e.annotations.clone(),
                })
                .collect(),
        ),
        ResultSet::Values(v) => WireResultSet::Values(v.clone()),
    }
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn stats(State(s): State<AppState>) -> Json<provnote_core::store::StoreStats> {
    Json(s.notebook.provenance().view().stats())
}

async fn post_batch(
    State(s): State<AppState>,
    Json(batch): Json<AssertionBatch>,
) -> ApiResult<Json<provnote_core::BatchReceipt>> {
    let nb = s.notebook.clone();
    blocking(move || nb.provenance().post(&batch))
        .await
        .map(Json)
}

#[derive(Deserialize)]
struct QueryParams {
    expr: String,
}

async fn run_query(
    State(s): State<AppState>,
    Query(p): Query<QueryParams>,
) -> ApiResult<Json<WireResultSet>> {
    let parsed = query::parse(&p.expr).map_err(Error::from)?;
    let store = s.notebook.provenance().view();
    let eval = evaluate(store.graph(), &parsed).map_err(Error::from)?;
    Ok(Json(wire_result(store.graph(), &eval.last)))
}

#[derive(Deserialize)]
struct LineageParams {
    direction: Option<String>,
    question: Option<String>,
}

async fn get_lineage(
    State(s): State<AppState>,
    Path((kind, identifier)): Path<(String, String)>,
    Query(p): Query<LineageParams>,
) -> ApiResult<Response> {
    let kind: NodeKind = kind
        .parse()
        .map_err(|_| bad_request(format!("unknown node kind `{kind}`")))?;
    let store = s.notebook.provenance().view();
    let graph = store.graph();
    let subject = find_node(&store, kind, &identifier)?;
    if let Some(q) = p.question {
        let question: Question = q
            .parse()
            .map_err(|_| bad_request(format!("unknown question `{q}`")))?;
        let ruleset = Ruleset::builtin(&QUALITY_KEYS);
        let answer = query::answer(
            graph,
            question,
            subject,
            AnswerContext {
                ruleset: Some(&ruleset),
            },
        )
        .map_err(Error::from)?;
        return Ok(match answer {
            Answer::Nodes(set) => Json(describe_nodes(graph, set)).into_response(),
            Answer::Progress(p) => Json(p).into_response(),
            Answer::Quality(r) => Json(r).into_response(),
        });
    }
    let direction: LineageDirection = match p.direction.as_deref() {
        None => LineageDirection::Ancestors,
        Some(d) => d
            .parse()
            .map_err(|_| bad_request(format!("unknown direction `{d}`")))?,
    };
    let set = lineage(graph, subject, direction, None).map_err(|e| Error::Answer(e.into()))?;
    Ok(Json(describe_nodes(graph, set)).into_response())
}

/// Body of `POST /items`: a raw fabric item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateItemBody {
    pub path: String,
    pub kind: ItemKind,
    #[serde(default)]
    pub metadata: Metadata,
    pub content_digest: Option<Digest>,
}

async fn create_item(
    State(s): State<AppState>,
    Json(body): Json<CreateItemBody>,
) -> ApiResult<(StatusCode, Response)> {
    let nb = s.notebook.clone();
    let rec = blocking(move || {
        let fabric = nb.fabric();
        let content = match body.content_digest {
            Some(d) => Some((d, fabric.content().manifest(&d)?.size)),
            None => None,
        };
        fabric.create(
            ItemId(uuid::Uuid::new_v4()),
            NewItem {
                path: body.path,
                kind: body.kind,
                metadata: body.metadata,
                content,
            },
        )
    })
    .await?;
    Ok((StatusCode::CREATED, Json(rec).into_response()))
}

#[derive(Deserialize)]
struct ItemsParams {
    query: Option<String>,
}

async fn query_items(
    State(s): State<AppState>,
    Query(p): Query<ItemsParams>,
) -> ApiResult<Response> {
    let predicate: Predicate = match p.query {
        None => Predicate::True,
        Some(q) => serde_json::from_str(&q)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_predicate", e))?,
    };
    Ok(Json(s.notebook.fabric().query(&predicate)?).into_response())
}

async fn get_item(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let id = parse_item_id(&id)?;
    let rec = s
        .notebook
        .fabric()
        .get(&id)
        .ok_or(Error::Fabric(FabricError::UnknownItem(id)))?;
    Ok(Json(rec).into_response())
}

async fn patch_item(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(patch): Json<MetadataPatch>,
) -> ApiResult<Response> {
    let id = parse_item_id(&id)?;
    let nb = s.notebook.clone();
    Ok(Json(blocking(move || nb.update_metadata(id, &patch)).await?).into_response())
}

async fn delete_item(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let id = parse_item_id(&id)?;
    let nb = s.notebook.clone();
    Ok(Json(blocking(move || nb.delete_item(id)).await?).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CopyBody {
    pub path: String,
}

async fn copy_item(
    State(s): State<AppState>,
    Extension(caller): Extension<Caller>,
    Path(id): Path<String>,
    Json(body): Json<CopyBody>,
) -> ApiResult<(StatusCode, Response)> {
    let id = parse_item_id(&id)?;
    let nb = s.notebook.clone();
    let out = blocking(move || nb.copy_item(id, &body.path, &caller.0)).await?;
    Ok((StatusCode::CREATED, Json(out).into_response()))
}

async fn attach_signature(
    State(s): State<AppState>,
    Extension(caller): Extension<Caller>,
    Path(id): Path<String>,
    Json(sig): Json<SignatureRecord>,
) -> ApiResult<Response> {
    let id = parse_item_id(&id)?;
    let nb = s.notebook.clone();
    Ok(Json(blocking(move || nb.attach_signature(id, sig, &caller.0)).await?).into_response())
}

async fn verify_item(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let id = parse_item_id(&id)?;
    let nb = s.notebook.clone();
    Ok(Json(blocking(move || nb.verify_item(id)).await?).into_response())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stored {
    pub digest: Digest,
    pub size: u64,
}

async fn put_content(State(s): State<AppState>, body: Bytes) -> ApiResult<Json<Stored>> {
    let nb = s.notebook.clone();
    let (digest, size) = blocking(move || nb.fabric().put_content(&body)).await?;
    Ok(Json(Stored { digest, size }))
}

async fn get_content(State(s): State<AppState>, Path(digest): Path<String>) -> ApiResult<Response> {
    let digest = parse_digest(&digest)?;
    let nb = s.notebook.clone();
    let bytes = blocking(move || Ok(nb.fabric().content().get(&digest)?)).await?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

async fn head_content(
    State(s): State<AppState>,
    Path(digest): Path<String>,
) -> ApiResult<(StatusCode, HeaderMap)> {
    let digest = parse_digest(&digest)?;
    let mut headers = HeaderMap::new();
    match s.notebook.fabric().content().manifest(&digest) {
        Ok(m) => {
            headers.insert(header::CONTENT_LENGTH, m.size.into());
            Ok((StatusCode::OK, headers))
        }
        Err(ContentError::UnknownDigest(_)) => Ok((StatusCode::NOT_FOUND, headers)),
        Err(e) => Err(Error::from(e).into()),
    }
}

#[derive(Deserialize)]
struct ChangesParams {
    since: Option<String>,
}

async fn get_changes(
    State(s): State<AppState>,
    Query(p): Query<ChangesParams>,
) -> ApiResult<Response> {
    let since: SinceVector = match p.since {
        None => SinceVector::new(),
        Some(text) => serde_json::from_str(&text).map_err(bad_request)?,
    };
    Ok(Json(s.notebook.fabric().changes_since(&since)).into_response())
}

async fn post_changes(
    State(s): State<AppState>,
    Json(changes): Json<provnote_core::fabric::ChangeSet>,
) -> ApiResult<Response> {
    let nb = s.notebook.clone();
    Ok(Json(blocking(move || nb.fabric().apply_changes(&changes)).await?).into_response())
}

async fn since_vector(State(s): State<AppState>) -> Json<SinceVector> {
    Json(s.notebook.fabric().since_vector())
}

async fn state_digest(State(s): State<AppState>) -> Json<Value> {
    Json(json!({ "digest": s.notebook.fabric().state_digest() }))
}

/// Body of `POST /import`. Exactly one of `content_digest` and
/// `archival_location` is given. The actor is the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportBody {
    pub target: String,
    pub item_type: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub metadata: Metadata,
    #[serde(default)]
    pub content_digest: Option<Digest>,
    #[serde(default)]
    pub archival_location: Option<String>,
    #[serde(default)]
    pub influences: Vec<ItemId>,
}

async fn import(
    State(s): State<AppState>,
    Extension(caller): Extension<Caller>,
    Json(body): Json<ImportBody>,
) -> ApiResult<(StatusCode, Response)> {
    let nb = s.notebook.clone();
    let out = blocking(move || {
        let payload = match (body.content_digest, body.archival_location) {
            (Some(digest), None) => Payload::Stored {
                digest,
                size: nb.fabric().content().manifest(&digest)?.size,
            },
            (None, Some(archival_location)) => Payload::Physical { archival_location },
            _ => {
                return Err(Error::InvalidArgument(
                    "give exactly one of content_digest and archival_location".into(),
                ))
            }
        };
        nb.import(ImportRequest {
            target: body.target,
            item_type: body.item_type,
            name: body.name,
            metadata: body.metadata,
            payload,
            influences: body.influences,
            actor_dn: caller.0,
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(out).into_response()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionBody {
    pub path: String,
    pub collection_type: String,
    #[serde(default)]
    pub metadata: Metadata,
    /// Also create every allowed child collection.
    #[serde(default)]
    pub scaffold: bool,
}

async fn create_collection(
    State(s): State<AppState>,
    Json(body): Json<CollectionBody>,
) -> ApiResult<(StatusCode, Response)> {
    let nb = s.notebook.clone();
    let made = blocking(move || {
        if body.scaffold {
            nb.create_study(&body.path, &body.collection_type, body.metadata)
        } else {
            Ok(vec![nb.create_collection(
                &body.path,
                &body.collection_type,
                body.metadata,
            )?])
        }
    })
    .await?;
    Ok((StatusCode::CREATED, Json(made).into_response()))
}

async fn get_spec(State(s): State<AppState>) -> Json<provnote_core::glp::DataModelSpec> {
    Json(s.notebook.spec().clone())
}

#[derive(Deserialize)]
struct SearchParams {
    #[serde(default)]
    text: String,
}

async fn search(
    State(s): State<AppState>,
    Query(p): Query<SearchParams>,
) -> Json<Vec<provnote_core::fabric::ItemRecord>> {
    Json(s.notebook.search(&p.text))
}
