//! HTTP API over the recommendation strategies, the guideline and the
//! benchmark harness.

pub mod api;
mod schema;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cpg_cds::dataset::{Corpus, Difficulty};
use cpg_cds::evaluation::{
    run_benchmark, BenchmarkError, BenchmarkReport, RunConfig, CANONICAL_SEEDS, DEFAULT_PARALLELISM,
};
use cpg_cds::guideline::{parse_guideline, GuidelineTree, PredicateBindings, StructuredPatientFacts};
use cpg_cds::llm::{BackendError, BackendFactory, BackendKind, ScriptedBackend};
use cpg_cds::prompt::TemplateSet;
use cpg_cds::strategies::{run_method, MethodKind, RunContext, StrategyError};
use serde::Deserialize;
use thiserror::Error;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use api::*;
pub use schema::api_schema;

/// Largest corpus accepted by `/api/evaluate`.
pub const MAX_EVALUATE_CASES: usize = 200;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

/// Immutable data shared by all handlers.
pub struct Resources {
    pub tree: Arc<GuidelineTree>,
    /// The guideline file exactly as loaded.
    pub guideline_json: String,
    pub bindings: Arc<PredicateBindings>,
    pub templates: TemplateSet,
    pub corpus: Corpus,
    /// Default rules for scripted requests that carry no inline script.
    pub script: Option<Arc<ScriptedBackend>>,
}

#[derive(Debug, Clone, Default)]
pub struct DataPaths {
    pub guideline: Option<PathBuf>,
    pub predicates: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub script: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn invalid(path: &Path, e: impl std::fmt::Display) -> LoadError {
    LoadError::Invalid {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl Resources {
    /// The data files compiled into the library.
    pub fn canonical() -> Self {
        use cpg_cds::assets;
        Self {
            tree: Arc::new(assets::canonical_tree().clone()),
            guideline_json: assets::GUIDELINE_JSON.to_string(),
            bindings: Arc::new(assets::canonical_bindings().clone()),
            templates: assets::canonical_templates().clone(),
            corpus: assets::canonical_corpus().clone(),
            script: None,
        }
    }

    /// Loads each file given in `paths`, falling back to the compiled-in
    /// canonical data for the rest.
    pub fn load(paths: &DataPaths) -> Result<Self, LoadError> {
        let mut res = Self::canonical();
        if let Some(p) = &paths.guideline {
            res.guideline_json = read(p)?;
            res.tree = Arc::new(parse_guideline(&res.guideline_json).map_err(|e| invalid(p, e))?);
        }
        if let Some(p) = &paths.predicates {
            res.bindings = Arc::new(PredicateBindings::parse(&read(p)?).map_err(|e| invalid(p, e))?);
        }
        if paths.guideline.is_some() || paths.predicates.is_some() {
            let p = paths.predicates.as_deref().unwrap_or(Path::new("predicates"));
            res.bindings.check_against(&res.tree).map_err(|e| invalid(p, e))?;
        }
        if let Some(p) = &paths.templates {
            res.templates = TemplateSet::parse(&read(p)?).map_err(|e| invalid(p, e))?;
        }
        if let Some(p) = &paths.corpus {
            res.corpus = Corpus::load(p, &res.tree, false).map_err(|e| invalid(p, e))?;
        } else if paths.guideline.is_some() {
            res.corpus = Corpus::from_cases(res.corpus.cases, &res.corpus.source_path, &res.tree)
                .map_err(|e| invalid(Path::new(&res.corpus.source_path), e))?;
        }
        if let Some(p) = &paths.script {
            res.script = Some(Arc::new(ScriptedBackend::load(p).map_err(|e| invalid(p, e))?));
        }
        Ok(res)
    }
}

/// Handler state. Requests are answered with 503 until resources are
/// installed.
#[derive(Clone, Default)]
pub struct AppState {
    resources: Arc<OnceLock<Resources>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ready(resources: Resources) -> Self {
        let state = Self::new();
        state.install(resources);
        state
    }

    /// Installs resources once; later calls are ignored.
    pub fn install(&self, resources: Resources) -> bool {
        self.resources.set(resources).is_ok()
    }

    fn get(&self) -> Result<&Resources, ApiError> {
        self.resources.get().ok_or(ApiError::NotReady)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Allowed CORS origins; `None` allows any origin.
    pub cors_origins: Option<Vec<String>>,
    /// Directory of static UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug)]
enum ApiError {
    NotReady,
    Unprocessable(String),
    BadGateway(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, error) = match self {
            ApiError::NotReady => (StatusCode::SERVICE_UNAVAILABLE, "service is initializing".to_string()),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::BadGateway(m) => (StatusCode::BAD_GATEWAY, m),
        };
        (status, Json(ErrorBody { error })).into_response()
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::Unprocessable(format!("invalid request body: {e}")))
}

fn backend_error(e: BackendError) -> ApiError {
    match e {
        BackendError::InvalidConfig(_) | BackendError::Script(_) => ApiError::Unprocessable(e.to_string()),
        other => ApiError::BadGateway(other.to_string()),
    }
}

fn factory(res: &Resources, spec: &BackendSpec) -> Result<BackendFactory, ApiError> {
    let script = match (&spec.script, spec.kind) {
        (Some(rules), _) => Some(ScriptedBackend::new(rules.clone()).map_err(backend_error)?),
        (None, BackendKind::Scripted) => match &res.script {
            Some(shared) => {
                let shared: Arc<dyn cpg_cds::llm::Backend> = shared.clone();
                return Ok(BackendFactory::from_backend(spec.config(), res.tree.clone(), shared));
            }
            None => None,
        },
        (None, _) => None,
    };
    BackendFactory::new(spec.config(), res.tree.clone(), res.bindings.clone(), script).map_err(backend_error)
}

fn simulator_facts(res: &Resources, req: &RecommendRequest) -> Option<StructuredPatientFacts> {
    if req.facts.is_some() {
        return req.facts;
    }
    let case = match &req.case_id {
        Some(id) => res.corpus.get(id),
        None => {
            let wanted = req.patient_description.trim();
            res.corpus.cases.iter().find(|c| c.description.trim() == wanted)
        }
    };
    case.and_then(|c| c.facts)
}

async fn recommend(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let res = state.get()?;
    let req: RecommendRequest = parse_body(&body)?;
    if req.patient_description.trim().is_empty() {
        return Err(ApiError::Unprocessable("patient_description must not be empty".into()));
    }
    let facts = simulator_facts(res, &req);
    if req.backend.kind == BackendKind::TruthfulSim && facts.is_none() {
        return Err(ApiError::Unprocessable(
            "truthful_sim needs `facts`, a known `case_id`, or a description from the corpus".into(),
        ));
    }
    let client = factory(res, &req.backend)?
        .client(facts.as_ref())
        .map_err(backend_error)?;
    let ctx = RunContext {
        seed: req.backend.seed,
        case_id: req.case_id.clone(),
    };
    let started = Instant::now();
    let outcome = run_method(
        req.method,
        &res.tree,
        &req.patient_description,
        &res.templates,
        &client,
        &ctx,
    )
    .await;
    let latency_ms = started.elapsed().as_millis() as u64;
    let (status, body) = match outcome {
        Ok(trace) => {
            let leaf = trace.final_leaf.clone();
            (
                StatusCode::OK,
                RecommendResponse {
                    recommendation: leaf.as_ref().map(|l| l.label.clone()),
                    leaf_id: leaf.map(|l| l.id),
                    failure: None,
                    trace: Some(trace),
                    latency_ms,
                },
            )
        }
        Err(StrategyError::Render(e)) => return Err(ApiError::Unprocessable(e.to_string())),
        Err(e) => {
            let status = match e {
                StrategyError::Backend { .. } => StatusCode::BAD_GATEWAY,
                StrategyError::BrokenTree(_) => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::OK,
            };
            (
                status,
                RecommendResponse {
                    recommendation: None,
                    leaf_id: None,
                    failure: Some(Failure {
                        kind: e.kind().into(),
                        message: e.to_string(),
                    }),
                    trace: e.trace().cloned(),
                    latency_ms,
                },
            )
        }
    };
    Ok((status, Json(body)).into_response())
}

async fn evaluate(State(state): State<AppState>, body: Bytes) -> Result<Json<EvaluateResponse>, ApiError> {
    let res = state.get()?;
    let req: EvaluateRequest = parse_body(&body)?;
    let corpus = match req.corpus {
        None => res.corpus.clone(),
        Some(CorpusInput::Inline(cases)) => {
            if cases.len() > MAX_EVALUATE_CASES {
                return Err(too_many(cases.len()));
            }
            Corpus::from_cases(cases, "inline", &res.tree).map_err(|e| ApiError::Unprocessable(e.to_string()))?
        }
        Some(CorpusInput::Path { path }) => {
            Corpus::load(&path, &res.tree, false).map_err(|e| ApiError::Unprocessable(e.to_string()))?
        }
    };
    if corpus.len() > MAX_EVALUATE_CASES {
        return Err(too_many(corpus.len()));
    }
    if corpus.is_empty() {
        return Err(ApiError::Unprocessable("corpus is empty".into()));
    }
    let config = RunConfig {
        seeds: req.seeds.unwrap_or_else(|| CANONICAL_SEEDS.to_vec()),
        methods: req.methods,
        backend: req.backend.config(),
        parallelism: req.parallelism.unwrap_or(DEFAULT_PARALLELISM),
    };
    config.validate().map_err(|e| ApiError::Unprocessable(e.to_string()))?;
    let backends = factory(res, &req.backend)?;
    let records = run_benchmark(&corpus, &config, &res.tree, &res.templates, &backends)
        .await
        .map_err(|e| match e {
            BenchmarkError::Config(_) | BenchmarkError::UnknownGold(_) => ApiError::Unprocessable(e.to_string()),
        })?;
    let report =
        BenchmarkReport::build(&records, &config, &res.tree).map_err(|e| ApiError::Unprocessable(e.to_string()))?;
    Ok(Json(EvaluateResponse {
        report,
        predictions: req.include_predictions.then_some(records),
    }))
}

fn too_many(n: usize) -> ApiError {
    ApiError::Unprocessable(format!(
        "corpus has {n} cases; at most {MAX_EVALUATE_CASES} are evaluated synchronously"
    ))
}

async fn guideline(State(state): State<AppState>) -> Result<Response, ApiError> {
    let res = state.get()?;
    Ok(([(header::CONTENT_TYPE, "application/json")], res.guideline_json.clone()).into_response())
}

async fn methods(State(state): State<AppState>) -> Result<Json<Vec<MethodKind>>, ApiError> {
    state.get()?;
    Ok(Json(MethodKind::ALL.to_vec()))
}

async fn health(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    state.get()?;
    Ok(Json(serde_json::json!({"status": "ok"})))
}

async fn schema(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    state.get()?;
    Ok(Json(api_schema()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusQuery {
    difficulty: Option<String>,
}

async fn corpus(State(state): State<AppState>, query: Query<CorpusQuery>) -> Result<Json<CorpusResponse>, ApiError> {
    let res = state.get()?;
    let selected = match &query.difficulty {
        Some(d) => res
            .corpus
            .stratify(d.parse::<Difficulty>().map_err(ApiError::Unprocessable)?),
        None => res.corpus.clone(),
    };
    Ok(Json(CorpusResponse {
        source: selected.source_path.clone(),
        total: selected.len(),
        cases: selected.cases,
    }))
}

pub fn router(state: AppState, config: &ServiceConfig) -> Router {
    let cors = match &config.cors_origins {
        None => CorsLayer::new().allow_origin(Any),
        Some(origins) => CorsLayer::new().allow_origin(AllowOrigin::list(
            origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()),
        )),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    let api = Router::new()
        .route("/api/recommend", post(recommend))
        .route("/api/evaluate", post(evaluate))
        .route("/api/guideline", get(guideline))
        .route("/api/methods", get(methods))
        .route("/api/health", get(health))
        .route("/api/schema", get(schema))
        .route("/api/corpus", get(corpus))
        .with_state(state);
    let app = match &config.static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    };
    app.layer(cors)
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(addr: SocketAddr, resources: Resources, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let app = router(AppState::ready(resources), &config);
    axum::serve(listener, app).await
}
