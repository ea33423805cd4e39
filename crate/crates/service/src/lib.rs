//! HTTP surface over one kernel instance.
//!
//! The service owns at most one [`Kernel`]. With a store configured, the
//! kernel is opened (recovering and truncating a torn tail) on the first
//! request that submits or explicitly recovers; read-only requests made
//! before that read the store file without modifying it.
//!
//! | Method | Path | Purpose |
//! |---|---|---|
//! | GET | `/health` | liveness |
//! | GET | `/info` | parameters and sizes |
//! | POST | `/transactions` | submit a batch (all-or-nothing admission) |
//! | GET | `/transactions` | the transaction log `T` |
//! | GET | `/objects/{id}/log` | one object's log |
//! | GET | `/externals?after=N` | external sends of records after `N` |
//! | POST | `/verify` | replay-audit the store |
//! | POST | `/recover` | open the store, reporting what recovery found |
//! | POST | `/demo/{fixture}?workers=N` | run a fixture on a fresh instance |
//! | POST | `/compose` | run a composition scenario |

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use objkernel::compose::{run_scenario, ComposeError, ScenarioFile, TopologyFile};
use objkernel::durability::{self, StoreError, StoreHeader, VerifyError};
use objkernel::patterns::fixtures;
use objkernel::scheduler::run_concurrent;
use objkernel::wire::{
    ComposeDto, ComposeRequest, DemoDto, EntryDto, ErrorDto, ErrorKind, ExternalDto, InfoDto, LogDto, OutcomeDto,
    RecoverDto, SubmitRequest, SubmitResponse, TxRecordDto, VerifyDto,
};
use objkernel::{Kernel, KernelConfig, KernelError, SExpr, SystemState, Transaction};
use serde::Deserialize;
use tokio::net::TcpListener;

/// What the service runs.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Durable store; in memory when absent.
    pub store: Option<PathBuf>,
    /// Parameters for a new store or an in-memory kernel. An existing store
    /// keeps the parameters in its header.
    pub kernel: KernelConfig,
    /// Default worker count for batches.
    pub workers: usize,
}

impl ServiceConfig {
    pub fn in_memory(kernel: KernelConfig) -> ServiceConfig {
        ServiceConfig {
            store: None,
            kernel,
            workers: 1,
        }
    }
}

struct Inner {
    config: ServiceConfig,
    kernel: Option<Kernel>,
    recovered_torn: u64,
}

impl Inner {
    fn kernel(&mut self) -> Result<&mut Kernel, ApiError> {
        if self.kernel.is_none() {
            let kernel = match &self.config.store {
                None => Kernel::in_memory(self.config.kernel.clone()),
                Some(path) => {
                    let (k, report) = Kernel::open_adopting(path, self.config.kernel.clone())?;
                    self.recovered_torn = report.torn_bytes;
                    k
                }
            };
            self.kernel = Some(kernel);
        }
        Ok(self.kernel.as_mut().expect("kernel opened above"))
    }

    /// The current state and parameters, without opening a store.
    fn snapshot(&self) -> Result<(SystemState, StoreHeader), ApiError> {
        if let Some(k) = &self.kernel {
            return Ok((k.state().clone(), StoreHeader::from_config(k.config())));
        }
        match &self.config.store {
            Some(path) if path.exists() => {
                let rec = durability::recover(path)?;
                let header = rec
                    .header
                    .unwrap_or_else(|| StoreHeader::from_config(&self.config.kernel));
                Ok((rec.sys, header))
            }
            _ => Ok((SystemState::new(), StoreHeader::from_config(&self.config.kernel))),
        }
    }
}

/// Shared handle to the service state.
#[derive(Clone)]
pub struct AppState(Arc<Mutex<Inner>>);

impl AppState {
    pub fn new(config: ServiceConfig) -> AppState {
        AppState(Arc::new(Mutex::new(Inner {
            config,
            kernel: None,
            recovered_torn: 0,
        })))
    }
}

/// An error response: status derived from the kind, body an [`ErrorDto`].
#[derive(Debug)]
pub struct ApiError(ErrorDto);

impl ApiError {
    fn new(kind: ErrorKind, message: impl Into<String>) -> ApiError {
        ApiError(ErrorDto {
            kind,
            message: message.into(),
            index: None,
        })
    }

    fn parse_at(index: usize, message: impl Into<String>) -> ApiError {
        ApiError(ErrorDto {
            kind: ErrorKind::Parse,
            message: message.into(),
            index: Some(index),
        })
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> ApiError {
        let kind = match e {
            StoreError::Corruption { .. } | StoreError::Header(_) => ErrorKind::Corruption,
            StoreError::Io(_) | StoreError::Exists(_) | StoreError::Poisoned => ErrorKind::Internal,
        };
        ApiError::new(kind, e.to_string())
    }
}

impl From<KernelError> for ApiError {
    fn from(e: KernelError) -> ApiError {
        match e {
            KernelError::Store(s) => s.into(),
            KernelError::ConfigMismatch { .. } => ApiError::new(ErrorKind::Usage, e.to_string()),
        }
    }
}

impl From<ComposeError> for ApiError {
    fn from(e: ComposeError) -> ApiError {
        match e {
            ComposeError::Kernel(_, ref k) => {
                let kind = match k {
                    KernelError::Store(StoreError::Corruption { .. }) => ErrorKind::Corruption,
                    _ => ErrorKind::Internal,
                };
                ApiError::new(kind, e.to_string())
            }
            ComposeError::Topology(_) | ComposeError::Scenario(_) => ApiError::new(ErrorKind::Parse, e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.kind {
            ErrorKind::Parse | ErrorKind::Usage => StatusCode::BAD_REQUEST,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Corruption => StatusCode::CONFLICT,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.0)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs `f` on the kernel state off the async executor.
async fn blocking<T, F>(state: AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Inner) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let mut inner = state
            .0
            .lock()
            .map_err(|_| ApiError::new(ErrorKind::Internal, "kernel lock poisoned"))?;
        f(&mut inner)
    })
    .await
    .map_err(|e| ApiError::new(ErrorKind::Internal, e.to_string()))?
    .map(Json)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/info", get(info))
        .route("/transactions", post(submit).get(transactions))
        .route("/objects/{id}/log", get(object_log))
        .route("/externals", get(externals))
        .route("/verify", post(verify))
        .route("/recover", post(recover))
        .route("/demo/{fixture}", post(demo))
        .route("/compose", post(compose))
        .with_state(state)
}

/// Binds `addr` and serves in a background task, returning the bound address.
pub async fn spawn(config: ServiceConfig, addr: &str) -> std::io::Result<std::net::SocketAddr> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(AppState::new(config));
    tokio::spawn(async move {
        axum::serve(listener, app).await.ok();
    });
    Ok(local)
}

async fn health() -> &'static str {
    "ok"
}

async fn info(State(state): State<AppState>) -> ApiResult<InfoDto> {
    blocking(state, |inner| {
        let (sys, header) = inner.snapshot()?;
        Ok(InfoDto {
            allocator: header.allocator,
            salt: header.salt,
            budget: header.budget,
            transactions: sys.t.len(),
            k_len: sys.k.len(),
            objects: sys.k.objects().len(),
            store: inner.config.store.as_ref().map(|p| p.display().to_string()),
        })
    })
    .await
}

/// Parses every transaction before any is submitted.
pub fn admit(texts: &[String]) -> Result<Vec<Transaction>, (usize, String)> {
    texts
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let s = SExpr::parse(text).map_err(|e| (i, e.to_string()))?;
            Transaction::from_sexpr(&s).ok_or_else(|| (i, "a transaction must be a pair [p,i]".to_owned()))
        })
        .collect()
}

async fn submit(State(state): State<AppState>, Json(req): Json<SubmitRequest>) -> ApiResult<SubmitResponse> {
    let txs = admit(&req.transactions).map_err(|(i, e)| ApiError::parse_at(i, e))?;
    blocking(state, move |inner| {
        let workers = req.workers.unwrap_or(inner.config.workers).max(1);
        let kernel = inner.kernel()?;
        let (outcomes, stats) = kernel.submit_batch(&txs, workers)?;
        Ok(SubmitResponse {
            outcomes: outcomes.iter().map(OutcomeDto::from).collect(),
            rounds: stats.rounds,
            retries: stats.retries,
        })
    })
    .await
}

async fn transactions(State(state): State<AppState>) -> ApiResult<Vec<TxRecordDto>> {
    blocking(state, |inner| {
        let (sys, _) = inner.snapshot()?;
        Ok(sys
            .t
            .iter()
            .enumerate()
            .map(|(i, r)| TxRecordDto::new(i as u64 + 1, r))
            .collect())
    })
    .await
}

async fn object_log(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<LogDto> {
    let n = match SExpr::parse_canonical(&id) {
        Ok(SExpr::Atom(n)) => n,
        _ => return Err(ApiError::new(ErrorKind::Parse, format!("{id:?} is not an identity"))),
    };
    blocking(state, move |inner| {
        let (sys, _) = inner.snapshot()?;
        if !sys.k.exists(&n) && !n.is(0) {
            return Err(ApiError::new(ErrorKind::NotFound, format!("object {n} does not exist")));
        }
        Ok(LogDto {
            object: n.to_string(),
            entries: sys
                .k
                .log_of(&n)
                .into_iter()
                .map(|(caller, message)| EntryDto {
                    caller: caller.to_string(),
                    message: message.print(),
                })
                .collect(),
        })
    })
    .await
}

#[derive(Debug, Deserialize)]
struct After {
    #[serde(default)]
    after: u64,
}

async fn externals(State(state): State<AppState>, Query(q): Query<After>) -> ApiResult<Vec<ExternalDto>> {
    blocking(state, move |inner| {
        let (sys, _) = inner.snapshot()?;
        Ok(sys
            .t
            .iter()
            .enumerate()
            .map(|(i, r)| (i as u64 + 1, r))
            .filter(|(seq, _)| *seq > q.after)
            .flat_map(|(seq, r)| {
                r.externals
                    .iter()
                    .enumerate()
                    .map(move |(i, x)| ExternalDto::new(seq, i, x))
            })
            .collect())
    })
    .await
}

fn store_path(inner: &Inner) -> Result<PathBuf, ApiError> {
    let path = inner
        .config
        .store
        .clone()
        .ok_or_else(|| ApiError::new(ErrorKind::Usage, "no store configured"))?;
    if !path.exists() {
        return Err(ApiError::new(ErrorKind::Usage, format!("store {} does not exist", path.display())));
    }
    Ok(path)
}

/// Replay-audits the store file.
pub fn verify_store(path: &Path) -> VerifyDto {
    match durability::replay_verify(path) {
        Ok(report) => VerifyDto {
            ok: report.ok(),
            transactions: report.transactions,
            problem: report.divergence.map(|d| d.to_string()),
        },
        Err(e @ (VerifyError::Store(_) | VerifyError::TornTail(_) | VerifyError::NoHeader)) => VerifyDto {
            ok: false,
            transactions: 0,
            problem: Some(e.to_string()),
        },
    }
}

async fn verify(State(state): State<AppState>) -> ApiResult<VerifyDto> {
    blocking(state, |inner| Ok(verify_store(&store_path(inner)?))).await
}

async fn recover(State(state): State<AppState>) -> ApiResult<RecoverDto> {
    blocking(state, |inner| {
        store_path(inner)?;
        let k = inner.kernel()?;
        let (transactions, k_len) = (k.state().t.len(), k.state().k.len());
        Ok(RecoverDto {
            transactions,
            k_len,
            torn_bytes: inner.recovered_torn,
        })
    })
    .await
}

#[derive(Debug, Deserialize)]
struct Workers {
    workers: Option<usize>,
}

/// Runs a fixture on a fresh in-memory instance, through the scheduler
/// when `workers > 1`.
pub fn run_demo(name: &str, workers: usize) -> Option<DemoDto> {
    let fixture = fixtures::by_name(name)?;
    let cfg = fixture.config();
    let mut sys = SystemState::new();
    run_concurrent(&mut sys, &fixture.transactions(), workers.max(1), &cfg);
    let report = fixture.evaluate(&sys);
    Some(DemoDto {
        name: report.name.clone(),
        passed: report.passed(),
        workers: workers.max(1),
        table: report.table(),
        lines: report.lines().lines().map(str::to_owned).collect(),
    })
}

async fn demo(
    State(state): State<AppState>,
    UrlPath(name): UrlPath<String>,
    Query(q): Query<Workers>,
) -> ApiResult<DemoDto> {
    blocking(state, move |inner| {
        let workers = q.workers.unwrap_or(inner.config.workers);
        run_demo(&name, workers).ok_or_else(|| {
            ApiError::new(
                ErrorKind::Usage,
                format!("unknown fixture {name:?}; known: {}", fixtures::NAMES.join(", ")),
            )
        })
    })
    .await
}

async fn compose(State(state): State<AppState>, Json(req): Json<ComposeRequest>) -> ApiResult<ComposeDto> {
    blocking(state, move |_| {
        let topology = TopologyFile::parse(&req.topology)?;
        let scenario = ScenarioFile::parse(&req.scenario)?;
        let base = PathBuf::from(req.base_dir.unwrap_or_else(|| ".".to_owned()));
        let mut comp = topology.build(&base)?;
        let steps = scenario.resolve(&comp)?;
        let report = run_scenario(&mut comp, steps)?;
        Ok(ComposeDto {
            lines: report.lines(),
            mismatches: report.mismatches(),
            dead_letters: report.dead_letters(),
        })
    })
    .await
}
