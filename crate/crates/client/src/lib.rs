//! Async HTTP client for an objkernel service.
//!
//! Every method maps to one endpoint and returns the service's DTO; a
//! non-success status is surfaced as [`ClientError::Api`] with the service's
//! structured error body.

use objkernel::wire::{
    ComposeDto, ComposeRequest, DemoDto, ErrorDto, ErrorKind, ExternalDto, InfoDto, LogDto, RecoverDto, SubmitRequest,
    SubmitResponse, TxRecordDto, VerifyDto,
};
use reqwest::{Method, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("{} ({status}): {}", kind_name(.error.kind), .error.message)]
    Api { status: u16, error: ErrorDto },
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Parse => "parse error",
        ErrorKind::Usage => "usage error",
        ErrorKind::NotFound => "not found",
        ErrorKind::Corruption => "corruption",
        ErrorKind::Internal => "internal error",
    }
}

impl ClientError {
    /// The service's error category, if the service answered at all.
    pub fn kind(&self) -> Option<ErrorKind> {
        match self {
            ClientError::Api { error, .. } => Some(error.kind),
            ClientError::Transport(_) => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:7878`.
    pub fn new(base: impl Into<String>) -> Client {
        Client {
            base: base.into().trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn send<B: Serialize, T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&B>) -> Result<T> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(b);
        }
        decode(req.send().await?).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.send::<(), T>(Method::GET, path, None).await
    }

    async fn post<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.send::<(), T>(Method::POST, path, None).await
    }

    pub async fn health(&self) -> Result<String> {
        let resp = self.http.get(format!("{}/health", self.base)).send().await?;
        Ok(resp.error_for_status()?.text().await?)
    }

    pub async fn info(&self) -> Result<InfoDto> {
        self.get("/info").await
    }

    /// Submits canonical transaction texts; none commit unless all parse.
    pub async fn submit(&self, transactions: Vec<String>, workers: Option<usize>) -> Result<SubmitResponse> {
        let body = SubmitRequest { transactions, workers };
        self.send(Method::POST, "/transactions", Some(&body)).await
    }

    pub async fn transactions(&self) -> Result<Vec<TxRecordDto>> {
        self.get("/transactions").await
    }

    pub async fn object_log(&self, object: &str) -> Result<LogDto> {
        self.get(&format!("/objects/{object}/log")).await
    }

    /// External sends of transactions with sequence number above `after`.
    pub async fn externals(&self, after: u64) -> Result<Vec<ExternalDto>> {
        self.get(&format!("/externals?after={after}")).await
    }

    pub async fn verify(&self) -> Result<VerifyDto> {
        self.post("/verify").await
    }

    pub async fn recover(&self) -> Result<RecoverDto> {
        self.post("/recover").await
    }

    pub async fn demo(&self, fixture: &str, workers: Option<usize>) -> Result<DemoDto> {
        match workers {
            Some(w) => self.post(&format!("/demo/{fixture}?workers={w}")).await,
            None => self.post(&format!("/demo/{fixture}")).await,
        }
    }

    pub async fn compose(&self, request: &ComposeRequest) -> Result<ComposeDto> {
        self.send(Method::POST, "/compose", Some(request)).await
    }
}

async fn decode<T: DeserializeOwned>(resp: Response) -> Result<T> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp.json().await?);
    }
    let text = resp.text().await?;
    let error = serde_json::from_str(&text).unwrap_or(ErrorDto {
        kind: ErrorKind::Internal,
        message: text,
        index: None,
    });
    Err(ClientError::Api {
        status: status.as_u16(),
        error,
    })
}
