//! Thin HTTP client for a running vault service.

use anyhow::anyhow;
use ropuf_core::vault::TableView;
use ropuf_core::vault_service::{AuthenticateReply, CredentialsBody, ErrorReply, RegisterReply};
use serde::de::DeserializeOwned;

use crate::{Failure, EXIT_INVALID, EXIT_STORAGE, EXIT_UNREACHABLE};

pub struct ApiClient {
    base: String,
    http: reqwest::Client,
}

impl ApiClient {
    pub fn new(base: &str) -> Self {
        ApiClient {
            base: base.trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    pub async fn register(&self, username: &str, password: &str) -> Result<RegisterReply, Failure> {
        self.post("/api/register", username, password).await
    }

    pub async fn authenticate(
        &self,
        username: &str,
        password: &str,
    ) -> Result<AuthenticateReply, Failure> {
        self.post("/api/authenticate", username, password).await
    }

    pub async fn table(&self) -> Result<TableView, Failure> {
        let resp = self
            .http
            .get(format!("{}/api/table", self.base))
            .send()
            .await
            .map_err(service_unreachable)?;
        decode(resp).await
    }

    async fn post<T: DeserializeOwned>(
        &self,
        path: &str,
        username: &str,
        password: &str,
    ) -> Result<T, Failure> {
        let body = CredentialsBody {
            username: username.to_owned(),
            password: password.to_owned(),
        };
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .json(&body)
            .send()
            .await
            .map_err(service_unreachable)?;
        decode(resp).await
    }
}

fn service_unreachable(e: reqwest::Error) -> Failure {
    Failure::new(EXIT_UNREACHABLE, anyhow!("vault service unreachable: {e}"))
}

async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, Failure> {
    let status = resp.status();
    let bytes = resp.bytes().await.map_err(service_unreachable)?;
    if status.is_success() {
        return serde_json::from_slice(&bytes)
            .map_err(|e| Failure::new(EXIT_UNREACHABLE, anyhow!("unexpected reply from vault service: {e}")));
    }
    let (code, message) = match serde_json::from_slice::<ErrorReply>(&bytes) {
        Ok(err) => (err.code, err.message),
        Err(_) => (status.to_string(), String::from_utf8_lossy(&bytes).into_owned()),
    };
    let exit = match code.as_str() {
        "bad_request" => EXIT_INVALID,
        "storage_error" => EXIT_STORAGE,
        _ => EXIT_UNREACHABLE,
    };
    Err(Failure::new(exit, anyhow!("vault service returned {status} ({code}): {message}")))
}
