//! HTTP front end of the vault.
//!
//! | method | path                | body                       |
//! |--------|---------------------|----------------------------|
//! | POST   | `/api/register`     | `{"username", "password"}` |
//! | POST   | `/api/authenticate` | `{"username", "password"}` |
//! | GET    | `/api/table`        |                            |
//!
//! A failed login is a normal `200` answer with `"status":"failed"`; only
//! malformed requests, device outages and storage trouble are HTTP errors.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::RwLock;
use tower_http::cors::{Any, CorsLayer};

use crate::device_service::PufDevice;
use crate::vault::{AuthOutcome, Vault, VaultError, VaultRecord};

pub const DEFAULT_VAULT_PORT: u16 = 8080;
/// Pairs shown back to the user after registering.
pub const PREVIEW_PAIRS: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CredentialsBody {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterReply {
    pub status: String,
    pub row: u8,
    pub col: u8,
    /// `[first, second]` ring indices of the first eight pairs.
    pub challenge_preview: Vec<[u8; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthenticateReply {
    pub status: AuthOutcome,
    pub matched_bits: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub status: String,
    pub code: String,
    pub message: String,
}

/// Shared state: the vault behind a single-writer lock and the device link.
#[derive(Debug)]
pub struct VaultService<D> {
    vault: RwLock<Vault>,
    device: D,
}

impl<D: PufDevice + Send + Sync + 'static> VaultService<D> {
    pub fn new(vault: Vault, device: D) -> Arc<Self> {
        Arc::new(VaultService {
            vault: RwLock::new(vault),
            device,
        })
    }

    pub async fn record_count(&self) -> usize {
        self.vault.read().await.table().record_count()
    }
}

struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }
}

impl From<VaultError> for ApiError {
    fn from(e: VaultError) -> Self {
        let (status, code) = match &e {
            VaultError::RegistrationFailed(_) | VaultError::AuthenticationError(_) => {
                (StatusCode::BAD_GATEWAY, "device_unavailable")
            }
            VaultError::InvalidThreshold(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            VaultError::Storage(_) | VaultError::Format(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "storage_error")
            }
        };
        ApiError {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorReply {
            status: "error".into(),
            code: self.code.into(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

fn parse_credentials(body: &Bytes) -> Result<CredentialsBody, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn preview(record: &VaultRecord) -> Vec<[u8; 2]> {
    record
        .challenge
        .pairs()
        .iter()
        .take(PREVIEW_PAIRS)
        .map(|p| [p.first, p.second])
        .collect()
}

async fn handle_register<D: PufDevice + Send + Sync + 'static>(
    State(service): State<Arc<VaultService<D>>>,
    body: Bytes,
) -> Result<Json<RegisterReply>, ApiError> {
    let creds = parse_credentials(&body)?;
    let enrollment = service.vault.read().await.enrollment(&creds.username, &creds.password);
    let bits = service
        .device
        .respond(&enrollment.challenge)
        .await
        .map_err(VaultError::RegistrationFailed)?;
    let record = VaultRecord::new(enrollment.challenge, bits);
    service.vault.write().await.commit(enrollment.cell, record)?;
    Ok(Json(RegisterReply {
        status: "registered".into(),
        row: enrollment.cell.row,
        col: enrollment.cell.col,
        challenge_preview: preview(&record),
    }))
}

async fn handle_authenticate<D: PufDevice + Send + Sync + 'static>(
    State(service): State<Arc<VaultService<D>>>,
    body: Bytes,
) -> Result<Json<AuthenticateReply>, ApiError> {
    let creds = parse_credentials(&body)?;
    let (enrollment, empty) = {
        let vault = service.vault.read().await;
        let enrollment = vault.enrollment(&creds.username, &creds.password);
        let empty = vault.table().bucket(enrollment.cell).is_empty();
        (enrollment, empty)
    };
    if empty {
        return Ok(Json(AuthenticateReply {
            status: AuthOutcome::Failed,
            matched_bits: 0,
        }));
    }
    let bits = service
        .device
        .respond(&enrollment.challenge)
        .await
        .map_err(VaultError::AuthenticationError)?;
    let result = service.vault.read().await.judge(&enrollment, &bits);
    Ok(Json(AuthenticateReply {
        status: result.outcome,
        matched_bits: result.matched_bits,
    }))
}

async fn handle_table<D: PufDevice + Send + Sync + 'static>(
    State(service): State<Arc<VaultService<D>>>,
) -> impl IntoResponse {
    Json(service.vault.read().await.render_table())
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        message: "no such endpoint".into(),
    }
}

pub fn router<D: PufDevice + Send + Sync + 'static>(service: Arc<VaultService<D>>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/api/register", post(handle_register::<D>))
        .route("/api/authenticate", post(handle_authenticate::<D>))
        .route("/api/table", get(handle_table::<D>))
        .fallback(not_found)
        .layer(cors)
        .with_state(service)
}

pub async fn serve<D: PufDevice + Send + Sync + 'static>(
    listener: TcpListener,
    service: Arc<VaultService<D>>,
) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}

/// Serve until `shutdown` resolves, then drain in-flight requests.
pub async fn serve_until<D, F>(
    listener: TcpListener,
    service: Arc<VaultService<D>>,
    shutdown: F,
) -> std::io::Result<()>
where
    D: PufDevice + Send + Sync + 'static,
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(service))
        .with_graceful_shutdown(shutdown)
        .await
}
