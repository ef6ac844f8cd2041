//! Device daemon and its client.
//!
//! The daemon owns a [`FrequencyBackend`] and speaks newline-delimited JSON
//! over TCP. Every request line gets exactly one reply line:
//!
//! ```text
//! -> {"type":"challenge","pairs":"01234567012345670123456701234567"}
//! <- {"type":"response","bits":"1010000000000000","device_id":"ro-000000000000002a"}
//! <- {"type":"error","code":"bad_request","message":"..."}
//! ```
//!
//! Replies carry comparison bits only, never frequencies or counts.

use std::future::Future;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};

use crate::counter::MeasurementConfig;
use crate::error::PufError;
use crate::puf_core::{respond, ChallengeSet, ResponseBits};
use crate::ro_model::FrequencyBackend;

pub const DEFAULT_DEVICE_PORT: u16 = 7531;

/// Longest request line the daemon will buffer.
pub const MAX_LINE_BYTES: usize = 16 * 1024;

pub const CODE_BAD_REQUEST: &str = "bad_request";
pub const CODE_INTERNAL: &str = "internal";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum WireMessage {
    Challenge { pairs: String },
    Response { bits: String, device_id: String },
    Error { code: String, message: String },
}

impl WireMessage {
    pub fn challenge(challenge: &ChallengeSet) -> Self {
        WireMessage::Challenge {
            pairs: challenge.to_wire(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        WireMessage::Error {
            code: CODE_BAD_REQUEST.into(),
            message: message.into(),
        }
    }

    /// Compact JSON followed by `\n`.
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("wire message serializes");
        line.push('\n');
        line
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line.trim_end_matches(['\r', '\n']))
    }
}

/// Answer one request line. Never fails: problems become error replies.
pub fn process_line(
    line: &str,
    backend: &FrequencyBackend,
    cfg: &MeasurementConfig,
    rng: &mut ChaCha8Rng,
) -> WireMessage {
    let pairs = match WireMessage::from_line(line) {
        Ok(WireMessage::Challenge { pairs }) => pairs,
        Ok(_) => return WireMessage::bad_request("only challenge requests are accepted"),
        Err(e) => return WireMessage::bad_request(format!("malformed request: {e}")),
    };
    let challenge = match ChallengeSet::from_wire(&pairs) {
        Ok(c) => c,
        Err(e) => return WireMessage::bad_request(e.to_string()),
    };
    match respond(backend, &challenge, cfg, rng) {
        Ok(bits) => WireMessage::Response {
            bits: bits.to_wire(),
            device_id: backend.device_id().to_owned(),
        },
        Err(e @ PufError::IndexOutOfRange { .. }) => WireMessage::bad_request(e.to_string()),
        Err(e) => WireMessage::Error {
            code: CODE_INTERNAL.into(),
            message: e.to_string(),
        },
    }
}

/// The device-side TCP server.
#[derive(Debug, Clone)]
pub struct DeviceDaemon {
    backend: Arc<FrequencyBackend>,
    cfg: MeasurementConfig,
    seed: u64,
}

impl DeviceDaemon {
    /// `seed` keys the random stream of every connection; connection `k`
    /// (in accept order) uses stream `k` of that seed.
    pub fn new(backend: FrequencyBackend, cfg: MeasurementConfig, seed: u64) -> Result<Self, PufError> {
        cfg.validate()?;
        Ok(DeviceDaemon {
            backend: Arc::new(backend),
            cfg,
            seed,
        })
    }

    pub fn connection_rng(&self, connection: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(connection);
        rng
    }

    /// Accept connections forever.
    pub async fn serve(self, listener: TcpListener) -> std::io::Result<()> {
        self.serve_until(listener, std::future::pending()).await
    }

    /// Accept connections until `shutdown` resolves. Connections already
    /// open keep running on their own tasks.
    pub async fn serve_until<F>(self, listener: TcpListener, shutdown: F) -> std::io::Result<()>
    where
        F: Future<Output = ()>,
    {
        tokio::pin!(shutdown);
        let mut connection = 0u64;
        loop {
            let (stream, peer) = tokio::select! {
                _ = &mut shutdown => return Ok(()),
                accepted = listener.accept() => match accepted {
                    Ok(pair) => pair,
                    Err(e) => {
                        tracing::warn!("accept failed: {e}");
                        continue;
                    }
                },
            };
            let rng = self.connection_rng(connection);
            connection += 1;
            let daemon = self.clone();
            tokio::spawn(async move {
                tracing::debug!(%peer, "device connection opened");
                if let Err(e) = daemon.handle_connection(stream, rng).await {
                    tracing::debug!(%peer, "device connection closed: {e}");
                }
            });
        }
    }

    /// Serve requests on one stream in arrival order until EOF.
    pub async fn handle_connection<S>(&self, stream: S, mut rng: ChaCha8Rng) -> std::io::Result<()>
    where
        S: AsyncRead + AsyncWrite + Unpin,
    {
        let (read_half, mut write_half) = tokio::io::split(stream);
        let mut reader = BufReader::new(read_half);
        let mut buf = Vec::new();
        loop {
            buf.clear();
            let n = (&mut reader)
                .take(MAX_LINE_BYTES as u64 + 1)
                .read_until(b'\n', &mut buf)
                .await?;
            if n == 0 {
                return Ok(());
            }
            if buf.last() != Some(&b'\n') && buf.len() > MAX_LINE_BYTES {
                let reply = WireMessage::bad_request("request line too long");
                write_half.write_all(reply.to_line().as_bytes()).await?;
                return Ok(());
            }
            let reply = match std::str::from_utf8(&buf) {
                Ok(line) => process_line(line, &self.backend, &self.cfg, &mut rng),
                Err(_) => WireMessage::bad_request("request is not valid UTF-8"),
            };
            write_half.write_all(reply.to_line().as_bytes()).await?;
            write_half.flush().await?;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("device at {0} refused the connection")]
    ConnectionRefused(String),
    #[error("device did not answer within {0:?}")]
    Timeout(Duration),
    #[error("device reported {code}: {message}")]
    Remote { code: String, message: String },
    #[error("malformed reply from device: {0}")]
    Protocol(String),
    #[error("i/o error talking to device: {0}")]
    Io(String),
    #[error(transparent)]
    Local(#[from] PufError),
}

/// Anything that can answer a challenge with response bits.
pub trait PufDevice {
    fn respond(
        &self,
        challenge: &ChallengeSet,
    ) -> impl Future<Output = Result<ResponseBits, DeviceError>> + Send;
}

/// TCP client for a [`DeviceDaemon`]; one connection per request.
#[derive(Debug, Clone)]
pub struct DeviceClient {
    address: String,
    timeout: Duration,
}

impl DeviceClient {
    pub fn new(address: impl Into<String>, timeout: Duration) -> Self {
        DeviceClient {
            address: address.into(),
            timeout,
        }
    }

    pub fn address(&self) -> &str {
        &self.address
    }

    pub async fn request(&self, challenge: &ChallengeSet) -> Result<ResponseBits, DeviceError> {
        request_response(&self.address, challenge, self.timeout).await
    }
}

impl PufDevice for DeviceClient {
    fn respond(
        &self,
        challenge: &ChallengeSet,
    ) -> impl Future<Output = Result<ResponseBits, DeviceError>> + Send {
        self.request(challenge)
    }
}

fn io_error(address: &str, e: std::io::Error) -> DeviceError {
    match e.kind() {
        std::io::ErrorKind::ConnectionRefused => DeviceError::ConnectionRefused(address.to_owned()),
        _ => DeviceError::Io(e.to_string()),
    }
}

/// Send one challenge and wait for its reply, all within `timeout`.
pub async fn request_response(
    address: &str,
    challenge: &ChallengeSet,
    timeout: Duration,
) -> Result<ResponseBits, DeviceError> {
    let exchange = async {
        let mut stream = TcpStream::connect(address)
            .await
            .map_err(|e| io_error(address, e))?;
        stream
            .write_all(WireMessage::challenge(challenge).to_line().as_bytes())
            .await
            .map_err(|e| io_error(address, e))?;
        let mut reader = BufReader::new(stream);
        let mut line = String::new();
        let n = reader
            .read_line(&mut line)
            .await
            .map_err(|e| io_error(address, e))?;
        if n == 0 {
            return Err(DeviceError::Protocol("connection closed before reply".into()));
        }
        decode_reply(&line)
    };
    tokio::time::timeout(timeout, exchange)
        .await
        .map_err(|_| DeviceError::Timeout(timeout))?
}

fn decode_reply(line: &str) -> Result<ResponseBits, DeviceError> {
    match WireMessage::from_line(line) {
        Ok(WireMessage::Response { bits, .. }) => {
            ResponseBits::from_wire(&bits).map_err(|e| DeviceError::Protocol(e.to_string()))
        }
        Ok(WireMessage::Error { code, message }) => Err(DeviceError::Remote { code, message }),
        Ok(WireMessage::Challenge { .. }) => {
            Err(DeviceError::Protocol("device sent a challenge".into()))
        }
        Err(e) => Err(DeviceError::Protocol(e.to_string())),
    }
}

/// In-process device, for callers that do not need the network hop.
#[derive(Debug)]
pub struct LocalDevice {
    backend: FrequencyBackend,
    cfg: MeasurementConfig,
    rng: Mutex<ChaCha8Rng>,
}

impl LocalDevice {
    pub fn new(backend: FrequencyBackend, cfg: MeasurementConfig, seed: u64) -> Self {
        LocalDevice {
            backend,
            cfg,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn respond_now(&self, challenge: &ChallengeSet) -> Result<ResponseBits, DeviceError> {
        let mut rng = self.rng.lock().expect("device rng poisoned");
        Ok(respond(&self.backend, challenge, &self.cfg, &mut *rng)?)
    }
}

impl PufDevice for LocalDevice {
    fn respond(
        &self,
        challenge: &ChallengeSet,
    ) -> impl Future<Output = Result<ResponseBits, DeviceError>> + Send {
        std::future::ready(self.respond_now(challenge))
    }
}
