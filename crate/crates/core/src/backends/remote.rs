//! HTTP client for a remote annealing service and a loopback server that
//! speaks the same protocol over the local simulated annealer.
//!
//! Request body:
//!
//! ```json
//! { "n_vars": 4, "offset": 30.0, "entries": [[0, 0, -30.0], [0, 3, 12.0]],
//!   "num_reads": 10, "seed": 7 }
//! ```
//!
//! Response body: `{ "samples": [{ "bits": "1001", "energy": -18.0 }] }`.
//! Energies exclude the offset.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::anneal::SimulatedAnnealing;
use super::{
    bits_from_str, bits_to_string, sort_samples, Backend, BackendError, BackendRequest,
    BackendResponse, Sample,
};
use crate::qubo::Qubo;

/// Environment variable holding the bearer token for [`RemoteBackend`].
pub const TOKEN_ENV: &str = "QTA_REMOTE_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub n_vars: usize,
    pub offset: f64,
    pub entries: Vec<(usize, usize, f64)>,
    pub num_reads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSample {
    pub bits: String,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub samples: Vec<WireSample>,
}

impl WireRequest {
    pub fn from_request(request: &BackendRequest) -> Self {
        Self {
            n_vars: request.qubo.n_vars(),
            offset: request.qubo.offset(),
            entries: request.qubo.entries().collect(),
            num_reads: request.num_reads,
            seed: request.seed,
        }
    }

    pub fn to_request(&self) -> Result<BackendRequest, String> {
        let mut qubo = Qubo::new(self.n_vars);
        qubo.set_offset(self.offset);
        for &(i, j, c) in &self.entries {
            if i > j || j >= self.n_vars {
                return Err(format!("bad entry ({i}, {j})"));
            }
            qubo.add(i, j, c);
        }
        Ok(BackendRequest::new(qubo, self.num_reads, self.seed))
    }
}

/// Client for the JSON sampling protocol. One call is one backend access.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    endpoint: String,
    token: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, token: impl Into<String>) -> Self {
        Self::with_timeout(endpoint, token, Duration::from_secs(120))
    }

    pub fn with_timeout(endpoint: impl Into<String>, token: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            token: token.into(),
            agent,
        }
    }

    /// Reads the token from [`TOKEN_ENV`]; an unset variable means an empty token.
    pub fn from_env(endpoint: impl Into<String>) -> Self {
        Self::new(endpoint, std::env::var(TOKEN_ENV).unwrap_or_default())
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

/// Posts the serialized QUBO and parses the returned samples.
pub fn solve_remote(
    request: &BackendRequest,
    endpoint: &str,
    auth_token: &str,
) -> Result<BackendResponse, BackendError> {
    RemoteBackend::new(endpoint, auth_token).sample(request)
}

impl Backend for RemoteBackend {
    fn name(&self) -> String {
        "remote".into()
    }

    fn sample(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let started = Instant::now();
        let body = WireRequest::from_request(request);
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.token))
            .send_json(&body)
            .map_err(|e| BackendError::ConnectionFailed(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 401 || status == 403 {
            return Err(BackendError::AuthRejected(status));
        }
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::ConnectionFailed(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::MalformedResponse(format!("HTTP {status}: {text}")));
        }
        let wire: WireResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let n = request.qubo.n_vars();
        let mut samples = Vec::with_capacity(wire.samples.len());
        for s in wire.samples {
            let bits = bits_from_str(&s.bits)
                .filter(|b| b.len() == n)
                .ok_or_else(|| BackendError::MalformedResponse(format!("bad bit string `{}`", s.bits)))?;
            let energy = request.qubo.energy(&bits);
            if (energy - s.energy).abs() > 1e-9 * energy.abs().max(1.0) {
                return Err(BackendError::MalformedResponse(format!(
                    "reported energy {} but the assignment evaluates to {energy}",
                    s.energy
                )));
            }
            samples.push(Sample { bits, energy });
        }
        if samples.is_empty() {
            return Err(BackendError::MalformedResponse("no samples".into()));
        }
        sort_samples(&mut samples);
        Ok(BackendResponse {
            samples,
            backend_name: self.name(),
            elapsed: started.elapsed(),
        })
    }
}

/// In-process HTTP server answering the sampling protocol with the local
/// simulated annealer. Stops when dropped.
pub struct LoopbackServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

impl LoopbackServer {
    /// Binds `addr` (use port 0 for an ephemeral port). Requests must carry
    /// `Authorization: Bearer <token>`.
    pub fn start(addr: &str, token: &str, sampler: SimulatedAnnealing, workers: usize) -> std::io::Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("not an IP listener"))?;
        let server = Arc::new(server);
        let expected = format!("Bearer {token}");
        let workers = (0..workers.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let expected = expected.clone();
                let sampler = sampler.clone();
                std::thread::spawn(move || {
                    for request in server.incoming_requests() {
                        handle(request, &expected, &sampler);
                    }
                })
            })
            .collect();
        Ok(Self {
            server,
            addr,
            workers,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}/sample", self.addr)
    }

    /// Blocks the calling thread serving requests until the process exits.
    pub fn wait(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for LoopbackServer {
    fn drop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn handle(mut request: tiny_http::Request, expected_auth: &str, sampler: &SimulatedAnnealing) {
    let authorized = request
        .headers()
        .iter()
        .any(|h| h.field.equiv("Authorization") && h.value.as_str() == expected_auth);
    let (status, body) = if !authorized {
        (401, r#"{"error":"unauthorized"}"#.to_string())
    } else {
        let mut text = String::new();
        match request.as_reader().read_to_string(&mut text) {
            Err(e) => (400, serde_json::json!({ "error": e.to_string() }).to_string()),
            Ok(_) => answer(&text, sampler),
        }
    };
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header");
    let response = tiny_http::Response::from_string(body)
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(response);
}

fn answer(text: &str, sampler: &SimulatedAnnealing) -> (u16, String) {
    let wire: WireRequest = match serde_json::from_str(text) {
        Ok(w) => w,
        Err(e) => return (400, serde_json::json!({ "error": e.to_string() }).to_string()),
    };
    let request = match wire.to_request() {
        Ok(r) => r,
        Err(e) => return (400, serde_json::json!({ "error": e }).to_string()),
    };
    match sampler.sample(&request) {
        Ok(resp) => {
            let out = WireResponse {
                samples: resp
                    .samples
                    .iter()
                    .map(|s| WireSample {
                        bits: bits_to_string(&s.bits),
                        energy: s.energy,
                    })
                    .collect(),
            };
            (200, serde_json::to_string(&out).expect("serializable"))
        }
        Err(e) => (422, serde_json::json!({ "error": e.to_string() }).to_string()),
    }
}
