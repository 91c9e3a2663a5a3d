//! Inference backends: a remote JSON-over-HTTP service and an offline
//! simulated expert.

pub mod remote;
pub mod simulated;
pub mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CaseRecord, GateFailure};
use crate::prompt::{PromptKind, PromptText};

pub use remote::{
    Clock, HttpReply, MockClock, RateLimiter, RemoteBackend, SystemClock, Transport, TransportError,
    UreqTransport, WireRequest, WireResponse,
};
pub use simulated::{judge_observations, observations_for, SimulatedBackend};
pub use synthetic::{
    generate_synthetic_corpus, AffectedSide, DefectPlan, DefectProfile, Pace, SideReaches,
    SyntheticCase, SyntheticCaseSpec,
};

pub const ENV_ENDPOINT: &str = "ROMDX_ENDPOINT";
pub const ENV_API_KEY: &str = "ROMDX_API_KEY";
pub const ENV_TIMEOUT_S: &str = "ROMDX_TIMEOUT_S";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("case {case_id} failed the privacy gate: {reasons:?}")]
    PrivacyGateRejected {
        case_id: String,
        reasons: Vec<GateFailure>,
    },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("server error (status {status}) after {attempts} attempt(s)")]
    ServerError { status: u16, attempts: u32 },
    #[error("request rejected with status {status}: {body}")]
    ClientError { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("connection failed after {attempts} attempt(s): {message}")]
    Connection { attempts: u32, message: String },
    #[error("description is empty")]
    EmptyDescription,
    #[error("frame set is empty")]
    EmptyFrameSet,
    #[error("expected prompt {expected}, got {got}")]
    WrongPrompt { expected: PromptKind, got: PromptKind },
    #[error("case {0} is not part of the simulated corpus")]
    UnknownSyntheticCase(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    #[serde(alias = "sim")]
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// Requests per minute.
    pub rate_limit: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl BackendConfig {
    pub fn simulated(seed: u64) -> Self {
        Self {
            backend: BackendKind::Simulated,
            endpoint: None,
            timeout_s: 30.0,
            max_retries: 0,
            rate_limit: u32::MAX,
            seed: Some(seed),
        }
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        Self {
            backend: BackendKind::Remote,
            endpoint: Some(endpoint.into()),
            timeout_s: 120.0,
            max_retries: 3,
            rate_limit: 30,
            seed: None,
        }
    }

    /// Remote settings from `ROMDX_ENDPOINT` and `ROMDX_TIMEOUT_S`.
    pub fn remote_from_env() -> Result<Self, GatewayError> {
        let endpoint = std::env::var(ENV_ENDPOINT)
            .map_err(|_| GatewayError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let mut cfg = Self::remote(endpoint);
        if let Ok(raw) = std::env::var(ENV_TIMEOUT_S) {
            cfg.timeout_s = raw
                .trim()
                .parse()
                .map_err(|_| GatewayError::Config(format!("{ENV_TIMEOUT_S}={raw:?} is not a number")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_s.is_nan() || self.timeout_s <= 0.0 {
            return Err(GatewayError::Config("timeout_s must be positive".into()));
        }
        if self.rate_limit == 0 {
            return Err(GatewayError::Config("rate_limit must be positive".into()));
        }
        if self.backend == BackendKind::Remote && self.endpoint.as_deref().unwrap_or("").is_empty() {
            return Err(GatewayError::Config("remote backend needs an endpoint".into()));
        }
        Ok(())
    }
}

/// A raw model transcript with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
    pub model_id: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

/// Input to a one-shot diagnosis: the whole video, or sampled frames.
#[derive(Debug, Clone, Copy)]
pub enum DiagnoseInput<'a> {
    Video(&'a CaseRecord),
    Frames {
        case: &'a CaseRecord,
        timestamps: &'a [f64],
    },
}

impl<'a> DiagnoseInput<'a> {
    pub fn case(&self) -> &'a CaseRecord {
        match self {
            DiagnoseInput::Video(case) | DiagnoseInput::Frames { case, .. } => case,
        }
    }
}

/// Uniform access to a model service. Implementations are shared across
/// worker threads.
pub trait Backend: Send + Sync {
    fn describe_video(&self, case: &CaseRecord, prompt: &PromptText) -> Result<Transcript, GatewayError>;

    /// `case` gives the backend context about the source case; remote
    /// services never receive it.
    fn judge_text(
        &self,
        description: &str,
        prompt: &PromptText,
        case: Option<&CaseRecord>,
    ) -> Result<Transcript, GatewayError>;

    fn diagnose_direct(&self, input: &DiagnoseInput<'_>, prompt: &PromptText) -> Result<Transcript, GatewayError>;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn describe_video(&self, case: &CaseRecord, prompt: &PromptText) -> Result<Transcript, GatewayError> {
        (**self).describe_video(case, prompt)
    }

    fn judge_text(
        &self,
        description: &str,
        prompt: &PromptText,
        case: Option<&CaseRecord>,
    ) -> Result<Transcript, GatewayError> {
        (**self).judge_text(description, prompt, case)
    }

    fn diagnose_direct(&self, input: &DiagnoseInput<'_>, prompt: &PromptText) -> Result<Transcript, GatewayError> {
        (**self).diagnose_direct(input, prompt)
    }
}
