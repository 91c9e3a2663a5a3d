//! Remote model service over a minimal JSON POST protocol.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendConfig, DiagnoseInput, GatewayError, Transcript, ENV_API_KEY};
use crate::ingest::{check_privacy_gate, CaseRecord, GateDecision};
use crate::prompt::PromptText;

const BACKOFF_BASE: Duration = Duration::from_millis(500);
const BACKOFF_CAP: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub task: String,
    pub prompt: String,
    pub media_url: Option<String>,
    pub frames: Option<Vec<String>>,
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub transcript: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Connection(String),
}

pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError>;
}

/// Blocking HTTP transport.
#[derive(Debug, Default)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut request = agent.post(url).header("content-type", "application/json");
        if let Some(key) = api_key {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Connection(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => TransportError::Timeout,
                other => TransportError::Connection(other.to_string()),
            })?;
        Ok(HttpReply { status, body })
    }
}

/// Time source used for pacing and backoff.
pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Virtual clock: `sleep` advances time instantly and is recorded.
#[derive(Debug, Default)]
pub struct MockClock {
    state: Mutex<(Duration, Vec<Duration>)>,
}

impl MockClock {
    pub fn advance(&self, d: Duration) {
        self.state.lock().unwrap().0 += d;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.state.lock().unwrap().1.clone()
    }
}

impl Clock for MockClock {
    fn now(&self) -> Duration {
        self.state.lock().unwrap().0
    }

    fn sleep(&self, d: Duration) {
        let mut state = self.state.lock().unwrap();
        state.0 += d;
        state.1.push(d);
    }
}

/// Spaces request starts at least `60 / per_minute` seconds apart.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Duration>>,
}

impl RateLimiter {
    pub fn per_minute(per_minute: u32) -> Self {
        Self {
            interval: Duration::from_secs(60) / per_minute.max(1),
            next_slot: Mutex::new(None),
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Blocks until the caller may start a request; returns the start time.
    pub fn acquire(&self, clock: &dyn Clock) -> Duration {
        let mut next = self.next_slot.lock().unwrap();
        let mut now = clock.now();
        if let Some(slot) = *next {
            if slot > now {
                clock.sleep(slot - now);
                now = clock.now();
            }
        }
        *next = Some(now + self.interval);
        now
    }
}

pub struct RemoteBackend {
    endpoint: String,
    api_key: Option<String>,
    timeout: Duration,
    max_retries: u32,
    transport: Box<dyn Transport>,
    clock: Arc<dyn Clock>,
    limiter: RateLimiter,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("endpoint", &self.endpoint)
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .finish_non_exhaustive()
    }
}

impl RemoteBackend {
    /// HTTP backend; the API key is read from `ROMDX_API_KEY` when set.
    pub fn new(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Self::with_parts(cfg, api_key, Box::new(UreqTransport), Arc::new(SystemClock::default()))
    }

    pub fn with_parts(
        cfg: &BackendConfig,
        api_key: Option<String>,
        transport: Box<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        cfg.validate()?;
        Ok(Self {
            endpoint: cfg.endpoint.clone().unwrap_or_default(),
            api_key,
            timeout: Duration::from_secs_f64(cfg.timeout_s),
            max_retries: cfg.max_retries,
            transport,
            clock,
            limiter: RateLimiter::per_minute(cfg.rate_limit),
        })
    }

    fn gate(case: &CaseRecord) -> Result<(), GatewayError> {
        match check_privacy_gate(case) {
            GateDecision::Pass => Ok(()),
            GateDecision::Fail(reasons) => Err(GatewayError::PrivacyGateRejected {
                case_id: case.case_id.clone(),
                reasons,
            }),
        }
    }

    fn backoff(attempt: u32) -> Duration {
        BACKOFF_BASE
            .saturating_mul(1u32 << attempt.min(16))
            .min(BACKOFF_CAP)
    }

    fn call(&self, request: &WireRequest) -> Result<Transcript, GatewayError> {
        let body = serde_json::to_string(request).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        let mut attempts = 0;
        loop {
            attempts += 1;
            let started = self.limiter.acquire(self.clock.as_ref());
            let outcome = self
                .transport
                .post_json(&self.endpoint, self.api_key.as_deref(), &body, self.timeout);
            let latency = self.clock.now().saturating_sub(started);
            let failure = match outcome {
                Ok(reply) if reply.status == 200 => {
                    let parsed: WireResponse = serde_json::from_str(&reply.body)
                        .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
                    if parsed.transcript.trim().is_empty() {
                        return Err(GatewayError::MalformedResponse("empty transcript".into()));
                    }
                    return Ok(Transcript {
                        text: parsed.transcript,
                        model_id: parsed.model_id,
                        latency_ms: latency.as_millis() as u64,
                        attempts,
                    });
                }
                Ok(reply) if reply.status == 429 => GatewayError::RateLimited { attempts },
                Ok(reply) if (400..500).contains(&reply.status) => {
                    return Err(GatewayError::ClientError {
                        status: reply.status,
                        body: reply.body,
                    })
                }
                Ok(reply) => GatewayError::ServerError {
                    status: reply.status,
                    attempts,
                },
                Err(TransportError::Timeout) => GatewayError::Timeout { attempts },
                Err(TransportError::Connection(message)) => GatewayError::Connection { attempts, message },
            };
            if attempts > self.max_retries {
                return Err(failure);
            }
            self.clock.sleep(Self::backoff(attempts - 1));
        }
    }
}

pub fn frame_ref(video_ref: &str, ts: f64) -> String {
    format!("{video_ref}#t={ts:.3}")
}

impl Backend for RemoteBackend {
    fn describe_video(&self, case: &CaseRecord, prompt: &PromptText) -> Result<Transcript, GatewayError> {
        Self::gate(case)?;
        self.call(&WireRequest {
            task: "describe".into(),
            prompt: prompt.body.clone(),
            media_url: Some(case.video_ref.clone()),
            frames: None,
            text: None,
        })
    }

    fn judge_text(
        &self,
        description: &str,
        prompt: &PromptText,
        _case: Option<&CaseRecord>,
    ) -> Result<Transcript, GatewayError> {
        if description.trim().is_empty() {
            return Err(GatewayError::EmptyDescription);
        }
        self.call(&WireRequest {
            task: "judge".into(),
            prompt: prompt.body.clone(),
            media_url: None,
            frames: None,
            text: Some(description.to_string()),
        })
    }

    fn diagnose_direct(&self, input: &DiagnoseInput<'_>, prompt: &PromptText) -> Result<Transcript, GatewayError> {
        let case = input.case();
        Self::gate(case)?;
        let (media_url, frames) = match input {
            DiagnoseInput::Video(_) => (Some(case.video_ref.clone()), None),
            DiagnoseInput::Frames { timestamps, .. } => {
                if timestamps.is_empty() {
                    return Err(GatewayError::EmptyFrameSet);
                }
                let frames = timestamps.iter().map(|&t| frame_ref(&case.video_ref, t)).collect();
                (None, Some(frames))
            }
        };
        self.call(&WireRequest {
            task: "diagnose".into(),
            prompt: prompt.body.clone(),
            media_url,
            frames,
            text: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AudioState, Label, PrivacyState, View};
    use crate::prompt::{render_prompt, PromptKind, RuleSet};
    use std::collections::VecDeque;

    #[derive(Default)]
    struct Scripted {
        replies: Mutex<VecDeque<Result<HttpReply, TransportError>>>,
        seen: Mutex<Vec<String>>,
    }

    impl Scripted {
        fn new(replies: Vec<Result<HttpReply, TransportError>>) -> Arc<Self> {
            Arc::new(Self {
                replies: Mutex::new(replies.into()),
                seen: Mutex::default(),
            })
        }
    }

    impl Transport for Arc<Scripted> {
        fn post_json(&self, _: &str, _: Option<&str>, body: &str, _: Duration) -> Result<HttpReply, TransportError> {
            self.seen.lock().unwrap().push(body.to_string());
            self.replies.lock().unwrap().pop_front().unwrap_or(Err(TransportError::Timeout))
        }
    }

    fn ok(text: &str) -> Result<HttpReply, TransportError> {
        Ok(HttpReply {
            status: 200,
            body: serde_json::json!({"transcript": text, "model_id": "m-1"}).to_string(),
        })
    }

    fn status(code: u16) -> Result<HttpReply, TransportError> {
        Ok(HttpReply {
            status: code,
            body: String::new(),
        })
    }

    fn case(privacy: PrivacyState, audio: AudioState) -> CaseRecord {
        CaseRecord {
            case_id: "c1".into(),
            video_ref: "https://videos.example/c1.mp4".into(),
            ground_truth: Label::Normal,
            age_band: "40-49".into(),
            gender: "female".into(),
            view: View::Front,
            duration_s: 12.0,
            privacy_state: privacy,
            audio_state: audio,
            preprocess_done: true,
        }
    }

    fn backend(script: &Arc<Scripted>, retries: u32, clock: Arc<MockClock>) -> RemoteBackend {
        let mut cfg = BackendConfig::remote("http://model.invalid/v1");
        cfg.max_retries = retries;
        cfg.rate_limit = 60;
        RemoteBackend::with_parts(&cfg, None, Box::new(script.clone()), clock).unwrap()
    }

    fn prompt(kind: PromptKind) -> PromptText {
        render_prompt(kind, &RuleSet::default_rules())
    }

    #[test]
    fn raw_video_never_leaves_the_machine() {
        let script = Scripted::new(vec![ok("x")]);
        let remote = backend(&script, 3, Arc::new(MockClock::default()));
        let raw = case(PrivacyState::Raw, AudioState::Present);
        assert!(matches!(
            remote.describe_video(&raw, &prompt(PromptKind::B)),
            Err(GatewayError::PrivacyGateRejected { .. })
        ));
        assert!(matches!(
            remote.diagnose_direct(&DiagnoseInput::Video(&raw), &prompt(PromptKind::A)),
            Err(GatewayError::PrivacyGateRejected { .. })
        ));
        assert!(script.seen.lock().unwrap().is_empty());
    }

    #[test]
    fn retries_are_bounded() {
        let script = Scripted::new(vec![status(503), status(503), status(503), status(503), ok("late")]);
        let clock = Arc::new(MockClock::default());
        let remote = backend(&script, 2, clock.clone());
        let clean = case(PrivacyState::Masked, AudioState::Removed);
        let err = remote.describe_video(&clean, &prompt(PromptKind::B)).unwrap_err();
        assert!(matches!(err, GatewayError::ServerError { status: 503, attempts: 3 }));
        assert_eq!(script.seen.lock().unwrap().len(), 3);
    }

    #[test]
    fn recovers_after_transient_failures() {
        let script = Scripted::new(vec![Err(TransportError::Timeout), status(429), ok("fine")]);
        let remote = backend(&script, 3, Arc::new(MockClock::default()));
        let clean = case(PrivacyState::Masked, AudioState::Removed);
        let t = remote.describe_video(&clean, &prompt(PromptKind::B)).unwrap();
        assert_eq!(t.text, "fine");
        assert_eq!(t.model_id, "m-1");
        assert_eq!(t.attempts, 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let script = Scripted::new(vec![status(400), ok("never")]);
        let remote = backend(&script, 5, Arc::new(MockClock::default()));
        let err = remote.judge_text("some text", &prompt(PromptKind::C), None).unwrap_err();
        assert!(matches!(err, GatewayError::ClientError { status: 400, .. }));
        assert_eq!(script.seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn timeouts_exhaust_into_timeout_error() {
        let script = Scripted::new(vec![]);
        let remote = backend(&script, 1, Arc::new(MockClock::default()));
        let err = remote.judge_text("text", &prompt(PromptKind::C), None).unwrap_err();
        assert!(matches!(err, GatewayError::Timeout { attempts: 2 }));
    }

    #[test]
    fn malformed_body_is_reported() {
        let script = Scripted::new(vec![Ok(HttpReply {
            status: 200,
            body: "<html>".into(),
        })]);
        let remote = backend(&script, 0, Arc::new(MockClock::default()));
        assert!(matches!(
            remote.judge_text("text", &prompt(PromptKind::C), None),
            Err(GatewayError::MalformedResponse(_))
        ));
    }

    #[test]
    fn pacing_respects_rate_limit() {
        let script = Scripted::new((0..5).map(|_| ok("t")).collect());
        let clock = Arc::new(MockClock::default());
        let remote = backend(&script, 0, clock.clone());
        for _ in 0..5 {
            remote.judge_text("text", &prompt(PromptKind::C), None).unwrap();
        }
        // 60 per minute: five starts need four one-second gaps
        assert_eq!(clock.now(), Duration::from_secs(4));
        assert!(clock.sleeps().iter().all(|&d| d <= Duration::from_secs(1)));
    }

    #[test]
    fn limiter_does_not_wait_when_idle() {
        let clock = MockClock::default();
        let limiter = RateLimiter::per_minute(6);
        assert_eq!(limiter.interval(), Duration::from_secs(10));
        limiter.acquire(&clock);
        clock.advance(Duration::from_secs(25));
        limiter.acquire(&clock);
        assert!(clock.sleeps().is_empty());
        limiter.acquire(&clock);
        assert_eq!(clock.sleeps(), vec![Duration::from_secs(10)]);
    }

    #[test]
    fn frames_and_wire_shape() {
        let script = Scripted::new(vec![ok("frames ok")]);
        let remote = backend(&script, 0, Arc::new(MockClock::default()));
        let clean = case(PrivacyState::Masked, AudioState::Removed);
        let stamps = [0.375, 1.125];
        remote
            .diagnose_direct(
                &DiagnoseInput::Frames {
                    case: &clean,
                    timestamps: &stamps,
                },
                &prompt(PromptKind::A),
            )
            .unwrap();
        let sent: WireRequest = serde_json::from_str(&script.seen.lock().unwrap()[0]).unwrap();
        assert_eq!(sent.task, "diagnose");
        assert_eq!(sent.media_url, None);
        assert_eq!(
            sent.frames.unwrap(),
            vec![
                "https://videos.example/c1.mp4#t=0.375".to_string(),
                "https://videos.example/c1.mp4#t=1.125".to_string()
            ]
        );
        assert!(matches!(
            remote.diagnose_direct(
                &DiagnoseInput::Frames {
                    case: &clean,
                    timestamps: &[]
                },
                &prompt(PromptKind::A)
            ),
            Err(GatewayError::EmptyFrameSet)
        ));
    }
}
