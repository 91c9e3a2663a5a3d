//! Video-based shoulder range-of-motion diagnosis: case ingestion, prompt
//! compilation, model backends, the three diagnosis frameworks, rubric
//! grading, and evaluation.

pub mod evaluation;
pub mod gateway;
pub mod grading;
pub mod ingest;
pub mod pipelines;
pub mod prompt;

pub use evaluation::{EvalConfig, EvalError, Scenario};
pub use gateway::{Backend, BackendConfig, GatewayError, SimulatedBackend};
pub use grading::{AdjudicatedGrade, GradingRecord, GradingStatus, GradingStore, Score};
pub use ingest::{CaseRecord, CaseSet, Label};
pub use pipelines::{CaseResult, DiagnosisOutput, FinalVerdict, Framework};
pub use prompt::{Landmark, MovementKind, PromptKind, PromptText, Reach, RuleSet};
