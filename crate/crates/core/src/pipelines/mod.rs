//! The three diagnosis frameworks, their transcript parser, and the
//! results store.

pub mod parser;
pub mod transcript;
mod types;

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parser::{parse_description, parse_output};
pub use types::{
    DiagnosisOutput, FinalVerdict, Framework, MotionObservation, MovementJudgment, ObservedKind,
    ObservedSide, ParseDiagnostic, Smoothness, SymmetryNote, Verdict,
};

use crate::gateway::{Backend, DiagnoseInput, GatewayError, Transcript};
use crate::ingest::{sample_frames, CaseRecord, IngestError};
use crate::prompt::{render_prompt, PromptKind, PromptText, RuleSet};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("frame count must be at least 1, got {0}")]
    InvalidFrameCount(usize),
    #[error("describe step failed: {0}")]
    DescribeFailed(#[source] GatewayError),
    #[error("judge step failed: {0}")]
    JudgeFailed(#[source] GatewayError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// The three compiled prompts for one rule set.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub a: PromptText,
    pub b: PromptText,
    pub c: PromptText,
}

impl PromptSet {
    pub fn compile(rules: &RuleSet) -> Self {
        Self {
            a: render_prompt(PromptKind::A, rules),
            b: render_prompt(PromptKind::B, rules),
            c: render_prompt(PromptKind::C, rules),
        }
    }
}

/// Everything a framework needs to process one case.
#[derive(Clone, Copy)]
pub struct PipelineContext<'a> {
    pub rules: &'a RuleSet,
    pub prompts: &'a PromptSet,
    pub backend: &'a dyn Backend,
    /// Label recorded as backend provenance.
    pub backend_name: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    #[serde(flatten)]
    pub output: DiagnosisOutput,
    pub model_id: String,
    pub backend: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub latency_ms: u64,
    pub attempts: u32,
}

impl CaseResult {
    fn assemble(
        case: &CaseRecord,
        ctx: &PipelineContext<'_>,
        output: DiagnosisOutput,
        transcripts: &[&Transcript],
        started_at: DateTime<Utc>,
    ) -> Self {
        let mut model_ids: Vec<&str> = Vec::new();
        for t in transcripts {
            if !model_ids.contains(&t.model_id.as_str()) {
                model_ids.push(&t.model_id);
            }
        }
        CaseResult {
            case_id: case.case_id.clone(),
            output,
            model_id: model_ids.join("+"),
            backend: ctx.backend_name.to_string(),
            started_at,
            finished_at: Utc::now(),
            latency_ms: transcripts.iter().map(|t| t.latency_ms).sum(),
            attempts: transcripts.iter().map(|t| t.attempts).sum(),
        }
    }
}

pub fn run_baseline(case: &CaseRecord, n_frames: usize, ctx: &PipelineContext<'_>) -> Result<CaseResult, PipelineError> {
    if n_frames == 0 {
        return Err(PipelineError::InvalidFrameCount(n_frames));
    }
    let started_at = Utc::now();
    let timestamps = sample_frames(case.duration_s, n_frames)?;
    let transcript = ctx.backend.diagnose_direct(
        &DiagnoseInput::Frames {
            case,
            timestamps: &timestamps,
        },
        &ctx.prompts.a,
    )?;
    let output = parse_output(&transcript.text, ctx.rules, Framework::Baseline);
    Ok(CaseResult::assemble(case, ctx, output, &[&transcript], started_at))
}

pub fn run_dvdx(case: &CaseRecord, ctx: &PipelineContext<'_>) -> Result<CaseResult, PipelineError> {
    let started_at = Utc::now();
    let transcript = ctx
        .backend
        .diagnose_direct(&DiagnoseInput::Video(case), &ctx.prompts.a)?;
    let output = parse_output(&transcript.text, ctx.rules, Framework::Dvdx);
    Ok(CaseResult::assemble(case, ctx, output, &[&transcript], started_at))
}

pub fn run_hmvdx(case: &CaseRecord, ctx: &PipelineContext<'_>) -> Result<CaseResult, PipelineError> {
    let started_at = Utc::now();
    let description = ctx
        .backend
        .describe_video(case, &ctx.prompts.b)
        .map_err(PipelineError::DescribeFailed)?;
    let judged = ctx
        .backend
        .judge_text(&description.text, &ctx.prompts.c, Some(case))
        .map_err(PipelineError::JudgeFailed)?;
    let mut output = parse_output(&judged.text, ctx.rules, Framework::Hmvdx);
    output.intermediate_description = Some(description.text.clone());
    Ok(CaseResult::assemble(case, ctx, output, &[&description, &judged], started_at))
}

pub fn run_case(
    framework: Framework,
    case: &CaseRecord,
    n_frames: usize,
    ctx: &PipelineContext<'_>,
) -> Result<CaseResult, PipelineError> {
    match framework {
        Framework::Baseline => run_baseline(case, n_frames, ctx),
        Framework::Dvdx => run_dvdx(case, ctx),
        Framework::Hmvdx => run_hmvdx(case, ctx),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub completed: usize,
    pub failed: usize,
    pub skipped: usize,
}

/// Outcome of one case, as delivered to the sink.
pub type CaseOutcome = Result<CaseResult, (String, PipelineError)>;

/// Runs `framework` over `cases` with at most `concurrency` workers.
/// Cases whose id is in `skip` are not run. `sink` is called on the
/// calling thread, one outcome at a time, in completion order.
pub fn run_cases<F>(
    framework: Framework,
    cases: &[CaseRecord],
    n_frames: usize,
    concurrency: usize,
    skip: &HashSet<String>,
    ctx: &PipelineContext<'_>,
    mut sink: F,
) -> RunSummary
where
    F: FnMut(CaseOutcome),
{
    let pending: Vec<&CaseRecord> = cases.iter().filter(|c| !skip.contains(&c.case_id)).collect();
    let mut summary = RunSummary {
        skipped: cases.len() - pending.len(),
        ..Default::default()
    };
    let next = AtomicUsize::new(0);
    let workers = concurrency.clamp(1, pending.len().max(1));
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<CaseOutcome>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            scope.spawn(move || loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(case) = pending.get(idx) else { break };
                let outcome = run_case(framework, case, n_frames, ctx).map_err(|e| (case.case_id.clone(), e));
                if tx.send(outcome).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for outcome in rx {
            match &outcome {
                Ok(_) => summary.completed += 1,
                Err(_) => summary.failed += 1,
            }
            sink(outcome);
        }
    });
    summary
}

/// Reads a JSON Lines results file. A torn final line (no trailing
/// newline, not valid JSON) from an interrupted write is ignored.
pub fn read_results(path: &Path) -> std::io::Result<Vec<CaseResult>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut lines = BufReader::new(File::open(path)?).lines().enumerate().peekable();
    while let Some((idx, line)) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CaseResult>(&line) {
            Ok(result) => out.push(result),
            Err(_) if lines.peek().is_none() => break,
            Err(e) => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), idx + 1),
                ))
            }
        }
    }
    Ok(out)
}

/// Appends one JSON value as a single line and flushes it.
pub fn append_json_line<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut line = serde_json::to_string(value).map_err(std::io::Error::other)?;
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(line.as_bytes())?;
    file.flush()
}
