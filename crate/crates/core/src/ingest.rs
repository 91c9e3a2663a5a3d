//! Case manifest ingestion, the privacy gate, preprocessing plans and frame
//! sampling for the frame-sequence baseline.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bit-exact manifest header.
pub const MANIFEST_HEADER: [&str; 7] = [
    "case_id",
    "video_path",
    "label",
    "age_band",
    "gender",
    "view",
    "duration_s",
];

/// Frames per video for the baseline when nothing else is configured.
pub const DEFAULT_FRAME_COUNT: usize = 16;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("manifest not found: {0}")]
    MissingFile(PathBuf),
    #[error("duplicate case_id {0:?}")]
    DuplicateCaseId(String),
    #[error("unknown label {label:?} on line {line}")]
    UnknownLabel { line: usize, label: String },
    #[error("manifest contains no cases")]
    EmptyManifest,
    #[error("manifest header must be `{}`, found `{found}`", MANIFEST_HEADER.join(","))]
    BadHeader { found: String },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("frame count must be at least 1")]
    InvalidFrameCount,
    #[error("duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("video reference for case {case_id:?} cannot be resolved: {video_ref:?}")]
    UnresolvableVideoRef { case_id: String, video_ref: String },
    #[error("preprocess command for case {case_id:?} failed: {reason}")]
    ExecFailed { case_id: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Abnormal,
    Normal,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Abnormal => "abnormal",
            Label::Normal => "normal",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Abnormal
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abnormal" => Ok(Label::Abnormal),
            "normal" => Ok(Label::Normal),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Front,
    Back,
    Side,
    Mixed,
}

impl FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "front" => Ok(View::Front),
            "back" => Ok(View::Back),
            "side" => Ok(View::Side),
            "mixed" => Ok(View::Mixed),
            other => Err(format!("unknown view {other:?}")),
        }
    }
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Front => "front",
            View::Back => "back",
            View::Side => "side",
            View::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivacyState {
    #[default]
    Raw,
    Masked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioState {
    #[default]
    Present,
    Removed,
}

/// One subject video with its ground-truth label.
///
/// Serialized field names follow the manifest header, so `video_ref` is
/// written as `video_path` and `ground_truth` as `label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    #[serde(rename = "video_path")]
    pub video_ref: String,
    #[serde(rename = "label")]
    pub ground_truth: Label,
    pub age_band: String,
    pub gender: String,
    pub view: View,
    pub duration_s: f64,
    #[serde(default)]
    pub privacy_state: PrivacyState,
    #[serde(default)]
    pub audio_state: AudioState,
    #[serde(default)]
    pub preprocess_done: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub total: usize,
    pub abnormal: usize,
    pub normal: usize,
    pub by_age_band: BTreeMap<String, usize>,
    pub by_gender: BTreeMap<String, usize>,
}

impl CaseSummary {
    pub fn of(cases: &[CaseRecord]) -> Self {
        let mut summary = CaseSummary {
            total: cases.len(),
            ..Default::default()
        };
        for case in cases {
            match case.ground_truth {
                Label::Abnormal => summary.abnormal += 1,
                Label::Normal => summary.normal += 1,
            }
            *summary.by_age_band.entry(case.age_band.clone()).or_default() += 1;
            *summary.by_gender.entry(case.gender.clone()).or_default() += 1;
        }
        summary
    }
}

impl fmt::Display for CaseSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} cases ({} abnormal / {} normal)",
            self.total, self.abnormal, self.normal
        )
    }
}

/// Ordered, validated collection of cases.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSet {
    cases: Vec<CaseRecord>,
    summary: CaseSummary,
}

impl CaseSet {
    pub fn new(cases: Vec<CaseRecord>) -> Result<Self, IngestError> {
        if cases.is_empty() {
            return Err(IngestError::EmptyManifest);
        }
        let mut seen = HashSet::with_capacity(cases.len());
        for (idx, case) in cases.iter().enumerate() {
            if !seen.insert(case.case_id.as_str()) {
                return Err(IngestError::DuplicateCaseId(case.case_id.clone()));
            }
            if case.duration_s <= 0.0 || !case.duration_s.is_finite() {
                return Err(IngestError::Malformed {
                    line: idx + 2,
                    reason: format!("duration_s must be positive, got {}", case.duration_s),
                });
            }
        }
        let summary = CaseSummary::of(&cases);
        Ok(Self { cases, summary })
    }

    pub fn cases(&self) -> &[CaseRecord] {
        &self.cases
    }

    pub fn summary(&self) -> &CaseSummary {
        &self.summary
    }

    pub fn get(&self, case_id: &str) -> Option<&CaseRecord> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn into_cases(self) -> Vec<CaseRecord> {
        self.cases
    }

    /// Replaces a case in place, keeping order. Returns false if unknown.
    pub fn update(&mut self, case: CaseRecord) -> bool {
        match self.cases.iter_mut().find(|c| c.case_id == case.case_id) {
            Some(slot) => {
                *slot = case;
                self.summary = CaseSummary::of(&self.cases);
                true
            }
            None => false,
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), IngestError> {
        for case in &self.cases {
            serde_json::to_writer(&mut out, case)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, IngestError> {
        let mut cases = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let case: CaseRecord =
                serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            cases.push(case);
        }
        Self::new(cases)
    }

    pub fn write_manifest<W: Write>(&self, out: W) -> Result<(), IngestError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(MANIFEST_HEADER)?;
        for case in &self.cases {
            writer.write_record([
                case.case_id.as_str(),
                case.video_ref.as_str(),
                case.ground_truth.as_str(),
                case.age_band.as_str(),
                case.gender.as_str(),
                case.view.as_str(),
                &case.duration_s.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Loads a manifest CSV. Bad rows are rejected, never repaired.
pub fn ingest_manifest(path: &Path) -> Result<CaseSet, IngestError> {
    if !path.is_file() {
        return Err(IngestError::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path)?;
    parse_manifest(&bytes)
}

pub fn parse_manifest(bytes: &[u8]) -> Result<CaseSet, IngestError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(IngestError::EmptyManifest);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = reader.headers()?.clone();
    if header.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(IngestError::BadHeader {
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut cases = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| IngestError::Malformed {
            line,
            reason: e.to_string(),
        })?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let case_id = field(0);
        if case_id.is_empty() {
            return Err(IngestError::Malformed {
                line,
                reason: "empty case_id".into(),
            });
        }
        let ground_truth = field(2)
            .parse::<Label>()
            .map_err(|label| IngestError::UnknownLabel { line, label })?;
        let view = field(5)
            .parse::<View>()
            .map_err(|reason| IngestError::Malformed { line, reason })?;
        let duration_s = field(6)
            .parse::<f64>()
            .map_err(|e| IngestError::Malformed {
                line,
                reason: format!("duration_s: {e}"),
            })?;
        if duration_s <= 0.0 || !duration_s.is_finite() {
            return Err(IngestError::Malformed {
                line,
                reason: format!("duration_s must be positive, got {duration_s}"),
            });
        }
        cases.push(CaseRecord {
            case_id: case_id.to_string(),
            video_ref: field(1).to_string(),
            ground_truth,
            age_band: field(3).to_string(),
            gender: field(4).to_string(),
            view,
            duration_s,
            privacy_state: PrivacyState::Raw,
            audio_state: AudioState::Present,
            preprocess_done: false,
        });
    }
    CaseSet::new(cases)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateFailure {
    FacesUnmasked,
    AudioPresent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision", content = "reasons")]
pub enum GateDecision {
    Pass,
    Fail(Vec<GateFailure>),
}

impl GateDecision {
    pub fn passed(&self) -> bool {
        matches!(self, GateDecision::Pass)
    }
}

/// A case may leave the machine only when faces are masked and the audio
/// track is gone.
pub fn check_privacy_gate(case: &CaseRecord) -> GateDecision {
    let mut reasons = Vec::new();
    if case.privacy_state != PrivacyState::Masked {
        reasons.push(GateFailure::FacesUnmasked);
    }
    if case.audio_state != AudioState::Removed {
        reasons.push(GateFailure::AudioPresent);
    }
    if reasons.is_empty() {
        GateDecision::Pass
    } else {
        GateDecision::Fail(reasons)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CropRegion {
    /// Let the transcoder frame the subject.
    Auto,
    Rect { width: u32, height: u32, x: u32, y: u32 },
}

impl fmt::Display for CropRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CropRegion::Auto => f.write_str("auto"),
            CropRegion::Rect {
                width,
                height,
                x,
                y,
            } => write!(f, "{width}x{height}+{x}+{y}"),
        }
    }
}

impl FromStr for CropRegion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(CropRegion::Auto);
        }
        let bad = || format!("crop must be `auto` or WxH+X+Y, got {s:?}");
        let (size, offset) = s.split_once('+').ok_or_else(bad)?;
        let (w, h) = size.split_once('x').ok_or_else(bad)?;
        let (x, y) = offset.split_once('+').ok_or_else(bad)?;
        let num = |v: &str| v.parse::<u32>().map_err(|_| bad());
        Ok(CropRegion::Rect {
            width: num(w)?,
            height: num(h)?,
            x: num(x)?,
            y: num(y)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "step")]
pub enum PrepStep {
    MaskFaces,
    StripAudio,
    Crop { region: CropRegion },
    Compress { target_kbps: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepConfig {
    /// `None` disables cropping.
    pub crop: Option<CropRegion>,
    /// `None` disables compression.
    pub target_kbps: Option<u32>,
    /// Shell command with `{input}`, `{output}`, `{crop}` and `{target_kbps}`.
    pub exec_template: String,
    pub output_dir: PathBuf,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            crop: Some(CropRegion::Auto),
            target_kbps: Some(800),
            exec_template: String::new(),
            output_dir: PathBuf::from("cases/prepped"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessPlan {
    pub case_id: String,
    pub input: String,
    pub output: String,
    pub steps: Vec<PrepStep>,
    pub exec_template: String,
}

impl PreprocessPlan {
    /// The template with every placeholder substituted and shell-quoted.
    pub fn command_line(&self) -> String {
        let crop = self
            .steps
            .iter()
            .find_map(|s| match s {
                PrepStep::Crop { region } => Some(region.to_string()),
                _ => None,
            })
            .unwrap_or_else(|| "none".to_string());
        let kbps = self
            .steps
            .iter()
            .find_map(|s| match s {
                PrepStep::Compress { target_kbps } => Some(target_kbps.to_string()),
                _ => None,
            })
            .unwrap_or_else(|| "0".to_string());
        self.exec_template
            .replace("{input}", &shell_quote(&self.input))
            .replace("{output}", &shell_quote(&self.output))
            .replace("{crop}", &shell_quote(&crop))
            .replace("{target_kbps}", &kbps)
    }
}

fn shell_quote(raw: &str) -> String {
    format!("'{}'", raw.replace('\'', r"'\''"))
}

fn is_remote_ref(video_ref: &str) -> bool {
    video_ref.starts_with("http://") || video_ref.starts_with("https://")
}

/// Builds the deterministic preprocessing plan for a case. Masking and audio
/// removal are always present.
pub fn plan_preprocess(case: &CaseRecord, config: &PrepConfig) -> Result<PreprocessPlan, IngestError> {
    let resolvable = !case.video_ref.trim().is_empty()
        && (is_remote_ref(&case.video_ref) || Path::new(&case.video_ref).exists());
    if !resolvable {
        return Err(IngestError::UnresolvableVideoRef {
            case_id: case.case_id.clone(),
            video_ref: case.video_ref.clone(),
        });
    }
    let mut steps = vec![PrepStep::MaskFaces, PrepStep::StripAudio];
    if let Some(region) = config.crop {
        steps.push(PrepStep::Crop { region });
    }
    if let Some(target_kbps) = config.target_kbps {
        steps.push(PrepStep::Compress { target_kbps });
    }
    let output = config
        .output_dir
        .join(format!("{}.mp4", case.case_id))
        .to_string_lossy()
        .into_owned();
    Ok(PreprocessPlan {
        case_id: case.case_id.clone(),
        input: case.video_ref.clone(),
        output,
        steps,
        exec_template: config.exec_template.clone(),
    })
}

/// Runs a plan through `sh -c`. The returned record has its privacy and
/// audio flags flipped and points at the processed file; on failure the
/// input record is left untouched.
pub fn execute_plan(case: &CaseRecord, plan: &PreprocessPlan) -> Result<CaseRecord, IngestError> {
    if plan.exec_template.trim().is_empty() {
        return Err(IngestError::ExecFailed {
            case_id: case.case_id.clone(),
            reason: "no exec template configured".into(),
        });
    }
    if let Some(parent) = Path::new(&plan.output).parent() {
        std::fs::create_dir_all(parent)?;
    }
    let status = Command::new("sh")
        .arg("-c")
        .arg(plan.command_line())
        .status()
        .map_err(|e| IngestError::ExecFailed {
            case_id: case.case_id.clone(),
            reason: e.to_string(),
        })?;
    if !status.success() {
        return Err(IngestError::ExecFailed {
            case_id: case.case_id.clone(),
            reason: format!("exit status {status}"),
        });
    }
    Ok(CaseRecord {
        video_ref: plan.output.clone(),
        privacy_state: PrivacyState::Masked,
        audio_state: AudioState::Removed,
        preprocess_done: true,
        ..case.clone()
    })
}

/// Plans and executes preprocessing for every case with at most
/// `concurrency` commands in flight. Output order follows input order.
pub fn preprocess_all(
    cases: &[CaseRecord],
    config: &PrepConfig,
    concurrency: usize,
) -> Vec<Result<CaseRecord, IngestError>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<CaseRecord, IngestError>>>> =
        Mutex::new((0..cases.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..concurrency.clamp(1, cases.len().max(1)) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                let Some(case) = cases.get(idx) else { break };
                let outcome =
                    plan_preprocess(case, config).and_then(|plan| execute_plan(case, &plan));
                slots.lock().expect("slot lock poisoned")[idx] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("slot lock poisoned")
        .into_iter()
        .map(|slot| slot.expect("every case visited"))
        .collect()
}

/// Timestamps at the midpoints of `n` equal windows over the clip.
pub fn sample_frames(duration_s: f64, n: usize) -> Result<Vec<f64>, IngestError> {
    if n == 0 {
        return Err(IngestError::InvalidFrameCount);
    }
    if duration_s <= 0.0 || !duration_s.is_finite() {
        return Err(IngestError::InvalidDuration(duration_s));
    }
    let window = duration_s / n as f64;
    Ok((0..n).map(|k| (k as f64 + 0.5) * window).collect())
}
