use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::prompt::{MovementKind, Reach, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framework {
    /// Sampled still frames sent to a multimodal model.
    Baseline,
    /// Direct video diagnosis: one multimodal call per video.
    Dvdx,
    /// Hybrid motion video diagnosis: describe, then judge the description.
    Hmvdx,
}

impl Framework {
    pub const ALL: [Framework; 3] = [Framework::Baseline, Framework::Dvdx, Framework::Hmvdx];

    pub fn as_str(self) -> &'static str {
        match self {
            Framework::Baseline => "baseline",
            Framework::Dvdx => "dvdx",
            Framework::Hmvdx => "hmvdx",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Framework::Baseline => "Baseline",
            Framework::Dvdx => "Direct Video Diagnosis",
            Framework::Hmvdx => "Hybrid Motion Video Diagnosis",
        }
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Framework {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Framework::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown framework {s:?} (expected baseline, dvdx or hmvdx)"))
    }
}

/// A movement as named in a transcript. Anything outside the rule
/// vocabulary is kept as `Unknown`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObservedKind {
    Known(MovementKind),
    Unknown,
}

impl ObservedKind {
    pub fn known(self) -> Option<MovementKind> {
        match self {
            ObservedKind::Known(k) => Some(k),
            ObservedKind::Unknown => None,
        }
    }
}

impl Serialize for ObservedKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ObservedKind::Known(k) => s.serialize_str(k.as_str()),
            ObservedKind::Unknown => s.serialize_str("unknown"),
        }
    }
}

impl<'de> Deserialize<'de> for ObservedKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        if raw == "unknown" {
            return Ok(ObservedKind::Unknown);
        }
        raw.parse()
            .map(ObservedKind::Known)
            .map_err(serde::de::Error::custom)
    }
}

impl From<MovementKind> for ObservedKind {
    fn from(k: MovementKind) -> Self {
        ObservedKind::Known(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedSide {
    Left,
    Right,
    Bilateral,
    Unspecified,
}

impl From<Side> for ObservedSide {
    fn from(side: Side) -> Self {
        match side {
            Side::Left => ObservedSide::Left,
            Side::Right => ObservedSide::Right,
        }
    }
}

impl ObservedSide {
    /// Concrete sides this observation speaks for.
    pub fn sides(self) -> &'static [Side] {
        match self {
            ObservedSide::Left => &[Side::Left],
            ObservedSide::Right => &[Side::Right],
            ObservedSide::Bilateral => &Side::BOTH,
            ObservedSide::Unspecified => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryNote {
    Symmetric,
    AffectedLower,
    #[serde(rename = "n/a")]
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Smooth,
    Jerky,
    #[serde(rename = "n/a")]
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionObservation {
    pub kind: ObservedKind,
    pub side: ObservedSide,
    pub reach: Option<Reach>,
    pub symmetry_note: SymmetryNote,
    pub compensation: BTreeSet<String>,
    pub smoothness: Smoothness,
    /// Source line, kept for unknown movements and grading.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Limited,
    Normal,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Limited => "limited",
            Verdict::Normal => "normal",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovementJudgment {
    pub kind: ObservedKind,
    pub verdict: Verdict,
    pub evidence: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalVerdict {
    Positive,
    Negative,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "diagnostic", content = "detail")]
pub enum ParseDiagnostic {
    MissingSection(String),
    UnknownMovement(String),
    AmbiguousVerdict(String),
    CompoundActionUnsplit(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisOutput {
    pub framework: Framework,
    pub observations: Vec<MotionObservation>,
    pub judgments: Vec<MovementJudgment>,
    #[serde(rename = "final")]
    pub final_verdict: FinalVerdict,
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediate_description: Option<String>,
    #[serde(default)]
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl DiagnosisOutput {
    /// Reach per (performed movement, side). Bilateral observations fill
    /// both sides; the first statement for a slot wins.
    pub fn reach_table(&self) -> BTreeMap<(MovementKind, Side), Reach> {
        let mut table = BTreeMap::new();
        for obs in &self.observations {
            let (Some(kind), Some(reach)) = (obs.kind.known(), obs.reach) else {
                continue;
            };
            for &side in obs.side.sides() {
                table.entry((kind, side)).or_insert(reach);
            }
        }
        table
    }

    pub fn judgment(&self, kind: MovementKind) -> Option<&MovementJudgment> {
        self.judgments
            .iter()
            .find(|j| j.kind == ObservedKind::Known(kind))
    }
}
