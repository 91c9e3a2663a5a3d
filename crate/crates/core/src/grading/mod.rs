//! Rubric grades (A = recognition integrity, R = judgment rationality,
//! D = diagnosis correctness) with a blind two-rater workflow.

pub mod api;
mod store;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use api::{ApiItem, ApiResponse, GradingApi};
pub use store::{auto_grade_simulated, GradingStore};

use crate::pipelines::Framework;

/// One rubric value from {0, 0.5, 1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Score {
    Zero,
    Half,
    One,
}

impl Score {
    pub const ALL: [Score; 3] = [Score::Zero, Score::Half, Score::One];
    pub const BINARY: [Score; 2] = [Score::Zero, Score::One];

    pub fn value(self) -> f64 {
        match self {
            Score::Zero => 0.0,
            Score::Half => 0.5,
            Score::One => 1.0,
        }
    }

    pub fn from_value(v: f64) -> Option<Score> {
        Score::ALL.into_iter().find(|s| s.value() == v)
    }

    pub fn binary(flag: bool) -> Score {
        if flag {
            Score::One
        } else {
            Score::Zero
        }
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Score::Zero => s.serialize_u8(0),
            Score::Half => s.serialize_f64(0.5),
            Score::One => s.serialize_u8(1),
        }
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Score::from_value(v).ok_or_else(|| serde::de::Error::custom(format!("invalid score {v}: expected 0, 0.5 or 1")))
    }
}

#[derive(Debug, Error)]
pub enum GradingError {
    #[error("rater {rater_id} already graded {case_id}/{framework}")]
    DuplicateRater {
        case_id: String,
        framework: Framework,
        rater_id: String,
    },
    #[error("no result for {case_id}/{framework}")]
    UnknownCase { case_id: String, framework: Framework },
    #[error("invalid score: {0}")]
    InvalidScore(String),
    #[error("{case_id}/{framework} is {status}, not awaiting adjudication")]
    NotInDisagreement {
        case_id: String,
        framework: Framework,
        status: GradingStatus,
    },
    #[error("adjudication needs at least two participants")]
    TooFewParticipants,
    #[error("{case_id}/{framework} is {status} and accepts no further grades")]
    GradingClosed {
        case_id: String,
        framework: Framework,
        status: GradingStatus,
    },
    #[error("case {0} has no synthetic defect bookkeeping")]
    NotSynthetic(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradingStatus {
    AwaitingFirst,
    AwaitingSecond,
    Agreed,
    NeedsAdjudication,
    Adjudicated,
}

impl GradingStatus {
    pub const ALL: [GradingStatus; 5] = [
        GradingStatus::AwaitingFirst,
        GradingStatus::AwaitingSecond,
        GradingStatus::Agreed,
        GradingStatus::NeedsAdjudication,
        GradingStatus::Adjudicated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GradingStatus::AwaitingFirst => "awaiting_first",
            GradingStatus::AwaitingSecond => "awaiting_second",
            GradingStatus::Agreed => "agreed",
            GradingStatus::NeedsAdjudication => "needs_adjudication",
            GradingStatus::Adjudicated => "adjudicated",
        }
    }

    /// Both independent grades are in, so each rater may see the other's.
    pub fn grades_unsealed(self) -> bool {
        self >= GradingStatus::Agreed
    }

    /// Whether `self → next` is one of the permitted transitions.
    pub fn can_become(self, next: GradingStatus) -> bool {
        use GradingStatus::*;
        matches!(
            (self, next),
            (AwaitingFirst, AwaitingSecond)
                | (AwaitingFirst, Adjudicated)
                | (AwaitingSecond, Agreed)
                | (AwaitingSecond, NeedsAdjudication)
                | (NeedsAdjudication, Adjudicated)
        )
    }
}

impl fmt::Display for GradingStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GradingStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GradingStatus::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown grading status {s:?}"))
    }
}

/// A rubric triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub a: Score,
    pub r: Score,
    pub d: Score,
}

impl Triple {
    pub fn new(a: Score, r: Score, d: Score) -> Self {
        Self { a, r, d }
    }

    pub fn validate(&self) -> Result<(), GradingError> {
        if self.d == Score::Half {
            return Err(GradingError::InvalidScore("D must be 0 or 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradingRecord {
    pub case_id: String,
    pub framework: Framework,
    pub a: Score,
    pub r: Score,
    pub d: Score,
    pub rater_id: String,
    #[serde(default)]
    pub notes: String,
    pub submitted_at: DateTime<Utc>,
}

impl GradingRecord {
    pub fn triple(&self) -> Triple {
        Triple::new(self.a, self.r, self.d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradeSource {
    Agreement,
    Adjudication,
    AutoSimulated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicatedGrade {
    pub case_id: String,
    pub framework: Framework,
    pub a: Score,
    pub r: Score,
    pub d: Score,
    pub source: GradeSource,
    pub participants: Vec<String>,
}

impl AdjudicatedGrade {
    pub fn triple(&self) -> Triple {
        Triple::new(self.a, self.r, self.d)
    }
}

/// One line of the grading event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GradingEvent {
    Grade(GradingRecord),
    Adjudicated(AdjudicatedGrade),
}

impl GradingEvent {
    pub fn key(&self) -> (&str, Framework) {
        match self {
            GradingEvent::Grade(r) => (&r.case_id, r.framework),
            GradingEvent::Adjudicated(g) => (&g.case_id, g.framework),
        }
    }
}
