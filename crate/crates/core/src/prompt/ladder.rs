use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Body reference points used for relative position descriptions, listed
/// from highest to lowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Landmark {
    AboveHead,
    TopOfHead,
    Earlobe,
    Acromion,
    Chest,
    WaistIliacCrest,
    Buttock,
    Thigh,
}

impl Landmark {
    /// Highest first.
    pub const LADDER: [Landmark; 8] = [
        Landmark::AboveHead,
        Landmark::TopOfHead,
        Landmark::Earlobe,
        Landmark::Acromion,
        Landmark::Chest,
        Landmark::WaistIliacCrest,
        Landmark::Buttock,
        Landmark::Thigh,
    ];

    /// Rung index counted from the bottom: `Thigh` is 0, `AboveHead` is 7.
    pub fn height(self) -> u8 {
        7 - self as u8
    }

    pub fn is_above(self, other: Landmark) -> bool {
        self.height() > other.height()
    }

    pub fn is_at_or_below(self, other: Landmark) -> bool {
        self.height() <= other.height()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Landmark::AboveHead => "above_head",
            Landmark::TopOfHead => "top_of_head",
            Landmark::Earlobe => "earlobe",
            Landmark::Acromion => "acromion",
            Landmark::Chest => "chest",
            Landmark::WaistIliacCrest => "waist_iliac_crest",
            Landmark::Buttock => "buttock",
            Landmark::Thigh => "thigh",
        }
    }

    /// Phrase used in prompts and transcripts, e.g. "the top of the head".
    pub fn phrase(self) -> &'static str {
        match self {
            Landmark::AboveHead => "above the head",
            Landmark::TopOfHead => "the top of the head",
            Landmark::Earlobe => "the earlobe",
            Landmark::Acromion => "the acromion",
            Landmark::Chest => "the chest",
            Landmark::WaistIliacCrest => "the waist (iliac crest)",
            Landmark::Buttock => "the buttock",
            Landmark::Thigh => "the thigh",
        }
    }
}

impl PartialOrd for Landmark {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Ordered by height: `Thigh < ... < AboveHead`.
impl Ord for Landmark {
    fn cmp(&self, other: &Self) -> Ordering {
        self.height().cmp(&other.height())
    }
}

impl fmt::Display for Landmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Landmark {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Landmark::LADDER
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// How far a hand got during a movement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reach {
    At(Landmark),
    Unreachable,
}

impl Serialize for Reach {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Reach::At(l) => s.serialize_str(l.as_str()),
            Reach::Unreachable => s.serialize_str("unreachable"),
        }
    }
}

impl<'de> Deserialize<'de> for Reach {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for Reach {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "unreachable" {
            return Ok(Reach::Unreachable);
        }
        s.parse::<Landmark>()
            .map(Reach::At)
            .map_err(|bad| format!("unknown landmark {bad:?}"))
    }
}

impl Reach {
    pub fn landmark(self) -> Option<Landmark> {
        match self {
            Reach::At(l) => Some(l),
            Reach::Unreachable => None,
        }
    }

    /// Height on the ladder; an unreachable target sits below the lowest rung.
    pub fn height(self) -> i16 {
        match self {
            Reach::At(l) => i16::from(l.height()),
            Reach::Unreachable => -1,
        }
    }

    pub fn is_at_or_below(self, threshold: Landmark) -> bool {
        self.height() <= i16::from(threshold.height())
    }
}

impl From<Landmark> for Reach {
    fn from(l: Landmark) -> Self {
        Reach::At(l)
    }
}

impl fmt::Display for Reach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reach::At(l) => l.fmt(f),
            Reach::Unreachable => f.write_str("unreachable"),
        }
    }
}
