use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ladder::Landmark;
use super::PromptError;

/// The shipped rule file.
pub const DEFAULT_RULES_JSON: &str = include_str!("../../rules/default.json");

/// The recognition chain every rule set must declare, in order.
pub const DIMENSIONS: [&str; 5] = [
    "movement_recognition",
    "spatial_trajectory",
    "symmetry_comparison",
    "compensation_feature",
    "smoothness",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MovementKind {
    ForwardElevation,
    HandsOnHead,
    HandBehindBack,
    ExternalRotation,
    Abduction,
    InternalRotation,
}

impl MovementKind {
    pub const ALL: [MovementKind; 6] = [
        MovementKind::ForwardElevation,
        MovementKind::HandsOnHead,
        MovementKind::HandBehindBack,
        MovementKind::ExternalRotation,
        MovementKind::Abduction,
        MovementKind::InternalRotation,
    ];

    /// The three actions a subject actually performs on camera.
    pub const PERFORMED: [MovementKind; 3] = [
        MovementKind::ForwardElevation,
        MovementKind::HandsOnHead,
        MovementKind::HandBehindBack,
    ];

    /// The performed action through which this movement is observed.
    /// Abduction and external rotation are screened by holding the head,
    /// internal rotation by reaching behind the back.
    pub fn screening_action(self) -> MovementKind {
        match self {
            MovementKind::ExternalRotation | MovementKind::Abduction => MovementKind::HandsOnHead,
            MovementKind::InternalRotation => MovementKind::HandBehindBack,
            performed => performed,
        }
    }

    pub fn is_performed(self) -> bool {
        self.screening_action() == self
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MovementKind::ForwardElevation => "forward_elevation",
            MovementKind::HandsOnHead => "hands_on_head",
            MovementKind::HandBehindBack => "hand_behind_back",
            MovementKind::ExternalRotation => "external_rotation",
            MovementKind::Abduction => "abduction",
            MovementKind::InternalRotation => "internal_rotation",
        }
    }

    pub fn phrase(self) -> &'static str {
        match self {
            MovementKind::ForwardElevation => "forward elevation",
            MovementKind::HandsOnHead => "hands on head",
            MovementKind::HandBehindBack => "hand behind back",
            MovementKind::ExternalRotation => "external rotation",
            MovementKind::Abduction => "abduction",
            MovementKind::InternalRotation => "internal rotation",
        }
    }
}

impl fmt::Display for MovementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MovementKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MovementKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown movement kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovementRule {
    pub kind: MovementKind,
    pub normal_reach: Landmark,
    pub limited_if_at_or_below: Landmark,
    pub requires_cross_validation: bool,
    pub bilateral_compare: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub version: String,
    pub movements: Vec<MovementRule>,
    pub compensation_signs: Vec<String>,
    pub dimensions: Vec<String>,
}

// Landmarks stay strings here so that an unknown name gets its own error.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    kind: String,
    normal_reach: String,
    limited_if_at_or_below: String,
    requires_cross_validation: bool,
    bilateral_compare: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRuleSet {
    version: String,
    movements: Vec<RawRule>,
    compensation_signs: Vec<String>,
    dimensions: Vec<String>,
}

impl RuleSet {
    pub fn default_rules() -> Self {
        Self::from_json(DEFAULT_RULES_JSON).expect("shipped rule file is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, PromptError> {
        let raw: RawRuleSet =
            serde_json::from_str(text).map_err(|e| PromptError::Parse(e.to_string()))?;
        if raw.version.trim().is_empty() {
            return Err(PromptError::Parse("version must not be empty".into()));
        }
        if raw.movements.is_empty() {
            return Err(PromptError::Parse("movements must not be empty".into()));
        }
        if raw.dimensions.iter().map(String::as_str).ne(DIMENSIONS) {
            return Err(PromptError::Parse(format!(
                "dimensions must be exactly {DIMENSIONS:?}"
            )));
        }
        let landmark = |name: &str| {
            name.parse::<Landmark>()
                .map_err(|_| PromptError::UnknownLandmark(name.to_string()))
        };
        let mut seen = HashSet::new();
        let mut movements = Vec::with_capacity(raw.movements.len());
        for rule in raw.movements {
            let kind = rule.kind.parse::<MovementKind>().map_err(PromptError::Parse)?;
            if !seen.insert(kind) {
                return Err(PromptError::Parse(format!("movement {kind} listed twice")));
            }
            let rule = MovementRule {
                kind,
                normal_reach: landmark(&rule.normal_reach)?,
                limited_if_at_or_below: landmark(&rule.limited_if_at_or_below)?,
                requires_cross_validation: rule.requires_cross_validation,
                bilateral_compare: rule.bilateral_compare,
            };
            if !rule.normal_reach.is_above(rule.limited_if_at_or_below) {
                return Err(PromptError::InvertedThreshold {
                    kind,
                    normal_reach: rule.normal_reach,
                    limited_if_at_or_below: rule.limited_if_at_or_below,
                });
            }
            movements.push(rule);
        }
        Ok(RuleSet {
            version: raw.version,
            movements,
            compensation_signs: raw.compensation_signs,
            dimensions: raw.dimensions,
        })
    }

    pub fn rule(&self, kind: MovementKind) -> Option<&MovementRule> {
        self.movements.iter().find(|r| r.kind == kind)
    }
}

pub fn load_rule_set(path: &Path) -> Result<RuleSet, PromptError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PromptError::Parse(format!("{}: {e}", path.display())))?;
    RuleSet::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_movements(movements: &str) -> String {
        format!(
            r#"{{"version":"t1","movements":{movements},"compensation_signs":[],"dimensions":{}}}"#,
            serde_json::to_string(&DIMENSIONS).unwrap()
        )
    }

    #[test]
    fn default_rule_file() {
        let rules = RuleSet::default_rules();
        assert_eq!(rules.movements.len(), 6);
        assert_eq!(rules.compensation_signs.len(), 2);
        assert_eq!(rules.dimensions, DIMENSIONS);
        for kind in MovementKind::ALL {
            assert!(rules.rule(kind).is_some(), "missing {kind}");
        }
        let behind = rules.rule(MovementKind::HandBehindBack).unwrap();
        assert!(behind.requires_cross_validation);
        // A buttock-level reach behind the back counts as limited.
        assert!(Landmark::Buttock.is_at_or_below(behind.limited_if_at_or_below));
    }

    #[test]
    fn inverted_threshold() {
        let text = with_movements(
            r#"[{"kind":"hand_behind_back","normal_reach":"buttock","limited_if_at_or_below":"top_of_head","requires_cross_validation":true,"bilateral_compare":true}]"#,
        );
        assert!(matches!(
            RuleSet::from_json(&text),
            Err(PromptError::InvertedThreshold { .. })
        ));
        let equal = with_movements(
            r#"[{"kind":"abduction","normal_reach":"chest","limited_if_at_or_below":"chest","requires_cross_validation":false,"bilateral_compare":true}]"#,
        );
        assert!(matches!(
            RuleSet::from_json(&equal),
            Err(PromptError::InvertedThreshold { .. })
        ));
    }

    #[test]
    fn empty_movements_and_unknown_landmark() {
        assert!(matches!(
            RuleSet::from_json(&with_movements("[]")),
            Err(PromptError::Parse(_))
        ));
        let text = with_movements(
            r#"[{"kind":"abduction","normal_reach":"elbow","limited_if_at_or_below":"chest","requires_cross_validation":false,"bilateral_compare":true}]"#,
        );
        match RuleSet::from_json(&text) {
            Err(PromptError::UnknownLandmark(name)) => assert_eq!(name, "elbow"),
            other => panic!("expected unknown landmark, got {other:?}"),
        }
        assert!(matches!(RuleSet::from_json("{"), Err(PromptError::Parse(_))));
    }

    #[test]
    fn dimensions_must_be_the_full_chain() {
        let text = r#"{"version":"t","movements":[{"kind":"abduction","normal_reach":"top_of_head","limited_if_at_or_below":"chest","requires_cross_validation":false,"bilateral_compare":true}],"compensation_signs":[],"dimensions":["smoothness"]}"#;
        assert!(matches!(RuleSet::from_json(text), Err(PromptError::Parse(_))));
    }

    #[test]
    fn screening_actions() {
        for kind in MovementKind::ALL {
            assert!(MovementKind::PERFORMED.contains(&kind.screening_action()));
        }
        assert_eq!(
            MovementKind::InternalRotation.screening_action(),
            MovementKind::HandBehindBack
        );
    }
}
