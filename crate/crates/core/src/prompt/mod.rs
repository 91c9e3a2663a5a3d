//! Rule sets, the landmark ladder, and compilation of the three prompts:
//! A (video diagnosis), B (movement description) and C (text judgment).

mod ladder;
mod lint;
mod render;
mod rules;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use ladder::{Landmark, Reach};
pub use lint::{lint_body, lint_prompt, LintReport, LintRule, LintViolation};
pub use render::{extract_rules_block, render_prompt, rules_block, DIMENSION_CHAIN, RULES_BEGIN, RULES_END};
pub use rules::{
    load_rule_set, MovementKind, MovementRule, RuleSet, Side, DEFAULT_RULES_JSON, DIMENSIONS,
};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("rule file: {0}")]
    Parse(String),
    #[error("unknown landmark {0:?}")]
    UnknownLandmark(String),
    #[error("{kind}: normal reach {normal_reach} is not above the limited threshold {limited_if_at_or_below}")]
    InvertedThreshold {
        kind: MovementKind,
        normal_reach: Landmark,
        limited_if_at_or_below: Landmark,
    },
    #[error("unknown prompt kind {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptKind {
    /// Video understanding and diagnosis in one call.
    A,
    /// Movement description only.
    B,
    /// Judgment over a text description.
    C,
}

impl FromStr for PromptKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(PromptKind::A),
            "B" | "b" => Ok(PromptKind::B),
            "C" | "c" => Ok(PromptKind::C),
            other => Err(PromptError::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PromptKind::A => "A",
            PromptKind::B => "B",
            PromptKind::C => "C",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub kind: PromptKind,
    pub body: String,
    pub rule_set_version: String,
    /// Hex SHA-256 of `body`.
    pub checksum: String,
}

impl PromptText {
    pub fn new(kind: PromptKind, body: String, rule_set_version: String) -> Self {
        let checksum = checksum(&body);
        Self {
            kind,
            body,
            rule_set_version,
            checksum,
        }
    }

    pub fn checksum_matches(&self) -> bool {
        checksum(&self.body) == self.checksum
    }
}

fn checksum(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

/// Renders prompt A, B or C by name.
pub fn render_prompt_named(kind: &str, rules: &RuleSet) -> Result<PromptText, PromptError> {
    Ok(render_prompt(kind.parse()?, rules))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prompt_a_structure() {
        let rules = RuleSet::default_rules();
        let a = render_prompt(PromptKind::A, &rules);
        assert!(a.body.contains("frame by frame"));
        assert!(a.body.contains("orthopedic expert"));
        assert!(a.body.contains("recognize → judge → conclude"));
        assert!(a.body.contains("sagittal") && a.body.contains("frontal") && a.body.contains("transverse"));
        let cross_checks = a.body.matches("Cross-validation:").count();
        let required = rules.movements.iter().filter(|r| r.requires_cross_validation).count();
        assert_eq!(cross_checks, required);
        assert!(a.checksum_matches());
        assert_eq!(a.rule_set_version, rules.version);
    }

    #[test]
    fn prompt_b_structure() {
        let b = render_prompt(PromptKind::B, &RuleSet::default_rules());
        assert!(b.body.contains(DIMENSION_CHAIN));
        for landmark in ["earlobe", "acromion", "iliac crest"] {
            assert!(b.body.contains(landmark), "missing {landmark}");
        }
        assert!(extract_rules_block(&b.body).is_none());
    }

    #[test]
    fn prompt_c_shares_rules_with_a() {
        let rules = RuleSet::default_rules();
        let a = render_prompt(PromptKind::A, &rules);
        let c = render_prompt(PromptKind::C, &rules);
        assert_eq!(
            extract_rules_block(&a.body).unwrap().as_bytes(),
            extract_rules_block(&c.body).unwrap().as_bytes()
        );
        assert_eq!(extract_rules_block(&a.body).unwrap(), rules_block(&rules));
        assert!(c.body.contains("shoulder shrugging or trembling"));
    }

    #[test]
    fn shipped_prompts_pass_lint() {
        let rules = RuleSet::default_rules();
        for kind in [PromptKind::A, PromptKind::B, PromptKind::C] {
            let report = lint_prompt(&render_prompt(kind, &rules));
            assert!(report.passed(), "{kind}: {:?}", report.violations);
        }
    }

    #[test]
    fn unknown_kind() {
        assert!(matches!(
            render_prompt_named("D", &RuleSet::default_rules()),
            Err(PromptError::UnknownKind(_))
        ));
    }

    fn arb_rule_set() -> impl Strategy<Value = RuleSet> {
        let rule = (0usize..6, 0usize..7, 1usize..8, any::<bool>(), any::<bool>()).prop_map(
            |(kind, hi, gap, cv, bi)| {
                let hi = hi.min(6);
                let lo = (hi + gap).min(7);
                MovementRule {
                    kind: MovementKind::ALL[kind],
                    normal_reach: Landmark::LADDER[hi],
                    limited_if_at_or_below: Landmark::LADDER[lo.max(hi + 1)],
                    requires_cross_validation: cv,
                    bilateral_compare: bi,
                }
            },
        );
        (
            "[a-z0-9.-]{1,12}",
            proptest::collection::vec(rule, 1..6),
            proptest::collection::vec("[a-z ]{3,16}", 0..4),
        )
            .prop_map(|(version, mut movements, signs)| {
                movements.sort_by_key(|r| r.kind);
                movements.dedup_by_key(|r| r.kind);
                RuleSet {
                    version,
                    movements,
                    compensation_signs: signs,
                    dimensions: DIMENSIONS.iter().map(|d| d.to_string()).collect(),
                }
            })
    }

    proptest! {
        #[test]
        fn rules_blocks_agree_and_render_is_pure(rules in arb_rule_set()) {
            let a = render_prompt(PromptKind::A, &rules);
            let c = render_prompt(PromptKind::C, &rules);
            prop_assert_eq!(extract_rules_block(&a.body), extract_rules_block(&c.body));
            let again = render_prompt(PromptKind::A, &rules);
            prop_assert_eq!(&a.checksum, &again.checksum);
            // generated rule sets survive a trip through the rule-file format
            let json = serde_json::to_string(&rules).unwrap();
            prop_assert_eq!(RuleSet::from_json(&json).unwrap(), rules);
        }
    }
}
