use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::PromptText;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LintRule {
    /// A number attached to a degree word or symbol.
    NumericAngle,
    /// A number attached to a length unit.
    AbsoluteMeasurement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintViolation {
    pub rule: LintRule,
    pub start: usize,
    pub end: usize,
    pub excerpt: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintReport {
    pub violations: Vec<LintViolation>,
}

impl LintReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn angle_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b\d+(?:[.,]\d+)?\s*(?:°|º|degrees?\b|degs?\b)").expect("valid regex")
    })
}

fn length_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\b\d+(?:[.,]\d+)?\s*(?:cm|mm|m|centimet(?:er|re)s?|millimet(?:er|re)s?|met(?:er|re)s?|inch(?:es)?|feet|foot|ft)\b",
        )
        .expect("valid regex")
    })
}

/// Flags numeric angle phrasing and absolute height measurements.
pub fn lint_prompt(text: &PromptText) -> LintReport {
    lint_body(&text.body)
}

pub fn lint_body(body: &str) -> LintReport {
    let mut violations: Vec<LintViolation> = [
        (LintRule::NumericAngle, angle_pattern()),
        (LintRule::AbsoluteMeasurement, length_pattern()),
    ]
    .into_iter()
    .flat_map(|(rule, re)| {
        re.find_iter(body).map(move |m| LintViolation {
            rule,
            start: m.start(),
            end: m.end(),
            excerpt: m.as_str().to_string(),
        })
    })
    .collect();
    violations.sort_by_key(|v| (v.start, v.end));
    LintReport { violations }
}
