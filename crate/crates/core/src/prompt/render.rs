use std::fmt::Write as _;

use super::ladder::Landmark;
use super::rules::{MovementRule, RuleSet};
use super::{PromptKind, PromptText};
use crate::pipelines::transcript::{FINAL_HEADER, JUDGMENTS_HEADER, MOVEMENTS_HEADER};

pub const RULES_BEGIN: &str = "### BEGIN DIAGNOSTIC RULES";
pub const RULES_END: &str = "### END DIAGNOSTIC RULES";

/// The five recognition dimensions as they appear in the movement prompt.
pub const DIMENSION_CHAIN: &str =
    "movement recognition → spatial trajectory → symmetry comparison → compensation feature → smoothness";

pub fn render_prompt(kind: PromptKind, rules: &RuleSet) -> PromptText {
    let body = match kind {
        PromptKind::A => render_a(rules),
        PromptKind::B => render_b(rules),
        PromptKind::C => render_c(rules),
    };
    PromptText::new(kind, body, rules.version.clone())
}

/// The diagnostic rules section shared verbatim by prompts A and C,
/// markers included.
pub fn rules_block(rules: &RuleSet) -> String {
    let mut out = format!("{RULES_BEGIN} (rule set {})\n", rules.version);
    for (idx, rule) in rules.movements.iter().enumerate() {
        render_rule(&mut out, idx + 1, rule);
    }
    out.push_str(RULES_END);
    out.push('\n');
    out
}

/// Extracts the rules block from a rendered prompt body.
pub fn extract_rules_block(body: &str) -> Option<&str> {
    let start = body.find(RULES_BEGIN)?;
    let end = body[start..].find(RULES_END)? + start + RULES_END.len();
    // include the trailing newline written by `rules_block`
    let end = if body[end..].starts_with('\n') { end + 1 } else { end };
    Some(&body[start..end])
}

fn capitalized(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn render_rule(out: &mut String, number: usize, rule: &MovementRule) {
    let screen = rule.kind.screening_action();
    let observed = if screen != rule.kind {
        format!(" (observed through the {} action)", screen.phrase())
    } else {
        String::new()
    };
    let _ = write!(
        out,
        "{number}. {}{observed}: normal when the hand reaches {}. Limited when the hand stops at or below {}.",
        capitalized(rule.kind.phrase()),
        rule.normal_reach.phrase(),
        rule.limited_if_at_or_below.phrase(),
    );
    if rule.bilateral_compare {
        out.push_str(
            " Compare the left and right sides; a side that stops at least one landmark lower than the other side is limited.",
        );
    }
    out.push('\n');
    if rule.requires_cross_validation {
        out.push_str(
            "   Cross-validation: confirm this movement in a second repetition or from a second viewpoint before judging it; never rely on a single observation.\n",
        );
    }
}

fn landmark_reference(out: &mut String) {
    out.push_str("Reference landmarks, from highest to lowest:\n");
    for landmark in Landmark::LADDER {
        let _ = writeln!(out, "- {}", landmark.phrase());
    }
}

fn output_format(out: &mut String, with_judgment: bool) {
    out.push_str("# Output format\n");
    out.push_str("Answer with these sections, each header on its own line:\n");
    let _ = writeln!(out, "{MOVEMENTS_HEADER}");
    out.push_str(
        "One line per movement and side: `- <movement>, <left|right>: reaches <landmark>; <symmetric|affected side lower>; compensation: <signs or none>; <smooth|jerky>`\n",
    );
    if with_judgment {
        let _ = writeln!(out, "{JUDGMENTS_HEADER}");
        out.push_str(
            "One line per movement: `- <movement>: <limited|normal|indeterminate>. Evidence: <what you saw>`\n",
        );
        let _ = writeln!(out, "{FINAL_HEADER}");
        out.push_str("A single line: POSITIVE if any movement is limited, otherwise NEGATIVE.\n");
    }
}

fn render_a(rules: &RuleSet) -> String {
    let mut out = String::new();
    out.push_str("# Role\n");
    out.push_str(
        "You are an orthopedic expert who screens patients for shoulder disorders from video. Judge only what the patient does on camera.\n\n",
    );
    out.push_str("# Reasoning path\n");
    out.push_str(
        "Think step by step along a fixed path: recognize → judge → conclude. First recognize every movement the patient performs, then judge each movement against the diagnostic rules, then conclude with a final result.\n\n",
    );
    out.push_str("# Visual analysis\n");
    out.push_str(
        "Watch the video frame by frame and track the trajectory of each hand from start to end of every movement. Confirm which person is being assessed and ignore other people, camera shake and background noise.\n\n",
    );
    out.push_str("# Three-plane coverage\n");
    out.push_str(
        "Cover the key movement planes of the shoulder: the sagittal plane (forward elevation), the frontal plane (abduction) and the transverse plane (internal and external rotation). A movement plane that was not shown must be reported as not assessed.\n\n",
    );
    out.push_str("# Position language\n");
    out.push_str(
        "Describe every position relative to body landmarks, for example \"higher than the top of the head\" or \"level with the acromion\". Do not estimate angles or distances as numbers.\n",
    );
    landmark_reference(&mut out);
    out.push('\n');
    out.push_str(&rules_block(rules));
    out.push('\n');
    output_format(&mut out, true);
    out
}

fn render_b(rules: &RuleSet) -> String {
    let mut out = String::new();
    out.push_str("# Role\n");
    out.push_str(
        "You are a sports medicine movement analyst. Describe the sequence of movements the patient performs in the video using sports medicine terms. Do not diagnose.\n\n",
    );
    out.push_str("# Recognition dimensions\n");
    let _ = writeln!(out, "Analyse every movement along this chain: {DIMENSION_CHAIN}.");
    out.push_str(
        "Name the movement, follow the spatial trajectory of the hand, compare the left and right sides, note any compensation, and state whether the motion is smooth or jerky.\n\n",
    );
    out.push_str("# Reference frame\n");
    out.push_str(
        "Use bony landmarks such as the earlobe, the acromion and the iliac crest as a moving reference system and describe the highest point each hand reaches relative to them.\n",
    );
    landmark_reference(&mut out);
    out.push('\n');
    out.push_str("# Compensation signs\n");
    let _ = writeln!(
        out,
        "Report any of these whenever they appear: {}.",
        rules.compensation_signs.join(", ")
    );
    out.push('\n');
    output_format(&mut out, false);
    out
}

fn render_c(rules: &RuleSet) -> String {
    let mut out = String::new();
    out.push_str("# Role\n");
    out.push_str(
        "You are an orthopedic reasoning assistant. You receive a written description of a patient's shoulder movements and judge it against the diagnostic rules; you never see the video.\n\n",
    );
    out.push_str("# Reasoning path\n");
    out.push_str(
        "First summarize which rule-based movements the description contains, then judge each one from how completely it was performed, then conclude with a final result.\n\n",
    );
    out.push_str(&rules_block(rules));
    out.push('\n');
    out.push_str("# Abnormal signs\n");
    let _ = writeln!(
        out,
        "Abnormal signs such as {} are part of the diagnosis: treat them as evidence of a possible movement limitation and mention them in the evidence of the movement where they appear.",
        rules.compensation_signs.join(" or ")
    );
    out.push('\n');
    output_format(&mut out, true);
    out
}
