//! Tolerant transcript parser. Never fails: every transcript yields a
//! `DiagnosisOutput` plus diagnostics describing what could not be read.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use super::transcript::{section, FINAL_HEADER, JUDGMENTS_HEADER, MOVEMENTS_HEADER};
use super::types::{
    DiagnosisOutput, FinalVerdict, Framework, MotionObservation, MovementJudgment, ObservedKind,
    ObservedSide, ParseDiagnostic, Smoothness, SymmetryNote, Verdict,
};
use crate::prompt::{Landmark, MovementKind, Reach, RuleSet};

struct Vocabulary {
    movements: Vec<(MovementKind, Regex)>,
    landmark: Regex,
    compound: Regex,
    motion_word: Regex,
    verdict: Regex,
    left: Regex,
    right: Regex,
    bilateral: Regex,
}

fn vocabulary() -> &'static Vocabulary {
    static VOCAB: OnceLock<Vocabulary> = OnceLock::new();
    VOCAB.get_or_init(|| {
        let re = |p: &str| Regex::new(&format!("(?i){p}")).expect("valid regex");
        Vocabulary {
            movements: vec![
                (
                    MovementKind::ForwardElevation,
                    re(r"\bforward (?:elevation|flexion)\b|\bupward lift(?:ing)?\b|\b(?:raising|lifting|raises|lifts) (?:the |both |his |her |their )?arms?\b|\belevation\b"),
                ),
                (
                    MovementKind::HandsOnHead,
                    re(r"\bhands? on (?:the )?head\b|\bhold(?:s|ing)? (?:the )?head\b|\bhands? behind (?:the )?head\b"),
                ),
                (
                    MovementKind::HandBehindBack,
                    re(r"\bhands? behind (?:the )?back\b|\btouch(?:es|ing)? the back\b|\breach(?:es|ing)? behind (?:the )?back\b|\bbehind-the-back\b"),
                ),
                (MovementKind::ExternalRotation, re(r"\bexternal rotation\b")),
                (MovementKind::Abduction, re(r"\babduction\b")),
                (MovementKind::InternalRotation, re(r"\binternal rotation\b")),
            ],
            // Alternatives are ordered so that longer phrases win at the same position.
            landmark: re(concat!(
                r"(?P<unreachable>\bcannot reach\b|\bcan't reach\b|\bunable to reach\b|\bdoes not reach\b|\bfails to reach\b|\bunreachable\b)",
                r"|(?P<above_head>\babove (?:the )?head\b|\boverhead\b|\bover the head\b|\bhigher than the top of the head\b)",
                r"|(?P<top_of_head>\btop of (?:the )?head\b|\bcrown\b)",
                r"|(?P<earlobe>\bearlobes?\b|\bear level\b)",
                r"|(?P<acromion>\bacromion\b|\bshoulder (?:level|height)\b|\bhorizontal\b)",
                r"|(?P<chest>\bchest\b|\bshoulder blades?\b|\bscapulae?\b)",
                r"|(?P<waist_iliac_crest>\bwaist\b|\biliac crest\b|\blower back\b|\blumbar\b)",
                r"|(?P<buttock>\bbuttocks?\b|\bgluteal\b)",
                r"|(?P<thigh>\bthighs?\b)",
            )),
            compound: re(r"\bcircular\b|\bcircles?\b|\bswings?\b|\bswinging\b|\bwindmill\b|\band then\b|\bfollowed by\b"),
            motion_word: re(r"\bmotions?\b|\bmovements?\b|\bswings?\b|\bcircular\b|\blift\w*\b|\braise\w*\b|\breach\w*\b"),
            verdict: re(r"\b(?P<limited>limited|restricted|reduced|impaired)\b|\b(?P<normal>normal|full|unrestricted|intact)\b|\b(?P<indeterminate>indeterminate|not assessed|unclear|cannot be judged)\b"),
            left: re(r"\bleft\b"),
            right: re(r"\bright\b"),
            bilateral: re(r"\bboth\b|\bbilateral(?:ly)?\b"),
        }
    })
}

/// Splits a line into the part naming the movement and the part describing
/// it, at the first colon.
fn split_line(line: &str) -> (&str, Option<&str>) {
    match line.split_once(':') {
        Some((head, tail)) => (head, Some(tail)),
        None => (line, None),
    }
}

fn strip_bullet(line: &str) -> &str {
    let t = line.trim();
    let t = t.trim_start_matches(['-', '*', '•']).trim_start();
    // "1." / "2)" numbering
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 && matches!(t.as_bytes().get(digits), Some(b'.') | Some(b')')) {
        t[digits + 1..].trim_start()
    } else {
        t
    }
}

fn kinds_in(text: &str) -> Vec<MovementKind> {
    vocabulary()
        .movements
        .iter()
        .filter(|(_, re)| re.is_match(text))
        .map(|(k, _)| *k)
        .collect()
}

fn remove_movement_phrases(text: &str) -> String {
    vocabulary()
        .movements
        .iter()
        .fold(text.to_string(), |acc, (_, re)| re.replace_all(&acc, " ").into_owned())
}

fn find_reach(text: &str) -> Option<Reach> {
    let caps = vocabulary().landmark.captures(text)?;
    if caps.name("unreachable").is_some() {
        return Some(Reach::Unreachable);
    }
    Landmark::LADDER
        .into_iter()
        .find(|l| caps.name(l.as_str()).is_some())
        .map(Reach::At)
}

fn find_side(text: &str) -> ObservedSide {
    let v = vocabulary();
    let left = v.left.is_match(text);
    let right = v.right.is_match(text);
    match (left, right) {
        (true, true) => ObservedSide::Bilateral,
        (true, false) => ObservedSide::Left,
        (false, true) => ObservedSide::Right,
        (false, false) if v.bilateral.is_match(text) => ObservedSide::Bilateral,
        _ => ObservedSide::Unspecified,
    }
}

fn find_symmetry(text: &str) -> SymmetryNote {
    let lower = text.to_lowercase();
    if lower.contains("affected side lower")
        || lower.contains("lower than the")
        || lower.contains("smaller than the")
        || lower.contains("asymmetr")
    {
        SymmetryNote::AffectedLower
    } else if lower.contains("symmetric") || lower.contains("equal on both sides") {
        SymmetryNote::Symmetric
    } else {
        SymmetryNote::NotApplicable
    }
}

fn find_compensation(text: &str, rules: &RuleSet) -> BTreeSet<String> {
    let lower = text.to_lowercase();
    rules
        .compensation_signs
        .iter()
        .filter(|sign| {
            let sign_lower = sign.to_lowercase();
            if lower.contains(&sign_lower) {
                return true;
            }
            // "shoulder shrugging" also matches "shrugs"
            sign_lower
                .split_whitespace()
                .last()
                .map(|w| w.trim_end_matches("ing"))
                .filter(|stem| stem.len() >= 4)
                .is_some_and(|stem| lower.contains(stem))
        })
        .cloned()
        .collect()
}

fn find_smoothness(text: &str) -> Smoothness {
    let lower = text.to_lowercase();
    if lower.contains("jerky") || lower.contains("jerk") || lower.contains("halting") {
        Smoothness::Jerky
    } else if lower.contains("smooth") {
        Smoothness::Smooth
    } else {
        Smoothness::NotApplicable
    }
}

fn verdict_class(caps: &regex::Captures<'_>) -> Verdict {
    if caps.name("limited").is_some() {
        Verdict::Limited
    } else if caps.name("normal").is_some() {
        Verdict::Normal
    } else {
        Verdict::Indeterminate
    }
}

/// Leading verdict word wins; otherwise exactly one verdict class must
/// appear anywhere in the text.
fn read_verdict(tail: &str) -> Option<Verdict> {
    let re = &vocabulary().verdict;
    let trimmed = tail.trim_start();
    // A verdict word standing alone at the start ("limited. Evidence: ...")
    // decides even if the evidence mentions other verdict words.
    if let Some(caps) = re.captures(trimmed) {
        let standalone = caps.get(0).is_some_and(|m| {
            m.start() == 0
                && trimmed[m.end()..]
                    .chars()
                    .next()
                    .is_none_or(|c| matches!(c, '.' | ',' | ';' | ':'))
        });
        if standalone {
            return Some(verdict_class(&caps));
        }
    }
    let classes: BTreeSet<_> = re
        .captures_iter(trimmed)
        .map(|c| verdict_class(&c) as u8)
        .collect();
    if classes.len() == 1 {
        re.captures(trimmed).map(|c| verdict_class(&c))
    } else {
        None
    }
}

fn has_verdict_word(text: &str) -> bool {
    vocabulary().verdict.is_match(text)
}

fn parse_observation(
    line: &str,
    rules: &RuleSet,
    diagnostics: &mut Vec<ParseDiagnostic>,
) -> MotionObservation {
    let (head, tail) = split_line(line);
    let mut kinds = kinds_in(head);
    if kinds.is_empty() && tail.is_some() {
        kinds = kinds_in(line);
    }
    let kind = match kinds.as_slice() {
        [single] => ObservedKind::Known(*single),
        [] => {
            if vocabulary().compound.is_match(line) {
                diagnostics.push(ParseDiagnostic::CompoundActionUnsplit(line.to_string()));
            } else {
                diagnostics.push(ParseDiagnostic::UnknownMovement(line.to_string()));
            }
            ObservedKind::Unknown
        }
        _ => {
            diagnostics.push(ParseDiagnostic::CompoundActionUnsplit(line.to_string()));
            ObservedKind::Unknown
        }
    };
    let described = match tail {
        Some(tail) => tail.to_string(),
        None => remove_movement_phrases(line),
    };
    let side = match tail {
        None => find_side(line),
        Some(tail) => match find_side(head) {
            ObservedSide::Unspecified => find_side(tail),
            side => side,
        },
    };
    MotionObservation {
        kind,
        side,
        reach: find_reach(&described),
        symmetry_note: find_symmetry(&described),
        compensation: find_compensation(&described, rules),
        smoothness: find_smoothness(&described),
        text: if kind == ObservedKind::Unknown {
            line.to_string()
        } else {
            String::new()
        },
    }
}

fn parse_judgment(line: &str, diagnostics: &mut Vec<ParseDiagnostic>) -> MovementJudgment {
    let (head, tail) = split_line(line);
    let tail = tail.unwrap_or(line);
    let kinds = kinds_in(head);
    let kind = match kinds.as_slice() {
        [single] => ObservedKind::Known(*single),
        [] => {
            diagnostics.push(ParseDiagnostic::UnknownMovement(line.to_string()));
            ObservedKind::Unknown
        }
        _ => {
            diagnostics.push(ParseDiagnostic::CompoundActionUnsplit(line.to_string()));
            ObservedKind::Unknown
        }
    };
    let verdict = match read_verdict(tail) {
        Some(v) => v,
        None => {
            diagnostics.push(ParseDiagnostic::AmbiguousVerdict(line.to_string()));
            Verdict::Indeterminate
        }
    };
    let evidence = match tail.split_once("Evidence:") {
        Some((_, ev)) => ev.trim().to_string(),
        None => tail.trim().to_string(),
    };
    let evidence = if evidence.is_empty() && verdict != Verdict::Indeterminate {
        line.to_string()
    } else {
        evidence
    };
    MovementJudgment {
        kind,
        verdict,
        evidence,
    }
}

fn content_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> impl Iterator<Item = &'a str> {
    lines
        .into_iter()
        .map(strip_bullet)
        .filter(|l| !l.is_empty())
}

fn read_final(lines: &[&str], diagnostics: &mut Vec<ParseDiagnostic>) -> FinalVerdict {
    let Some(first) = content_lines(lines.iter().copied()).next() else {
        diagnostics.push(ParseDiagnostic::AmbiguousVerdict("empty final section".into()));
        return FinalVerdict::Invalid;
    };
    let upper = first.to_uppercase();
    if upper.starts_with("POSITIVE") {
        FinalVerdict::Positive
    } else if upper.starts_with("NEGATIVE") {
        FinalVerdict::Negative
    } else {
        diagnostics.push(ParseDiagnostic::AmbiguousVerdict(first.to_string()));
        FinalVerdict::Invalid
    }
}

/// Lines outside any section that look like they describe a movement.
fn looks_like_movement(line: &str) -> bool {
    !kinds_in(line).is_empty()
        || find_reach(line).is_some()
        || vocabulary().motion_word.is_match(line)
}

pub fn parse_output(raw: &str, rules: &RuleSet, framework: Framework) -> DiagnosisOutput {
    let mut diagnostics = Vec::new();
    let movements = section(raw, MOVEMENTS_HEADER);
    let judgments = section(raw, JUDGMENTS_HEADER);
    let final_lines = section(raw, FINAL_HEADER);

    let mut observations = Vec::new();
    let mut parsed_judgments = Vec::new();
    match (&movements, &judgments) {
        (None, None) => {
            diagnostics.push(ParseDiagnostic::MissingSection(MOVEMENTS_HEADER.into()));
            diagnostics.push(ParseDiagnostic::MissingSection(JUDGMENTS_HEADER.into()));
            // Free-form output: classify every line on its own.
            let before_final = raw
                .lines()
                .take_while(|l| l.trim() != FINAL_HEADER);
            for line in content_lines(before_final) {
                let known = kinds_in(split_line(line).0);
                if has_verdict_word(line) && !known.is_empty() {
                    parsed_judgments.push(parse_judgment(line, &mut diagnostics));
                } else if looks_like_movement(line) {
                    observations.push(parse_observation(line, rules, &mut diagnostics));
                }
            }
        }
        _ => {
            match &movements {
                Some(lines) => {
                    for line in content_lines(lines.iter().copied()) {
                        observations.push(parse_observation(line, rules, &mut diagnostics));
                    }
                }
                None => diagnostics.push(ParseDiagnostic::MissingSection(MOVEMENTS_HEADER.into())),
            }
            match &judgments {
                Some(lines) => {
                    for line in content_lines(lines.iter().copied()) {
                        parsed_judgments.push(parse_judgment(line, &mut diagnostics));
                    }
                }
                None => diagnostics.push(ParseDiagnostic::MissingSection(JUDGMENTS_HEADER.into())),
            }
        }
    }

    let final_verdict = match &final_lines {
        Some(lines) => read_final(lines, &mut diagnostics),
        None => {
            diagnostics.push(ParseDiagnostic::MissingSection(FINAL_HEADER.into()));
            FinalVerdict::Invalid
        }
    };

    DiagnosisOutput {
        framework,
        observations,
        judgments: parsed_judgments,
        final_verdict,
        raw: raw.to_string(),
        intermediate_description: None,
        diagnostics,
    }
}

/// Parses only the movement observations of a description transcript.
pub fn parse_description(raw: &str, rules: &RuleSet) -> (Vec<MotionObservation>, Vec<ParseDiagnostic>) {
    let mut diagnostics = Vec::new();
    let observations = match section(raw, MOVEMENTS_HEADER) {
        Some(lines) => content_lines(lines)
            .map(|l| parse_observation(l, rules, &mut diagnostics))
            .collect(),
        None => {
            diagnostics.push(ParseDiagnostic::MissingSection(MOVEMENTS_HEADER.into()));
            content_lines(raw.lines())
                .filter(|l| looks_like_movement(l))
                .map(|l| parse_observation(l, rules, &mut diagnostics))
                .collect()
        }
    };
    (observations, diagnostics)
}
