//! Canonical transcript layout: three sentinel sections with one line per
//! movement observation and per judgment.

use std::fmt::Write as _;

use super::types::{
    FinalVerdict, MotionObservation, MovementJudgment, ObservedKind, ObservedSide, Smoothness,
    SymmetryNote,
};
use crate::prompt::Reach;

pub const MOVEMENTS_HEADER: &str = "== MOVEMENTS ==";
pub const JUDGMENTS_HEADER: &str = "== JUDGMENTS ==";
pub const FINAL_HEADER: &str = "== FINAL ==";

fn kind_phrase(kind: ObservedKind) -> &'static str {
    match kind {
        ObservedKind::Known(k) => k.phrase(),
        ObservedKind::Unknown => "unrecognized movement",
    }
}

fn side_phrase(side: ObservedSide) -> &'static str {
    match side {
        ObservedSide::Left => "left",
        ObservedSide::Right => "right",
        ObservedSide::Bilateral => "both sides",
        ObservedSide::Unspecified => "side not stated",
    }
}

pub fn observation_line(obs: &MotionObservation) -> String {
    if obs.kind == ObservedKind::Unknown && !obs.text.is_empty() {
        return format!("- {}", obs.text);
    }
    let reach = match obs.reach {
        Some(Reach::At(l)) => format!("reaches {}", l.phrase()),
        Some(Reach::Unreachable) => "cannot reach the target".to_string(),
        None => "reach not visible".to_string(),
    };
    let symmetry = match obs.symmetry_note {
        SymmetryNote::Symmetric => "symmetric",
        SymmetryNote::AffectedLower => "affected side lower",
        SymmetryNote::NotApplicable => "healthy side",
    };
    let compensation = if obs.compensation.is_empty() {
        "none".to_string()
    } else {
        obs.compensation.iter().cloned().collect::<Vec<_>>().join(", ")
    };
    let smoothness = match obs.smoothness {
        Smoothness::Smooth => "smooth",
        Smoothness::Jerky => "jerky",
        Smoothness::NotApplicable => "pace not visible",
    };
    format!(
        "- {}, {}: {reach}; {symmetry}; compensation: {compensation}; {smoothness}",
        kind_phrase(obs.kind),
        side_phrase(obs.side),
    )
}

pub fn judgment_line(judgment: &MovementJudgment) -> String {
    format!(
        "- {}: {}. Evidence: {}",
        kind_phrase(judgment.kind),
        judgment.verdict.as_str(),
        judgment.evidence
    )
}

pub fn render_movements(out: &mut String, observations: &[MotionObservation]) {
    let _ = writeln!(out, "{MOVEMENTS_HEADER}");
    for obs in observations {
        let _ = writeln!(out, "{}", observation_line(obs));
    }
}

/// Renders a full three-section transcript. `final_verdict = Invalid`
/// leaves the final section empty.
pub fn render_sections(
    preamble: &str,
    observations: &[MotionObservation],
    judgments: &[MovementJudgment],
    final_verdict: FinalVerdict,
) -> String {
    let mut out = String::new();
    if !preamble.is_empty() {
        let _ = writeln!(out, "{preamble}");
    }
    render_movements(&mut out, observations);
    let _ = writeln!(out, "{JUDGMENTS_HEADER}");
    for judgment in judgments {
        let _ = writeln!(out, "{}", judgment_line(judgment));
    }
    let _ = writeln!(out, "{FINAL_HEADER}");
    match final_verdict {
        FinalVerdict::Positive => out.push_str("POSITIVE\n"),
        FinalVerdict::Negative => out.push_str("NEGATIVE\n"),
        FinalVerdict::Invalid => {}
    }
    out
}

/// Text of one section (lines between its header and the next header).
pub fn section<'a>(raw: &'a str, header: &str) -> Option<Vec<&'a str>> {
    let mut lines = raw.lines();
    lines.by_ref().find(|l| l.trim() == header)?;
    Some(
        lines
            .take_while(|l| {
                let t = l.trim();
                t != MOVEMENTS_HEADER && t != JUDGMENTS_HEADER && t != FINAL_HEADER
            })
            .collect(),
    )
}
