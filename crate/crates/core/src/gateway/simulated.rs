//! Deterministic simulated expert. Descriptions and diagnoses are rendered
//! from a `SyntheticCaseSpec` with the landmark vocabulary of the movement
//! prompt; judgments are derived from whatever the description states.

use std::collections::{BTreeMap, HashMap};

use super::synthetic::{DefectPlan, Pace, SyntheticCase, SyntheticCaseSpec};
use super::{Backend, DiagnoseInput, GatewayError, Transcript};
use crate::ingest::CaseRecord;
use crate::pipelines::parser::parse_description;
use crate::pipelines::transcript::{render_movements, render_sections};
use crate::pipelines::{
    FinalVerdict, MotionObservation, MovementJudgment, ObservedKind, Smoothness,
    SymmetryNote, Verdict,
};
use crate::prompt::{MovementKind, MovementRule, PromptKind, PromptText, Reach, RuleSet, Side};

pub const DESCRIBER_MODEL: &str = "simulated-describer";
pub const JUDGE_MODEL: &str = "simulated-judge";
pub const DIAGNOSER_MODEL: &str = "simulated-diagnoser";

type ReachTable = BTreeMap<(MovementKind, Side), Reach>;

/// Canonical observations for a spec, one line per performed movement and
/// side, leaving out omitted movements.
pub fn observations_for(spec: &SyntheticCaseSpec, omitted: &[MovementKind]) -> Vec<MotionObservation> {
    let mut out = Vec::new();
    for action in MovementKind::PERFORMED {
        if omitted.contains(&action) {
            continue;
        }
        let left = spec.left.reach(action);
        let right = spec.right.reach(action);
        for side in Side::BOTH {
            let (mine, other) = match side {
                Side::Left => (left, right),
                Side::Right => (right, left),
            };
            let symmetry_note = match mine.height().cmp(&other.height()) {
                std::cmp::Ordering::Equal => SymmetryNote::Symmetric,
                std::cmp::Ordering::Less => SymmetryNote::AffectedLower,
                std::cmp::Ordering::Greater => SymmetryNote::NotApplicable,
            };
            let affected = spec.affected_side.includes(side);
            out.push(MotionObservation {
                kind: ObservedKind::Known(action),
                side: side.into(),
                reach: Some(mine),
                symmetry_note,
                compensation: if affected {
                    spec.compensation.clone()
                } else {
                    Default::default()
                },
                smoothness: match (affected, spec.smoothness) {
                    (true, Pace::Jerky) => Smoothness::Jerky,
                    _ => Smoothness::Smooth,
                },
                text: String::new(),
            });
        }
    }
    out
}

fn table_of(observations: &[MotionObservation]) -> ReachTable {
    let mut table = ReachTable::new();
    for obs in observations {
        let (Some(kind), Some(reach)) = (obs.kind.known(), obs.reach) else {
            continue;
        };
        let kind = kind.screening_action();
        for &side in obs.side.sides() {
            table.entry((kind, side)).or_insert(reach);
        }
    }
    table
}

fn reach_phrase(reach: Reach) -> String {
    match reach {
        Reach::At(l) => l.phrase().to_string(),
        Reach::Unreachable => "no reachable target".to_string(),
    }
}

/// Verdict of one rule over the stated reaches, or `None` when the
/// screening action was not described at all.
fn judge_rule(rule: &MovementRule, table: &ReachTable) -> Option<(Verdict, String)> {
    let action = rule.kind.screening_action();
    let left = table.get(&(action, Side::Left)).copied();
    let right = table.get(&(action, Side::Right)).copied();
    if left.is_none() && right.is_none() {
        return None;
    }
    let stated: Vec<(Side, Reach)> = [(Side::Left, left), (Side::Right, right)]
        .into_iter()
        .filter_map(|(s, r)| r.map(|r| (s, r)))
        .collect();
    let below: Vec<String> = stated
        .iter()
        .filter(|(_, r)| r.is_at_or_below(rule.limited_if_at_or_below))
        .map(|(s, r)| format!("{} side stops at {}", s.as_str(), reach_phrase(*r)))
        .collect();
    if !below.is_empty() {
        return Some((
            Verdict::Limited,
            format!(
                "{}, at or below {}",
                below.join(" and "),
                rule.limited_if_at_or_below.phrase()
            ),
        ));
    }
    if let (true, Some(l), Some(r)) = (rule.bilateral_compare, left, right) {
        if l.height() != r.height() {
            let ((low_side, low), (high_side, high)) = if l.height() < r.height() {
                ((Side::Left, l), (Side::Right, r))
            } else {
                ((Side::Right, r), (Side::Left, l))
            };
            return Some((
                Verdict::Limited,
                format!(
                    "{} side reaches {}, lower than the {} side at {}",
                    low_side.as_str(),
                    reach_phrase(low),
                    high_side.as_str(),
                    reach_phrase(high)
                ),
            ));
        }
    }
    let reached = stated
        .iter()
        .map(|(s, r)| format!("{} side reaches {}", s.as_str(), reach_phrase(*r)))
        .collect::<Vec<_>>()
        .join(", ");
    Some((Verdict::Normal, reached))
}

/// Whether a rule would mark `kind` limited for this spec.
pub(crate) fn rule_fires(rules: &RuleSet, kind: MovementKind, spec: &SyntheticCaseSpec) -> bool {
    let Some(rule) = rules.rule(kind) else {
        return false;
    };
    let table = table_of(&observations_for(spec, &[]));
    matches!(judge_rule(rule, &table), Some((Verdict::Limited, _)))
}

/// Judgments and final verdict for a set of observations, with the
/// reasoning defects of `plan` applied.
pub fn judge_observations(
    observations: &[MotionObservation],
    rules: &RuleSet,
    plan: Option<&DefectPlan>,
) -> (Vec<MovementJudgment>, FinalVerdict) {
    let table = table_of(observations);
    let mut judgments = Vec::new();
    for rule in &rules.movements {
        let Some((mut verdict, mut evidence)) = judge_rule(rule, &table) else {
            continue;
        };
        let compensation: Vec<&str> = observations
            .iter()
            .filter(|o| o.kind.known().map(MovementKind::screening_action) == Some(rule.kind.screening_action()))
            .flat_map(|o| o.compensation.iter().map(String::as_str))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        if !compensation.is_empty() {
            evidence.push_str(&format!("; compensation seen: {}", compensation.join(", ")));
        }
        if let Some(plan) = plan {
            if plan.contradiction == Some(rule.kind) {
                (verdict, evidence) = match verdict {
                    Verdict::Limited => (
                        Verdict::Normal,
                        "the patient can flexibly perform this movement on both sides".to_string(),
                    ),
                    _ => (
                        Verdict::Limited,
                        "the hand appears to stop early on one side".to_string(),
                    ),
                };
            } else if plan.logic_leap == Some(rule.kind) {
                evidence = "concluded from the overall impression without a specific observation".to_string();
            }
        }
        judgments.push(MovementJudgment {
            kind: ObservedKind::Known(rule.kind),
            verdict,
            evidence,
        });
    }
    let final_verdict = if judgments.iter().any(|j| j.verdict == Verdict::Limited) {
        FinalVerdict::Positive
    } else {
        FinalVerdict::Negative
    };
    (judgments, final_verdict)
}

fn describe_preamble(observations: &[MotionObservation]) -> String {
    let count = observations
        .iter()
        .filter_map(|o| o.kind.known())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    format!("The patient performs {count} movements facing the camera; each was followed frame by frame.")
}

pub fn render_description(spec: &SyntheticCaseSpec, plan: &DefectPlan) -> String {
    let observations = observations_for(spec, &plan.omitted);
    let mut out = describe_preamble(&observations);
    out.push('\n');
    render_movements(&mut out, &observations);
    out
}

pub fn render_diagnosis(spec: &SyntheticCaseSpec, plan: &DefectPlan, rules: &RuleSet) -> String {
    let observations = observations_for(spec, &plan.omitted);
    let (judgments, final_verdict) = judge_observations(&observations, rules, Some(plan));
    render_sections(
        &describe_preamble(&observations),
        &observations,
        &judgments,
        final_verdict,
    )
}

pub fn render_judgment(description: &str, rules: &RuleSet, plan: Option<&DefectPlan>) -> String {
    let (observations, _) = parse_description(description, rules);
    let (judgments, final_verdict) = judge_observations(&observations, rules, plan);
    render_sections(
        "Judgment of the supplied movement description.",
        &observations,
        &judgments,
        final_verdict,
    )
}

/// Offline backend keyed by synthetic case id.
#[derive(Debug, Clone)]
pub struct SimulatedBackend {
    rules: RuleSet,
    cases: HashMap<String, (SyntheticCaseSpec, DefectPlan)>,
}

impl SimulatedBackend {
    pub fn new(rules: RuleSet, corpus: &[SyntheticCase]) -> Self {
        let cases = corpus
            .iter()
            .map(|c| (c.case.case_id.clone(), (c.spec.clone(), c.defects.clone())))
            .collect();
        Self { rules, cases }
    }

    fn lookup(&self, case: &CaseRecord) -> Result<&(SyntheticCaseSpec, DefectPlan), GatewayError> {
        self.cases
            .get(&case.case_id)
            .ok_or_else(|| GatewayError::UnknownSyntheticCase(case.case_id.clone()))
    }

    fn transcript(text: String, model_id: &str) -> Transcript {
        Transcript {
            text,
            model_id: model_id.to_string(),
            latency_ms: 0,
            attempts: 1,
        }
    }
}

fn expect_kind(prompt: &PromptText, expected: PromptKind) -> Result<(), GatewayError> {
    if prompt.kind == expected {
        Ok(())
    } else {
        Err(GatewayError::WrongPrompt {
            expected,
            got: prompt.kind,
        })
    }
}

impl Backend for SimulatedBackend {
    fn describe_video(&self, case: &CaseRecord, prompt: &PromptText) -> Result<Transcript, GatewayError> {
        expect_kind(prompt, PromptKind::B)?;
        let (spec, plan) = self.lookup(case)?;
        Ok(Self::transcript(render_description(spec, plan), DESCRIBER_MODEL))
    }

    fn judge_text(
        &self,
        description: &str,
        prompt: &PromptText,
        case: Option<&CaseRecord>,
    ) -> Result<Transcript, GatewayError> {
        if description.trim().is_empty() {
            return Err(GatewayError::EmptyDescription);
        }
        expect_kind(prompt, PromptKind::C)?;
        let plan = case
            .and_then(|c| self.cases.get(&c.case_id))
            .map(|(_, plan)| plan);
        Ok(Self::transcript(
            render_judgment(description, &self.rules, plan),
            JUDGE_MODEL,
        ))
    }

    fn diagnose_direct(&self, input: &DiagnoseInput<'_>, prompt: &PromptText) -> Result<Transcript, GatewayError> {
        if let DiagnoseInput::Frames { timestamps, .. } = input {
            if timestamps.is_empty() {
                return Err(GatewayError::EmptyFrameSet);
            }
        }
        expect_kind(prompt, PromptKind::A)?;
        let (spec, plan) = self.lookup(input.case())?;
        Ok(Self::transcript(
            render_diagnosis(spec, plan, &self.rules),
            DIAGNOSER_MODEL,
        ))
    }
}
