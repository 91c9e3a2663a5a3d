//! Rule oracle, scenario relabeling, classification metrics, bootstrap
//! intervals, the usability index, and report tables.

pub mod bootstrap;
pub mod report;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bootstrap::{bootstrap_ci, bootstrap_mean_ci, mean, quantile};
pub use report::{assemble_outcomes, build_report, round3, CaseOutcome, FrameworkOutcomes, Report};

use crate::gateway::SyntheticCaseSpec;
use crate::grading::{AdjudicatedGrade, Score, Triple};
use crate::ingest::Label;
use crate::pipelines::{FinalVerdict, Framework};
use crate::prompt::RuleSet;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no grade for {case_id}/{framework}")]
    MissingGrade { case_id: String, framework: Framework },
    #[error("{predictions} predictions for {truths} truth labels")]
    CardinalityMismatch { predictions: usize, truths: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("bootstrap sample is empty")]
    EmptySample,
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error("{framework}: {} case(s) lack an adjudicated grade: {}", missing.len(), missing.join(", "))]
    IncompleteInputs { framework: Framework, missing: Vec<String> },
    #[error("no inputs to evaluate")]
    NoInputs,
    #[error("no ground-truth label for case {0}")]
    MissingTruth(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

/// Label implied by a synthetic spec under `rules`.
pub fn rule_oracle(spec: &SyntheticCaseSpec, rules: &RuleSet) -> Label {
    for side in [&spec.left, &spec.right] {
        if side.hands_on_head_reach.landmark().is_none() {
            return Label::Abnormal;
        }
    }
    let abnormal = rules.movements.iter().any(|rule| {
        let action = rule.kind.screening_action();
        let left = spec.left.reach(action);
        let right = spec.right.reach(action);
        let low = left.height().min(right.height());
        low <= i16::from(rule.limited_if_at_or_below.height())
            || (rule.bilateral_compare && left.height() != right.height())
    });
    if abnormal {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    S1,
    S2,
    S3,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::S1, Scenario::S2, Scenario::S3];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
        }
    }

    pub fn from_number(n: u8) -> Option<Scenario> {
        match n {
            1 => Some(Scenario::S1),
            2 => Some(Scenario::S2),
            3 => Some(Scenario::S3),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectiveValue {
    One,
    Zero,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectivePrediction {
    pub case_id: String,
    pub framework: Framework,
    pub scenario: Scenario,
    pub value: EffectiveValue,
}

/// Prediction counted under `scenario` for one graded output.
pub fn effective_value(scenario: Scenario, final_verdict: FinalVerdict, grade: &Triple) -> EffectiveValue {
    let accepted = match scenario {
        Scenario::S1 => {
            return match final_verdict {
                FinalVerdict::Positive => EffectiveValue::One,
                FinalVerdict::Negative => EffectiveValue::Zero,
                FinalVerdict::Invalid => EffectiveValue::Invalid,
            }
        }
        Scenario::S2 => grade.r == Score::One,
        Scenario::S3 => grade.r == Score::One && grade.a == Score::One,
    };
    if accepted && final_verdict == FinalVerdict::Positive {
        EffectiveValue::One
    } else {
        EffectiveValue::Zero
    }
}

pub fn effective_prediction(
    scenario: Scenario,
    case_id: &str,
    final_verdict: FinalVerdict,
    framework: Framework,
    grade: Option<&AdjudicatedGrade>,
) -> Result<EffectivePrediction, EvalError> {
    let grade = grade.ok_or_else(|| EvalError::MissingGrade {
        case_id: case_id.to_string(),
        framework,
    })?;
    Ok(EffectivePrediction {
        case_id: case_id.to_string(),
        framework,
        scenario,
        value: effective_value(scenario, final_verdict, &grade.triple()),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub invalid_pos: u64,
    pub invalid_neg: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self {
            tp,
            fp,
            fn_,
            tn,
            ..Default::default()
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn + self.invalid_pos + self.invalid_neg
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_ + self.invalid_pos
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp + self.invalid_neg
    }

    pub fn add(&mut self, value: EffectiveValue, truth: Label) {
        let slot = match (value, truth) {
            (EffectiveValue::One, Label::Abnormal) => &mut self.tp,
            (EffectiveValue::One, Label::Normal) => &mut self.fp,
            (EffectiveValue::Zero, Label::Abnormal) => &mut self.fn_,
            (EffectiveValue::Zero, Label::Normal) => &mut self.tn,
            (EffectiveValue::Invalid, Label::Abnormal) => &mut self.invalid_pos,
            (EffectiveValue::Invalid, Label::Normal) => &mut self.invalid_neg,
        };
        *slot += 1;
    }
}

pub fn build_confusion(predictions: &[EffectiveValue], truths: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::CardinalityMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        cm.add(p, t);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 4] = ["accuracy", "precision", "recall", "f1"];

    pub fn as_array(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Invalid outputs count in accuracy's denominator and as misses in
/// recall's denominator, never as hits.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_ + cm.invalid_pos);
    Ok(Metrics {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        precision,
        recall,
        f1: f1_score(precision, recall),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub d: f64,
    pub r: f64,
    pub a: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { d: 0.5, r: 0.3, a: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            b: 10_000,
            alpha: 0.05,
            seed: 20240501,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub weights: Weights,
    pub bootstrap: BootstrapConfig,
}

impl EvalConfig {
    pub fn from_toml(text: &str) -> Result<Self, EvalError> {
        let cfg: EvalConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let w = self.weights;
        if [w.d, w.r, w.a].iter().any(|x| !(0.0..=1.0).contains(x)) || (w.d + w.r + w.a - 1.0).abs() > 1e-9 {
            return Err(EvalError::InvalidConfig(format!(
                "weights must lie in [0, 1] and sum to 1 (got {} + {} + {})",
                w.d, w.r, w.a
            )));
        }
        if self.bootstrap.b == 0 {
            return Err(EvalError::InvalidConfig("bootstrap.b must be at least 1".into()));
        }
        if !(self.bootstrap.alpha > 0.0 && self.bootstrap.alpha < 1.0) {
            return Err(EvalError::InvalidConfig("bootstrap.alpha must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-output usability: weighted sum of the three rubric scores.
pub fn usability_index(grade: &Triple, weights: &Weights) -> f64 {
    weights.d * grade.d.value() + weights.r * grade.r.value() + weights.a * grade.a.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsabilityBlock {
    /// `None` when the class has no cases.
    pub normal: Option<Interval>,
    pub abnormal: Option<Interval>,
    pub overall: Interval,
}

impl UsabilityBlock {
    pub const DIMENSIONS: [&'static str; 3] = ["normal", "abnormal", "overall"];

    pub fn rows(&self) -> [(&'static str, Option<Interval>); 3] {
        [
            ("normal", self.normal),
            ("abnormal", self.abnormal),
            ("overall", Some(self.overall)),
        ]
    }
}

/// Overall mean implied by the two class means and class sizes.
pub fn prevalence_weighted_mean(n_normal: usize, mean_normal: f64, n_abnormal: usize, mean_abnormal: f64) -> f64 {
    (n_normal as f64 * mean_normal + n_abnormal as f64 * mean_abnormal) / (n_normal + n_abnormal) as f64
}

/// Per-class and overall usability means with bootstrap intervals.
pub fn usability_block(
    scores: &[(Label, Triple)],
    cfg: &EvalConfig,
) -> Result<UsabilityBlock, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let ui = |filter: Option<Label>| -> Vec<f64> {
        scores
            .iter()
            .filter(|(label, _)| filter.is_none_or(|f| f == *label))
            .map(|(_, t)| usability_index(t, &cfg.weights))
            .collect()
    };
    let interval = |sample: Vec<f64>| -> Result<Option<Interval>, EvalError> {
        if sample.is_empty() {
            return Ok(None);
        }
        let mean = mean(&sample);
        let (ci_lo, ci_hi) = bootstrap_mean_ci(&sample, &cfg.bootstrap)?;
        Ok(Some(Interval { mean, ci_lo, ci_hi }))
    };
    Ok(UsabilityBlock {
        normal: interval(ui(Some(Label::Normal)))?,
        abnormal: interval(ui(Some(Label::Abnormal)))?,
        overall: interval(ui(None))?.ok_or(EvalError::EmptySample)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::AffectedSide;
    use crate::prompt::MovementKind;
    use crate::prompt::{Landmark, Reach};
    use proptest::prelude::*;

    fn t(a: Score, r: Score, d: Score) -> Triple {
        Triple::new(a, r, d)
    }

    #[test]
    fn oracle_examples() {
        let rules = RuleSet::default_rules();
        let healthy = SyntheticCaseSpec::healthy();
        assert_eq!(rule_oracle(&healthy, &rules), Label::Normal);

        let mut buttock = healthy.clone();
        buttock.affected_side = AffectedSide::Left;
        buttock.left.behind_back_reach = Landmark::Buttock;
        assert_eq!(rule_oracle(&buttock, &rules), Label::Abnormal);

        let mut asym = healthy.clone();
        asym.affected_side = AffectedSide::Right;
        asym.right.elevation_reach = Landmark::Acromion;
        assert_eq!(rule_oracle(&asym, &rules), Label::Abnormal);

        let mut one_rung = healthy.clone();
        one_rung.affected_side = AffectedSide::Right;
        one_rung.right.elevation_reach = Landmark::TopOfHead;
        assert_eq!(rule_oracle(&one_rung, &rules), Label::Abnormal);

        let mut both_mild = healthy;
        both_mild.affected_side = AffectedSide::Both;
        both_mild.left.elevation_reach = Landmark::TopOfHead;
        both_mild.right.elevation_reach = Landmark::TopOfHead;
        assert_eq!(rule_oracle(&both_mild, &rules), Label::Normal);
        both_mild.left.hands_on_head_reach = Reach::Unreachable;
        both_mild.right.hands_on_head_reach = Reach::Unreachable;
        assert_eq!(rule_oracle(&both_mild, &rules), Label::Abnormal);
    }

    #[test]
    fn oracle_agrees_with_simulated_judge_on_single_movement_grid() {
        use crate::gateway::{judge_observations, observations_for};
        let rules = RuleSet::default_rules();
        let rungs: Vec<Reach> = Landmark::LADDER
            .iter()
            .map(|&l| Reach::At(l))
            .chain([Reach::Unreachable])
            .collect();
        for action in MovementKind::PERFORMED {
            for &l in &rungs {
                for &r in &rungs {
                    if action != MovementKind::HandsOnHead && (l == Reach::Unreachable || r == Reach::Unreachable) {
                        continue;
                    }
                    let mut spec = SyntheticCaseSpec::healthy();
                    spec.affected_side = AffectedSide::Both;
                    spec.left.set_reach(action, l);
                    spec.right.set_reach(action, r);
                    let (_, fin) = judge_observations(&observations_for(&spec, &[]), &rules, None);
                    let expected = match rule_oracle(&spec, &rules) {
                        Label::Abnormal => FinalVerdict::Positive,
                        Label::Normal => FinalVerdict::Negative,
                    };
                    assert_eq!(fin, expected, "{action:?} {l:?} {r:?}");
                }
            }
        }
    }

    #[test]
    fn scenario_examples() {
        use Score::*;
        assert_eq!(effective_value(Scenario::S2, FinalVerdict::Positive, &t(One, Half, One)), EffectiveValue::Zero);
        for grade in [t(Zero, Zero, Zero), t(One, One, One), t(Half, Half, One)] {
            assert_eq!(effective_value(Scenario::S1, FinalVerdict::Positive, &grade), EffectiveValue::One);
        }
        assert_eq!(effective_value(Scenario::S3, FinalVerdict::Positive, &t(Half, One, One)), EffectiveValue::Zero);
        assert_eq!(effective_value(Scenario::S3, FinalVerdict::Positive, &t(One, One, One)), EffectiveValue::One);
        assert_eq!(effective_value(Scenario::S2, FinalVerdict::Invalid, &t(One, One, Zero)), EffectiveValue::Zero);
        assert_eq!(effective_value(Scenario::S1, FinalVerdict::Invalid, &t(One, One, Zero)), EffectiveValue::Invalid);
        assert!(matches!(
            effective_prediction(Scenario::S1, "c", FinalVerdict::Positive, Framework::Dvdx, None),
            Err(EvalError::MissingGrade { .. })
        ));
    }

    #[test]
    fn confusion_examples() {
        let cm = build_confusion(&[EffectiveValue::One], &[Label::Abnormal]).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(1, 0, 0, 0));
        let cm = build_confusion(&[EffectiveValue::Invalid], &[Label::Normal]).unwrap();
        assert_eq!(cm.invalid_neg, 1);
        assert_eq!(cm.total(), 1);
        assert!(matches!(
            build_confusion(&[EffectiveValue::One], &[]),
            Err(EvalError::CardinalityMismatch { .. })
        ));
    }

    #[test]
    fn metric_conventions() {
        let m = compute_metrics(&ConfusionMatrix::new(0, 0, 0, 1)).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 0.0, 0.0, 0.0));
        assert!(matches!(compute_metrics(&ConfusionMatrix::default()), Err(EvalError::EmptyMatrix)));
        let with_invalid = ConfusionMatrix {
            tp: 2,
            fn_: 1,
            invalid_pos: 1,
            tn: 1,
            ..Default::default()
        };
        let m = compute_metrics(&with_invalid).unwrap();
        assert_eq!(m.recall, 0.5);
        assert_eq!(m.accuracy, 0.6);
        assert_eq!(m.precision, 1.0);
    }

    #[test]
    fn usability_examples() {
        use Score::*;
        let w = Weights::default();
        assert_eq!(usability_index(&t(One, One, One), &w), 1.0);
        assert_eq!(usability_index(&t(Half, Half, One), &w), 0.75);
        assert_eq!(usability_index(&t(Zero, Zero, Zero), &w), 0.0);

        let cfg = EvalConfig {
            bootstrap: BootstrapConfig { b: 200, ..Default::default() },
            ..Default::default()
        };
        let block = usability_block(&[(Label::Normal, t(One, One, One))], &cfg).unwrap();
        assert_eq!(block.overall.mean, 1.0);
        assert_eq!(block.normal.unwrap().mean, 1.0);
        assert!(block.abnormal.is_none());
        assert!(matches!(usability_block(&[], &cfg), Err(EvalError::EmptySample)));
    }

    #[test]
    fn config_toml() {
        let cfg = EvalConfig::from_toml("[weights]\nd = 0.6\nr = 0.2\na = 0.2\n[bootstrap]\nb = 500\nalpha = 0.1\nseed = 9\n").unwrap();
        assert_eq!(cfg.weights.d, 0.6);
        assert_eq!(cfg.bootstrap.b, 500);
        assert_eq!(EvalConfig::from_toml("").unwrap(), EvalConfig::default());
        assert!(EvalConfig::from_toml("[weights]\nd = 0.9\nr = 0.3\na = 0.2\n").is_err());
        assert!(EvalConfig::from_toml("[bootstrap]\nb = 0\nalpha = 0.05\nseed = 1\n").is_err());
    }

    fn score() -> impl Strategy<Value = Score> {
        prop::sample::select(Score::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn f1_bounds(tp in 0u64..200, fp in 0u64..200, fn_ in 0u64..200, tn in 0u64..200) {
            prop_assume!(tp + fp + fn_ + tn > 0);
            let m = compute_metrics(&ConfusionMatrix::new(tp, fp, fn_, tn)).unwrap();
            let (p, r) = (m.precision, m.recall);
            prop_assert!(m.f1 <= (p + r) / 2.0 + 1e-12);
            if p + r > 0.0 {
                prop_assert!(p.min(r) - 1e-12 <= m.f1 && m.f1 <= p.max(r) + 1e-12);
            }
            for x in m.as_array() {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }

        #[test]
        fn relabel_is_idempotent(a in score(), r in score(), d in prop::bool::ANY, fin in 0u8..3) {
            let final_verdict = [FinalVerdict::Positive, FinalVerdict::Negative, FinalVerdict::Invalid][fin as usize];
            let grade = t(a, r, Score::binary(d));
            for s in [Scenario::S2, Scenario::S3] {
                let once = effective_value(s, final_verdict, &grade);
                let as_final = match once {
                    EffectiveValue::One => FinalVerdict::Positive,
                    EffectiveValue::Zero => FinalVerdict::Negative,
                    EffectiveValue::Invalid => FinalVerdict::Invalid,
                };
                prop_assert_eq!(effective_value(s, as_final, &grade), once);
            }
        }

        #[test]
        fn overall_ui_decomposes(grades in prop::collection::vec((prop::bool::ANY, score(), score(), prop::bool::ANY), 1..60)) {
            let scores: Vec<(Label, Triple)> = grades
                .iter()
                .map(|&(abn, a, r, d)| (if abn { Label::Abnormal } else { Label::Normal }, t(a, r, Score::binary(d))))
                .collect();
            let cfg = EvalConfig { bootstrap: BootstrapConfig { b: 20, ..Default::default() }, ..Default::default() };
            let block = usability_block(&scores, &cfg).unwrap();
            let n_abn = scores.iter().filter(|s| s.0 == Label::Abnormal).count() as f64;
            let n_norm = scores.len() as f64 - n_abn;
            let weighted = n_abn * block.abnormal.map_or(0.0, |i| i.mean) + n_norm * block.normal.map_or(0.0, |i| i.mean);
            prop_assert!((weighted / scores.len() as f64 - block.overall.mean).abs() < 1e-12);
            prop_assert!(block.overall.ci_lo <= block.overall.ci_hi);
        }
    }
}
