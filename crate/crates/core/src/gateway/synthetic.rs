//! Synthetic cases for offline runs: per-side reaches, compensation signs,
//! and per-case defect bookkeeping so expected rubric grades are known.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evaluation::rule_oracle;
use crate::grading::Score;
use crate::ingest::{AudioState, CaseRecord, PrivacyState, View};
use crate::prompt::{Landmark, MovementKind, Reach, RuleSet, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SideReaches {
    pub elevation_reach: Landmark,
    pub hands_on_head_reach: Reach,
    pub behind_back_reach: Landmark,
}

impl SideReaches {
    pub const FULL: SideReaches = SideReaches {
        elevation_reach: Landmark::AboveHead,
        hands_on_head_reach: Reach::At(Landmark::TopOfHead),
        behind_back_reach: Landmark::Chest,
    };

    /// Reach for one of the three performed actions.
    pub fn reach(&self, action: MovementKind) -> Reach {
        match action.screening_action() {
            MovementKind::ForwardElevation => Reach::At(self.elevation_reach),
            MovementKind::HandsOnHead => self.hands_on_head_reach,
            _ => Reach::At(self.behind_back_reach),
        }
    }

    pub fn set_reach(&mut self, action: MovementKind, reach: Reach) {
        match action.screening_action() {
            MovementKind::ForwardElevation => {
                self.elevation_reach = reach.landmark().unwrap_or(Landmark::Thigh)
            }
            MovementKind::HandsOnHead => self.hands_on_head_reach = reach,
            _ => self.behind_back_reach = reach.landmark().unwrap_or(Landmark::Thigh),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffectedSide {
    Left,
    Right,
    None,
    Both,
}

impl AffectedSide {
    pub fn includes(self, side: Side) -> bool {
        match self {
            AffectedSide::Both => true,
            AffectedSide::None => false,
            AffectedSide::Left => side == Side::Left,
            AffectedSide::Right => side == Side::Right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pace {
    Smooth,
    Jerky,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticCaseSpec {
    pub left: SideReaches,
    pub right: SideReaches,
    pub compensation: BTreeSet<String>,
    pub affected_side: AffectedSide,
    pub smoothness: Pace,
}

impl SyntheticCaseSpec {
    /// Symmetric full range on both sides.
    pub fn healthy() -> Self {
        Self {
            left: SideReaches::FULL,
            right: SideReaches::FULL,
            compensation: BTreeSet::new(),
            affected_side: AffectedSide::None,
            smoothness: Pace::Smooth,
        }
    }

    pub fn side(&self, side: Side) -> &SideReaches {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn side_mut(&mut self, side: Side) -> &mut SideReaches {
        match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.affected_side == AffectedSide::None && self.left != self.right {
            return Err("affected_side none requires symmetric reaches".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DefectProfile {
    pub omit_movement_prob: f64,
    pub contradiction_prob: f64,
    pub logic_leap_prob: f64,
}

impl DefectProfile {
    pub const NONE: DefectProfile = DefectProfile {
        omit_movement_prob: 0.0,
        contradiction_prob: 0.0,
        logic_leap_prob: 0.0,
    };

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("omit_movement_prob", self.omit_movement_prob),
            ("contradiction_prob", self.contradiction_prob),
            ("logic_leap_prob", self.logic_leap_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        Ok(())
    }
}

/// Defects actually applied to one case.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectPlan {
    /// Performed movements left out of every description of this case.
    pub omitted: Vec<MovementKind>,
    /// Judgment whose verdict is inverted relative to the video.
    pub contradiction: Option<MovementKind>,
    /// Judgment whose evidence does not support its verdict.
    pub logic_leap: Option<MovementKind>,
}

impl DefectPlan {
    pub fn is_clean(&self) -> bool {
        self.omitted.is_empty() && self.contradiction.is_none() && self.logic_leap.is_none()
    }

    /// Recognition integrity implied by the omissions.
    pub fn expected_a(&self) -> Score {
        match self.omitted.len() {
            0 => Score::One,
            n if n < MovementKind::PERFORMED.len() => Score::Half,
            _ => Score::Zero,
        }
    }

    /// Judgment rationality implied by the injected reasoning defects.
    pub fn expected_r(&self) -> Score {
        if self.contradiction.is_some() {
            Score::Zero
        } else if self.logic_leap.is_some() {
            Score::Half
        } else {
            Score::One
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCase {
    pub case: CaseRecord,
    pub spec: SyntheticCaseSpec,
    pub defects: DefectPlan,
}

const AGE_BANDS: [&str; 6] = ["20-29", "30-39", "40-49", "50-59", "60-69", "70-79"];
const GENDERS: [&str; 2] = ["female", "male"];

fn impaired_reach(rng: &mut ChaCha8Rng, action: MovementKind, healthy: Reach) -> Reach {
    let options: &[Reach] = match action {
        MovementKind::ForwardElevation => &[
            Reach::At(Landmark::TopOfHead),
            Reach::At(Landmark::Earlobe),
            Reach::At(Landmark::Acromion),
            Reach::At(Landmark::Chest),
        ],
        MovementKind::HandsOnHead => &[
            Reach::At(Landmark::Earlobe),
            Reach::At(Landmark::Acromion),
            Reach::Unreachable,
        ],
        _ => &[
            Reach::At(Landmark::WaistIliacCrest),
            Reach::At(Landmark::Buttock),
            Reach::At(Landmark::Thigh),
        ],
    };
    let lower: Vec<Reach> = options
        .iter()
        .copied()
        .filter(|r| r.height() < healthy.height())
        .collect();
    *lower.choose(rng).unwrap_or(&Reach::Unreachable)
}

fn random_spec(rng: &mut ChaCha8Rng, rules: &RuleSet) -> SyntheticCaseSpec {
    let mut baseline = SideReaches::FULL;
    if rng.random_bool(0.3) {
        baseline.behind_back_reach = Landmark::Acromion;
    }
    let affected_side = match rng.random_range(0..100) {
        0..=34 => AffectedSide::None,
        35..=64 => AffectedSide::Left,
        65..=94 => AffectedSide::Right,
        _ => AffectedSide::Both,
    };
    let mut spec = SyntheticCaseSpec {
        left: baseline,
        right: baseline,
        compensation: BTreeSet::new(),
        affected_side,
        smoothness: Pace::Smooth,
    };
    if affected_side == AffectedSide::None {
        return spec;
    }
    let mut actions = MovementKind::PERFORMED.to_vec();
    actions.shuffle(rng);
    let impaired = rng.random_range(1..=actions.len());
    for side in Side::BOTH {
        if !affected_side.includes(side) {
            continue;
        }
        for &action in &actions[..impaired] {
            let reach = impaired_reach(rng, action, baseline.reach(action));
            spec.side_mut(side).set_reach(action, reach);
        }
    }
    for sign in &rules.compensation_signs {
        if rng.random_bool(0.4) {
            spec.compensation.insert(sign.clone());
        }
    }
    if rng.random_bool(0.5) {
        spec.smoothness = Pace::Jerky;
    }
    spec
}

fn random_defects(
    rng: &mut ChaCha8Rng,
    profile: &DefectProfile,
    spec: &SyntheticCaseSpec,
    rules: &RuleSet,
) -> DefectPlan {
    let mut plan = DefectPlan::default();
    if rng.random_bool(profile.omit_movement_prob) {
        let mut actions = MovementKind::PERFORMED.to_vec();
        actions.shuffle(rng);
        let count = rng.random_range(1..=actions.len());
        plan.omitted = actions[..count].to_vec();
        plan.omitted.sort();
    }
    let judged: Vec<MovementKind> = rules
        .movements
        .iter()
        .map(|r| r.kind)
        .filter(|k| !plan.omitted.contains(&k.screening_action()))
        .collect();
    if rng.random_bool(profile.contradiction_prob) && !judged.is_empty() {
        // Prefer inverting a limitation that is really there.
        let limited: Vec<MovementKind> = judged
            .iter()
            .copied()
            .filter(|&k| super::simulated::rule_fires(rules, k, spec))
            .collect();
        let pool = if limited.is_empty() { &judged } else { &limited };
        plan.contradiction = pool.choose(rng).copied();
    }
    if rng.random_bool(profile.logic_leap_prob) {
        let pool: Vec<MovementKind> = judged
            .iter()
            .copied()
            .filter(|k| Some(*k) != plan.contradiction)
            .collect();
        plan.logic_leap = pool.choose(rng).copied();
    }
    plan
}

/// Generates `n` synthetic cases. Labels come from the rule oracle.
pub fn generate_synthetic_corpus(
    n: usize,
    defects: &DefectProfile,
    seed: u64,
    rules: &RuleSet,
) -> Vec<SyntheticCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|idx| {
            let spec = random_spec(&mut rng, rules);
            let plan = random_defects(&mut rng, defects, &spec, rules);
            let case_id = format!("sim-{idx:04}");
            let case = CaseRecord {
                video_ref: format!("sim://{case_id}"),
                case_id,
                ground_truth: rule_oracle(&spec, rules),
                age_band: AGE_BANDS.choose(&mut rng).copied().unwrap_or("40-49").to_string(),
                gender: GENDERS.choose(&mut rng).copied().unwrap_or("female").to_string(),
                view: View::Front,
                duration_s: f64::from(rng.random_range(80u32..=300)) / 10.0,
                privacy_state: PrivacyState::Masked,
                audio_state: AudioState::Removed,
                preprocess_done: true,
            };
            SyntheticCase {
                case,
                spec,
                defects: plan,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Label;

    #[test]
    fn clean_corpus_expects_perfect_grades() {
        let rules = RuleSet::default_rules();
        let corpus = generate_synthetic_corpus(4, &DefectProfile::NONE, 7, &rules);
        assert_eq!(corpus.len(), 4);
        for c in &corpus {
            assert!(c.defects.is_clean());
            assert_eq!(c.defects.expected_a(), Score::One);
            assert_eq!(c.defects.expected_r(), Score::One);
            c.spec.validate().unwrap();
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let rules = RuleSet::default_rules();
        let profile = DefectProfile {
            omit_movement_prob: 0.3,
            contradiction_prob: 0.2,
            logic_leap_prob: 0.2,
        };
        let a = generate_synthetic_corpus(50, &profile, 11, &rules);
        let b = generate_synthetic_corpus(50, &profile, 11, &rules);
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(50, &profile, 12, &rules);
        assert_ne!(a, c);
    }

    #[test]
    fn full_omission_means_partial_or_zero_integrity() {
        let rules = RuleSet::default_rules();
        let profile = DefectProfile {
            omit_movement_prob: 1.0,
            ..DefectProfile::NONE
        };
        for c in generate_synthetic_corpus(100, &profile, 3, &rules) {
            assert!(matches!(c.defects.expected_a(), Score::Zero | Score::Half));
        }
    }

    #[test]
    fn symmetric_full_reach_is_normal() {
        let rules = RuleSet::default_rules();
        assert_eq!(rule_oracle(&SyntheticCaseSpec::healthy(), &rules), Label::Normal);
        let corpus = generate_synthetic_corpus(300, &DefectProfile::NONE, 5, &rules);
        let abnormal = corpus
            .iter()
            .filter(|c| c.case.ground_truth == Label::Abnormal)
            .count();
        assert!(abnormal > 100 && abnormal < 280, "abnormal = {abnormal}");
        for c in corpus.iter().filter(|c| c.spec.affected_side == AffectedSide::None) {
            assert_eq!(c.case.ground_truth, Label::Normal);
        }
    }

    #[test]
    fn profile_bounds() {
        assert!(DefectProfile {
            omit_movement_prob: 1.5,
            ..DefectProfile::NONE
        }
        .validate()
        .is_err());
        assert!(DefectProfile::NONE.validate().is_ok());
    }
}
