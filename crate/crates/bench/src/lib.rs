//! Shared inputs for the criterion benchmarks.

use romdx_core::evaluation::{CaseOutcome, FrameworkOutcomes};
use romdx_core::gateway::{generate_synthetic_corpus, simulated, DefectProfile, SyntheticCase};
use romdx_core::grading::{Score, Triple};
use romdx_core::{FinalVerdict, Framework, Label, RuleSet};

/// Deterministic synthetic corpus with moderate defect rates.
pub fn corpus(n: usize) -> (RuleSet, Vec<SyntheticCase>) {
    let rules = RuleSet::default_rules();
    let profile = DefectProfile {
        omit_movement_prob: 0.2,
        contradiction_prob: 0.1,
        logic_leap_prob: 0.1,
    };
    let cases = generate_synthetic_corpus(n, &profile, 7, &rules);
    (rules, cases)
}

/// Rendered one-shot diagnosis transcripts for a corpus.
pub fn transcripts(n: usize) -> (RuleSet, Vec<String>) {
    let (rules, cases) = corpus(n);
    let texts = cases
        .iter()
        .map(|c| simulated::render_diagnosis(&c.spec, &c.defects, &rules))
        .collect();
    (rules, texts)
}

/// Graded outcomes shaped like a 761-case study (504 abnormal / 257 normal).
pub fn outcomes() -> FrameworkOutcomes {
    let cases = (0..761)
        .map(|i| {
            let truth = if i < 504 { Label::Abnormal } else { Label::Normal };
            let final_verdict = match i % 7 {
                0 => FinalVerdict::Invalid,
                1 | 2 => FinalVerdict::Negative,
                _ if truth == Label::Abnormal => FinalVerdict::Positive,
                _ => FinalVerdict::Negative,
            };
            let r = [Score::One, Score::Half, Score::Zero][i % 3];
            let a = [Score::One, Score::One, Score::Half][i % 3];
            CaseOutcome {
                case_id: format!("case-{i:04}"),
                truth,
                final_verdict,
                grade: Triple::new(a, r, Score::binary(i % 5 != 0)),
            }
        })
        .collect();
    FrameworkOutcomes {
        framework: Framework::Hmvdx,
        cases,
    }
}
