//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use romdx_core::evaluation::{
    bootstrap_mean_ci, compute_metrics, effective_value, f1_score, prevalence_weighted_mean, round3,
    usability_index, BootstrapConfig, ConfusionMatrix, Scenario, Weights,
};
use romdx_core::gateway::{generate_synthetic_corpus, simulated, DefectProfile, SimulatedBackend};
use romdx_core::grading::{auto_grade_simulated, Score, Triple};
use romdx_core::pipelines::transcript::FINAL_HEADER;
use romdx_core::pipelines::{parse_output, run_hmvdx, ParseDiagnostic, PipelineContext, PromptSet};
use romdx_core::prompt::{extract_rules_block, lint_body, lint_prompt, render_prompt, Side};
use romdx_core::{FinalVerdict, Framework, Label, MovementKind, PromptKind, RuleSet};

/// Tolerance for comparisons against three-decimal table values.
const TABLE_TOL: f64 = 0.001;
/// Allowed relative deviation of the percentile width from the normal width.
const WIDTH_TOL: f64 = 0.30;

type Outcome = Result<String, String>;
/// Name, check, and time budget in an optimised build.
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(cond: bool, fail: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(fail())
    }
}

fn close(label: &str, got: f64, want: f64) -> Result<(), String> {
    check((got - want).abs() <= TABLE_TOL + 1e-12, || {
        format!("{label}: got {got:.5}, expected {want:.3} +/- {TABLE_TOL}")
    })
}

fn f1_consistency() -> Outcome {
    let rows = [("hmvdx S1", 0.988, 0.833, 0.904), ("hmvdx S2", 0.926, 0.538, 0.680)];
    let mut detail = Vec::new();
    for (label, p, r, printed) in rows {
        let f1 = f1_score(p, r);
        close(label, round3(f1), printed)?;
        close(label, f1, printed)?;
        detail.push(format!("{label} F1={f1:.5}"));
    }
    Ok(detail.join(", "))
}

fn confusion_reconstruction() -> Outcome {
    let (positives, negatives) = (504u64, 257u64);
    let target = (883u64, 988u64, 833u64);
    // Independent oracle: integer arithmetic, rounding half-up at the
    // third decimal via scaled integers.
    let milli = |num: u64, den: u64| -> u64 { (2000 * num + den) / (2 * den) };
    let mut found = Vec::new();
    for tp in 0..=positives {
        let fn_ = positives - tp;
        for fp in 0..=negatives {
            let tn = negatives - fp;
            if tp + fp == 0 {
                continue;
            }
            let acc = milli(tp + tn, positives + negatives);
            let prec = milli(tp, tp + fp);
            let rec = milli(tp, positives);
            if (acc, prec, rec) == target {
                found.push((tp, fp, fn_, tn));
            }
        }
    }
    check(found == vec![(420, 5, 84, 252)], || format!("search found {found:?}"))?;
    let m = compute_metrics(&ConfusionMatrix::new(420, 5, 84, 252)).map_err(|e| e.to_string())?;
    close("accuracy", m.accuracy, 0.883)?;
    close("precision", m.precision, 0.988)?;
    close("recall", m.recall, 0.833)?;
    close("f1", m.f1, 0.904)?;
    Ok(format!(
        "unique CM TP=420 FP=5 FN=84 TN=252; acc={:.4} prec={:.4} rec={:.4} f1={:.4}",
        m.accuracy, m.precision, m.recall, m.f1
    ))
}

fn usability_decomposition() -> Outcome {
    let (n_normal, n_abnormal) = (257, 504);
    let rows = [
        ("hmvdx", 0.922, 0.747, 0.806),
        ("dvdx-pro", 0.922, 0.326, 0.528),
        ("dvdx-flash", 0.899, 0.209, 0.443),
    ];
    let mut detail = Vec::new();
    for (label, normal, abnormal, printed) in rows {
        let overall = prevalence_weighted_mean(n_normal, normal, n_abnormal, abnormal);
        close(label, overall, printed)?;
        detail.push(format!("{label} {overall:.5}"));
    }
    let baseline = prevalence_weighted_mean(n_normal, 0.856, n_abnormal, 0.282);
    detail.push(format!("baseline excluded ({baseline:.5} vs printed 0.481)"));
    Ok(detail.join(", "))
}

fn scenario_nesting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let scores = Score::ALL;
    let finals = [FinalVerdict::Positive, FinalVerdict::Negative, FinalVerdict::Invalid];
    let trials = 10_000;
    for trial in 0..trials {
        let n = rng.random_range(1..=30);
        let cases: Vec<(FinalVerdict, Triple, Label)> = (0..n)
            .map(|_| {
                let grade = Triple::new(
                    scores[rng.random_range(0..3)],
                    scores[rng.random_range(0..3)],
                    Score::binary(rng.random_bool(0.5)),
                );
                let truth = if rng.random_bool(0.6) { Label::Abnormal } else { Label::Normal };
                (finals[rng.random_range(0..3)], grade, truth)
            })
            .collect();
        let positives = |s: Scenario| -> BTreeSet<usize> {
            cases
                .iter()
                .enumerate()
                .filter(|(_, (f, g, _))| effective_value(s, *f, g) == romdx_core::evaluation::EffectiveValue::One)
                .map(|(i, _)| i)
                .collect()
        };
        let (p1, p2, p3) = (positives(Scenario::S1), positives(Scenario::S2), positives(Scenario::S3));
        check(p3.is_subset(&p2) && p2.is_subset(&p1), || format!("trial {trial}: nesting violated"))?;
        let actual: usize = cases.iter().filter(|c| c.2 == Label::Abnormal).count();
        if actual > 0 {
            let recall = |p: &BTreeSet<usize>| p.iter().filter(|&&i| cases[i].2 == Label::Abnormal).count() as f64 / actual as f64;
            check(recall(&p3) <= recall(&p2) && recall(&p2) <= recall(&p1), || {
                format!("trial {trial}: recall not monotone")
            })?;
        }
    }
    Ok(format!("{trials}/{trials} trials nested with monotone recall"))
}

fn usability_lattice() -> Outcome {
    let w = Weights::default();
    // Scaled by 20, every lattice point is the integer 10d + 6r + 4a.
    let lattice: BTreeSet<i64> = (0..=1)
        .flat_map(|d| (0..=2).flat_map(move |r2| (0..=2).map(move |a2| 10 * d + 3 * r2 + 2 * a2)))
        .collect();
    let mut combos = 0;
    for d in Score::BINARY {
        for r in Score::ALL {
            for a in Score::ALL {
                combos += 1;
                let ui = usability_index(&Triple::new(a, r, d), &w);
                let scaled = ui * 20.0;
                check((scaled - scaled.round()).abs() < 1e-9 && lattice.contains(&(scaled.round() as i64)), || {
                    format!("UI({d},{r},{a})={ui} outside lattice")
                })?;
                for (up, label) in [
                    (Triple::new(a, r, Score::One), "D"),
                    (Triple::new(a, Score::One.max(r), d), "R"),
                    (Triple::new(Score::One.max(a), r, d), "A"),
                ] {
                    check(usability_index(&up, &w) >= ui, || format!("not monotone in {label}"))?;
                }
                for higher in Score::ALL.into_iter().filter(|&s| s >= r) {
                    check(usability_index(&Triple::new(a, higher, d), &w) >= ui, || "not monotone in R".into())?;
                }
                for higher in Score::ALL.into_iter().filter(|&s| s >= a) {
                    check(usability_index(&Triple::new(higher, r, d), &w) >= ui, || "not monotone in A".into())?;
                }
            }
        }
    }
    check(combos == 18, || format!("{combos} combinations"))?;
    Ok(format!("{combos} combinations on a lattice of {} points, monotone in D, R, A", lattice.len()))
}

fn oracle_equivalence() -> Outcome {
    let rules = RuleSet::default_rules();
    let prompts = PromptSet::compile(&rules);

    let clean = generate_synthetic_corpus(200, &DefectProfile::NONE, 7, &rules);
    let backend = SimulatedBackend::new(rules.clone(), &clean);
    let ctx = PipelineContext {
        rules: &rules,
        prompts: &prompts,
        backend: &backend,
        backend_name: "simulated",
    };
    let mut matches = 0;
    for c in &clean {
        let result = run_hmvdx(&c.case, &ctx).map_err(|e| e.to_string())?;
        let expected = match c.case.ground_truth {
            Label::Abnormal => FinalVerdict::Positive,
            Label::Normal => FinalVerdict::Negative,
        };
        if result.output.final_verdict == expected {
            matches += 1;
        }
    }
    check(matches == 200, || format!("{matches}/200 finals match the oracle"))?;

    let profile = DefectProfile {
        omit_movement_prob: 0.2,
        contradiction_prob: 0.1,
        logic_leap_prob: 0.0,
    };
    let defective = generate_synthetic_corpus(200, &profile, 11, &rules);
    let backend = SimulatedBackend::new(rules.clone(), &defective);
    let ctx = PipelineContext {
        backend: &backend,
        ..ctx
    };
    let (mut contradictions, mut omissions, mut s1, mut s3) = (0, 0, 0, 0);
    for c in &defective {
        let result = run_hmvdx(&c.case, &ctx).map_err(|e| e.to_string())?;
        let grade = auto_grade_simulated(&result, c.case.ground_truth, Some(&c.defects)).map_err(|e| e.to_string())?;
        if c.defects.contradiction.is_some() {
            contradictions += 1;
            check(grade.r == Score::Zero, || format!("{}: contradiction graded R={}", c.case.case_id, grade.r))?;
        }
        if !c.defects.omitted.is_empty() {
            omissions += 1;
            check(grade.a <= Score::Half, || format!("{}: omission graded A={}", c.case.case_id, grade.a))?;
        }
        let t = grade.triple();
        let one = romdx_core::evaluation::EffectiveValue::One;
        s1 += usize::from(effective_value(Scenario::S1, result.output.final_verdict, &t) == one);
        s3 += usize::from(effective_value(Scenario::S3, result.output.final_verdict, &t) == one);
    }
    check(contradictions > 0 && omissions > 0, || "defects were not exercised".into())?;
    check(s3 <= s1, || format!("S3 positives {s3} > S1 positives {s1}"))?;
    Ok(format!(
        "clean 200/200; defects: {contradictions} contradictions R=0, {omissions} omissions A<=0.5, S3 {s3} <= S1 {s1}"
    ))
}

fn bootstrap_behaviour() -> Outcome {
    let cfg = BootstrapConfig {
        b: 10_000,
        alpha: 0.05,
        seed: 99,
    };
    let (lo, hi) = bootstrap_mean_ci(&[0.8; 100], &cfg).map_err(|e| e.to_string())?;
    check(lo == hi, || format!("constant sample gave ({lo}, {hi})"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws: Vec<f64> = (0..500).map(|_| f64::from(u8::from(rng.random_bool(0.8)))).collect();
    let a = bootstrap_mean_ci(&draws, &cfg).map_err(|e| e.to_string())?;
    let b = bootstrap_mean_ci(&draws, &cfg).map_err(|e| e.to_string())?;
    check(a.0.to_bits() == b.0.to_bits() && a.1.to_bits() == b.1.to_bits(), || "seeded runs differ".into())?;
    let width = a.1 - a.0;
    let normal = 2.0 * 1.96 * (0.8f64 * 0.2 / 500.0).sqrt();
    let rel = (width - normal).abs() / normal;
    check(rel <= WIDTH_TOL, || format!("width {width:.4} vs normal {normal:.4} ({:.1}% off)", rel * 100.0))?;
    Ok(format!(
        "constant width 0, identical reruns, Bernoulli width {width:.4} vs {normal:.4} ({:.1}% off)",
        rel * 100.0
    ))
}

fn parser_round_trip() -> Outcome {
    let rules = RuleSet::default_rules();
    let corpus = generate_synthetic_corpus(500, &DefectProfile::NONE, 3, &rules);
    let mut transcripts = 0;
    for c in &corpus {
        let diagnosis = simulated::render_diagnosis(&c.spec, &c.defects, &rules);
        let description = simulated::render_description(&c.spec, &c.defects);
        let judged = simulated::render_judgment(&description, &rules, Some(&c.defects));
        let expected_final = match c.case.ground_truth {
            Label::Abnormal => FinalVerdict::Positive,
            Label::Normal => FinalVerdict::Negative,
        };
        for (kind, text) in [("diagnosis", &diagnosis), ("description", &description), ("judgment", &judged)] {
            transcripts += 1;
            let out = parse_output(text, &rules, Framework::Dvdx);
            let table = out.reach_table();
            check(out.observations.len() == MovementKind::PERFORMED.len() * 2, || {
                format!("{} {kind}: {} observations", c.case.case_id, out.observations.len())
            })?;
            for action in MovementKind::PERFORMED {
                for side in Side::BOTH {
                    let want = c.spec.side(side).reach(action);
                    check(table.get(&(action, side)) == Some(&want), || {
                        format!("{} {kind}: {action:?}/{side:?} parsed {:?}, spec {want:?}", c.case.case_id, table.get(&(action, side)))
                    })?;
                }
            }
            if kind != "description" {
                check(out.final_verdict == expected_final && out.diagnostics.is_empty(), || {
                    format!("{} {kind}: final {:?}, diagnostics {:?}", c.case.case_id, out.final_verdict, out.diagnostics)
                })?;
                let cut = &text[..text.find(FINAL_HEADER).unwrap_or(text.len())];
                let truncated = parse_output(cut, &rules, Framework::Dvdx);
                check(
                    truncated.final_verdict == FinalVerdict::Invalid
                        && truncated.diagnostics.contains(&ParseDiagnostic::MissingSection(FINAL_HEADER.into())),
                    || format!("{} {kind}: removed FINAL not reported", c.case.case_id),
                )?;
            }
        }
    }
    Ok(format!("{transcripts} transcripts recovered exactly; FINAL removal yields invalid + MissingSection"))
}

fn prompt_lint() -> Outcome {
    let flagged = lint_body("Ask the patient to flex the elbow at 30 degrees.");
    check(!flagged.passed(), || "angle phrase not flagged".into())?;
    let rules = RuleSet::default_rules();
    for kind in [PromptKind::A, PromptKind::B, PromptKind::C] {
        let report = lint_prompt(&render_prompt(kind, &rules));
        check(report.passed(), || format!("prompt {kind} has violations: {:?}", report.violations))?;
    }
    let a = render_prompt(PromptKind::A, &rules);
    let c = render_prompt(PromptKind::C, &rules);
    let (block_a, block_c) = (extract_rules_block(&a.body), extract_rules_block(&c.body));
    check(block_a.is_some() && block_a == block_c, || "rules blocks differ".into())?;
    Ok(format!(
        "angle phrase flagged ({} violation), default prompts clean, A/C rules blocks byte-equal ({} bytes)",
        flagged.violations.len(),
        block_a.map_or(0, str::len)
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("f1-consistency", f1_consistency, Duration::from_millis(100)),
        ("confusion-matrix-reconstruction", confusion_reconstruction, Duration::from_secs(1)),
        ("usability-overall-decomposition", usability_decomposition, Duration::from_millis(100)),
        ("scenario-nesting", scenario_nesting, Duration::from_secs(5)),
        ("usability-lattice-monotonicity", usability_lattice, Duration::from_millis(100)),
        ("oracle-equivalence-end-to-end", oracle_equivalence, Duration::from_secs(30)),
        ("bootstrap-behaviour", bootstrap_behaviour, Duration::from_secs(10)),
        ("parser-round-trip", parser_round_trip, Duration::from_secs(5)),
        ("prompt-lint", prompt_lint, Duration::from_millis(500)),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        // Budgets assume an optimised build; debug builds get ten times the room.
        let budget = if cfg!(debug_assertions) { budget * 10 } else { budget };
        let outcome = outcome.and_then(|detail| {
            if elapsed <= budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {elapsed:.2?}, budget {budget:.2?}"))
            }
        });
        match outcome {
            Ok(detail) => println!("PASS {name} ({elapsed:.2?}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({elapsed:.2?}): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
