use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    bootstrap_ci, build_confusion, compute_metrics, effective_value, usability_block, ConfusionMatrix, EvalConfig,
    EvalError, Interval, Metrics, Scenario,
};
use crate::grading::{AdjudicatedGrade, Triple};
use crate::ingest::Label;
use crate::pipelines::{CaseResult, FinalVerdict, Framework};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub truth: Label,
    pub final_verdict: FinalVerdict,
    pub grade: Triple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkOutcomes {
    pub framework: Framework,
    pub cases: Vec<CaseOutcome>,
}

/// Joins one framework's results with grades and truth labels, ordered
/// by case id. Fails listing every result that has no settled grade.
pub fn assemble_outcomes(
    framework: Framework,
    results: &[CaseResult],
    grades: &BTreeMap<(String, Framework), AdjudicatedGrade>,
    truths: &HashMap<String, Label>,
) -> Result<FrameworkOutcomes, EvalError> {
    if results.is_empty() {
        return Err(EvalError::NoInputs);
    }
    let mut by_case: BTreeMap<&str, &CaseResult> = BTreeMap::new();
    for r in results.iter().filter(|r| r.output.framework == framework) {
        by_case.entry(&r.case_id).or_insert(r);
    }
    let mut missing = Vec::new();
    let mut cases = Vec::new();
    for (case_id, result) in by_case {
        let truth = *truths
            .get(case_id)
            .ok_or_else(|| EvalError::MissingTruth(case_id.to_string()))?;
        match grades.get(&(case_id.to_string(), framework)) {
            Some(grade) => cases.push(CaseOutcome {
                case_id: case_id.to_string(),
                truth,
                final_verdict: result.output.final_verdict,
                grade: grade.triple(),
            }),
            None => missing.push(case_id.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::IncompleteInputs { framework, missing });
    }
    if cases.is_empty() {
        return Err(EvalError::NoInputs);
    }
    Ok(FrameworkOutcomes { framework, cases })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scenario: Scenario,
    pub framework: Framework,
    pub metric: String,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsabilityRow {
    pub framework: Framework,
    pub dimension: String,
    pub interval: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRow {
    pub framework: Framework,
    pub scenario: Scenario,
    pub matrix: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub alpha: f64,
    pub metrics: Vec<MetricRow>,
    pub usability: Vec<UsabilityRow>,
    pub confusion: Vec<ConfusionRow>,
}

fn metrics_of(outcomes: &[CaseOutcome], idx: impl Iterator<Item = usize>, scenario: Scenario) -> Metrics {
    let mut cm = ConfusionMatrix::default();
    for i in idx {
        let o = &outcomes[i];
        cm.add(effective_value(scenario, o.final_verdict, &o.grade), o.truth);
    }
    compute_metrics(&cm).unwrap_or(Metrics {
        accuracy: 0.0,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    })
}

/// Metric and usability tables for the given frameworks and scenarios.
/// Rows follow the input order of frameworks, then scenarios, then
/// metric name.
pub fn build_report(
    inputs: &[FrameworkOutcomes],
    scenarios: &[Scenario],
    cfg: &EvalConfig,
) -> Result<Report, EvalError> {
    cfg.validate()?;
    if inputs.is_empty() || inputs.iter().any(|f| f.cases.is_empty()) {
        return Err(EvalError::NoInputs);
    }
    let mut report = Report {
        alpha: cfg.bootstrap.alpha,
        metrics: Vec::new(),
        usability: Vec::new(),
        confusion: Vec::new(),
    };
    for fw in inputs {
        let cases = &fw.cases;
        let truths: Vec<Label> = cases.iter().map(|c| c.truth).collect();
        for &scenario in scenarios {
            let predictions: Vec<_> = cases
                .iter()
                .map(|c| effective_value(scenario, c.final_verdict, &c.grade))
                .collect();
            let matrix = build_confusion(&predictions, &truths)?;
            let point = compute_metrics(&matrix)?;
            let intervals = bootstrap_ci(cases.len(), &cfg.bootstrap, |idx| {
                metrics_of(cases, idx.iter().copied(), scenario).as_array().to_vec()
            })?;
            for ((name, mean), (ci_lo, ci_hi)) in Metrics::NAMES.iter().zip(point.as_array()).zip(intervals) {
                report.metrics.push(MetricRow {
                    scenario,
                    framework: fw.framework,
                    metric: name.to_string(),
                    mean,
                    ci_lo,
                    ci_hi,
                });
            }
            report.confusion.push(ConfusionRow {
                framework: fw.framework,
                scenario,
                matrix,
            });
        }
        let scores: Vec<(Label, Triple)> = cases.iter().map(|c| (c.truth, c.grade)).collect();
        let block = usability_block(&scores, cfg)?;
        for (dimension, interval) in block.rows() {
            report.usability.push(UsabilityRow {
                framework: fw.framework,
                dimension: dimension.to_string(),
                interval,
            });
        }
    }
    Ok(report)
}

/// Rounds half-up to three decimals. The small offset keeps values such
/// as 0.8835 (stored as 0.88349999...) rounding up.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0 + 0.5 + 1e-9).floor() / 1000.0
}

fn fmt3(x: f64) -> String {
    format!("{:.3}", round3(x))
}

impl Report {
    pub fn write_metrics_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "framework", "metric", "mean", "ci_lo", "ci_hi"])?;
        for row in &self.metrics {
            w.write_record([
                row.scenario.as_str(),
                row.framework.as_str(),
                &row.metric,
                &fmt3(row.mean),
                &fmt3(row.ci_lo),
                &fmt3(row.ci_hi),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_usability_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["framework", "dimension", "mean", "ci_lo", "ci_hi"])?;
        for row in &self.usability {
            let cells = match row.interval {
                Some(i) => [fmt3(i.mean), fmt3(i.ci_lo), fmt3(i.ci_hi)],
                None => Default::default(),
            };
            w.write_record([row.framework.as_str(), &row.dimension, &cells[0], &cells[1], &cells[2]])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn metrics_csv(&self) -> Result<String, EvalError> {
        let mut buf = Vec::new();
        self.write_metrics_csv(&mut buf)?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    pub fn usability_csv(&self) -> Result<String, EvalError> {
        let mut buf = Vec::new();
        self.write_usability_csv(&mut buf)?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    pub fn to_markdown(&self) -> String {
        let level = format!("{}%", round3((1.0 - self.alpha) * 100.0));
        let mut md = String::new();
        let _ = writeln!(md, "## Comprehensive metrics\n");
        let _ = writeln!(
            md,
            "| Scenario | Framework | Metric | Mean | {level} CI lower | {level} CI upper |"
        );
        let _ = writeln!(md, "|---|---|---|---|---|---|");
        for row in &self.metrics {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} |",
                row.scenario,
                row.framework.display_name(),
                row.metric,
                fmt3(row.mean),
                fmt3(row.ci_lo),
                fmt3(row.ci_hi)
            );
        }
        let _ = writeln!(md, "\n## Usability index\n");
        let _ = writeln!(md, "| Framework | Dimension | Mean | {level} CI lower | {level} CI upper |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for row in &self.usability {
            let cells = match row.interval {
                Some(i) => [fmt3(i.mean), fmt3(i.ci_lo), fmt3(i.ci_hi)],
                None => ["n/a".into(), "n/a".into(), "n/a".into()],
            };
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                row.framework.display_name(),
                row.dimension,
                cells[0],
                cells[1],
                cells[2]
            );
        }
        md
    }
}
