use std::collections::HashMap;
use std::fs;

use romdx_core::evaluation::{assemble_outcomes, build_report, EvalError, Report};
use romdx_core::grading::auto_grade_simulated;
use romdx_core::{GradingStatus, GradingStore, Scenario};

use crate::cli::{EvalArgs, ReportArgs, ReportFormat};
use crate::config::CliConfig;
use crate::workspace::{write_atomic, Workspace};
use crate::{exit, CmdResult, ExitOnErr, Failure};

pub const METRICS_FILE: &str = "comprehensive_metrics.csv";
pub const USABILITY_FILE: &str = "usability_index.csv";
pub const REPORT_FILE: &str = "eval.json";

pub fn eval(ws: &Workspace, cfg: &CliConfig, args: &EvalArgs) -> CmdResult {
    let mut scenarios = Vec::new();
    for &n in &args.scenarios {
        let s = Scenario::from_number(n).ok_or_else(|| Failure::input(format!("unknown scenario {n}")))?;
        if !scenarios.contains(&s) {
            scenarios.push(s);
        }
    }
    if scenarios.is_empty() {
        return Err(Failure::input("--scenarios must name at least one scenario"));
    }
    let mut eval_cfg = cfg.eval();
    if let Some(b) = args.bootstrap {
        eval_cfg.bootstrap.b = b;
    }
    if let Some(seed) = args.seed {
        eval_cfg.bootstrap.seed = seed;
    }
    eval_cfg.validate().exit_with(exit::INPUT)?;

    let _lock = ws.lock()?;
    let cases = ws.load_cases()?;
    let truths: HashMap<String, _> = cases.cases().iter().map(|c| (c.case_id.clone(), c.ground_truth)).collect();
    let frameworks = if args.frameworks.is_empty() {
        ws.frameworks_with_results()?
    } else {
        args.frameworks.clone()
    };
    if frameworks.is_empty() {
        return Err(Failure::incomplete("no results to evaluate; run `romdx run` first"));
    }

    let mut store = GradingStore::open(&ws.grades_path(), Some(ws.result_keys()?)).exit_with(exit::INPUT)?;
    let results: Vec<_> = frameworks
        .iter()
        .map(|&f| ws.load_results(f).map(|r| (f, r)))
        .collect::<Result<_, _>>()?;

    if args.auto_grade {
        let corpus = ws
            .load_synthetic()?
            .ok_or_else(|| Failure::input("--auto-grade needs a simulated corpus from `romdx simulate`"))?;
        let plans: HashMap<&str, _> = corpus.iter().map(|c| (c.case.case_id.as_str(), &c.defects)).collect();
        let mut recorded = 0;
        for (framework, framework_results) in &results {
            for result in framework_results {
                if store.status(&result.case_id, *framework) != GradingStatus::AwaitingFirst {
                    continue;
                }
                let truth = *truths
                    .get(&result.case_id)
                    .ok_or_else(|| Failure::input(format!("result for unknown case {}", result.case_id)))?;
                let grade = auto_grade_simulated(result, truth, plans.get(result.case_id.as_str()).copied())
                    .exit_with(exit::INPUT)?;
                if store.record_auto(grade).exit_with(exit::INTERNAL)? {
                    recorded += 1;
                }
            }
        }
        println!("auto-graded {recorded} results");
    }

    let grades = store.final_grades();
    let mut inputs = Vec::new();
    let mut missing = Vec::new();
    for (framework, framework_results) in &results {
        match assemble_outcomes(*framework, framework_results, &grades, &truths) {
            Ok(outcomes) => inputs.push(outcomes),
            Err(EvalError::IncompleteInputs { framework, missing: ids }) => {
                missing.extend(ids.into_iter().map(|id| format!("{framework}/{id}")));
            }
            Err(EvalError::NoInputs) => {
                return Err(Failure::incomplete(format!("no results for {framework}")));
            }
            Err(e @ EvalError::MissingTruth(_)) => return Err(Failure::input(e)),
            Err(e) => return Err(Failure::new(exit::INTERNAL, e)),
        }
    }
    if !missing.is_empty() {
        for key in &missing {
            eprintln!("ungraded: {key}");
        }
        return Err(Failure::incomplete(format!(
            "{} results have no settled grade",
            missing.len()
        )));
    }

    let report = build_report(&inputs, &scenarios, &eval_cfg).exit_with(exit::INPUT)?;
    let dir = ws.reports_dir();
    write_atomic(&dir.join(METRICS_FILE), report.metrics_csv().exit_with(exit::INTERNAL)?.as_bytes())?;
    write_atomic(&dir.join(USABILITY_FILE), report.usability_csv().exit_with(exit::INTERNAL)?.as_bytes())?;
    write_atomic(&dir.join(REPORT_FILE), serde_json::to_string_pretty(&report)?.as_bytes())?;
    println!(
        "wrote {} and {} for {} frameworks ({} bootstrap replicates, seed {})",
        dir.join(METRICS_FILE).display(),
        dir.join(USABILITY_FILE).display(),
        inputs.len(),
        eval_cfg.bootstrap.b,
        eval_cfg.bootstrap.seed
    );
    Ok(())
}

pub fn report(ws: &Workspace, args: &ReportArgs) -> CmdResult {
    let path = ws.reports_dir().join(REPORT_FILE);
    if !path.exists() {
        return Err(Failure::incomplete("no evaluation report yet; run `romdx eval` first"));
    }
    let report: Report = serde_json::from_str(&fs::read_to_string(&path)?).exit_with(exit::INPUT)?;
    match args.format {
        ReportFormat::Csv => {
            print!("{}", report.metrics_csv().exit_with(exit::INTERNAL)?);
            println!();
            print!("{}", report.usability_csv().exit_with(exit::INTERNAL)?);
        }
        ReportFormat::Md => print!("{}", report.to_markdown()),
    }
    Ok(())
}
