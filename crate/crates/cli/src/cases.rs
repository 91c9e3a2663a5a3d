use std::collections::BTreeMap;

use romdx_core::gateway::{generate_synthetic_corpus, DefectProfile};
use romdx_core::ingest::{ingest_manifest, preprocess_all, CaseSummary, PrepConfig};
use romdx_core::CaseSet;

use crate::cli::{IngestArgs, PreprocessArgs, SimulateArgs};
use crate::config::CliConfig;
use crate::workspace::Workspace;
use crate::{exit, CmdResult, ExitOnErr, Failure};

pub fn ingest(ws: &Workspace, args: &IngestArgs) -> CmdResult {
    let cases = ingest_manifest(&args.manifest).exit_with(exit::INPUT)?;
    let _lock = ws.lock()?;
    ws.guard_case_replacement(&cases, args.force)?;
    ws.save_cases(&cases)?;
    ws.remove_synthetic()?;
    print_summary(cases.summary());
    Ok(())
}

pub fn print_summary(summary: &CaseSummary) {
    println!("{summary}");
    print_counts("age_band", &summary.by_age_band);
    print_counts("gender", &summary.by_gender);
}

fn print_counts(title: &str, counts: &BTreeMap<String, usize>) {
    let width = counts.keys().map(String::len).chain([title.len()]).max().unwrap_or(0);
    println!();
    println!("{title:<width$}  cases");
    for (key, n) in counts {
        println!("{key:<width$}  {n:>5}");
    }
}

pub fn preprocess(ws: &Workspace, cfg: &CliConfig, args: &PreprocessArgs) -> CmdResult {
    let _lock = ws.lock()?;
    let cases = ws.load_cases()?;
    let settings = &cfg.preprocess;
    let exec = args.exec.clone().or_else(|| settings.exec.clone()).unwrap_or_default();
    if exec.trim().is_empty() {
        return Err(Failure::backend(
            "no preprocessing command configured; pass --exec or set preprocess.exec",
        ));
    }
    let crop = match args.crop_region().map_err(Failure::input)? {
        Some(region) => region,
        None => match settings.crop.as_deref() {
            None => PrepConfig::default().crop,
            Some("none") => None,
            Some(raw) => Some(raw.parse().map_err(Failure::input)?),
        },
    };
    let target_kbps = match args.target_kbps.or(settings.target_kbps) {
        Some(0) => None,
        Some(k) => Some(k),
        None => PrepConfig::default().target_kbps,
    };
    let config = PrepConfig {
        crop,
        target_kbps,
        exec_template: exec,
        output_dir: ws.root().join("cases").join("prepped"),
    };

    let pending: Vec<_> = cases.cases().iter().filter(|c| !c.preprocess_done).cloned().collect();
    let outcomes = preprocess_all(&pending, &config, args.concurrency);
    let mut updated = cases.clone();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(case) => {
                updated.update(case);
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    ws.save_cases(&updated)?;
    let done = pending.len() - failures.len();
    println!(
        "preprocessed {done} of {} pending cases ({} already done)",
        pending.len(),
        cases.len() - pending.len()
    );
    if failures.is_empty() {
        Ok(())
    } else {
        for f in &failures {
            eprintln!("  {f}");
        }
        Err(Failure::incomplete(format!("{} cases failed preprocessing", failures.len())))
    }
}

pub fn simulate(ws: &Workspace, cfg: &CliConfig, args: &SimulateArgs) -> CmdResult {
    if args.n == 0 {
        return Err(Failure::input("--n must be at least 1"));
    }
    let profile = DefectProfile {
        omit_movement_prob: args.omit,
        contradiction_prob: args.contradiction,
        logic_leap_prob: args.logic_leap,
    };
    profile.validate().map_err(Failure::input)?;
    let rules = cfg.rule_set()?;
    let corpus = generate_synthetic_corpus(args.n, &profile, args.seed, &rules);
    let cases = CaseSet::new(corpus.iter().map(|c| c.case.clone()).collect()).exit_with(exit::INTERNAL)?;

    let _lock = ws.lock()?;
    ws.guard_case_replacement(&cases, args.force)?;
    ws.save_cases(&cases)?;
    ws.save_synthetic(&corpus)?;
    let defective = corpus.iter().filter(|c| !c.defects.is_clean()).count();
    print_summary(cases.summary());
    println!();
    println!("{defective} cases carry injected defects");
    Ok(())
}
