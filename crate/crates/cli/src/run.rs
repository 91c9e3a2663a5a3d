use std::sync::atomic::{AtomicU32, Ordering};

use chrono::{DateTime, Utc};
use romdx_core::gateway::{RemoteBackend, SimulatedBackend};
use romdx_core::pipelines::{append_json_line, PipelineContext, PromptSet, RunSummary};
use romdx_core::{Backend, BackendConfig, Framework, PromptText};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cli::{BackendChoice, RunArgs};
use crate::config::CliConfig;
use crate::workspace::{write_atomic, ErrorLine, ResultLine, Workspace};
use crate::{exit, CmdResult, ExitOnErr, Failure};

/// Provenance for one invocation of `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub framework: Framework,
    pub backend: String,
    pub rule_set_version: String,
    pub config: serde_json::Value,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub summary: Option<RunSummary>,
}

fn new_run_id(framework: Framework, at: DateTime<Utc>) -> String {
    static SEQ: AtomicU32 = AtomicU32::new(0);
    format!(
        "{}-{}-{}-{}",
        framework,
        at.format("%Y%m%dT%H%M%S%.6fZ"),
        std::process::id(),
        SEQ.fetch_add(1, Ordering::Relaxed)
    )
}

fn write_prompts(ws: &Workspace, prompts: &PromptSet) -> Result<(), Failure> {
    for prompt in [&prompts.a, &prompts.b, &prompts.c] {
        let PromptText {
            kind,
            body,
            rule_set_version,
            checksum,
        } = prompt;
        write_atomic(&ws.prompts_dir().join(format!("prompt_{kind}.txt")), body.as_bytes())?;
        let meta = json!({ "kind": kind, "rule_set_version": rule_set_version, "checksum": checksum });
        write_atomic(
            &ws.prompts_dir().join(format!("prompt_{kind}.json")),
            serde_json::to_string_pretty(&meta)?.as_bytes(),
        )?;
    }
    Ok(())
}

fn build_backend(ws: &Workspace, cfg: &CliConfig, args: &RunArgs, rules: &romdx_core::RuleSet) -> Result<(Box<dyn Backend>, BackendConfig), Failure> {
    match args.backend {
        BackendChoice::Sim => {
            let corpus = ws.load_synthetic()?.ok_or_else(|| {
                Failure::backend("the simulated backend needs a corpus from `romdx simulate`")
            })?;
            let backend_cfg = BackendConfig::simulated(args.seed);
            Ok((Box::new(SimulatedBackend::new(rules.clone(), &corpus)), backend_cfg))
        }
        BackendChoice::Remote => {
            let mut backend_cfg = BackendConfig::remote_from_env().exit_with(exit::BACKEND)?;
            let settings = &cfg.backend;
            if let Some(t) = settings.timeout_s {
                backend_cfg.timeout_s = t;
            }
            if let Some(r) = settings.max_retries {
                backend_cfg.max_retries = r;
            }
            if let Some(r) = settings.rate_limit {
                backend_cfg.rate_limit = r;
            }
            let backend = RemoteBackend::new(&backend_cfg).exit_with(exit::BACKEND)?;
            Ok((Box::new(backend), backend_cfg))
        }
    }
}

pub fn run(ws: &Workspace, cfg: &CliConfig, args: &RunArgs) -> CmdResult {
    if args.frames == 0 {
        return Err(Failure::input("--frames must be at least 1"));
    }
    if args.concurrency == 0 {
        return Err(Failure::input("--concurrency must be at least 1"));
    }
    let rules = cfg.rule_set()?;
    let _lock = ws.lock()?;
    let cases = ws.load_cases()?;
    let (backend, backend_cfg) = build_backend(ws, cfg, args, &rules)?;
    let prompts = PromptSet::compile(&rules);
    write_prompts(ws, &prompts)?;

    let started_at = Utc::now();
    let run_id = new_run_id(args.framework, started_at);
    let mut manifest = RunManifest {
        run_id: run_id.clone(),
        framework: args.framework,
        backend: args.backend.as_str().to_string(),
        rule_set_version: rules.version.clone(),
        config: json!({
            "frames": args.frames,
            "concurrency": args.concurrency,
            "seed": args.seed,
            "backend": backend_cfg,
            "prompt_checksums": {
                "A": prompts.a.checksum,
                "B": prompts.b.checksum,
                "C": prompts.c.checksum,
            },
            "cases": cases.len(),
        }),
        started_at,
        finished_at: None,
        summary: None,
    };
    let manifest_path = ws.runs_dir().join(format!("{run_id}.json"));
    write_atomic(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;

    let skip = ws.completed(args.framework)?;
    let ctx = PipelineContext {
        rules: &rules,
        prompts: &prompts,
        backend: backend.as_ref(),
        backend_name: args.backend.as_str(),
    };
    let results_path = ws.results_path(args.framework);
    let errors_path = ws.errors_path(args.framework);
    let mut write_error: Option<std::io::Error> = None;
    let summary = romdx_core::pipelines::run_cases(
        args.framework,
        cases.cases(),
        args.frames,
        args.concurrency,
        &skip,
        &ctx,
        |outcome| {
            let written = match outcome {
                Ok(result) => append_json_line(
                    &results_path,
                    &ResultLine {
                        run_id: run_id.clone(),
                        result,
                    },
                ),
                Err((case_id, error)) => {
                    eprintln!("{case_id}: {error}");
                    append_json_line(
                        &errors_path,
                        &ErrorLine {
                            run_id: run_id.clone(),
                            case_id,
                            framework: args.framework,
                            error: error.to_string(),
                            at: Utc::now(),
                        },
                    )
                }
            };
            if let Err(e) = written {
                write_error.get_or_insert(e);
            }
        },
    );
    if let Some(e) = write_error {
        return Err(e.into());
    }

    manifest.finished_at = Some(Utc::now());
    manifest.summary = Some(summary);
    write_atomic(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    println!(
        "run {run_id}: {} completed, {} failed, {} skipped",
        summary.completed, summary.failed, summary.skipped
    );
    if summary.failed > 0 {
        return Err(Failure::incomplete(format!(
            "{} cases failed; see {}",
            summary.failed,
            errors_path.display()
        )));
    }
    Ok(())
}
