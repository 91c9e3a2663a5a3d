//! On-disk workspace layout and the single-writer lock.
//!
//! ```text
//! cases/cases.jsonl          validated case records
//! cases/synthetic.jsonl      simulated corpus with specs and defect plans
//! results/<framework>.jsonl  one CaseResult per line, tagged with run_id
//! results/<framework>.errors.jsonl
//! grades/events.jsonl        grading event log
//! reports/                   evaluation outputs
//! prompts/                   compiled prompt texts used by runs
//! runs/<run_id>.json         run manifests
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use romdx_core::gateway::SyntheticCase;
use romdx_core::pipelines::read_results;
use romdx_core::{CaseResult, CaseSet, Framework};
use serde::{Deserialize, Serialize};

use crate::{exit, ExitOnErr, Failure};

const LOCK_FILE: &str = ".romdx.lock";

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

/// A results-file line: the case result plus the run that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultLine {
    pub run_id: String,
    #[serde(flatten)]
    pub result: CaseResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorLine {
    pub run_id: String,
    pub case_id: String,
    pub framework: Framework,
    pub error: String,
    pub at: chrono::DateTime<chrono::Utc>,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cases_path(&self) -> PathBuf {
        self.root.join("cases").join("cases.jsonl")
    }

    pub fn synthetic_path(&self) -> PathBuf {
        self.root.join("cases").join("synthetic.jsonl")
    }

    pub fn results_path(&self, framework: Framework) -> PathBuf {
        self.root.join("results").join(format!("{framework}.jsonl"))
    }

    pub fn errors_path(&self, framework: Framework) -> PathBuf {
        self.root.join("results").join(format!("{framework}.errors.jsonl"))
    }

    pub fn grades_path(&self) -> PathBuf {
        self.root.join("grades").join("events.jsonl")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn prompts_dir(&self) -> PathBuf {
        self.root.join("prompts")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn ensure_layout(&self) -> Result<(), Failure> {
        for dir in ["cases", "results", "grades", "reports", "prompts", "runs"] {
            fs::create_dir_all(self.root.join(dir))?;
        }
        Ok(())
    }

    /// Takes the workspace lock, creating the workspace if needed.
    pub fn lock(&self) -> Result<WorkspaceLock, Failure> {
        self.ensure_layout()?;
        WorkspaceLock::acquire(&self.root.join(LOCK_FILE))
    }

    pub fn load_cases(&self) -> Result<CaseSet, Failure> {
        let path = self.cases_path();
        if !path.exists() {
            return Err(Failure::incomplete(format!(
                "no cases in {}; run `romdx ingest` or `romdx simulate` first",
                self.root.display()
            )));
        }
        CaseSet::read_jsonl(BufReader::new(File::open(&path)?)).exit_with(exit::INPUT)
    }

    pub fn save_cases(&self, cases: &CaseSet) -> Result<(), Failure> {
        let mut buf = Vec::new();
        cases.write_jsonl(&mut buf).exit_with(exit::INTERNAL)?;
        write_atomic(&self.cases_path(), &buf)
    }

    pub fn load_synthetic(&self) -> Result<Option<Vec<SyntheticCase>>, Failure> {
        let path = self.synthetic_path();
        if !path.exists() {
            return Ok(None);
        }
        let mut out = Vec::new();
        for (idx, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let case = serde_json::from_str(&line)
                .map_err(|e| Failure::input(format!("{}:{}: {e}", path.display(), idx + 1)))?;
            out.push(case);
        }
        Ok(Some(out))
    }

    pub fn save_synthetic(&self, corpus: &[SyntheticCase]) -> Result<(), Failure> {
        let mut buf = Vec::new();
        for case in corpus {
            serde_json::to_writer(&mut buf, case)?;
            buf.push(b'\n');
        }
        write_atomic(&self.synthetic_path(), &buf)
    }

    pub fn remove_synthetic(&self) -> Result<(), Failure> {
        match fs::remove_file(self.synthetic_path()) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
            _ => Ok(()),
        }
    }

    pub fn load_results(&self, framework: Framework) -> Result<Vec<CaseResult>, Failure> {
        read_results(&self.results_path(framework)).exit_with(exit::INPUT)
    }

    /// Case ids that already have a stored result for `framework`.
    pub fn completed(&self, framework: Framework) -> Result<HashSet<String>, Failure> {
        Ok(self.load_results(framework)?.into_iter().map(|r| r.case_id).collect())
    }

    /// Frameworks with at least one stored result.
    pub fn frameworks_with_results(&self) -> Result<Vec<Framework>, Failure> {
        let mut out = Vec::new();
        for framework in Framework::ALL {
            if !self.load_results(framework)?.is_empty() {
                out.push(framework);
            }
        }
        Ok(out)
    }

    /// Every (case, framework) pair with a stored result.
    pub fn result_keys(&self) -> Result<BTreeSet<(String, Framework)>, Failure> {
        let mut keys = BTreeSet::new();
        for framework in Framework::ALL {
            keys.extend(self.load_results(framework)?.into_iter().map(|r| (r.case_id, framework)));
        }
        Ok(keys)
    }

    /// Refuses to replace the stored cases with a different set while
    /// results for the old set exist, unless `force` is given.
    pub fn guard_case_replacement(&self, incoming: &CaseSet, force: bool) -> Result<(), Failure> {
        if force || !self.cases_path().exists() {
            return Ok(());
        }
        let current = self.load_cases()?;
        if current == *incoming || self.result_keys()?.is_empty() {
            return Ok(());
        }
        Err(Failure::input(
            "the workspace already holds results for a different case set; use --force to replace it",
        ))
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut file = File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Exclusive ownership of a workspace, released on drop. A lock left
/// by a process that no longer exists is taken over.
#[derive(Debug)]
pub struct WorkspaceLock {
    path: PathBuf,
}

impl WorkspaceLock {
    fn acquire(path: &Path) -> Result<Self, Failure> {
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(path) {
                Ok(mut file) => {
                    writeln!(file, "{}", std::process::id())?;
                    return Ok(Self {
                        path: path.to_path_buf(),
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(path).unwrap_or_default();
                    let pid = holder.trim().parse::<u32>().ok();
                    if pid.is_some_and(process_alive) {
                        return Err(Failure::backend(format!(
                            "workspace is locked by process {}; remove {} if that process is gone",
                            holder.trim(),
                            path.display()
                        )));
                    }
                    fs::remove_file(path)?;
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(Failure::backend(format!("could not take the lock at {}", path.display())))
    }
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn process_alive(pid: u32) -> bool {
    let proc_root = Path::new("/proc");
    if proc_root.is_dir() {
        proc_root.join(pid.to_string()).exists()
    } else {
        // Without procfs there is no portable liveness probe; assume alive.
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path());
        let held = ws.lock().unwrap();
        let err = ws.lock().unwrap_err();
        assert_eq!(err.code, exit::BACKEND);
        drop(held);
        ws.lock().unwrap();
    }

    #[test]
    fn stale_lock_is_taken_over() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path());
        ws.ensure_layout().unwrap();
        fs::write(dir.path().join(LOCK_FILE), "4294967295\n").unwrap();
        if Path::new("/proc").is_dir() {
            ws.lock().unwrap();
        }
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert!(!dir.path().join("a/b.txt.tmp").exists());
    }
}
