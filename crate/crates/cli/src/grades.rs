use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use romdx_core::GradingStore;

use crate::cli::{ExportArgs, ImportArgs};
use crate::workspace::Workspace;
use crate::{exit, CmdResult, ExitOnErr, Failure};

pub fn export(ws: &Workspace, args: &ExportArgs) -> CmdResult {
    let store = GradingStore::open(&ws.grades_path(), None).exit_with(exit::INPUT)?;
    let count = match &args.out {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            let n = store.export_gradings(&mut out, args.framework).exit_with(exit::INTERNAL)?;
            out.flush()?;
            n
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            store.export_gradings(&mut lock, args.framework).exit_with(exit::INTERNAL)?
        }
    };
    eprintln!("exported {count} grading events");
    Ok(())
}

pub fn import(ws: &Workspace, args: &ImportArgs) -> CmdResult {
    if !args.input.exists() {
        return Err(Failure::input(format!("{} not found", args.input.display())));
    }
    let _lock = ws.lock()?;
    let known = ws.result_keys()?;
    let mut store = GradingStore::open(&ws.grades_path(), Some(known)).exit_with(exit::INPUT)?;
    let count = store
        .import_gradings(BufReader::new(File::open(&args.input)?))
        .exit_with(exit::INPUT)?;
    println!("imported {count} grading events");
    Ok(())
}
