mod args;
mod manifest;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, ReplayArgs};
use manifest::{digest_file, FileDigest, Manifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mieo::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("replay mismatch: {0}")]
    Replay(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_validation() => 2,
            _ => 3,
        }
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn relative(path: &Path, root: &Path) -> PathBuf {
    path.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}

/// Runs an artifact-producing command and writes its manifest.
fn execute(mut command: Command) -> Result<Manifest, CliError> {
    command.absolutize();
    let rec = match &command {
        Command::SynthGen(a) => run::synth_gen(a)?,
        Command::Split(a) => run::split_cmd(a)?,
        Command::TrainMieo(a) => run::train_mieo(a)?,
        Command::TrainClf(a) => run::train_clf(a)?,
        Command::Encode(a) => run::encode(a)?,
        Command::Impute(a) => run::impute(a)?,
        Command::Evaluate(a) => run::evaluate(a)?,
        Command::GridSearch(a) => run::grid_search(a)?,
        Command::Replay(_) => unreachable!("replay is dispatched separately"),
    };
    let inputs = rec
        .inputs
        .iter()
        .map(|p| Ok(FileDigest { path: p.clone(), sha256: digest_file(p)? }))
        .collect::<Result<Vec<_>, CliError>>()?;
    let outputs = rec
        .outputs
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: relative(p, &rec.root),
                sha256: digest_file(p)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command,
        resolved: rec.resolved,
        seed: rec.seed,
        inputs,
        outputs,
        unstable_outputs: rec.unstable_outputs.iter().map(|p| relative(p, &rec.root)).collect(),
    };
    manifest.save(&rec.manifest_path)?;
    Ok(manifest)
}

fn replay(a: &ReplayArgs) -> Result<(), CliError> {
    let recorded = Manifest::load(&a.manifest)?;
    for input in &recorded.inputs {
        let now = digest_file(&input.path)?;
        if now != input.sha256 {
            return Err(CliError::Replay(format!("input {} changed since the recorded run", input.path.display())));
        }
    }
    let into = match &a.into {
        Some(d) => d.clone(),
        None => a.manifest.parent().unwrap_or(Path::new(".")).join("replay"),
    };
    std::fs::create_dir_all(&into).map_err(|source| CliError::Io {
        path: into.clone(),
        source,
    })?;
    let into = std::path::absolute(&into).unwrap_or(into);
    let mut command = recorded.command.clone();
    command.redirect(&into);
    let fresh = execute(command)?;
    let mut mismatches = Vec::new();
    for old in &recorded.outputs {
        match fresh.outputs.iter().find(|f| f.path == old.path) {
            Some(new) if new.sha256 == old.sha256 => {}
            Some(_) => mismatches.push(format!("{} differs", old.path.display())),
            None => mismatches.push(format!("{} was not produced", old.path.display())),
        }
    }
    if !mismatches.is_empty() {
        return Err(CliError::Replay(mismatches.join("; ")));
    }
    println!(
        "replayed {}: {} outputs bit-identical in {}",
        recorded.command.name(),
        recorded.outputs.len(),
        into.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match cli.command {
        Command::Replay(a) => replay(&a),
        other => execute(other).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
