use std::fs;
use std::path::{Path, PathBuf};

use gowers_forms::io::Check;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// A file read or written by a command, referenced by content hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

impl FileRef {
    pub fn of(path: &Path, bytes: &[u8]) -> Self {
        Self { path: path.display().to_string(), sha256: sha256_hex(bytes) }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything a command produced. `args` replays the command, so the
/// verifier can recompute the report from the referenced inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub args: Vec<String>,
    pub inputs: Vec<FileRef>,
    pub outputs: Value,
    pub files: Vec<FileRef>,
    pub checks: Vec<Check>,
    pub trace: Value,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.verdict)
    }
}

/// Collects inputs, outputs and checks while a command runs.
pub struct Builder {
    pub report: Report,
    out_dir: Option<PathBuf>,
    /// Artifacts held back until the run succeeds.
    pending: Vec<(String, String)>,
}

impl Builder {
    pub fn new(command: &str, args: Vec<String>, out_dir: Option<PathBuf>) -> Self {
        let report = Report { command: command.into(), args, inputs: Vec::new(), outputs: Value::Null, files: Vec::new(), checks: Vec::new(), trace: Value::Null };
        Self { report, out_dir, pending: Vec::new() }
    }

    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        self.report.inputs.push(FileRef::of(path, &bytes));
        String::from_utf8(bytes).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn check(&mut self, c: Check) {
        self.report.checks.push(c);
    }

    /// Registers an artifact; it is hashed now and written by [`Builder::finish`].
    pub fn artifact(&mut self, name: &str, text: String) {
        // Relative to the report's own directory, so reports are relocatable.
        self.report.files.push(FileRef::of(Path::new(name), text.as_bytes()));
        self.pending.push((name.into(), text));
    }

    /// Writes artifacts and the report into the output directory, if any.
    pub fn finish(self) -> Result<Report, CliError> {
        if let Some(dir) = &self.out_dir {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
            for (name, text) in &self.pending {
                fs::write(dir.join(name), text).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
            }
            let text = gowers_forms::io::to_json(&self.report)?;
            fs::write(dir.join("report.json"), text).map_err(|e| CliError::Io(format!("report.json: {e}")))?;
        }
        Ok(self.report)
    }
}

/// What `report-verify` found.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub inputs_match: bool,
    pub checks_consistent: bool,
    pub recomputed_identical: bool,
    pub mismatches: Vec<String>,
}

pub fn compare(original: &Report, fresh: &Report) -> Verification {
    let mut mismatches = Vec::new();
    let inputs_match = original.inputs == fresh.inputs;
    if !inputs_match {
        mismatches.push("input hashes differ".into());
    }
    let checks_consistent = original.checks.iter().all(|c| c.consistent());
    if !checks_consistent {
        mismatches.extend(original.checks.iter().filter(|c| !c.consistent()).map(|c| format!("verdict of `{}` does not follow from its numbers", c.name)));
    }
    let mut same = true;
    for (field, a, b) in [
        ("outputs", &original.outputs, &fresh.outputs),
        ("trace", &original.trace, &fresh.trace),
    ] {
        if a != b {
            same = false;
            mismatches.push(format!("{field} differ on recomputation"));
        }
    }
    if original.checks != fresh.checks {
        same = false;
        mismatches.push("checks differ on recomputation".into());
    }
    let artifact_hashes = |r: &Report| r.files.iter().map(|f| f.sha256.clone()).collect::<Vec<_>>();
    if artifact_hashes(original) != artifact_hashes(fresh) {
        same = false;
        mismatches.push("artifact hashes differ on recomputation".into());
    }
    Verification { inputs_match, checks_consistent, recomputed_identical: same, mismatches }
}
