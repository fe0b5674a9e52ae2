//! Directory walking and parallel detection.

use std::fs;
use std::path::{Path, PathBuf};

use chimera_core::detector::{detect_with, ClaimedType, DetectOptions, DetectionReport, Verdict};
use rayon::prelude::*;
use walkdir::WalkDir;

/// Outcome for one file: a report, or the reason it could not be read.
#[derive(Debug, Clone)]
pub struct FileReport {
    pub path: PathBuf,
    pub claimed_type: ClaimedType,
    pub outcome: Result<DetectionReport, String>,
}

impl FileReport {
    pub fn verdict(&self) -> Option<Verdict> {
        self.outcome.as_ref().ok().map(|r| r.verdict)
    }
}

pub fn claimed_type_of(path: &Path) -> ClaimedType {
    path.extension()
        .and_then(|e| e.to_str())
        .map(ClaimedType::from_extension)
        .unwrap_or(ClaimedType::Unknown)
}

/// Runs the detector on every regular file under `roots`, following
/// symlinks. Unreadable entries become error reports instead of aborting
/// the walk. Results are sorted by path.
pub fn scan_tree<P: AsRef<Path>>(roots: &[P], options: &DetectOptions) -> Vec<FileReport> {
    let mut targets: Vec<Result<PathBuf, (PathBuf, String)>> = Vec::new();
    for root in roots {
        let root = root.as_ref();
        for entry in WalkDir::new(root).follow_links(true) {
            match entry {
                Ok(e) if e.file_type().is_dir() => {}
                Ok(e) => targets.push(Ok(e.into_path())),
                Err(err) => {
                    let path = err.path().unwrap_or(root).to_path_buf();
                    targets.push(Err((path, err.to_string())));
                }
            }
        }
    }

    let mut reports: Vec<FileReport> = targets
        .into_par_iter()
        .map(|target| match target {
            Ok(path) => {
                let claimed_type = claimed_type_of(&path);
                let outcome = fs::read(&path)
                    .map(|bytes| detect_with(&bytes, claimed_type, options))
                    .map_err(|e| e.to_string());
                FileReport {
                    path,
                    claimed_type,
                    outcome,
                }
            }
            Err((path, message)) => FileReport {
                claimed_type: claimed_type_of(&path),
                path,
                outcome: Err(message),
            },
        })
        .collect();
    reports.sort_by(|a, b| a.path.cmp(&b.path));
    reports
}
