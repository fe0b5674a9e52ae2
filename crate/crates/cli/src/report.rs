//! Text and JSON renderings of detection results.

use std::fmt::Write as _;

use chimera_core::detector::Finding;
use serde::Serialize;

use crate::scan::FileReport;

#[derive(Debug, Serialize, PartialEq, Eq)]
pub struct SpanJson {
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Serialize, PartialEq, Eq)]
pub struct FindingJson {
    pub kind: &'static str,
    pub span: SpanJson,
    pub severity: &'static str,
    pub evidence: String,
    pub note: String,
}

/// One object per scanned file. Field order and names are stable.
#[derive(Debug, Serialize, PartialEq, Eq)]
pub struct FileJson {
    pub path: String,
    pub claimed_type: &'static str,
    pub verdict: Option<&'static str>,
    pub findings: Vec<FindingJson>,
    pub error: Option<String>,
}

impl From<&Finding> for FindingJson {
    fn from(f: &Finding) -> Self {
        FindingJson {
            kind: f.kind.as_str(),
            span: SpanJson {
                start: f.span.start,
                end: f.span.end,
            },
            severity: f.severity.as_str(),
            evidence: hex::encode(&f.evidence),
            note: f.note.clone(),
        }
    }
}

impl From<&FileReport> for FileJson {
    fn from(r: &FileReport) -> Self {
        let (verdict, findings, error) = match &r.outcome {
            Ok(rep) => (
                Some(rep.verdict.as_str()),
                rep.findings.iter().map(FindingJson::from).collect(),
                None,
            ),
            Err(e) => (None, Vec::new(), Some(e.clone())),
        };
        FileJson {
            path: r.path.display().to_string(),
            claimed_type: r.claimed_type.as_str(),
            verdict,
            findings,
            error,
        }
    }
}

pub fn to_json(reports: &[FileReport]) -> String {
    let files: Vec<FileJson> = reports.iter().map(FileJson::from).collect();
    serde_json::to_string_pretty(&files).expect("report types always serialize")
}

pub fn to_text(reports: &[FileReport]) -> String {
    let mut out = String::new();
    for r in reports {
        match &r.outcome {
            Ok(rep) => {
                let _ = writeln!(
                    out,
                    "{}: {} (claimed {})",
                    r.path.display(),
                    rep.verdict.as_str(),
                    r.claimed_type.as_str()
                );
                for f in &rep.findings {
                    let _ = write!(
                        out,
                        "  [{}] {} at {}",
                        f.severity.as_str(),
                        f.kind.as_str(),
                        f.span
                    );
                    if !f.note.is_empty() {
                        let _ = write!(out, ": {}", f.note);
                    }
                    out.push('\n');
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{}: error: {}", r.path.display(), e);
            }
        }
    }
    out
}
