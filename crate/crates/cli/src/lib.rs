//! File-system front end for `chimera-core`: the `chimera` command, tree
//! scanning and report rendering.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | clean / accepted / success |
//! | 1 | at least one suspicious file, or `validate` found a single format |
//! | 2 | at least one polyglot, or signature rejected |
//! | 3 | I/O or processing error |
//! | 64 | usage error |

pub mod inspect;
pub mod report;
pub mod scan;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chimera_core::chimera::{build_chimera, validate_chimera, SpliceMode};
use chimera_core::detector::{DetectOptions, Verdict, DEFAULT_MIN_FOREIGN_SPAN};
use chimera_core::pdf_lite::{make_fixture_pdf, scan_pdf, XrefOrigin};
use chimera_core::sanitizer::sanitize;
use chimera_core::signet::{
    attack_demo, sign_detached, verify_envelope, BindingMode, DigestSigner, SignatureEnvelope,
};
use chimera_core::tiff_codec::{make_fixture_tiff, parse_tiff, FixtureVariant, TiffFixture};
use chimera_core::Format;
use clap::{Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SUSPICIOUS: i32 = 1;
pub const EXIT_POLYGLOT: i32 = 2;
pub const EXIT_REJECTED: i32 = 2;
pub const EXIT_ERROR: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

pub const DEFAULT_SIGNER_ID: &str = "chimera-test-signer";

#[derive(Debug, Parser)]
#[command(
    name = "chimera",
    version,
    about = "Build, detect and disarm PDF/TIFF polyglots"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Pdf,
    Tiff,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Pdf => Format::Pdf,
            FormatArg::Tiff => Format::Tiff,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Splice a PDF into a TIFF, producing a file valid as both
    Forge {
        #[arg(long)]
        tiff: PathBuf,
        #[arg(long)]
        pdf: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also shift the PDF's xref and startxref so they resolve from byte 0
        #[arg(long)]
        strict_pdf: bool,
        /// Write the table of rewritten offsets here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check whether a file parses as TIFF and as PDF (exit 0 only if both)
    Validate { path: PathBuf },
    /// Scan files or directories for polyglots
    Detect {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Emit JSON instead of text
        #[arg(long)]
        json: bool,
        /// Ignore unreferenced runs shorter than this many bytes
        #[arg(long, default_value_t = DEFAULT_MIN_FOREIGN_SPAN)]
        min_foreign: u64,
    },
    /// Dump the TIFF and/or PDF structure of a file
    Inspect {
        path: PathBuf,
        #[arg(long = "as", value_enum)]
        as_format: Option<FormatArg>,
    },
    /// Re-serialize a file under one format, dropping everything else
    Sanitize {
        path: PathBuf,
        #[arg(long = "as", value_enum)]
        as_format: FormatArg,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write a detached signature envelope for a file
    Sign {
        path: PathBuf,
        /// Filename recorded in a bound envelope
        #[arg(long)]
        name: String,
        #[arg(long)]
        mime: String,
        /// Bind the filename and MIME type into the signature
        #[arg(long)]
        bind: bool,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = DEFAULT_SIGNER_ID)]
        signer_id: String,
    },
    /// Check a detached signature envelope against a file
    Verify {
        envelope: PathBuf,
        #[arg(long)]
        content: PathBuf,
        /// Name the file is presented under
        #[arg(long)]
        name: String,
        #[arg(long)]
        mime: String,
        #[arg(long, default_value = DEFAULT_SIGNER_ID)]
        signer_id: String,
    },
    /// Run the sign-then-rename scenario and write every artifact
    Demo {
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } | CliError::Failed(_) => EXIT_ERROR,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn failed(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Failed(format!("{context}: {e}"))
}

/// Parses `args` (program name first) and runs the command. Results go to
/// `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "chimera: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut text = String::new();
    let code = match command {
        Command::Forge {
            tiff,
            pdf,
            output,
            strict_pdf,
            report,
        } => {
            let mode = if strict_pdf {
                SpliceMode::Strict
            } else {
                SpliceMode::PaperFaithful
            };
            let (bytes, rep) =
                build_chimera(&read(&tiff)?, &read(&pdf)?, mode).map_err(|e| failed("forge", e))?;
            write(&output, &bytes)?;
            if let Some(path) = report {
                write(&path, rep.to_table().as_bytes())?;
            }
            let first = rep.rewrites.first().map(|r| r.new_offset).unwrap_or(0);
            let _ = writeln!(
                text,
                "wrote {} ({} bytes): PDF at {}, shift 0x{:X}, first IFD 0x{:X}, {} offsets rewritten",
                output.display(),
                bytes.len(),
                rep.pdf_span,
                rep.shift,
                first,
                rep.rewrites.len()
            );
            EXIT_OK
        }
        Command::Validate { path } => {
            let v = validate_chimera(&read(&path)?);
            match &v.tiff {
                Ok(()) => text.push_str("tiff: ok\n"),
                Err(e) => {
                    let _ = writeln!(text, "tiff: {e}");
                }
            }
            match &v.pdf {
                Ok(origin) => {
                    let from = match origin {
                        XrefOrigin::FileStart => "byte 0",
                        XrefOrigin::Header => "header",
                    };
                    let _ = writeln!(text, "pdf: ok (startxref counts from {from})");
                }
                Err(e) => {
                    let _ = writeln!(text, "pdf: {e}");
                }
            }
            let _ = writeln!(text, "both: {}", v.both());
            if v.both() {
                EXIT_OK
            } else {
                EXIT_SUSPICIOUS
            }
        }
        Command::Detect {
            paths,
            json,
            min_foreign,
        } => {
            let options = DetectOptions {
                min_foreign_span: min_foreign,
            };
            let reports = scan::scan_tree(&paths, &options);
            text = if json {
                report::to_json(&reports) + "\n"
            } else {
                report::to_text(&reports)
            };
            detect_exit_code(&reports)
        }
        Command::Inspect { path, as_format } => {
            let bytes = read(&path)?;
            let wanted = match as_format {
                Some(f) => vec![Format::from(f)],
                None => vec![Format::Tiff, Format::Pdf],
            };
            let mut any = false;
            for f in wanted {
                let dump = match f {
                    Format::Tiff => parse_tiff(&bytes)
                        .map(|d| inspect::tiff_dump(&d))
                        .map_err(|e| e.to_string()),
                    Format::Pdf => scan_pdf(&bytes)
                        .map(|s| inspect::pdf_dump(&s))
                        .map_err(|e| e.to_string()),
                };
                match dump {
                    Ok(d) => {
                        any = true;
                        text.push_str(&d);
                    }
                    Err(e) => {
                        let _ = writeln!(text, "not a {}: {}", f.name(), e);
                    }
                }
            }
            if !any {
                let _ = out.write_all(text.as_bytes());
                return Err(CliError::Failed(format!(
                    "{}: no structure recognized",
                    path.display()
                )));
            }
            EXIT_OK
        }
        Command::Sanitize {
            path,
            as_format,
            output,
        } => {
            let bytes = read(&path)?;
            let o = sanitize(&bytes, as_format.into()).map_err(|e| failed("sanitize", e))?;
            write(&output, &o.output)?;
            let _ = writeln!(
                text,
                "wrote {} as {} ({} bytes, delta {:+}); dropped {} bytes in {} spans",
                output.display(),
                o.claimed_type.name(),
                o.output.len(),
                o.size_delta,
                o.dropped_len(),
                o.dropped_spans.len()
            );
            if !o.dropped_spans.is_empty() {
                let _ = writeln!(text, "start\tend\tlength");
                for s in &o.dropped_spans {
                    let _ = writeln!(text, "0x{:X}\t0x{:X}\t{}", s.start, s.end, s.len());
                }
            }
            EXIT_OK
        }
        Command::Sign {
            path,
            name,
            mime,
            bind,
            output,
            signer_id,
        } => {
            let content = read(&path)?;
            let mode = if bind {
                BindingMode::Hardened
            } else {
                BindingMode::Legacy
            };
            let backend = DigestSigner::new(signer_id);
            let env = sign_detached(&content, &name, &mime, mode, &backend)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let wire = env.encode().map_err(|e| failed("encode", e))?;
            write(&output, &wire)?;
            let _ = writeln!(
                text,
                "wrote {} ({} envelope, digest {})",
                output.display(),
                mode.as_str(),
                hex::encode(&env.digest)
            );
            EXIT_OK
        }
        Command::Verify {
            envelope,
            content,
            name,
            mime,
            signer_id,
        } => {
            let env = SignatureEnvelope::decode(&read(&envelope)?)
                .map_err(|e| failed(&envelope.display().to_string(), e))?;
            let verdict = verify_envelope(
                &env,
                &read(&content)?,
                &name,
                &mime,
                &DigestSigner::new(signer_id),
            );
            let _ = writeln!(text, "{verdict}");
            if verdict.accepted() {
                EXIT_OK
            } else {
                EXIT_REJECTED
            }
        }
        Command::Demo { output } => {
            text = run_demo(&output)?;
            EXIT_OK
        }
    };
    let _ = out.write_all(text.as_bytes());
    Ok(code)
}

/// 0 if every file is clean, 1 if any is suspicious, 2 if any is a
/// polyglot; 3 if any file could not be examined.
pub fn detect_exit_code(reports: &[scan::FileReport]) -> i32 {
    if reports.iter().any(|r| r.outcome.is_err()) {
        return EXIT_ERROR;
    }
    match reports.iter().filter_map(|r| r.verdict()).max() {
        Some(Verdict::Polyglot) => EXIT_POLYGLOT,
        Some(Verdict::Suspicious) => EXIT_SUSPICIOUS,
        _ => EXIT_OK,
    }
}

pub fn demo_inputs() -> (Vec<u8>, Vec<u8>) {
    let tiff = make_fixture_tiff(
        &TiffFixture::new(96, 32, FixtureVariant::Bilevel)
            .software("1 million Euros")
            .date_time("2010:01:01 00:00:00"),
    );
    let pdf = make_fixture_pdf("100,000 Euros", "chimera").expect("fixed text is printable");
    (tiff, pdf)
}

fn run_demo(dir: &Path) -> Result<String, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let (tiff, pdf) = demo_inputs();
    let backend = DigestSigner::new(DEFAULT_SIGNER_ID);
    let t = attack_demo(&tiff, &pdf, &backend).map_err(|e| failed("demo", e))?;
    let encode = |e: &SignatureEnvelope| e.encode().map_err(|e| failed("encode", e));
    write(&dir.join("Contract.tif"), &tiff)?;
    write(&dir.join("Contract.pdf"), &pdf)?;
    write(&dir.join("Contract.chimera"), &t.document)?;
    write(&dir.join("Contract.pdf.dse"), &encode(&t.legacy)?)?;
    write(
        &dir.join("Contract.pdf.hardened.dse"),
        &encode(&t.hardened)?,
    )?;
    if let Some(r) = &t.chimera_report {
        write(&dir.join("forge-report.tsv"), r.to_table().as_bytes())?;
    }
    let transcript = t.to_string();
    write(&dir.join("transcript.txt"), transcript.as_bytes())?;
    Ok(transcript)
}
