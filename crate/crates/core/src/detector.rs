//! Heuristic polyglot detection, meant to run before a file is signed.
//!
//! Detection reuses the real parsers, so every finding carries an exact
//! byte span. The verdict ladder is:
//!
//! * `Polyglot`: the bytes open as both a TIFF and a PDF.
//! * `Suspicious`: at least one finding of severity `Suspicious` or worse.
//! * `Clean`: everything else.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use crate::chimera::validate_chimera;
use crate::pdf_lite::{find_all, find_header, scan_pdf, PdfSkeleton, HEADER_LEN as PDF_HEADER_LEN};
use crate::span::ByteSpan;
use crate::tiff_codec::{parse_tiff, tags, FieldType, TiffDocument};
use crate::Format;

pub const DEFAULT_MIN_FOREIGN_SPAN: u64 = 16;
pub const MAX_EVIDENCE: usize = 32;

/// Embedded TIFF headers probed beyond offset 0.
const MAX_TIFF_CANDIDATES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClaimedType {
    Pdf,
    Tiff,
    Unknown,
}

impl ClaimedType {
    /// Infers the claim from a file extension (case-insensitive, with or
    /// without the dot).
    pub fn from_extension(ext: &str) -> Self {
        let ext = ext.trim_start_matches('.');
        if ext.eq_ignore_ascii_case("pdf") {
            ClaimedType::Pdf
        } else if ext.eq_ignore_ascii_case("tif") || ext.eq_ignore_ascii_case("tiff") {
            ClaimedType::Tiff
        } else {
            ClaimedType::Unknown
        }
    }

    pub fn from_file_name(name: &str) -> Self {
        match name.rsplit_once('.') {
            Some((_, ext)) => ClaimedType::from_extension(ext),
            None => ClaimedType::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClaimedType::Pdf => "pdf",
            ClaimedType::Tiff => "tiff",
            ClaimedType::Unknown => "unknown",
        }
    }

    fn includes(self, format: Format) -> bool {
        match self {
            ClaimedType::Unknown => true,
            ClaimedType::Pdf => format == Format::Pdf,
            ClaimedType::Tiff => format == Format::Tiff,
        }
    }
}

impl From<Format> for ClaimedType {
    fn from(f: Format) -> Self {
        match f {
            Format::Pdf => ClaimedType::Pdf,
            Format::Tiff => ClaimedType::Tiff,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FindingKind {
    TiffMagicAtStart,
    PdfHeaderDisplaced,
    PdfHeaderInsideTiff,
    TrailingPdfTrailer,
    ForeignSpan,
    XrefResolvesOnlyWithHeaderOrigin,
    PdfA1bHeaderViolation,
    TiffParamsInsidePdf,
    PdfParamsInsideTiff,
    /// An `%%EOF` before the final one, as left by incremental updates.
    EarlierEofMarker,
}

impl FindingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FindingKind::TiffMagicAtStart => "TiffMagicAtStart",
            FindingKind::PdfHeaderDisplaced => "PdfHeaderDisplaced",
            FindingKind::PdfHeaderInsideTiff => "PdfHeaderInsideTiff",
            FindingKind::TrailingPdfTrailer => "TrailingPdfTrailer",
            FindingKind::ForeignSpan => "ForeignSpan",
            FindingKind::XrefResolvesOnlyWithHeaderOrigin => "XrefResolvesOnlyWithHeaderOrigin",
            FindingKind::PdfA1bHeaderViolation => "PdfA1bHeaderViolation",
            FindingKind::TiffParamsInsidePdf => "TiffParamsInsidePdf",
            FindingKind::PdfParamsInsideTiff => "PdfParamsInsideTiff",
            FindingKind::EarlierEofMarker => "EarlierEofMarker",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Info,
    Suspicious,
    Malicious,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Suspicious => "suspicious",
            Severity::Malicious => "malicious",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Finding {
    pub kind: FindingKind,
    pub span: ByteSpan,
    pub severity: Severity,
    /// Up to [`MAX_EVIDENCE`] raw bytes from the start of `span`.
    pub evidence: Vec<u8>,
    pub note: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verdict {
    Clean,
    Suspicious,
    Polyglot,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Clean => "clean",
            Verdict::Suspicious => "suspicious",
            Verdict::Polyglot => "polyglot",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetectionReport {
    pub claimed_type: ClaimedType,
    pub findings: Vec<Finding>,
    pub verdict: Verdict,
}

impl DetectionReport {
    pub fn has(&self, kind: FindingKind) -> bool {
        self.findings.iter().any(|f| f.kind == kind)
    }
}

impl fmt::Display for DetectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "claimed: {}  verdict: {}",
            self.claimed_type.as_str(),
            self.verdict.as_str()
        )?;
        for finding in &self.findings {
            write!(
                f,
                "  [{}] {} at {}",
                finding.severity.as_str(),
                finding.kind.as_str(),
                finding.span
            )?;
            if !finding.note.is_empty() {
                write!(f, ": {}", finding.note)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DetectOptions {
    /// Unreferenced runs shorter than this are ignored.
    pub min_foreign_span: u64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            min_foreign_span: DEFAULT_MIN_FOREIGN_SPAN,
        }
    }
}

pub fn detect(bytes: &[u8], claimed: ClaimedType) -> DetectionReport {
    detect_with(bytes, claimed, &DetectOptions::default())
}

pub fn detect_with(bytes: &[u8], claimed: ClaimedType, options: &DetectOptions) -> DetectionReport {
    let dual = validate_chimera(bytes).both();
    let tiff = parse_tiff(bytes).ok();
    let pdf = scan_pdf(bytes).ok();
    let header = find_header(bytes);
    let looks_pdf = header.is_some() || pdf.is_some();

    let mut out = Findings {
        bytes,
        dual,
        list: Vec::new(),
    };

    if bytes.starts_with(b"II*\0") || bytes.starts_with(b"MM\0*") {
        let base = if looks_pdf {
            Severity::Suspicious
        } else {
            Severity::Info
        };
        out.push(
            FindingKind::TiffMagicAtStart,
            ByteSpan::new(0, 4),
            base,
            true,
            "TIFF header at byte 0".into(),
        );
    }

    if let Some(h) = header.filter(|h| h.offset > 0) {
        let span = ByteSpan::at(h.offset as u64, PDF_HEADER_LEN as u64);
        out.push(
            FindingKind::PdfHeaderDisplaced,
            span,
            Severity::Suspicious,
            true,
            format!("%PDF-1.{} header at byte {}", h.minor, h.offset),
        );
        if let Some(doc) = &tiff {
            if doc
                .foreign_spans
                .iter()
                .any(|f| f.span().contains(span.start))
            {
                out.push(
                    FindingKind::PdfHeaderInsideTiff,
                    span,
                    Severity::Suspicious,
                    true,
                    "PDF header sits in bytes the TIFF structure never references".into(),
                );
            }
        }
    }

    if looks_pdf && claimed.includes(Format::Pdf) {
        for (at, doc) in embedded_tiffs(bytes) {
            let first = at + u64::from(doc.header.first_ifd_offset);
            let span = ByteSpan::at(first, doc.ifds[0].encoded_len());
            out.push(
                FindingKind::TiffParamsInsidePdf,
                span,
                Severity::Suspicious,
                at == 0,
                tiff_params(&doc, at),
            );
        }
    }

    if let (Some(_), Some(span)) = (&tiff, pdf_tail(bytes)) {
        if claimed.includes(Format::Tiff) {
            let note = match &pdf {
                Some(s) => format!(
                    "format: application/pdf, startxref {} -> xref tables {}",
                    s.startxref_value(),
                    s.xref_tables.len()
                ),
                None => "startxref and %%EOF markers present".into(),
            };
            out.push(
                FindingKind::PdfParamsInsideTiff,
                span,
                Severity::Suspicious,
                true,
                note,
            );
        }
    }

    if let Some(s) = &pdf {
        pdf_structure_findings(&mut out, s, bytes);
    } else if header.is_some() {
        if let Err(v) = check_pdfa_header(bytes) {
            out.push_info_pdfa(v);
        }
    }

    let mut foreign: Vec<(ByteSpan, &'static str)> = Vec::new();
    if claimed.includes(Format::Tiff) {
        if let Some(doc) = &tiff {
            foreign.extend(doc.foreign_spans.iter().map(|f| (f.span(), "TIFF")));
        }
    }
    if claimed.includes(Format::Pdf) {
        if let Some(s) = &pdf {
            foreign.extend(s.foreign_spans().into_iter().map(|sp| (sp, "PDF")));
        }
    }
    for (span, view) in foreign {
        if span.len() >= options.min_foreign_span {
            out.push(
                FindingKind::ForeignSpan,
                span,
                Severity::Suspicious,
                false,
                format!(
                    "{} bytes unreachable from the {} structure",
                    span.len(),
                    view
                ),
            );
        }
    }

    let findings = out.list;
    let verdict = if dual {
        Verdict::Polyglot
    } else if findings.iter().any(|f| f.severity >= Severity::Suspicious) {
        Verdict::Suspicious
    } else {
        Verdict::Clean
    };
    DetectionReport {
        claimed_type: claimed,
        findings,
        verdict,
    }
}

struct Findings<'a> {
    bytes: &'a [u8],
    dual: bool,
    list: Vec<Finding>,
}

impl Findings<'_> {
    /// `escalate` marks findings that become Malicious once both formats
    /// are known to open.
    fn push(
        &mut self,
        kind: FindingKind,
        span: ByteSpan,
        base: Severity,
        escalate: bool,
        note: String,
    ) {
        let severity = if escalate && self.dual && base >= Severity::Suspicious {
            Severity::Malicious
        } else {
            base
        };
        let end = span
            .end
            .min(self.bytes.len() as u64)
            .min(span.start + MAX_EVIDENCE as u64);
        let evidence = self
            .bytes
            .get(span.start as usize..end.max(span.start) as usize)
            .unwrap_or_default()
            .to_vec();
        self.list.push(Finding {
            kind,
            span,
            severity,
            evidence,
            note,
        });
    }

    fn push_info_pdfa(&mut self, v: PdfAViolation) {
        self.push(
            FindingKind::PdfA1bHeaderViolation,
            ByteSpan::at(v.offset as u64, 1),
            Severity::Info,
            false,
            format!(
                "PDF/A-1b header rule: {} at byte {}",
                v.reason.as_str(),
                v.offset
            ),
        );
    }
}

fn pdf_structure_findings(out: &mut Findings<'_>, s: &PdfSkeleton, bytes: &[u8]) {
    if s.resolution.from_header && !s.resolution.from_file_start {
        out.push(
            FindingKind::XrefResolvesOnlyWithHeaderOrigin,
            ByteSpan::new(
                s.startxref.digits.start as u64,
                s.startxref.digits.end as u64,
            ),
            Severity::Info,
            false,
            format!(
                "startxref {} lands on xref only when counted from the header at byte {}",
                s.startxref_value(),
                s.header.offset
            ),
        );
    }
    if let Err(v) = check_pdfa_header(bytes) {
        out.push_info_pdfa(v);
    }
    if s.trailer_detached() && !s.xref_tables.is_empty() {
        let block = s.final_block_span();
        out.push(
            FindingKind::TrailingPdfTrailer,
            ByteSpan::new(block.start as u64, block.end as u64),
            Severity::Suspicious,
            true,
            format!(
                "trailer copy follows {} unrelated bytes after the revision end at byte {}",
                block.start - s.document_end,
                s.document_end
            ),
        );
    }
    for &eof in &s.earlier_eofs {
        out.push(
            FindingKind::EarlierEofMarker,
            ByteSpan::at(eof as u64, 5),
            Severity::Info,
            false,
            "earlier %%EOF (incremental update or embedded revision)".into(),
        );
    }
}

/// Span from the last `startxref` through the final `%%EOF`, if both occur.
fn pdf_tail(bytes: &[u8]) -> Option<ByteSpan> {
    let eof = *find_all(bytes, b"%%EOF").last()?;
    let sx = bytes[..eof].windows(9).rposition(|w| w == b"startxref")?;
    Some(ByteSpan::new(sx as u64, eof as u64 + 5))
}

/// Every position holding a TIFF header from which a valid IFD chain parses.
fn embedded_tiffs(bytes: &[u8]) -> Vec<(u64, TiffDocument)> {
    let mut candidates: Vec<usize> = find_all(bytes, b"II*\0");
    candidates.extend(find_all(bytes, b"MM\0*"));
    candidates.sort_unstable();
    candidates.truncate(MAX_TIFF_CANDIDATES);
    candidates
        .into_iter()
        .filter_map(|at| parse_tiff(&bytes[at..]).ok().map(|d| (at as u64, d)))
        .filter(|(_, d)| !d.ifds.is_empty())
        .collect()
}

/// Dimensions, resolution and colour depth, as an image identifier would
/// print them.
fn tiff_params(doc: &TiffDocument, at: u64) -> String {
    let order = doc.byte_order();
    let ifd = &doc.ifds[0];
    let first = |tag| {
        ifd.get(tag)
            .and_then(|e| e.unsigned_values(order))
            .and_then(|v| v.first().copied())
    };
    let mut note = format!("TIFF at byte {}", at);
    if let (Some(w), Some(h)) = (first(tags::IMAGE_WIDTH), first(tags::IMAGE_LENGTH)) {
        let _ = write!(note, ", geometry {}x{}", w, h);
    }
    if let Some(e) = ifd
        .get(tags::X_RESOLUTION)
        .filter(|e| e.field_type == FieldType::Rational)
    {
        let v = e.value_bytes();
        let _ = write!(
            note,
            ", resolution {}/{}",
            order.read_u32(&v[..4]),
            order.read_u32(&v[4..8])
        );
    }
    let bits = ifd
        .get(tags::BITS_PER_SAMPLE)
        .and_then(|e| e.unsigned_values(order))
        .map(|v| v.iter().sum::<u64>())
        .unwrap_or(1);
    let _ = write!(note, ", depth {}-bit", bits);
    note
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PdfAReason {
    TooShort,
    NotPdfHeader,
    BadVersion,
}

impl PdfAReason {
    pub fn as_str(self) -> &'static str {
        match self {
            PdfAReason::TooShort => "too short",
            PdfAReason::NotPdfHeader => "file does not begin with %PDF-",
            PdfAReason::BadVersion => "version is not 1.<digit>",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PdfAViolation {
    /// First offending byte.
    pub offset: usize,
    pub reason: PdfAReason,
}

/// PDF/A-1b rule: the file must begin with `%PDF-1.<digit>`.
pub fn check_pdfa_header(bytes: &[u8]) -> Result<(), PdfAViolation> {
    const PREFIX: &[u8] = b"%PDF-1.";
    for (i, want) in PREFIX.iter().enumerate() {
        match bytes.get(i) {
            None => {
                return Err(PdfAViolation {
                    offset: i,
                    reason: PdfAReason::TooShort,
                })
            }
            Some(b) if b != want => {
                let reason = if i < 5 {
                    PdfAReason::NotPdfHeader
                } else {
                    PdfAReason::BadVersion
                };
                return Err(PdfAViolation { offset: i, reason });
            }
            Some(_) => {}
        }
    }
    match bytes.get(7) {
        None => Err(PdfAViolation {
            offset: 7,
            reason: PdfAReason::TooShort,
        }),
        Some(b) if !b.is_ascii_digit() => Err(PdfAViolation {
            offset: 7,
            reason: PdfAReason::BadVersion,
        }),
        Some(_) => Ok(()),
    }
}
