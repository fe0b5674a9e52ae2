//! Structural PDF scanner.
//!
//! Only the skeleton is modelled: the `%PDF-1.X` header, classic
//! cross-reference tables, the trailer, `startxref` and `%%EOF`. Content
//! streams are never interpreted. Scanning runs from the end of the file,
//! the way readers locate the cross-reference table.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::span::{self, ByteSpan};

/// The header must start within this many leading bytes.
pub const HEADER_WINDOW: usize = 1024;
/// Length of `%PDF-1.X`.
pub const HEADER_LEN: usize = 8;
/// Last offset at which a complete header still fits inside the window.
pub const MAX_HEADER_OFFSET: usize = HEADER_WINDOW - HEADER_LEN;
/// Every cross-reference record is exactly this long, EOL included.
pub const XREF_ENTRY_LEN: usize = 20;
/// Width of the offset field in a cross-reference record.
pub const XREF_OFFSET_DIGITS: usize = 10;
pub const MIN_PDF_LEN: usize = 16;

const MAX_XREF_CHAIN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PdfError {
    #[error("input is {len} bytes, too short for a PDF")]
    TooShort { len: usize },
    #[error("no %PDF-1.X header within the first 1024 bytes")]
    NoHeader,
    #[error("no %%EOF marker")]
    NoEof,
    #[error("no trailer/startxref block before the final %%EOF")]
    NoStartxref,
    #[error("malformed cross-reference table at 0x{offset:X}")]
    MalformedXref { offset: usize },
    #[error("unsupported PDF feature: {0}")]
    Unsupported(&'static str),
    #[error("startxref value {value} resolves to no xref table from either origin")]
    UnresolvedStartxref { value: u64 },
    #[error("offset {value} shifted by {delta} would be negative")]
    OffsetUnderflow { value: u64, delta: i64 },
    #[error("offset {value} needs more than the {width} digits available")]
    FieldWidthOverflow { value: u64, width: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FixtureError {
    #[error("page text must not be empty")]
    EmptyText,
    #[error("fixture text must be printable ASCII")]
    NonPrintable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Eol {
    Cr,
    Lf,
    CrLf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PdfHeader {
    /// Position of the `%`.
    pub offset: usize,
    pub major: u8,
    pub minor: u8,
    pub eol: Eol,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum XrefKind {
    Free,
    InUse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct XrefEntry {
    pub offset: u64,
    pub generation: u32,
    pub kind: XrefKind,
    /// Position of the record's first digit in the scanned file.
    pub position: usize,
}

/// One subsection of a cross-reference table.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct XrefSection {
    pub start_id: u32,
    pub entries: Vec<XrefEntry>,
    /// Position of the subsection's `start count` line.
    pub position: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StartXref {
    pub value: u64,
    pub keyword_offset: usize,
    pub digits: Range<usize>,
}

/// Which convention makes `startxref` land on an `xref` keyword.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct XrefResolution {
    pub from_file_start: bool,
    pub from_header: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum XrefOrigin {
    /// Offsets count from byte 0 of the file.
    FileStart,
    /// Offsets count from the `%` of the header.
    Header,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PdfSkeleton {
    pub header: PdfHeader,
    /// Subsections of every table reachable from `startxref`, newest first.
    pub xref_sections: Vec<XrefSection>,
    /// Positions of the `xref` keywords, newest first.
    pub xref_tables: Vec<usize>,
    /// From the final `trailer` keyword up to `startxref`.
    pub trailer_span: Range<usize>,
    pub startxref: StartXref,
    pub resolution: XrefResolution,
    /// Position of the final `%%EOF`.
    pub eof_offset: usize,
    /// End of the line holding the final `%%EOF`.
    pub eof_end: usize,
    /// Earlier `%%EOF` markers, in file order.
    pub earlier_eofs: Vec<usize>,
    pub body_span: Range<usize>,
    /// End of the `%%EOF` line that closes the revision `startxref` names.
    pub document_end: usize,
    pub file_len: usize,
}

impl PdfSkeleton {
    pub fn startxref_value(&self) -> u64 {
        self.startxref.value
    }

    /// Preferred origin; byte 0 wins when both conventions resolve.
    pub fn origin(&self) -> Option<XrefOrigin> {
        if self.resolution.from_file_start {
            Some(XrefOrigin::FileStart)
        } else if self.resolution.from_header {
            Some(XrefOrigin::Header)
        } else {
            None
        }
    }

    /// `trailer` through the end of the final `%%EOF` line.
    pub fn final_block_span(&self) -> Range<usize> {
        self.trailer_span.start..self.eof_end
    }

    /// Header-to-revision-end plus the final trailer block.
    pub fn reachable_spans(&self) -> Vec<ByteSpan> {
        span::merge(alloc::vec![
            ByteSpan::new(self.header.offset as u64, self.document_end as u64),
            ByteSpan::new(self.trailer_span.start as u64, self.eof_end as u64),
        ])
    }

    pub fn foreign_spans(&self) -> Vec<ByteSpan> {
        span::complement(self.reachable_spans(), self.file_len as u64)
    }

    /// True when the final trailer block is separated from the revision it
    /// describes by bytes that belong to neither.
    pub fn trailer_detached(&self) -> bool {
        self.trailer_span.start >= self.document_end
    }

    /// Digit fields rewritten by [`shift_pdf_offsets`]: each in-use
    /// record's 10-digit offset plus the `startxref` value.
    pub fn offset_fields(&self) -> Vec<(Range<usize>, u64)> {
        let mut fields: Vec<(Range<usize>, u64)> = self
            .xref_sections
            .iter()
            .flat_map(|s| s.entries.iter())
            .filter(|e| e.kind == XrefKind::InUse)
            .map(|e| (e.position..e.position + XREF_OFFSET_DIGITS, e.offset))
            .collect();
        fields.push((self.startxref.digits.clone(), self.startxref.value));
        fields
    }
}

fn is_ws(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n' | 0x0C | 0)
}

fn find_from(hay: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if from > hay.len() {
        return None;
    }
    hay[from..]
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}

fn rfind(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).rposition(|w| w == needle)
}

pub(crate) fn find_all(hay: &[u8], needle: &[u8]) -> Vec<usize> {
    hay.windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == needle)
        .map(|(i, _)| i)
        .collect()
}

fn skip_ws(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && is_ws(bytes[i]) {
        i += 1;
    }
    i
}

fn digits_at(bytes: &[u8], i: usize) -> Range<usize> {
    let mut end = i;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    i..end
}

fn parse_decimal(digits: &[u8]) -> Option<u64> {
    if digits.is_empty() {
        return None;
    }
    digits.iter().try_fold(0u64, |acc, d| {
        acc.checked_mul(10)?.checked_add(u64::from(d - b'0'))
    })
}

fn line_end(bytes: &[u8], mut p: usize) -> usize {
    match bytes.get(p) {
        Some(b'\r') => {
            p += 1;
            if bytes.get(p) == Some(&b'\n') {
                p += 1;
            }
        }
        Some(b'\n') => p += 1,
        _ => {}
    }
    p
}

/// First `%PDF-1.X` header followed by an EOL inside the header window.
pub fn find_header(bytes: &[u8]) -> Option<PdfHeader> {
    if bytes.len() < HEADER_LEN + 1 {
        return None;
    }
    let last = MAX_HEADER_OFFSET.min(bytes.len() - HEADER_LEN - 1);
    (0..=last).find_map(|off| {
        let h = &bytes[off..];
        if !h.starts_with(b"%PDF-1.") || !h[7].is_ascii_digit() {
            return None;
        }
        let eol = match (h[8], h.get(9)) {
            (b'\r', Some(b'\n')) => Eol::CrLf,
            (b'\r', _) => Eol::Cr,
            (b'\n', _) => Eol::Lf,
            _ => return None,
        };
        Some(PdfHeader {
            offset: off,
            major: 1,
            minor: h[7] - b'0',
            eol,
        })
    })
}

/// The last `startxref` before the final `%%EOF`, with its value.
pub fn locate_startxref(bytes: &[u8]) -> Result<StartXref, PdfError> {
    let eof = rfind(bytes, b"%%EOF").ok_or(PdfError::NoEof)?;
    let keyword_offset = rfind(&bytes[..eof], b"startxref").ok_or(PdfError::NoStartxref)?;
    let digits = digits_at(bytes, skip_ws(bytes, keyword_offset + 9));
    let value = parse_decimal(&bytes[digits.clone()]).ok_or(PdfError::NoStartxref)?;
    Ok(StartXref {
        value,
        keyword_offset,
        digits,
    })
}

fn is_xref_at(bytes: &[u8], pos: u64) -> bool {
    let Ok(p) = usize::try_from(pos) else {
        return false;
    };
    bytes
        .get(p..)
        .is_some_and(|b| b.starts_with(b"xref") && b.get(4).is_some_and(|c| is_ws(*c)))
}

/// `N G obj` at `pos`, as an xref stream would be.
fn is_object_at(bytes: &[u8], pos: u64) -> bool {
    let Ok(p) = usize::try_from(pos) else {
        return false;
    };
    if p >= bytes.len() {
        return false;
    }
    let num = digits_at(bytes, p);
    if num.is_empty() {
        return false;
    }
    let gen_start = skip_ws(bytes, num.end);
    let gen = digits_at(bytes, gen_start);
    if gen_start == num.end || gen.is_empty() {
        return false;
    }
    let kw = skip_ws(bytes, gen.end);
    kw > gen.end && bytes[kw..].starts_with(b"obj")
}

fn parse_record(bytes: &[u8], i: usize) -> Option<XrefEntry> {
    let e = bytes.get(i..i + XREF_ENTRY_LEN)?;
    let offset_ok = e[..10].iter().all(u8::is_ascii_digit);
    let gen_ok = e[11..16].iter().all(u8::is_ascii_digit);
    let kind = match e[17] {
        b'n' => XrefKind::InUse,
        b'f' => XrefKind::Free,
        _ => return None,
    };
    let eol_ok = matches!(&e[18..20], b" \r" | b" \n" | b"\r\n");
    if !(offset_ok && gen_ok && eol_ok && e[10] == b' ' && e[16] == b' ') {
        return None;
    }
    Some(XrefEntry {
        offset: parse_decimal(&e[..10])?,
        generation: parse_decimal(&e[11..16])? as u32,
        kind,
        position: i,
    })
}

/// Parses the table whose `xref` keyword is at `pos`; returns its
/// subsections and the position of the `trailer` keyword that ends it.
fn parse_xref_table(bytes: &[u8], pos: usize) -> Result<(Vec<XrefSection>, usize), PdfError> {
    let malformed = |offset| PdfError::MalformedXref { offset };
    let mut sections = Vec::new();
    let mut i = pos + 4;
    loop {
        i = skip_ws(bytes, i);
        if i >= bytes.len() {
            return Err(malformed(i));
        }
        if bytes[i..].starts_with(b"trailer") {
            return Ok((sections, i));
        }
        let section_at = i;
        let start = digits_at(bytes, i);
        let start_id = parse_decimal(&bytes[start.clone()])
            .and_then(|v| u32::try_from(v).ok())
            .ok_or(malformed(i))?;
        let mut j = start.end;
        while bytes.get(j) == Some(&b' ') {
            j += 1;
        }
        if j == start.end {
            return Err(malformed(j));
        }
        let count = digits_at(bytes, j);
        let n = parse_decimal(&bytes[count.clone()]).ok_or(malformed(j))? as usize;
        j = count.end;
        while bytes.get(j) == Some(&b' ') {
            j += 1;
        }
        let after = line_end(bytes, j);
        if after == j {
            return Err(malformed(j));
        }
        i = after;
        if n > (bytes.len() - i) / XREF_ENTRY_LEN {
            return Err(malformed(i));
        }
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            entries.push(parse_record(bytes, i).ok_or(malformed(i))?);
            i += XREF_ENTRY_LEN;
        }
        sections.push(XrefSection {
            start_id,
            entries,
            position: section_at,
        });
    }
}

/// `/Prev` value of the trailer dictionary starting at `trailer_at`.
fn trailer_prev(bytes: &[u8], trailer_at: usize) -> Option<u64> {
    let end = find_from(bytes, b"startxref", trailer_at).unwrap_or(bytes.len());
    let dict = &bytes[trailer_at..end];
    let at = find_from(dict, b"/Prev", 0)?;
    let digits = digits_at(dict, skip_ws(dict, at + 5));
    parse_decimal(&dict[digits])
}

pub fn scan_pdf(bytes: &[u8]) -> Result<PdfSkeleton, PdfError> {
    if bytes.len() < MIN_PDF_LEN {
        return Err(PdfError::TooShort { len: bytes.len() });
    }
    let header = find_header(bytes).ok_or(PdfError::NoHeader)?;
    let mut eofs = find_all(bytes, b"%%EOF");
    let eof_offset = eofs.pop().ok_or(PdfError::NoEof)?;
    let startxref = locate_startxref(bytes)?;

    let h = header.offset as u64;
    let value = startxref.value;
    let resolution = XrefResolution {
        from_file_start: is_xref_at(bytes, value),
        from_header: is_xref_at(bytes, h.saturating_add(value)),
    };
    let unresolved = !resolution.from_file_start && !resolution.from_header;
    if unresolved && (is_object_at(bytes, value) || is_object_at(bytes, h.saturating_add(value))) {
        return Err(PdfError::Unsupported("cross-reference streams"));
    }
    let trailer_at =
        rfind(&bytes[..startxref.keyword_offset], b"trailer").ok_or(PdfError::NoStartxref)?;
    let eof_end = line_end(bytes, eof_offset + 5);

    let base = if resolution.from_file_start { 0 } else { h };
    let mut xref_sections = Vec::new();
    let mut xref_tables = Vec::new();
    if !unresolved {
        let mut visited = BTreeSet::new();
        let mut next = Some(base + value);
        while let Some(pos) = next {
            let p = pos as usize;
            if visited.len() >= MAX_XREF_CHAIN || !visited.insert(p) || !is_xref_at(bytes, pos) {
                return Err(PdfError::MalformedXref { offset: p });
            }
            let (sections, table_trailer) = parse_xref_table(bytes, p)?;
            xref_tables.push(p);
            xref_sections.extend(sections);
            next = trailer_prev(bytes, table_trailer).map(|prev| base + prev);
        }
    }

    let document_end = match xref_tables.first() {
        Some(&newest) => find_from(bytes, b"%%EOF", newest)
            .map(|e| line_end(bytes, e + 5))
            .unwrap_or(eof_end),
        None => eof_end,
    };
    let body_end = xref_tables.iter().copied().min().unwrap_or(trailer_at);
    Ok(PdfSkeleton {
        header,
        xref_sections,
        xref_tables,
        trailer_span: trailer_at..startxref.keyword_offset,
        startxref,
        resolution,
        eof_offset,
        eof_end,
        earlier_eofs: eofs,
        body_span: header.offset..body_end.max(header.offset),
        document_end,
        file_len: bytes.len(),
    })
}

/// The run from the final `trailer` keyword through the final `%%EOF`
/// and its line ending. `skeleton` must come from `bytes`.
pub fn extract_trailer_block<'a>(bytes: &'a [u8], skeleton: &PdfSkeleton) -> &'a [u8] {
    &bytes[skeleton.final_block_span()]
}

pub(crate) fn rewrite_fields(
    bytes: &mut [u8],
    fields: &[(Range<usize>, u64)],
    delta: i64,
) -> Result<(), PdfError> {
    for (range, value) in fields {
        let width = range.len();
        let shifted = i128::from(*value) + i128::from(delta);
        if shifted < 0 {
            return Err(PdfError::OffsetUnderflow {
                value: *value,
                delta,
            });
        }
        let text = format!("{:0width$}", shifted, width = width);
        if text.len() > width {
            return Err(PdfError::FieldWidthOverflow {
                value: shifted as u64,
                width,
            });
        }
        bytes[range.clone()].copy_from_slice(text.as_bytes());
    }
    Ok(())
}

/// Adds `delta` to every in-use xref offset and to the `startxref` value.
///
/// Fields keep their width: xref offsets stay 10 zero-padded digits and the
/// `startxref` value keeps its digit count, so the file length never
/// changes. A value that no longer fits is a [`PdfError::FieldWidthOverflow`].
pub fn shift_pdf_offsets(
    skeleton: &PdfSkeleton,
    bytes: &[u8],
    delta: i64,
) -> Result<Vec<u8>, PdfError> {
    let mut out = bytes.to_vec();
    rewrite_fields(&mut out, &skeleton.offset_fields(), delta)?;
    Ok(out)
}

fn escape_literal(text: &str, out: &mut Vec<u8>) -> Result<(), FixtureError> {
    for b in text.bytes() {
        if !(0x20..=0x7E).contains(&b) {
            return Err(FixtureError::NonPrintable);
        }
        if matches!(b, b'(' | b')' | b'\\') {
            out.push(b'\\');
        }
        out.push(b);
    }
    Ok(())
}

/// Deterministic single-page PDF with a classic xref table.
///
/// The `startxref` value is written as ten zero-padded digits so that
/// [`shift_pdf_offsets`] can move it across decimal magnitudes.
pub fn make_fixture_pdf(page_text: &str, producer: &str) -> Result<Vec<u8>, FixtureError> {
    if page_text.is_empty() {
        return Err(FixtureError::EmptyText);
    }
    let mut content = Vec::new();
    content.extend_from_slice(b"BT /F1 18 Tf 72 720 Td (");
    escape_literal(page_text, &mut content)?;
    content.extend_from_slice(b") Tj ET");
    let mut producer_lit = Vec::new();
    escape_literal(producer, &mut producer_lit)?;

    let mut objects: Vec<Vec<u8>> = Vec::new();
    objects.push(b"<< /Type /Catalog /Pages 2 0 R >>".to_vec());
    objects.push(b"<< /Type /Pages /Kids [3 0 R] /Count 1 >>".to_vec());
    objects.push(
        b"<< /Type /Page /Parent 2 0 R /MediaBox [0 0 612 792] /Contents 4 0 R \
/Resources << /Font << /F1 5 0 R >> >> >>"
            .to_vec(),
    );
    let mut stream = format!("<< /Length {} >>\nstream\n", content.len()).into_bytes();
    stream.extend_from_slice(&content);
    stream.extend_from_slice(b"\nendstream");
    objects.push(stream);
    objects.push(b"<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica >>".to_vec());
    let mut info = b"<< /Producer (".to_vec();
    info.extend_from_slice(&producer_lit);
    info.extend_from_slice(b") >>");
    objects.push(info);

    let mut out = b"%PDF-1.4\n%\xE2\xE3\xCF\xD3\n".to_vec();
    let mut offsets = Vec::with_capacity(objects.len());
    for (i, body) in objects.iter().enumerate() {
        offsets.push(out.len());
        out.extend_from_slice(format!("{} 0 obj\n", i + 1).as_bytes());
        out.extend_from_slice(body);
        out.extend_from_slice(b"\nendobj\n");
    }
    let xref_at = out.len();
    out.extend_from_slice(format!("xref\n0 {}\n", objects.len() + 1).as_bytes());
    out.extend_from_slice(b"0000000000 65535 f\r\n");
    for off in &offsets {
        out.extend_from_slice(format!("{:010} 00000 n\r\n", off).as_bytes());
    }
    out.extend_from_slice(
        format!(
            "trailer\n<< /Size {} /Root 1 0 R /Info {} 0 R >>\nstartxref\n{:010}\n%%EOF\n",
            objects.len() + 1,
            objects.len(),
            xref_at
        )
        .as_bytes(),
    );
    Ok(out)
}
