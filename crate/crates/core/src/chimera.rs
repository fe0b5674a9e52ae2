//! PDF/TIFF polyglot construction and dual-validity checking.
//!
//! Output layout:
//!
//! ```text
//! [TIFF header, 8 bytes][entire PDF][TIFF bytes 8.., rebased][copy of PDF trailer block]
//! ```
//!
//! The PDF header lands at byte 8, well inside the 1024-byte window readers
//! search. Every TIFF pointer at or past byte 8 grows by the PDF length.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use crate::pdf_lite::{self, find_header, scan_pdf, PdfError, XrefOrigin, MAX_HEADER_OFFSET};
use crate::span::ByteSpan;
use crate::tiff_codec::{
    parse_tiff, tags, write_tiff, FieldType, Payload, TiffDocument, TiffError, HEADER_LEN,
    MAX_FILE_LEN,
};

/// The PDF is always spliced in right after the TIFF header.
pub const INSERTION_POINT: u64 = HEADER_LEN;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpliceMode {
    /// Leave the embedded PDF's offsets alone; they resolve relative to
    /// the displaced header.
    PaperFaithful,
    /// Also shift xref and `startxref` so they resolve from byte 0.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChimeraError {
    #[error("TIFF input: {0}")]
    Tiff(#[from] TiffError),
    #[error("PDF input: {0}")]
    Pdf(#[from] PdfError),
    #[error("embedded PDF header would land at byte {offset}, past the 1024-byte header window")]
    HeaderWindowExceeded { offset: usize },
    #[error("TIFF input already carries a PDF header at byte {offset}")]
    AlreadyPolyglot { offset: usize },
    #[error("combined output of {len} bytes exceeds the 32-bit offset range")]
    OffsetOverflow { len: u64 },
    #[error("built file failed dual validation: {0}")]
    NotDualValid(DualValidity),
}

/// One pointer field that was rewritten.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OffsetRewrite {
    pub description: String,
    /// Position of the field in the original TIFF.
    pub field_position: u64,
    /// Field width in bytes (2 for SHORT, 4 for LONG).
    pub width: u8,
    pub old_offset: u64,
    pub new_offset: u64,
}

impl OffsetRewrite {
    /// Where the field sits after insertion of `shift` bytes.
    pub fn output_span(&self, shift: u64, insertion_point: u64) -> ByteSpan {
        let at = if self.field_position >= insertion_point {
            self.field_position + shift
        } else {
            self.field_position
        };
        ByteSpan::at(at, u64::from(self.width))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChimeraReport {
    /// Bytes inserted after the TIFF header; equals the embedded PDF length.
    pub shift: u64,
    pub rewrites: Vec<OffsetRewrite>,
    pub mode: SpliceMode,
    pub tiff_header_span: ByteSpan,
    pub pdf_span: ByteSpan,
    /// The rebased TIFF remainder (original bytes 8..).
    pub tiff_span: ByteSpan,
    pub trailer_copy_span: ByteSpan,
    /// Unreferenced ranges already present in the input TIFF.
    pub prior_foreign_spans: Vec<ByteSpan>,
}

impl ChimeraReport {
    /// Output byte ranges of every rewritten field.
    pub fn rewritten_fields(&self) -> impl Iterator<Item = ByteSpan> + '_ {
        self.rewrites
            .iter()
            .map(|r| r.output_span(self.shift, INSERTION_POINT))
    }

    /// Line-oriented table: description, field address, old and new offset.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# mode={} shift={} (0x{:X})",
            match self.mode {
                SpliceMode::PaperFaithful => "paper-faithful",
                SpliceMode::Strict => "strict",
            },
            self.shift,
            self.shift
        );
        let _ = writeln!(
            out,
            "# pdf={} tiff={} trailer-copy={}",
            self.pdf_span, self.tiff_span, self.trailer_copy_span
        );
        for s in &self.prior_foreign_spans {
            let _ = writeln!(out, "# prior-foreign-span {}", s);
        }
        let _ = writeln!(out, "description\tfield\told\tnew");
        for r in &self.rewrites {
            let at = r.output_span(self.shift, INSERTION_POINT);
            let _ = writeln!(
                out,
                "{}\t0x{:X}\t0x{:X}\t0x{:X}",
                r.description, at.start, r.old_offset, r.new_offset
            );
        }
        out
    }
}

fn tag_label(tag: u16) -> String {
    match tags::name(tag) {
        Some(name) => format!("{} (0x{:04X})", name, tag),
        None => format!("tag 0x{:04X}", tag),
    }
}

/// Moves every structure at or past `insertion_point` up by `shift` bytes
/// and rewrites the pointers to them.
///
/// Touched: the first-IFD offset, non-zero next-IFD offsets, out-of-line
/// value offsets and StripOffsets/TileOffsets values. Value contents
/// (dimensions, rationals, text) are left alone.
pub fn rebase_tiff(
    doc: &TiffDocument,
    shift: u64,
    insertion_point: u64,
) -> Result<(TiffDocument, Vec<OffsetRewrite>), TiffError> {
    if shift == 0 {
        return Ok((doc.clone(), Vec::new()));
    }
    let order = doc.byte_order();
    let positions = doc.ifd_positions()?;
    let mut out = doc.clone();
    let mut rewrites = Vec::new();

    let moved = |v: u64, what: &'static str, limit: u64| -> Result<u64, TiffError> {
        let new = v + shift;
        if new > limit {
            return Err(TiffError::OffsetOverflow { what, value: new });
        }
        Ok(new)
    };

    let first = u64::from(doc.header.first_ifd_offset);
    if first >= insertion_point {
        let new = moved(first, "first IFD offset", MAX_FILE_LEN)?;
        out.header.first_ifd_offset = new as u32;
        rewrites.push(OffsetRewrite {
            description: "first IFD offset".into(),
            field_position: 4,
            width: 4,
            old_offset: first,
            new_offset: new,
        });
    }

    for (k, (ifd, &pos)) in doc.ifds.iter().zip(&positions).enumerate() {
        let out_ifd = &mut out.ifds[k];
        for (slot, i) in ifd.emission_order().into_iter().enumerate() {
            let entry = &ifd.entries[i];
            let field_position = pos + 2 + 12 * slot as u64 + 8;
            if let Payload::OutOfLine { offset, .. } = entry.payload {
                let old = u64::from(offset);
                if old >= insertion_point {
                    let new = moved(old, "value offset", MAX_FILE_LEN)?;
                    if let Payload::OutOfLine { offset, .. } = &mut out_ifd.entries[i].payload {
                        *offset = new as u32;
                    }
                    rewrites.push(OffsetRewrite {
                        description: format!("IFD{} {} value offset", k, tag_label(entry.tag)),
                        field_position,
                        width: 4,
                        old_offset: old,
                        new_offset: new,
                    });
                }
            }
            if entry.tag == tags::STRIP_OFFSETS || entry.tag == tags::TILE_OFFSETS {
                let width = entry.field_type.size();
                let limit = match entry.field_type {
                    FieldType::Short => u64::from(u16::MAX),
                    _ => MAX_FILE_LEN,
                };
                let values = entry
                    .unsigned_values(order)
                    .ok_or(TiffError::NotAnOffsetArray { tag: entry.tag })?;
                let array_at = entry.out_of_line_offset().map_or(field_position, u64::from);
                let mut new_values = values.clone();
                for (j, (&old, new_slot)) in values.iter().zip(new_values.iter_mut()).enumerate() {
                    if old >= insertion_point {
                        let new = moved(old, "data offset", limit)?;
                        *new_slot = new;
                        rewrites.push(OffsetRewrite {
                            description: format!("IFD{} {}[{}]", k, tag_label(entry.tag), j),
                            field_position: array_at + j as u64 * u64::from(width),
                            width: width as u8,
                            old_offset: old,
                            new_offset: new,
                        });
                    }
                }
                out_ifd.entries[i].set_unsigned_values(order, &new_values)?;
            }
        }
        let next = u64::from(ifd.next_ifd_offset);
        if next != 0 && next >= insertion_point {
            let new = moved(next, "next IFD offset", MAX_FILE_LEN)?;
            out_ifd.next_ifd_offset = new as u32;
            rewrites.push(OffsetRewrite {
                description: format!("IFD{} next IFD offset", k),
                field_position: pos + 2 + 12 * ifd.entries.len() as u64,
                width: 4,
                old_offset: next,
                new_offset: new,
            });
        }
    }

    for s in out
        .strips
        .iter_mut()
        .filter(|s| s.offset >= insertion_point)
    {
        s.offset += shift;
    }
    for f in out
        .foreign_spans
        .iter_mut()
        .filter(|f| f.offset >= insertion_point)
    {
        f.offset += shift;
    }
    out.raw_length += shift;
    Ok((out, rewrites))
}

/// Splices `pdf` into `tiff` and appends a copy of the PDF trailer block.
pub fn build_chimera(
    tiff: &[u8],
    pdf: &[u8],
    mode: SpliceMode,
) -> Result<(Vec<u8>, ChimeraReport), ChimeraError> {
    let doc = parse_tiff(tiff)?;
    if let Some(h) = find_header(tiff) {
        return Err(ChimeraError::AlreadyPolyglot { offset: h.offset });
    }
    let skel = scan_pdf(pdf)?;
    let origin = skel.origin().ok_or(PdfError::UnresolvedStartxref {
        value: skel.startxref_value(),
    })?;
    let landing = INSERTION_POINT as usize + skel.header.offset;
    if landing > MAX_HEADER_OFFSET {
        return Err(ChimeraError::HeaderWindowExceeded { offset: landing });
    }
    let total = tiff.len() as u64 + pdf.len() as u64 + skel.final_block_span().len() as u64;
    if total > MAX_FILE_LEN {
        return Err(ChimeraError::OffsetOverflow { len: total });
    }

    let embedded = match mode {
        SpliceMode::PaperFaithful => pdf.to_vec(),
        SpliceMode::Strict => {
            let delta = INSERTION_POINT
                + match origin {
                    XrefOrigin::FileStart => 0,
                    XrefOrigin::Header => skel.header.offset as u64,
                };
            pdf_lite::shift_pdf_offsets(&skel, pdf, delta as i64)?
        }
    };
    let trailer_copy = pdf_lite::extract_trailer_block(&embedded, &skel);
    let shift = embedded.len() as u64;

    let (rebased, rewrites) = rebase_tiff(&doc, shift, INSERTION_POINT)?;
    let mut out = write_tiff(&rebased)?;
    let pdf_span = ByteSpan::at(INSERTION_POINT, shift);
    out[pdf_span.as_usize_range()].copy_from_slice(&embedded);
    let tiff_end = out.len() as u64;
    out.extend_from_slice(trailer_copy);

    let report = ChimeraReport {
        shift,
        rewrites,
        mode,
        tiff_header_span: ByteSpan::new(0, INSERTION_POINT),
        pdf_span,
        tiff_span: ByteSpan::new(pdf_span.end, tiff_end),
        trailer_copy_span: ByteSpan::new(tiff_end, out.len() as u64),
        prior_foreign_spans: doc.foreign_spans.iter().map(|f| f.span()).collect(),
    };
    let validity = validate_chimera(&out);
    if !validity.both() {
        return Err(ChimeraError::NotDualValid(validity));
    }
    Ok((out, report))
}

/// Outcome of opening one byte sequence as both formats.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DualValidity {
    pub tiff: Result<(), TiffError>,
    /// The origin convention under which `startxref` resolves.
    pub pdf: Result<XrefOrigin, PdfError>,
}

impl DualValidity {
    pub fn tiff_ok(&self) -> bool {
        self.tiff.is_ok()
    }

    pub fn pdf_ok(&self) -> bool {
        self.pdf.is_ok()
    }

    pub fn both(&self) -> bool {
        self.tiff_ok() && self.pdf_ok()
    }
}

impl fmt::Display for DualValidity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.tiff {
            Ok(()) => write!(f, "tiff: ok")?,
            Err(e) => write!(f, "tiff: {}", e)?,
        }
        match &self.pdf {
            Ok(XrefOrigin::FileStart) => write!(f, "; pdf: ok (offsets from byte 0)"),
            Ok(XrefOrigin::Header) => write!(f, "; pdf: ok (offsets from header)"),
            Err(e) => write!(f, "; pdf: {}", e),
        }
    }
}

pub fn validate_chimera(bytes: &[u8]) -> DualValidity {
    let tiff = parse_tiff(bytes).map(|_| ());
    let pdf = scan_pdf(bytes).and_then(|s| {
        s.origin().ok_or(PdfError::UnresolvedStartxref {
            value: s.startxref_value(),
        })
    });
    DualValidity { tiff, pdf }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdf_lite::make_fixture_pdf;
    use crate::tiff_codec::{make_fixture_tiff, FixtureVariant, TiffFixture};
    use alloc::vec;

    fn tiff() -> Vec<u8> {
        make_fixture_tiff(
            &TiffFixture::new(16, 12, FixtureVariant::Grayscale)
                .software("PageMaker 4.0")
                .rows_per_strip(4),
        )
    }

    fn pdf() -> Vec<u8> {
        make_fixture_pdf("100,000 Euros", "chimera-forge").unwrap()
    }

    #[test]
    fn first_ifd_moves_by_pdf_length() {
        let doc = parse_tiff(&tiff()).unwrap();
        let (moved, rewrites) = rebase_tiff(&doc, 6009, 8).unwrap();
        assert_eq!(moved.header.first_ifd_offset, 0x1781);
        assert_eq!(rewrites[0].old_offset, 8);
        assert_eq!(rewrites[0].new_offset, 0x1781);
    }

    #[test]
    fn zero_shift_is_noop() {
        let doc = parse_tiff(&tiff()).unwrap();
        let (same, rewrites) = rebase_tiff(&doc, 0, 8).unwrap();
        assert_eq!(same, doc);
        assert!(rewrites.is_empty());
    }

    #[test]
    fn strips_move_and_bytes_follow() {
        let original = tiff();
        let doc = parse_tiff(&original).unwrap();
        assert_eq!(doc.strips.len(), 3);
        let shift = 1000;
        let (moved, rewrites) = rebase_tiff(&doc, shift, 8).unwrap();
        for (a, b) in doc.strips.iter().zip(&moved.strips) {
            assert_eq!(b.offset, a.offset + shift);
        }
        let out = write_tiff(&moved).unwrap();
        let exempt: Vec<ByteSpan> = rewrites.iter().map(|r| r.output_span(shift, 8)).collect();
        for o in 8..original.len() as u64 {
            let at = o + shift;
            if exempt.iter().any(|s| s.contains(at)) {
                continue;
            }
            assert_eq!(out[at as usize], original[o as usize], "byte {o}");
        }
        for r in &rewrites {
            assert_eq!(r.new_offset, r.old_offset + shift);
        }
    }

    #[test]
    fn rebase_overflow() {
        let doc = parse_tiff(&tiff()).unwrap();
        assert!(matches!(
            rebase_tiff(&doc, u64::from(u32::MAX), 8),
            Err(TiffError::OffsetOverflow { .. })
        ));
    }

    #[test]
    fn build_both_modes() {
        for mode in [SpliceMode::PaperFaithful, SpliceMode::Strict] {
            let (out, report) = build_chimera(&tiff(), &pdf(), mode).unwrap();
            assert_eq!(report.shift, pdf().len() as u64);
            let v = validate_chimera(&out);
            assert!(v.both(), "{v}");
            let expected = match mode {
                SpliceMode::PaperFaithful => XrefOrigin::Header,
                SpliceMode::Strict => XrefOrigin::FileStart,
            };
            assert_eq!(v.pdf, Ok(expected));
            assert!(out.ends_with(b"%%EOF\n"));
            assert_eq!(report.trailer_copy_span.end, out.len() as u64);
            for r in &report.rewrites {
                assert_eq!(r.new_offset, r.old_offset + report.shift);
            }
        }
    }

    #[test]
    fn table_lists_rewrites() {
        let (_, report) = build_chimera(&tiff(), &pdf(), SpliceMode::PaperFaithful).unwrap();
        let table = report.to_table();
        assert!(table.contains("first IFD offset\t0x4\t0x8\t0x"));
        assert!(table.contains("StripOffsets (0x0111)[2]"));
        assert_eq!(
            table.lines().filter(|l| !l.starts_with('#')).count(),
            report.rewrites.len() + 1
        );
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(matches!(
            build_chimera(&tiff(), b"", SpliceMode::Strict),
            Err(ChimeraError::Pdf(PdfError::TooShort { len: 0 }))
        ));
        assert!(matches!(
            build_chimera(&pdf(), &pdf(), SpliceMode::Strict),
            Err(ChimeraError::Tiff(TiffError::BadByteOrder(_)))
        ));
        let (chimera, _) = build_chimera(&tiff(), &pdf(), SpliceMode::Strict).unwrap();
        assert_eq!(
            build_chimera(&chimera, &pdf(), SpliceMode::Strict),
            Err(ChimeraError::AlreadyPolyglot { offset: 8 })
        );
    }

    #[test]
    fn header_window_exceeded() {
        let mut padded = vec![b' '; 1010];
        padded.extend(pdf());
        assert!(scan_pdf(&padded).is_ok());
        assert_eq!(
            build_chimera(&tiff(), &padded, SpliceMode::PaperFaithful),
            Err(ChimeraError::HeaderWindowExceeded { offset: 1018 })
        );
    }

    #[test]
    fn single_format_files() {
        let t = validate_chimera(&tiff());
        assert!(t.tiff_ok());
        assert_eq!(t.pdf, Err(PdfError::NoHeader));
        assert!(!t.both());
        let p = validate_chimera(&pdf());
        assert!(p.pdf_ok());
        assert!(matches!(p.tiff, Err(TiffError::BadByteOrder(_))));
    }

    #[test]
    fn prior_foreign_spans_reported() {
        let mut t = tiff();
        t.extend_from_slice(&[0xEE; 40]);
        let (_, report) = build_chimera(&t, &pdf(), SpliceMode::PaperFaithful).unwrap();
        assert_eq!(report.prior_foreign_spans.len(), 1);
        assert_eq!(report.prior_foreign_spans[0].len(), 40);
    }
}
