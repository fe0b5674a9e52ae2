//! Re-serialization under a single claimed format.
//!
//! Only structures reachable from the claimed format's own pointers are
//! carried over; everything else is reported in `dropped_spans`.

use alloc::vec::Vec;

use crate::pdf_lite::{
    locate_startxref, rewrite_fields, scan_pdf, PdfError, XrefKind, XrefOrigin, XREF_OFFSET_DIGITS,
};
use crate::span::{complement, ByteSpan};
use crate::tiff_codec::{parse_tiff, write_tiff, TiffError};
use crate::Format;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SanitizeError {
    #[error("TIFF: {0}")]
    Tiff(#[from] TiffError),
    #[error("PDF: {0}")]
    Pdf(#[from] PdfError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SanitizeOutcome {
    pub output: Vec<u8>,
    /// Input ranges not carried into `output`, sorted and disjoint.
    pub dropped_spans: Vec<ByteSpan>,
    pub claimed_type: Format,
    /// `output.len() - input.len()`.
    pub size_delta: i64,
}

impl SanitizeOutcome {
    pub fn dropped_len(&self) -> u64 {
        self.dropped_spans.iter().map(ByteSpan::len).sum()
    }
}

pub fn sanitize(bytes: &[u8], claimed: Format) -> Result<SanitizeOutcome, SanitizeError> {
    let (output, dropped_spans) = match claimed {
        Format::Tiff => sanitize_tiff(bytes)?,
        Format::Pdf => sanitize_pdf(bytes)?,
    };
    let size_delta = output.len() as i64 - bytes.len() as i64;
    Ok(SanitizeOutcome {
        output,
        dropped_spans,
        claimed_type: claimed,
        size_delta,
    })
}

/// Dense canonical layout; byte order is kept.
fn sanitize_tiff(bytes: &[u8]) -> Result<(Vec<u8>, Vec<ByteSpan>), TiffError> {
    let doc = parse_tiff(bytes)?;
    let dropped = doc.foreign_spans.iter().map(|f| f.span()).collect();
    let output = write_tiff(&doc.canonicalize()?)?;
    Ok((output, dropped))
}

/// Carves the header through the revision end and re-bases every offset
/// field on byte 0.
fn sanitize_pdf(bytes: &[u8]) -> Result<(Vec<u8>, Vec<ByteSpan>), PdfError> {
    let skel = scan_pdf(bytes)?;
    let h = skel.header.offset;
    let origin = skel.origin().ok_or(PdfError::UnresolvedStartxref {
        value: skel.startxref_value(),
    })?;
    let delta = match origin {
        XrefOrigin::FileStart => -(h as i64),
        XrefOrigin::Header => 0,
    };

    let mut out = bytes[h..skel.document_end].to_vec();
    let mut fields: Vec<_> = skel
        .xref_sections
        .iter()
        .flat_map(|s| s.entries.iter())
        .filter(|e| e.kind == XrefKind::InUse)
        .map(|e| {
            (
                e.position - h..e.position - h + XREF_OFFSET_DIGITS,
                e.offset,
            )
        })
        .collect();
    // The carved revision's own startxref; the one the scan used may sit
    // in a detached trailer copy outside the carve.
    let carved = locate_startxref(&out)?;
    fields.push((carved.digits.clone(), carved.value));
    rewrite_fields(&mut out, &fields, delta)?;

    let check = scan_pdf(&out)?;
    if !check.resolution.from_file_start {
        return Err(PdfError::UnresolvedStartxref {
            value: check.startxref_value(),
        });
    }
    let dropped = complement(
        alloc::vec![ByteSpan::new(h as u64, skel.document_end as u64)],
        bytes.len() as u64,
    );
    Ok((out, dropped))
}
