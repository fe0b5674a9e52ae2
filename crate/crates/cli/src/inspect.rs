//! Human-readable structure dumps. Offsets are printed in hex.

use std::fmt::Write as _;

use chimera_core::pdf_lite::{PdfSkeleton, XrefKind};
use chimera_core::tiff_codec::{tags, ByteOrder, Payload, TiffDocument};

const PREVIEW: usize = 8;

pub fn tiff_dump(doc: &TiffDocument) -> String {
    let order = doc.byte_order();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "TIFF {} ({}), first IFD at 0x{:X}, {} bytes",
        String::from_utf8_lossy(&order.marker()),
        match order {
            ByteOrder::LittleEndian => "little-endian",
            ByteOrder::BigEndian => "big-endian",
        },
        doc.header.first_ifd_offset,
        doc.raw_length
    );
    let positions = doc.ifd_positions().unwrap_or_default();
    for (k, ifd) in doc.ifds.iter().enumerate() {
        let at = positions.get(k).copied().unwrap_or(0);
        let _ = writeln!(
            out,
            "IFD {} at 0x{:X}: {} entries, next 0x{:X}",
            k,
            at,
            ifd.entries.len(),
            ifd.next_ifd_offset
        );
        for e in &ifd.entries {
            let name = tags::name(e.tag).unwrap_or("?");
            let _ = write!(
                out,
                "  0x{:04X} {:<26} {:<9} count {:<5}",
                e.tag,
                name,
                format!("{:?}", e.field_type),
                e.count
            );
            match &e.payload {
                Payload::Inline(_) => {
                    let _ = write!(out, " inline");
                }
                Payload::OutOfLine { offset, .. } => {
                    let _ = write!(out, " at 0x{:X}", offset);
                }
            }
            let _ = writeln!(
                out,
                " = {}",
                value_preview(e.value_bytes(), e.unsigned_values(order))
            );
        }
    }
    for s in &doc.strips {
        let _ = writeln!(
            out,
            "{:?} {}.{} at {} ({} bytes)",
            s.kind,
            s.ifd,
            s.index,
            s.span(),
            s.data.len()
        );
    }
    for f in &doc.foreign_spans {
        let _ = writeln!(out, "foreign span {} ({} bytes)", f.span(), f.data.len());
    }
    out
}

fn value_preview(bytes: &[u8], numbers: Option<Vec<u64>>) -> String {
    if let Some(v) = numbers {
        let shown: Vec<String> = v.iter().take(PREVIEW).map(|n| n.to_string()).collect();
        let more = if v.len() > PREVIEW { ", ..." } else { "" };
        return format!("[{}{}]", shown.join(", "), more);
    }
    if bytes.last() == Some(&0)
        && bytes[..bytes.len() - 1]
            .iter()
            .all(|b| (0x20..0x7F).contains(b))
    {
        return format!("{:?}", String::from_utf8_lossy(&bytes[..bytes.len() - 1]));
    }
    let head = &bytes[..bytes.len().min(PREVIEW * 2)];
    let more = if bytes.len() > head.len() { "..." } else { "" };
    format!("{}{}", hex::encode(head), more)
}

pub fn pdf_dump(skel: &PdfSkeleton) -> String {
    let mut out = String::new();
    let h = &skel.header;
    let _ = writeln!(
        out,
        "PDF {}.{} header at 0x{:X} ({:?} line end), {} bytes",
        h.major, h.minor, h.offset, h.eol, skel.file_len
    );
    let _ = writeln!(
        out,
        "startxref {} at 0x{:X}; resolves from byte 0: {}, from header: {}",
        skel.startxref_value(),
        skel.startxref.keyword_offset,
        skel.resolution.from_file_start,
        skel.resolution.from_header
    );
    for t in &skel.xref_tables {
        let _ = writeln!(out, "xref table at 0x{:X}", t);
    }
    for s in &skel.xref_sections {
        let _ = writeln!(
            out,
            "  section {} +{} at 0x{:X}",
            s.start_id,
            s.entries.len(),
            s.position
        );
        for (i, e) in s.entries.iter().enumerate() {
            let kind = match e.kind {
                XrefKind::InUse => "n",
                XrefKind::Free => "f",
            };
            let _ = writeln!(
                out,
                "    obj {:<4} 0x{:08X} gen {:<5} {}",
                s.start_id as usize + i,
                e.offset,
                e.generation,
                kind
            );
        }
    }
    let _ = writeln!(out, "trailer at 0x{:X}", skel.trailer_span.start);
    let _ = writeln!(
        out,
        "%%EOF at 0x{:X}, revision ends at 0x{:X}",
        skel.eof_offset, skel.document_end
    );
    for e in &skel.earlier_eofs {
        let _ = writeln!(out, "earlier %%EOF at 0x{:X}", e);
    }
    for s in skel.foreign_spans() {
        let _ = writeln!(out, "foreign span {} ({} bytes)", s, s.len());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chimera_core::pdf_lite::{make_fixture_pdf, scan_pdf};
    use chimera_core::tiff_codec::{make_fixture_tiff, parse_tiff, FixtureVariant, TiffFixture};

    #[test]
    fn tiff_dump_shows_tags_and_offsets() {
        let t = make_fixture_tiff(
            &TiffFixture::new(4, 4, FixtureVariant::Grayscale).software("scanner"),
        );
        let d = tiff_dump(&parse_tiff(&t).unwrap());
        assert!(d.starts_with("TIFF II (little-endian), first IFD at 0x8"));
        assert!(d.contains("0x0131 Software"));
        assert!(d.contains("\"scanner\""));
        assert!(d.contains("0x0100 ImageWidth"));
        assert!(d.contains("= [4]"));
        assert!(d.contains("Strip 0.0 at 0x"));
    }

    #[test]
    fn pdf_dump_lists_xref() {
        let p = make_fixture_pdf("hi", "me").unwrap();
        let d = pdf_dump(&scan_pdf(&p).unwrap());
        assert!(d.starts_with("PDF 1.4 header at 0x0"));
        assert!(d.contains("section 0 +7"));
        assert!(d.contains("obj 1    0x0000000F gen 0     n"));
        assert!(!d.contains("foreign span"));
    }
}
