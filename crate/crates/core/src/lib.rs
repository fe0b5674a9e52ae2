//! Building blocks for constructing, detecting and disarming PDF/TIFF
//! polyglot files.
//!
//! A PDF reader tolerates up to a kilobyte of leading garbage before the
//! `%PDF-1.X` header, and a TIFF reader follows absolute pointers from an
//! 8-byte header. Splicing a complete PDF right after the TIFF header and
//! rebasing every TIFF pointer yields one byte sequence that opens as either
//! format depending on its extension. A signature computed over the bytes
//! alone cannot tell the two readings apart.
//!
//! Modules:
//!
//! * [`tiff_codec`]: lossless TIFF structure codec plus deterministic fixtures.
//! * [`pdf_lite`]: structural PDF scanner (header, xref, trailer, `%%EOF`).
//! * [`chimera`]: polyglot builder and dual-validity check.
//! * [`detector`]: heuristic polyglot detection and the PDF/A-1b header rule.
//! * [`sanitizer`]: re-serializes a file under one format, dropping foreign bytes.
//! * [`signet`]: detached signature envelope with legacy and name-bound modes.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod chimera;
pub mod detector;
pub mod pdf_lite;
pub mod sanitizer;
pub mod signet;
pub mod tiff_codec;

mod span;

pub use span::ByteSpan;

/// One of the two formats this crate understands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Format {
    Pdf,
    Tiff,
}

impl Format {
    pub fn mime(self) -> &'static str {
        match self {
            Format::Pdf => "application/pdf",
            Format::Tiff => "image/tiff",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Format::Pdf => "pdf",
            Format::Tiff => "tiff",
        }
    }
}
