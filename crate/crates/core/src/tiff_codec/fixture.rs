use alloc::string::String;
use alloc::vec::Vec;

use super::{
    tags, write_tiff, ByteOrder, DataKind, Ifd, IfdEntry, Strip, TiffDocument, TiffHeader,
    TIFF_MAGIC,
};

/// Largest strip the fixture generator emits when no RowsPerStrip is given.
const TARGET_STRIP_BYTES: u64 = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FixtureVariant {
    /// 1 bit per pixel; BitsPerSample is left at its default.
    Bilevel,
    /// 8-bit gray; adds BitsPerSample.
    Grayscale,
    /// 8-bit RGB; adds SamplesPerPixel and a 3-value BitsPerSample.
    Rgb,
}

/// Parameters for a small uncompressed TIFF.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TiffFixture {
    pub width: u32,
    pub height: u32,
    pub variant: FixtureVariant,
    pub software: Option<String>,
    pub date_time: Option<String>,
    pub rows_per_strip: Option<u32>,
    pub byte_order: ByteOrder,
    /// Varies the generated pixel pattern.
    pub seed: u8,
}

impl TiffFixture {
    /// # Panics
    /// If `width` or `height` is zero.
    pub fn new(width: u32, height: u32, variant: FixtureVariant) -> Self {
        assert!(
            width >= 1 && height >= 1,
            "fixture dimensions must be at least 1x1"
        );
        TiffFixture {
            width,
            height,
            variant,
            software: None,
            date_time: None,
            rows_per_strip: None,
            byte_order: ByteOrder::LittleEndian,
            seed: 0,
        }
    }

    pub fn software(mut self, text: &str) -> Self {
        self.software = Some(text.into());
        self
    }

    pub fn date_time(mut self, text: &str) -> Self {
        self.date_time = Some(text.into());
        self
    }

    pub fn rows_per_strip(mut self, rows: u32) -> Self {
        self.rows_per_strip = Some(rows.max(1));
        self
    }

    pub fn byte_order(mut self, order: ByteOrder) -> Self {
        self.byte_order = order;
        self
    }

    pub fn seed(mut self, seed: u8) -> Self {
        self.seed = seed;
        self
    }

    fn row_bytes(&self) -> u64 {
        let w = u64::from(self.width);
        match self.variant {
            FixtureVariant::Bilevel => w.div_ceil(8),
            FixtureVariant::Grayscale => w,
            FixtureVariant::Rgb => 3 * w,
        }
    }

    fn effective_rows_per_strip(&self) -> u32 {
        let rows = self
            .rows_per_strip
            .unwrap_or_else(|| (TARGET_STRIP_BYTES / self.row_bytes()).max(1) as u32);
        rows.min(self.height)
    }

    fn pixel_row(&self, y: u32) -> Vec<u8> {
        let seed = u32::from(self.seed);
        match self.variant {
            FixtureVariant::Bilevel => (0..self.row_bytes() as u32)
                .map(|bx| {
                    if ((bx + y / 2 + seed) & 1) == 0 {
                        0xAA
                    } else {
                        0x55
                    }
                })
                .collect(),
            FixtureVariant::Grayscale => (0..self.width)
                .map(|x| (x.wrapping_mul(7) ^ y.wrapping_mul(13) ^ seed) as u8)
                .collect(),
            FixtureVariant::Rgb => (0..self.width)
                .flat_map(|x| {
                    [
                        (x.wrapping_mul(5) + seed) as u8,
                        (y.wrapping_mul(11) + seed) as u8,
                        ((x ^ y) + seed) as u8,
                    ]
                })
                .collect(),
        }
    }

    /// The fixture as a laid-out document.
    pub fn document(&self) -> TiffDocument {
        let order = self.byte_order;
        let rows = self.effective_rows_per_strip();
        let strip_count = self.height.div_ceil(rows) as usize;

        let mut strips = Vec::with_capacity(strip_count);
        for index in 0..strip_count {
            let first = index as u32 * rows;
            let last = (first + rows).min(self.height);
            let data: Vec<u8> = (first..last).flat_map(|y| self.pixel_row(y)).collect();
            strips.push(Strip {
                ifd: 0,
                kind: DataKind::Strip,
                index,
                offset: 0,
                data,
            });
        }
        let byte_counts: Vec<u32> = strips.iter().map(|s| s.data.len() as u32).collect();

        let photometric = match self.variant {
            FixtureVariant::Bilevel | FixtureVariant::Grayscale => 1,
            FixtureVariant::Rgb => 2,
        };
        let mut entries = alloc::vec![
            IfdEntry::longs(order, tags::NEW_SUBFILE_TYPE, &[0]),
            IfdEntry::longs(order, tags::IMAGE_WIDTH, &[self.width]),
            IfdEntry::longs(order, tags::IMAGE_LENGTH, &[self.height]),
            IfdEntry::shorts(order, tags::COMPRESSION, &[1]),
            IfdEntry::shorts(order, tags::PHOTOMETRIC_INTERPRETATION, &[photometric]),
            IfdEntry::longs(order, tags::STRIP_OFFSETS, &alloc::vec![0; strip_count]),
            IfdEntry::longs(order, tags::ROWS_PER_STRIP, &[rows]),
            IfdEntry::longs(order, tags::STRIP_BYTE_COUNTS, &byte_counts),
            IfdEntry::rational(order, tags::X_RESOLUTION, 300, 1),
            IfdEntry::rational(order, tags::Y_RESOLUTION, 300, 1),
            IfdEntry::shorts(order, tags::RESOLUTION_UNIT, &[2]),
        ];
        match self.variant {
            FixtureVariant::Bilevel => {}
            FixtureVariant::Grayscale => {
                entries.push(IfdEntry::shorts(order, tags::BITS_PER_SAMPLE, &[8]));
            }
            FixtureVariant::Rgb => {
                entries.push(IfdEntry::shorts(order, tags::BITS_PER_SAMPLE, &[8, 8, 8]));
                entries.push(IfdEntry::shorts(order, tags::SAMPLES_PER_PIXEL, &[3]));
            }
        }
        if let Some(text) = &self.software {
            entries.push(IfdEntry::ascii(tags::SOFTWARE, text));
        }
        if let Some(text) = &self.date_time {
            entries.push(IfdEntry::ascii(tags::DATE_TIME, text));
        }

        let doc = TiffDocument {
            header: TiffHeader {
                byte_order: order,
                magic: TIFF_MAGIC,
                first_ifd_offset: 0,
            },
            ifds: alloc::vec![Ifd {
                entries,
                next_ifd_offset: 0,
                preserve_order: false,
            }],
            strips,
            foreign_spans: Vec::new(),
            raw_length: 0,
        };
        doc.canonicalize()
            .expect("fixture dimensions produce a layout within 32-bit offsets")
    }
}

/// Deterministic, densely packed, uncompressed TIFF for `fixture`.
pub fn make_fixture_tiff(fixture: &TiffFixture) -> Vec<u8> {
    write_tiff(&fixture.document()).expect("canonical layout is always writable")
}
