//! Lossless TIFF structure codec.
//!
//! [`parse_tiff`] models the 8-byte header, the IFD chain, every typed entry
//! (inline or out-of-line), and the strip/tile data the entries point at.
//! Bytes no structure points at are kept as [`ForeignSpan`]s, so
//! [`write_tiff`] reproduces a parsed file byte for byte.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::span::{self, ByteSpan};

mod fixture;
pub mod tags;

pub use fixture::{make_fixture_tiff, FixtureVariant, TiffFixture};

/// TIFF offsets are 32 bits wide, so no file may exceed this length.
pub const MAX_FILE_LEN: u64 = u32::MAX as u64;

/// Upper bound on the number of IFDs followed in one chain.
pub const MAX_IFDS: usize = 1024;

pub const TIFF_MAGIC: u16 = 42;
pub const HEADER_LEN: u64 = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TiffError {
    #[error("input is {len} bytes, shorter than the 8-byte TIFF header")]
    TooShort { len: u64 },
    #[error("input of {len} bytes exceeds the 32-bit TIFF offset range")]
    TooLarge { len: u64 },
    #[error("bad byte-order marker {0:02X?} (expected II or MM)")]
    BadByteOrder([u8; 2]),
    #[error("bad magic number {0} (expected 42)")]
    BadMagic(u16),
    #[error("{what} points at 0x{offset:X}, outside the file (length 0x{len:X})")]
    OffsetOutOfBounds {
        what: &'static str,
        offset: u64,
        len: u64,
    },
    #[error("IFD chain revisits or exceeds limits at offset 0x{offset:X}")]
    CyclicIfdChain { offset: u64 },
    #[error("IFD at 0x{offset:X} runs past the end of the file")]
    TruncatedEntry { offset: u64 },
    #[error("entry for tag 0x{tag:04X} has unknown field type {code}")]
    UnknownFieldType { tag: u16, code: u16 },
    #[error("IFD {ifd}: tag 0x{tag:04X} requires its companion tag 0x{missing:04X}")]
    MissingTag { ifd: usize, tag: u16, missing: u16 },
    #[error("IFD {ifd}: {offsets} data offsets but {byte_counts} byte counts")]
    StripCountMismatch {
        ifd: usize,
        offsets: usize,
        byte_counts: usize,
    },
    #[error("tag 0x{tag:04X} does not hold unsigned integer values")]
    NotAnOffsetArray { tag: u16 },
    #[error("IFD index {index} out of range ({count} IFDs)")]
    IfdIndexOutOfRange { index: usize, count: usize },
    #[error("IFD {ifd} has next offset 0 but more IFDs follow")]
    BrokenIfdChain { ifd: usize },
    #[error("{what} value 0x{value:X} does not fit its field")]
    OffsetOverflow { what: &'static str, value: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ByteOrder {
    LittleEndian,
    BigEndian,
}

impl ByteOrder {
    pub fn marker(self) -> [u8; 2] {
        match self {
            ByteOrder::LittleEndian => *b"II",
            ByteOrder::BigEndian => *b"MM",
        }
    }

    pub fn from_marker(marker: [u8; 2]) -> Option<Self> {
        match &marker {
            b"II" => Some(ByteOrder::LittleEndian),
            b"MM" => Some(ByteOrder::BigEndian),
            _ => None,
        }
    }

    pub fn read_u16(self, b: &[u8]) -> u16 {
        let a = [b[0], b[1]];
        match self {
            ByteOrder::LittleEndian => u16::from_le_bytes(a),
            ByteOrder::BigEndian => u16::from_be_bytes(a),
        }
    }

    pub fn read_u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            ByteOrder::LittleEndian => u32::from_le_bytes(a),
            ByteOrder::BigEndian => u32::from_be_bytes(a),
        }
    }

    pub fn u16_bytes(self, v: u16) -> [u8; 2] {
        match self {
            ByteOrder::LittleEndian => v.to_le_bytes(),
            ByteOrder::BigEndian => v.to_be_bytes(),
        }
    }

    pub fn u32_bytes(self, v: u32) -> [u8; 4] {
        match self {
            ByteOrder::LittleEndian => v.to_le_bytes(),
            ByteOrder::BigEndian => v.to_be_bytes(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TiffHeader {
    pub byte_order: ByteOrder,
    pub magic: u16,
    pub first_ifd_offset: u32,
}

impl TiffHeader {
    pub fn to_bytes(&self) -> [u8; 8] {
        let mut out = [0u8; 8];
        out[..2].copy_from_slice(&self.byte_order.marker());
        out[2..4].copy_from_slice(&self.byte_order.u16_bytes(self.magic));
        out[4..].copy_from_slice(&self.byte_order.u32_bytes(self.first_ifd_offset));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum FieldType {
    Byte = 1,
    Ascii = 2,
    Short = 3,
    Long = 4,
    Rational = 5,
    SByte = 6,
    Undefined = 7,
    SShort = 8,
    SLong = 9,
    SRational = 10,
    Float = 11,
    Double = 12,
}

impl FieldType {
    pub const ALL: [FieldType; 12] = [
        FieldType::Byte,
        FieldType::Ascii,
        FieldType::Short,
        FieldType::Long,
        FieldType::Rational,
        FieldType::SByte,
        FieldType::Undefined,
        FieldType::SShort,
        FieldType::SLong,
        FieldType::SRational,
        FieldType::Float,
        FieldType::Double,
    ];

    pub fn from_code(code: u16) -> Option<Self> {
        FieldType::ALL
            .get(usize::from(code).wrapping_sub(1))
            .copied()
    }

    pub fn code(self) -> u16 {
        self as u16
    }

    /// Size in bytes of one value of this type.
    pub fn size(self) -> u32 {
        match self {
            FieldType::Byte | FieldType::Ascii | FieldType::SByte | FieldType::Undefined => 1,
            FieldType::Short | FieldType::SShort => 2,
            FieldType::Long | FieldType::SLong | FieldType::Float => 4,
            FieldType::Rational | FieldType::SRational | FieldType::Double => 8,
        }
    }

    /// Width of the byte-order-sensitive unit inside one value.
    fn swap_unit(self) -> usize {
        match self {
            FieldType::Rational | FieldType::SRational => 4,
            other => other.size() as usize,
        }
    }
}

/// Where an entry's value lives.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Payload {
    /// The raw 4-byte value field; values are left-justified.
    Inline([u8; 4]),
    /// Values stored elsewhere in the file; the field holds their offset.
    OutOfLine { offset: u32, data: Vec<u8> },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IfdEntry {
    pub tag: u16,
    pub field_type: FieldType,
    pub count: u32,
    pub payload: Payload,
}

impl IfdEntry {
    /// Builds an entry from its encoded values. The payload is inline when
    /// the values fit into four bytes; out-of-line payloads start with
    /// offset 0 until a layout assigns them one.
    pub fn new(tag: u16, field_type: FieldType, count: u32, values: Vec<u8>) -> Self {
        debug_assert_eq!(
            values.len() as u64,
            u64::from(field_type.size()) * u64::from(count)
        );
        let payload = if values.len() <= 4 {
            let mut raw = [0u8; 4];
            raw[..values.len()].copy_from_slice(&values);
            Payload::Inline(raw)
        } else {
            Payload::OutOfLine {
                offset: 0,
                data: values,
            }
        };
        IfdEntry {
            tag,
            field_type,
            count,
            payload,
        }
    }

    pub fn shorts(order: ByteOrder, tag: u16, values: &[u16]) -> Self {
        let bytes = values.iter().flat_map(|v| order.u16_bytes(*v)).collect();
        IfdEntry::new(tag, FieldType::Short, values.len() as u32, bytes)
    }

    pub fn longs(order: ByteOrder, tag: u16, values: &[u32]) -> Self {
        let bytes = values.iter().flat_map(|v| order.u32_bytes(*v)).collect();
        IfdEntry::new(tag, FieldType::Long, values.len() as u32, bytes)
    }

    pub fn rational(order: ByteOrder, tag: u16, num: u32, den: u32) -> Self {
        let mut bytes = Vec::with_capacity(8);
        bytes.extend_from_slice(&order.u32_bytes(num));
        bytes.extend_from_slice(&order.u32_bytes(den));
        IfdEntry::new(tag, FieldType::Rational, 1, bytes)
    }

    /// ASCII entry; a trailing NUL is appended.
    pub fn ascii(tag: u16, text: &str) -> Self {
        let mut bytes = Vec::with_capacity(text.len() + 1);
        bytes.extend_from_slice(text.as_bytes());
        bytes.push(0);
        let count = bytes.len() as u32;
        IfdEntry::new(tag, FieldType::Ascii, count, bytes)
    }

    /// Total byte length of the values, `size × count`.
    pub fn value_len(&self) -> u64 {
        u64::from(self.field_type.size()) * u64::from(self.count)
    }

    pub fn is_inline(&self) -> bool {
        matches!(self.payload, Payload::Inline(_))
    }

    /// The value bytes, without inline padding.
    pub fn value_bytes(&self) -> &[u8] {
        match &self.payload {
            Payload::Inline(raw) => &raw[..(self.value_len() as usize).min(4)],
            Payload::OutOfLine { data, .. } => data,
        }
    }

    fn value_bytes_mut(&mut self) -> &mut [u8] {
        let len = self.value_len() as usize;
        match &mut self.payload {
            Payload::Inline(raw) => &mut raw[..len.min(4)],
            Payload::OutOfLine { data, .. } => data,
        }
    }

    pub fn out_of_line_offset(&self) -> Option<u32> {
        match self.payload {
            Payload::OutOfLine { offset, .. } => Some(offset),
            Payload::Inline(_) => None,
        }
    }

    /// Unsigned integer values (BYTE, SHORT or LONG), widened to `u64`.
    pub fn unsigned_values(&self, order: ByteOrder) -> Option<Vec<u64>> {
        let bytes = self.value_bytes();
        let values = match self.field_type {
            FieldType::Byte => bytes.iter().map(|b| u64::from(*b)).collect(),
            FieldType::Short => bytes
                .chunks_exact(2)
                .map(|c| u64::from(order.read_u16(c)))
                .collect(),
            FieldType::Long => bytes
                .chunks_exact(4)
                .map(|c| u64::from(order.read_u32(c)))
                .collect(),
            _ => return None,
        };
        Some(values)
    }

    /// Overwrites SHORT or LONG values in place, keeping the payload kind.
    pub fn set_unsigned_values(
        &mut self,
        order: ByteOrder,
        values: &[u64],
    ) -> Result<(), TiffError> {
        let field_type = self.field_type;
        let tag = self.tag;
        if values.len() != self.count as usize {
            return Err(TiffError::NotAnOffsetArray { tag });
        }
        let bytes = self.value_bytes_mut();
        match field_type {
            FieldType::Short => {
                for (chunk, v) in bytes.chunks_exact_mut(2).zip(values) {
                    let v = u16::try_from(*v).map_err(|_| TiffError::OffsetOverflow {
                        what: "SHORT value",
                        value: *v,
                    })?;
                    chunk.copy_from_slice(&order.u16_bytes(v));
                }
            }
            FieldType::Long => {
                for (chunk, v) in bytes.chunks_exact_mut(4).zip(values) {
                    let v = u32::try_from(*v).map_err(|_| TiffError::OffsetOverflow {
                        what: "LONG value",
                        value: *v,
                    })?;
                    chunk.copy_from_slice(&order.u32_bytes(v));
                }
            }
            _ => return Err(TiffError::NotAnOffsetArray { tag }),
        }
        Ok(())
    }

    /// Re-encodes every multi-byte value from one byte order to the other.
    fn swap_value_bytes(&mut self) {
        let unit = self.field_type.swap_unit();
        if unit > 1 {
            for chunk in self.value_bytes_mut().chunks_exact_mut(unit) {
                chunk.reverse();
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Ifd {
    pub entries: Vec<IfdEntry>,
    pub next_ifd_offset: u32,
    /// Emit entries in stored order instead of sorted by tag. Set by the
    /// parser when the input was not sorted, so that it round-trips.
    pub preserve_order: bool,
}

impl Ifd {
    /// Serialized size: count, 12 bytes per entry, next-IFD offset.
    pub fn encoded_len(&self) -> u64 {
        2 + 12 * self.entries.len() as u64 + 4
    }

    pub fn get(&self, tag: u16) -> Option<&IfdEntry> {
        self.entries.iter().find(|e| e.tag == tag)
    }

    pub fn get_mut(&mut self, tag: u16) -> Option<&mut IfdEntry> {
        self.entries.iter_mut().find(|e| e.tag == tag)
    }

    /// Indices into `entries` in the order they are written to disk.
    pub fn emission_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        if !self.preserve_order {
            order.sort_by_key(|&i| self.entries[i].tag);
        }
        order
    }

    /// Number of strips implied by the image geometry; a missing
    /// RowsPerStrip means one strip covers the whole image.
    pub fn expected_strip_count(&self, order: ByteOrder) -> Option<u64> {
        let first = |tag| {
            self.get(tag)
                .and_then(|e| e.unsigned_values(order))
                .and_then(|v| v.first().copied())
        };
        let length = first(tags::IMAGE_LENGTH)?;
        let rows = first(tags::ROWS_PER_STRIP)
            .unwrap_or(length)
            .clamp(1, length.max(1));
        let per_plane = length.div_ceil(rows);
        let planar = first(tags::PLANAR_CONFIGURATION).unwrap_or(1);
        let samples = first(tags::SAMPLES_PER_PIXEL).unwrap_or(1);
        Some(if planar == 2 {
            per_plane * samples
        } else {
            per_plane
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DataKind {
    Strip,
    Tile,
}

impl DataKind {
    pub fn offsets_tag(self) -> u16 {
        match self {
            DataKind::Strip => tags::STRIP_OFFSETS,
            DataKind::Tile => tags::TILE_OFFSETS,
        }
    }

    pub fn byte_counts_tag(self) -> u16 {
        match self {
            DataKind::Strip => tags::STRIP_BYTE_COUNTS,
            DataKind::Tile => tags::TILE_BYTE_COUNTS,
        }
    }
}

/// Image data addressed by StripOffsets/StripByteCounts (or the tile pair).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Strip {
    pub ifd: usize,
    pub kind: DataKind,
    pub index: usize,
    /// Kept 64-bit wide so an out-of-range position can be represented and
    /// rejected at write time.
    pub offset: u64,
    pub data: Vec<u8>,
}

impl Strip {
    pub fn span(&self) -> ByteSpan {
        ByteSpan::at(self.offset, self.data.len() as u64)
    }
}

/// Bytes that no TIFF structure refers to.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ForeignSpan {
    pub offset: u64,
    pub data: Vec<u8>,
}

impl ForeignSpan {
    pub fn span(&self) -> ByteSpan {
        ByteSpan::at(self.offset, self.data.len() as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TiffDocument {
    pub header: TiffHeader,
    pub ifds: Vec<Ifd>,
    pub strips: Vec<Strip>,
    pub foreign_spans: Vec<ForeignSpan>,
    pub raw_length: u64,
}

impl TiffDocument {
    pub fn byte_order(&self) -> ByteOrder {
        self.header.byte_order
    }

    /// File positions of each IFD, following the header and next pointers.
    pub fn ifd_positions(&self) -> Result<Vec<u64>, TiffError> {
        let mut positions = Vec::with_capacity(self.ifds.len());
        let mut next = self.header.first_ifd_offset;
        for (i, ifd) in self.ifds.iter().enumerate() {
            if next == 0 {
                return Err(TiffError::BrokenIfdChain {
                    ifd: i.saturating_sub(1),
                });
            }
            positions.push(u64::from(next));
            next = ifd.next_ifd_offset;
        }
        Ok(positions)
    }

    /// Byte ranges occupied by the header, IFDs, out-of-line values and
    /// image data.
    pub fn reachable_spans(&self) -> Vec<ByteSpan> {
        let mut spans = vec![ByteSpan::new(0, HEADER_LEN)];
        let mut next = u64::from(self.header.first_ifd_offset);
        for ifd in &self.ifds {
            spans.push(ByteSpan::at(next, ifd.encoded_len()));
            for e in &ifd.entries {
                if let Payload::OutOfLine { offset, data } = &e.payload {
                    spans.push(ByteSpan::at(u64::from(*offset), data.len() as u64));
                }
            }
            next = u64::from(ifd.next_ifd_offset);
        }
        spans.extend(self.strips.iter().map(Strip::span));
        span::merge(spans)
    }

    /// The same document with all multi-byte values re-encoded for `order`.
    pub fn with_byte_order(&self, order: ByteOrder) -> TiffDocument {
        let mut doc = self.clone();
        if order != self.header.byte_order {
            doc.header.byte_order = order;
            for e in doc.ifds.iter_mut().flat_map(|i| i.entries.iter_mut()) {
                e.swap_value_bytes();
            }
        }
        doc
    }

    /// Lays the document out densely: header, then for each IFD its
    /// directory, its out-of-line values in tag order, and its image data.
    /// Foreign spans are dropped and entries are sorted by tag.
    pub fn canonicalize(&self) -> Result<TiffDocument, TiffError> {
        let order = self.byte_order();
        let mut doc = self.clone();
        doc.foreign_spans.clear();

        // SHORT data offsets stay SHORT only if the whole file fits 16 bits.
        let total: u64 = HEADER_LEN
            + doc
                .ifds
                .iter()
                .map(|i| i.encoded_len() + i.entries.iter().map(|e| e.value_len() + 4).sum::<u64>())
                .sum::<u64>()
            + doc.strips.iter().map(|s| s.data.len() as u64).sum::<u64>();
        if total > u64::from(u16::MAX) {
            for ifd in &mut doc.ifds {
                for e in &mut ifd.entries {
                    let is_offsets = e.tag == tags::STRIP_OFFSETS || e.tag == tags::TILE_OFFSETS;
                    if is_offsets && e.field_type == FieldType::Short {
                        let values = e.unsigned_values(order).unwrap_or_default();
                        let longs: Vec<u32> = values.iter().map(|v| *v as u32).collect();
                        *e = IfdEntry::longs(order, e.tag, &longs);
                    }
                }
            }
        }

        let mut pos = HEADER_LEN;
        let mut ifd_positions = Vec::with_capacity(doc.ifds.len());
        for (k, ifd) in doc.ifds.iter_mut().enumerate() {
            ifd.entries.sort_by_key(|e| e.tag);
            ifd.preserve_order = false;
            ifd_positions.push(pos);
            pos += ifd.encoded_len();
            for e in &mut ifd.entries {
                if let Payload::OutOfLine { offset, data } = &mut e.payload {
                    *offset = u32::try_from(pos).map_err(|_| TiffError::OffsetOverflow {
                        what: "value offset",
                        value: pos,
                    })?;
                    pos += data.len() as u64;
                }
            }
            for kind in [DataKind::Strip, DataKind::Tile] {
                let mut new_offsets = Vec::new();
                for s in doc
                    .strips
                    .iter_mut()
                    .filter(|s| s.ifd == k && s.kind == kind)
                {
                    s.offset = pos;
                    new_offsets.push((s.index, pos));
                    pos += s.data.len() as u64;
                }
                if let Some(entry) = ifd.get_mut(kind.offsets_tag()) {
                    let mut values = entry.unsigned_values(order).unwrap_or_default();
                    for (index, off) in new_offsets {
                        if let Some(v) = values.get_mut(index) {
                            *v = off;
                        }
                    }
                    entry.set_unsigned_values(order, &values)?;
                }
            }
            if pos > MAX_FILE_LEN {
                return Err(TiffError::OffsetOverflow {
                    what: "layout end",
                    value: pos,
                });
            }
        }
        let n = ifd_positions.len();
        for (k, ifd) in doc.ifds.iter_mut().enumerate() {
            ifd.next_ifd_offset = if k + 1 < n {
                ifd_positions[k + 1] as u32
            } else {
                0
            };
        }
        doc.header.first_ifd_offset = ifd_positions.first().copied().unwrap_or(0) as u32;
        doc.raw_length = pos;
        Ok(doc)
    }
}

/// Looks up `tag` in IFD `ifd_index`; a missing tag is `Ok(None)`.
pub fn get_entry(
    doc: &TiffDocument,
    ifd_index: usize,
    tag: u16,
) -> Result<Option<&IfdEntry>, TiffError> {
    let ifd = doc
        .ifds
        .get(ifd_index)
        .ok_or(TiffError::IfdIndexOutOfRange {
            index: ifd_index,
            count: doc.ifds.len(),
        })?;
    Ok(ifd.get(tag))
}

pub fn parse_tiff(bytes: &[u8]) -> Result<TiffDocument, TiffError> {
    let len = bytes.len() as u64;
    if len > MAX_FILE_LEN {
        return Err(TiffError::TooLarge { len });
    }
    if len < HEADER_LEN {
        return Err(TiffError::TooShort { len });
    }
    let marker = [bytes[0], bytes[1]];
    let order = ByteOrder::from_marker(marker).ok_or(TiffError::BadByteOrder(marker))?;
    let magic = order.read_u16(&bytes[2..4]);
    if magic != TIFF_MAGIC {
        return Err(TiffError::BadMagic(magic));
    }
    let header = TiffHeader {
        byte_order: order,
        magic,
        first_ifd_offset: order.read_u32(&bytes[4..8]),
    };

    let mut ifds = Vec::new();
    let mut seen = BTreeSet::new();
    let mut next = u64::from(header.first_ifd_offset);
    let mut what = "first IFD offset";
    loop {
        if next < HEADER_LEN || next + 2 > len {
            return Err(TiffError::OffsetOutOfBounds {
                what,
                offset: next,
                len,
            });
        }
        if ifds.len() >= MAX_IFDS || !seen.insert(next) {
            return Err(TiffError::CyclicIfdChain { offset: next });
        }
        let ifd = parse_ifd(bytes, order, next)?;
        next = u64::from(ifd.next_ifd_offset);
        ifds.push(ifd);
        if next == 0 {
            break;
        }
        what = "next IFD offset";
    }

    let mut strips = Vec::new();
    for (k, ifd) in ifds.iter().enumerate() {
        for kind in [DataKind::Strip, DataKind::Tile] {
            collect_data(bytes, order, k, ifd, kind, &mut strips)?;
        }
    }

    let mut doc = TiffDocument {
        header,
        ifds,
        strips,
        foreign_spans: Vec::new(),
        raw_length: len,
    };
    doc.foreign_spans = span::complement(doc.reachable_spans(), len)
        .into_iter()
        .map(|s| ForeignSpan {
            offset: s.start,
            data: bytes[s.as_usize_range()].to_vec(),
        })
        .collect();
    Ok(doc)
}

fn parse_ifd(bytes: &[u8], order: ByteOrder, at: u64) -> Result<Ifd, TiffError> {
    let len = bytes.len() as u64;
    let p = at as usize;
    let count = order.read_u16(&bytes[p..p + 2]);
    let end = at + 2 + 12 * u64::from(count) + 4;
    if end > len {
        return Err(TiffError::TruncatedEntry { offset: at });
    }
    let mut entries = Vec::with_capacity(usize::from(count));
    for i in 0..usize::from(count) {
        let e = &bytes[p + 2 + 12 * i..p + 14 + 12 * i];
        let tag = order.read_u16(&e[0..2]);
        let code = order.read_u16(&e[2..4]);
        let field_type =
            FieldType::from_code(code).ok_or(TiffError::UnknownFieldType { tag, code })?;
        let count = order.read_u32(&e[4..8]);
        let raw = [e[8], e[9], e[10], e[11]];
        let value_len = u64::from(field_type.size()) * u64::from(count);
        let payload = if value_len <= 4 {
            Payload::Inline(raw)
        } else {
            let offset = order.read_u32(&raw);
            let start = u64::from(offset);
            if start < HEADER_LEN || start + value_len > len {
                return Err(TiffError::OffsetOutOfBounds {
                    what: "out-of-line value",
                    offset: start,
                    len,
                });
            }
            Payload::OutOfLine {
                offset,
                data: bytes[start as usize..(start + value_len) as usize].to_vec(),
            }
        };
        entries.push(IfdEntry {
            tag,
            field_type,
            count,
            payload,
        });
    }
    let next_ifd_offset = order.read_u32(&bytes[(end - 4) as usize..end as usize]);
    let preserve_order = entries.windows(2).any(|w| w[0].tag > w[1].tag);
    Ok(Ifd {
        entries,
        next_ifd_offset,
        preserve_order,
    })
}

fn collect_data(
    bytes: &[u8],
    order: ByteOrder,
    ifd_index: usize,
    ifd: &Ifd,
    kind: DataKind,
    out: &mut Vec<Strip>,
) -> Result<(), TiffError> {
    let offsets = ifd.get(kind.offsets_tag());
    let counts = ifd.get(kind.byte_counts_tag());
    let (offsets, counts) = match (offsets, counts) {
        (None, None) => return Ok(()),
        (Some(_), None) => {
            return Err(TiffError::MissingTag {
                ifd: ifd_index,
                tag: kind.offsets_tag(),
                missing: kind.byte_counts_tag(),
            })
        }
        (None, Some(_)) => {
            return Err(TiffError::MissingTag {
                ifd: ifd_index,
                tag: kind.byte_counts_tag(),
                missing: kind.offsets_tag(),
            })
        }
        (Some(o), Some(c)) => (o, c),
    };
    let offsets = offsets
        .unsigned_values(order)
        .ok_or(TiffError::NotAnOffsetArray { tag: offsets.tag })?;
    let counts = counts
        .unsigned_values(order)
        .ok_or(TiffError::NotAnOffsetArray { tag: counts.tag })?;
    if offsets.len() != counts.len() {
        return Err(TiffError::StripCountMismatch {
            ifd: ifd_index,
            offsets: offsets.len(),
            byte_counts: counts.len(),
        });
    }
    let len = bytes.len() as u64;
    for (index, (&offset, &count)) in offsets.iter().zip(&counts).enumerate() {
        if count > 0 && (offset < HEADER_LEN || offset + count > len) {
            return Err(TiffError::OffsetOutOfBounds {
                what: match kind {
                    DataKind::Strip => "strip offset",
                    DataKind::Tile => "tile offset",
                },
                offset,
                len,
            });
        }
        let data = if count > 0 {
            bytes[offset as usize..(offset + count) as usize].to_vec()
        } else {
            Vec::new()
        };
        out.push(Strip {
            ifd: ifd_index,
            kind,
            index,
            offset,
            data,
        });
    }
    Ok(())
}

pub fn write_tiff(doc: &TiffDocument) -> Result<Vec<u8>, TiffError> {
    let order = doc.byte_order();
    let positions = doc.ifd_positions()?;

    let mut extent = HEADER_LEN;
    let mut grow = |what: &'static str, s: ByteSpan| -> Result<(), TiffError> {
        if s.end > MAX_FILE_LEN {
            return Err(TiffError::OffsetOverflow {
                what,
                value: s.start,
            });
        }
        extent = extent.max(s.end);
        Ok(())
    };
    for (ifd, &pos) in doc.ifds.iter().zip(&positions) {
        grow("IFD offset", ByteSpan::at(pos, ifd.encoded_len()))?;
        for e in &ifd.entries {
            if let Payload::OutOfLine { offset, data } = &e.payload {
                grow(
                    "value offset",
                    ByteSpan::at(u64::from(*offset), data.len() as u64),
                )?;
            }
        }
    }
    for s in &doc.strips {
        grow("strip offset", s.span())?;
    }
    for f in &doc.foreign_spans {
        grow("foreign span", f.span())?;
    }

    let mut buf = vec![0u8; extent as usize];
    let mut put = |at: u64, data: &[u8]| {
        buf[at as usize..at as usize + data.len()].copy_from_slice(data);
    };
    for f in &doc.foreign_spans {
        put(f.offset, &f.data);
    }
    for s in &doc.strips {
        put(s.offset, &s.data);
    }
    for ifd in &doc.ifds {
        for e in &ifd.entries {
            if let Payload::OutOfLine { offset, data } = &e.payload {
                put(u64::from(*offset), data);
            }
        }
    }
    for (ifd, &pos) in doc.ifds.iter().zip(&positions) {
        let count = u16::try_from(ifd.entries.len()).map_err(|_| TiffError::OffsetOverflow {
            what: "entry count",
            value: ifd.entries.len() as u64,
        })?;
        let mut block = Vec::with_capacity(ifd.encoded_len() as usize);
        block.extend_from_slice(&order.u16_bytes(count));
        for i in ifd.emission_order() {
            let e = &ifd.entries[i];
            block.extend_from_slice(&order.u16_bytes(e.tag));
            block.extend_from_slice(&order.u16_bytes(e.field_type.code()));
            block.extend_from_slice(&order.u32_bytes(e.count));
            match &e.payload {
                Payload::Inline(raw) => block.extend_from_slice(raw),
                Payload::OutOfLine { offset, .. } => {
                    block.extend_from_slice(&order.u32_bytes(*offset))
                }
            }
        }
        block.extend_from_slice(&order.u32_bytes(ifd.next_ifd_offset));
        put(pos, &block);
    }
    put(0, &doc.header.to_bytes());
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    fn bilevel() -> Vec<u8> {
        make_fixture_tiff(&TiffFixture::new(8, 8, FixtureVariant::Bilevel))
    }

    #[test]
    fn field_type_sizes() {
        let sizes: Vec<u32> = FieldType::ALL.iter().map(|t| t.size()).collect();
        assert_eq!(sizes, [1, 1, 2, 4, 8, 1, 1, 2, 4, 8, 4, 8]);
        assert_eq!(FieldType::from_code(11), Some(FieldType::Float));
        assert_eq!(FieldType::from_code(12), Some(FieldType::Double));
        assert_eq!(FieldType::from_code(0), None);
        assert_eq!(FieldType::from_code(13), None);
    }

    #[test]
    fn little_endian_header() {
        let doc = parse_tiff(&bilevel()).unwrap();
        assert_eq!(
            doc.header,
            TiffHeader {
                byte_order: ByteOrder::LittleEndian,
                magic: 42,
                first_ifd_offset: 8
            }
        );
    }

    #[test]
    fn big_endian_header_at_0x14() {
        // Same directory as the fixture, but moved to 0x14 behind 12 bytes of
        // padding, as in the classic big-endian layout.
        let doc = parse_tiff(&make_fixture_tiff(
            &TiffFixture::new(8, 8, FixtureVariant::Bilevel).byte_order(ByteOrder::BigEndian),
        ))
        .unwrap();
        let (moved, _) = crate::chimera::rebase_tiff(&doc, 12, 8).unwrap();
        let bytes = write_tiff(&moved).unwrap();
        assert_eq!(
            &bytes[..8],
            &[0x4D, 0x4D, 0x00, 0x2A, 0x00, 0x00, 0x00, 0x14]
        );
        let parsed = parse_tiff(&bytes).unwrap();
        assert_eq!(parsed.header.byte_order, ByteOrder::BigEndian);
        assert_eq!(parsed.header.first_ifd_offset, 20);
        assert_eq!(parsed.foreign_spans.len(), 1);
        assert_eq!(parsed.foreign_spans[0].span(), ByteSpan::new(8, 20));
    }

    #[test]
    fn rejects_non_tiff() {
        let zip = [0x50, 0x4B, 0x03, 0x04, 0, 0, 0, 0, 0, 0];
        assert_eq!(parse_tiff(&zip), Err(TiffError::BadByteOrder([0x50, 0x4B])));
        assert_eq!(parse_tiff(b"II*"), Err(TiffError::TooShort { len: 3 }));
        assert_eq!(
            parse_tiff(&[0x49, 0x49, 0x2B, 0, 8, 0, 0, 0]),
            Err(TiffError::BadMagic(43))
        );
    }

    #[test]
    fn first_ifd_out_of_bounds() {
        let mut b = bilevel();
        b[4..8].copy_from_slice(&0xFFFF_u32.to_le_bytes());
        assert!(matches!(
            parse_tiff(&b),
            Err(TiffError::OffsetOutOfBounds { offset: 0xFFFF, .. })
        ));
        b[4..8].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(
            parse_tiff(&b),
            Err(TiffError::OffsetOutOfBounds { .. })
        ));
    }

    #[test]
    fn cyclic_chain_detected() {
        let mut b = bilevel();
        let doc = parse_tiff(&b).unwrap();
        let n = doc.ifds[0].entries.len();
        let next_at = 8 + 2 + 12 * n;
        b[next_at..next_at + 4].copy_from_slice(&8u32.to_le_bytes());
        assert_eq!(parse_tiff(&b), Err(TiffError::CyclicIfdChain { offset: 8 }));
    }

    #[test]
    fn truncated_ifd() {
        let b = bilevel();
        let doc = parse_tiff(&b).unwrap();
        let cut = 8 + doc.ifds[0].encoded_len() as usize - 1;
        // Keep only header plus a partial directory; value offsets then
        // point past the end too, but the directory is checked first.
        assert_eq!(
            parse_tiff(&b[..cut]),
            Err(TiffError::TruncatedEntry { offset: 8 })
        );
    }

    #[test]
    fn unknown_field_type() {
        let mut b = bilevel();
        b[8 + 2 + 2..8 + 2 + 4].copy_from_slice(&13u16.to_le_bytes());
        assert!(matches!(
            parse_tiff(&b),
            Err(TiffError::UnknownFieldType { code: 13, .. })
        ));
    }

    #[test]
    fn get_entry_lookups() {
        let doc = parse_tiff(&bilevel()).unwrap();
        let compression = get_entry(&doc, 0, tags::COMPRESSION).unwrap().unwrap();
        assert_eq!(compression.field_type, FieldType::Short);
        assert_eq!(
            compression.unsigned_values(ByteOrder::LittleEndian),
            Some(vec![1])
        );
        assert_eq!(get_entry(&doc, 0, tags::SAMPLES_PER_PIXEL).unwrap(), None);
        assert_eq!(
            get_entry(&doc, 5, tags::COMPRESSION),
            Err(TiffError::IfdIndexOutOfRange { index: 5, count: 1 })
        );
    }

    #[test]
    fn pristine_round_trip_is_identity() {
        for variant in [
            FixtureVariant::Bilevel,
            FixtureVariant::Grayscale,
            FixtureVariant::Rgb,
        ] {
            let b = make_fixture_tiff(
                &TiffFixture::new(13, 7, variant)
                    .software("PageMaker 4.0")
                    .rows_per_strip(3),
            );
            let doc = parse_tiff(&b).unwrap();
            assert!(doc.foreign_spans.is_empty());
            assert_eq!(write_tiff(&doc).unwrap(), b);
        }
    }

    #[test]
    fn foreign_bytes_survive_round_trip() {
        let mut b = bilevel();
        b.extend_from_slice(b"trailing bytes nobody points at");
        let doc = parse_tiff(&b).unwrap();
        assert_eq!(doc.foreign_spans.len(), 1);
        let reachable: u64 = doc.reachable_spans().iter().map(ByteSpan::len).sum();
        let foreign: u64 = doc.foreign_spans.iter().map(|f| f.data.len() as u64).sum();
        assert_eq!(reachable + foreign, b.len() as u64);
        assert_eq!(write_tiff(&doc).unwrap(), b);
    }

    #[test]
    fn unsorted_entries_round_trip() {
        let b = bilevel();
        let mut doc = parse_tiff(&b).unwrap();
        doc.ifds[0].entries.swap(0, 3);
        doc.ifds[0].preserve_order = true;
        let unsorted = write_tiff(&doc).unwrap();
        let reparsed = parse_tiff(&unsorted).unwrap();
        assert!(reparsed.ifds[0].preserve_order);
        assert_eq!(write_tiff(&reparsed).unwrap(), unsorted);
        // Without the flag the writer sorts again.
        doc.ifds[0].preserve_order = false;
        assert_eq!(write_tiff(&doc).unwrap(), b);
    }

    #[test]
    fn strip_beyond_32_bits_overflows() {
        let mut doc = parse_tiff(&bilevel()).unwrap();
        doc.strips[0].offset = 1 << 32;
        assert!(matches!(
            write_tiff(&doc),
            Err(TiffError::OffsetOverflow {
                what: "strip offset",
                ..
            })
        ));
    }

    #[test]
    fn strip_count_mismatch() {
        let mut doc = parse_tiff(&make_fixture_tiff(
            &TiffFixture::new(8, 8, FixtureVariant::Grayscale).rows_per_strip(4),
        ))
        .unwrap();
        let counts = doc.ifds[0].get_mut(tags::STRIP_BYTE_COUNTS).unwrap();
        *counts = IfdEntry::longs(ByteOrder::LittleEndian, tags::STRIP_BYTE_COUNTS, &[32]);
        let b = write_tiff(&doc).unwrap();
        assert_eq!(
            parse_tiff(&b),
            Err(TiffError::StripCountMismatch {
                ifd: 0,
                offsets: 2,
                byte_counts: 1
            })
        );
    }

    #[test]
    fn missing_rows_per_strip_means_one_strip() {
        let doc = parse_tiff(&bilevel()).unwrap();
        let mut ifd = doc.ifds[0].clone();
        ifd.entries.retain(|e| e.tag != tags::ROWS_PER_STRIP);
        assert_eq!(ifd.expected_strip_count(ByteOrder::LittleEndian), Some(1));
        let three = parse_tiff(&make_fixture_tiff(
            &TiffFixture::new(4, 9, FixtureVariant::Grayscale).rows_per_strip(4),
        ))
        .unwrap();
        assert_eq!(
            three.ifds[0].expected_strip_count(ByteOrder::LittleEndian),
            Some(3)
        );
        assert_eq!(three.strips.len(), 3);
    }

    #[test]
    fn byte_order_swap_is_structural() {
        let b = make_fixture_tiff(&TiffFixture::new(5, 3, FixtureVariant::Rgb).software("x"));
        let le = parse_tiff(&b).unwrap();
        let be = le.with_byte_order(ByteOrder::BigEndian);
        let be_bytes = write_tiff(&be).unwrap();
        assert_eq!(&be_bytes[..4], b"MM\0*");
        let be_parsed = parse_tiff(&be_bytes).unwrap();
        assert_eq!(be_parsed, be);
        let width = get_entry(&be_parsed, 0, tags::IMAGE_WIDTH)
            .unwrap()
            .unwrap();
        assert_eq!(width.unsigned_values(ByteOrder::BigEndian), Some(vec![5]));
        assert_eq!(be_parsed.with_byte_order(ByteOrder::LittleEndian), le);
    }

    #[test]
    fn ascii_entry_keeps_nul() {
        let e = IfdEntry::ascii(tags::SOFTWARE, "PageMaker 4.0");
        assert_eq!(e.count, 14);
        assert!(!e.is_inline());
        assert_eq!(String::from_utf8_lossy(e.value_bytes()), "PageMaker 4.0\0");
    }
}
