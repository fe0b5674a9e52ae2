#![allow(dead_code)]

use std::collections::BTreeMap;

use chimera_core::pdf_lite::make_fixture_pdf;
use chimera_core::tiff_codec::{
    make_fixture_tiff, tags, ByteOrder, DataKind, FieldType, FixtureVariant, Ifd, IfdEntry, Strip,
    TiffDocument, TiffFixture, TiffHeader, TIFF_MAGIC,
};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const VARIANTS: [FixtureVariant; 3] = [
    FixtureVariant::Bilevel,
    FixtureVariant::Grayscale,
    FixtureVariant::Rgb,
];

/// A randomized TIFF/PDF fixture pair.
pub fn random_pair(rng: &mut ChaCha8Rng) -> (Vec<u8>, Vec<u8>) {
    (random_tiff(rng), random_pdf(rng))
}

pub fn random_tiff(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let variant = VARIANTS[rng.gen_range(0..3)];
    let mut f =
        TiffFixture::new(rng.gen_range(1..160), rng.gen_range(1..90), variant).seed(rng.gen());
    if rng.gen_bool(0.5) {
        f = f.byte_order(ByteOrder::BigEndian);
    }
    if rng.gen_bool(0.6) {
        f = f.software(&random_text(rng, 1, 40));
    }
    if rng.gen_bool(0.4) {
        f = f.date_time("1988:02:18 13:59:59");
    }
    if rng.gen_bool(0.5) {
        f = f.rows_per_strip(rng.gen_range(1..20));
    }
    make_fixture_tiff(&f)
}

pub fn random_pdf(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let text = random_text(rng, 1, 300);
    let producer = random_text(rng, 1, 30);
    make_fixture_pdf(&text, &producer).unwrap()
}

pub fn random_text(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n)
        .map(|_| rng.gen_range(0x20u8..=0x7E) as char)
        .collect()
}

/// Structural content of one IFD as seen by an independent reader:
/// tag -> (type code, count, value bytes), with the data pointer arrays'
/// values omitted, plus the image data blocks in index order.
#[derive(Debug, PartialEq, Eq)]
pub struct IfdView {
    pub entries: BTreeMap<u16, (u16, u32, Option<Vec<u8>>)>,
    pub data: Vec<Vec<u8>>,
}

/// Minimal TIFF reader, written separately from the library codec so it
/// can serve as an oracle. Panics on malformed input.
pub fn read_tiff_view(b: &[u8]) -> (bool, Vec<IfdView>) {
    let le = &b[..2] == b"II";
    let u16_at = |p: usize| {
        let x = [b[p], b[p + 1]];
        if le {
            u16::from_le_bytes(x)
        } else {
            u16::from_be_bytes(x)
        }
    };
    let u32_at = |p: usize| {
        let x = [b[p], b[p + 1], b[p + 2], b[p + 3]];
        if le {
            u32::from_le_bytes(x)
        } else {
            u32::from_be_bytes(x)
        }
    };
    let size = |t: u16| match t {
        1 | 2 | 6 | 7 => 1usize,
        3 | 8 => 2,
        4 | 9 | 11 => 4,
        5 | 10 | 12 => 8,
        _ => panic!("type {t}"),
    };
    assert_eq!(u16_at(2), 42);
    let mut views = Vec::new();
    let mut at = u32_at(4) as usize;
    while at != 0 {
        let n = u16_at(at) as usize;
        let mut entries = BTreeMap::new();
        let mut raw = BTreeMap::new();
        for i in 0..n {
            let e = at + 2 + 12 * i;
            let (tag, ty, count) = (u16_at(e), u16_at(e + 2), u32_at(e + 4));
            let len = size(ty) * count as usize;
            let start = if len <= 4 {
                e + 8
            } else {
                u32_at(e + 8) as usize
            };
            let bytes = b[start..start + len].to_vec();
            let numbers: Vec<u64> = match ty {
                3 => (0..count as usize)
                    .map(|j| u64::from(u16_at(start + 2 * j)))
                    .collect(),
                4 => (0..count as usize)
                    .map(|j| u64::from(u32_at(start + 4 * j)))
                    .collect(),
                _ => Vec::new(),
            };
            raw.insert(tag, numbers);
            let is_pointer = tag == tags::STRIP_OFFSETS || tag == tags::TILE_OFFSETS;
            entries.insert(tag, (ty, count, (!is_pointer).then_some(bytes)));
        }
        let mut data = Vec::new();
        for (o, c) in [
            (tags::STRIP_OFFSETS, tags::STRIP_BYTE_COUNTS),
            (tags::TILE_OFFSETS, tags::TILE_BYTE_COUNTS),
        ] {
            if let (Some(offs), Some(counts)) = (raw.get(&o), raw.get(&c)) {
                for (&off, &cnt) in offs.iter().zip(counts) {
                    data.push(b[off as usize..(off + cnt) as usize].to_vec());
                }
            }
        }
        views.push(IfdView { entries, data });
        at = u32_at(at + 2 + 12 * n) as usize;
    }
    (le, views)
}

fn arb_field_type() -> impl Strategy<Value = FieldType> {
    prop::sample::select(FieldType::ALL.to_vec())
}

/// Entry with a tag outside the data-pointer and geometry set.
fn arb_entry() -> impl Strategy<Value = IfdEntry> {
    (0x8000u16..=0xFFFF, arb_field_type(), 0u32..=12).prop_flat_map(|(tag, ty, count)| {
        let len = ty.size() as usize * count as usize;
        (prop::collection::vec(any::<u8>(), len), any::<[u8; 4]>()).prop_map(
            move |(values, pad)| {
                let mut e = IfdEntry::new(tag, ty, count, values);
                if let chimera_core::tiff_codec::Payload::Inline(raw) = &mut e.payload {
                    // Padding bytes of inline values are part of the structure.
                    raw[len..].copy_from_slice(&pad[len..]);
                }
                e
            },
        )
    })
}

/// Image data: kind, SHORT offsets, blocks.
type RawData = Option<(DataKind, bool, Vec<Vec<u8>>)>;

fn arb_ifd() -> impl Strategy<Value = (Vec<IfdEntry>, RawData)> {
    let data = prop::option::of((
        prop::sample::select(vec![DataKind::Strip, DataKind::Tile]),
        any::<bool>(),
        prop::collection::vec(prop::collection::vec(any::<u8>(), 0..40), 1..5),
    ));
    (prop::collection::vec(arb_entry(), 0..8), data)
}

/// Random, structurally valid TIFF documents laid out canonically.
pub fn arb_document() -> impl Strategy<Value = TiffDocument> {
    prop::sample::select(vec![ByteOrder::LittleEndian, ByteOrder::BigEndian]).prop_flat_map(
        |order| {
            prop::collection::vec(arb_ifd(), 1..4).prop_map(move |ifds| build_document(order, ifds))
        },
    )
}

fn build_document(order: ByteOrder, raw: Vec<(Vec<IfdEntry>, RawData)>) -> TiffDocument {
    let mut ifds = Vec::new();
    let mut strips = Vec::new();
    for (k, (mut entries, data)) in raw.into_iter().enumerate() {
        let mut seen = std::collections::BTreeSet::new();
        entries.retain(|e| seen.insert(e.tag));
        if let Some((kind, short, blocks)) = data {
            let n = blocks.len();
            let offsets = if short {
                IfdEntry::shorts(order, kind.offsets_tag(), &vec![0; n])
            } else {
                IfdEntry::longs(order, kind.offsets_tag(), &vec![0; n])
            };
            let counts: Vec<u32> = blocks.iter().map(|b| b.len() as u32).collect();
            entries.push(offsets);
            entries.push(IfdEntry::longs(order, kind.byte_counts_tag(), &counts));
            for (index, data) in blocks.into_iter().enumerate() {
                strips.push(Strip {
                    ifd: k,
                    kind,
                    index,
                    offset: 0,
                    data,
                });
            }
        }
        ifds.push(Ifd {
            entries,
            next_ifd_offset: 0,
            preserve_order: false,
        });
    }
    TiffDocument {
        header: TiffHeader {
            byte_order: order,
            magic: TIFF_MAGIC,
            first_ifd_offset: 0,
        },
        ifds,
        strips,
        foreign_spans: Vec::new(),
        raw_length: 0,
    }
    .canonicalize()
    .unwrap()
}
