mod common;

use chimera_core::chimera::{build_chimera, rebase_tiff, validate_chimera, SpliceMode};
use chimera_core::detector::{detect, ClaimedType, Verdict};
use chimera_core::pdf_lite::{
    find_header, make_fixture_pdf, scan_pdf, shift_pdf_offsets, MAX_HEADER_OFFSET,
};
use chimera_core::sanitizer::sanitize;
use chimera_core::signet::{
    sign_detached, verify_envelope, BindingMode, DigestSigner, RejectReason, SignatureEnvelope,
    Verification,
};
use chimera_core::tiff_codec::{parse_tiff, write_tiff, ByteOrder};
use chimera_core::Format;
use common::{arb_document, random_pair, read_tiff_view};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const PDF_MIME: &str = "application/pdf";

fn pair(seed: u64) -> (Vec<u8>, Vec<u8>) {
    random_pair(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn arb_name() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_ .-]{1,24}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn codec_round_trip(doc in arb_document()) {
        let bytes = write_tiff(&doc).unwrap();
        let back = parse_tiff(&bytes).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(write_tiff(&back).unwrap(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn inline_iff_four_bytes_or_less(doc in arb_document()) {
        let bytes = write_tiff(&doc).unwrap();
        for ifd in &parse_tiff(&bytes).unwrap().ifds {
            for e in &ifd.entries {
                let fits = u64::from(e.field_type.size()) * u64::from(e.count) <= 4;
                prop_assert_eq!(e.is_inline(), fits);
                prop_assert_eq!(e.out_of_line_offset().is_none(), fits);
            }
        }
    }

    #[test]
    fn byte_order_swap_is_structural(doc in arb_document()) {
        let order = doc.byte_order();
        let other = match order {
            ByteOrder::LittleEndian => ByteOrder::BigEndian,
            ByteOrder::BigEndian => ByteOrder::LittleEndian,
        };
        let swapped = write_tiff(&doc.with_byte_order(other)).unwrap();
        let back = parse_tiff(&swapped).unwrap().with_byte_order(order);
        prop_assert_eq!(&back, &doc);
        let (le_a, view_a) = read_tiff_view(&write_tiff(&doc).unwrap());
        let (le_b, view_b) = read_tiff_view(&swapped);
        prop_assert_ne!(le_a, le_b);
        prop_assert_eq!(view_a.len(), view_b.len());
        for (a, b) in view_a.iter().zip(&view_b) {
            prop_assert_eq!(&a.data, &b.data);
            prop_assert_eq!(a.entries.keys().collect::<Vec<_>>(), b.entries.keys().collect::<Vec<_>>());
        }
    }

    #[test]
    fn foreign_bytes_are_accounted(doc in arb_document(), junk in prop::collection::vec(any::<u8>(), 0..300)) {
        let mut bytes = write_tiff(&doc).unwrap();
        let clean_len = bytes.len() as u64;
        bytes.extend_from_slice(&junk);
        let parsed = parse_tiff(&bytes).unwrap();
        let foreign: u64 = parsed.foreign_spans.iter().map(|f| f.data.len() as u64).sum();
        prop_assert_eq!(foreign, junk.len() as u64);
        if !junk.is_empty() {
            prop_assert_eq!(parsed.foreign_spans[0].offset, clean_len);
        }
        prop_assert_eq!(write_tiff(&parsed).unwrap(), bytes);
    }

    #[test]
    fn tiff_rebase_is_additive(doc in arb_document(), a in 0u64..50_000, b in 0u64..50_000) {
        let once = rebase_tiff(&doc, a + b, 8);
        let twice = rebase_tiff(&doc, a, 8).and_then(|(first, _)| rebase_tiff(&first, b, 8));
        match (once, twice) {
            (Ok((x, _)), Ok((y, _))) => prop_assert_eq!(x, y),
            // SHORT data offsets may overflow; both routes must then fail.
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "{:?} vs {:?}", x.is_ok(), y.is_ok()),
        }
    }

    #[test]
    fn pdf_shift_is_additive(seed in any::<u64>(), a in 0i64..=1000, b in 0i64..100_000) {
        let p = pair(seed).1;
        let once = shift_pdf_offsets(&scan_pdf(&p).unwrap(), &p, a + b).unwrap();
        let first = shift_pdf_offsets(&scan_pdf(&p).unwrap(), &p, a).unwrap();
        let mut prefixed = vec![b' '; a as usize];
        prefixed.extend_from_slice(&first);
        let skel = scan_pdf(&prefixed).unwrap();
        prop_assert!(skel.resolution.from_file_start);
        let twice = shift_pdf_offsets(&skel, &prefixed, b).unwrap();
        prop_assert_eq!(&twice[a as usize..], &once[..]);
        let back = shift_pdf_offsets(&skel, &prefixed, -a).unwrap();
        prop_assert_eq!(&back[a as usize..], &p[..]);
    }

    #[test]
    fn junk_prefix_moves_header(k in 0usize..1200, fill in b'a'..=b'z') {
        let p = make_fixture_pdf("junk", "prop").unwrap();
        let mut b = vec![fill; k];
        b.extend_from_slice(&p);
        match find_header(&b) {
            Some(h) => {
                prop_assert!(k <= MAX_HEADER_OFFSET);
                prop_assert_eq!(h.offset, k);
            }
            None => prop_assert!(k > MAX_HEADER_OFFSET),
        }
    }

    #[test]
    fn legacy_ignores_renames(content in prop::collection::vec(any::<u8>(), 0..512), n1 in arb_name(), n2 in arb_name()) {
        prop_assume!(n1 != n2);
        let s = DigestSigner::new("prop");
        let env = sign_detached(&content, &n1, PDF_MIME, BindingMode::Legacy, &s).unwrap();
        prop_assert_eq!(verify_envelope(&env, &content, &n2, "image/tiff", &s), Verification::Accept);
        prop_assert_eq!(env.digest, Sha256::digest(&content).to_vec());
    }

    #[test]
    fn hardened_rejects_renames(content in prop::collection::vec(any::<u8>(), 0..512), n1 in arb_name(), n2 in arb_name()) {
        prop_assume!(n1 != n2);
        let s = DigestSigner::new("prop");
        let env = sign_detached(&content, &n1, PDF_MIME, BindingMode::Hardened, &s).unwrap();
        prop_assert_eq!(verify_envelope(&env, &content, &n1, PDF_MIME, &s), Verification::Accept);
        prop_assert_eq!(
            verify_envelope(&env, &content, &n2, PDF_MIME, &s),
            Verification::Reject(RejectReason::NameMismatch)
        );
    }

    #[test]
    fn any_byte_change_breaks_both_modes(
        content in prop::collection::vec(any::<u8>(), 1..512),
        at in any::<prop::sample::Index>(),
        delta in 1u8..=255,
        hardened in any::<bool>(),
    ) {
        let mode = if hardened { BindingMode::Hardened } else { BindingMode::Legacy };
        let s = DigestSigner::new("prop");
        let env = sign_detached(&content, "a.pdf", PDF_MIME, mode, &s).unwrap();
        let mut changed = content.clone();
        let i = at.index(changed.len());
        changed[i] = changed[i].wrapping_add(delta);
        prop_assert_eq!(
            verify_envelope(&env, &changed, "a.pdf", PDF_MIME, &s),
            Verification::Reject(RejectReason::BadSignature)
        );
    }

    #[test]
    fn envelope_round_trip(content in prop::collection::vec(any::<u8>(), 0..64), name in arb_name(), id in ".{0,40}", hardened in any::<bool>()) {
        let mode = if hardened { BindingMode::Hardened } else { BindingMode::Legacy };
        let env = sign_detached(&content, &name, "image/tiff", mode, &DigestSigner::new(id)).unwrap();
        let wire = env.encode().unwrap();
        let back = SignatureEnvelope::decode(&wire).unwrap();
        prop_assert_eq!(&back, &env);
        prop_assert_eq!(back.encode().unwrap(), wire);
    }

    #[test]
    fn decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = SignatureEnvelope::decode(&bytes);
        let mut framed = b"DSE1\x01".to_vec();
        framed.extend_from_slice(&bytes);
        let _ = SignatureEnvelope::decode(&framed);
    }

    #[test]
    fn parsers_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..600)) {
        let _ = parse_tiff(&bytes);
        let _ = scan_pdf(&bytes);
        let _ = detect(&bytes, ClaimedType::Unknown);
        let mut t = b"II*\0".to_vec();
        t.extend_from_slice(&bytes);
        let _ = parse_tiff(&t);
        let _ = detect(&t, ClaimedType::Tiff);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chimeras_are_flagged_and_disarmed(seed in any::<u64>(), strict in any::<bool>()) {
        let (t, p) = pair(seed);
        let mode = if strict { SpliceMode::Strict } else { SpliceMode::PaperFaithful };
        let (c, report) = build_chimera(&t, &p, mode).unwrap();
        prop_assert!(validate_chimera(&c).both());
        prop_assert_eq!(report.shift, p.len() as u64);
        prop_assert_eq!(c.len(), t.len() + p.len() + report.trailer_copy_span.len() as usize);
        for claim in [ClaimedType::Pdf, ClaimedType::Tiff, ClaimedType::Unknown] {
            prop_assert_eq!(detect(&c, claim).verdict, Verdict::Polyglot);
        }
        for fmt in [Format::Pdf, Format::Tiff] {
            let o = sanitize(&c, fmt).unwrap();
            prop_assert!(!validate_chimera(&o.output).both());
            prop_assert_eq!(detect(&o.output, fmt.into()).verdict, Verdict::Clean);
            prop_assert_eq!(sanitize(&o.output, fmt).unwrap().size_delta, 0);
            let dropped: u64 = o.dropped_spans.iter().map(|s| s.len()).sum();
            prop_assert!(o.output.len() as u64 + dropped >= c.len() as u64 - 8 * report.rewrites.len() as u64);
            prop_assert_eq!(parse_or_scan_foreign(&o.output, fmt), 0);
        }
    }
}

fn parse_or_scan_foreign(bytes: &[u8], fmt: Format) -> usize {
    match fmt {
        Format::Tiff => parse_tiff(bytes).unwrap().foreign_spans.len(),
        Format::Pdf => scan_pdf(bytes).unwrap().foreign_spans().len(),
    }
}
