//! Detached signature envelopes (`.dse`).
//!
//! A `Legacy` envelope signs only the content digest, so the signature
//! says nothing about how the file will be opened. A `Hardened` envelope
//! also signs the filename and MIME type and rejects a renamed file.
//!
//! Wire format, all lengths big-endian `u16`:
//!
//! ```text
//! "DSE1" version binding digest_alg
//! name_len name mime_len mime
//! digest[32] sig_len signature signer_id_len signer_id
//! ```

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};

use crate::chimera::{build_chimera, validate_chimera, ChimeraError, ChimeraReport, SpliceMode};
use crate::detector::{detect, ClaimedType, Verdict};
use crate::Format;

pub const MAGIC: &[u8; 4] = b"DSE1";
pub const VERSION: u8 = 1;
pub const DEMO_SIGNED_NAME: &str = "Contract.pdf";
pub const DEMO_RENAMED_NAME: &str = "Contract.tif";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BindingMode {
    /// Content bytes only.
    Legacy,
    /// Content bytes, filename and MIME type.
    Hardened,
}

impl BindingMode {
    pub fn code(self) -> u8 {
        match self {
            BindingMode::Legacy => 0,
            BindingMode::Hardened => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(BindingMode::Legacy),
            1 => Some(BindingMode::Hardened),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BindingMode::Legacy => "legacy",
            BindingMode::Hardened => "hardened",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DigestAlgorithm {
    Sha256,
}

impl DigestAlgorithm {
    pub fn code(self) -> u8 {
        1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        (code == 1).then_some(DigestAlgorithm::Sha256)
    }

    pub fn output_len(self) -> usize {
        32
    }

    pub fn digest(self, data: &[u8]) -> Vec<u8> {
        Sha256::digest(data).to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("missing DSE1 magic")]
    BadMagic,
    #[error("unsupported envelope version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown binding mode {0}")]
    UnknownBinding(u8),
    #[error("unknown digest algorithm {0}")]
    UnknownDigest(u8),
    #[error("envelope truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after envelope")]
    TrailingBytes(usize),
    #[error("{0} is not valid UTF-8")]
    BadUtf8(&'static str),
    #[error("{field} is {len} bytes, more than a u16 length allows")]
    FieldTooLong { field: &'static str, len: usize },
    #[error("binding mode {mode:?} inconsistent with the bound name/MIME fields")]
    InconsistentBinding { mode: BindingMode },
    #[error("digest is {actual} bytes, expected {expected}")]
    DigestLength { expected: usize, actual: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SignatureEnvelope {
    pub version: u8,
    pub binding: BindingMode,
    pub digest_alg: DigestAlgorithm,
    pub bound_name: Option<String>,
    pub bound_mime: Option<String>,
    pub digest: Vec<u8>,
    pub signature: Vec<u8>,
    pub signer_id: Vec<u8>,
}

fn put_field(out: &mut Vec<u8>, field: &'static str, data: &[u8]) -> Result<(), EnvelopeError> {
    let len = u16::try_from(data.len()).map_err(|_| EnvelopeError::FieldTooLong {
        field,
        len: data.len(),
    })?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(data);
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], EnvelopeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(EnvelopeError::Truncated(what))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn byte(&mut self, what: &'static str) -> Result<u8, EnvelopeError> {
        Ok(self.take(1, what)?[0])
    }

    fn field(&mut self, what: &'static str) -> Result<&'a [u8], EnvelopeError> {
        let len = self.take(2, what)?;
        let len = u16::from_be_bytes([len[0], len[1]]) as usize;
        self.take(len, what)
    }

    fn text(&mut self, what: &'static str) -> Result<Option<String>, EnvelopeError> {
        let raw = self.field(what)?;
        if raw.is_empty() {
            return Ok(None);
        }
        core::str::from_utf8(raw)
            .map(|s| Some(s.to_string()))
            .map_err(|_| EnvelopeError::BadUtf8(what))
    }
}

impl SignatureEnvelope {
    fn check(&self) -> Result<(), EnvelopeError> {
        let bound = (self.bound_name.is_some(), self.bound_mime.is_some());
        let consistent = match self.binding {
            BindingMode::Legacy => bound == (false, false),
            BindingMode::Hardened => bound == (true, true),
        };
        if !consistent {
            return Err(EnvelopeError::InconsistentBinding { mode: self.binding });
        }
        let expected = self.digest_alg.output_len();
        if self.digest.len() != expected {
            return Err(EnvelopeError::DigestLength {
                expected,
                actual: self.digest.len(),
            });
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>, EnvelopeError> {
        self.check()?;
        let mut out = Vec::with_capacity(64 + self.signature.len() + self.signer_id.len());
        out.extend_from_slice(MAGIC);
        out.push(self.version);
        out.push(self.binding.code());
        out.push(self.digest_alg.code());
        put_field(
            &mut out,
            "name",
            self.bound_name.as_deref().unwrap_or("").as_bytes(),
        )?;
        put_field(
            &mut out,
            "mime",
            self.bound_mime.as_deref().unwrap_or("").as_bytes(),
        )?;
        out.extend_from_slice(&self.digest);
        put_field(&mut out, "signature", &self.signature)?;
        put_field(&mut out, "signer_id", &self.signer_id)?;
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EnvelopeError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic").map_err(|_| EnvelopeError::BadMagic)? != MAGIC {
            return Err(EnvelopeError::BadMagic);
        }
        let version = r.byte("version")?;
        if version != VERSION {
            return Err(EnvelopeError::UnsupportedVersion(version));
        }
        let code = r.byte("binding")?;
        let binding = BindingMode::from_code(code).ok_or(EnvelopeError::UnknownBinding(code))?;
        let code = r.byte("digest algorithm")?;
        let digest_alg =
            DigestAlgorithm::from_code(code).ok_or(EnvelopeError::UnknownDigest(code))?;
        let bound_name = r.text("name")?;
        let bound_mime = r.text("mime")?;
        let digest = r.take(digest_alg.output_len(), "digest")?.to_vec();
        let signature = r.field("signature")?.to_vec();
        let signer_id = r.field("signer_id")?.to_vec();
        if r.pos != bytes.len() {
            return Err(EnvelopeError::TrailingBytes(bytes.len() - r.pos));
        }
        let env = SignatureEnvelope {
            version,
            binding,
            digest_alg,
            bound_name,
            bound_mime,
            digest,
            signature,
            signer_id,
        };
        env.check()?;
        Ok(env)
    }

    /// The bytes handed to the signer backend.
    pub fn signed_message(&self) -> Vec<u8> {
        framed_message(
            self.binding,
            &self.digest,
            self.bound_name.as_deref().unwrap_or(""),
            self.bound_mime.as_deref().unwrap_or(""),
        )
    }
}

/// Legacy: the digest. Hardened: `digest ‖ 0x00 ‖ name ‖ 0x00 ‖ mime`.
fn framed_message(mode: BindingMode, digest: &[u8], name: &str, mime: &str) -> Vec<u8> {
    let mut m = digest.to_vec();
    if mode == BindingMode::Hardened {
        m.push(0);
        m.extend_from_slice(name.as_bytes());
        m.push(0);
        m.extend_from_slice(mime.as_bytes());
    }
    m
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SignError {
    #[error("filename must not be empty")]
    EmptyFilename,
    #[error("hardened envelopes bind application/pdf or image/tiff, not {0:?}")]
    UnsupportedMime(String),
    #[error("{0} contains a NUL byte")]
    NulByte(&'static str),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error("signer backend failed: {0}")]
    Backend(String),
}

/// A signing key. Implementations must be safe to share across threads.
pub trait SignerBackend {
    fn id(&self) -> &[u8];
    fn sign(&self, message: &[u8]) -> Result<Vec<u8>, SignError>;
    fn verify(&self, message: &[u8], signature: &[u8]) -> bool;
}

/// Deterministic stand-in for a real key: `SHA-256(signer_id ‖ message)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DigestSigner {
    id: Vec<u8>,
}

impl DigestSigner {
    pub fn new(id: impl Into<Vec<u8>>) -> Self {
        DigestSigner { id: id.into() }
    }

    fn mac(&self, message: &[u8]) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(&self.id);
        h.update(message);
        h.finalize().to_vec()
    }
}

impl SignerBackend for DigestSigner {
    fn id(&self) -> &[u8] {
        &self.id
    }

    fn sign(&self, message: &[u8]) -> Result<Vec<u8>, SignError> {
        Ok(self.mac(message))
    }

    fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        self.mac(message) == signature
    }
}

pub fn sign_detached(
    content: &[u8],
    filename: &str,
    mime: &str,
    mode: BindingMode,
    backend: &dyn SignerBackend,
) -> Result<SignatureEnvelope, SignError> {
    if filename.is_empty() {
        return Err(SignError::EmptyFilename);
    }
    let (bound_name, bound_mime) = match mode {
        BindingMode::Legacy => (None, None),
        BindingMode::Hardened => {
            if mime != Format::Pdf.mime() && mime != Format::Tiff.mime() {
                return Err(SignError::UnsupportedMime(mime.into()));
            }
            if filename.contains('\0') {
                return Err(SignError::NulByte("filename"));
            }
            (Some(filename.to_string()), Some(mime.to_string()))
        }
    };
    let digest_alg = DigestAlgorithm::Sha256;
    let mut env = SignatureEnvelope {
        version: VERSION,
        binding: mode,
        digest_alg,
        bound_name,
        bound_mime,
        digest: digest_alg.digest(content),
        signature: Vec::new(),
        signer_id: backend.id().to_vec(),
    };
    env.signature = backend.sign(&env.signed_message())?;
    env.check()?;
    Ok(env)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RejectReason {
    BadSignature,
    NameMismatch,
    MimeMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verification {
    Accept,
    Reject(RejectReason),
}

impl Verification {
    pub fn accepted(self) -> bool {
        self == Verification::Accept
    }
}

impl fmt::Display for Verification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verification::Accept => f.write_str("accept"),
            Verification::Reject(r) => write!(f, "reject({:?})", r),
        }
    }
}

/// Signature first, then name, then MIME. Legacy envelopes ignore the
/// presented name and MIME.
pub fn verify_envelope(
    envelope: &SignatureEnvelope,
    content: &[u8],
    presented_filename: &str,
    presented_mime: &str,
    backend: &dyn SignerBackend,
) -> Verification {
    let bad = Verification::Reject(RejectReason::BadSignature);
    if envelope.check().is_err() || envelope.signer_id != backend.id() {
        return bad;
    }
    let digest = envelope.digest_alg.digest(content);
    if digest != envelope.digest || !backend.verify(&envelope.signed_message(), &envelope.signature)
    {
        return bad;
    }
    if envelope.binding == BindingMode::Hardened {
        if envelope.bound_name.as_deref() != Some(presented_filename) {
            return Verification::Reject(RejectReason::NameMismatch);
        }
        if envelope.bound_mime.as_deref() != Some(presented_mime) {
            return Verification::Reject(RejectReason::MimeMismatch);
        }
    }
    Verification::Accept
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Chimera(#[from] ChimeraError),
    #[error(transparent)]
    Sign(#[from] SignError),
}

/// Record of one run through the sign-then-rename scenario.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub document: Vec<u8>,
    /// Present when the demo built the document itself.
    pub chimera_report: Option<ChimeraReport>,
    pub dual_valid: bool,
    pub detector_verdict: Verdict,
    pub legacy: SignatureEnvelope,
    pub hardened: SignatureEnvelope,
    pub legacy_accept_as_signed: bool,
    pub hardened_accept_as_signed: bool,
    /// `None` when the rename step was refused because the document does
    /// not open as a TIFF as well.
    pub legacy_accept_after_rename: Option<bool>,
    pub hardened_after_rename: Option<Verification>,
    pub legacy_accept_after_bit_flip: bool,
}

impl Transcript {
    pub fn rename_performed(&self) -> bool {
        self.legacy_accept_after_rename.is_some()
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "chimera_built: {}", self.chimera_report.is_some())?;
        writeln!(f, "document_bytes: {}", self.document.len())?;
        writeln!(f, "dual_valid: {}", self.dual_valid)?;
        writeln!(f, "detector_verdict: {}", self.detector_verdict.as_str())?;
        writeln!(
            f,
            "signed_as: {} ({})",
            DEMO_SIGNED_NAME,
            Format::Pdf.mime()
        )?;
        writeln!(
            f,
            "legacy_accept_as_signed: {}",
            self.legacy_accept_as_signed
        )?;
        writeln!(
            f,
            "hardened_accept_as_signed: {}",
            self.hardened_accept_as_signed
        )?;
        match (self.legacy_accept_after_rename, self.hardened_after_rename) {
            (Some(legacy), Some(hardened)) => {
                writeln!(
                    f,
                    "renamed_to: {} ({})",
                    DEMO_RENAMED_NAME,
                    Format::Tiff.mime()
                )?;
                writeln!(f, "legacy_accept_after_rename: {}", legacy)?;
                writeln!(f, "hardened_after_rename: {}", hardened)?;
            }
            _ => writeln!(
                f,
                "renamed_to: refused (document is not a TIFF/PDF polyglot)"
            )?,
        }
        writeln!(
            f,
            "legacy_accept_after_bit_flip: {}",
            self.legacy_accept_after_bit_flip
        )
    }
}

/// Builds a chimera from `tiff` and `pdf`, then runs [`enact_signing`] on it.
pub fn attack_demo(
    tiff: &[u8],
    pdf: &[u8],
    backend: &dyn SignerBackend,
) -> Result<Transcript, DemoError> {
    let (chimera, report) = build_chimera(tiff, pdf, SpliceMode::PaperFaithful)?;
    let mut t = enact_signing(&chimera, backend)?;
    t.chimera_report = Some(report);
    Ok(t)
}

/// Signs `document` as a PDF in both modes, then presents it as a TIFF.
/// The rename step only happens if the document really opens as both.
pub fn enact_signing(
    document: &[u8],
    backend: &dyn SignerBackend,
) -> Result<Transcript, DemoError> {
    let pdf_mime = Format::Pdf.mime();
    let tiff_mime = Format::Tiff.mime();
    let legacy = sign_detached(
        document,
        DEMO_SIGNED_NAME,
        pdf_mime,
        BindingMode::Legacy,
        backend,
    )?;
    let hardened = sign_detached(
        document,
        DEMO_SIGNED_NAME,
        pdf_mime,
        BindingMode::Hardened,
        backend,
    )?;
    let verify = |env: &SignatureEnvelope, content: &[u8], name: &str, mime: &str| {
        verify_envelope(env, content, name, mime, backend)
    };

    let dual_valid = validate_chimera(document).both();
    let (legacy_after, hardened_after) = if dual_valid {
        (
            Some(verify(&legacy, document, DEMO_RENAMED_NAME, tiff_mime).accepted()),
            Some(verify(&hardened, document, DEMO_RENAMED_NAME, tiff_mime)),
        )
    } else {
        (None, None)
    };

    let mut flipped = document.to_vec();
    if let Some(b) = flipped.last_mut() {
        *b ^= 1;
    } else {
        flipped.push(1);
    }

    Ok(Transcript {
        document: document.to_vec(),
        chimera_report: None,
        dual_valid,
        detector_verdict: detect(document, ClaimedType::Pdf).verdict,
        legacy_accept_as_signed: verify(&legacy, document, DEMO_SIGNED_NAME, pdf_mime).accepted(),
        hardened_accept_as_signed: verify(&hardened, document, DEMO_SIGNED_NAME, pdf_mime)
            .accepted(),
        legacy_accept_after_rename: legacy_after,
        hardened_after_rename: hardened_after,
        legacy_accept_after_bit_flip: verify(&legacy, &flipped, DEMO_SIGNED_NAME, pdf_mime)
            .accepted(),
        legacy,
        hardened,
    })
}
