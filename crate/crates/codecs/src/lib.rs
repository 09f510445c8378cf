//! Codec plug-ins. Each codec pairs a host-native encoder and recognizer with
//! a decoder written for the guest VM. The guest decoder is what gets archived.
//! The host decoders here are reference implementations. They are used to test
//! the guest decoders and as the reader's optional fast path.
//!
//! Guest decoders are assembled from `guest/*.s` at build time. Each one is a
//! pure filter: it reads the encoded stream from fd 0, writes the decoded bytes
//! to fd 1, then calls `done` and waits to be resumed with the next stream.

use thiserror::Error;

pub mod pcm1;
pub mod rice;
pub mod rle;
pub mod vxflate;
pub mod vxsf;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("corrupt stream: {0}")]
    CorruptStream(&'static str),
    #[error("input not in the codec's domain")]
    NotRecognized,
    #[error("unknown codec `{0}`")]
    UnknownCodec(String),
}

impl CodecError {
    pub(crate) fn corrupt(what: &'static str) -> CodecError {
        CodecError::CorruptStream(what)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodecKind {
    /// Transforms input at archive time.
    Full,
    /// Recognizes input that is already compressed and only attaches a decoder.
    Redec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Disposition {
    CompressWithCodec,
    StorePrecompressed,
    StorePlain,
}

pub const METHOD_STORE: u16 = 0;
pub const METHOD_VXFLATE: u16 = 8;
pub const METHOD_RLE: u16 = 9;
pub const METHOD_SPECIAL: u16 = 0x5658;

pub type EncodeFn = fn(&[u8]) -> Result<Vec<u8>, CodecError>;
/// Reference decode. The size argument is the entry's uncompressed size from
/// the container.
pub type DecodeFn = fn(&[u8], u64) -> Result<Vec<u8>, CodecError>;

pub struct CodecDescriptor {
    pub name: &'static str,
    pub method: u16,
    pub kind: CodecKind,
    recognize: fn(&[u8], &str) -> bool,
    pub encode: Option<EncodeFn>,
    pub host_decode: DecodeFn,
    pub decoder_image: &'static [u8],
    pub output_format: &'static str,
}

impl CodecDescriptor {
    /// The name as stored in archives: ASCII, space-padded to 8 bytes.
    pub fn tag(&self) -> [u8; 8] {
        tag_of(self.name)
    }

    pub fn recognizes(&self, data: &[u8], filename: &str) -> bool {
        (self.recognize)(data, filename)
    }
}

impl std::fmt::Debug for CodecDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CodecDescriptor")
            .field("name", &self.name)
            .field("method", &self.method)
            .field("kind", &self.kind)
            .field("decoder_image", &self.decoder_image.len())
            .finish()
    }
}

pub fn tag_of(name: &str) -> [u8; 8] {
    let mut tag = [b' '; 8];
    for (t, b) in tag.iter_mut().zip(name.bytes()) {
        *t = b;
    }
    tag
}

/// Inverse of [`tag_of`]; trailing spaces are dropped.
pub fn name_of(tag: &[u8; 8]) -> String {
    String::from_utf8_lossy(tag).trim_end_matches(' ').to_string()
}

mod images {
    include!(concat!(env!("OUT_DIR"), "/guest_images.rs"));
}

fn vxflate_encode(data: &[u8]) -> Result<Vec<u8>, CodecError> {
    Ok(vxflate::encode(data))
}

fn rle_encode(data: &[u8]) -> Result<Vec<u8>, CodecError> {
    Ok(rle::encode(data))
}

/// All codecs in recognition order. `rle` is never chosen automatically.
pub static REGISTRY: [CodecDescriptor; 4] = [
    CodecDescriptor {
        name: "pcm1",
        method: METHOD_SPECIAL,
        kind: CodecKind::Full,
        recognize: |data, _| pcm1::parse_wav(data).is_some(),
        encode: Some(pcm1::encode),
        host_decode: pcm1::decode,
        decoder_image: images::PCM1,
        output_format: "WAV",
    },
    CodecDescriptor {
        name: "vxsf",
        method: METHOD_STORE,
        kind: CodecKind::Redec,
        recognize: |data, _| vxsf::is_vxsf(data),
        encode: None,
        host_decode: vxsf::decode,
        decoder_image: images::VXSF,
        output_format: "raw bytes",
    },
    CodecDescriptor {
        name: "vxflate",
        method: METHOD_VXFLATE,
        kind: CodecKind::Full,
        recognize: |_, _| true,
        encode: Some(vxflate_encode),
        host_decode: vxflate::decode,
        decoder_image: images::VXFLATE,
        output_format: "raw bytes",
    },
    CodecDescriptor {
        name: "rle",
        method: METHOD_RLE,
        kind: CodecKind::Full,
        recognize: |_, _| false,
        encode: Some(rle_encode),
        host_decode: rle::decode,
        decoder_image: images::RLE,
        output_format: "raw bytes",
    },
];

pub fn codec(name: &str) -> Result<&'static CodecDescriptor, CodecError> {
    REGISTRY
        .iter()
        .find(|c| c.name == name.trim_end())
        .ok_or_else(|| CodecError::UnknownCodec(name.to_string()))
}

pub fn bundled_decoder(name: &str) -> Result<&'static [u8], CodecError> {
    codec(name).map(|c| c.decoder_image)
}

#[derive(Clone, Copy, Debug)]
pub struct Recognition {
    pub codec: Option<&'static CodecDescriptor>,
    pub disposition: Disposition,
}

/// First match in registry order wins. `data` should be the whole file, or
/// at least its first 64 bytes; the WAV check needs the whole file to confirm
/// the data chunk length.
pub fn recognize(data: &[u8], filename: &str) -> Recognition {
    let codec = REGISTRY.iter().find(|c| c.recognizes(data, filename));
    let disposition = match codec.map(|c| c.kind) {
        Some(CodecKind::Full) => Disposition::CompressWithCodec,
        Some(CodecKind::Redec) => Disposition::StorePrecompressed,
        None => Disposition::StorePlain,
    };
    Recognition { codec, disposition }
}
