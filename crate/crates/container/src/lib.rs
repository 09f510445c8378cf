//! VXA archives: ZIP-structured containers whose compressed entries carry a
//! reference to a decoder stored in the same archive.
//!
//! Decoders live in pseudo-files. These are local entries with an empty name
//! and the pseudo flag set, and they are absent from the central directory.
//! Ordinary ZIP-style listing never shows them. An entry that needs a decoder
//! holds the pseudo-file's offset in a VXA extension field.
//!
//! Without the `decoders` feature this crate is a baseline reader. It can
//! list entries and extract stored ones, but it cannot unpack decoder images.

use thiserror::Error;

pub mod format;
mod reader;
mod writer;

pub use format::{DecodedInfo, EndRecord, EntryHeader, Extension, VxaExtension};
pub use reader::{Archive, Entry, LocalRecord};
pub use writer::{ArchiveWriter, EntryOptions};

pub const METHOD_STORE: u16 = 0;
pub const METHOD_VXFLATE: u16 = 8;
pub const METHOD_RLE: u16 = 9;
pub const METHOD_SPECIAL: u16 = 0x5658;

/// Decoder images larger than this are refused when unpacking.
pub const MAX_DECODER_IMAGE: u64 = 16 << 20;

pub fn is_known_method(method: u16) -> bool {
    matches!(method, METHOD_STORE | METHOD_VXFLATE | METHOD_RLE | METHOD_SPECIAL)
}

/// CRC-32/IEEE, the checksum stored in entry headers.
pub fn crc32(data: &[u8]) -> u32 {
    crc32fast::hash(data)
}

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("not an archive: no end record")]
    NotAnArchive,
    #[error("corrupt end record at offset {offset}")]
    CorruptEndRecord { offset: u64 },
    #[error("archive truncated at offset {offset}")]
    Truncated { offset: u64 },
    #[error("bad magic at offset {offset}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { offset: u64, expected: u32, found: u32 },
    #[error("malformed extension field at offset {offset}")]
    BadExtension { offset: u64 },
    #[error("central directory at offset {offset} (size {size}) lies outside the archive")]
    CentralDirectoryOutOfBounds { offset: u64, size: u64 },
    #[error("end record promises {expected} entries, central directory holds {found}")]
    EntryCountMismatch { expected: u64, found: u64 },
    #[error("central directory disagrees with local header at offset {offset} on {field}")]
    HeaderMismatch { offset: u64, field: &'static str },
    #[error("invalid entry at offset {offset}: {reason}")]
    InvalidEntry { offset: u64, reason: &'static str },
    #[error("offset {offset} does not hold a decoder pseudo-file")]
    NotAPseudoFile { offset: u64 },
    #[error("entry `{0}` has no decoder")]
    NoDecoder(String),
    #[error("decoder pseudo-file at offset {offset} is damaged: {reason}")]
    DecoderDamaged { offset: u64, reason: String },

    #[error("entry name is empty")]
    EmptyName,
    #[error("duplicate entry name `{0}`")]
    DuplicateName(String),
    #[error("entry name of {0} bytes exceeds 65535")]
    NameTooLong(usize),
    #[error("extension area of {0} bytes exceeds 65535")]
    ExtensionsTooLarge(usize),
    #[error("stored entry has differing compressed and uncompressed sizes")]
    StoredSizeMismatch,
    #[error("unsupported method {0:#06x}")]
    UnsupportedMethod(u16),
    #[error("entry references decoder offset {offset}, which is not a pseudo-file of this archive")]
    DanglingDecoder { offset: u64 },
    #[error("invalid decoder image: {0}")]
    InvalidImage(String),
    #[error("archive already finished")]
    Finished,
}

impl ContainerError {
    /// True for errors that mean the archive bytes are damaged, as opposed
    /// to I/O failures or misuse of the writer.
    pub fn is_corruption(&self) -> bool {
        use ContainerError::*;
        matches!(
            self,
            NotAnArchive
                | CorruptEndRecord { .. }
                | Truncated { .. }
                | BadMagic { .. }
                | BadExtension { .. }
                | CentralDirectoryOutOfBounds { .. }
                | EntryCountMismatch { .. }
                | HeaderMismatch { .. }
                | InvalidEntry { .. }
                | NotAPseudoFile { .. }
                | DecoderDamaged { .. }
        )
    }
}
