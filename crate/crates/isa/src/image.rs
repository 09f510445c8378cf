//! VXE executable images.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic u32 | version u16 | reserved u16 | entry u32 | nsegs u16 | reserved u16
//! nsegs x (vaddr u32 | filesz u32 | memsz u32 | perm u8 | pad [u8; 3] | fileoff u32)
//! payload bytes
//! ```

use std::fmt;

use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x3141_5856;
pub const IMAGE_VERSION: u16 = 1;
pub const PAGE_SIZE: u32 = 4096;
/// Largest guest address space any image may target (1 GiB).
pub const MAX_GUEST_MEMORY: u64 = 1 << 30;

const HEADER_LEN: usize = 16;
const SEGMENT_LEN: usize = 20;

/// Page permission bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Perm(u8);

impl Perm {
    pub const NONE: Perm = Perm(0);
    pub const R: Perm = Perm(1);
    pub const W: Perm = Perm(2);
    pub const X: Perm = Perm(4);
    pub const RW: Perm = Perm(3);
    pub const RX: Perm = Perm(5);

    pub const fn from_bits(bits: u8) -> Option<Perm> {
        if bits & !7 == 0 {
            Some(Perm(bits))
        } else {
            None
        }
    }

    #[inline]
    pub const fn bits(self) -> u8 {
        self.0
    }

    #[inline]
    pub const fn contains(self, other: Perm) -> bool {
        self.0 & other.0 == other.0
    }

    /// Writable and executable at once.
    #[inline]
    pub const fn is_wx(self) -> bool {
        self.0 & 6 == 6
    }

    pub const fn union(self, other: Perm) -> Perm {
        Perm(self.0 | other.0)
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |bit: Perm, c: char| if self.contains(bit) { c } else { '-' };
        write!(f, "{}{}{}", flag(Perm::R, 'r'), flag(Perm::W, 'w'), flag(Perm::X, 'x'))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub vaddr: u32,
    pub memsz: u32,
    pub perm: Perm,
    /// File-backed bytes; the remaining `memsz - data.len()` bytes are zero.
    pub data: Vec<u8>,
}

impl Segment {
    pub fn end(&self) -> u64 {
        self.vaddr as u64 + self.memsz as u64
    }

    pub fn contains(&self, vaddr: u32) -> bool {
        vaddr >= self.vaddr && (vaddr as u64) < self.end()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutableImage {
    pub entry: u32,
    pub segments: Vec<Segment>,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("bad image magic {0:#010x}")]
    BadMagic(u32),
    #[error("unsupported image version {0}")]
    BadVersion(u16),
    #[error("image truncated: {what} needs bytes up to {needed}, image has {len}")]
    Truncated { what: &'static str, needed: u64, len: usize },
    #[error("segment {index}: {reason}")]
    BadSegment { index: usize, reason: &'static str },
    #[error("segments {first} and {second} overlap")]
    OverlappingSegments { first: usize, second: usize },
    #[error("segment {0} is both writable and executable")]
    WxViolation(usize),
    #[error("entry point {0:#x} is not inside an executable segment")]
    EntryNotExecutable(u32),
    #[error("segment {index} ends at {end:#x}, beyond the {limit:#x} byte guest limit")]
    LimitExceeded { index: usize, end: u64, limit: u64 },
}

/// Parses and checks an image. Every load path goes through here.
pub fn validate_image(bytes: &[u8]) -> Result<ExecutableImage, ImageError> {
    let need = |what, needed: usize| {
        if bytes.len() < needed {
            Err(ImageError::Truncated { what, needed: needed as u64, len: bytes.len() })
        } else {
            Ok(())
        }
    };
    need("header", HEADER_LEN)?;
    let u16_at = |at: usize| u16::from_le_bytes([bytes[at], bytes[at + 1]]);
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());

    let magic = u32_at(0);
    if magic != IMAGE_MAGIC {
        return Err(ImageError::BadMagic(magic));
    }
    let version = u16_at(4);
    if version != IMAGE_VERSION {
        return Err(ImageError::BadVersion(version));
    }
    let entry = u32_at(8);
    let nsegs = u16_at(12) as usize;
    need("segment table", HEADER_LEN + nsegs * SEGMENT_LEN)?;

    let mut segments = Vec::with_capacity(nsegs);
    for index in 0..nsegs {
        let at = HEADER_LEN + index * SEGMENT_LEN;
        let vaddr = u32_at(at);
        let filesz = u32_at(at + 4);
        let memsz = u32_at(at + 8);
        let perm_bits = bytes[at + 12];
        if bytes[at + 13..at + 16] != [0, 0, 0] {
            return Err(ImageError::BadSegment { index, reason: "non-zero padding" });
        }
        let fileoff = u32_at(at + 16);

        let perm = Perm::from_bits(perm_bits)
            .ok_or(ImageError::BadSegment { index, reason: "unknown permission bits" })?;
        if perm.is_wx() {
            return Err(ImageError::WxViolation(index));
        }
        if vaddr % PAGE_SIZE != 0 || memsz % PAGE_SIZE != 0 {
            return Err(ImageError::BadSegment { index, reason: "not page aligned" });
        }
        if memsz == 0 {
            return Err(ImageError::BadSegment { index, reason: "empty segment" });
        }
        if filesz > memsz {
            return Err(ImageError::BadSegment { index, reason: "filesz exceeds memsz" });
        }
        let end = vaddr as u64 + memsz as u64;
        if end > MAX_GUEST_MEMORY {
            return Err(ImageError::LimitExceeded { index, end, limit: MAX_GUEST_MEMORY });
        }
        let file_end = fileoff as u64 + filesz as u64;
        if file_end > bytes.len() as u64 {
            return Err(ImageError::Truncated { what: "segment payload", needed: file_end, len: bytes.len() });
        }
        let data = bytes[fileoff as usize..file_end as usize].to_vec();
        segments.push(Segment { vaddr, memsz, perm, data });
    }

    for (i, a) in segments.iter().enumerate() {
        for (j, b) in segments.iter().enumerate().skip(i + 1) {
            if (a.vaddr as u64) < b.end() && (b.vaddr as u64) < a.end() {
                return Err(ImageError::OverlappingSegments { first: i, second: j });
            }
        }
    }

    if !segments.iter().any(|s| s.perm.contains(Perm::X) && s.contains(entry)) {
        return Err(ImageError::EntryNotExecutable(entry));
    }

    Ok(ExecutableImage { entry, segments })
}

impl ExecutableImage {
    /// Serializes the image. Segment payloads follow the segment table in order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let table_end = HEADER_LEN + self.segments.len() * SEGMENT_LEN;
        let mut out = Vec::with_capacity(table_end + self.segments.iter().map(|s| s.data.len()).sum::<usize>());
        out.extend_from_slice(&IMAGE_MAGIC.to_le_bytes());
        out.extend_from_slice(&IMAGE_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&self.entry.to_le_bytes());
        out.extend_from_slice(&(self.segments.len() as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        let mut fileoff = table_end as u32;
        for seg in &self.segments {
            out.extend_from_slice(&seg.vaddr.to_le_bytes());
            out.extend_from_slice(&(seg.data.len() as u32).to_le_bytes());
            out.extend_from_slice(&seg.memsz.to_le_bytes());
            out.push(seg.perm.bits());
            out.extend_from_slice(&[0; 3]);
            out.extend_from_slice(&fileoff.to_le_bytes());
            fileoff += seg.data.len() as u32;
        }
        for seg in &self.segments {
            out.extend_from_slice(&seg.data);
        }
        out
    }

    /// Highest address (exclusive) touched by any segment.
    pub fn memory_end(&self) -> u64 {
        self.segments.iter().map(Segment::end).max().unwrap_or(0)
    }
}
