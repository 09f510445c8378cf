use std::collections::{HashMap, HashSet};
use std::io::Write;

use crate::format::{DecodedInfo, EndRecord, EntryHeader, VxaExtension, VERSION};
use crate::{crc32, is_known_method, ContainerError, METHOD_STORE};

/// Per-entry metadata beyond name, method and payload.
#[derive(Clone, Copy, Debug, Default)]
pub struct EntryOptions {
    pub decoder: Option<VxaExtension>,
    /// Size and CRC of the decoded form, for stored entries whose decoder
    /// produces something other than the stored bytes.
    pub decoded: Option<DecodedInfo>,
}

/// Appends entries to an archive. Entries are written in call order.
/// [`ArchiveWriter::finish`] adds the central directory and end record.
pub struct ArchiveWriter<W: Write> {
    out: W,
    offset: u64,
    central: Vec<u8>,
    entry_count: u64,
    names: HashSet<Vec<u8>>,
    pseudo_offsets: HashSet<u64>,
    decoder_refs: Vec<u64>,
    #[cfg_attr(not(feature = "decoders"), allow(dead_code))]
    by_hash: HashMap<[u8; 32], u64>,
    finished: bool,
}

impl<W: Write> ArchiveWriter<W> {
    pub fn new(out: W) -> ArchiveWriter<W> {
        ArchiveWriter {
            out,
            offset: 0,
            central: Vec::new(),
            entry_count: 0,
            names: HashSet::new(),
            pseudo_offsets: HashSet::new(),
            decoder_refs: Vec::new(),
            by_hash: HashMap::new(),
            finished: false,
        }
    }

    /// Bytes written so far.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    fn emit(&mut self, bytes: &[u8]) -> Result<(), ContainerError> {
        self.out.write_all(bytes)?;
        self.offset += bytes.len() as u64;
        Ok(())
    }

    /// Writes one archived file and returns the offset of its local header.
    /// The CRC covers `uncompressed`; `compressed` is the payload. For method
    /// 0 both must be the same bytes.
    pub fn write_entry(
        &mut self,
        name: &str,
        method: u16,
        uncompressed: &[u8],
        compressed: &[u8],
        options: EntryOptions,
    ) -> Result<u64, ContainerError> {
        if self.finished {
            return Err(ContainerError::Finished);
        }
        if name.is_empty() {
            return Err(ContainerError::EmptyName);
        }
        if self.names.contains(name.as_bytes()) {
            return Err(ContainerError::DuplicateName(name.to_string()));
        }
        if !is_known_method(method) {
            return Err(ContainerError::UnsupportedMethod(method));
        }
        if method == METHOD_STORE && uncompressed != compressed {
            return Err(ContainerError::StoredSizeMismatch);
        }
        let mut extensions = Vec::new();
        extensions.extend(options.decoder.map(VxaExtension::to_extension));
        extensions.extend(options.decoded.map(DecodedInfo::to_extension));
        let header = EntryHeader {
            version: VERSION,
            flags: 0,
            method,
            crc32: crc32(uncompressed),
            compressed_size: compressed.len() as u64,
            uncompressed_size: uncompressed.len() as u64,
            name: name.as_bytes().to_vec(),
            extensions,
        };
        header.check_encodable()?;
        let at = self.offset;
        self.emit(&header.local_bytes())?;
        self.emit(compressed)?;
        self.central.extend_from_slice(&header.central_bytes(at));
        self.entry_count += 1;
        self.names.insert(header.name);
        self.decoder_refs.extend(options.decoder.map(|d| d.decoder_offset));
        Ok(at)
    }

    /// Writes a decoder image as a pseudo-file, compressed with vxflate, and
    /// returns its offset. An image already written by this writer is not
    /// written again; the earlier offset is returned.
    #[cfg(feature = "decoders")]
    pub fn write_decoder_pseudofile(&mut self, image: &[u8]) -> Result<u64, ContainerError> {
        use sha2::{Digest, Sha256};

        if self.finished {
            return Err(ContainerError::Finished);
        }
        vxa_isa::validate_image(image).map_err(|e| ContainerError::InvalidImage(e.to_string()))?;
        let key: [u8; 32] = Sha256::digest(image).into();
        if let Some(&at) = self.by_hash.get(&key) {
            return Ok(at);
        }
        let compressed = vxa_codecs::vxflate::encode(image);
        let header = EntryHeader {
            version: VERSION,
            flags: crate::format::FLAG_PSEUDO,
            method: crate::METHOD_VXFLATE,
            crc32: crc32(image),
            compressed_size: compressed.len() as u64,
            uncompressed_size: image.len() as u64,
            name: Vec::new(),
            extensions: Vec::new(),
        };
        let at = self.offset;
        self.emit(&header.local_bytes())?;
        self.emit(&compressed)?;
        self.by_hash.insert(key, at);
        self.pseudo_offsets.insert(at);
        Ok(at)
    }

    /// Appends the central directory and end record; returns the archive
    /// length. Fails on a second call.
    pub fn finish(&mut self) -> Result<u64, ContainerError> {
        if self.finished {
            return Err(ContainerError::Finished);
        }
        if let Some(&offset) = self.decoder_refs.iter().find(|o| !self.pseudo_offsets.contains(o)) {
            return Err(ContainerError::DanglingDecoder { offset });
        }
        self.finished = true;
        let cd_offset = self.offset;
        let central = std::mem::take(&mut self.central);
        self.emit(&central)?;
        let end = EndRecord { entry_count: self.entry_count, cd_offset, cd_size: central.len() as u64 };
        self.emit(&end.to_bytes())?;
        self.out.flush()?;
        Ok(self.offset)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
