use std::collections::HashSet;
use std::path::Path;

use crate::format::{self, Cursor, EndRecord, EntryHeader, DecodedInfo, VxaExtension, END_RECORD_LEN, FLAG_PSEUDO, VERSION};
use crate::{is_known_method, ContainerError, METHOD_STORE};

/// An actual archived file, as listed by the central directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub name: String,
    pub header: EntryHeader,
    pub local_header_offset: u64,
    pub data_offset: u64,
}

impl Entry {
    pub fn method(&self) -> u16 {
        self.header.method
    }

    pub fn crc32(&self) -> u32 {
        self.header.crc32
    }

    pub fn compressed_size(&self) -> u64 {
        self.header.compressed_size
    }

    pub fn uncompressed_size(&self) -> u64 {
        self.header.uncompressed_size
    }

    pub fn vxa(&self) -> Option<VxaExtension> {
        self.header.vxa()
    }

    pub fn decoded(&self) -> Option<DecodedInfo> {
        self.header.decoded()
    }
}

/// Any local header found by walking the archive front to back, pseudo-files
/// included.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalRecord {
    pub offset: u64,
    pub header: EntryHeader,
    pub data_offset: u64,
}

/// A fully parsed archive held in memory. Entries may be read from several
/// threads at once; the decoder image cache is internally synchronized.
#[derive(Debug)]
pub struct Archive {
    data: Vec<u8>,
    end: EndRecord,
    entries: Vec<Entry>,
    #[cfg(feature = "decoders")]
    decoders: std::sync::Mutex<std::collections::HashMap<u64, std::sync::Arc<Vec<u8>>>>,
}

impl Archive {
    pub fn open(path: impl AsRef<Path>) -> Result<Archive, ContainerError> {
        Archive::from_bytes(std::fs::read(path)?)
    }

    /// Parses the end record and central directory, and checks every central
    /// entry against its local header.
    pub fn from_bytes(data: Vec<u8>) -> Result<Archive, ContainerError> {
        let end = format::parse_end(&data)?;
        let end_at = (data.len() - END_RECORD_LEN) as u64;
        let cd_end = end.cd_offset.checked_add(end.cd_size);
        if cd_end != Some(end_at) {
            return Err(ContainerError::CentralDirectoryOutOfBounds { offset: end.cd_offset, size: end.cd_size });
        }
        let mut c = Cursor::at(&data[..end_at as usize], end.cd_offset as usize);
        let mut entries = Vec::new();
        let mut names = HashSet::new();
        while (c.pos as u64) < end_at {
            let cd_at = c.pos as u64;
            let (header, local_offset) = format::parse_central(&mut c)?;
            let invalid = |reason| ContainerError::InvalidEntry { offset: cd_at, reason };
            if header.is_pseudo() {
                return Err(invalid("pseudo-file listed in central directory"));
            }
            if header.version != VERSION {
                return Err(invalid("unsupported version"));
            }
            if header.flags != 0 {
                return Err(invalid("unknown flags"));
            }
            if !is_known_method(header.method) {
                return Err(invalid("unknown method"));
            }
            if header.method == METHOD_STORE && header.compressed_size != header.uncompressed_size {
                return Err(invalid("stored entry with differing sizes"));
            }
            let name = match std::str::from_utf8(&header.name) {
                Ok("") => return Err(invalid("empty name")),
                Ok(n) => n.to_string(),
                Err(_) => return Err(invalid("name is not UTF-8")),
            };
            if !names.insert(name.clone()) {
                return Err(invalid("duplicate name"));
            }
            if local_offset >= end.cd_offset {
                return Err(invalid("local header offset points past the entries"));
            }
            let (local, data_offset) = format::parse_local(&data, local_offset)?;
            compare(&header, &local, local_offset)?;
            if data_offset.checked_add(header.compressed_size).map_or(true, |e| e > end.cd_offset) {
                return Err(ContainerError::InvalidEntry { offset: local_offset, reason: "payload overruns the central directory" });
            }
            entries.push(Entry { name, header, local_header_offset: local_offset, data_offset });
        }
        if entries.len() as u64 != end.entry_count {
            return Err(ContainerError::EntryCountMismatch { expected: end.entry_count, found: entries.len() as u64 });
        }
        Ok(Archive {
            data,
            end,
            entries,
            #[cfg(feature = "decoders")]
            decoders: Default::default(),
        })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn end_record(&self) -> EndRecord {
        self.end
    }

    pub fn len(&self) -> u64 {
        self.data.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    /// The stored payload: exactly `compressed_size` bytes after the header.
    pub fn read_entry_stream(&self, entry: &Entry) -> Result<&[u8], ContainerError> {
        let start = entry.data_offset as usize;
        self.data
            .get(start..start + entry.compressed_size() as usize)
            .ok_or(ContainerError::Truncated { offset: entry.data_offset })
    }

    /// Walks every local header from the start of the archive to the central
    /// directory.
    pub fn local_records(&self) -> Result<Vec<LocalRecord>, ContainerError> {
        let mut out = Vec::new();
        let mut at = 0;
        while at < self.end.cd_offset {
            let (header, data_offset) = format::parse_local(&self.data, at)?;
            let next = data_offset
                .checked_add(header.compressed_size)
                .filter(|&n| n <= self.end.cd_offset)
                .ok_or(ContainerError::InvalidEntry { offset: at, reason: "payload overruns the central directory" })?;
            out.push(LocalRecord { offset: at, header, data_offset });
            at = next;
        }
        Ok(out)
    }

    pub fn pseudo_files(&self) -> Result<Vec<LocalRecord>, ContainerError> {
        Ok(self.local_records()?.into_iter().filter(|r| r.header.is_pseudo()).collect())
    }

    /// The pseudo-file whose local header starts at `offset`.
    pub fn decoder_record(&self, offset: u64) -> Result<LocalRecord, ContainerError> {
        if offset >= self.end.cd_offset {
            return Err(ContainerError::NotAPseudoFile { offset });
        }
        let (header, data_offset) = format::parse_local(&self.data, offset).map_err(|e| match e {
            ContainerError::BadMagic { .. } => ContainerError::NotAPseudoFile { offset },
            other => other,
        })?;
        if header.flags != FLAG_PSEUDO || !header.name.is_empty() {
            return Err(ContainerError::NotAPseudoFile { offset });
        }
        let damaged = |reason: &str| ContainerError::DecoderDamaged { offset, reason: reason.into() };
        if header.version != VERSION {
            return Err(damaged("unsupported version"));
        }
        if !header.extensions.is_empty() {
            return Err(damaged("pseudo-file carries extensions"));
        }
        if data_offset.checked_add(header.compressed_size).map_or(true, |e| e > self.end.cd_offset) {
            return Err(damaged("payload overruns the central directory"));
        }
        Ok(LocalRecord { offset, header, data_offset })
    }

    /// The decoder image for `entry`, unpacked and validated. Images are
    /// cached per pseudo-file offset.
    #[cfg(feature = "decoders")]
    pub fn locate_decoder(&self, entry: &Entry) -> Result<std::sync::Arc<Vec<u8>>, ContainerError> {
        let vxa = entry.vxa().ok_or_else(|| ContainerError::NoDecoder(entry.name.clone()))?;
        self.decoder_image_at(vxa.decoder_offset)
    }

    #[cfg(feature = "decoders")]
    pub fn decoder_image_at(&self, offset: u64) -> Result<std::sync::Arc<Vec<u8>>, ContainerError> {
        if let Some(img) = self.lock_cache().get(&offset) {
            return Ok(img.clone());
        }
        let image = std::sync::Arc::new(self.unpack_decoder(offset)?);
        Ok(self.lock_cache().entry(offset).or_insert(image).clone())
    }

    #[cfg(feature = "decoders")]
    pub fn cached_decoders(&self) -> usize {
        self.lock_cache().len()
    }

    #[cfg(feature = "decoders")]
    fn lock_cache(&self) -> std::sync::MutexGuard<'_, std::collections::HashMap<u64, std::sync::Arc<Vec<u8>>>> {
        self.decoders.lock().unwrap_or_else(|e| e.into_inner())
    }

    #[cfg(feature = "decoders")]
    fn unpack_decoder(&self, offset: u64) -> Result<Vec<u8>, ContainerError> {
        let rec = self.decoder_record(offset)?;
        let damaged = |reason: String| ContainerError::DecoderDamaged { offset, reason };
        let payload = &self.data[rec.data_offset as usize..(rec.data_offset + rec.header.compressed_size) as usize];
        let size = rec.header.uncompressed_size;
        if size > crate::MAX_DECODER_IMAGE {
            return Err(damaged(format!("claimed image size {size} is implausible")));
        }
        let image = match rec.header.method {
            crate::METHOD_VXFLATE => vxa_codecs::vxflate::decode(payload, size).map_err(|e| damaged(e.to_string()))?,
            METHOD_STORE if payload.len() as u64 == size => payload.to_vec(),
            m => return Err(damaged(format!("unexpected method {m:#06x}"))),
        };
        if crate::crc32(&image) != rec.header.crc32 {
            return Err(damaged("image checksum mismatch".into()));
        }
        // The vxflate encoder is deterministic, so a pseudo-file written by
        // it has exactly one valid payload. Any other payload that decodes
        // to the same image was altered after writing.
        if rec.header.method == crate::METHOD_VXFLATE && vxa_codecs::vxflate::encode(&image) != payload {
            return Err(damaged("payload is not the canonical encoding of its image".into()));
        }
        vxa_isa::validate_image(&image).map_err(|e| damaged(format!("invalid image: {e}")))?;
        Ok(image)
    }
}

fn compare(central: &EntryHeader, local: &EntryHeader, offset: u64) -> Result<(), ContainerError> {
    let field = if central.version != local.version {
        "version"
    } else if central.flags != local.flags {
        "flags"
    } else if central.method != local.method {
        "method"
    } else if central.crc32 != local.crc32 {
        "crc32"
    } else if central.compressed_size != local.compressed_size {
        "compressed size"
    } else if central.uncompressed_size != local.uncompressed_size {
        "uncompressed size"
    } else if central.name != local.name {
        "name"
    } else if central.extensions != local.extensions {
        "extensions"
    } else {
        return Ok(());
    };
    Err(ContainerError::HeaderMismatch { offset, field })
}
