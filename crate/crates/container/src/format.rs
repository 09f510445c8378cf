//! Byte layout of headers and records. All integers are little-endian.

use crate::ContainerError;

pub const LOCAL_MAGIC: u32 = 0x0403_5856;
pub const CENTRAL_MAGIC: u32 = 0x0201_5856;
pub const END_MAGIC: u32 = 0x0605_5856;
pub const VERSION: u16 = 1;

pub const FLAG_PSEUDO: u16 = 1;

pub const LOCAL_FIXED_LEN: usize = 34;
pub const CENTRAL_FIXED_LEN: usize = 42;
pub const END_RECORD_LEN: usize = 28;

pub const EXT_VXA: u16 = 0x5658;
pub const EXT_DECODED: u16 = 0x4456;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extension {
    pub id: u16,
    pub payload: Vec<u8>,
}

/// Points an entry at the pseudo-file holding its decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VxaExtension {
    pub decoder_offset: u64,
    pub codec_name: [u8; 8],
}

impl VxaExtension {
    pub fn to_extension(self) -> Extension {
        let mut payload = self.decoder_offset.to_le_bytes().to_vec();
        payload.extend_from_slice(&self.codec_name);
        Extension { id: EXT_VXA, payload }
    }

    pub fn codec(&self) -> String {
        String::from_utf8_lossy(&self.codec_name).trim_end_matches(' ').to_string()
    }
}

/// Size and CRC-32 of what an entry's decoder produces, for entries whose
/// stored bytes are not their decoded form (pre-compressed files).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodedInfo {
    pub size: u64,
    pub crc32: u32,
}

impl DecodedInfo {
    pub fn to_extension(self) -> Extension {
        let mut payload = self.size.to_le_bytes().to_vec();
        payload.extend_from_slice(&self.crc32.to_le_bytes());
        Extension { id: EXT_DECODED, payload }
    }
}

/// Header fields shared by local headers and central directory entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntryHeader {
    pub version: u16,
    pub flags: u16,
    pub method: u16,
    pub crc32: u32,
    pub compressed_size: u64,
    pub uncompressed_size: u64,
    pub name: Vec<u8>,
    pub extensions: Vec<Extension>,
}

impl EntryHeader {
    pub fn is_pseudo(&self) -> bool {
        self.flags & FLAG_PSEUDO != 0
    }

    pub fn vxa(&self) -> Option<VxaExtension> {
        let ext = self.extensions.iter().find(|e| e.id == EXT_VXA)?;
        let p: &[u8; 16] = ext.payload.as_slice().try_into().ok()?;
        Some(VxaExtension {
            decoder_offset: u64::from_le_bytes(p[..8].try_into().unwrap()),
            codec_name: p[8..].try_into().unwrap(),
        })
    }

    pub fn decoded(&self) -> Option<DecodedInfo> {
        let ext = self.extensions.iter().find(|e| e.id == EXT_DECODED)?;
        let p: &[u8; 12] = ext.payload.as_slice().try_into().ok()?;
        Some(DecodedInfo {
            size: u64::from_le_bytes(p[..8].try_into().unwrap()),
            crc32: u32::from_le_bytes(p[8..].try_into().unwrap()),
        })
    }

    fn extension_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.extensions {
            out.extend_from_slice(&e.id.to_le_bytes());
            out.extend_from_slice(&(e.payload.len() as u16).to_le_bytes());
            out.extend_from_slice(&e.payload);
        }
        out
    }

    /// Checks the length limits the fixed fields impose.
    pub(crate) fn check_encodable(&self) -> Result<(), ContainerError> {
        if self.name.len() > u16::MAX as usize {
            return Err(ContainerError::NameTooLong(self.name.len()));
        }
        let ext_len: usize = self.extensions.iter().map(|e| 4 + e.payload.len()).sum();
        if ext_len > u16::MAX as usize || self.extensions.iter().any(|e| e.payload.len() > u16::MAX as usize) {
            return Err(ContainerError::ExtensionsTooLarge(ext_len));
        }
        Ok(())
    }

    fn push_fixed(&self, out: &mut Vec<u8>, ext_len: usize) {
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.flags.to_le_bytes());
        out.extend_from_slice(&self.method.to_le_bytes());
        out.extend_from_slice(&self.crc32.to_le_bytes());
        out.extend_from_slice(&self.compressed_size.to_le_bytes());
        out.extend_from_slice(&self.uncompressed_size.to_le_bytes());
        out.extend_from_slice(&(self.name.len() as u16).to_le_bytes());
        out.extend_from_slice(&(ext_len as u16).to_le_bytes());
    }

    /// Serializes a local header (without payload).
    pub fn local_bytes(&self) -> Vec<u8> {
        let ext = self.extension_bytes();
        let mut out = Vec::with_capacity(LOCAL_FIXED_LEN + self.name.len() + ext.len());
        out.extend_from_slice(&LOCAL_MAGIC.to_le_bytes());
        self.push_fixed(&mut out, ext.len());
        out.extend_from_slice(&self.name);
        out.extend_from_slice(&ext);
        out
    }

    pub fn central_bytes(&self, local_header_offset: u64) -> Vec<u8> {
        let ext = self.extension_bytes();
        let mut out = Vec::with_capacity(CENTRAL_FIXED_LEN + self.name.len() + ext.len());
        out.extend_from_slice(&CENTRAL_MAGIC.to_le_bytes());
        self.push_fixed(&mut out, ext.len());
        out.extend_from_slice(&local_header_offset.to_le_bytes());
        out.extend_from_slice(&self.name);
        out.extend_from_slice(&ext);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EndRecord {
    pub entry_count: u64,
    pub cd_offset: u64,
    pub cd_size: u64,
}

impl EndRecord {
    pub fn to_bytes(self) -> [u8; END_RECORD_LEN] {
        let mut out = [0; END_RECORD_LEN];
        out[..4].copy_from_slice(&END_MAGIC.to_le_bytes());
        out[4..12].copy_from_slice(&self.entry_count.to_le_bytes());
        out[12..20].copy_from_slice(&self.cd_offset.to_le_bytes());
        out[20..28].copy_from_slice(&self.cd_size.to_le_bytes());
        out
    }
}

/// Bounds-checked little-endian cursor over the archive bytes. Every read
/// reports the absolute offset it failed at.
pub(crate) struct Cursor<'a> {
    data: &'a [u8],
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn at(data: &'a [u8], pos: usize) -> Cursor<'a> {
        Cursor { data, pos }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        match end {
            Some(end) => {
                let s = &self.data[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(ContainerError::Truncated { offset: self.pos as u64 }),
        }
    }

    pub fn u16(&mut self) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn parse_extensions(area: &[u8], base: usize) -> Result<Vec<Extension>, ContainerError> {
    let mut c = Cursor::at(area, 0);
    let mut out = Vec::new();
    while c.pos < area.len() {
        let at = c.pos;
        let bad = |_| ContainerError::BadExtension { offset: (base + at) as u64 };
        let id = c.u16().map_err(bad)?;
        let size = c.u16().map_err(bad)?;
        let payload = c.take(size as usize).map_err(bad)?.to_vec();
        out.push(Extension { id, payload });
    }
    Ok(out)
}

/// Parses the header fields that follow a magic number, then the name and
/// extension area. Central entries carry the local header offset between.
fn parse_entry(c: &mut Cursor<'_>, central: bool) -> Result<(EntryHeader, u64), ContainerError> {
    let version = c.u16()?;
    let flags = c.u16()?;
    let method = c.u16()?;
    let crc32 = c.u32()?;
    let compressed_size = c.u64()?;
    let uncompressed_size = c.u64()?;
    let name_len = c.u16()? as usize;
    let ext_len = c.u16()? as usize;
    let local_offset = if central { c.u64()? } else { 0 };
    let name = c.take(name_len)?.to_vec();
    let ext_at = c.pos;
    let extensions = parse_extensions(c.take(ext_len)?, ext_at)?;
    let header = EntryHeader { version, flags, method, crc32, compressed_size, uncompressed_size, name, extensions };
    Ok((header, local_offset))
}

fn expect_magic(c: &mut Cursor<'_>, want: u32) -> Result<(), ContainerError> {
    let offset = c.pos as u64;
    let found = c.u32()?;
    if found != want {
        return Err(ContainerError::BadMagic { offset, expected: want, found });
    }
    Ok(())
}

/// Parses the local header at `offset`; returns it and the payload offset.
pub fn parse_local(data: &[u8], offset: u64) -> Result<(EntryHeader, u64), ContainerError> {
    let start = usize::try_from(offset).map_err(|_| ContainerError::Truncated { offset })?;
    let mut c = Cursor::at(data, start);
    expect_magic(&mut c, LOCAL_MAGIC)?;
    let (header, _) = parse_entry(&mut c, false)?;
    Ok((header, c.pos as u64))
}

pub(crate) fn parse_central(c: &mut Cursor<'_>) -> Result<(EntryHeader, u64), ContainerError> {
    expect_magic(c, CENTRAL_MAGIC)?;
    parse_entry(c, true)
}

pub(crate) fn parse_end(data: &[u8]) -> Result<EndRecord, ContainerError> {
    if data.is_empty() {
        return Err(ContainerError::NotAnArchive);
    }
    let magic = END_MAGIC.to_le_bytes();
    if data.len() >= END_RECORD_LEN {
        let at = data.len() - END_RECORD_LEN;
        if data[at..at + 4] == magic {
            let mut c = Cursor::at(data, at + 4);
            return Ok(EndRecord { entry_count: c.u64()?, cd_offset: c.u64()?, cd_size: c.u64()? });
        }
    }
    // No record where one belongs. Scan backward: a magic number nearer the
    // end means a damaged or cut-off record rather than a foreign file.
    match data.windows(4).rposition(|w| w == magic) {
        Some(at) => Err(ContainerError::CorruptEndRecord { offset: at as u64 }),
        None => Err(ContainerError::NotAnArchive),
    }
}
