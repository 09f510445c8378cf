//! VXSF: a standalone pre-compressed stream, `"VXSF"`, the decoded size as a
//! little-endian u64, then vxflate tokens. Archives store it verbatim.

use crate::{vxflate, CodecError};

pub const MAGIC: &[u8; 4] = b"VXSF";
pub const HEADER_LEN: usize = 12;

pub fn is_vxsf(data: &[u8]) -> bool {
    data.len() >= HEADER_LEN && data.starts_with(MAGIC)
}

/// Produces a VXSF file. Archiving never calls this; it exists to make test
/// inputs and for users who want pre-compressed files.
pub fn compress(input: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + input.len() / 2);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(input.len() as u64).to_le_bytes());
    out.extend_from_slice(&vxflate::encode(input));
    out
}

/// Reference decoder. `_stored_size` is the container size of the VXSF file
/// itself; the decoded size comes from the stream header.
pub fn decode(stream: &[u8], _stored_size: u64) -> Result<Vec<u8>, CodecError> {
    if !is_vxsf(stream) {
        return Err(CodecError::corrupt("missing VXSF header"));
    }
    let size = u64::from_le_bytes(stream[4..12].try_into().unwrap());
    vxflate::decode(&stream[HEADER_LEN..], size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_header() {
        let f = compress(b"abcabcabcabc");
        assert_eq!(&f[..4], b"VXSF");
        assert_eq!(u64::from_le_bytes(f[4..12].try_into().unwrap()), 12);
        assert_eq!(decode(&f, f.len() as u64).unwrap(), b"abcabcabcabc");
        assert!(decode(b"VXSF", 4).is_err());
        assert!(decode(&f[..f.len() - 1], 0).is_err());
    }
}
