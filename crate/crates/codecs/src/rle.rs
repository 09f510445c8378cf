//! Run-length coding as `(count, value)` byte pairs, `count` in 1..=255.

use crate::CodecError;

pub fn encode(input: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut rest = input;
    while let Some(&value) = rest.first() {
        let run = rest.iter().take(255).take_while(|&&b| b == value).count();
        out.push(run as u8);
        out.push(value);
        rest = &rest[run..];
    }
    out
}

pub fn decode(stream: &[u8], expected_size: u64) -> Result<Vec<u8>, CodecError> {
    if stream.len() % 2 != 0 {
        return Err(CodecError::corrupt("odd-length run stream"));
    }
    let mut out = Vec::with_capacity((expected_size as usize).min(stream.len() * 128));
    for pair in stream.chunks_exact(2) {
        if pair[0] == 0 {
            return Err(CodecError::corrupt("zero-length run"));
        }
        out.extend(std::iter::repeat(pair[1]).take(pair[0] as usize));
        if out.len() as u64 > expected_size {
            return Err(CodecError::corrupt("runs exceed expected size"));
        }
    }
    if out.len() as u64 != expected_size {
        return Err(CodecError::corrupt("stream ends before expected size"));
    }
    Ok(out)
}
