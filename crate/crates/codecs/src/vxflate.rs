//! vxflate: byte-oriented LZSS with a 4096-byte window.
//!
//! A stream is a sequence of groups. Each group starts with a flag byte whose
//! bits, least significant first, describe up to eight items: a clear bit is a
//! literal byte, a set bit a two-byte match. A match stores `offset - 1` in 12
//! bits and `length - 3` in 4 bits:
//!
//! ```text
//! byte 0: (offset - 1) & 0xFF
//! byte 1: (offset - 1) >> 8 | (length - 3) << 4
//! ```
//!
//! Streams carry no length; the container's uncompressed size delimits them.

use crate::CodecError;

pub const WINDOW: usize = 4096;
pub const MIN_MATCH: usize = 3;
pub const MAX_MATCH: usize = 18;

const HASH_BITS: u32 = 15;
const NIL: u32 = u32::MAX;

#[inline]
fn hash3(b: &[u8]) -> usize {
    let v = (b[0] as u32) << 16 | (b[1] as u32) << 8 | b[2] as u32;
    (v.wrapping_mul(0x9E37_79B1) >> (32 - HASH_BITS)) as usize
}

/// Greedy longest-match encoder. Among equally long matches the nearest wins.
pub fn encode(input: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(input.len() / 2 + 16);
    let mut head = vec![NIL; 1 << HASH_BITS];
    let mut prev = vec![NIL; input.len()];
    let mut flag_at = 0;
    let mut items = 8;
    let mut pos = 0;
    let mut inserted = 0;

    while pos < input.len() {
        if items == 8 {
            flag_at = out.len();
            out.push(0);
            items = 0;
        }
        // Chains hold every earlier position whose 3-byte prefix hashes alike,
        // newest first, so candidates arrive in increasing offset order.
        while inserted < pos && inserted + MIN_MATCH <= input.len() {
            let h = hash3(&input[inserted..]);
            prev[inserted] = head[h];
            head[h] = inserted as u32;
            inserted += 1;
        }
        let (len, offset) = longest_match(input, pos, &head, &prev);
        if len >= MIN_MATCH {
            let d = offset - 1;
            out.push(d as u8);
            out.push((d >> 8) as u8 | ((len - MIN_MATCH) as u8) << 4);
            out[flag_at] |= 1 << items;
            pos += len;
        } else {
            out.push(input[pos]);
            pos += 1;
        }
        items += 1;
    }
    out
}

fn longest_match(input: &[u8], pos: usize, head: &[u32], prev: &[u32]) -> (usize, usize) {
    let max = MAX_MATCH.min(input.len() - pos);
    if max < MIN_MATCH {
        return (0, 0);
    }
    let mut best = (0, 0);
    let mut cand = head[hash3(&input[pos..])];
    while cand != NIL {
        let c = cand as usize;
        let offset = pos - c;
        if offset > WINDOW {
            break;
        }
        let len = (0..max).take_while(|&i| input[c + i] == input[pos + i]).count();
        if len > best.0 {
            best = (len, offset);
            if len == max {
                break;
            }
        }
        cand = prev[c];
    }
    best
}

/// Reference decoder. Fails unless the stream yields exactly `expected_size`
/// bytes, nothing follows the last item, and the unused bits of the final
/// flag byte are zero.
pub fn decode(stream: &[u8], expected_size: u64) -> Result<Vec<u8>, CodecError> {
    let expected = usize::try_from(expected_size).map_err(|_| CodecError::corrupt("size overflows host"))?;
    // A corrupt header must not make us reserve gigabytes up front; every
    // stream byte can produce at most 18 output bytes.
    let mut out = Vec::with_capacity(expected.min(stream.len().saturating_mul(MAX_MATCH)));
    let mut at = 0;
    while out.len() < expected {
        let flags = *stream.get(at).ok_or_else(|| CodecError::corrupt("stream ends before expected size"))?;
        at += 1;
        for bit in 0..8 {
            if out.len() >= expected {
                if flags >> bit != 0 {
                    return Err(CodecError::corrupt("flag bits set past the final item"));
                }
                break;
            }
            if flags >> bit & 1 == 0 {
                let b = *stream.get(at).ok_or_else(|| CodecError::corrupt("stream ends before expected size"))?;
                out.push(b);
                at += 1;
                continue;
            }
            let [b0, b1] = match stream.get(at..at + 2) {
                Some(&[b0, b1]) => [b0, b1],
                _ => return Err(CodecError::corrupt("truncated match")),
            };
            at += 2;
            let offset = ((b1 as usize & 0x0F) << 8 | b0 as usize) + 1;
            let len = (b1 >> 4) as usize + MIN_MATCH;
            if offset > out.len() {
                return Err(CodecError::corrupt("match reaches before start of output"));
            }
            if out.len() + len > expected {
                return Err(CodecError::corrupt("match runs past expected size"));
            }
            let from = out.len() - offset;
            for i in 0..len {
                out.push(out[from + i]);
            }
        }
    }
    if at != stream.len() {
        return Err(CodecError::corrupt("trailing bytes after final item"));
    }
    Ok(out)
}
