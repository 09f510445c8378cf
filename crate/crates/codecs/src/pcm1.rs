//! pcm1: lossless coding of canonical 16-bit PCM WAV files with fixed linear
//! predictors and Rice-coded residuals.
//!
//! Layout: `"VXP1"`, the 44-byte WAV header verbatim, then for every block of
//! up to 4096 frames and, within it, every channel:
//!
//! ```text
//! order u8 (0..=2) | k u8 (0..=15) | count u32 LE
//! order warm-up samples, i16 LE
//! count - order Rice-coded zigzag residuals, MSB first, zero-padded to a byte
//! ```
//!
//! Prediction restarts at each channel block; it never looks across blocks.

use crate::rice::{self, BitReader, BitWriter, MAX_K, MAX_QUOTIENT};
use crate::CodecError;

pub const MAGIC: &[u8; 4] = b"VXP1";
pub const WAV_HEADER_LEN: usize = 44;
pub const BLOCK_FRAMES: usize = 4096;
pub const MAX_ORDER: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WavInfo {
    pub channels: usize,
    pub sample_rate: u32,
    pub frames: usize,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

/// Accepts only the canonical 44-byte layout: a RIFF chunk holding exactly a
/// 16-byte `fmt ` chunk and a `data` chunk that runs to the end of the file.
pub fn parse_wav(wav: &[u8]) -> Option<WavInfo> {
    if wav.len() < WAV_HEADER_LEN
        || &wav[0..4] != b"RIFF"
        || &wav[8..16] != b"WAVEfmt "
        || &wav[36..40] != b"data"
    {
        return None;
    }
    let channels = u16_at(wav, 22) as u32;
    let sample_rate = u32_at(wav, 24);
    let data_len = u32_at(wav, 40) as usize;
    let canonical = u32_at(wav, 4) as usize == wav.len() - 8
        && u32_at(wav, 16) == 16
        && u16_at(wav, 20) == 1
        && (channels == 1 || channels == 2)
        && u32_at(wav, 28) == sample_rate.wrapping_mul(channels * 2)
        && u16_at(wav, 32) as u32 == channels * 2
        && u16_at(wav, 34) == 16
        && data_len == wav.len() - WAV_HEADER_LEN
        && data_len % (channels as usize * 2) == 0;
    canonical.then(|| WavInfo {
        channels: channels as usize,
        sample_rate,
        frames: data_len / (channels as usize * 2),
    })
}

/// Builds a canonical WAV file around interleaved samples.
pub fn make_wav(channels: u16, sample_rate: u32, samples: &[i16]) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut w = Vec::with_capacity(WAV_HEADER_LEN + data_len);
    w.extend_from_slice(b"RIFF");
    w.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    w.extend_from_slice(b"WAVEfmt ");
    w.extend_from_slice(&16u32.to_le_bytes());
    w.extend_from_slice(&1u16.to_le_bytes());
    w.extend_from_slice(&channels.to_le_bytes());
    w.extend_from_slice(&sample_rate.to_le_bytes());
    w.extend_from_slice(&(sample_rate * channels as u32 * 2).to_le_bytes());
    w.extend_from_slice(&(channels * 2).to_le_bytes());
    w.extend_from_slice(&16u16.to_le_bytes());
    w.extend_from_slice(b"data");
    w.extend_from_slice(&(data_len as u32).to_le_bytes());
    for s in samples {
        w.extend_from_slice(&s.to_le_bytes());
    }
    w
}

#[inline]
fn predict(order: usize, s: &[i32], n: usize) -> i32 {
    match order {
        0 => 0,
        1 => s[n - 1],
        _ => 2 * s[n - 1] - s[n - 2],
    }
}

fn residuals(samples: &[i32], order: usize) -> Vec<u32> {
    (order..samples.len()).map(|n| rice::zigzag(samples[n] - predict(order, samples, n))).collect()
}

/// The (order, k) pair with the fewest coded bits, counted as 16 per warm-up
/// sample plus `q + 1 + k` per residual. Pairs that would need a unary run
/// longer than decoders accept are skipped. Ties go to the lower order, then
/// the lower k.
pub fn choose_parameters(samples: &[i32]) -> (usize, u32, u64) {
    let mut best: Option<(usize, u32, u64)> = None;
    for order in 0..=MAX_ORDER.min(samples.len()) {
        let z = residuals(samples, order);
        for k in 0..=MAX_K {
            if z.iter().any(|&z| z >> k > MAX_QUOTIENT) {
                continue;
            }
            let bits = 16 * order as u64 + z.iter().map(|&z| rice::cost(z, k)).sum::<u64>();
            if best.map_or(true, |(_, _, b)| bits < b) {
                best = Some((order, k, bits));
            }
        }
    }
    best.expect("k = 15 always fits 16-bit residuals")
}

pub fn encode(wav: &[u8]) -> Result<Vec<u8>, CodecError> {
    let info = parse_wav(wav).ok_or(CodecError::NotRecognized)?;
    let data = &wav[WAV_HEADER_LEN..];
    let mut out = Vec::with_capacity(wav.len() / 2);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&wav[..WAV_HEADER_LEN]);
    let frame_bytes = info.channels * 2;
    for block in data.chunks(BLOCK_FRAMES * frame_bytes) {
        let count = block.len() / frame_bytes;
        for ch in 0..info.channels {
            let samples: Vec<i32> = (0..count)
                .map(|n| i16::from_le_bytes([block[n * frame_bytes + ch * 2], block[n * frame_bytes + ch * 2 + 1]]) as i32)
                .collect();
            let (order, k, _) = choose_parameters(&samples);
            out.push(order as u8);
            out.push(k as u8);
            out.extend_from_slice(&(count as u32).to_le_bytes());
            for &s in &samples[..order] {
                out.extend_from_slice(&(s as i16).to_le_bytes());
            }
            let mut w = BitWriter::new();
            for z in residuals(&samples, order) {
                rice::encode_value(&mut w, z, k);
            }
            out.extend_from_slice(&w.finish());
        }
    }
    Ok(out)
}

/// Reference decoder; `expected_size` is the length of the original WAV.
pub fn decode(stream: &[u8], expected_size: u64) -> Result<Vec<u8>, CodecError> {
    let body = stream.strip_prefix(MAGIC).ok_or_else(|| CodecError::corrupt("missing VXP1 magic"))?;
    if body.len() < WAV_HEADER_LEN {
        return Err(CodecError::corrupt("truncated WAV header"));
    }
    let header = &body[..WAV_HEADER_LEN];
    let channels = u16_at(header, 22) as usize;
    if channels != 1 && channels != 2 {
        return Err(CodecError::corrupt("unsupported channel count"));
    }
    let data_len = u32_at(header, 40) as usize;
    if (WAV_HEADER_LEN + data_len) as u64 != expected_size || data_len % (channels * 2) != 0 {
        return Err(CodecError::corrupt("WAV header disagrees with expected size"));
    }
    let mut frames = data_len / (channels * 2);
    let mut out = Vec::with_capacity(expected_size.min(stream.len() as u64 * 16) as usize);
    out.extend_from_slice(header);
    let mut at = WAV_HEADER_LEN;
    let mut block = vec![0i16; BLOCK_FRAMES * channels];
    let mut samples = Vec::with_capacity(BLOCK_FRAMES);
    while frames > 0 {
        let count = frames.min(BLOCK_FRAMES);
        for ch in 0..channels {
            let head = body.get(at..at + 6).ok_or_else(|| CodecError::corrupt("truncated block header"))?;
            let (order, k) = (head[0] as usize, head[1] as u32);
            if order > MAX_ORDER || k > MAX_K || u32_at(head, 2) as usize != count || order > count {
                return Err(CodecError::corrupt("bad block header"));
            }
            at += 6;
            samples.clear();
            for _ in 0..order {
                let b = body.get(at..at + 2).ok_or_else(|| CodecError::corrupt("truncated warm-up"))?;
                samples.push(i16::from_le_bytes([b[0], b[1]]) as i32);
                at += 2;
            }
            let mut r = BitReader::new(&body[at..]);
            for n in order..count {
                let z = rice::decode_value(&mut r, k)?;
                let s = predict(order, &samples, n).wrapping_add(rice::unzigzag(z)) as i16;
                samples.push(s as i32);
            }
            if !r.padding_is_zero() {
                return Err(CodecError::corrupt("nonzero padding after residuals"));
            }
            at += r.bytes_consumed();
            for (n, &s) in samples.iter().enumerate() {
                block[n * channels + ch] = s as i16;
            }
        }
        for s in &block[..count * channels] {
            out.extend_from_slice(&s.to_le_bytes());
        }
        frames -= count;
    }
    if at != body.len() {
        return Err(CodecError::corrupt("trailing bytes after final block"));
    }
    Ok(out)
}
