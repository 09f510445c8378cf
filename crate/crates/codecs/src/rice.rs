//! MSB-first bit I/O and Rice coding of unsigned residuals.
//!
//! A value `z` with parameter `k` is written as `q = z >> k` one-bits, a zero
//! bit, then the low `k` bits of `z`, most significant first.

use crate::CodecError;

/// Decoders refuse unary runs longer than this.
pub const MAX_QUOTIENT: u32 = 1 << 16;
pub const MAX_K: u32 = 15;

#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    used: u32,
}

impl BitWriter {
    pub fn new() -> BitWriter {
        BitWriter::default()
    }

    pub fn push_bit(&mut self, bit: bool) {
        if self.used % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> (self.used % 8);
        }
        self.used = (self.used + 1) % 8;
    }

    /// Pushes the low `n` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u32, n: u32) {
        for i in (0..n).rev() {
            self.push_bit(value >> i & 1 == 1);
        }
    }

    pub fn bit_len(&self) -> usize {
        match self.used {
            0 => self.bytes.len() * 8,
            u => (self.bytes.len() - 1) * 8 + u as usize,
        }
    }

    /// Returns the bytes, zero-padded to a whole byte.
    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

#[derive(Debug)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> BitReader<'a> {
        BitReader { data, pos: 0 }
    }

    pub fn read_bit(&mut self) -> Result<bool, CodecError> {
        let byte = *self.data.get(self.pos / 8).ok_or_else(|| CodecError::corrupt("bitstream truncated"))?;
        let bit = byte >> (7 - self.pos % 8) & 1 == 1;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u32, CodecError> {
        let mut v = 0;
        for _ in 0..n {
            v = v << 1 | self.read_bit()? as u32;
        }
        Ok(v)
    }

    /// Whether the unread bits of a partly read byte are all zero.
    pub fn padding_is_zero(&self) -> bool {
        let used = self.pos % 8;
        used == 0 || self.data[self.pos / 8] & (0xFF >> used) == 0
    }

    /// Bytes consumed so far, counting a partly read byte as whole.
    pub fn bytes_consumed(&self) -> usize {
        self.pos.div_ceil(8)
    }
}

/// Encoded length in bits of `z` under parameter `k`.
#[inline]
pub fn cost(z: u32, k: u32) -> u64 {
    (z >> k) as u64 + 1 + k as u64
}

pub fn encode_value(w: &mut BitWriter, z: u32, k: u32) {
    for _ in 0..z >> k {
        w.push_bit(true);
    }
    w.push_bit(false);
    w.push_bits(z, k);
}

pub fn decode_value(r: &mut BitReader<'_>, k: u32) -> Result<u32, CodecError> {
    let mut q = 0u32;
    while r.read_bit()? {
        q += 1;
        if q > MAX_QUOTIENT {
            return Err(CodecError::corrupt("unary run too long"));
        }
    }
    let low = r.read_bits(k)?;
    q.checked_shl(k)
        .filter(|v| v >> k == q)
        .map(|v| v | low)
        .ok_or_else(|| CodecError::corrupt("residual overflows 32 bits"))
}

pub fn rice_encode(values: &[u32], k: u32) -> Vec<u8> {
    let mut w = BitWriter::new();
    for &z in values {
        encode_value(&mut w, z, k);
    }
    w.finish()
}

pub fn rice_decode(bits: &[u8], k: u32, n: usize) -> Result<Vec<u32>, CodecError> {
    let mut r = BitReader::new(bits);
    (0..n).map(|_| decode_value(&mut r, k)).collect()
}

#[inline]
pub fn zigzag(r: i32) -> u32 {
    ((r << 1) ^ (r >> 31)) as u32
}

#[inline]
pub fn unzigzag(z: u32) -> i32 {
    (z >> 1) as i32 ^ -((z & 1) as i32)
}
