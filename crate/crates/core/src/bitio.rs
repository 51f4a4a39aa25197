//! Bit-level packing for feedback payloads and compressed codebooks.
//!
//! All multi-bit fields are written most-significant-bit first, so a field of
//! width `w` holding value `v` occupies the next `w` bits with `v`'s high bit
//! first. This makes the layouts byte-order free and easy to eyeball in hex
//! dumps.

use crate::error::{Error, Result};

/// A packed bit string. The final partial byte, if any, is zero padded in its
/// low bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    bytes: Vec<u8>,
    len_bits: usize,
}

impl Bitstream {
    pub fn from_parts(bytes: Vec<u8>, len_bits: usize) -> Result<Self> {
        if bytes.len() != len_bits.div_ceil(8) {
            return Err(Error::config(format!(
                "bitstream byte count {} does not match bit length {}",
                bytes.len(),
                len_bits
            )));
        }
        Ok(Bitstream { bytes, len_bits })
    }

    pub fn len_bits(&self) -> usize {
        self.len_bits
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

/// MSB-first bit writer.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len_bits: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append the low `width` bits of `value`, most significant first.
    /// `width` up to 64; bits of `value` above `width` must be zero.
    pub fn write(&mut self, value: u64, width: u32) {
        assert!(width <= 64, "field width {width} out of range");
        assert!(
            width == 64 || value >> width == 0,
            "value {value} does not fit in {width} bits"
        );
        for i in (0..width).rev() {
            let bit = ((value >> i) & 1) as u8;
            let byte_idx = self.len_bits / 8;
            if byte_idx == self.bytes.len() {
                self.bytes.push(0);
            }
            let shift = 7 - (self.len_bits % 8);
            self.bytes[byte_idx] |= bit << shift;
            self.len_bits += 1;
        }
    }

    pub fn len_bits(&self) -> usize {
        self.len_bits
    }

    pub fn finish(self) -> Bitstream {
        Bitstream {
            bytes: self.bytes,
            len_bits: self.len_bits,
        }
    }
}

/// MSB-first bit reader over a [`Bitstream`].
pub struct BitReader<'a> {
    stream: &'a Bitstream,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(stream: &'a Bitstream) -> Self {
        BitReader { stream, pos: 0 }
    }

    /// Read the next `width` bits as an unsigned value.
    pub fn read(&mut self, width: u32) -> Result<u64> {
        assert!(width <= 64, "field width {width} out of range");
        if self.pos + width as usize > self.stream.len_bits {
            return Err(Error::format(
                (self.pos / 8) as u64,
                format!(
                    "bitstream exhausted: wanted {} bits at bit {}, stream holds {}",
                    width, self.pos, self.stream.len_bits
                ),
            ));
        }
        let mut v = 0u64;
        for _ in 0..width {
            let byte = self.stream.bytes[self.pos / 8];
            let bit = (byte >> (7 - (self.pos % 8))) & 1;
            v = (v << 1) | bit as u64;
            self.pos += 1;
        }
        Ok(v)
    }

    pub fn bits_left(&self) -> usize {
        self.stream.len_bits - self.pos
    }
}
