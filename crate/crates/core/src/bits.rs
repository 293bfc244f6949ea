//! Bit strings with exact lengths.
//!
//! Bits are packed MSB-first. The canonical text form is length-prefixed
//! hex, `"<bits>:<hex>"`, with any trailing pad bits in the last nibble
//! set to zero; `"9:d40"` is the 9-bit string `110101000`.

use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    bytes: Vec<u8>,
    len: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, bit: bool) {
        let byte = self.len / 8;
        if byte == self.bytes.len() {
            self.bytes.push(0);
        }
        if bit {
            self.bytes[byte] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    /// Append `width` bits holding `value`, most significant first.
    /// `width` may be 0 (nothing is appended); `value` must fit.
    pub fn push_uint(&mut self, value: u64, width: usize) {
        debug_assert!(width >= 64 || value < (1u64 << width), "value {value} too wide for {width} bits");
        for i in (0..width).rev() {
            self.push((value >> i) & 1 == 1);
        }
    }

    /// Append `width` bits of a big integer, most significant first.
    pub fn push_biguint(&mut self, value: &BigUint, width: usize) {
        debug_assert!(value.bits() as usize <= width);
        for i in (0..width).rev() {
            self.push(value.bit(i as u64));
        }
    }

    pub fn extend(&mut self, other: &BitString) {
        for i in 0..other.len {
            self.push(other.get(i));
        }
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader { bits: self, pos: 0 }
    }

    /// Bitwise XOR of equal-length strings.
    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        if self.len != other.len {
            return Err(Error::LengthMismatch { expected: self.len, got: other.len });
        }
        let bytes = self.bytes.iter().zip(&other.bytes).map(|(a, b)| a ^ b).collect();
        Ok(BitString { bytes, len: self.len })
    }

    pub fn to_hex(&self) -> String {
        let nibbles = self.len.div_ceil(4);
        let mut out = String::with_capacity(nibbles + 8);
        out.push_str(&format!("{}:", self.len));
        for i in 0..nibbles {
            let mut v = 0u8;
            for j in 0..4 {
                let bit = i * 4 + j;
                if bit < self.len && self.get(bit) {
                    v |= 0x8 >> j;
                }
            }
            out.push(char::from_digit(v as u32, 16).unwrap());
        }
        out
    }

    pub fn from_hex(s: &str) -> Result<BitString> {
        let (len_s, hex_s) = s
            .split_once(':')
            .ok_or_else(|| Error::MalformedBitstream("missing ':' length prefix".into()))?;
        let len: usize = len_s
            .parse()
            .map_err(|_| Error::MalformedBitstream(format!("bad length prefix {len_s:?}")))?;
        let nibbles = len.div_ceil(4);
        if hex_s.len() != nibbles {
            return Err(Error::MalformedBitstream(format!(
                "expected {nibbles} hex digits for {len} bits, got {}",
                hex_s.len()
            )));
        }
        let mut out = BitString::new();
        for (i, c) in hex_s.chars().enumerate() {
            let v = c
                .to_digit(16)
                .ok_or_else(|| Error::MalformedBitstream(format!("bad hex digit {c:?}")))?
                as u8;
            for j in 0..4 {
                let bit = i * 4 + j;
                if bit < len {
                    out.push(v & (0x8 >> j) != 0);
                } else if v & (0x8 >> j) != 0 {
                    return Err(Error::MalformedBitstream("nonzero pad bits".into()));
                }
            }
        }
        Ok(out)
    }

    /// Interpret the whole string as a big-endian integer.
    pub fn to_biguint(&self) -> BigUint {
        let mut v = BigUint::zero();
        for i in 0..self.len {
            v <<= 1;
            if self.get(i) {
                v += 1u32;
            }
        }
        v
    }
}

impl Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BitString::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

impl std::fmt::Display for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Sequential reader over a [`BitString`].
pub struct BitReader<'a> {
    bits: &'a BitString,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        if self.pos >= self.bits.len() {
            return Err(Error::MalformedBitstream("unexpected end of stream".into()));
        }
        let b = self.bits.get(self.pos);
        self.pos += 1;
        Ok(b)
    }

    pub fn read_uint(&mut self, width: usize) -> Result<u64> {
        if width > 64 {
            return Err(Error::MalformedBitstream(format!("field width {width} > 64")));
        }
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Ok(v)
    }

    pub fn read_biguint(&mut self, width: usize) -> Result<BigUint> {
        let mut v = BigUint::zero();
        for _ in 0..width {
            v <<= 1;
            if self.read_bit()? {
                v += 1u32;
            }
        }
        Ok(v)
    }
}

/// Number of bits needed to distinguish `choices` alternatives
/// (`ceil(log2 choices)`, and 0 for a single alternative).
pub fn width_for(choices: u64) -> usize {
    debug_assert!(choices >= 1);
    (64 - (choices - 1).leading_zeros()) as usize
}

/// `ceil(log2 m)` for a big integer `m >= 1`: the fixed payload width for
/// an index in `{0..m-1}`.
pub fn width_for_biguint(m: &BigUint) -> usize {
    use num_traits::One;
    if m <= &BigUint::one() {
        return 0;
    }
    let m1 = m - 1u32;
    m1.bits() as usize
}

/// `log2` of a big integer, via the top 53 bits of the mantissa.
/// Returns negative infinity for zero.
pub fn log2_biguint(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits <= 53 {
        return (v.to_u64_digits()[0] as f64).log2();
    }
    let shift = bits - 53;
    let top = (v >> shift).to_u64_digits()[0];
    (top as f64).log2() + shift as f64
}
