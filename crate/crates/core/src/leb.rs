//! Byte reader for the WebAssembly binary format.
//!
//! LEB128 decoding is strict: an encoding may use at most `ceil(N / 7)`
//! bytes for an `N`-bit integer, and unused bits of the final byte must be
//! a proper zero or sign extension.

use crate::error::ParseError;

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    /// Offset of `bytes[0]` within the whole binary, for error reporting.
    origin: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self::with_origin(bytes, 0)
    }

    pub(crate) fn with_origin(bytes: &'a [u8], origin: usize) -> Self {
        Reader {
            bytes,
            pos: 0,
            origin,
        }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn offset(&self) -> usize {
        self.origin + self.pos
    }

    pub(crate) fn slice(&self, start: usize, end: usize) -> &'a [u8] {
        &self.bytes[start..end]
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn err(&self, reason: impl Into<String>) -> ParseError {
        ParseError::Malformed {
            offset: self.offset(),
            reason: reason.into(),
        }
    }

    pub(crate) fn byte(&mut self) -> Result<u8, ParseError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| self.err("unexpected end"))?;
        self.pos += 1;
        Ok(b)
    }

    pub(crate) fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    pub(crate) fn bytes(&mut self, n: usize) -> Result<&'a [u8], ParseError> {
        if self.remaining() < n {
            return Err(self.err("unexpected end"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32, ParseError> {
        self.unsigned(32).map(|v| v as u32)
    }

    pub(crate) fn i32(&mut self) -> Result<i32, ParseError> {
        self.signed(32).map(|v| v as i32)
    }

    pub(crate) fn i64(&mut self) -> Result<i64, ParseError> {
        self.signed(64)
    }

    /// Signed 33-bit integer, used for block types with a type index.
    pub(crate) fn s33(&mut self) -> Result<i64, ParseError> {
        self.signed(33)
    }

    pub(crate) fn f32_bits(&mut self) -> Result<u32, ParseError> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f64_bits(&mut self) -> Result<u64, ParseError> {
        let b = self.bytes(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    pub(crate) fn name(&mut self) -> Result<String, ParseError> {
        let len = self.u32()? as usize;
        let start = self.offset();
        let raw = self.bytes(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| ParseError::Malformed {
            offset: start,
            reason: "malformed UTF-8 name".into(),
        })
    }

    fn unsigned(&mut self, bits: u32) -> Result<u64, ParseError> {
        let max_bytes = bits.div_ceil(7);
        let start = self.offset();
        let mut result = 0u64;
        let mut shift = 0u32;
        for i in 0..max_bytes {
            let b = self.byte()?;
            result |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                if i == max_bytes - 1 {
                    let used = bits - shift;
                    if used < 7 && (b >> used) != 0 {
                        return Err(ParseError::Malformed {
                            offset: start,
                            reason: "integer too large".into(),
                        });
                    }
                }
                return Ok(result);
            }
            shift += 7;
        }
        Err(ParseError::Malformed {
            offset: start,
            reason: "integer representation too long".into(),
        })
    }

    fn signed(&mut self, bits: u32) -> Result<i64, ParseError> {
        let max_bytes = bits.div_ceil(7);
        let start = self.offset();
        let mut result = 0i64;
        let mut shift = 0u32;
        for i in 0..max_bytes {
            let b = self.byte()?;
            if shift < 64 {
                result |= i64::from(b & 0x7f) << shift;
            }
            shift += 7;
            if b & 0x80 == 0 {
                if i == max_bytes - 1 {
                    // Bits beyond the value's width must all equal the sign bit.
                    let used = bits - (shift - 7);
                    let payload = b & 0x7f;
                    let sign = (payload >> (used - 1)) & 1;
                    let rest = payload >> used;
                    let expected = if sign == 1 { 0x7f >> used } else { 0 };
                    if rest != expected {
                        return Err(ParseError::Malformed {
                            offset: start,
                            reason: "integer too large".into(),
                        });
                    }
                }
                if shift < 64 && b & 0x40 != 0 {
                    result |= -1i64 << shift;
                }
                return Ok(result);
            }
        }
        Err(ParseError::Malformed {
            offset: start,
            reason: "integer representation too long".into(),
        })
    }
}

pub(crate) fn write_u32(out: &mut Vec<u8>, v: u32) {
    write_u64(out, u64::from(v));
}

pub(crate) fn write_u64(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let b = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(b);
            return;
        }
        out.push(b | 0x80);
    }
}

#[cfg(test)]
pub(crate) fn write_i64(out: &mut Vec<u8>, mut v: i64) {
    loop {
        let b = (v & 0x7f) as u8;
        v >>= 7;
        let done = (v == 0 && b & 0x40 == 0) || (v == -1 && b & 0x40 != 0);
        if done {
            out.push(b);
            return;
        }
        out.push(b | 0x80);
    }
}

/// Decodes an unsigned LEB128 immediate from validated code.
///
/// Returns the value and the number of bytes consumed.
#[inline(always)]
pub(crate) fn read_u32_at(code: &[std::cell::Cell<u8>], pos: usize) -> (u32, usize) {
    let b = code[pos].get();
    if b & 0x80 == 0 {
        return (u32::from(b), 1);
    }
    read_u32_slow(code, pos)
}

#[cold]
fn read_u32_slow(code: &[std::cell::Cell<u8>], pos: usize) -> (u32, usize) {
    let mut result = 0u32;
    let mut shift = 0;
    let mut i = 0;
    loop {
        let b = code[pos + i].get();
        result |= u32::from(b & 0x7f).wrapping_shl(shift);
        i += 1;
        if b & 0x80 == 0 {
            return (result, i);
        }
        shift += 7;
    }
}

#[inline(always)]
pub(crate) fn read_i64_at(code: &[std::cell::Cell<u8>], pos: usize) -> (i64, usize) {
    let b = code[pos].get();
    if b & 0x80 == 0 {
        // Single byte: sign-extend from bit 6.
        return ((i64::from(b) << 57) >> 57, 1);
    }
    let mut result = 0i64;
    let mut shift = 0u32;
    let mut i = 0;
    loop {
        let b = code[pos + i].get();
        if shift < 64 {
            result |= i64::from(b & 0x7f) << shift;
        }
        shift += 7;
        i += 1;
        if b & 0x80 == 0 {
            if shift < 64 && b & 0x40 != 0 {
                result |= -1i64 << shift;
            }
            return (result, i);
        }
    }
}
