//! Little-endian framing shared by checkpoints and model files.

use crate::error::{Error, Result};

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8], version: u32) -> Self {
        let mut w = Self { buf: magic.to_vec() };
        w.u32(version);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Length-prefixed f64 slice.
    pub fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        for &x in v {
            self.f64(x);
        }
    }

    /// Length-prefixed UTF-8 text.
    pub fn text(&mut self, s: &str) {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    what: &'static str,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks the magic bytes and returns the reader plus the version.
    pub fn open(what: &'static str, buf: &'a [u8], magic: &[u8]) -> Result<(Self, u32)> {
        if !buf.starts_with(magic) {
            return Err(Error::format(what, "bad magic bytes"));
        }
        let mut r = Self { what, buf, pos: magic.len() };
        let version = r.u32()?;
        Ok((r, version))
    }

    pub fn err(&self, reason: impl Into<String>) -> Error {
        Error::format(self.what, format!("{} (at byte {})", reason.into(), self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!("truncated: wanted {n} more bytes")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.err(format!("count {v} too large")))
    }

    /// A count of items that each take at least `item_bytes` more bytes.
    pub fn count(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.usize()?;
        let left = self.buf.len() - self.pos;
        if n.checked_mul(item_bytes.max(1)).is_none_or(|need| need > left) {
            return Err(self.err(format!("count {n} exceeds remaining {left} bytes")));
        }
        Ok(n)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn finite(&mut self) -> Result<f64> {
        let v = self.f64()?;
        if !v.is_finite() {
            return Err(self.err("non-finite value"));
        }
        Ok(v)
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.finite()).collect()
    }

    pub fn text(&mut self) -> Result<&'a str> {
        let n = self.count(1)?;
        let bytes = self.take(n)?;
        std::str::from_utf8(bytes).map_err(|_| self.err("text is not UTF-8"))
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.err(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut w = Writer::new(b"TEST", 3);
        w.u8(7);
        w.f64s(&[1.5, -2.0]);
        w.text("héllo");
        let bytes = w.finish();
        let (mut r, v) = Reader::open("test", &bytes, b"TEST").unwrap();
        assert_eq!(v, 3);
        assert_eq!(r.u8().unwrap(), 7);
        assert_eq!(r.f64s().unwrap(), vec![1.5, -2.0]);
        assert_eq!(r.text().unwrap(), "héllo");
        r.finish().unwrap();
    }

    #[test]
    fn rejects_oversized_counts() {
        let mut w = Writer::new(b"TEST", 1);
        w.u64(u64::MAX / 2);
        let bytes = w.finish();
        let (mut r, _) = Reader::open("test", &bytes, b"TEST").unwrap();
        assert!(r.f64s().is_err());
        assert!(Reader::open("test", b"NOPE", b"TEST").is_err());
    }
}
