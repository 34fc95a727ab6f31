//! Little-endian binary encoding shared by the artifact formats.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at byte {offset}")]
pub struct BinError {
    pub offset: usize,
    pub message: String,
}

/// Appends little-endian fields to a byte buffer.
#[derive(Debug, Default)]
pub struct Writer(Vec<u8>);

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    /// 8-byte magic followed by a u32 version and a reserved u32, 16 bytes total.
    pub fn header(magic: &[u8; 8], version: u32) -> Self {
        let mut w = Writer::new();
        w.0.extend_from_slice(magic);
        w.u32(version);
        w.u32(0);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    pub fn finish(self) -> Vec<u8> {
        self.0
    }
}

/// Cursor over a little-endian byte buffer.
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    /// Checks the 16-byte header and returns the version.
    pub fn header(data: &'a [u8], magic: &[u8; 8]) -> Result<(Self, u32), BinError> {
        let mut r = Reader::new(data);
        if r.take(8)? != magic {
            return Err(r.error_at(0, "bad magic"));
        }
        let version = r.u32()?;
        let _reserved = r.u32()?;
        Ok((r, version))
    }

    pub fn error(&self, message: impl Into<String>) -> BinError {
        self.error_at(self.pos, message)
    }

    fn error_at(&self, offset: usize, message: impl Into<String>) -> BinError {
        BinError { offset, message: message.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], BinError> {
        if self.data.len() - self.pos < n {
            return Err(self.error("unexpected end of data"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, BinError> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool, BinError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(self.error("bad boolean")),
        }
    }

    pub fn u32(&mut self) -> Result<u32, BinError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, BinError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// A length or index; rejects values that cannot fit the remaining data
    /// when used as an element count of `elem_size` bytes.
    pub fn count(&mut self, elem_size: usize) -> Result<usize, BinError> {
        let v = self.u64()?;
        let remaining = (self.data.len() - self.pos) as u64;
        if elem_size > 0 && v > remaining / elem_size as u64 {
            return Err(self.error("length exceeds remaining data"));
        }
        Ok(v as usize)
    }

    pub fn usize(&mut self) -> Result<usize, BinError> {
        usize::try_from(self.u64()?).map_err(|_| self.error("value too large"))
    }

    pub fn f64(&mut self) -> Result<f64, BinError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, BinError> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn str(&mut self) -> Result<String, BinError> {
        let n = self.count(1)?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.error("invalid UTF-8"))
    }

    pub fn finish(self) -> Result<(), BinError> {
        if self.pos == self.data.len() {
            Ok(())
        } else {
            Err(self.error("trailing bytes"))
        }
    }
}
