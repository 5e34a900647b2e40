//! Byte-level primitives shared by the dataset and checkpoint containers.
//! Everything is little-endian; readers fail with an explicit truncation
//! error rather than returning partial structures.

use crate::ContainerError;

pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Writer {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Writer { buf }
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.bytes(s.as_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Check magic and version, then position the cursor after the header.
    pub fn new(
        buf: &'a [u8],
        magic: &'static str,
        version: u32,
    ) -> Result<Reader<'a>, ContainerError> {
        if buf.len() < 4 || &buf[..4] != magic.as_bytes() {
            return Err(ContainerError::BadMagic { expected: magic });
        }
        let mut r = Reader { buf, pos: 4 };
        let got = r.u32("version")?;
        if got != version {
            return Err(ContainerError::Version {
                expected: version,
                got,
            });
        }
        Ok(r)
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ContainerError> {
        if self.pos + n > self.buf.len() {
            return Err(ContainerError::Truncated { what });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &'static str) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// A u64 count that must also be satisfiable by the remaining bytes,
    /// given `elem_size` bytes per element. A count the file cannot back is
    /// reported as truncation before anything is allocated for it.
    pub fn count(
        &mut self,
        what: &'static str,
        elem_size: usize,
    ) -> Result<usize, ContainerError> {
        let v = self.u64(what)?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if elem_size > 0 && v > remaining / elem_size as u64 {
            return Err(ContainerError::Truncated { what });
        }
        Ok(v as usize)
    }

    pub fn bytes(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ContainerError> {
        self.take(n, what)
    }

    pub fn str(&mut self, what: &'static str) -> Result<String, ContainerError> {
        let n = self.count(what, 1)?;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| ContainerError::BadValue {
            what,
            value: n as u64,
        })
    }

    pub fn f64s(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>, ContainerError> {
        let raw = self.take(8 * n, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn finish(&self) -> Result<(), ContainerError> {
        if self.pos != self.buf.len() {
            return Err(ContainerError::BadValue {
                what: "trailing bytes",
                value: (self.buf.len() - self.pos) as u64,
            });
        }
        Ok(())
    }
}
