//! Little-endian binary helpers shared by the on-disk formats, plus atomic
//! file replacement.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Append-only little-endian encoder.
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4]) -> Self {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w
    }

    pub fn u32(&mut self, v: usize) -> &mut Self {
        self.buf.extend_from_slice(&(v as u32).to_le_bytes());
        self
    }

    pub fn f32(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&(v as f32).to_le_bytes());
        self
    }

    pub fn f32s(&mut self, vs: &[f64]) -> &mut Self {
        self.buf.reserve(vs.len() * 4);
        for &v in vs {
            self.f32(v);
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor over a byte slice that reports truncation as a data error.
pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(Error::data(format!(
                "{what}: bad magic, expected {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(Reader { bytes, pos: 4, what })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::data(format!("{}: truncated file", self.what)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    pub fn f32(&mut self) -> Result<f64> {
        let b = self.take(4)?;
        let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        if !v.is_finite() {
            return Err(Error::data(format!("{}: non-finite value", self.what)));
        }
        Ok(v as f64)
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.checked_mul(4).is_none_or(|b| self.pos + b > self.bytes.len()) {
            return Err(Error::data(format!("{}: truncated file", self.what)));
        }
        (0..n).map(|_| self.f32()).collect()
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::data(format!(
                "{}: {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Write `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads `path` and decodes it, prefixing data errors with the path.
pub fn read_parsed<T>(path: &Path, parse: impl FnOnce(&[u8]) -> Result<T>) -> Result<T> {
    parse(&read_file(path)?).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}
