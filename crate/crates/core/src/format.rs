//! Little-endian binary helpers shared by the checkpoint and dataset formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(crate) const VERSION: u32 = 1;

pub(crate) struct Writer<W> {
    inner: W,
}

impl<W: Write> Writer<W> {
    pub(crate) fn new(inner: W) -> Self {
        Writer { inner }
    }

    pub(crate) fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }

    pub(crate) fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        self.bytes(magic)?;
        self.u32(VERSION)
    }

    /// rank, extents, then the f64 payload.
    pub(crate) fn tensor<T: Scalar>(&mut self, t: &Tensor<T>) -> Result<()> {
        self.u32(len_u32(t.dims().len())?)?;
        for &d in t.dims() {
            self.u32(len_u32(d)?)?;
        }
        let mut buf = Vec::with_capacity(8 * t.numel());
        for &v in t.data() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        self.bytes(&buf)
    }

    pub(crate) fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

fn len_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Config(format!("extent {v} does not fit in u32")))
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn fail<X>(&self, message: impl Into<String>) -> Result<X> {
        Err(Error::Format {
            offset: self.offset(),
            message: message.into(),
        })
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        match self.pos.checked_add(n) {
            Some(end) if end <= self.buf.len() => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            _ => self.fail(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.buf.len() - self.pos
            )),
        }
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != magic {
            self.pos -= 4;
            return self.fail(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            ));
        }
        let version = self.u32("version")?;
        if version != VERSION {
            self.pos -= 4;
            return self.fail(format!("unsupported version {version}"));
        }
        Ok(())
    }

    pub(crate) fn tensor<T: Scalar>(&mut self) -> Result<Tensor<T>> {
        let rank = self.u32("rank")? as usize;
        if rank > 16 {
            self.pos -= 4;
            return self.fail(format!("implausible rank {rank}"));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u32("extent")? as usize);
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(8).is_some());
        let Some(numel) = numel else {
            return self.fail("tensor size overflows");
        };
        let raw = self.take(numel * 8, "tensor payload")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| {
                let v = f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
                T::lit(v)
            })
            .collect();
        Tensor::from_vec(dims, data)
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}
