//! Offset-tracking byte reader shared by the binary format parsers.

use crate::error::{Error, Result};

pub(crate) struct TrackingReader<'a> {
    bytes: &'a [u8],
    pub(crate) offset: u64,
}

impl<'a> TrackingReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        TrackingReader { bytes, offset: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.offset as usize
    }

    pub(crate) fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        let rest = &self.bytes[self.offset as usize..];
        if rest.len() < buf.len() {
            return Err(Error::format(
                self.offset,
                format!("truncated: needed {} more bytes, found {}", buf.len(), rest.len()),
            ));
        }
        buf.copy_from_slice(&rest[..buf.len()]);
        self.offset += buf.len() as u64;
        Ok(())
    }

    pub(crate) fn read_u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.read_exact(&mut b)?;
        Ok(b[0])
    }

    pub(crate) fn read_u16_le(&mut self) -> Result<u16> {
        let mut b = [0u8; 2];
        self.read_exact(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }

    pub(crate) fn read_u32_le(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn read_u32_be(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_be_bytes(b))
    }

    pub(crate) fn read_f64_le(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}
