//! Flat host memory region with registered ranges for remote access.

use std::ops::Range;

use crate::error::{Error, Result};

/// Byte-addressable host memory. Commands reference offsets into this
/// region; remote PUT/GET is only honored inside registered ranges.
pub struct HostMemoryRegion {
    bytes: Vec<u8>,
    registered: Vec<Range<u64>>,
}

impl HostMemoryRegion {
    pub fn new(size: u64) -> Self {
        HostMemoryRegion {
            bytes: vec![0u8; size as usize],
            registered: Vec::new(),
        }
    }

    pub fn size(&self) -> u64 {
        self.bytes.len() as u64
    }

    pub fn check_bounds(&self, offset: u64, len: u64) -> Result<()> {
        let end = offset.checked_add(len).ok_or(Error::OutOfBounds {
            offset,
            len,
            size: self.size(),
        })?;
        if end > self.size() {
            return Err(Error::OutOfBounds {
                offset,
                len,
                size: self.size(),
            });
        }
        Ok(())
    }

    pub fn read(&self, offset: u64, len: u64) -> Result<&[u8]> {
        self.check_bounds(offset, len)?;
        Ok(&self.bytes[offset as usize..(offset + len) as usize])
    }

    pub fn write(&mut self, offset: u64, data: &[u8]) -> Result<()> {
        self.check_bounds(offset, data.len() as u64)?;
        self.bytes[offset as usize..offset as usize + data.len()].copy_from_slice(data);
        Ok(())
    }

    /// Marks a range as a valid target for remote PUT/GET.
    pub fn register(&mut self, range: Range<u64>) {
        self.registered.push(range);
    }

    /// A remote access must land entirely inside one registered range.
    pub fn check_registered(&self, offset: u64, len: u64) -> Result<()> {
        self.check_bounds(offset, len)
            .map_err(|_| Error::UnregisteredRange { offset, len })?;
        let end = offset + len;
        if self
            .registered
            .iter()
            .any(|r| offset >= r.start && end <= r.end)
        {
            Ok(())
        } else {
            Err(Error::UnregisteredRange { offset, len })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn read_write_round_trip() {
        let mut mem = HostMemoryRegion::new(1024);
        mem.write(100, b"hello").unwrap();
        assert_eq!(mem.read(100, 5).unwrap(), b"hello");
    }

    #[test]
    fn bounds_are_enforced() {
        let mut mem = HostMemoryRegion::new(64);
        assert!(mem.write(60, b"abcde").is_err());
        assert!(mem.read(u64::MAX - 2, 8).is_err());
        assert!(mem.read(0, 64).is_ok());
    }

    #[test]
    fn registration_gates_remote_access() {
        let mut mem = HostMemoryRegion::new(1024);
        mem.register(128..256);
        assert!(mem.check_registered(128, 128).is_ok());
        assert!(mem.check_registered(200, 10).is_ok());
        assert!(mem.check_registered(100, 10).is_err());
        assert!(mem.check_registered(250, 10).is_err());
        assert!(mem.check_registered(2000, 1).is_err());
    }
}
