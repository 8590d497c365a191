use super::SimError;

/// Flat byte-addressable main memory.
///
/// Reads of bytes that were never written return zero and bump a warning
/// counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemModel {
    bytes: Vec<u8>,
    written: Vec<bool>,
    unwritten_reads: u64,
}

impl MemModel {
    pub fn new(size: usize) -> Self {
        Self {
            bytes: vec![0; size],
            written: vec![false; size],
            unwritten_reads: 0,
        }
    }

    pub fn size(&self) -> usize {
        self.bytes.len()
    }

    /// Grow to at least `size` bytes.
    pub fn ensure_size(&mut self, size: usize) {
        if size > self.bytes.len() {
            self.bytes.resize(size, 0);
            self.written.resize(size, false);
        }
    }

    fn range(&self, addr: u64, len: usize) -> Result<std::ops::Range<usize>, SimError> {
        let start = usize::try_from(addr).ok();
        match start.and_then(|s| s.checked_add(len).map(|e| (s, e))) {
            Some((s, e)) if e <= self.bytes.len() => Ok(s..e),
            _ => Err(SimError::MemoryOutOfBounds {
                addr,
                len,
                size: self.bytes.len(),
            }),
        }
    }

    pub fn read(&mut self, addr: u64, len: usize) -> Result<&[u8], SimError> {
        let r = self.range(addr, len)?;
        self.unwritten_reads += self.written[r.clone()].iter().filter(|w| !**w).count() as u64;
        Ok(&self.bytes[r])
    }

    pub fn write(&mut self, addr: u64, data: &[u8]) -> Result<(), SimError> {
        let r = self.range(addr, data.len())?;
        self.bytes[r.clone()].copy_from_slice(data);
        self.written[r].iter_mut().for_each(|w| *w = true);
        Ok(())
    }

    /// Read without touching the warning counter, for dumps and inspection.
    pub fn peek(&self, addr: u64, len: usize) -> Result<&[u8], SimError> {
        let r = self.range(addr, len)?;
        Ok(&self.bytes[r])
    }

    pub fn unwritten_reads(&self) -> u64 {
        self.unwritten_reads
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_and_warnings() {
        let mut m = MemModel::new(16);
        m.write(4, &[1, 2, 3]).unwrap();
        assert_eq!(m.read(3, 5).unwrap(), &[0, 1, 2, 3, 0]);
        assert_eq!(m.unwritten_reads(), 2);
        assert!(matches!(m.read(14, 3), Err(SimError::MemoryOutOfBounds { addr: 14, len: 3, size: 16 })));
        assert!(m.write(16, &[0]).is_err());
        assert!(m.write(u64::MAX, &[0]).is_err());
        assert_eq!(m.peek(4, 1).unwrap(), &[1]);
        assert_eq!(m.unwritten_reads(), 2);
        m.ensure_size(32);
        assert_eq!(m.size(), 32);
    }
}
