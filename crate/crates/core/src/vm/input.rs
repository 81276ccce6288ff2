use std::sync::Arc;

use crate::fir::Width;

/// Attacker-controlled byte stream. Reads past the end yield zero bytes and
/// set the exhausted flag.
#[derive(Clone, Debug, Default)]
pub struct InputStream {
    bytes: Arc<[u8]>,
    cursor: usize,
    consumed: u64,
    exhausted: bool,
}

impl InputStream {
    pub fn new(bytes: impl Into<Arc<[u8]>>) -> Self {
        InputStream {
            bytes: bytes.into(),
            cursor: 0,
            consumed: 0,
            exhausted: false,
        }
    }

    pub fn empty() -> Self {
        InputStream::new(Vec::new())
    }

    pub fn read_u8(&mut self) -> u8 {
        self.consumed += 1;
        match self.bytes.get(self.cursor) {
            Some(&b) => {
                self.cursor += 1;
                b
            }
            None => {
                self.exhausted = true;
                0
            }
        }
    }

    /// Little-endian read of `width` bytes.
    pub fn read(&mut self, width: Width) -> u32 {
        (0..width.bytes()).fold(0u32, |acc, k| acc | (self.read_u8() as u32) << (8 * k))
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.cursor
    }

    pub fn has_remaining(&self) -> bool {
        self.remaining() > 0
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Bytes requested so far, including zero padding past the end.
    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn little_endian_and_padding() {
        let mut s = InputStream::new(vec![0x78, 0x56, 0x34]);
        assert_eq!(s.read(Width::W2), 0x5678);
        assert!(!s.exhausted());
        assert_eq!(s.read(Width::W4), 0x34);
        assert!(s.exhausted());
        assert_eq!(s.cursor(), 3);
        assert_eq!(s.consumed(), 6);
    }

    #[test]
    fn empty_reads_zero() {
        let mut s = InputStream::empty();
        assert_eq!(s.read_u8(), 0);
        assert!(s.exhausted());
    }
}
