/// Uniform mid-rise quantizer with `2^bits` cells over `[-range, range]`;
/// inputs outside the range clip to the outer cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidRise {
    pub bits: u8,
    pub range: f32,
}

pub const MAX_BITS: u8 = 24;

impl MidRise {
    pub fn step(&self) -> f64 {
        2.0 * self.range as f64 / (1u64 << self.bits) as f64
    }

    pub fn encode(&self, x: f64) -> u32 {
        let levels = 1u64 << self.bits;
        let cell = (x / self.step()).floor() + (levels / 2) as f64;
        cell.clamp(0.0, (levels - 1) as f64) as u32
    }

    pub fn decode(&self, code: u32) -> f64 {
        let half = (1u64 << (self.bits - 1)) as f64;
        (code as f64 - half + 0.5) * self.step()
    }
}

/// Little-endian bit packing, least significant bit first.
#[derive(Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    filled: u32,
}

impl BitWriter {
    pub fn push(&mut self, value: u32, bits: u8) {
        self.acc |= (value as u64) << self.filled;
        self.filled += bits as u32;
        while self.filled >= 8 {
            self.bytes.push(self.acc as u8);
            self.acc >>= 8;
            self.filled -= 8;
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.bytes.push(self.acc as u8);
        }
        self.bytes
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    acc: u64,
    filled: u32,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader {
            bytes,
            pos: 0,
            acc: 0,
            filled: 0,
        }
    }

    pub fn pull(&mut self, bits: u8) -> Option<u32> {
        while self.filled < bits as u32 {
            let b = *self.bytes.get(self.pos)?;
            self.acc |= (b as u64) << self.filled;
            self.pos += 1;
            self.filled += 8;
        }
        let v = (self.acc & ((1u64 << bits) - 1)) as u32;
        self.acc >>= bits;
        self.filled -= bits as u32;
        Some(v)
    }
}
