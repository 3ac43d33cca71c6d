//! Bloom filter over text terms, used as the per-segment global summary.
//! Sized for a ~1% false-positive rate (9.6 bits/key, 7 hash probes).

use crate::error::Result;
use crate::storage::codec::{self, Reader};

#[derive(Debug, Clone, PartialEq)]
pub struct Bloom {
    bits: Vec<u8>,
    n_hashes: u32,
}

fn fnv64(data: &[u8], seed: u64) -> u64 {
    let mut hash = 0xcbf29ce484222325u64 ^ seed;
    for &b in data {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl Bloom {
    pub fn build<'a>(items: impl Iterator<Item = &'a str>, n_items: usize) -> Self {
        let n_bits = ((n_items.max(1) as f64) * 9.6).ceil() as usize;
        let n_bytes = n_bits.div_ceil(8).max(8);
        let mut bits = vec![0u8; n_bytes];
        let m = (n_bytes * 8) as u64;
        for item in items {
            let h1 = fnv64(item.as_bytes(), 0);
            let h2 = fnv64(item.as_bytes(), 0x9e3779b97f4a7c15);
            for i in 0..7u64 {
                let bit = (h1.wrapping_add(i.wrapping_mul(h2))) % m;
                bits[(bit / 8) as usize] |= 1 << (bit % 8);
            }
        }
        Bloom { bits, n_hashes: 7 }
    }

    pub fn contains(&self, item: &str) -> bool {
        let m = (self.bits.len() * 8) as u64;
        let h1 = fnv64(item.as_bytes(), 0);
        let h2 = fnv64(item.as_bytes(), 0x9e3779b97f4a7c15);
        (0..self.n_hashes as u64).all(|i| {
            let bit = (h1.wrapping_add(i.wrapping_mul(h2))) % m;
            self.bits[(bit / 8) as usize] & (1 << (bit % 8)) != 0
        })
    }

    pub fn encode(&self, buf: &mut Vec<u8>) {
        codec::put_u32(buf, self.n_hashes);
        codec::put_bytes(buf, &self.bits);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let n_hashes = r.u32()?;
        let bits = r.bytes()?.to_vec();
        Ok(Bloom { bits, n_hashes })
    }
}
