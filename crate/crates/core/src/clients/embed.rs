//! Deterministic feature-hashing embedder.
//!
//! Scheme (stable, so cosine values can be reproduced by hand):
//! 1. lowercase the text, collapse whitespace runs to one space, pad with one
//!    space on each side;
//! 2. slide a window of [`NGRAM`] characters over the result;
//! 3. hash each n-gram's UTF-8 bytes with 64-bit FNV-1a whose offset basis is
//!    XORed with the seed;
//! 4. add `+1` (top hash bit clear) or `-1` (top bit set) at index `hash % dim`;
//! 5. scale to unit L2 norm (the all-zero vector stays zero).

use super::{ClientError, Embedder};

pub const NGRAM: usize = 3;
pub const DEFAULT_DIM: usize = 256;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM, seed: 0 }
    }
}

pub fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    bytes.iter().fold(FNV_OFFSET ^ seed, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

impl HashEmbedder {
    pub fn vector(&self, text: &str) -> Vec<f64> {
        let padded = format!(" {} ", text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" "));
        let chars: Vec<char> = padded.chars().collect();
        let mut v = vec![0.0; self.dim];
        for gram in chars.windows(NGRAM) {
            let s: String = gram.iter().collect();
            let h = fnv1a(s.as_bytes(), self.seed);
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        Ok(self.vector(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_norm_and_case_insensitive() {
        let e = HashEmbedder::default();
        let a = e.vector("Pigeonhole Principle");
        let b = e.vector("pigeonhole   principle");
        assert_eq!(a, b);
        let n: f64 = a.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_zero() {
        assert!(HashEmbedder::default().vector("").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a(b"", 0), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a", 0), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar", 0), 0x85944171f73967e8);
    }
}
