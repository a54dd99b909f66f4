//! 64-bit FNV-1a, used for content-derived instance ids and hash-ranked subsampling.

const OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

/// Incremental FNV-1a state.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(OFFSET_BASIS)
    }
}

impl Fnv1a {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, bytes: &[u8]) -> &mut Self {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(PRIME);
        }
        self
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    Fnv1a::new().update(bytes).finish()
}

/// Hash of `seed ‖ word`, the seed serialized as 8 little-endian bytes.
pub fn seeded_word_hash(seed: u64, word: &str) -> u64 {
    Fnv1a::new()
        .update(&seed.to_le_bytes())
        .update(word.as_bytes())
        .finish()
}

/// Seed for one subsampling trial: FNV-1a over `base_seed ‖ trial_index`, both little-endian u64.
pub fn trial_seed(base_seed: u64, trial: u32) -> u64 {
    Fnv1a::new()
        .update(&base_seed.to_le_bytes())
        .update(&u64::from(trial).to_le_bytes())
        .finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_test_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn incremental_matches_one_shot() {
        let mut h = Fnv1a::new();
        h.update(b"foo").update(b"bar");
        assert_eq!(h.finish(), fnv1a64(b"foobar"));
    }

    #[test]
    fn trial_seeds_differ_per_trial() {
        let seeds: std::collections::HashSet<u64> = (0..100).map(|t| trial_seed(42, t)).collect();
        assert_eq!(seeds.len(), 100);
    }
}
