//! Deterministic seed derivation: a master seed plus a label path hashes to a 256-bit stream key.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label<'a> {
    Str(&'a str),
    Int(u64),
}

impl<'a> From<&'a str> for Label<'a> {
    fn from(s: &'a str) -> Self {
        Label::Str(s)
    }
}

impl From<u64> for Label<'_> {
    fn from(i: u64) -> Self {
        Label::Int(i)
    }
}

impl From<usize> for Label<'_> {
    fn from(i: usize) -> Self {
        Label::Int(i as u64)
    }
}

/// A derived key together with the human-readable path that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamKey {
    key: [u8; 32],
    path: String,
}

const DOMAIN: &[u8] = b"contagion/derive_seed/v1";

fn absorb(h: &mut Sha256, label: Label<'_>) {
    match label {
        Label::Str(s) => {
            h.update([0x53u8]);
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        }
        Label::Int(i) => {
            h.update([0x49u8]);
            h.update(i.to_le_bytes());
        }
    }
}

fn push_path(path: &mut String, label: Label<'_>) {
    path.push('/');
    match label {
        Label::Str(s) => path.push_str(s),
        Label::Int(i) => path.push_str(&i.to_string()),
    }
}

/// Hashes (master, labels) with SHA-256. Labels are length-prefixed and type-tagged, so distinct paths never collide structurally.
pub fn derive_seed(master: u64, labels: &[Label<'_>]) -> StreamKey {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(master.to_le_bytes());
    let mut path = master.to_string();
    for &l in labels {
        absorb(&mut h, l);
        push_path(&mut path, l);
    }
    let mut key = [0u8; 32];
    key.copy_from_slice(&h.finalize());
    StreamKey { key, path }
}

impl StreamKey {
    pub fn key(&self) -> &[u8; 32] {
        &self.key
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    /// Extends the path by one label.
    pub fn child<'a>(&self, label: impl Into<Label<'a>>) -> StreamKey {
        let label = label.into();
        let mut h = Sha256::new();
        h.update(DOMAIN);
        h.update(self.key);
        absorb(&mut h, label);
        let mut key = [0u8; 32];
        key.copy_from_slice(&h.finalize());
        let mut path = self.path.clone();
        push_path(&mut path, label);
        StreamKey { key, path }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key)
    }

    /// First 8 bytes as an integer, for hashing schemes that need a 64-bit key.
    pub fn low_u64(&self) -> u64 {
        u64::from_le_bytes(self.key[..8].try_into().expect("8 bytes"))
    }
}

/// SplitMix64 finalizer; a bijection on u64.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;
    use std::collections::HashSet;

    #[test]
    fn same_inputs_same_draws() {
        let a = derive_seed(42, &["exp".into(), 3u64.into()]);
        let b = derive_seed(42, &["exp".into(), 3u64.into()]);
        let (mut ra, mut rb) = (a.rng(), b.rng());
        for _ in 0..4 {
            assert_eq!(ra.next_u64(), rb.next_u64());
        }
        assert_eq!(a.path(), "42/exp/3");
    }

    #[test]
    fn label_types_do_not_alias() {
        assert_ne!(derive_seed(0, &["1".into()]), derive_seed(0, &[1u64.into()]));
        assert_ne!(derive_seed(0, &["ab".into(), "c".into()]).key(), derive_seed(0, &["a".into(), "bc".into()]).key());
    }

    #[test]
    fn replica_streams_differ() {
        let mut seen = HashSet::new();
        for r in 0..10_000u64 {
            let mut rng = derive_seed(7, &["rep".into(), r.into()]).rng();
            let draws: Vec<u64> = (0..16).map(|_| rng.next_u64()).collect();
            assert!(seen.insert(draws));
        }
    }

    #[test]
    fn mix64_is_injective_on_sample() {
        let s: HashSet<u64> = (0..100_000u64).map(mix64).collect();
        assert_eq!(s.len(), 100_000);
    }
}
