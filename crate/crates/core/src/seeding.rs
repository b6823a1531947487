//! Deterministic child-seed derivation.
//!
//! Monte-Carlo work derives one rng stream per (master seed, strategy,
//! instance) triple, so estimates do not depend on execution order or on
//! how many workers the process runs with.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(hash: u64, bytes: &[u8]) -> u64 {
    let mut h = hash;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Stable 64-bit hash of (master seed, strategy encoding, instance id).
pub fn child_seed(master: u64, strategy: &str, instance_id: &str) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &master.to_le_bytes());
    h = fnv1a(h, strategy.as_bytes());
    h = fnv1a(h, &[0xff]);
    fnv1a(h, instance_id.as_bytes())
}
