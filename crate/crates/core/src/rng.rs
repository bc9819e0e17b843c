//! Deterministic RNG substreams.
//!
//! A substream is a ChaCha8 generator seeded from a master seed mixed with
//! the coordinates of a unit of work (resampling iteration, feature, repeat,
//! ...). Two units with the same coordinates always see the same stream,
//! regardless of thread count or execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive mix of a seed with a sequence of coordinates.
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(GOLDEN)));
    }
    h
}

/// Stable 64-bit FNV-1a hash of a string tag.
pub fn tag(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hash of a set of names, independent of the order they are listed in.
pub fn name_set(names: &[String]) -> u64 {
    let mut sorted: Vec<&str> = names.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let mut h = tag("name-set");
    for n in sorted {
        h = mix(h, &[tag(n)]);
    }
    h
}

pub fn substream(seed: u64, parts: &[u64]) -> Rng {
    let mut key = [0u8; 32];
    let mut h = mix(seed, parts);
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&h.to_le_bytes());
        h = splitmix64(h);
    }
    ChaCha8Rng::from_seed(key)
}
