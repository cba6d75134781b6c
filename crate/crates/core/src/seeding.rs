//! Deterministic derivation of per-task RNG streams from a single root seed.
//!
//! Parallel work (trees, bootstrap samples) must produce identical results
//! regardless of thread scheduling, so every unit of work gets its own
//! ChaCha stream keyed by `(root_seed, stream_index)`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; a good 64-bit mixer.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed for stream `index` under `root`.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(index.wrapping_add(0x51ED_270B_9D1C_4B2F)))
}

/// RNG for stream `index` under `root`.
pub fn stream_rng(root: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, index))
}

/// RNG seeded directly from `root` (for single-stream, sequential use).
pub fn root_rng(root: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(root)
}

/// Uniform `k`-subset of `0..n` without replacement, by partial
/// Fisher-Yates over a sparse swap map (O(k) time and space).
pub fn sample_indices(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<u32> {
    use rand::Rng;
    assert!(k <= n, "cannot sample {k} of {n}");
    let mut swaps: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    let mut picked = Vec::with_capacity(k);
    for i in 0..k {
        let j = i + rng.random_range(0..(n - i));
        let vi = *swaps.get(&i).unwrap_or(&i);
        let vj = *swaps.get(&j).unwrap_or(&j);
        picked.push(vj as u32);
        swaps.insert(j, vi);
    }
    picked
}

/// Standard normal draw by Box-Muller (two uniforms per call; sequential
/// and reproducible).
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    let u1: f64 = loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            break v;
        }
    };
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
