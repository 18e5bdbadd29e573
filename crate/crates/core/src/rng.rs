//! Reproducible random streams.
//!
//! Every Monte Carlo job is identified by a user seed plus a short list of
//! domain tags (operation id, subset index, truncation level, ...). The tags are
//! hashed into a ChaCha8 key, and replications are cut into fixed-size blocks,
//! each block reading its own ChaCha stream. Block `b` of job `(seed, tags)`
//! therefore produces the same numbers no matter which worker runs it or in
//! which order, and results are folded back in block order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Replications per block.
pub const BLOCK: u64 = 4096;

/// Domain tags separating the random streams of different operations.
pub mod domain {
    pub const SURVIVAL: u64 = 1;
    pub const P_T: u64 = 2;
    pub const K_CONST: u64 = 3;
    pub const SIMULATE: u64 = 4;
    pub const PICKANDS: u64 = 5;
    pub const COND_FACTOR: u64 = 6;
    pub const PATHS: u64 = 7;
    pub const FAILURE_TIME: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the 256-bit ChaCha key for job `(seed, tags)`.
pub fn job_key(seed: u64, tags: &[u64]) -> [u8; 32] {
    let mut h = splitmix64(seed);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        h = splitmix64(h.wrapping_add(i as u64));
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    key
}

/// The generator for block `block` of job `(seed, tags)`.
pub fn block_rng(seed: u64, tags: &[u64], block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(job_key(seed, tags));
    rng.set_stream(block);
    rng
}

/// The generator of replication `rep` of the job with key `key`. Used where a
/// replication consumes a random amount of numbers, so that replication `r`
/// sees the same stream whatever happened to the others.
pub fn rep_rng(key: &[u8; 32], rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(*key);
    rng.set_stream(rep);
    rng
}

/// Splits `n_rep` replications into blocks and runs `f(first, len)` on each
/// block in parallel; results come back in block order.
pub fn run_chunks<A, F>(n_rep: u64, f: F) -> Vec<A>
where
    A: Send,
    F: Fn(u64, u64) -> A + Sync,
{
    let n_blocks = n_rep.div_ceil(BLOCK);
    (0..n_blocks)
        .into_par_iter()
        .map(|b| f(b * BLOCK, BLOCK.min(n_rep - b * BLOCK)))
        .collect()
}

/// Runs `n_rep` replications in blocks, in parallel, and returns the per-block
/// results in block order. `f` receives the block generator and the number of
/// replications in that block.
pub fn run_blocks<A, F>(n_rep: u64, seed: u64, tags: &[u64], f: F) -> Vec<A>
where
    A: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> A + Sync,
{
    let n_blocks = n_rep.div_ceil(BLOCK);
    (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let len = BLOCK.min(n_rep - b * BLOCK);
            let mut rng = block_rng(seed, tags, b);
            f(&mut rng, len)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn blocks_are_reproducible_and_distinct() {
        let a: f64 = block_rng(7, &[1, 2], 3).random();
        let b: f64 = block_rng(7, &[1, 2], 3).random();
        let c: f64 = block_rng(7, &[1, 2], 4).random();
        let d: f64 = block_rng(7, &[1, 3], 3).random();
        let e: f64 = block_rng(8, &[1, 2], 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, e);
    }

    #[test]
    fn run_blocks_covers_all_replications_in_order() {
        let sizes = run_blocks(10_000, 1, &[0], |_, n| n);
        assert_eq!(sizes, vec![4096, 4096, 1808]);
        let firsts = run_blocks(3 * BLOCK, 1, &[0], |rng, _| rng.random::<u64>());
        let again: Vec<u64> = (0..3).map(|b| block_rng(1, &[0], b).random()).collect();
        assert_eq!(firsts, again);
    }

    #[test]
    fn replication_streams_are_independent_of_each_other() {
        let key = job_key(3, &[4]);
        let mut r5 = rep_rng(&key, 5);
        let _ = rep_rng(&key, 4).random::<u64>();
        let x: u64 = r5.random();
        assert_eq!(x, rep_rng(&key, 5).random::<u64>());
        assert_ne!(x, rep_rng(&key, 6).random::<u64>());
        let chunks = run_chunks(9000, |first, len| (first, len));
        assert_eq!(chunks, vec![(0, 4096), (4096, 4096), (8192, 808)]);
    }
}
