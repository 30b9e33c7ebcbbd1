//! Deterministic stream splitting for Monte Carlo execution.
//!
//! Every random draw in an experiment comes from a substream keyed by
//! (master seed, run index, round index, purpose salt). Streams never share
//! state, so runs can execute in any order or in parallel and still
//! reproduce bit-identical results from the master seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose salts keeping same-round substreams disjoint.
pub mod salt {
    /// Ground-truth parameter drift step.
    pub const DRIFT: u64 = 1;
    /// Per-round learning batch.
    pub const BATCH: u64 = 2;
    /// Independent evaluation sample set (CVaR realized loss).
    pub const EVAL: u64 = 3;
    /// Oracle approximating sample set (CVaR per-round optimum).
    pub const ORACLE: u64 = 4;
    /// Discrete fixture construction.
    pub const FIXTURE: u64 = 5;
    /// Constant-estimation sampling budgets.
    pub const ESTIMATE: u64 = 6;
}

/// Offset applied to the master seed when a degenerate run is re-seeded.
pub const RESEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Derives the generator for one (run, round, purpose) cell.
///
/// The 256-bit ChaCha key is the four indices verbatim, so distinct cells
/// can never collide.
pub fn substream(master: u64, run: u64, round: u64, salt: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&run.to_le_bytes());
    seed[16..24].copy_from_slice(&round.to_le_bytes());
    seed[24..32].copy_from_slice(&salt.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn substreams_reproduce() {
        let mut a = substream(7, 3, 11, salt::BATCH);
        let mut b = substream(7, 3, 11, salt::BATCH);
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn substreams_differ_across_cells() {
        let mut base = substream(7, 3, 11, salt::BATCH);
        let mut other_run = substream(7, 4, 11, salt::BATCH);
        let mut other_round = substream(7, 3, 12, salt::BATCH);
        let mut other_salt = substream(7, 3, 11, salt::EVAL);
        let x = base.next_u64();
        assert_ne!(x, other_run.next_u64());
        assert_ne!(x, other_round.next_u64());
        assert_ne!(x, other_salt.next_u64());
    }
}
