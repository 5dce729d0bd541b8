//! Seedable generator used by every stochastic operation.
//!
//! `Rng64` is xoshiro256++ seeded through SplitMix64, so a `u64` seed fully
//! determines every stream.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng64 = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> Rng64 {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}
