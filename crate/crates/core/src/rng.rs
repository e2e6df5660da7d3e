//! Label-addressable random streams.
//!
//! Every consumer of randomness (a link, a room's environment noise, a
//! node's sensor noise) owns a stream derived from the master seed and a
//! `(purpose, entity)` label. Streams are ChaCha8 keyed by SHA-256 of the
//! label, so they are independent of each other and of the order in which
//! they are created, and identical across platforms.
//!
//! The stream algorithm is part of the golden-log contract: changing it
//! changes every recorded run.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Version tag mixed into every stream key.
pub const STREAM_VERSION: &str = "iaqsim-stream-v1";

pub type Stream = ChaCha8Rng;

/// Derives the stream for `(purpose, entity)` under `master_seed`.
pub fn seed_stream(master_seed: u64, purpose: &str, entity: &str) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(STREAM_VERSION.as_bytes());
    hasher.update(master_seed.to_le_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update((entity.len() as u64).to_le_bytes());
    hasher.update(entity.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// A child seed, e.g. for the replicas of a sweep.
pub fn derive_seed(master_seed: u64, purpose: &str, entity: &str) -> u64 {
    seed_stream(master_seed, purpose, entity).next_u64()
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw (Box-Muller, cosine branch only).
///
/// Uses `libm` so results do not depend on the platform's math library.
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    // u1 in (0, 1] keeps ln finite.
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = unit_f64(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
}

/// Gaussian draw with the given standard deviation. A zero sigma still
/// consumes one draw so stream alignment does not depend on parameters.
pub fn gaussian<R: RngCore + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z = standard_normal(rng);
    if sigma == 0.0 {
        0.0
    } else {
        sigma * z
    }
}
