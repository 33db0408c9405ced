//! Deterministic stream-split random number generation.
//!
//! Every random draw in the simulator comes from a ChaCha8 stream keyed by
//! `(seed, slot, stream tag)`. Streams are independent of evaluation order,
//! so parallel slot evaluation and policy/V sweeps under common random
//! numbers reproduce bit-identical realizations: the key never includes the
//! policy or the control weight V.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tag for per-slot realizations (arrivals, fading, energy).
const TAG_SLOT: u64 = 0x534c_4f54; // "SLOT"
/// Stream tag for static topology draws (gateway frequencies, distances).
const TAG_TOPOLOGY: u64 = 0x544f_504f; // "TOPO"
/// Stream tag for validation-only sampling (block-race draws, oracles).
const TAG_VALIDATION: u64 = 0x5641_4c44; // "VALD"

/// Builds the ChaCha key for `(seed, t, tag)`. The remaining key bytes are
/// zero; ChaCha8 mixes the 256-bit key, so distinct tuples give independent
/// streams.
fn keyed(seed: u64, t: u64, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&t.to_le_bytes());
    key[16..24].copy_from_slice(&tag.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Stream for slot `t` of run `seed`. Identical `(seed, t)` yields an
/// identical stream regardless of which slots were sampled before.
pub fn slot_rng(seed: u64, t: u64) -> ChaCha8Rng {
    keyed(seed, t, TAG_SLOT)
}

/// Stream for the static topology draws of run `seed`.
pub fn topology_rng(seed: u64) -> ChaCha8Rng {
    keyed(seed, 0, TAG_TOPOLOGY)
}

/// Stream reserved for validation commands so they never perturb run streams.
pub fn validation_rng(seed: u64, instance: u64) -> ChaCha8Rng {
    keyed(seed, instance, TAG_VALIDATION)
}

/// Uniform draw on `[0, 1)`.
pub fn uniform01<R: Rng>(rng: &mut R) -> f64 {
    rng.gen::<f64>()
}

/// Uniform draw on `[lo, hi)`.
pub fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform01(rng)
}

/// Exponential draw with the given mean, by inverse CDF: -mean*ln(1-u).
/// A zero mean degenerates to the constant 0.
pub fn exponential<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    let u = uniform01(rng);
    if mean == 0.0 {
        return 0.0;
    }
    // u in [0,1) so 1-u in (0,1] and the log is finite and nonpositive.
    -mean * (1.0 - u).ln()
}

/// Gaussian draw via the Box-Muller transform.
pub fn gaussian<R: Rng>(rng: &mut R, mean: f64, std: f64) -> f64 {
    let u1 = uniform01(rng);
    let u2 = uniform01(rng);
    // 1-u1 in (0,1] keeps the log finite.
    let r = (-2.0 * (1.0 - u1).ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    mean + std * r * theta.cos()
}

/// Gaussian truncated at zero by projection: negative draws clamp to 0.
pub fn gaussian_nonneg<R: Rng>(rng: &mut R, mean: f64, std: f64) -> f64 {
    gaussian(rng, mean, std).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_stream() {
        let a: Vec<f64> = {
            let mut r = slot_rng(7, 3);
            (0..32).map(|_| uniform01(&mut r)).collect()
        };
        let b: Vec<f64> = {
            let mut r = slot_rng(7, 3);
            (0..32).map(|_| uniform01(&mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_slots_distinct_streams() {
        let mut r0 = slot_rng(7, 0);
        let mut r1 = slot_rng(7, 1);
        let a: Vec<f64> = (0..8).map(|_| uniform01(&mut r0)).collect();
        let b: Vec<f64> = (0..8).map(|_| uniform01(&mut r1)).collect();
        assert_ne!(a, b);
    }

    #[test]
    fn tags_separate_topology_from_slots() {
        let mut r0 = slot_rng(7, 0);
        let mut r1 = topology_rng(7);
        assert_ne!(uniform01(&mut r0), uniform01(&mut r1));
    }

    #[test]
    fn exponential_mean_converges() {
        let mut rng = validation_rng(1, 0);
        let n = 100_000;
        let mean = 4.0;
        let sum: f64 = (0..n).map(|_| exponential(&mut rng, mean)).sum();
        let emp = sum / n as f64;
        assert!((emp - mean).abs() / mean < 0.02, "empirical mean {emp}");
    }

    #[test]
    fn exponential_zero_mean_is_zero() {
        let mut rng = validation_rng(1, 1);
        for _ in 0..10 {
            assert_eq!(exponential(&mut rng, 0.0), 0.0);
        }
    }

    #[test]
    fn gaussian_moments_converge() {
        let mut rng = validation_rng(1, 2);
        let n = 100_000;
        let (mean, std) = (2.0, 0.5);
        let draws: Vec<f64> = (0..n).map(|_| gaussian(&mut rng, mean, std)).collect();
        let emp_mean = draws.iter().sum::<f64>() / n as f64;
        let emp_var =
            draws.iter().map(|x| (x - emp_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((emp_mean - mean).abs() < 0.01);
        assert!((emp_var.sqrt() - std).abs() < 0.01);
    }

    #[test]
    fn truncated_gaussian_nonnegative() {
        let mut rng = validation_rng(1, 3);
        for _ in 0..1000 {
            assert!(gaussian_nonneg(&mut rng, 0.1, 0.5) >= 0.0);
        }
    }
}
