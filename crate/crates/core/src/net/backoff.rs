use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exponential backoff with equal jitter: the n-th retry waits between half
/// and all of `min(max_delay, base * 2^(n-1))`.
///
/// The jitter stream comes from a seeded generator, so a fixed seed yields a
/// fixed schedule.
#[derive(Debug)]
pub struct Backoff {
    base: Duration,
    max_delay: Duration,
    rng: Mutex<ChaCha8Rng>,
}

impl Backoff {
    pub fn new(base: Duration, max_delay: Duration, seed: u64) -> Self {
        Self {
            base,
            max_delay,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let exp = retry.saturating_sub(1).min(30);
        let ceiling = self.base.saturating_mul(1u32 << exp).min(self.max_delay);
        let fraction: f64 = self.rng.lock().unwrap().random_range(0.5..=1.0);
        ceiling.mul_f64(fraction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_is_reproducible_for_a_seed() {
        let a = Backoff::new(Duration::from_millis(500), Duration::from_secs(30), 7);
        let b = Backoff::new(Duration::from_millis(500), Duration::from_secs(30), 7);
        let sa: Vec<_> = (1..=6).map(|n| a.delay(n)).collect();
        let sb: Vec<_> = (1..=6).map(|n| b.delay(n)).collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn delays_stay_within_jitter_band_and_cap() {
        let b = Backoff::new(Duration::from_millis(100), Duration::from_secs(1), 1);
        for n in 1..=10u32 {
            let ceiling =
                (Duration::from_millis(100) * 2u32.pow(n - 1)).min(Duration::from_secs(1));
            let d = b.delay(n);
            assert!(d <= ceiling && d >= ceiling / 2, "retry {n}: {d:?}");
        }
    }
}
