use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::Clock;

/// Shared request-rate limiter.
///
/// Keeps the dispatch times of the last `limit` requests and blocks (on the
/// supplied clock) until the oldest one has left the window. Any half-open
/// window of length `window` therefore contains at most `limit` dispatches.
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    clock: Arc<dyn Clock>,
    dispatched: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn new(limit: u32, window: Duration, clock: Arc<dyn Clock>) -> Self {
        assert!(limit >= 1, "rate limit must be at least 1");
        Self {
            limit: limit as usize,
            window,
            clock,
            dispatched: Mutex::new(VecDeque::new()),
        }
    }

    pub fn per_minute(rpm: u32, clock: Arc<dyn Clock>) -> Self {
        Self::new(rpm, Duration::from_secs(60), clock)
    }

    /// Blocks until a request may be dispatched and records the dispatch.
    /// Returns the dispatch timestamp.
    pub fn acquire(&self) -> Duration {
        loop {
            let wait = {
                let mut log = self.dispatched.lock().unwrap();
                let now = self.clock.now();
                while log.front().is_some_and(|&t| t + self.window <= now) {
                    log.pop_front();
                }
                if log.len() < self.limit {
                    log.push_back(now);
                    return now;
                }
                *log.front().unwrap() + self.window - now
            };
            self.clock.sleep(wait);
        }
    }
}

impl std::fmt::Debug for RateLimiter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RateLimiter")
            .field("limit", &self.limit)
            .field("window", &self.window)
            .finish()
    }
}

/// Largest number of timestamps falling in any half-open window `[t, t + window)`.
pub fn max_in_any_window(times: &[Duration], window: Duration) -> usize {
    let mut sorted = times.to_vec();
    sorted.sort();
    let mut best = 0;
    let mut start = 0;
    for end in 0..sorted.len() {
        while sorted[end] >= sorted[start] + window {
            start += 1;
        }
        best = best.max(end - start + 1);
    }
    best
}
