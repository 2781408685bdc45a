use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use tracing::debug;

use super::ProviderError;

/// Runs `op` until it succeeds, fails permanently, or `max_retries` retries
/// have been spent. Makes exactly `min(failures, max_retries) + 1` calls.
pub(crate) fn with_retry<T>(
    max_retries: u32,
    backoff_base: Duration,
    mut op: impl FnMut() -> Result<T, ProviderError>,
) -> Result<T, ProviderError> {
    let mut retries = 0;
    loop {
        match op() {
            Ok(v) => return Ok(v),
            Err(e) if e.is_transient() && retries < max_retries => {
                let delay = backoff_base.saturating_mul(1 << retries.min(16));
                debug!(retry = retries + 1, ?delay, error = %e, "retrying provider call");
                if !delay.is_zero() {
                    thread::sleep(delay);
                }
                retries += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Spaces call admissions at least `1 / rps` apart. Shared by all threads
/// using one provider.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(rps: Option<f64>) -> Self {
        let interval = rps.filter(|r| *r > 0.0).map(|r| Duration::from_secs_f64(1.0 / r));
        Self { interval, next_slot: Mutex::new(None) }
    }

    pub fn acquire(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let wait = {
            let mut next = self.next_slot.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permanent_errors_stop_immediately() {
        let mut calls = 0;
        let r: Result<(), _> = with_retry(5, Duration::ZERO, || {
            calls += 1;
            Err(ProviderError::Rejected("400".into()))
        });
        assert!(r.is_err());
        assert_eq!(calls, 1);
    }

    #[test]
    fn limiter_spaces_calls() {
        let limiter = RateLimiter::new(Some(100.0));
        let start = Instant::now();
        for _ in 0..5 {
            limiter.acquire();
        }
        // first call is free, four more spaced 10ms apart
        assert!(start.elapsed() >= Duration::from_millis(38));
    }

    #[test]
    fn unlimited_limiter_never_waits() {
        let limiter = RateLimiter::new(None);
        let start = Instant::now();
        for _ in 0..1000 {
            limiter.acquire();
        }
        assert!(start.elapsed() < Duration::from_millis(50));
    }
}
