//! Retry with exponential backoff, a global in-flight cap, and a token-bucket
//! rate limiter, layered over any [`Transport`].

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;
use tracing::warn;

use super::{classify, GatewayError, Transport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt; total attempts is `max_retries + 1`.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            ..Default::default()
        }
    }

    /// Wait before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = self.multiplier.powi(retry.saturating_sub(1) as i32);
        let secs = self.initial_backoff.as_secs_f64() * factor;
        Duration::from_secs_f64(secs.min(self.max_backoff.as_secs_f64()))
    }
}

/// Counting semaphore that also records the peak number of holders.
#[derive(Debug)]
pub struct Semaphore {
    capacity: usize,
    state: Mutex<(usize, usize)>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(capacity: usize) -> Self {
        Semaphore {
            capacity: capacity.max(1),
            state: Mutex::new((0, 0)),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().unwrap();
        while st.0 >= self.capacity {
            st = self.freed.wait(st).unwrap();
        }
        st.0 += 1;
        st.1 = st.1.max(st.0);
        Permit(self)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap().0
    }

    /// Highest number of simultaneous holders observed so far.
    pub fn peak(&self) -> usize {
        self.state.lock().unwrap().1
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.0.state.lock().unwrap();
        st.0 -= 1;
        self.0.freed.notify_one();
    }
}

/// Token bucket: `per_second` tokens refill continuously up to `burst`.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(per_second: f64, burst: u32) -> Self {
        let burst = f64::from(burst.max(1));
        RateLimiter {
            per_second,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().unwrap();
                let now = Instant::now();
                let refill = now.duration_since(st.1).as_secs_f64() * self.per_second;
                st.0 = (st.0 + refill).min(self.burst);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.0) / self.per_second)
            };
            thread::sleep(wait);
        }
    }
}

/// A transport wrapped with retry, concurrency and rate policies.
#[derive(Clone)]
pub struct Guarded {
    inner: Arc<dyn Transport>,
    retry: RetryPolicy,
    in_flight: Arc<Semaphore>,
    rate: Option<Arc<RateLimiter>>,
}

impl Guarded {
    pub fn new(inner: Arc<dyn Transport>, retry: RetryPolicy, in_flight: Arc<Semaphore>) -> Self {
        Guarded {
            inner,
            retry,
            in_flight,
            rate: None,
        }
    }

    pub fn with_rate_limit(mut self, rate: Arc<RateLimiter>) -> Self {
        self.rate = Some(rate);
        self
    }

    /// Unguarded passthrough: one attempt, no shared limits.
    pub fn direct(inner: Arc<dyn Transport>) -> Self {
        Guarded::new(
            inner,
            RetryPolicy::none(),
            Arc::new(Semaphore::new(usize::MAX)),
        )
    }

    pub fn send(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            if let Some(rate) = &self.rate {
                rate.acquire();
            }
            let result = {
                let _permit = self.in_flight.acquire();
                self.inner.post_json(path, body)
            };
            match result {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempts <= self.retry.max_retries => {
                    let wait = self.retry.backoff(attempts);
                    warn!(path, attempt = attempts, error = %e, wait_ms = wait.as_millis() as u64, "retrying request");
                    thread::sleep(wait);
                }
                Err(e) => return Err(classify(e, attempts)),
            }
        }
    }
}
