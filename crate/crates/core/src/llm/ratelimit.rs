use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

/// Token bucket shared by all workers of a client.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: f64,
    capacity: f64,
    state: Mutex<Bucket>,
}

#[derive(Debug)]
struct Bucket {
    tokens: f64,
    last: Instant,
}

impl RateLimiter {
    /// `requests_per_minute` must be positive; `burst` is the bucket size.
    pub fn new(requests_per_minute: f64, burst: u32) -> Self {
        assert!(requests_per_minute > 0.0, "rate must be positive");
        let capacity = f64::from(burst.max(1));
        Self {
            per_second: requests_per_minute / 60.0,
            capacity,
            state: Mutex::new(Bucket {
                tokens: capacity,
                last: Instant::now(),
            }),
        }
    }

    /// Takes a token if one is available at `now`, otherwise returns how long
    /// to wait before retrying.
    pub fn try_acquire_at(&self, now: Instant) -> Result<(), Duration> {
        let mut b = self.state.lock().expect("rate limiter lock");
        let elapsed = now.saturating_duration_since(b.last).as_secs_f64();
        b.tokens = (b.tokens + elapsed * self.per_second).min(self.capacity);
        b.last = b.last.max(now);
        if b.tokens >= 1.0 {
            b.tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - b.tokens) / self.per_second))
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire_at(Instant::now()) {
            thread::sleep(wait);
        }
    }
}
