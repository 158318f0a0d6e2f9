use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Token bucket refilled at `per_minute / 60` tokens per second, holding at
/// most `burst` tokens. Shared by all callers of one gateway.
pub struct TokenBucket {
    rate_per_sec: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(per_minute: u32, burst: u32) -> Self {
        let burst = f64::from(burst.max(1));
        TokenBucket {
            rate_per_sec: f64::from(per_minute.max(1)) / 60.0,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    /// Takes one token, returning how long the caller has to wait first.
    /// Reserving ahead keeps concurrent callers spaced out.
    pub fn reserve(&self) -> Duration {
        let mut state = self.state.lock().expect("rate limiter lock");
        let now = Instant::now();
        let (tokens, last) = *state;
        let tokens = (tokens + now.saturating_duration_since(last).as_secs_f64() * self.rate_per_sec)
            .min(self.burst)
            - 1.0;
        *state = (tokens, now);
        if tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-tokens / self.rate_per_sec)
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        let wait = self.reserve();
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}
