//! Process-wide request throttling: a sliding-window requests-per-minute
//! limit plus a cap on concurrent in-flight requests.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use super::{GenerationParams, LlmClient, LlmError};

const WINDOW: Duration = Duration::from_secs(60);

pub trait Clock: Send + Sync {
    /// Time elapsed since the clock's origin.
    fn now(&self) -> Duration;
    fn sleep_until(&self, deadline: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep_until(&self, deadline: Duration) {
        let now = self.now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
    }
}

/// Virtual clock for simulations: sleeping jumps time forward instantly.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
}

impl ManualClock {
    pub fn advance(&self, by: Duration) {
        *self.now.lock().unwrap() += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep_until(&self, deadline: Duration) {
        let mut now = self.now.lock().unwrap();
        if deadline > *now {
            *now = deadline;
        }
    }
}

struct State {
    in_flight: usize,
    admitted: VecDeque<Duration>,
}

pub struct Throttle {
    rpm: usize,
    max_in_flight: usize,
    clock: Arc<dyn Clock>,
    state: Mutex<State>,
    released: Condvar,
}

impl std::fmt::Debug for Throttle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Throttle")
            .field("rpm", &self.rpm)
            .field("max_in_flight", &self.max_in_flight)
            .finish_non_exhaustive()
    }
}

/// Held for the duration of one request; dropping it frees an in-flight slot.
pub struct Permit<'a> {
    throttle: &'a Throttle,
    admitted_at: Duration,
}

impl Permit<'_> {
    pub fn admitted_at(&self) -> Duration {
        self.admitted_at
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.throttle.state.lock().unwrap();
        st.in_flight -= 1;
        drop(st);
        self.throttle.released.notify_one();
    }
}

impl Throttle {
    pub fn new(rpm: usize, max_in_flight: usize) -> Self {
        Self::with_clock(rpm, max_in_flight, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(rpm: usize, max_in_flight: usize, clock: Arc<dyn Clock>) -> Self {
        assert!(rpm >= 1 && max_in_flight >= 1, "limits must be positive");
        Self {
            rpm,
            max_in_flight,
            clock,
            state: Mutex::new(State {
                in_flight: 0,
                admitted: VecDeque::with_capacity(rpm),
            }),
            released: Condvar::new(),
        }
    }

    pub fn rpm(&self) -> usize {
        self.rpm
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    /// Blocks until both an in-flight slot is free and fewer than `rpm`
    /// requests were admitted in the trailing 60 seconds.
    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().unwrap();
        while st.in_flight >= self.max_in_flight {
            st = self.released.wait(st).unwrap();
        }
        st.in_flight += 1;
        loop {
            let now = self.clock.now();
            while st
                .admitted
                .front()
                .is_some_and(|&t| now.saturating_sub(t) >= WINDOW)
            {
                st.admitted.pop_front();
            }
            if st.admitted.len() < self.rpm {
                st.admitted.push_back(now);
                return Permit {
                    throttle: self,
                    admitted_at: now,
                };
            }
            let deadline = st.admitted[0] + WINDOW;
            drop(st);
            self.clock.sleep_until(deadline);
            st = self.state.lock().unwrap();
        }
    }
}

/// Wraps a client so every request goes through a shared [`Throttle`].
pub struct Throttled<C> {
    inner: C,
    throttle: Arc<Throttle>,
}

impl<C> Throttled<C> {
    pub fn new(inner: C, throttle: Arc<Throttle>) -> Self {
        Self { inner, throttle }
    }
}

impl<C: LlmClient> LlmClient for Throttled<C> {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, LlmError> {
        let _permit = self.throttle.acquire();
        self.inner.complete(prompt, params)
    }

    fn model(&self) -> &str {
        self.inner.model()
    }
}
