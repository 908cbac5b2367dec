use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

/// Source of elapsed seconds for epoch timing and wall-clock budgets.
pub trait Clock: Send + Sync {
    fn now_seconds(&self) -> f64;
}

pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock { start: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_seconds(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Advances by a fixed amount on every reading, so timings are reproducible.
pub struct StepClock {
    step: f64,
    ticks: AtomicU64,
}

impl StepClock {
    pub fn new(step_seconds: f64) -> Self {
        StepClock {
            step: step_seconds,
            ticks: AtomicU64::new(0),
        }
    }
}

impl Clock for StepClock {
    fn now_seconds(&self) -> f64 {
        self.ticks.fetch_add(1, Ordering::SeqCst) as f64 * self.step
    }
}

/// Cooperative stop request, honoured at the next epoch boundary.
#[derive(Default)]
pub struct StopSignal {
    flag: AtomicBool,
    after_epochs: AtomicU64,
}

impl StopSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn request(&self) {
        self.flag.store(true, Ordering::SeqCst);
    }

    pub fn is_requested(&self) -> bool {
        self.flag.load(Ordering::SeqCst)
    }

    /// Requests a stop once `n` more epochs have completed.
    pub fn request_after(&self, n: u64) {
        self.after_epochs.store(n, Ordering::SeqCst);
    }

    /// Called by the trainer after every epoch.
    pub fn epoch_done(&self) {
        let left = self.after_epochs.load(Ordering::SeqCst);
        if left > 0 {
            self.after_epochs.store(left - 1, Ordering::SeqCst);
            if left == 1 {
                self.request();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_clock_is_reproducible() {
        let c = StepClock::new(1.5);
        assert_eq!(c.now_seconds(), 0.0);
        assert_eq!(c.now_seconds(), 1.5);
    }

    #[test]
    fn countdown_stop() {
        let s = StopSignal::new();
        s.request_after(2);
        s.epoch_done();
        assert!(!s.is_requested());
        s.epoch_done();
        assert!(s.is_requested());
    }
}
