//! Time sources. All timestamps are integer milliseconds since the Unix epoch.

use std::sync::atomic::{AtomicI64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

pub type EpochMillis = i64;

pub trait Clock: Send + Sync {
    fn now(&self) -> EpochMillis;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> EpochMillis {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as EpochMillis)
            .unwrap_or(0)
    }
}

/// Manually driven clock for deterministic runs.
#[derive(Debug, Default)]
pub struct VirtualClock(AtomicI64);

impl VirtualClock {
    pub fn new(start: EpochMillis) -> Self {
        Self(AtomicI64::new(start))
    }

    pub fn set(&self, t: EpochMillis) {
        self.0.store(t, Ordering::SeqCst);
    }

    pub fn advance(&self, delta: EpochMillis) -> EpochMillis {
        self.0.fetch_add(delta, Ordering::SeqCst) + delta
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> EpochMillis {
        self.0.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_moves_only_when_told() {
        let c = VirtualClock::new(100);
        assert_eq!(c.now(), 100);
        assert_eq!(c.advance(50), 150);
        c.set(7);
        assert_eq!(c.now(), 7);
    }
}
