use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

/// Run clock. Real clocks measure milliseconds since run start; virtual
/// clocks only move when the supervisor advances them.
#[derive(Debug, Clone)]
pub enum Clock {
    Real { start: Instant, epoch_ms: i64 },
    Virtual(Arc<AtomicU64>),
}

impl Clock {
    pub fn real() -> Self {
        let epoch_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0);
        Clock::Real { start: Instant::now(), epoch_ms }
    }

    pub fn virtual_at(ms: u64) -> Self {
        Clock::Virtual(Arc::new(AtomicU64::new(ms)))
    }

    pub fn now_ms(&self) -> u64 {
        match self {
            Clock::Real { start, .. } => start.elapsed().as_millis() as u64,
            Clock::Virtual(t) => t.load(Ordering::Acquire),
        }
    }

    /// Timestamp for frames: epoch milliseconds on a real clock, clock time otherwise.
    pub fn wall_ms(&self) -> i64 {
        match self {
            Clock::Real { epoch_ms, .. } => epoch_ms + self.now_ms() as i64,
            Clock::Virtual(_) => self.now_ms() as i64,
        }
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self, Clock::Virtual(_))
    }

    /// Moves a virtual clock forward; never backwards. No-op on real clocks.
    pub fn advance_to(&self, ms: u64) {
        if let Clock::Virtual(t) = self {
            t.fetch_max(ms, Ordering::AcqRel);
        }
    }
}
