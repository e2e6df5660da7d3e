//! Simulated time in integer millisecond ticks.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

pub const MS_PER_SECOND: u64 = 1_000;
pub const MS_PER_HOUR: u64 = 3_600 * MS_PER_SECOND;
pub const MS_PER_DAY: u64 = 24 * MS_PER_HOUR;

/// Instant on the simulation clock, in ms since the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

/// Non-negative span of simulated time, in ms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimDuration(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(secs: u64) -> Self {
        SimTime(secs * MS_PER_SECOND)
    }

    pub fn from_hms(h: u64, m: u64, s: u64) -> Self {
        SimTime::from_secs(h * 3_600 + m * 60 + s)
    }

    pub fn as_millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MS_PER_SECOND as f64
    }

    /// Zero-based simulation day.
    pub fn day(self) -> u64 {
        self.0 / MS_PER_DAY
    }

    /// Milliseconds elapsed since the start of the current day.
    pub fn time_of_day(self) -> u64 {
        self.0 % MS_PER_DAY
    }

    /// Hour of the day, 0..24.
    pub fn hour(self) -> u64 {
        self.time_of_day() / MS_PER_HOUR
    }

    pub fn saturating_since(self, earlier: SimTime) -> SimDuration {
        SimDuration(self.0.saturating_sub(earlier.0))
    }
}

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub fn from_secs(secs: u64) -> Self {
        SimDuration(secs * MS_PER_SECOND)
    }

    pub fn from_millis(ms: u64) -> Self {
        SimDuration(ms)
    }

    /// Rounds a second count to the nearest millisecond tick.
    pub fn from_secs_f64(secs: f64) -> Self {
        SimDuration((secs * MS_PER_SECOND as f64).round() as u64)
    }

    pub fn as_millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MS_PER_SECOND as f64
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign<SimDuration> for SimTime {
    fn add_assign(&mut self, rhs: SimDuration) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimDuration;
    fn sub(self, rhs: SimTime) -> SimDuration {
        SimDuration(self.0 - rhs.0)
    }
}

impl Add for SimDuration {
    type Output = SimDuration;
    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0 + rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tod = self.time_of_day();
        write!(
            f,
            "d{}+{:02}:{:02}:{:02}.{:03}",
            self.day(),
            tod / MS_PER_HOUR,
            (tod / 60_000) % 60,
            (tod / 1_000) % 60,
            tod % 1_000
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn day_and_hour_split() {
        let t = SimTime(2 * MS_PER_DAY) + SimDuration::from_secs(15 * 3600 + 59);
        assert_eq!(t.day(), 2);
        assert_eq!(t.hour(), 15);
        assert_eq!(t.to_string(), "d2+15:00:59.000");
    }

    #[test]
    fn fractional_seconds_round_to_ticks() {
        assert_eq!(SimDuration::from_secs_f64(0.05).as_millis(), 50);
        assert_eq!(SimDuration::from_secs_f64(2.0).as_millis(), 2000);
    }
}
