//! Ground-truth room signals: temperature, humidity and pollutant level.
//!
//! Temperature follows a 24 h sinusoid peaking at 15:00, humidity moves
//! against it, and scheduled activity events (cooking) add fixed boosts
//! while active. Gaussian noise comes from a caller-owned stream.

use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::rng::gaussian;
use crate::time::{SimTime, MS_PER_DAY, MS_PER_HOUR};
use crate::RoomId;

/// Time of day at which the diurnal temperature term peaks.
pub const DIURNAL_PEAK_HOUR: u64 = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomProfile {
    pub id: RoomId,
    pub base_temp: f64,
    pub temp_diurnal_amplitude: f64,
    pub base_humidity: f64,
    /// Amplitude of the humidity term, which runs opposite to temperature.
    #[serde(default)]
    pub humidity_diurnal_amplitude: f64,
    pub base_gas: f64,
    #[serde(default)]
    pub noise_sigma_temp: f64,
    #[serde(default)]
    pub noise_sigma_gas: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recurrence {
    Daily,
    /// A single occurrence on the given zero-based simulation day.
    Once(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityEvent {
    pub room: RoomId,
    /// Window start, ms since midnight (inclusive).
    pub start: u64,
    /// Window end, ms since midnight (exclusive).
    pub end: u64,
    pub temp_boost: f64,
    pub gas_boost: f64,
    pub recurrence: Recurrence,
}

impl ActivityEvent {
    pub fn daily(room: &str, start_hour: u64, end_hour: u64, temp_boost: f64, gas_boost: f64) -> Self {
        ActivityEvent {
            room: room.to_string(),
            start: start_hour * MS_PER_HOUR,
            end: end_hour * MS_PER_HOUR,
            temp_boost,
            gas_boost,
            recurrence: Recurrence::Daily,
        }
    }

    pub fn is_active(&self, t: SimTime) -> bool {
        if let Recurrence::Once(day) = self.recurrence {
            if t.day() != day {
                return false;
            }
        }
        let tod = t.time_of_day();
        self.start <= tod && tod < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvReading {
    pub t: SimTime,
    pub temp: f64,
    pub humidity: f64,
    pub gas: f64,
}

/// Events whose window contains `t` (start inclusive, end exclusive).
pub fn active_events(events: &[ActivityEvent], t: SimTime) -> Vec<&ActivityEvent> {
    events.iter().filter(|e| e.is_active(t)).collect()
}

/// Unit diurnal shape: `sin` over a 24 h period, +1 at 15:00, 0 at 09:00 and 21:00.
pub fn diurnal_shape(t: SimTime) -> f64 {
    let offset = (t.time_of_day() + MS_PER_DAY - (DIURNAL_PEAK_HOUR - 6) * MS_PER_HOUR) % MS_PER_DAY;
    libm::sin(2.0 * std::f64::consts::PI * offset as f64 / MS_PER_DAY as f64)
}

/// Samples the room's ground truth at `t`.
///
/// Consumes exactly two normal draws from `rng` (temperature then gas)
/// regardless of the noise sigmas.
pub fn sample_environment<R: RngCore + ?Sized>(
    profile: &RoomProfile,
    events: &[ActivityEvent],
    t: SimTime,
    rng: &mut R,
) -> EnvReading {
    let shape = diurnal_shape(t);
    let mut temp = profile.base_temp + profile.temp_diurnal_amplitude * shape;
    let mut gas = profile.base_gas;
    for event in events.iter().filter(|e| e.room == profile.id && e.is_active(t)) {
        temp += event.temp_boost;
        gas += event.gas_boost;
    }
    temp += gaussian(rng, profile.noise_sigma_temp);
    gas += gaussian(rng, profile.noise_sigma_gas);

    let humidity = profile.base_humidity - profile.humidity_diurnal_amplitude * shape;
    EnvReading {
        t,
        temp,
        humidity: humidity.clamp(0.0, 100.0),
        gas: gas.max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_stream;
    use proptest::prelude::*;

    fn kitchen() -> RoomProfile {
        RoomProfile {
            id: "kitchen".into(),
            base_temp: 22.0,
            temp_diurnal_amplitude: 2.0,
            base_humidity: 45.0,
            humidity_diurnal_amplitude: 3.0,
            base_gas: 110.0,
            noise_sigma_temp: 0.0,
            noise_sigma_gas: 0.0,
        }
    }

    fn bedroom() -> RoomProfile {
        RoomProfile { id: "bedroom".into(), base_temp: 20.0, base_gas: 100.0, ..kitchen() }
    }

    fn cooking() -> ActivityEvent {
        ActivityEvent::daily("kitchen", 13, 18, 6.0, 250.0)
    }

    #[test]
    fn cooking_boost_at_three_pm() {
        let t = SimTime::from_hms(15, 0, 0);
        let mut rng = seed_stream(1, "env", "kitchen");
        let r = sample_environment(&kitchen(), &[cooking()], t, &mut rng);
        assert_eq!(r.temp, 22.0 + 2.0 * diurnal_shape(t) + 6.0);
        assert_eq!(r.temp, 30.0);
        assert_eq!(r.gas, 110.0 + 250.0);
    }

    #[test]
    fn baseline_at_zero_crossing() {
        let t = SimTime::from_hms(9, 0, 0);
        let mut rng = seed_stream(1, "env", "bedroom");
        let r = sample_environment(&bedroom(), &[], t, &mut rng);
        assert_eq!(r.temp, 20.0);
    }

    #[test]
    fn event_inactive_outside_window() {
        let t = SimTime::from_hms(3, 0, 0);
        let mut rng = seed_stream(1, "env", "kitchen");
        let r = sample_environment(&kitchen(), &[cooking()], t, &mut rng);
        assert_eq!(r.gas, 110.0);
    }

    #[test]
    fn window_boundaries() {
        let ev = [cooking()];
        assert_eq!(active_events(&ev, SimTime::from_hms(13, 0, 0)).len(), 1);
        assert!(active_events(&ev, SimTime::from_hms(18, 0, 0)).is_empty());
        assert!(active_events(&[], SimTime::from_hms(14, 0, 0)).is_empty());
    }

    #[test]
    fn once_event_only_on_its_day() {
        let mut ev = cooking();
        ev.recurrence = Recurrence::Once(2);
        let day = |d: u64| SimTime(d * MS_PER_DAY) + crate::time::SimDuration::from_secs(14 * 3600);
        assert!(!ev.is_active(day(1)));
        assert!(ev.is_active(day(2)));
        assert!(!ev.is_active(day(3)));
    }

    #[test]
    fn events_for_other_rooms_are_ignored() {
        let t = SimTime::from_hms(15, 0, 0);
        let mut rng = seed_stream(1, "env", "bedroom");
        let r = sample_environment(&bedroom(), &[cooking()], t, &mut rng);
        assert_eq!(r.gas, 100.0);
    }

    #[test]
    fn noise_is_deterministic_per_stream() {
        let mut room = kitchen();
        room.noise_sigma_temp = 0.5;
        room.noise_sigma_gas = 10.0;
        let t = SimTime::from_hms(11, 30, 0);
        let a = sample_environment(&room, &[cooking()], t, &mut seed_stream(9, "env", "kitchen"));
        let b = sample_environment(&room, &[cooking()], t, &mut seed_stream(9, "env", "kitchen"));
        assert_eq!(a, b);
        assert_ne!(a.temp, 22.0 + 2.0 * diurnal_shape(t));
    }

    proptest! {
        #[test]
        fn noise_free_temp_is_daily_periodic(ms in 0u64..MS_PER_DAY, days in 1u64..60) {
            let mut rng = seed_stream(0, "env", "bedroom");
            let a = sample_environment(&bedroom(), &[], SimTime(ms), &mut rng);
            let b = sample_environment(&bedroom(), &[], SimTime(ms + days * MS_PER_DAY), &mut rng);
            prop_assert_eq!(a.temp, b.temp);
            prop_assert_eq!(a.humidity, b.humidity);
        }

        #[test]
        fn event_superposition_is_exact(ms in (13 * MS_PER_HOUR)..(18 * MS_PER_HOUR)) {
            let t = SimTime(ms);
            let mut rng = seed_stream(0, "env", "kitchen");
            let with = sample_environment(&kitchen(), &[cooking()], t, &mut rng);
            let without = sample_environment(&kitchen(), &[], t, &mut rng);
            // Boosts are added before noise and clamping; with zero noise the
            // difference reproduces them up to one rounding of the sum.
            prop_assert!((with.temp - without.temp - 6.0).abs() <= 1e-12);
            prop_assert_eq!(with.gas - without.gas, 250.0);
        }

        #[test]
        fn humidity_stays_in_range(
            base in -50.0f64..150.0,
            amp in 0.0f64..200.0,
            ms in 0u64..(3 * MS_PER_DAY),
        ) {
            let room = RoomProfile { base_humidity: base, humidity_diurnal_amplitude: amp, ..kitchen() };
            let r = sample_environment(&room, &[], SimTime(ms), &mut seed_stream(0, "env", "k"));
            prop_assert!((0.0..=100.0).contains(&r.humidity));
        }
    }
}
