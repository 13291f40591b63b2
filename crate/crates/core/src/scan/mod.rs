//! Forward model of the acquisition chain, from the launched pulse to the
//! multiscaler histogram.

mod fiber;
mod histogram;
mod instrument;
mod schedule;
mod simulate;

pub use fiber::{FiberProfile, FiberSegment};
pub use histogram::{CountSource, ExpectedHistogram, HistogramMeta, ScanHistogram};
pub use instrument::{InstrumentConfig, Sideband};
pub use schedule::{ScanSchedule, ScheduleConfig};
pub use simulate::{
    expected_histogram, expected_rate, simulate_histogram, simulate_histogram_with, Execution, SignalModel,
};

/// Round-trip time of flight (ns) to distance along the fiber (m).
pub fn time_to_range(t_ns: f64, group_velocity_m_per_s: f64) -> f64 {
    group_velocity_m_per_s * t_ns / 2e9
}

/// Longest unambiguous range for a pulse train at `rep_rate_khz`.
pub fn unambiguous_range(rep_rate_khz: f64, group_velocity_m_per_s: f64) -> f64 {
    group_velocity_m_per_s / (2.0 * rep_rate_khz * 1e3)
}

/// Non-paralyzable dead-time censoring of a detection rate (counts/s).
pub fn apply_dead_time(rate: f64, dead_time_s: f64) -> f64 {
    rate / (1.0 + rate * dead_time_s)
}

/// Inverse of [`apply_dead_time`]. Observed rates at or beyond saturation
/// have no finite preimage and yield `None`.
pub fn correct_dead_time(observed: f64, dead_time_s: f64) -> Option<f64> {
    let loss = 1.0 - observed * dead_time_s;
    (loss > 0.0).then(|| observed / loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranging() {
        assert_eq!(time_to_range(0.0, 2.0e8), 0.0);
        assert!((time_to_range(30_000.0, 2.0e8) - 3000.0).abs() < 1e-9);
        assert!((unambiguous_range(8.0, 2.0e8) - 12_500.0).abs() < 1e-9);
    }

    #[test]
    fn dead_time_limits() {
        let tau = 23e-9;
        assert_eq!(apply_dead_time(0.0, tau), 0.0);
        let r = 1.0 / tau;
        assert_eq!(apply_dead_time(r, tau), r / 2.0);
        let saturated = apply_dead_time(1e15, tau);
        assert!((saturated - 1.0 / tau).abs() / (1.0 / tau) < 1e-6);
        assert!((1.0 / tau - 43.478e6).abs() < 1e3);
    }

    proptest! {
        #[test]
        fn censored_rate_stays_below_saturation(r in 0.0f64..1e12) {
            let tau = 23e-9;
            let c = apply_dead_time(r, tau);
            prop_assert!(c < 1.0 / tau);
            prop_assert!(c <= r);
            let back = correct_dead_time(c, tau).unwrap();
            prop_assert!((back - r).abs() <= 1e-6 * r.max(1.0));
        }
    }
}
