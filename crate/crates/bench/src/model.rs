//! Analytic orchestration-overhead model.
//!
//! For `c_ta` independent-per-series tasks sharing `serial_time` of work on
//! `c_th` threads, the ideal (overhead-free) time is
//! `serial_time / c_ta * ceil(c_ta / c_th)`. Anything measured above that is
//! orchestration overhead.

use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("task count must be at least 1")]
    NoTasks,
    #[error("thread count must be at least 1")]
    NoThreads,
    #[error("serial time must be positive")]
    NoWork,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OverheadModel {
    serial_time: Duration,
    c_ta: u64,
    c_th: u64,
}

impl OverheadModel {
    pub fn new(serial_time: Duration, c_ta: u64, c_th: u64) -> Result<Self, ModelError> {
        if c_ta == 0 {
            return Err(ModelError::NoTasks);
        }
        if c_th == 0 {
            return Err(ModelError::NoThreads);
        }
        if serial_time.is_zero() {
            return Err(ModelError::NoWork);
        }
        Ok(Self {
            serial_time,
            c_ta,
            c_th,
        })
    }

    pub fn serial_time(&self) -> Duration {
        self.serial_time
    }

    pub fn tasks(&self) -> u64 {
        self.c_ta
    }

    pub fn threads(&self) -> u64 {
        self.c_th
    }

    /// Number of task rounds: `ceil(c_ta / c_th)`, i.e. `d + (r > 0)` with
    /// `c_ta = d * c_th + r`.
    pub fn rounds(&self) -> u64 {
        self.c_ta / self.c_th + u64::from(!self.c_ta.is_multiple_of(self.c_th))
    }

    /// Exact ideal time as the fraction `numer / denom` nanoseconds.
    pub fn computation_fraction(&self) -> (u128, u128) {
        (
            self.serial_time.as_nanos() * u128::from(self.rounds()),
            u128::from(self.c_ta),
        )
    }

    /// Per-task share of the serial time, truncated to whole nanoseconds.
    pub fn time_fn(&self) -> Duration {
        nanos(self.serial_time.as_nanos() / u128::from(self.c_ta))
    }

    /// Ideal time, truncated to whole nanoseconds.
    pub fn computation(&self) -> Duration {
        let (n, d) = self.computation_fraction();
        nanos(n / d)
    }

    /// `measured - computation` in nanoseconds; negative when the
    /// measurement beat the model.
    pub fn overhead_ns(&self, measured: Duration) -> i128 {
        measured.as_nanos() as i128 - self.computation().as_nanos() as i128
    }
}

fn nanos(n: u128) -> Duration {
    Duration::new((n / 1_000_000_000) as u64, (n % 1_000_000_000) as u32)
}

/// Signed nanoseconds rendered as milliseconds.
pub fn ns_to_ms(ns: i128) -> f64 {
    ns as f64 / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: u64) -> Duration {
        Duration::from_millis(v)
    }

    #[test]
    fn direct_evaluation() {
        let m = OverheadModel::new(ms(1000), 10, 4).unwrap();
        assert_eq!(m.time_fn(), ms(100));
        assert_eq!(m.rounds(), 3);
        assert_eq!(m.computation(), ms(300));
    }

    #[test]
    fn fewer_tasks_than_threads_is_one_round() {
        for c_ta in 1..=8 {
            let m = OverheadModel::new(ms(800), c_ta, 8).unwrap();
            assert_eq!(m.computation(), m.time_fn());
        }
    }

    #[test]
    fn exact_multiple_has_no_extra_round() {
        let m = OverheadModel::new(ms(1200), 12, 4).unwrap();
        assert_eq!(m.rounds(), 3);
        assert_eq!(m.computation(), ms(300));
    }

    #[test]
    fn overhead_sign() {
        let m = OverheadModel::new(ms(1000), 10, 4).unwrap();
        assert_eq!(m.overhead_ns(ms(300)), 0);
        assert_eq!(m.overhead_ns(ms(250)), -50_000_000);
        let reference = OverheadModel::new(Duration::from_nanos(1), 100_000, 48).unwrap();
        assert_eq!(
            ns_to_ms(reference.overhead_ns(Duration::from_micros(466_200))),
            466.2
        );
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(OverheadModel::new(ms(1), 0, 1), Err(ModelError::NoTasks));
        assert_eq!(OverheadModel::new(ms(1), 1, 0), Err(ModelError::NoThreads));
        assert_eq!(
            OverheadModel::new(Duration::ZERO, 1, 1),
            Err(ModelError::NoWork)
        );
    }

    mod oracle {
        use super::*;
        use num_rational::Ratio;
        use proptest::prelude::*;

        /// Time_fn * ceil(c_ta / c_th) in exact rational nanoseconds.
        fn reference(serial_ns: u64, c_ta: u64, c_th: u64) -> Ratio<u128> {
            let time_fn = Ratio::new(u128::from(serial_ns), u128::from(c_ta));
            time_fn * Ratio::new(u128::from(c_ta), u128::from(c_th)).ceil()
        }

        fn check(serial_ns: u64, c_ta: u64, c_th: u64) {
            let m = OverheadModel::new(Duration::from_nanos(serial_ns), c_ta, c_th).unwrap();
            let exact = reference(serial_ns, c_ta, c_th);
            let (n, d) = m.computation_fraction();
            assert_eq!(Ratio::new(n, d), exact, "({serial_ns}, {c_ta}, {c_th})");
            let floor = exact.floor().to_integer();
            assert_eq!(m.computation().as_nanos(), floor);
            let measured = Duration::from_nanos(serial_ns / 3 + 17);
            assert_eq!(
                m.overhead_ns(measured),
                measured.as_nanos() as i128 - floor as i128
            );
        }

        #[test]
        fn grid_matches_rational_reference() {
            let serials = [1u64, 7, 1000, 999_999_937, 1_000_000_000_000];
            let tasks = (1..=50).chain([97, 100, 1000, 4800, 100_000]);
            let threads = [1u64, 2, 3, 4, 7, 8, 48];
            for c_ta in tasks {
                for &c_th in &threads {
                    for &s in &serials {
                        check(s, c_ta, c_th);
                    }
                }
            }
        }

        #[test]
        fn limit_approaches_serial_over_threads() {
            for c_th in [1u64, 2, 4, 8, 48] {
                let serial = Duration::from_millis(1000);
                let m = OverheadModel::new(serial, 100 * c_th, c_th).unwrap();
                let ideal = serial.as_nanos() as f64 / c_th as f64;
                let rel = (m.computation().as_nanos() as f64 - ideal).abs() / ideal;
                assert!(rel <= 0.01, "c_th={c_th}: {rel}");
            }
        }

        proptest! {
            #[test]
            fn random_inputs(serial in 1u64..10_000_000_000_000, c_ta in 1u64..1_000_000, c_th in 1u64..512) {
                check(serial, c_ta, c_th);
                let m = OverheadModel::new(Duration::from_nanos(serial), c_ta, c_th).unwrap();
                if c_ta <= c_th {
                    prop_assert_eq!(m.computation(), m.time_fn());
                }
                let (d, r) = (c_ta / c_th, c_ta % c_th);
                prop_assert_eq!(m.rounds(), d + u64::from(r > 0));
            }
        }
    }
}
