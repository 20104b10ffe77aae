//! Calibrated synthetic work.
//!
//! One unit of work is one iteration of a dependent integer
//! multiply-add chain. The chain defeats vectorization, so the cost per
//! iteration is stable enough to express task granularity portably.

use std::hint::black_box;
use std::time::{Duration, Instant};

#[inline(never)]
pub fn spin(iters: u64) -> u64 {
    let mut x: u64 = 0x2545_f491_4f6c_dd1d;
    for i in 0..iters {
        x = x.wrapping_mul(0x5851_f42d_4c95_7f2d).wrapping_add(i | 1);
        x ^= x >> 29;
    }
    black_box(x)
}

/// Measured cost of [`spin`].
#[derive(Clone, Copy, Debug)]
pub struct Calibration {
    pub ns_per_iter: f64,
}

impl Calibration {
    /// Times `probe` iterations a few times and keeps the fastest.
    pub fn measure(probe: u64) -> Self {
        spin(probe / 4);
        let best = (0..5)
            .map(|_| {
                let t = Instant::now();
                spin(probe);
                t.elapsed()
            })
            .min()
            .unwrap_or_default();
        Self {
            ns_per_iter: best.as_nanos() as f64 / probe.max(1) as f64,
        }
    }

    pub fn estimate(&self, iters: u64) -> Duration {
        Duration::from_nanos((self.ns_per_iter * iters as f64) as u64)
    }

    /// Iterations that take roughly `target`.
    pub fn iters_for(&self, target: Duration) -> u64 {
        (target.as_nanos() as f64 / self.ns_per_iter.max(1e-3)) as u64
    }
}
