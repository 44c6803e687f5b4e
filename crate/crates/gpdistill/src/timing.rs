//! Monotonic-clock timing helpers. Prediction timing runs single-threaded
//! so per-point figures are meaningful; assertions on them should stay
//! ordinal.

use std::time::Instant;

/// Median per-point time of `reps` timed passes of `pass` (which must
/// process `points` queries). One untimed warm-up pass runs first.
pub fn median_per_point_time<F: FnMut()>(points: usize, reps: usize, mut pass: F) -> f64 {
    assert!(points > 0 && reps > 0);
    pass(); // warm-up
    let mut samples: Vec<f64> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            pass();
            start.elapsed().as_secs_f64() / points as f64
        })
        .collect();
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples[samples.len() / 2]
}
