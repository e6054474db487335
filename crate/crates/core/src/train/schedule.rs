//! Coefficient ramps as functions of training progress p ∈ [0, 1].

use super::config::ScheduleKind;

/// scale · (2 / (1 + e^{−γp}) − 1).
pub fn dann_schedule(p: f64, gamma: f64, scale: f64) -> f64 {
    scale * (2.0 / (1.0 + (-gamma * p).exp()) - 1.0)
}

/// Linear ramp to `scale` over the first `warmup` fraction, then flat.
pub fn linear_warmup(p: f64, warmup: f64, scale: f64) -> f64 {
    scale * (p / warmup).min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub gamma: f64,
    pub warmup: f64,
}

impl Schedule {
    pub fn value(&self, p: f64, scale: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self.kind {
            ScheduleKind::Constant => scale,
            ScheduleKind::DannAdaptive => dann_schedule(p, self.gamma, scale),
            ScheduleKind::LinearWarmup => linear_warmup(p, self.warmup, scale),
        }
    }
}

/// Progress of step `step` (0-based) in a run of `steps` steps.
pub fn progress(step: usize, steps: usize) -> f64 {
    if steps <= 1 {
        1.0
    } else {
        step as f64 / (steps - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dann_fixtures() {
        assert_eq!(dann_schedule(0.0, 10.0, 0.1), 0.0);
        let expect = 0.1 * (2.0 / (1.0 + (-10.0f64).exp()) - 1.0);
        assert!((dann_schedule(1.0, 10.0, 0.1) - expect).abs() < 1e-15);
        assert!((dann_schedule(1.0, 10.0, 0.1) - 0.0999909).abs() < 1e-7);
        assert!(dann_schedule(0.5, 10.0, 0.1) < dann_schedule(1.0, 10.0, 0.1));
    }

    proptest! {
        #[test]
        fn schedules_are_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, scale in 0.0f64..2.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for kind in [ScheduleKind::Constant, ScheduleKind::DannAdaptive, ScheduleKind::LinearWarmup] {
                let s = Schedule { kind, gamma: 10.0, warmup: 0.3 };
                prop_assert!(s.value(lo, scale) <= s.value(hi, scale));
            }
            let c = Schedule { kind: ScheduleKind::Constant, gamma: 10.0, warmup: 0.3 };
            prop_assert_eq!(c.value(a, scale), scale);
        }
    }
}
