//! Ramp functions `s(t)` on `[0, T]` with closed-form derivatives.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, CdResult};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// `sin²(πt/2T)`
    Sin2,
    /// `sin²[(π/2)·sin²(πt/2T)]`
    Sin2Sin2,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub kind: ScheduleKind,
    pub total_time: f64,
}

impl SchedulePlan {
    pub fn new(kind: ScheduleKind, total_time: f64) -> CdResult<Self> {
        if !(total_time > 0.0) || !total_time.is_finite() {
            return domain(format!("total time must be positive, got {total_time}"));
        }
        Ok(Self { kind, total_time })
    }

    /// `(s(t), ṡ(t))` with the derivative taken analytically.
    pub fn eval(&self, t: f64) -> CdResult<(f64, f64)> {
        let big_t = self.total_time;
        let slack = 1e-12 * big_t;
        if !(t >= -slack && t <= big_t + slack) {
            return domain(format!("time {t} outside [0, {big_t}]"));
        }
        let t = t.clamp(0.0, big_t);
        if t == big_t {
            // exact endpoint values; sin(π) is not exactly zero in floating point
            return Ok((1.0, 0.0));
        }
        let u = PI * t / (2.0 * big_t);
        let du = PI / (2.0 * big_t);
        let inner = u.sin().powi(2);
        let d_inner = (2.0 * u).sin() * du;
        Ok(match self.kind {
            ScheduleKind::Sin2 => (inner, d_inner),
            ScheduleKind::Sin2Sin2 => {
                let v = 0.5 * PI * inner;
                (v.sin().powi(2), (2.0 * v).sin() * 0.5 * PI * d_inner)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn endpoints() {
        for kind in [ScheduleKind::Sin2, ScheduleKind::Sin2Sin2] {
            let p = SchedulePlan::new(kind, 3.7).unwrap();
            let (s0, v0) = p.eval(0.0).unwrap();
            let (s1, v1) = p.eval(3.7).unwrap();
            assert_abs_diff_eq!(s0, 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(v0, 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(s1, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(v1, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn nested_schedule_midpoint() {
        let p = SchedulePlan::new(ScheduleKind::Sin2Sin2, 2.0).unwrap();
        let (s, _) = p.eval(1.0).unwrap();
        assert_abs_diff_eq!(s, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for kind in [ScheduleKind::Sin2, ScheduleKind::Sin2Sin2] {
            let p = SchedulePlan::new(kind, 1.3).unwrap();
            for k in 1..20 {
                let t = 1.3 * k as f64 / 20.0;
                let h = 1e-6;
                let fd = (p.eval(t + h).unwrap().0 - p.eval(t - h).unwrap().0) / (2.0 * h);
                assert_abs_diff_eq!(p.eval(t).unwrap().1, fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn monotone_on_grid() {
        for kind in [ScheduleKind::Sin2, ScheduleKind::Sin2Sin2] {
            let p = SchedulePlan::new(kind, 5.0).unwrap();
            let mut prev = -1.0;
            for k in 0..=1000 {
                let (s, sd) = p.eval(5.0 * k as f64 / 1000.0).unwrap();
                assert!(s >= prev);
                assert!(sd >= 0.0);
                prev = s;
            }
        }
    }

    #[test]
    fn rejects_out_of_range() {
        let p = SchedulePlan::new(ScheduleKind::Sin2, 1.0).unwrap();
        assert!(p.eval(-0.1).is_err());
        assert!(p.eval(1.1).is_err());
        assert!(SchedulePlan::new(ScheduleKind::Sin2, 0.0).is_err());
    }
}
