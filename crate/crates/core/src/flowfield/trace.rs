use serde::{Deserialize, Serialize};

use super::{axpy, norm, Vec3, VectorField};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    OutOfBounds,
    MaxSteps,
    ZeroVelocity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Streamline {
    pub points: Vec<Vec3>,
    pub termination: Termination,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceParams {
    pub step: f64,
    pub max_steps: usize,
    /// Speeds below this stop the trace at a critical point.
    pub zero_speed: f64,
}

impl TraceParams {
    /// Zero-speed tolerance scaled to the domain: `1e-8 · diagonal / max_steps`.
    pub fn new<F: VectorField + ?Sized>(field: &F, step: f64, max_steps: usize) -> Self {
        TraceParams {
            step,
            max_steps,
            zero_speed: 1e-8 * field.bounds().diagonal() / max_steps.max(1) as f64,
        }
    }
}

/// One classical fourth-order Runge-Kutta step. Any stage that leaves the
/// domain, or a result outside it, yields [`Error::OutOfDomain`].
pub fn rk4_step<F: VectorField + ?Sized>(field: &F, pos: Vec3, h: f64) -> Result<Vec3> {
    let k1 = field.velocity(pos)?;
    let k2 = field.velocity(axpy(0.5 * h, k1, pos))?;
    let k3 = field.velocity(axpy(0.5 * h, k2, pos))?;
    let k4 = field.velocity(axpy(h, k3, pos))?;
    let next = [
        pos[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        pos[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        pos[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ];
    if !field.bounds().contains(next) {
        return Err(Error::OutOfDomain(next));
    }
    Ok(next)
}

/// Forward integration from `seed` until the particle leaves the domain,
/// stalls, or `max_steps` steps have been taken.
pub fn trace_streamline<F: VectorField + ?Sized>(
    field: &F,
    seed: Vec3,
    params: &TraceParams,
) -> Result<Streamline> {
    if !(params.step > 0.0) || params.max_steps == 0 {
        return Err(Error::Config(format!(
            "trace step must be positive and max_steps >= 1 (got {}, {})",
            params.step, params.max_steps
        )));
    }
    let mut points = vec![seed];
    let mut pos = seed;
    for _ in 0..params.max_steps {
        if norm(field.velocity(pos)?) < params.zero_speed {
            return Ok(Streamline {
                points,
                termination: Termination::ZeroVelocity,
            });
        }
        match rk4_step(field, pos, params.step) {
            Ok(next) => {
                pos = next;
                points.push(pos);
            }
            Err(Error::OutOfDomain(_)) => {
                return Ok(Streamline {
                    points,
                    termination: Termination::OutOfBounds,
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Streamline {
        points,
        termination: Termination::MaxSteps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowfield::{AnalyticField, Bounds};
    use approx::assert_abs_diff_eq;

    /// v(x) = (x, 0, 0)
    struct Linear;

    impl VectorField for Linear {
        fn bounds(&self) -> Bounds {
            Bounds::cube(-10.0, 10.0)
        }
        fn velocity(&self, p: Vec3) -> Result<Vec3> {
            Ok([p[0], 0.0, 0.0])
        }
    }

    #[test]
    fn exact_on_constant_field() {
        let f = AnalyticField::constant([2.0, 0.0, 0.0], Bounds::cube(0.0, 10.0));
        let p = rk4_step(&f, [1.0, 2.0, 3.0], 0.5).unwrap();
        assert_eq!(p, [2.0, 2.0, 3.0]);
    }

    #[test]
    fn matches_quartic_taylor_polynomial_on_linear_field() {
        let h: f64 = 0.1;
        let expected = 1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0;
        let p = rk4_step(&Linear, [1.0, 0.0, 0.0], h).unwrap();
        assert_abs_diff_eq!(p[0], expected, epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 1.105_170_83, epsilon = 1e-8);
    }

    #[test]
    fn step_halving_agrees_on_abc() {
        let f = AnalyticField::abc();
        let seeds = [[1.0, 2.0, 3.0], [3.1, 0.7, 4.4], [5.0, 5.0, 1.5]];
        for seed in seeds {
            let one = rk4_step(&f, seed, 0.1).unwrap();
            let half = rk4_step(&f, seed, 0.05).unwrap();
            let two = rk4_step(&f, half, 0.05).unwrap();
            for a in 0..3 {
                assert!((one[a] - two[a]).abs() < 1e-6, "{one:?} vs {two:?}");
            }
        }
    }

    #[test]
    fn leaving_stage_is_out_of_domain() {
        let f = AnalyticField::constant([1.0, 0.0, 0.0], Bounds::cube(0.0, 1.0));
        assert!(matches!(
            rk4_step(&f, [0.95, 0.5, 0.5], 0.1),
            Err(Error::OutOfDomain(_))
        ));
    }

    #[test]
    fn constant_field_exits_through_far_face() {
        let f = AnalyticField::constant([1.0, 0.0, 0.0], Bounds::cube(0.0, 10.0));
        let params = TraceParams::new(&f, 1.0, 1000);
        let s = trace_streamline(&f, [0.0, 5.0, 5.0], &params).unwrap();
        assert_eq!(s.termination, Termination::OutOfBounds);
        assert!((10..=11).contains(&s.points.len()), "{}", s.points.len());
    }

    #[test]
    fn zero_field_stops_immediately() {
        let f = AnalyticField::constant([0.0; 3], Bounds::cube(0.0, 1.0));
        let s = trace_streamline(&f, [0.5; 3], &TraceParams::new(&f, 0.1, 100)).unwrap();
        assert_eq!(s.termination, Termination::ZeroVelocity);
        assert_eq!(s.points.len(), 1);
    }

    #[test]
    fn abc_interior_seed_runs_to_max_steps() {
        let f = AnalyticField::abc();
        // a short trace from the middle of the box stays inside
        let s = trace_streamline(&f, [3.14, 3.14, 3.14], &TraceParams::new(&f, 0.1, 10)).unwrap();
        assert_eq!(s.termination, Termination::MaxSteps);
        assert_eq!(s.points.len(), 11);
        assert!(s.points.iter().all(|&p| f.bounds().contains(p)));
    }
}
