//! Target motion programs and the reference velocity the centroid must track.

use serde::Serialize;

use crate::dynamics::{normalize_angle, PlanarVector};
use crate::error::ReferenceError;

/// Reference point and its first-order motion description.
///
/// `kappa` is the heading rate of the reference velocity and `accel` the rate
/// of change of its speed; both feed the feedforward right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceSignal {
    pub position: PlanarVector,
    pub speed: f64,
    pub heading: f64,
    pub kappa: f64,
    pub accel: f64,
}

impl ReferenceSignal {
    /// A reference with the given velocity and no curvature or acceleration.
    pub fn constant(position: PlanarVector, velocity: PlanarVector) -> Self {
        Self {
            position,
            speed: velocity.norm(),
            heading: velocity.angle(),
            kappa: 0.0,
            accel: 0.0,
        }
    }

    pub fn velocity(&self) -> PlanarVector {
        PlanarVector::from_polar(self.speed, self.heading)
    }

    /// Second derivative of the reference position,
    /// `i v e^{i theta} kappa + a e^{i theta}`.
    pub fn acceleration(&self) -> PlanarVector {
        let dir = PlanarVector::from_polar(1.0, self.heading);
        dir.rotate90() * (self.speed * self.kappa) + dir * self.accel
    }
}

/// Open-loop reference velocity programs used when no target is tracked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ReferenceProgram {
    /// Fixed velocity vector.
    Constant { velocity: PlanarVector },
    /// Constant speed, heading turning at `kappa` rad/s.
    Turning { speed: f64, kappa: f64, heading: f64 },
    /// Speed `speed + amplitude sin(frequency t)`, heading turning at `kappa`.
    Varying {
        speed: f64,
        amplitude: f64,
        frequency: f64,
        kappa: f64,
        heading: f64,
    },
}

impl ReferenceProgram {
    pub fn validate(&self) -> Result<(), ReferenceError> {
        match *self {
            ReferenceProgram::Constant { velocity } => {
                finite("reference velocity", velocity.x)?;
                finite("reference velocity", velocity.y)?;
            }
            ReferenceProgram::Turning { speed, kappa, heading } => {
                non_negative("reference speed", speed)?;
                finite("reference kappa", kappa)?;
                finite("reference heading", heading)?;
            }
            ReferenceProgram::Varying {
                speed,
                amplitude,
                frequency,
                kappa,
                heading,
            } => {
                non_negative("reference speed", speed)?;
                finite("speed amplitude", amplitude)?;
                finite("speed frequency", frequency)?;
                finite("reference kappa", kappa)?;
                finite("reference heading", heading)?;
                if amplitude.abs() > speed {
                    return Err(ReferenceError::InvalidParameter {
                        what: "speed amplitude",
                        requirement: "no larger than the mean reference speed",
                        value: amplitude,
                    });
                }
            }
        }
        Ok(())
    }

    /// Supremum of the reference speed over all time.
    pub fn max_speed(&self) -> f64 {
        match *self {
            ReferenceProgram::Constant { velocity } => velocity.norm(),
            ReferenceProgram::Turning { speed, .. } => speed,
            ReferenceProgram::Varying { speed, amplitude, .. } => speed + amplitude.abs(),
        }
    }

    /// Closed-form signal at time `t`, with the reference starting at `origin`.
    pub fn signal_at(&self, t: f64, origin: PlanarVector) -> ReferenceSignal {
        match *self {
            ReferenceProgram::Constant { velocity } => {
                ReferenceSignal::constant(origin + velocity * t, velocity)
            }
            ReferenceProgram::Turning { speed, kappa, heading } => {
                let theta = heading + kappa * t;
                let offset = if kappa == 0.0 {
                    PlanarVector::from_polar(speed * t, heading)
                } else {
                    let r = speed / kappa;
                    PlanarVector::new(
                        r * (theta.sin() - heading.sin()),
                        r * (heading.cos() - theta.cos()),
                    )
                };
                ReferenceSignal {
                    position: origin + offset,
                    speed,
                    heading: normalize_angle(theta),
                    kappa,
                    accel: 0.0,
                }
            }
            ReferenceProgram::Varying {
                speed,
                amplitude,
                frequency,
                kappa,
                heading,
            } => {
                let theta = heading + kappa * t;
                let v = speed + amplitude * (frequency * t).sin();
                let accel = amplitude * frequency * (frequency * t).cos();
                ReferenceSignal {
                    position: origin + self.displacement(0.0, t),
                    speed: v,
                    heading: normalize_angle(theta),
                    kappa,
                    accel,
                }
            }
        }
    }
}

impl ReferenceProgram {
    /// Reference displacement accumulated over `[t0, t1]`.
    ///
    /// Exact for the constant and turning programs. The varying program has no
    /// elementary antiderivative once speed and heading both change, so it
    /// uses composite Simpson quadrature.
    pub fn displacement(&self, t0: f64, t1: f64) -> PlanarVector {
        match *self {
            ReferenceProgram::Constant { .. } | ReferenceProgram::Turning { .. } => {
                self.signal_at(t1, PlanarVector::ZERO).position
                    - self.signal_at(t0, PlanarVector::ZERO).position
            }
            ReferenceProgram::Varying {
                speed,
                amplitude,
                frequency,
                kappa,
                heading,
            } => {
                if t1 <= t0 {
                    return PlanarVector::ZERO;
                }
                let vel = |s: f64| {
                    PlanarVector::from_polar(
                        speed + amplitude * (frequency * s).sin(),
                        heading + kappa * s,
                    )
                };
                let span = t1 - t0;
                let intervals = ((span * 20.0).ceil() as usize).max(2) * 2;
                let h = span / intervals as f64;
                let mut sum = vel(t0) + vel(t1);
                for j in 1..intervals {
                    let w = if j % 2 == 1 { 4.0 } else { 2.0 };
                    sum += vel(t0 + j as f64 * h) * w;
                }
                sum * (h / 3.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TargetMotion {
    ConstantVelocity {
        velocity: PlanarVector,
    },
    Turning {
        speed: f64,
        kappa: f64,
        heading: f64,
    },
    /// Holds at the start for `dwell` seconds, flies to the first waypoint,
    /// then cycles through the waypoints as a closed loop at constant speed.
    WaypointPath {
        waypoints: Vec<PlanarVector>,
        speed: f64,
        dwell: f64,
    },
}

/// The target's trajectory as a closed-form function of time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetProgram {
    start: PlanarVector,
    motion: TargetMotion,
}

impl TargetProgram {
    pub fn new(start: PlanarVector, motion: TargetMotion) -> Result<Self, ReferenceError> {
        finite("target start", start.x)?;
        finite("target start", start.y)?;
        match &motion {
            TargetMotion::ConstantVelocity { velocity } => {
                finite("target velocity", velocity.x)?;
                finite("target velocity", velocity.y)?;
            }
            TargetMotion::Turning { speed, kappa, heading } => {
                non_negative("target speed", *speed)?;
                finite("target kappa", *kappa)?;
                finite("target heading", *heading)?;
            }
            TargetMotion::WaypointPath {
                waypoints,
                speed,
                dwell,
            } => {
                if waypoints.is_empty() {
                    return Err(ReferenceError::EmptyWaypoints);
                }
                for w in waypoints {
                    finite("waypoint coordinate", w.x)?;
                    finite("waypoint coordinate", w.y)?;
                }
                non_negative("target speed", *speed)?;
                non_negative("dwell time", *dwell)?;
            }
        }
        Ok(Self { start, motion })
    }

    pub fn stationary(position: PlanarVector) -> Self {
        Self {
            start: position,
            motion: TargetMotion::ConstantVelocity {
                velocity: PlanarVector::ZERO,
            },
        }
    }

    pub fn start(&self) -> PlanarVector {
        self.start
    }

    pub fn motion(&self) -> &TargetMotion {
        &self.motion
    }

    /// Largest target speed over the whole program.
    pub fn max_speed(&self) -> f64 {
        match &self.motion {
            TargetMotion::ConstantVelocity { velocity } => velocity.norm(),
            TargetMotion::Turning { speed, .. } => *speed,
            TargetMotion::WaypointPath { speed, .. } => *speed,
        }
    }

    /// Position and velocity of the target at time `t >= 0`.
    pub fn state_at(&self, t: f64) -> (PlanarVector, PlanarVector) {
        let t = t.max(0.0);
        match &self.motion {
            TargetMotion::ConstantVelocity { velocity } => (self.start + *velocity * t, *velocity),
            TargetMotion::Turning { speed, kappa, heading } => {
                let sig = ReferenceProgram::Turning {
                    speed: *speed,
                    kappa: *kappa,
                    heading: *heading,
                }
                .signal_at(t, self.start);
                (sig.position, sig.velocity())
            }
            TargetMotion::WaypointPath {
                waypoints,
                speed,
                dwell,
            } => waypoint_state(self.start, waypoints, *speed, *dwell, t),
        }
    }
}

/// Convenience wrapper matching the program/time call shape.
pub fn target_state(program: &TargetProgram, t: f64) -> (PlanarVector, PlanarVector) {
    program.state_at(t)
}

fn waypoint_state(
    start: PlanarVector,
    waypoints: &[PlanarVector],
    speed: f64,
    dwell: f64,
    t: f64,
) -> (PlanarVector, PlanarVector) {
    if t < dwell || speed == 0.0 {
        return (start, PlanarVector::ZERO);
    }
    let mut travelled = speed * (t - dwell);

    let first = waypoints[0] - start;
    let first_len = first.norm();
    if travelled < first_len {
        let dir = first / first_len;
        return (start + dir * travelled, dir * speed);
    }
    travelled -= first_len;

    let m = waypoints.len();
    let legs: Vec<(PlanarVector, PlanarVector, f64)> = (0..m)
        .map(|i| {
            let a = waypoints[i];
            let b = waypoints[(i + 1) % m];
            (a, b, (b - a).norm())
        })
        .filter(|&(_, _, len)| len > 0.0)
        .collect();
    let perimeter: f64 = legs.iter().map(|l| l.2).sum();
    if legs.is_empty() || perimeter == 0.0 {
        return (waypoints[0], PlanarVector::ZERO);
    }
    let mut s = travelled % perimeter;
    for &(a, b, len) in &legs {
        if s < len {
            let dir = (b - a) / len;
            return (a + dir * s, dir * speed);
        }
        s -= len;
    }
    // Rounding can leave `s` a hair past the last leg; treat it as the loop start.
    let (a, b, len) = legs[0];
    (a, (b - a) / len * speed)
}

/// Gain on the target-minus-centroid position error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WeightFunction {
    Constant(f64),
    /// `w(rho) = (1 - e^{-scale rho}) / rho`, extended by `scale` at `rho = 0`.
    DistanceDependent { scale: f64 },
}

impl WeightFunction {
    pub fn validate(&self) -> Result<(), ReferenceError> {
        let (what, value) = match *self {
            WeightFunction::Constant(w) => ("weight", w),
            WeightFunction::DistanceDependent { scale } => ("weight scale", scale),
        };
        if value > 0.0 && value.is_finite() {
            Ok(())
        } else {
            Err(ReferenceError::InvalidParameter {
                what,
                requirement: "positive and finite",
                value,
            })
        }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        match *self {
            WeightFunction::Constant(w) => w,
            WeightFunction::DistanceDependent { scale } => {
                if rho == 0.0 {
                    scale
                } else {
                    -(-scale * rho).exp_m1() / rho
                }
            }
        }
    }
}

/// `r_target' + w(rho) (r_target - centroid)` with `rho = |r_target - centroid|`.
pub fn reference_velocity(
    target_pos: PlanarVector,
    target_vel: PlanarVector,
    centroid: PlanarVector,
    weight: &WeightFunction,
) -> PlanarVector {
    let rel = target_pos - centroid;
    let rho = rel.norm();
    if rho == 0.0 {
        return target_vel;
    }
    target_vel + rel * weight.eval(rho)
}

/// Backward-difference estimator of the reference heading rate and speed rate.
///
/// The heading is unwrapped across the branch cut. While the reference is at
/// rest the last well-defined heading is held.
#[derive(Debug, Clone, Default)]
pub struct ReferenceDifferentiator {
    previous: Option<(f64, f64)>,
    heading: Option<f64>,
}

impl ReferenceDifferentiator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Heading of `velocity`, or the held heading when `velocity` is zero.
    pub fn heading_of(&self, velocity: PlanarVector) -> f64 {
        if velocity.norm() > 0.0 {
            velocity.angle()
        } else {
            self.heading.unwrap_or(0.0)
        }
    }

    /// Feeds one sample taken `dt` after the previous one and returns
    /// `(kappa, accel)`. The first sample yields `(0, 0)`.
    pub fn push(&mut self, velocity: PlanarVector, dt: f64) -> (f64, f64) {
        let speed = velocity.norm();
        let heading = self.heading_of(velocity);
        self.heading = Some(heading);
        let out = match self.previous {
            None => (0.0, 0.0),
            Some((prev_speed, prev_heading)) => {
                let dtheta = normalize_angle(heading - prev_heading);
                (dtheta / dt, (speed - prev_speed) / dt)
            }
        };
        self.previous = Some((speed, heading));
        out
    }
}

/// Finite-difference `(kappa, accel)` at the last of `samples`, spaced `dt` apart.
pub fn reference_derivatives(samples: &[PlanarVector], dt: f64) -> (f64, f64) {
    let mut diff = ReferenceDifferentiator::new();
    let mut out = (0.0, 0.0);
    for &s in samples {
        out = diff.push(s, dt);
    }
    out
}

fn finite(what: &'static str, value: f64) -> Result<(), ReferenceError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ReferenceError::InvalidParameter {
            what,
            requirement: "finite",
            value,
        })
    }
}

fn non_negative(what: &'static str, value: f64) -> Result<(), ReferenceError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ReferenceError::InvalidParameter {
            what,
            requirement: "non-negative and finite",
            value,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn close(a: PlanarVector, b: PlanarVector, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn constant_velocity_target() {
        let p = TargetProgram::new(
            PlanarVector::ZERO,
            TargetMotion::ConstantVelocity {
                velocity: PlanarVector::new(2.0, 0.0),
            },
        )
        .unwrap();
        let (pos, vel) = target_state(&p, 5.0);
        assert_eq!(pos, PlanarVector::new(10.0, 0.0));
        assert_eq!(vel, PlanarVector::new(2.0, 0.0));
    }

    #[test]
    fn turning_target_closes_its_circle() {
        let start = PlanarVector::new(3.0, -1.0);
        let p = TargetProgram::new(
            start,
            TargetMotion::Turning {
                speed: 1.0,
                kappa: 0.5,
                heading: 0.0,
            },
        )
        .unwrap();
        let (pos, vel) = p.state_at(4.0 * PI);
        assert!(close(pos, start, 1e-12));
        assert!(close(vel, PlanarVector::new(1.0, 0.0), 1e-12));
        // Quarter turn: radius 2, centre at start + (0, 2).
        let (pos, _) = p.state_at(PI);
        assert!(close(pos, start + PlanarVector::new(2.0, 2.0), 1e-12));
    }

    fn square(dwell: f64) -> TargetProgram {
        TargetProgram::new(
            PlanarVector::ZERO,
            TargetMotion::WaypointPath {
                waypoints: vec![
                    PlanarVector::new(100.0, 0.0),
                    PlanarVector::new(100.0, 100.0),
                    PlanarVector::new(0.0, 100.0),
                    PlanarVector::new(0.0, 0.0),
                ],
                speed: 2.0,
                dwell,
            },
        )
        .unwrap()
    }

    #[test]
    fn waypoint_square_first_corner() {
        let p = square(0.0);
        let (pos, vel) = p.state_at(50.0);
        assert!(close(pos, PlanarVector::new(100.0, 0.0), 1e-12));
        assert!(close(vel, PlanarVector::new(0.0, 2.0), 1e-12));
        let (_, before) = p.state_at(49.9);
        assert!(close(before, PlanarVector::new(2.0, 0.0), 1e-12));
        // One full lap later the target is back at the corner.
        let (pos, _) = p.state_at(250.0);
        assert!(close(pos, PlanarVector::new(100.0, 0.0), 1e-9));
    }

    #[test]
    fn waypoint_dwell_holds_at_start() {
        let p = square(30.0);
        let (pos, vel) = p.state_at(29.99);
        assert_eq!(pos, PlanarVector::ZERO);
        assert_eq!(vel, PlanarVector::ZERO);
        let (pos, _) = p.state_at(80.0);
        assert!(close(pos, PlanarVector::new(100.0, 0.0), 1e-12));
    }

    #[test]
    fn empty_waypoints_rejected() {
        let err = TargetProgram::new(
            PlanarVector::ZERO,
            TargetMotion::WaypointPath {
                waypoints: vec![],
                speed: 2.0,
                dwell: 0.0,
            },
        );
        assert_eq!(err, Err(ReferenceError::EmptyWaypoints));
    }

    #[test]
    fn reference_velocity_examples() {
        let tv = PlanarVector::new(1.5, -0.5);
        let c = PlanarVector::new(4.0, 4.0);
        let w = WeightFunction::DistanceDependent { scale: 0.1 };
        assert_eq!(reference_velocity(c, tv, c, &w), tv);

        let got = reference_velocity(
            PlanarVector::new(10.0, 0.0),
            PlanarVector::ZERO,
            PlanarVector::ZERO,
            &WeightFunction::Constant(0.5),
        );
        assert_eq!(got, PlanarVector::new(5.0, 0.0));

        let got = reference_velocity(
            PlanarVector::new(10.0, 0.0),
            PlanarVector::new(2.0, 0.0),
            PlanarVector::ZERO,
            &w,
        );
        let w10 = (1.0 - (-1.0f64).exp()) / 10.0;
        assert!((w10 - 0.063_212_055_882_855_77).abs() < 1e-15);
        assert!((got.x - (2.0 + 10.0 * w10)).abs() < 1e-12);
        assert!((got.x - 2.632_12).abs() < 1e-5);
        assert_eq!(got.y, 0.0);
    }

    #[test]
    fn derivatives_of_constant_samples_vanish() {
        let s = vec![PlanarVector::new(1.0, 2.0); 5];
        assert_eq!(reference_derivatives(&s, 0.01), (0.0, 0.0));
        assert_eq!(reference_derivatives(&s[..1], 0.01), (0.0, 0.0));
    }

    #[test]
    fn derivatives_of_linear_phase() {
        let dt = 0.01;
        let s: Vec<_> = (0..50)
            .map(|i| PlanarVector::from_polar(1.0, 0.5 * i as f64 * dt))
            .collect();
        let (kappa, accel) = reference_derivatives(&s, dt);
        assert!((kappa - 0.5).abs() < 1e-9);
        assert!(accel.abs() < 1e-9);
    }

    #[test]
    fn derivatives_of_linear_speed() {
        let dt = 0.01;
        let s: Vec<_> = (0..50)
            .map(|i| PlanarVector::new(1.0 + 0.1 * i as f64 * dt, 0.0))
            .collect();
        let (kappa, accel) = reference_derivatives(&s, dt);
        assert!((accel - 0.1).abs() < 1e-9);
        assert_eq!(kappa, 0.0);
    }

    #[test]
    fn derivatives_unwrap_across_branch_cut() {
        let dt = 0.1;
        let s = [
            PlanarVector::from_polar(1.0, PI - 0.01),
            PlanarVector::from_polar(1.0, -PI + 0.01),
        ];
        let (kappa, _) = reference_derivatives(&s, dt);
        assert!((kappa - 0.2).abs() < 1e-9);
    }

    #[test]
    fn heading_held_while_at_rest() {
        let mut d = ReferenceDifferentiator::new();
        d.push(PlanarVector::new(0.0, 1.0), 0.1);
        let (kappa, accel) = d.push(PlanarVector::ZERO, 0.1);
        assert_eq!(kappa, 0.0);
        assert!((accel + 10.0).abs() < 1e-12);
        assert!((d.heading_of(PlanarVector::ZERO) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn varying_program_matches_its_derivatives() {
        let prog = ReferenceProgram::Varying {
            speed: 3.0,
            amplitude: 1.0,
            frequency: 0.2,
            kappa: 0.05,
            heading: 0.3,
        };
        let o = PlanarVector::new(1.0, 2.0);
        let h = 1e-4;
        let t = 7.3;
        let a = prog.signal_at(t - h, o);
        let b = prog.signal_at(t + h, o);
        let mid = prog.signal_at(t, o);
        let vel_fd = (b.position - a.position) / (2.0 * h);
        assert!(close(vel_fd, mid.velocity(), 1e-6));
        let acc_fd = (b.velocity() - a.velocity()) / (2.0 * h);
        assert!(close(acc_fd, mid.acceleration(), 1e-6));
    }

    #[test]
    fn turning_program_position_is_consistent_with_velocity() {
        let prog = ReferenceProgram::Turning {
            speed: 2.0,
            kappa: 0.05,
            heading: -1.0,
        };
        let o = PlanarVector::ZERO;
        let h = 1e-4;
        let t = 33.0;
        let fd = (prog.signal_at(t + h, o).position - prog.signal_at(t - h, o).position) / (2.0 * h);
        assert!(close(fd, prog.signal_at(t, o).velocity(), 1e-7));
    }

    proptest! {
        #[test]
        fn distance_weight_is_positive_bounded_and_decreasing(
            scale in 1e-3..5.0f64, rho in 0.0..1e4f64, bump in 1e-6..10.0f64,
        ) {
            let w = WeightFunction::DistanceDependent { scale };
            let a = w.eval(rho);
            let b = w.eval(rho + bump);
            prop_assert!(a > 0.0 && b > 0.0);
            prop_assert!(a <= scale);
            prop_assert!(b < a);
        }

        #[test]
        fn distance_weight_is_continuous_at_zero(scale in 1e-3..5.0f64) {
            let w = WeightFunction::DistanceDependent { scale };
            prop_assert!((w.eval(1e-12) - w.eval(0.0)).abs() <= 1e-9 * scale);
        }
    }
}
