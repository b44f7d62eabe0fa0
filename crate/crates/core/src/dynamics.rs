//! Planar vectors, vehicle state, and the fixed-step unicycle integrator.
//!
//! Complex quantities (positions, velocities) are carried as real 2-vectors:
//! the real part is `x`, the imaginary part is `y`. Multiplication by `i` is
//! [`rotate90`] and the real scalar product `<a, b> = Re(conj(a) b)` is
//! [`scalar_product`].

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::Serialize;

use crate::error::DynamicsError;

/// A point or velocity in the plane, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PlanarVector {
    pub x: f64,
    pub y: f64,
}

impl PlanarVector {
    pub const ZERO: PlanarVector = PlanarVector { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// `magnitude * e^{i angle}`.
    pub fn from_polar(magnitude: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(magnitude * c, magnitude * s)
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the planar cross product.
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Argument in (-pi, pi]; zero for the zero vector.
    pub fn angle(self) -> f64 {
        normalize_angle(self.y.atan2(self.x))
    }

    pub fn rotate90(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for PlanarVector {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for PlanarVector {
    fn add_assign(&mut self, rhs: Self) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for PlanarVector {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for PlanarVector {
    fn sub_assign(&mut self, rhs: Self) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for PlanarVector {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<PlanarVector> for f64 {
    type Output = PlanarVector;
    fn mul(self, rhs: PlanarVector) -> PlanarVector {
        rhs * self
    }
}

impl Div<f64> for PlanarVector {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        Self::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for PlanarVector {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Real scalar product of two complex numbers viewed as planar vectors.
pub fn scalar_product(a: PlanarVector, b: PlanarVector) -> f64 {
    a.dot(b)
}

/// Multiplication by the imaginary unit.
pub fn rotate90(a: PlanarVector) -> PlanarVector {
    a.rotate90()
}

/// Wraps an angle into (-pi, pi]. Angles already in range are returned
/// unchanged, bit for bit.
pub fn normalize_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let mut r = angle.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// One constant-speed unicycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleState {
    pub id: usize,
    pub position: PlanarVector,
    heading: f64,
    speed: f64,
}

impl VehicleState {
    pub fn new(
        id: usize,
        position: PlanarVector,
        heading: f64,
        speed: f64,
    ) -> Result<Self, DynamicsError> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(DynamicsError::InvalidSpeed { id, speed });
        }
        if !heading.is_finite() || !position.is_finite() {
            return Err(DynamicsError::NonFiniteState { id });
        }
        Ok(Self {
            id,
            position,
            heading: normalize_angle(heading),
            speed,
        })
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn set_heading(&mut self, heading: f64) {
        self.heading = normalize_angle(heading);
    }
}

/// Velocity `v_k e^{i theta_k}` of one vehicle.
pub fn heading_vector(state: &VehicleState) -> PlanarVector {
    PlanarVector::from_polar(state.speed, state.heading)
}

/// The whole team at one instant. Vehicle ids run 1..=n in order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwarmState {
    vehicles: Vec<VehicleState>,
    pub time: f64,
}

impl SwarmState {
    pub fn new(vehicles: Vec<VehicleState>, time: f64) -> Result<Self, DynamicsError> {
        if vehicles.is_empty() {
            return Err(DynamicsError::EmptySwarm);
        }
        for (idx, v) in vehicles.iter().enumerate() {
            if v.id != idx + 1 {
                return Err(DynamicsError::BadAgentId {
                    expected: idx + 1,
                    found: v.id,
                });
            }
        }
        Ok(Self { vehicles, time })
    }

    /// Builds a swarm from `(position, heading, speed)` triples, numbering ids from 1.
    pub fn from_parts<I>(parts: I, time: f64) -> Result<Self, DynamicsError>
    where
        I: IntoIterator<Item = (PlanarVector, f64, f64)>,
    {
        let vehicles = parts
            .into_iter()
            .enumerate()
            .map(|(idx, (p, h, s))| VehicleState::new(idx + 1, p, h, s))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(vehicles, time)
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn vehicle(&self, index: usize) -> &VehicleState {
        &self.vehicles[index]
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.vehicles.iter().map(|v| v.speed).collect()
    }

    pub fn headings(&self) -> Vec<f64> {
        self.vehicles.iter().map(|v| v.heading).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.vehicles
            .iter()
            .all(|v| v.position.is_finite() && v.heading.is_finite())
    }

    /// Copy with every heading replaced; used for perturbation analysis.
    pub fn with_headings(&self, headings: &[f64]) -> Self {
        let mut out = self.clone();
        for (v, &h) in out.vehicles.iter_mut().zip(headings) {
            v.set_heading(h);
        }
        out
    }
}

pub fn centroid(swarm: &SwarmState) -> PlanarVector {
    let n = swarm.len() as f64;
    let sum = swarm
        .vehicles
        .iter()
        .fold(PlanarVector::ZERO, |acc, v| acc + v.position);
    sum / n
}

/// Average linear momentum `(1/n) sum v_k e^{i theta_k}`.
pub fn centroid_velocity(swarm: &SwarmState) -> PlanarVector {
    let n = swarm.len() as f64;
    let sum = swarm
        .vehicles
        .iter()
        .fold(PlanarVector::ZERO, |acc, v| acc + heading_vector(v));
    sum / n
}

/// Phase order parameter `(1/n) sum e^{i theta_k}`.
pub fn order_parameter(swarm: &SwarmState) -> PlanarVector {
    let n = swarm.len() as f64;
    let sum = swarm
        .vehicles
        .iter()
        .fold(PlanarVector::ZERO, |acc, v| {
            acc + PlanarVector::from_polar(1.0, v.heading)
        });
    sum / n
}

/// Advances every vehicle by `dt` with classical RK4, holding each heading
/// rate constant over the step.
pub fn step(swarm: &SwarmState, controls: &[f64], dt: f64) -> Result<SwarmState, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidTimeStep(dt));
    }
    if controls.len() != swarm.len() {
        return Err(DynamicsError::ControlLength {
            expected: swarm.len(),
            found: controls.len(),
        });
    }
    let vehicles = swarm
        .vehicles
        .iter()
        .zip(controls)
        .map(|(v, &u)| {
            let (position, heading) = rk4_unicycle(v.position, v.heading, v.speed, u, dt);
            VehicleState {
                id: v.id,
                position,
                heading: normalize_angle(heading),
                speed: v.speed,
            }
        })
        .collect();
    Ok(SwarmState {
        vehicles,
        time: swarm.time + dt,
    })
}

fn rk4_unicycle(
    position: PlanarVector,
    heading: f64,
    speed: f64,
    u: f64,
    dt: f64,
) -> (PlanarVector, f64) {
    let f = |theta: f64| PlanarVector::from_polar(speed, theta);
    let half = 0.5 * dt;

    let k1 = f(heading);
    let k2 = f(heading + half * u);
    let k3 = f(heading + half * u);
    let k4 = f(heading + dt * u);

    let dp = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    // All four heading stages share the same slope under a held control.
    let dtheta = dt / 6.0 * (u + 2.0 * u + 2.0 * u + u);
    (position + dp, heading + dtheta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn agent(x: f64, y: f64, heading: f64, speed: f64) -> (PlanarVector, f64, f64) {
        (PlanarVector::new(x, y), heading, speed)
    }

    #[test]
    fn scalar_product_examples() {
        let e1 = PlanarVector::new(1.0, 0.0);
        let e2 = PlanarVector::new(0.0, 1.0);
        assert_eq!(scalar_product(e1, e2), 0.0);

        let th = 0.7;
        let a = PlanarVector::from_polar(2.0, th);
        let b = PlanarVector::from_polar(3.0, th);
        assert!((scalar_product(a, b) - 6.0).abs() < 1e-12);

        let a = PlanarVector::from_polar(2.0, 0.0);
        let b = PlanarVector::from_polar(3.0, PI / 3.0);
        let oracle = 2.0 * 3.0 * (PI / 3.0).cos();
        assert!((scalar_product(a, b) - oracle).abs() < 1e-12);
        assert!((oracle - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rotate90_examples() {
        assert_eq!(rotate90(PlanarVector::new(1.0, 0.0)), PlanarVector::new(0.0, 1.0));
        assert_eq!(rotate90(PlanarVector::new(0.0, 1.0)), PlanarVector::new(-1.0, 0.0));
        let a = PlanarVector::new(0.3, -2.5);
        assert_eq!(rotate90(rotate90(a)), -a);
    }

    #[test]
    fn heading_vector_examples() {
        let s = |h, v| VehicleState::new(1, PlanarVector::ZERO, h, v).unwrap();
        assert_eq!(heading_vector(&s(0.0, 1.0)), PlanarVector::new(1.0, 0.0));
        let v = heading_vector(&s(PI / 2.0, 2.0));
        assert!(v.x.abs() < 1e-15 && (v.y - 2.0).abs() < 1e-15);
        let v = heading_vector(&s(PI / 4.0, 10.0));
        assert!((v.x - 7.0710678118654755).abs() < 1e-12);
        assert!((v.y - 7.0710678118654755).abs() < 1e-12);
    }

    #[test]
    fn centroid_examples() {
        let one = SwarmState::from_parts([agent(3.0, 4.0, 0.0, 1.0)], 0.0).unwrap();
        assert_eq!(centroid(&one), PlanarVector::new(3.0, 4.0));
        let two =
            SwarmState::from_parts([agent(0.0, 0.0, 0.0, 1.0), agent(2.0, 0.0, 0.0, 1.0)], 0.0)
                .unwrap();
        assert_eq!(centroid(&two), PlanarVector::new(1.0, 0.0));
        let three = SwarmState::from_parts(
            [
                agent(1.0, 1.0, 0.0, 1.0),
                agent(2.0, 2.0, 0.0, 1.0),
                agent(3.0, 3.0, 0.0, 1.0),
            ],
            0.0,
        )
        .unwrap();
        assert_eq!(centroid(&three), PlanarVector::new(2.0, 2.0));
    }

    #[test]
    fn centroid_velocity_examples() {
        let s = SwarmState::from_parts([agent(0.0, 0.0, 0.0, 1.0), agent(0.0, 0.0, PI, 1.0)], 0.0)
            .unwrap();
        assert!(centroid_velocity(&s).norm() < 1e-15);

        let s = SwarmState::from_parts(
            [
                agent(0.0, 0.0, 0.0, 1.0),
                agent(0.0, 0.0, 0.0, 2.0),
                agent(0.0, 0.0, 0.0, 3.0),
            ],
            0.0,
        )
        .unwrap();
        assert_eq!(centroid_velocity(&s), PlanarVector::new(2.0, 0.0));

        let s = SwarmState::from_parts(
            [agent(0.0, 0.0, 0.0, 1.0), agent(0.0, 0.0, PI / 2.0, 2.0)],
            0.0,
        )
        .unwrap();
        let c = centroid_velocity(&s);
        assert!((c.x - 0.5).abs() < 1e-15 && (c.y - 1.0).abs() < 1e-15);
    }

    #[test]
    fn order_parameter_of_synchronized_headings_is_one() {
        let s = SwarmState::from_parts(
            [agent(0.0, 0.0, 0.4, 1.0), agent(5.0, 1.0, 0.4, 7.0)],
            0.0,
        )
        .unwrap();
        assert!((order_parameter(&s).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn straight_line_step_is_exact() {
        let s = SwarmState::from_parts([agent(0.0, 0.0, 0.0, 1.0)], 0.0).unwrap();
        let next = step(&s, &[0.0], 1.0).unwrap();
        assert_eq!(next.vehicle(0).position, PlanarVector::new(1.0, 0.0));
        assert_eq!(next.vehicle(0).heading(), 0.0);
        assert_eq!(next.time, 1.0);
    }

    #[test]
    fn full_circle_returns_to_start() {
        let v = 3.0;
        let w = 0.5;
        let mut s = SwarmState::from_parts([agent(1.0, -2.0, 0.3, v)], 0.0).unwrap();
        let steps = 2000;
        let dt = TAU / w / steps as f64;
        for _ in 0..steps {
            s = step(&s, &[w], dt).unwrap();
        }
        let err = (s.vehicle(0).position - PlanarVector::new(1.0, -2.0)).norm();
        assert!(err < 1e-6 * v / w, "err = {err}");
    }

    fn arc_position(v: f64, w: f64, t: f64) -> PlanarVector {
        PlanarVector::new(v / w * (w * t).sin(), v / w * (1.0 - (w * t).cos()))
    }

    #[test]
    fn constant_turn_matches_closed_form_arc() {
        let (v, w, dt) = (10.0, 0.25, 0.01);
        let mut s = SwarmState::from_parts([agent(0.0, 0.0, 0.0, v)], 0.0).unwrap();
        for _ in 0..100 {
            s = step(&s, &[w], dt).unwrap();
        }
        let exact = arc_position(v, w, 1.0);
        let got = s.vehicle(0).position;
        assert!((s.vehicle(0).heading() - 0.25).abs() < 1e-12);
        assert!((got - exact).norm() <= 1e-8 * exact.norm());
    }

    #[test]
    fn integrator_is_fourth_order() {
        let (v, w, horizon) = (10.0, 0.8, 4.0);
        let err = |dt: f64| {
            let steps = (horizon / dt).round() as usize;
            let mut s = SwarmState::from_parts([agent(0.0, 0.0, 0.0, v)], 0.0).unwrap();
            for _ in 0..steps {
                s = step(&s, &[w], dt).unwrap();
            }
            (s.vehicle(0).position - arc_position(v, w, horizon)).norm()
        };
        let coarse = err(0.2);
        let fine = err(0.1);
        assert!(coarse / fine >= 8.0, "ratio = {}", coarse / fine);
    }

    #[test]
    fn step_rejects_bad_inputs() {
        let s = SwarmState::from_parts([agent(0.0, 0.0, 0.0, 1.0)], 0.0).unwrap();
        assert!(matches!(step(&s, &[0.0], 0.0), Err(DynamicsError::InvalidTimeStep(_))));
        assert!(matches!(step(&s, &[0.0], -1.0), Err(DynamicsError::InvalidTimeStep(_))));
        assert!(matches!(
            step(&s, &[0.0, 1.0], 0.1),
            Err(DynamicsError::ControlLength { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn invalid_vehicle_construction() {
        assert!(VehicleState::new(1, PlanarVector::ZERO, 0.0, 0.0).is_err());
        assert!(VehicleState::new(1, PlanarVector::ZERO, 0.0, -1.0).is_err());
        assert!(SwarmState::new(vec![], 0.0).is_err());
        let v = VehicleState::new(2, PlanarVector::ZERO, 0.0, 1.0).unwrap();
        assert!(SwarmState::new(vec![v], 0.0).is_err());
    }

    #[test]
    fn normalize_angle_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(normalize_angle(0.3), 0.3);
    }

    proptest! {
        #[test]
        fn rotate90_is_orthogonal(x in -1e3..1e3f64, y in -1e3..1e3f64) {
            let a = PlanarVector::new(x, y);
            prop_assert!(scalar_product(a, rotate90(a)).abs() <= 1e-12);
        }

        #[test]
        fn normalized_headings_stay_in_range(a in -1e4..1e4f64) {
            let r = normalize_angle(a);
            prop_assert!(r > -PI && r <= PI);
            prop_assert!(((a - r) / TAU - ((a - r) / TAU).round()).abs() < 1e-9);
        }

        #[test]
        fn step_preserves_speed_and_zero_turn_heading(
            x in -100.0..100.0f64, y in -100.0..100.0f64,
            h in -3.0..3.0f64, v in 0.1..30.0f64, u in -2.0..2.0f64, dt in 1e-3..0.5f64,
        ) {
            let s = SwarmState::from_parts([agent(x, y, h, v), agent(y, x, -h, v * 0.5)], 0.0).unwrap();
            let next = step(&s, &[u, 0.0], dt).unwrap();
            prop_assert_eq!(next.vehicle(0).speed().to_bits(), v.to_bits());
            prop_assert_eq!(next.vehicle(1).speed().to_bits(), (v * 0.5).to_bits());
            prop_assert_eq!(next.vehicle(1).heading().to_bits(), s.vehicle(1).heading().to_bits());
            let d = next.vehicle(1).position - s.vehicle(1).position;
            let dir = PlanarVector::from_polar(1.0, s.vehicle(1).heading());
            prop_assert!(d.cross(dir).abs() <= 1e-9 * (1.0 + d.norm()));
            prop_assert!(d.dot(dir) > 0.0);
        }
    }
}
