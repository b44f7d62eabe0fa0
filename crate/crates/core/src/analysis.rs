//! Feasibility of a reference speed, the Lyapunov function of the velocity
//! loop, and stability of its undesired equilibria.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{
    centroid_velocity, heading_vector, normalize_angle, rotate90, scalar_product, PlanarVector,
    SwarmState,
};
use crate::engine::RunLog;
use crate::error::AnalysisError;
use crate::reference::ReferenceSignal;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub v_min: f64,
    pub v_max: f64,
    /// Sum of all speeds except the fastest.
    pub sum_others: f64,
    /// Largest centroid speed, reached when all headings agree.
    pub mean_speed: f64,
    pub ref_speed_bound: f64,
    /// `v_min >= ref_speed_bound`
    pub condition1_ok: bool,
    /// `v_max <= sum_others`
    pub condition2_ok: bool,
    pub feasible: bool,
    /// Feasible, but one of the inequalities holds with equality.
    pub marginal: bool,
}

/// Necessary speed conditions for the centroid to realise a reference whose
/// speed never exceeds `ref_speed_bound`. Inequalities are non-strict.
pub fn check_feasibility(
    speeds: &[f64],
    ref_speed_bound: f64,
) -> Result<FeasibilityReport, AnalysisError> {
    if speeds.is_empty() {
        return Err(AnalysisError::NoSpeeds);
    }
    if let Some((index, &speed)) = speeds
        .iter()
        .enumerate()
        .find(|(_, &s)| !(s > 0.0 && s.is_finite()))
    {
        return Err(AnalysisError::InvalidSpeed { index, speed });
    }
    let v_min = speeds.iter().copied().fold(f64::INFINITY, f64::min);
    let v_max = speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = speeds.iter().sum();
    // Sum the others directly so the comparison is exact for the usual inputs.
    let mut skipped = false;
    let sum_others: f64 = speeds
        .iter()
        .filter(|&&s| {
            if !skipped && s == v_max {
                skipped = true;
                false
            } else {
                true
            }
        })
        .sum();
    let condition1_ok = v_min >= ref_speed_bound;
    let condition2_ok = v_max <= sum_others;
    let feasible = condition1_ok && condition2_ok;
    Ok(FeasibilityReport {
        v_min,
        v_max,
        sum_others,
        mean_speed: total / speeds.len() as f64,
        ref_speed_bound,
        condition1_ok,
        condition2_ok,
        feasible,
        marginal: feasible && (v_min == ref_speed_bound || v_max == sum_others),
    })
}

/// `V = |c' - r_ref'|^2 / 2`.
pub fn lyapunov_v(snapshot: &SwarmState, ref_velocity: PlanarVector) -> f64 {
    0.5 * (centroid_velocity(snapshot) - ref_velocity).norm_squared()
}

/// `dV/dtheta_k = (1/n) <c' - r_ref', i v_k e^{i theta_k}>`.
pub fn lyapunov_gradient(snapshot: &SwarmState, ref_velocity: PlanarVector) -> Vec<f64> {
    let n = snapshot.len() as f64;
    let error = centroid_velocity(snapshot) - ref_velocity;
    snapshot
        .vehicles()
        .iter()
        .map(|v| scalar_product(error, rotate90(heading_vector(v))) / n)
        .collect()
}

/// Instantaneous `dV/dt` under heading rates `controls` while the reference
/// accelerates as described by `reference`.
pub fn lyapunov_rate(snapshot: &SwarmState, controls: &[f64], reference: &ReferenceSignal) -> f64 {
    let n = snapshot.len() as f64;
    let error = centroid_velocity(snapshot) - reference.velocity();
    let centroid_accel = snapshot
        .vehicles()
        .iter()
        .zip(controls)
        .fold(PlanarVector::ZERO, |acc, (v, &u)| {
            acc + rotate90(heading_vector(v)) * u
        })
        / n;
    scalar_product(error, centroid_accel - reference.acceleration())
}

/// `dV/dt = -(gamma / n) sum_k <c' - r_ref', i v_k e^{i theta_k}>^2` for the
/// pure velocity loop with a constant reference.
pub fn gradient_flow_rate(snapshot: &SwarmState, ref_velocity: PlanarVector, gamma: f64) -> f64 {
    let n = snapshot.len() as f64;
    let error = centroid_velocity(snapshot) - ref_velocity;
    -(gamma / n)
        * snapshot
            .vehicles()
            .iter()
            .map(|v| scalar_product(error, rotate90(heading_vector(v))).powi(2))
            .sum::<f64>()
}

/// A critical configuration of `V` with every heading at `phi` or `phi + pi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSpec {
    pub speeds: Vec<f64>,
    /// Agents heading at `phi + pi`.
    pub anti_aligned: Vec<bool>,
    /// Phase of the velocity error.
    pub phi: f64,
    pub ref_velocity: PlanarVector,
    /// Number of agents placed at `phi + pi` in the request.
    pub requested_m: usize,
    /// The error pointed at `phi + pi` as requested, so `phi` was flipped and
    /// the two groups swapped.
    pub reflected: bool,
    pub velocity_error: PlanarVector,
}

impl EquilibriumSpec {
    pub fn n(&self) -> usize {
        self.speeds.len()
    }

    /// Anti-aligned count in the canonical frame (error phase `phi`).
    pub fn m(&self) -> usize {
        self.anti_aligned.iter().filter(|&&a| a).count()
    }

    pub fn error_norm(&self) -> f64 {
        self.velocity_error.norm()
    }

    pub fn headings(&self) -> Vec<f64> {
        self.anti_aligned
            .iter()
            .map(|&anti| {
                if anti {
                    normalize_angle(self.phi + std::f64::consts::PI)
                } else {
                    self.phi
                }
            })
            .collect()
    }

    pub fn swarm(&self) -> SwarmState {
        SwarmState::from_parts(
            self.headings()
                .into_iter()
                .zip(&self.speeds)
                .map(|(h, &v)| (PlanarVector::ZERO, h, v)),
            0.0,
        )
        .expect("speeds validated at construction")
    }

    /// Speeds signed by group: positive for anti-aligned agents, negative otherwise.
    pub fn signed_speeds(&self) -> Vec<f64> {
        self.speeds
            .iter()
            .zip(&self.anti_aligned)
            .map(|(&v, &anti)| if anti { v } else { -v })
            .collect()
    }
}

/// Places the first `m` agents at `phi + pi` and the rest at `phi`, then
/// checks that the result is an undesired critical point of `V`.
pub fn build_equilibrium(
    speeds: &[f64],
    m: usize,
    phi: f64,
    ref_velocity: PlanarVector,
) -> Result<EquilibriumSpec, AnalysisError> {
    if speeds.is_empty() {
        return Err(AnalysisError::NoSpeeds);
    }
    if let Some((index, &speed)) = speeds
        .iter()
        .enumerate()
        .find(|(_, &s)| !(s > 0.0 && s.is_finite()))
    {
        return Err(AnalysisError::InvalidSpeed { index, speed });
    }
    let n = speeds.len();
    if m > n {
        return Err(AnalysisError::GroupSizeOutOfRange { m, n });
    }
    let dir = PlanarVector::from_polar(1.0, phi);
    let signed: f64 = speeds
        .iter()
        .enumerate()
        .map(|(k, &v)| if k < m { -v } else { v })
        .sum();
    let error = dir * (signed / n as f64) - ref_velocity;

    let scale = 1.0 + speeds.iter().sum::<f64>() / n as f64 + ref_velocity.norm();
    if error.norm() <= 1e-12 * scale {
        return Err(AnalysisError::DesiredEquilibrium);
    }
    if error.cross(dir).abs() > 1e-9 * scale {
        return Err(AnalysisError::NotCritical {
            phi,
            error_angle: error.angle(),
        });
    }
    let reflected = error.dot(dir) < 0.0;
    let mut anti_aligned: Vec<bool> = (0..n).map(|k| k < m).collect();
    let mut canonical_phi = normalize_angle(phi);
    if reflected {
        canonical_phi = normalize_angle(phi + std::f64::consts::PI);
        anti_aligned.iter_mut().for_each(|a| *a = !*a);
    }
    Ok(EquilibriumSpec {
        speeds: speeds.to_vec(),
        anti_aligned,
        phi: canonical_phi,
        ref_velocity,
        requested_m: m,
        reflected,
        velocity_error: error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StabilityClass {
    /// Zero velocity error; never produced by [`classify_equilibrium`].
    DesiredMinimum,
    /// Local maximum with no agent opposing the reference.
    UnstableM0,
    /// Local maximum with every agent opposing the reference.
    UnstableMn,
    Saddle,
    /// Local minimum with nonzero error; only reachable when the speed
    /// conditions fail.
    UndesiredMinimum,
    /// An eigenvalue is numerically zero and the others share one sign.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub class: StabilityClass,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub m: usize,
    /// Some eigenvalue is within tolerance of zero.
    pub singular: bool,
}

/// `H = (1/n) v v^T + |e| diag(v)` with `v` the signed speeds. This is `n`
/// times the Hessian of `V` in the headings, so the inertia is the same.
pub fn equilibrium_hessian(spec: &EquilibriumSpec) -> DMatrix<f64> {
    let v = nalgebra::DVector::from_vec(spec.signed_speeds());
    let n = v.len() as f64;
    let mut h = &v * v.transpose() / n;
    let e = spec.error_norm();
    for k in 0..v.len() {
        h[(k, k)] += e * v[k];
    }
    h
}

/// Classifies an undesired equilibrium from the inertia of its Hessian.
pub fn classify_equilibrium(spec: &EquilibriumSpec) -> StabilityVerdict {
    let eig = SymmetricEigen::new(equilibrium_hessian(spec));
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let largest = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let tol = 1e-9 * largest;
    let n = spec.n();

    let singular = eigenvalues.iter().any(|l| l.abs() <= tol);
    let has_neg = eigenvalues[0] < -tol;
    let has_pos = eigenvalues[n - 1] > tol;
    // Mixed signs settle the question even when H is singular.
    let class = match (has_neg, has_pos) {
        (true, true) => StabilityClass::Saddle,
        _ if singular => StabilityClass::Degenerate,
        (true, false) if spec.requested_m == n => StabilityClass::UnstableMn,
        (true, false) => StabilityClass::UnstableM0,
        _ => StabilityClass::UndesiredMinimum,
    };
    StabilityVerdict {
        class,
        eigenvalues,
        m: spec.requested_m,
        singular,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PerturbationProbe {
    pub has_descent: bool,
    pub has_ascent: bool,
}

/// Brute-force probe of `V` around an equilibrium: evaluates `V` at heading
/// perturbations of norm `epsilon` along random and structured directions.
pub fn perturbation_oracle(
    spec: &EquilibriumSpec,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> PerturbationProbe {
    let base = spec.headings();
    let n = base.len();
    let value = |theta: &[f64]| {
        let sum = theta
            .iter()
            .zip(&spec.speeds)
            .fold(PlanarVector::ZERO, |acc, (&t, &v)| {
                acc + PlanarVector::from_polar(v, t)
            });
        0.5 * (sum / n as f64 - spec.ref_velocity).norm_squared()
    };
    let v0 = value(&base);
    let tol = 1e-13 * (1.0 + v0);

    let mut directions: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        directions.push(e);
        for j in (i + 1)..n {
            for sign in [1.0, -1.0] {
                let mut d = vec![0.0; n];
                d[i] = 1.0;
                d[j] = sign;
                directions.push(d);
            }
        }
    }
    directions.push(vec![1.0; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        directions.push((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
    }

    let mut probe = PerturbationProbe {
        has_descent: false,
        has_ascent: false,
    };
    let mut theta = vec![0.0; n];
    for d in &directions {
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        for sign in [1.0, -1.0] {
            for k in 0..n {
                theta[k] = base[k] + sign * epsilon * d[k] / norm;
            }
            let delta = value(&theta) - v0;
            probe.has_descent |= delta < -tol;
            probe.has_ascent |= delta > tol;
        }
    }
    probe
}

/// Per-step tracking quantities derived from a run log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingSample {
    pub t: f64,
    /// `|centroid - target|`
    pub beta: f64,
    /// `|reference velocity - centroid velocity|`
    pub alpha: f64,
    pub distances: Vec<f64>,
    pub v: f64,
    pub order_parameter: f64,
}

pub fn tracking_metrics(log: &RunLog) -> Vec<TrackingSample> {
    log.records
        .iter()
        .map(|r| TrackingSample {
            t: r.t,
            beta: r.beta,
            alpha: r.alpha,
            distances: r.agents.iter().map(|a| a.distance).collect(),
            v: r.v,
            order_parameter: r.order_parameter,
        })
        .collect()
}
