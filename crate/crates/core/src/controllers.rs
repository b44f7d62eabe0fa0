//! Heading-rate control laws.
//!
//! Every agent's command is `u_k = u_velocity_k + h_k + u_spacing_k`:
//!
//! * `u_velocity_k = -gamma <c' - r_ref', i v_k e^{i theta_k}>` steers the
//!   centroid velocity `c'` toward the reference velocity. Stacked over all
//!   agents it is `-gamma n grad V` for `V = |c' - r_ref'|^2 / 2`, so
//!   `dV/dt = -(gamma/n) sum_k <c' - r_ref', i v_k e^{i theta_k}>^2`.
//! * `h` is a feedforward term solving `A h = b`, where column `k` of `A` is
//!   `(1/n) i v_k e^{i theta_k}` and `b` is the reference acceleration.
//! * `u_spacing_k` is the beacon law keeping each agent orbiting the
//!   reference point, optionally projected onto `ker(A)` so it leaves the
//!   centroid velocity untouched.

use nalgebra::{DMatrix, Matrix2, Matrix2xX, Vector2};
use serde::Serialize;

use crate::dynamics::{
    centroid_velocity, heading_vector, rotate90, scalar_product, PlanarVector, SwarmState,
    VehicleState,
};
use crate::error::ControllerError;
use crate::reference::ReferenceSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpacingMode {
    Beacon,
    BeaconProjected,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControllerGains {
    gamma: f64,
    omega0: f64,
    pub spacing_mode: SpacingMode,
    /// Include the feedforward term `h`.
    pub feedforward: bool,
    /// Symmetric clamp on the total turn rate.
    pub u_max: Option<f64>,
}

impl ControllerGains {
    pub fn new(gamma: f64, omega0: f64, spacing_mode: SpacingMode) -> Result<Self, ControllerError> {
        for (what, value) in [("gamma", gamma), ("omega0", omega0)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ControllerError::NonPositiveGain { what, value });
            }
        }
        Ok(Self {
            gamma,
            omega0,
            spacing_mode,
            feedforward: true,
            u_max: None,
        })
    }

    pub fn with_feedforward(mut self, enabled: bool) -> Self {
        self.feedforward = enabled;
        self
    }

    pub fn with_u_max(mut self, u_max: Option<f64>) -> Result<Self, ControllerError> {
        if let Some(value) = u_max {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ControllerError::NonPositiveGain { what: "u_max", value });
            }
        }
        self.u_max = u_max;
        Ok(self)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }
}

/// One agent's command and its parts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ControlInput {
    pub u_velocity: f64,
    pub h_feedforward: f64,
    pub u_spacing: f64,
    pub total: f64,
}

impl ControlInput {
    pub fn new(u_velocity: f64, h_feedforward: f64, u_spacing: f64) -> Self {
        Self {
            u_velocity,
            h_feedforward,
            u_spacing,
            total: u_velocity + h_feedforward + u_spacing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedforwardSolution {
    pub h: Vec<f64>,
    pub residual: f64,
    pub rank_ok: bool,
}

/// Velocity-tracking term for agent `k` (0-based):
/// `-gamma <c' - r_ref', i v_k e^{i theta_k}>`.
pub fn u_velocity(snapshot: &SwarmState, k: usize, ref_velocity: PlanarVector, gamma: f64) -> f64 {
    let error = centroid_velocity(snapshot) - ref_velocity;
    -gamma * scalar_product(error, rotate90(heading_vector(snapshot.vehicle(k))))
}

/// The 2 x n matrix mapping heading rates to centroid acceleration.
#[allow(non_snake_case)]
pub fn build_A(snapshot: &SwarmState) -> Matrix2xX<f64> {
    let n = snapshot.len();
    let inv_n = 1.0 / n as f64;
    Matrix2xX::from_fn(n, |row, col| {
        let c = rotate90(heading_vector(snapshot.vehicle(col))) * inv_n;
        if row == 0 {
            c.x
        } else {
            c.y
        }
    })
}

/// Right-hand side of the feedforward system: `i v_ref e^{i theta_ref} kappa`,
/// plus `a_ref e^{i theta_ref}` when `include_accel` is set.
pub fn feedforward_rhs(reference: &ReferenceSignal, include_accel: bool) -> PlanarVector {
    let dir = PlanarVector::from_polar(1.0, reference.heading);
    let turn = rotate90(dir) * (reference.speed * reference.kappa);
    if include_accel {
        turn + dir * reference.accel
    } else {
        turn
    }
}

/// Rank test for `A`: the smaller singular value must exceed
/// `1e-8 * max(1, |A|_2)`.
#[allow(non_snake_case)]
fn full_rank(A: &Matrix2xX<f64>) -> bool {
    let gram = A * A.transpose();
    let (a, b, d) = (gram[(0, 0)], gram[(0, 1)], gram[(1, 1)]);
    let sigma_max_sq = 0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt();
    // Cauchy-Binet: det(A A^T) is the sum of squared 2x2 minors.
    let n = A.ncols();
    let mut det = 0.0;
    for j in 0..n {
        for k in (j + 1)..n {
            let minor = A[(0, j)] * A[(1, k)] - A[(0, k)] * A[(1, j)];
            det += minor * minor;
        }
    }
    let sigma_max = sigma_max_sq.sqrt();
    if sigma_max == 0.0 {
        return false;
    }
    det.sqrt() / sigma_max > 1e-8 * sigma_max.max(1.0)
}

/// Thin QR factors `A^T = Q R` (`Q` is n x 2) for a full-rank `A`. Working
/// with `Q` instead of `(A A^T)^{-1}` keeps the error linear in cond(A).
#[allow(non_snake_case)]
fn row_basis(A: &Matrix2xX<f64>) -> Option<(DMatrix<f64>, Matrix2<f64>)> {
    if !full_rank(A) {
        return None;
    }
    let qr = A.transpose().qr();
    let r = qr.r();
    let q = qr.q();
    Some((
        DMatrix::from_column_slice(q.nrows(), 2, q.as_slice()),
        Matrix2::new(r[(0, 0)], r[(0, 1)], 0.0, r[(1, 1)]),
    ))
}

/// Minimum 2-norm solution of `A h = b`, or `h = 0` with `rank_ok = false`.
pub fn solve_feedforward(
    snapshot: &SwarmState,
    reference: &ReferenceSignal,
    include_accel: bool,
) -> FeedforwardSolution {
    let a = build_A(snapshot);
    let b = feedforward_rhs(reference, include_accel);
    solve_with_matrix(&a, b)
}

#[allow(non_snake_case)]
fn solve_with_matrix(A: &Matrix2xX<f64>, b: PlanarVector) -> FeedforwardSolution {
    let n = A.ncols();
    let rhs = Vector2::new(b.x, b.y);
    if b == PlanarVector::ZERO {
        return FeedforwardSolution {
            h: vec![0.0; n],
            residual: 0.0,
            rank_ok: full_rank(A),
        };
    }
    match row_basis(A) {
        Some((q, r)) => {
            // A = R^T Q^T, so h = Q y with R^T y = b.
            let y = r
                .transpose()
                .solve_lower_triangular(&rhs)
                .expect("rank test guarantees a nonzero diagonal");
            let h = q * nalgebra::DVector::from_column_slice(y.as_slice());
            let residual = (A * &h - rhs).norm();
            FeedforwardSolution {
                h: h.iter().copied().collect(),
                residual,
                rank_ok: true,
            }
        }
        None => FeedforwardSolution {
            h: vec![0.0; n],
            residual: rhs.norm(),
            rank_ok: false,
        },
    }
}

/// Beacon spacing law around the reference point:
/// `-(omega0 + gamma omega0 <r_k - r_ref, v_k e^{i theta_k}>)`.
pub fn u_spacing_beacon(
    state: &VehicleState,
    ref_position: PlanarVector,
    gains: &ControllerGains,
) -> f64 {
    let rel = state.position - ref_position;
    -(gains.omega0 + gains.gamma * gains.omega0 * scalar_product(rel, heading_vector(state)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelProjection {
    pub projected: Vec<f64>,
    /// False when `A` is rank deficient; `projected` is then the input.
    pub rank_ok: bool,
}

/// Orthogonal projection of a spacing vector onto `ker(A)`:
/// `(I - A^T (A A^T)^{-1} A) u`.
#[allow(non_snake_case)]
pub fn project_spacing_to_kernel(u_spacing: &[f64], A: &Matrix2xX<f64>) -> KernelProjection {
    let Some((q, _)) = row_basis(A) else {
        return KernelProjection {
            projected: u_spacing.to_vec(),
            rank_ok: false,
        };
    };
    let u = nalgebra::DVector::from_column_slice(u_spacing);
    let correction = &q * (q.transpose() * &u);
    KernelProjection {
        projected: (u - correction).iter().copied().collect(),
        rank_ok: true,
    }
}

/// Commands for every agent computed from one shared snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwarmControl {
    pub inputs: Vec<ControlInput>,
    pub feedforward_rank_ok: bool,
    pub projection_rank_ok: bool,
}

impl SwarmControl {
    pub fn totals(&self) -> Vec<f64> {
        self.inputs.iter().map(|c| c.total).collect()
    }
}

/// Combined control for all agents from the same snapshot.
pub fn swarm_control(
    snapshot: &SwarmState,
    reference: &ReferenceSignal,
    gains: &ControllerGains,
) -> SwarmControl {
    let ref_velocity = reference.velocity();
    let error = centroid_velocity(snapshot) - ref_velocity;
    let n = snapshot.len();
    let scale = -gains.gamma;
    let velocity: Vec<f64> = snapshot
        .vehicles()
        .iter()
        .map(|v| scale * scalar_product(error, rotate90(heading_vector(v))))
        .collect();

    let a = build_A(snapshot);
    let (h, feedforward_rank_ok) = if gains.feedforward {
        let sol = solve_with_matrix(&a, feedforward_rhs(reference, true));
        (sol.h, sol.rank_ok)
    } else {
        (vec![0.0; n], true)
    };

    let (spacing, projection_rank_ok) = match gains.spacing_mode {
        SpacingMode::Off => (vec![0.0; n], true),
        SpacingMode::Beacon => (beacon_vector(snapshot, reference, gains), true),
        SpacingMode::BeaconProjected => {
            let raw = beacon_vector(snapshot, reference, gains);
            let p = project_spacing_to_kernel(&raw, &a);
            (p.projected, p.rank_ok)
        }
    };

    let inputs = (0..n)
        .map(|k| ControlInput::new(velocity[k], h[k], spacing[k]))
        .collect();
    SwarmControl {
        inputs,
        feedforward_rank_ok,
        projection_rank_ok,
    }
}

fn beacon_vector(
    snapshot: &SwarmState,
    reference: &ReferenceSignal,
    gains: &ControllerGains,
) -> Vec<f64> {
    snapshot
        .vehicles()
        .iter()
        .map(|v| u_spacing_beacon(v, reference.position, gains))
        .collect()
}

/// Combined command for agent `k` (0-based) from its own snapshot.
pub fn combined_control(
    snapshot: &SwarmState,
    k: usize,
    reference: &ReferenceSignal,
    gains: &ControllerGains,
) -> ControlInput {
    swarm_control(snapshot, reference, gains).inputs[k]
}

/// Applies the optional turn-rate clamp to a total command.
pub fn saturate(total: f64, gains: &ControllerGains) -> f64 {
    match gains.u_max {
        Some(limit) => total.clamp(-limit, limit),
        None => total,
    }
}
