use proptest::prelude::*;
use std::f64::consts::PI;
use swarmtrack_core::analysis::{gradient_flow_rate, lyapunov_rate, lyapunov_v};
use swarmtrack_core::controllers::{
    build_A, feedforward_rhs, project_spacing_to_kernel, solve_feedforward, swarm_control, u_velocity,
};
use swarmtrack_core::dynamics::{rotate90, scalar_product, step};
use swarmtrack_core::{ControllerGains, PlanarVector, ReferenceSignal, SpacingMode, SwarmState};

fn vec2() -> impl Strategy<Value = PlanarVector> {
    (-100.0..100.0f64, -100.0..100.0f64).prop_map(|(x, y)| PlanarVector::new(x, y))
}

fn swarm_strategy(max_n: usize) -> impl Strategy<Value = SwarmState> {
    prop::collection::vec((vec2(), -PI..PI, 0.5..20.0f64), 1..=max_n).prop_map(|parts| {
        SwarmState::from_parts(parts, 0.0).unwrap()
    })
}

fn reference_strategy() -> impl Strategy<Value = ReferenceSignal> {
    (vec2(), 0.0..5.0f64, -PI..PI, -1.0..1.0f64, -1.0..1.0f64).prop_map(
        |(position, speed, heading, kappa, accel)| ReferenceSignal {
            position,
            speed,
            heading,
            kappa,
            accel,
        },
    )
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn scalar_product_identities(a in vec2(), b in vec2()) {
        let ab = scalar_product(a, b);
        prop_assert!(close(scalar_product(a, b * ab), ab * ab, 1e-12));
        prop_assert!(close(scalar_product(b, a * ab), ab * ab, 1e-12));
        prop_assert!(close(scalar_product(a, b * scalar_product(b, a)), ab * ab, 1e-12));
        prop_assert!(close(-scalar_product(rotate90(a), b), scalar_product(a, rotate90(b)), 1e-12));
        prop_assert!(scalar_product(a, rotate90(a)).abs() <= 1e-12 * (1.0 + a.norm_squared()));
        prop_assert_eq!(rotate90(rotate90(a)), -a);
    }

    #[test]
    fn velocity_law_matches_real_form(s in swarm_strategy(8), r in reference_strategy(), gamma in 0.001..2.0f64) {
        let n = s.len() as f64;
        for (k, vk) in s.vehicles().iter().enumerate() {
            let coupling: f64 = s.vehicles().iter()
                .map(|vj| vk.speed() * vj.speed() * (vj.heading() - vk.heading()).sin())
                .sum();
            let real = -(gamma / n) * coupling
                + gamma * vk.speed() * r.speed * (r.heading - vk.heading()).sin();
            let complex = u_velocity(&s, k, r.velocity(), gamma);
            prop_assert!(close(real, complex, 1e-12), "{real} vs {complex}");
        }
    }

    #[test]
    fn control_is_rotation_equivariant(
        s in swarm_strategy(6),
        r in reference_strategy(),
        angle in -PI..PI,
        mode in prop::sample::select(vec![SpacingMode::Off, SpacingMode::Beacon, SpacingMode::BeaconProjected]),
    ) {
        let gains = ControllerGains::new(0.05, 0.25, mode).unwrap();
        let rotated = SwarmState::from_parts(
            s.vehicles().iter().map(|v| (v.position.rotate(angle), v.heading() + angle, v.speed())),
            0.0,
        ).unwrap();
        let r2 = ReferenceSignal { position: r.position.rotate(angle), heading: r.heading + angle, ..r };
        let a = swarm_control(&s, &r, &gains);
        let b = swarm_control(&rotated, &r2, &gains);
        prop_assert_eq!(a.feedforward_rank_ok, b.feedforward_rank_ok);
        for (x, y) in a.inputs.iter().zip(&b.inputs) {
            let scale = 1.0 + x.u_velocity.abs() + x.h_feedforward.abs() + x.u_spacing.abs();
            prop_assert!((x.total - y.total).abs() <= 1e-9 * scale, "{x:?} vs {y:?}");
        }
    }

    #[test]
    fn feedforward_is_exact_and_minimal(s in swarm_strategy(8), r in reference_strategy(), probe in prop::collection::vec(-1.0..1.0f64, 8)) {
        let sol = solve_feedforward(&s, &r, true);
        if !sol.rank_ok {
            prop_assert!(sol.h.iter().all(|&h| h == 0.0));
            return Ok(());
        }
        let a = build_A(&s);
        let b = feedforward_rhs(&r, true);
        let h = nalgebra::DVector::from_vec(sol.h.clone());
        let ah = &a * &h;
        let res = ((ah[0] - b.x).powi(2) + (ah[1] - b.y).powi(2)).sqrt();
        prop_assert!(res <= 1e-9 * (1.0 + b.norm()));
        // Kernel components only lengthen h.
        let z = project_spacing_to_kernel(&probe[..s.len()], &a);
        let zn: f64 = z.projected.iter().map(|x| x * x).sum();
        let base: f64 = sol.h.iter().map(|x| x * x).sum();
        let longer: f64 = sol.h.iter().zip(&z.projected).map(|(x, y)| (x + y).powi(2)).sum();
        prop_assert!(longer >= base - 1e-12 * (1.0 + base));
        if zn > 1e-12 {
            prop_assert!(longer > base);
        }
    }

    #[test]
    fn kernel_projection_is_a_projector(s in swarm_strategy(8), u in prop::collection::vec(-2.0..2.0f64, 8)) {
        let a = build_A(&s);
        let p = project_spacing_to_kernel(&u[..s.len()], &a);
        if !p.rank_ok {
            return Ok(());
        }
        let out = nalgebra::DVector::from_vec(p.projected.clone());
        let image = &a * &out;
        prop_assert!(image.norm() <= 1e-10);
        let again = project_spacing_to_kernel(&p.projected, &a);
        for (x, y) in again.projected.iter().zip(&p.projected) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn velocity_law_is_a_gradient_flow(s in swarm_strategy(8), v in vec2(), gamma in 0.001..1.0f64) {
        let r = ReferenceSignal::constant(PlanarVector::ZERO, v * 0.05);
        let gains = ControllerGains::new(gamma, 0.25, SpacingMode::Off).unwrap();
        let u = swarm_control(&s, &r, &gains).totals();
        let direct = lyapunov_rate(&s, &u, &r);
        let flow = gradient_flow_rate(&s, r.velocity(), gamma);
        prop_assert!(flow <= 0.0);
        prop_assert!((direct - flow).abs() <= 1e-12 * (1.0 + flow.abs()));
    }

    #[test]
    fn projected_spacing_leaves_lyapunov_rate_unchanged(s in swarm_strategy(8), r in reference_strategy()) {
        let off = ControllerGains::new(0.01, 0.25, SpacingMode::Off).unwrap();
        let projected = ControllerGains::new(0.01, 0.25, SpacingMode::BeaconProjected).unwrap();
        let a = swarm_control(&s, &r, &off);
        let b = swarm_control(&s, &r, &projected);
        if !b.projection_rank_ok {
            return Ok(());
        }
        let va = lyapunov_rate(&s, &a.totals(), &r);
        let vb = lyapunov_rate(&s, &b.totals(), &r);
        prop_assert!((va - vb).abs() <= 1e-10 * (1.0 + va.abs()));
    }
}

#[test]
fn lyapunov_rate_matches_finite_difference() {
    let mut s = SwarmState::from_parts(
        [
            (PlanarVector::ZERO, 0.3, 10.0),
            (PlanarVector::ZERO, 2.1, 12.0),
            (PlanarVector::ZERO, -1.7, 16.0),
        ],
        0.0,
    )
    .unwrap();
    let r = ReferenceSignal::constant(PlanarVector::ZERO, PlanarVector::new(2.0, 0.0));
    let gains = ControllerGains::new(0.1, 0.25, SpacingMode::Off).unwrap();
    let dt = 1e-3;
    for _ in 0..200 {
        let u = swarm_control(&s, &r, &gains).totals();
        let predicted = gradient_flow_rate(&s, r.velocity(), 0.1);
        let next = step(&s, &u, dt).unwrap();
        let observed = (lyapunov_v(&next, r.velocity()) - lyapunov_v(&s, r.velocity())) / dt;
        // O(dt) agreement; the second derivative here is bounded by ~1e4.
        assert!((observed - predicted).abs() <= 1e4 * dt, "{observed} vs {predicted}");
        s = next;
    }
}

#[test]
fn single_agent_has_no_feedforward() {
    let s = SwarmState::from_parts([(PlanarVector::ZERO, 0.4, 2.0)], 0.0).unwrap();
    let r = ReferenceSignal {
        position: PlanarVector::ZERO,
        speed: 2.0,
        heading: 0.4,
        kappa: 0.1,
        accel: 0.0,
    };
    let sol = solve_feedforward(&s, &r, true);
    assert!(!sol.rank_ok);
    assert!(sol.h.iter().all(|&h| h == 0.0));
}
