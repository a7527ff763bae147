use manial_core::alf::{CompositeProblem, LinearMap, SmoothObjective};
use manial_core::alm::{dual_stepsize, update_y, DualRule};
use manial_core::blocks::Blocks;
use manial_core::manifold::{Manifold, ManifoldPoint};
use manial_core::nonsmooth::NonsmoothTerm;
use manial_core::problems::{format_matrix, parse_matrix, partition_rows};
use manial_core::subsolvers::rstorm_params;
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::sync::Arc;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 96,
        ..ProptestConfig::default()
    }
}

fn matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    DMatrix::from_fn(rows, cols, |_, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}

fn manifold(kind: u8, seed: u64) -> Manifold {
    match kind % 3 {
        0 => Manifold::stiefel(7, 3).unwrap(),
        1 => {
            let g = matrix(6, 6, seed);
            let b = DMatrix::identity(6, 6) + g.tr_mul(&g) / 6.0;
            Manifold::generalized_stiefel(b, 2).unwrap()
        }
        _ => {
            let g = matrix(4, 4, seed);
            let b = DMatrix::identity(4, 4) * 0.5 + g.tr_mul(&g);
            Manifold::product(vec![Manifold::stiefel(5, 2).unwrap(), Manifold::generalized_stiefel(b, 2).unwrap()]).unwrap()
        }
    }
}

fn ambient(m: &Manifold, seed: u64) -> Blocks {
    Blocks(
        m.shapes()
            .into_iter()
            .enumerate()
            .map(|(i, (n, r))| matrix(n, r, seed ^ ((i as u64 + 1) * 0x9e37)))
            .collect(),
    )
}

struct Quadratic(DMatrix<f64>);

impl SmoothObjective for Quadratic {
    fn value(&self, x: &Blocks) -> f64 {
        0.5 * x[0].dot(&(&self.0 * &x[0]))
    }

    fn egrad(&self, x: &Blocks) -> Blocks {
        Blocks::single(&self.0 * &x[0])
    }
}

fn quadratic_problem(mu: f64, seed: u64) -> CompositeProblem {
    let g = matrix(6, 6, seed);
    let c = (&g + g.transpose()) * 0.5;
    let norm = c.clone().symmetric_eigen().eigenvalues.amax();
    CompositeProblem::new(
        Manifold::stiefel(6, 2).unwrap(),
        Arc::new(Quadratic(c)),
        LinearMap::Identity,
        NonsmoothTerm::scaled_l1(mu, 6, 2).unwrap(),
        norm,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn projection_is_idempotent_and_tangent(kind in 0u8..3, seed in any::<u64>()) {
        let m = manifold(kind, seed);
        let x = m.random_point(seed);
        let u = ambient(&m, seed.rotate_left(7));
        let p = m.project_tangent(&x, &u).unwrap();
        let pp = m.project_tangent(&x, p.value()).unwrap();
        prop_assert!(pp.value().distance(p.value()) <= 1e-12);
        prop_assert!(m.tangency_residual(&x, p.value()) <= 1e-12);
    }

    #[test]
    fn retraction_is_feasible_and_contractive(kind in 0u8..3, seed in any::<u64>(), scale in 1e-4f64..20.0) {
        let m = manifold(kind, seed);
        let x = m.random_point(seed);
        let xi = m.random_tangent(&x, seed ^ 5);
        let xi = xi.scale(scale / xi.norm());
        let y = m.retract(&xi).unwrap();
        prop_assert!(m.feasibility_error(y.value()) <= 1e-10);
        let d = y.value() - x.value();
        prop_assert!(m.inner(&d, &d).sqrt() <= xi.norm());
        let still = m.retract(&m.zero_tangent(&x)).unwrap();
        prop_assert_eq!(still.value(), x.value());
    }

    #[test]
    fn transport_is_linear(kind in 0u8..3, seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let m = manifold(kind, seed);
        let x = m.random_point(seed);
        let y = m.random_point(seed ^ 1);
        let u = m.random_tangent(&x, seed ^ 2);
        let v = m.random_tangent(&x, seed ^ 3);
        let lhs = m.transport(&y, &u.scale(a).axpy(b, &v)).unwrap();
        let rhs = m.transport(&y, &u).unwrap().scale(a).axpy(b, &m.transport(&y, &v).unwrap());
        prop_assert!(lhs.value().distance(rhs.value()) <= 1e-12 * (1.0 + lhs.norm()));
        let same = m.transport(&x, &u).unwrap();
        prop_assert!(same.value().distance(u.value()) <= 1e-12);
    }

    #[test]
    fn riemannian_gradient_is_metric_dual(kind in 0u8..3, seed in any::<u64>()) {
        // ⟨grad, ξ⟩_x = ⟨∇f, ξ⟩ for every tangent ξ.
        let m = manifold(kind, seed);
        let x = m.random_point(seed);
        let g = ambient(&m, seed ^ 9);
        let rg = m.riemannian_gradient(&x, &g).unwrap();
        let xi = m.random_tangent(&x, seed ^ 11);
        let lhs = m.inner(rg.value(), xi.value());
        let rhs = g.inner(xi.value());
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + rhs.abs()));
        prop_assert!(m.tangency_residual(&x, rg.value()) <= 1e-11);
    }

    #[test]
    fn moreau_pieces_are_consistent(seed in any::<u64>(), lambda in 0.01f64..3.0, mu in 1e-3f64..10.0) {
        let h = NonsmoothTerm::scaled_l1(lambda, 4, 3).unwrap();
        let v = Blocks::single(matrix(4, 3, seed).scale(5.0));
        let prox = h.prox(&v, mu).unwrap();
        let env = h.moreau_value(&v, mu).unwrap();
        let direct = h.value(&prox).unwrap() + (&v - &prox).norm_sq() / (2.0 * mu);
        prop_assert!((env - direct).abs() <= 1e-12 * (1.0 + env.abs()));
        prop_assert!(env <= h.value(&v).unwrap() + 1e-12);
        let grad = h.moreau_grad(&v, mu).unwrap();
        prop_assert!(grad.distance(&(&v - &prox).scale(1.0 / mu)) <= 1e-10 * (1.0 + grad.norm()));
        prop_assert!(grad.max_abs() <= lambda);
        // −∇M ∈ −∂h(prox): the prox point certifies the subgradient exactly.
        let (_, worst) = h.subdifferential_distance(&prox, &grad).unwrap();
        prop_assert!(worst <= 1e-12);
    }

    #[test]
    fn prox_is_firmly_nonexpansive(seed in any::<u64>(), lambda in 0.01f64..3.0, mu in 1e-3f64..10.0) {
        let h = NonsmoothTerm::scaled_l1(lambda, 3, 3).unwrap();
        let u = Blocks::single(matrix(3, 3, seed).scale(4.0));
        let v = Blocks::single(matrix(3, 3, seed ^ 77).scale(4.0));
        let pu = h.prox(&u, mu).unwrap();
        let pv = h.prox(&v, mu).unwrap();
        let lhs = pu.distance(&pv).powi(2);
        let rhs = (&pu - &pv).inner(&(&u - &v));
        prop_assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn y_update_moves_at_most_lipschitz_over_sigma(seed in any::<u64>(), sigma in 1e-2f64..1e6, mu in 0.01f64..2.0) {
        let p = quadratic_problem(mu, seed);
        let x = p.manifold.random_point(seed);
        let z = Blocks::single(matrix(6, 2, seed ^ 3));
        let y = update_y(&p, sigma, &z, x.value()).unwrap();
        let v = p.shifted(sigma, &z, x.value()).unwrap();
        // v − y is formed by subtraction, so allow its rounding error in v.
        let slack = 4.0 * f64::EPSILON * v.norm();
        prop_assert!(v.distance(&y) <= p.h.lipschitz_const() / sigma + slack);
    }

    #[test]
    fn alf_gradient_matches_multiplier_form(seed in any::<u64>(), sigma in 1e-2f64..1e4, mu in 0.01f64..2.0) {
        // ∇ψ = ∇f − A*z̄ with z̄ = −∇M_h^{1/σ}(Ax − z/σ).
        let p = quadratic_problem(mu, seed);
        let x = p.manifold.random_point(seed);
        let z = Blocks::single(matrix(6, 2, seed ^ 4));
        let v = p.shifted(sigma, &z, x.value()).unwrap();
        let zbar = p.h.moreau_grad(&v, 1.0 / sigma).unwrap().scale(-1.0);
        let want = p.smooth.egrad(x.value()).axpy(-1.0, &p.map.adjoint(&zbar));
        let got = p.alf_egrad(sigma, &z, x.value()).unwrap();
        prop_assert!(got.distance(&want) <= 1e-12 * (1.0 + want.norm()));
    }

    #[test]
    fn dual_steps_are_summable(beta0 in 1e-3f64..10.0, r_ref in 1e-6f64..10.0, r in 0.0f64..10.0, k in 0usize..10_000) {
        let det = dual_stepsize(DualRule::Deterministic, beta0, r_ref, r, k);
        prop_assert!(det >= 0.0 && det <= beta0);
        let ln2 = std::f64::consts::LN_2.powi(2);
        let lk = ((k + 2) as f64).ln();
        let k1 = (k + 1) as f64;
        prop_assert!(det * r <= beta0 * r_ref * ln2 / (k1 * k1 * lk) * (1.0 + 1e-12));
        let sto = dual_stepsize(DualRule::Stochastic, beta0, r_ref, r, k);
        prop_assert!(sto >= 0.0 && sto <= beta0);
        let bound = beta0 * r_ref * ln2 / (k1 * lk * lk);
        prop_assert!(sto * r <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn rstorm_first_step_respects_caps(l in 1e-3f64..1e6, g in 1e-3f64..1e4, b in 1e-2f64..10.0) {
        let p = rstorm_params(l, g, b).unwrap();
        let eta1 = p.kappa / p.w.cbrt();
        prop_assert!(eta1 <= 1.0 / (4.0 * l) * (1.0 + 1e-12));
        prop_assert!(p.c * eta1 * eta1 <= 1.0 + 1e-12);
        prop_assert!(p.w >= 2.0 * g * g);
    }

    #[test]
    fn partition_covers_rows_in_order(rows in 1usize..500, batches in 1usize..60) {
        prop_assume!(batches <= rows);
        let parts = partition_rows(rows, batches).unwrap();
        prop_assert_eq!(parts.len(), batches);
        let mut next = 0;
        for &(start, len) in &parts {
            prop_assert_eq!(start, next);
            prop_assert!(len == rows / batches || len == rows / batches + 1);
            next += len;
        }
        prop_assert_eq!(next, rows);
    }

    #[test]
    fn matrix_text_round_trips(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>(), exp in -300i32..300) {
        let m = matrix(rows, cols, seed).map(|v| v * 10f64.powi(exp));
        prop_assert_eq!(parse_matrix(&format_matrix(&m)).unwrap(), m);
    }
}

#[test]
fn random_points_are_reproducible() {
    for kind in 0..3 {
        let m = manifold(kind, 3);
        let a: ManifoldPoint = m.random_point(42);
        assert_eq!(a.value(), m.random_point(42).value());
        assert_ne!(a.value(), m.random_point(43).value());
    }
}
