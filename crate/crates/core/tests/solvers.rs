use manial_core::alf::SmoothnessConfig;
use manial_core::alm::{self, AlfOracle, AlmConfig, InnerOption, StopMode, Termination};
use manial_core::blocks::Blocks;
use manial_core::problems::{build_scca, build_spca, gen_scca_data, gen_spca_data, validate_problem};
use manial_core::subsolvers::{rstorm, rstorm_params, Correction, Counted};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn rstorm_on_spca_improves_with_budget() {
    let p = build_spca(gen_spca_data(200, 30, 3).unwrap(), 0.3, 3, 20).unwrap();
    let sigma = 1.0;
    let z = Blocks::zeros_like(p.manifold.random_point(0).value());
    let g = p.estimate_gradient_bound(sigma, 50, 3).unwrap();
    let l = p.storm_lipschitz(sigma, &SmoothnessConfig::for_manifold(&p.manifold, g));
    let params = rstorm_params(l, g, 1.0).unwrap();
    let x1 = p.manifold.random_point(3);
    let oracle = Counted::new(AlfOracle::new(&p, sigma, &z));
    let mut norms = [Vec::new(), Vec::new()];
    for seed in 0..5 {
        for (slot, t) in [256usize, 4096].into_iter().enumerate() {
            let before = oracle.grad_evals();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = rstorm(&oracle, &params, t, x1.clone(), Correction::SameSample, &mut rng).unwrap();
            assert_eq!(oracle.grad_evals() - before, 2 * t as u64 - 1);
            assert_eq!(out.grad_evals, 2 * t as u64 - 1);
            for w in out.trace.windows(2) {
                assert!(w[1].eta <= w[0].eta);
            }
            for s in &out.trace {
                assert!(s.eta <= 1.0 / (4.0 * l));
                assert!(s.a > 0.0 && s.a <= 1.0);
            }
            norms[slot].push(p.alf_rgrad(sigma, &z, &out.x).unwrap().norm());
        }
    }
    let (short, long) = (median(norms[0].clone()), median(norms[1].clone()));
    assert!(long < short, "median grad norm {long} at T=4096 vs {short} at T=256");
}

#[test]
fn stomanial_dual_stays_within_running_bound() {
    let p = build_spca(gen_spca_data(60, 12, 5).unwrap(), 0.2, 2, 6).unwrap();
    let cfg = AlmConfig {
        option: InnerOption::II,
        max_outer: 20,
        tol: 1e-300,
        seed: 5,
        ..AlmConfig::default()
    };
    let out = alm::stomanial(&p, &cfg).unwrap();
    assert_eq!(out.records.len(), 20);
    assert_eq!(out.termination, Termination::MaxOuter);
    let mut calls = 0u64;
    for r in &out.records {
        assert!(r.z_norm <= r.z_bound * (1.0 + 1e-12) + 1e-15, "k={}: {} > {}", r.k, r.z_norm, r.z_bound);
        assert!(r.subgradient_violation <= 1e-10);
        calls += 2 * (1u64 << (r.k + 1)) - 1;
        assert_eq!(r.grad_evals, calls);
    }
    let first = &out.records[0];
    assert_eq!(first.beta, cfg.beta0);
    assert!(out.records.windows(2).all(|w| w[1].z_bound >= w[0].z_bound));
}

#[test]
fn manial_absolute_mode_certifies_kkt() {
    let p = build_spca(gen_spca_data(80, 10, 2).unwrap(), 0.1, 2, 4).unwrap();
    let cfg = AlmConfig {
        stop: StopMode::Absolute,
        tol: 1e-5,
        seed: 2,
        ..AlmConfig::default()
    };
    let out = alm::manial(&p, &cfg).unwrap();
    assert_eq!(out.termination, Termination::Converged);
    let last = out.last();
    assert!(last.primal_residual <= 1e-5);
    assert!(last.stationarity <= 1e-5);
    assert!(last.subgradient_distance <= 1e-5);
    let ax = p.map.apply(out.x.value());
    assert!((ax.distance(&out.y) - last.primal_residual).abs() <= 1e-15);
    assert!(p.manifold.feasibility_error(out.x.value()) <= 1e-10);
}

#[test]
fn manial_option_two_runs_fixed_budgets() {
    let p = build_spca(gen_spca_data(80, 10, 4).unwrap(), 0.1, 2, 4).unwrap();
    let cfg = AlmConfig {
        option: InnerOption::II,
        max_outer: 8,
        tol: 1e-300,
        seed: 4,
        ..AlmConfig::default()
    };
    let out = alm::manial(&p, &cfg).unwrap();
    for r in &out.records {
        assert_eq!(r.inner_iters, 1u64 << (r.k + 1));
        assert_eq!(r.eps, None);
        assert!(r.primal_residual <= r.feasibility_bound);
    }
    let total: u64 = out.records.iter().map(|r| r.inner_iters).sum();
    assert_eq!(total, (1 << 9) - 2);
}

#[test]
fn builders_pass_gradient_and_batch_checks() {
    let spca = build_spca(gen_spca_data(50, 8, 1).unwrap(), 0.4, 3, 7).unwrap();
    validate_problem(&spca, 5, 1).unwrap();
    let (x, y) = gen_scca_data(60, 9, 7, 2, 1).unwrap();
    let scca = build_scca(x, y, 0.1, 0.2, 2, 1e-6, 6).unwrap();
    validate_problem(&scca, 5, 1).unwrap();
    let pt = scca.manifold.random_point(8);
    assert!(scca.manifold.feasibility_error(pt.value()) <= 1e-10);
}

#[test]
fn scca_solution_is_feasible_and_sparse() {
    let (x, y) = gen_scca_data(120, 15, 12, 2, 9).unwrap();
    let p = build_scca(x, y, 0.3, 0.3, 2, 1e-6, 10).unwrap();
    let cfg = AlmConfig {
        tol: 1e-5,
        seed: 9,
        ..AlmConfig::default()
    };
    let out = alm::manial(&p, &cfg).unwrap();
    assert_eq!(out.termination, Termination::Converged);
    assert!(p.manifold.feasibility_error(out.x.value()) <= 1e-10);
    let zeros = out.y.iter().map(|m| m.iter().filter(|&&v| v == 0.0).count()).sum::<usize>();
    assert!(zeros > 0, "expected exact zeros in the split variable");
}
