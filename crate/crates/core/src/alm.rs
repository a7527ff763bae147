//! Outer augmented Lagrangian loops: the deterministic method driven by
//! gradient descent and the stochastic one driven by recursive momentum.

use std::cell::Cell;
use std::f64::consts::{LN_2, PI};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::alf::{CompositeProblem, SmoothnessConfig};
use crate::blocks::Blocks;
use crate::error::{Error, Result};
use crate::manifold::{Manifold, ManifoldPoint, TangentVector};
use crate::subsolvers::{
    rgd, rgd_until, rstorm, rstorm_params, Correction, Counted, SmoothOracle, StochasticOracle,
};

/// Inner-solve policy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InnerOption {
    /// Geometric penalties `σ_k = b^k`, inner tolerance `ε_k = 1/σ_k`.
    #[default]
    I,
    /// Fixed inner budgets `2^{k+1}` with slowly growing penalties.
    II,
}

/// Which dual stepsize rule to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualRule {
    Deterministic,
    Stochastic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StopMode {
    /// Relative KKT residuals `max(η_p, η_d, η_C) ≤ tol`.
    #[default]
    Relative,
    /// Absolute residuals `‖Ax − y‖`, `‖grad‖`, `dist(−z̄, ∂h(y))` all `≤ tol`.
    Absolute,
}

#[derive(Clone, Debug)]
pub struct AlmConfig {
    pub option: InnerOption,
    /// Penalty base for option I.
    pub b: f64,
    pub beta0: f64,
    pub tol: f64,
    pub stop: StopMode,
    pub max_outer: usize,
    /// Inner iteration cap per outer step (option I), or the largest inner
    /// budget for the stochastic option I.
    pub inner_cap: usize,
    pub seed: u64,
    /// Fixed smoothness constants; estimated from the problem when absent.
    pub smoothness: Option<SmoothnessConfig>,
    /// Random points used to estimate the gradient bound.
    pub g_samples: usize,
    /// Free parameter in the recursive-momentum stepsize.
    pub storm_b: f64,
    pub correction: Correction,
}

impl Default for AlmConfig {
    fn default() -> Self {
        AlmConfig {
            option: InnerOption::I,
            b: 2.0,
            beta0: 1.0,
            tol: 1e-6,
            stop: StopMode::Relative,
            max_outer: 60,
            inner_cap: 1_000_000,
            seed: 0,
            smoothness: None,
            g_samples: 50,
            storm_b: 1.0,
            correction: Correction::SameSample,
        }
    }
}

impl AlmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 1.0 && self.b.is_finite()) {
            return Err(Error::Config(format!("penalty base must exceed 1, got {}", self.b)));
        }
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return Err(Error::Config(format!("beta0 must be positive, got {}", self.beta0)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_outer == 0 || self.inner_cap == 0 {
            return Err(Error::Config("max_outer and inner_cap must be at least 1".into()));
        }
        if !(self.storm_b > 0.0) {
            return Err(Error::Config(format!("storm b must be positive, got {}", self.storm_b)));
        }
        if let Some(s) = &self.smoothness {
            s.validate()?;
        }
        Ok(())
    }
}

/// Penalty parameter at outer iteration `k` (zero-based).
pub fn penalty_schedule(option: InnerOption, stochastic: bool, k: usize, b: f64) -> f64 {
    let k = k as f64;
    match (option, stochastic) {
        (InnerOption::I, _) => b.powf(k),
        (InnerOption::II, false) => 2f64.powf(k / 3.0),
        (InnerOption::II, true) => 2f64.powf(2.0 * k / 7.0),
    }
}

/// Fixed inner budget for option II at zero-based outer iteration `k`.
pub fn inner_budget(k: usize) -> usize {
    1usize << (k + 1).min(62)
}

/// `y = prox_{h/σ}(Ax − z/σ)`.
pub fn update_y(p: &CompositeProblem, sigma: f64, z: &Blocks, x: &Blocks) -> Result<Blocks> {
    p.h.prox(&p.shifted(sigma, z, x)?, 1.0 / sigma)
}

/// Dual stepsize `β_{k+1}` from the reference residual `r_ref` and the new
/// residual `r_next`. A vanishing `r_next` gives `β0`.
pub fn dual_stepsize(rule: DualRule, beta0: f64, r_ref: f64, r_next: f64, k: usize) -> f64 {
    if r_next <= 0.0 {
        return beta0;
    }
    let k1 = (k + 1) as f64;
    let l2 = ((k + 2) as f64).ln();
    let ratio = match rule {
        DualRule::Deterministic => r_ref * LN_2 * LN_2 / (r_next * k1 * k1 * l2),
        DualRule::Stochastic => r_ref * LN_2 * LN_2 / (r_next * k1 * l2 * l2),
    };
    beta0 * ratio.min(1.0)
}

/// `z − β(Ax − y)`.
pub fn dual_update(z: &Blocks, beta: f64, residual: &Blocks) -> Blocks {
    z.axpy(-beta, residual)
}

/// `z − σ(Ax − y)`.
pub fn zbar(z: &Blocks, sigma: f64, residual: &Blocks) -> Blocks {
    z.axpy(-sigma, residual)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResiduals {
    pub eta_p: f64,
    pub eta_d: f64,
    pub eta_c: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.eta_p.max(self.eta_d).max(self.eta_c)
    }
}

/// Riemannian gradient of `f − ⟨z, A·⟩` at `x` and the Euclidean `∇f(x)`.
fn lagrangian_rgrad(p: &CompositeProblem, x: &ManifoldPoint, z: &Blocks) -> Result<(TangentVector, Blocks)> {
    let gf = p.smooth.egrad(x.value());
    let g = gf.axpy(-1.0, &p.map.adjoint(z));
    Ok((p.manifold.riemannian_gradient(x, &g)?, gf))
}

/// Relative residuals
/// `η_p = ‖Ax − y‖/(1 + ‖Ax‖ + ‖y‖)`,
/// `η_d = ‖grad(f − ⟨z, A·⟩)(x)‖/(1 + ‖∇f(x)‖)`,
/// `η_C = ‖z − prox_{h*}(z − Ax)‖/(1 + ‖z‖)`.
/// The gradient norm is taken in the manifold's metric.
pub fn kkt_residuals(p: &CompositeProblem, x: &ManifoldPoint, y: &Blocks, z: &Blocks) -> Result<KktResiduals> {
    let ax = p.map.apply(x.value());
    ax.check_shape(y, "split variable")?;
    ax.check_shape(z, "dual variable")?;
    let eta_p = ax.distance(y) / (1.0 + ax.norm() + y.norm());
    let (g, gf) = lagrangian_rgrad(p, x, z)?;
    let eta_d = g.norm() / (1.0 + gf.norm());
    let eta_c = z.distance(&p.h.prox_conjugate(&(z - &ax))?) / (1.0 + z.norm());
    Ok(KktResiduals { eta_p, eta_d, eta_c })
}

/// `ψ_k` as a smooth oracle on the manifold; also records the largest
/// Euclidean gradient norm it has produced.
pub struct AlfOracle<'a> {
    problem: &'a CompositeProblem,
    sigma: f64,
    z: &'a Blocks,
    max_egrad: Cell<f64>,
}

impl<'a> AlfOracle<'a> {
    pub fn new(problem: &'a CompositeProblem, sigma: f64, z: &'a Blocks) -> Self {
        AlfOracle {
            problem,
            sigma,
            z,
            max_egrad: Cell::new(0.0),
        }
    }

    pub fn max_egrad_norm(&self) -> f64 {
        self.max_egrad.get()
    }

    fn observe(&self, g: &Blocks) {
        let n = g.norm();
        if n > self.max_egrad.get() {
            self.max_egrad.set(n);
        }
    }
}

impl SmoothOracle for AlfOracle<'_> {
    fn manifold(&self) -> &Manifold {
        &self.problem.manifold
    }

    fn value(&self, x: &ManifoldPoint) -> Result<f64> {
        self.problem.alf_value(self.sigma, self.z, x.value())
    }

    fn rgrad(&self, x: &ManifoldPoint) -> Result<TangentVector> {
        let g = self.problem.alf_egrad(self.sigma, self.z, x.value())?;
        self.observe(&g);
        self.problem.manifold.riemannian_gradient(x, &g)
    }

    fn value_and_rgrad(&self, x: &ManifoldPoint) -> Result<(f64, TangentVector)> {
        let (v, g) = self.problem.alf_value_and_egrad(self.sigma, self.z, x.value())?;
        self.observe(&g);
        Ok((v, self.problem.manifold.riemannian_gradient(x, &g)?))
    }
}

impl StochasticOracle for AlfOracle<'_> {
    fn manifold(&self) -> &Manifold {
        &self.problem.manifold
    }

    fn num_samples(&self) -> usize {
        self.problem.finite_sum().map_or(0, |fs| fs.batch_count())
    }

    fn rgrad_sample(&self, x: &ManifoldPoint, sample: usize) -> Result<TangentVector> {
        let g = self.problem.alf_stoch_egrad(self.sigma, self.z, x.value(), sample)?;
        self.observe(&g);
        self.problem.manifold.riemannian_gradient(x, &g)
    }
}

/// Per-outer-iteration diagnostics. Cumulative counters include this step.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterRecord {
    pub k: usize,
    pub sigma: f64,
    /// Dual stepsize `β_{k+1}` used for this step's dual update.
    pub beta: f64,
    /// Inner tolerance (option I only).
    pub eps: Option<f64>,
    pub inner_iters: u64,
    pub grad_evals: u64,
    pub prox_calls: u64,
    pub retractions: u64,
    pub objective: f64,
    pub residuals: KktResiduals,
    /// `‖Ax − y‖`.
    pub primal_residual: f64,
    /// `‖grad(f − ⟨z̄, A·⟩)(x)‖` in the manifold metric.
    pub stationarity: f64,
    /// Gradient norm of `ψ_k` at the returned inner iterate.
    pub inner_grad_norm: f64,
    /// Largest entrywise violation of `−z̄ ∈ ∂h(y)`.
    pub subgradient_violation: f64,
    /// Frobenius distance from `−z̄` to `∂h(y)`.
    pub subgradient_distance: f64,
    pub z_norm: f64,
    pub zbar_norm: f64,
    /// A priori bound on `‖z‖` implied by the dual stepsize rule.
    pub z_bound: f64,
    /// Bound `(ℓ_h + z_bound)/σ_k` on `‖Ax − y‖`.
    pub feasibility_bound: f64,
    pub lipschitz: f64,
    pub g_bound: f64,
    pub capped: bool,
    pub g_raised: bool,
    /// Inner solve has no checkable stopping certificate.
    pub unverified: bool,
    pub wall_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxOuter,
}

#[derive(Clone, Debug)]
pub struct AlmResult {
    pub x: ManifoldPoint,
    pub y: Blocks,
    pub z: Blocks,
    pub zbar: Blocks,
    pub records: Vec<OuterRecord>,
    pub termination: Termination,
}

impl AlmResult {
    pub fn last(&self) -> &OuterRecord {
        self.records.last().expect("at least one outer iteration")
    }
}

fn resolve_smoothness(p: &CompositeProblem, cfg: &AlmConfig) -> Result<SmoothnessConfig> {
    match cfg.smoothness {
        Some(s) => Ok(s),
        None => {
            let g = p.estimate_gradient_bound(1.0, cfg.g_samples, cfg.seed ^ 0x005e_ed0f_9b0d)?;
            Ok(SmoothnessConfig::for_manifold(&p.manifold, g))
        }
    }
}

fn stopped(cfg: &AlmConfig, rec: &OuterRecord) -> bool {
    match cfg.stop {
        StopMode::Relative => rec.residuals.max() <= cfg.tol,
        StopMode::Absolute => {
            rec.primal_residual <= cfg.tol
                && rec.stationarity <= cfg.tol
                && rec.subgradient_distance <= cfg.tol
        }
    }
}

/// State shared by both outer loops.
struct Outer<'a> {
    p: &'a CompositeProblem,
    cfg: &'a AlmConfig,
    rule: DualRule,
    smooth: SmoothnessConfig,
    x: ManifoldPoint,
    z: Blocks,
    r_ref: f64,
    z_bound: f64,
    grad_evals: u64,
    prox_calls: u64,
    retractions: u64,
    inner_iters: u64,
    start: Instant,
    records: Vec<OuterRecord>,
}

struct InnerResult {
    x: ManifoldPoint,
    iters: u64,
    grad_evals: u64,
    retractions: u64,
    grad_norm: f64,
    capped: bool,
    unverified: bool,
    max_egrad: f64,
    eps: Option<f64>,
    lipschitz: f64,
}

impl<'a> Outer<'a> {
    fn new(p: &'a CompositeProblem, cfg: &'a AlmConfig, rule: DualRule, x0: ManifoldPoint) -> Result<Self> {
        cfg.validate()?;
        let smooth = resolve_smoothness(p, cfg)?;
        let ax = p.map.apply(x0.value());
        let z = Blocks::zeros_like(&ax);
        // y⁰ = Ax⁰, so the initial residual is zero.
        let r0 = 0.0;
        Ok(Outer {
            p,
            cfg,
            rule,
            smooth,
            x: x0,
            z,
            r_ref: r0,
            z_bound: cfg.beta0 * PI * PI / 6.0 * r0,
            grad_evals: 0,
            prox_calls: 0,
            retractions: 0,
            inner_iters: 0,
            start: Instant::now(),
            records: Vec::new(),
        })
    }

    /// Applies the y-, z- and bookkeeping updates after an inner solve.
    fn finish_step(&mut self, k: usize, sigma: f64, inner: InnerResult) -> Result<(Blocks, Blocks, bool)> {
        let p = self.p;
        let x = inner.x;
        let v = p.shifted(sigma, &self.z, x.value())?;
        let y = p.h.prox(&v, 1.0 / sigma)?;
        let ax = p.map.apply(x.value());
        let residual = &ax - &y;
        let r = residual.norm();
        // Equal to z − σ(Ax − y), without the σ-amplified cancellation.
        let zb = p.h.moreau_grad(&v, 1.0 / sigma)?.scale(-1.0);

        if self.rule == DualRule::Stochastic && k == 0 {
            self.r_ref = r;
        }
        let beta = dual_stepsize(self.rule, self.cfg.beta0, self.r_ref, r, k);
        self.z = dual_update(&self.z, beta, &residual);
        if !self.z.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite(format!("dual iterates at outer iteration {k}")));
        }
        if self.rule == DualRule::Stochastic {
            let kk = (k + 1) as f64;
            let l2 = ((k + 2) as f64).ln();
            self.z_bound += self.cfg.beta0 * self.r_ref * LN_2 * LN_2 / (kk * l2 * l2);
        }

        self.grad_evals += inner.grad_evals;
        self.retractions += inner.retractions;
        self.inner_iters += inner.iters;
        self.prox_calls += inner.grad_evals + 1;

        let residuals = kkt_residuals(p, &x, &y, &zb)?;
        let (stat, _) = lagrangian_rgrad(p, &x, &zb)?;
        let neg = zb.scale(-1.0);
        let (sub_dist, sub_viol) = p.h.subdifferential_distance(&y, &neg)?;

        let g_raised = inner.max_egrad > self.smooth.g_bound;
        if g_raised {
            self.smooth.g_bound = 2.0 * inner.max_egrad;
        }

        let rec = OuterRecord {
            k,
            sigma,
            beta,
            eps: inner.eps,
            inner_iters: inner.iters,
            grad_evals: self.grad_evals,
            prox_calls: self.prox_calls,
            retractions: self.retractions,
            objective: p.objective(x.value())?,
            residuals,
            primal_residual: r,
            stationarity: stat.norm(),
            inner_grad_norm: inner.grad_norm,
            subgradient_violation: sub_viol,
            subgradient_distance: sub_dist,
            z_norm: self.z.norm(),
            zbar_norm: zb.norm(),
            z_bound: self.z_bound,
            feasibility_bound: (p.h.lipschitz_const() + self.z_bound) / sigma,
            lipschitz: inner.lipschitz,
            g_bound: self.smooth.g_bound,
            capped: inner.capped,
            g_raised,
            unverified: inner.unverified,
            wall_seconds: self.start.elapsed().as_secs_f64(),
        };
        let done = stopped(self.cfg, &rec);
        self.records.push(rec);
        self.x = x;
        Ok((y, zb, done))
    }

    fn into_result(self, y: Blocks, zb: Blocks, termination: Termination) -> AlmResult {
        AlmResult {
            x: self.x,
            y,
            z: self.z,
            zbar: zb,
            records: self.records,
            termination,
        }
    }
}

/// Deterministic augmented Lagrangian method with gradient-descent inner
/// solves, started from a seeded random point.
pub fn manial(p: &CompositeProblem, cfg: &AlmConfig) -> Result<AlmResult> {
    manial_from(p, cfg, p.manifold.random_point(cfg.seed))
}

pub fn manial_from(p: &CompositeProblem, cfg: &AlmConfig, x0: ManifoldPoint) -> Result<AlmResult> {
    let mut st = Outer::new(p, cfg, DualRule::Deterministic, x0)?;
    let mut last = None;
    for k in 0..cfg.max_outer {
        let sigma = penalty_schedule(cfg.option, false, k, cfg.b);
        let l = p.smoothness_constant(sigma, &st.smooth);
        let z = st.z.clone();
        let oracle = Counted::new(AlfOracle::new(p, sigma, &z));
        let inner = match cfg.option {
            InnerOption::I => {
                let eps = 1.0 / sigma;
                let out = rgd_until(&oracle, l, eps, cfg.inner_cap, st.x.clone())?;
                InnerResult {
                    x: out.x,
                    iters: out.iterations as u64,
                    grad_evals: out.grad_evals,
                    retractions: out.iterations as u64,
                    grad_norm: out.grad_norm,
                    capped: out.capped,
                    unverified: false,
                    max_egrad: oracle.inner().max_egrad_norm(),
                    eps: Some(eps),
                    lipschitz: l,
                }
            }
            InnerOption::II => {
                let t = inner_budget(k);
                let out = rgd(&oracle, l, t, st.x.clone())?;
                InnerResult {
                    x: out.x,
                    iters: t as u64,
                    grad_evals: out.grad_evals,
                    retractions: out.retractions,
                    grad_norm: out.grad_norm,
                    capped: false,
                    unverified: false,
                    max_egrad: oracle.inner().max_egrad_norm(),
                    eps: None,
                    lipschitz: l,
                }
            }
        };
        debug_assert_eq!(oracle.grad_evals(), inner.grad_evals);
        let (y, zb, done) = st.finish_step(k, sigma, inner)?;
        last = Some((y, zb));
        if done {
            let (y, zb) = last.take().unwrap();
            return Ok(st.into_result(y, zb, Termination::Converged));
        }
    }
    let (y, zb) = last.expect("max_outer >= 1");
    Ok(st.into_result(y, zb, Termination::MaxOuter))
}

/// Stochastic augmented Lagrangian method with recursive-momentum inner
/// solves over the problem's finite-sum batches.
pub fn stomanial(p: &CompositeProblem, cfg: &AlmConfig) -> Result<AlmResult> {
    stomanial_from(p, cfg, p.manifold.random_point(cfg.seed))
}

pub fn stomanial_from(p: &CompositeProblem, cfg: &AlmConfig, x0: ManifoldPoint) -> Result<AlmResult> {
    if p.finite_sum().map_or(0, |fs| fs.batch_count()) == 0 {
        return Err(Error::Config("stochastic solver needs a finite-sum objective".into()));
    }
    let mut st = Outer::new(p, cfg, DualRule::Stochastic, x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9));
    let mut last = None;
    for k in 0..cfg.max_outer {
        let sigma = penalty_schedule(cfg.option, true, k, cfg.b);
        let l = p.storm_lipschitz(sigma, &st.smooth);
        let params = rstorm_params(l, st.smooth.g_bound, cfg.storm_b)?;
        let (t, unverified, eps) = match cfg.option {
            InnerOption::II => (inner_budget(k), false, None),
            InnerOption::I => {
                // No computable certificate: budget O(ε⁻³), clipped to the cap.
                let eps = 1.0 / sigma;
                let t = (eps.powi(-3).ceil() as usize).clamp(1, cfg.inner_cap);
                (t, true, Some(eps))
            }
        };
        let z = st.z.clone();
        let oracle = Counted::new(AlfOracle::new(p, sigma, &z));
        let out = rstorm(&oracle, &params, t, st.x.clone(), cfg.correction, &mut rng)?;
        let grad_norm = SmoothOracle::rgrad(oracle.inner(), &out.x)?.norm();
        let inner = InnerResult {
            x: out.x,
            iters: t as u64,
            grad_evals: out.grad_evals,
            retractions: out.retractions,
            grad_norm,
            capped: false,
            unverified,
            max_egrad: oracle.inner().max_egrad_norm(),
            eps,
            lipschitz: l,
        };
        let (y, zb, done) = st.finish_step(k, sigma, inner)?;
        last = Some((y, zb));
        if done {
            let (y, zb) = last.take().unwrap();
            return Ok(st.into_result(y, zb, Termination::Converged));
        }
    }
    let (y, zb) = last.expect("max_outer >= 1");
    Ok(st.into_result(y, zb, Termination::MaxOuter))
}
