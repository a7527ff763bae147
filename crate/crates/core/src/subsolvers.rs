//! Inner solvers: fixed-step Riemannian gradient descent and the
//! recursive-momentum stochastic method, both counting gradient evaluations.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};
use crate::manifold::{Manifold, ManifoldPoint, TangentVector};

/// Deterministic first-order oracle for a smooth function on a manifold.
pub trait SmoothOracle {
    fn manifold(&self) -> &Manifold;

    fn value(&self, x: &ManifoldPoint) -> Result<f64>;

    fn rgrad(&self, x: &ManifoldPoint) -> Result<TangentVector>;

    fn value_and_rgrad(&self, x: &ManifoldPoint) -> Result<(f64, TangentVector)> {
        Ok((self.value(x)?, self.rgrad(x)?))
    }
}

/// Stochastic oracle over a finite sample space `0..num_samples()`. The same
/// sample id may be evaluated at any point and always gives the same result.
pub trait StochasticOracle {
    fn manifold(&self) -> &Manifold;

    fn num_samples(&self) -> usize;

    fn rgrad_sample(&self, x: &ManifoldPoint, sample: usize) -> Result<TangentVector>;
}

/// Wraps an oracle and counts gradient evaluations.
#[derive(Debug)]
pub struct Counted<O> {
    inner: O,
    grads: AtomicU64,
    values: AtomicU64,
}

impl<O> Counted<O> {
    pub fn new(inner: O) -> Self {
        Counted {
            inner,
            grads: AtomicU64::new(0),
            values: AtomicU64::new(0),
        }
    }

    pub fn grad_evals(&self) -> u64 {
        self.grads.load(Ordering::Relaxed)
    }

    pub fn value_evals(&self) -> u64 {
        self.values.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: SmoothOracle> SmoothOracle for Counted<O> {
    fn manifold(&self) -> &Manifold {
        self.inner.manifold()
    }

    fn value(&self, x: &ManifoldPoint) -> Result<f64> {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.inner.value(x)
    }

    fn rgrad(&self, x: &ManifoldPoint) -> Result<TangentVector> {
        self.grads.fetch_add(1, Ordering::Relaxed);
        self.inner.rgrad(x)
    }

    fn value_and_rgrad(&self, x: &ManifoldPoint) -> Result<(f64, TangentVector)> {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.grads.fetch_add(1, Ordering::Relaxed);
        self.inner.value_and_rgrad(x)
    }
}

impl<O: StochasticOracle> StochasticOracle for Counted<O> {
    fn manifold(&self) -> &Manifold {
        self.inner.manifold()
    }

    fn num_samples(&self) -> usize {
        self.inner.num_samples()
    }

    fn rgrad_sample(&self, x: &ManifoldPoint, sample: usize) -> Result<TangentVector> {
        self.grads.fetch_add(1, Ordering::Relaxed);
        self.inner.rgrad_sample(x, sample)
    }
}

fn finite_value(v: f64, what: &str, t: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} at iteration {t}: {v}")))
    }
}

fn finite_grad(g: TangentVector, what: &str, t: usize) -> Result<TangentVector> {
    if g.value().is_finite() {
        Ok(g)
    } else {
        Err(Error::NonFinite(format!("{what} at iteration {t}")))
    }
}

fn check_lipschitz(l: f64) -> Result<()> {
    if l > 0.0 && l.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("smoothness constant must be positive, got {l}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RgdStep {
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct RgdOutput {
    /// Iterate with the smallest observed gradient norm.
    pub x: ManifoldPoint,
    pub value: f64,
    pub grad_norm: f64,
    pub best_index: usize,
    pub grad_evals: u64,
    pub retractions: u64,
    /// One entry per iterate `x_0, …, x_T`.
    pub trace: Vec<RgdStep>,
}

/// `T` steps of `x_{t+1} = R_{x_t}(−grad ψ(x_t)/L)`.
pub fn rgd<O: SmoothOracle + ?Sized>(
    oracle: &O,
    l: f64,
    iterations: usize,
    x0: ManifoldPoint,
) -> Result<RgdOutput> {
    check_lipschitz(l)?;
    if iterations == 0 {
        return Err(Error::Config("RGD needs at least one iteration".into()));
    }
    let m = oracle.manifold();
    let (v, g) = oracle.value_and_rgrad(&x0)?;
    let mut value = finite_value(v, "objective", 0)?;
    let mut grad = finite_grad(g, "gradient", 0)?;
    let mut x = x0;
    let mut trace = Vec::with_capacity(iterations + 1);
    trace.push(RgdStep {
        value,
        grad_norm: grad.norm(),
    });
    let mut best = (x.clone(), value, grad.norm(), 0usize);
    for t in 1..=iterations {
        x = m.retract(&grad.scale(-1.0 / l))?;
        let (v, g) = oracle.value_and_rgrad(&x)?;
        value = finite_value(v, "objective", t)?;
        grad = finite_grad(g, "gradient", t)?;
        let gn = grad.norm();
        trace.push(RgdStep { value, grad_norm: gn });
        if gn < best.2 {
            best = (x.clone(), value, gn, t);
        }
    }
    Ok(RgdOutput {
        x: best.0,
        value: best.1,
        grad_norm: best.2,
        best_index: best.3,
        grad_evals: iterations as u64 + 1,
        retractions: iterations as u64,
        trace,
    })
}

#[derive(Clone, Debug)]
pub struct RgdUntilOutput {
    pub x: ManifoldPoint,
    pub value: f64,
    pub grad: TangentVector,
    pub grad_norm: f64,
    pub iterations: usize,
    pub grad_evals: u64,
    pub capped: bool,
}

/// Gradient descent with step `1/L` until `‖grad ψ‖ ≤ eps` or `cap` steps.
/// Hitting the cap is reported through `capped`, not as an error.
pub fn rgd_until<O: SmoothOracle + ?Sized>(
    oracle: &O,
    l: f64,
    eps: f64,
    cap: usize,
    x0: ManifoldPoint,
) -> Result<RgdUntilOutput> {
    check_lipschitz(l)?;
    if !(eps > 0.0) || cap == 0 {
        return Err(Error::Config(format!("need eps > 0 and cap >= 1, got {eps}, {cap}")));
    }
    let m = oracle.manifold();
    let mut grad = finite_grad(oracle.rgrad(&x0)?, "gradient", 0)?;
    let mut x = x0;
    let mut gn = grad.norm();
    let mut iterations = 0;
    while gn > eps && iterations < cap {
        x = m.retract(&grad.scale(-1.0 / l))?;
        iterations += 1;
        grad = finite_grad(oracle.rgrad(&x)?, "gradient", iterations)?;
        gn = grad.norm();
    }
    let value = finite_value(oracle.value(&x)?, "objective", iterations)?;
    Ok(RgdUntilOutput {
        x,
        value,
        grad,
        grad_norm: gn,
        iterations,
        grad_evals: iterations as u64 + 1,
        capped: gn > eps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RStormParams {
    pub kappa: f64,
    pub c: f64,
    pub w: f64,
    pub b: f64,
    pub l: f64,
    pub g: f64,
}

/// `κ = bG^{2/3}/L`, `c = 10L² + G²/(7Lκ³)`, `w = max((4Lκ)³, 2G², (cκ/(4L))³)`.
pub fn rstorm_params(l: f64, g: f64, b: f64) -> Result<RStormParams> {
    for (name, v) in [("L", l), ("G", g), ("b", b)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    let kappa = b * g.powf(2.0 / 3.0) / l;
    let c = 10.0 * l * l + g * g / (7.0 * l * kappa.powi(3));
    let w = (4.0 * l * kappa)
        .powi(3)
        .max(2.0 * g * g)
        .max((c * kappa / (4.0 * l)).powi(3));
    Ok(RStormParams { kappa, c, w, b, l, g })
}

/// How the momentum correction `d_t − g(x_t; ·)` is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Correction {
    /// Evaluate the fresh sample `ξ_{t+1}` at both `x_{t+1}` and `x_t`.
    #[default]
    SameSample,
    /// Reuse the stored `g(x_t; ξ_t)`. With `d_1 = g(x_1; ξ_1)` the correction
    /// is identically zero and the method degenerates to adaptive-step SGD.
    Stored,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RStormStep {
    pub eta: f64,
    pub a: f64,
    pub sample_grad_norm: f64,
    pub d_norm: f64,
}

#[derive(Clone, Debug)]
pub struct RStormOutput {
    /// Uniformly drawn iterate from `x_1, …, x_T`.
    pub x: ManifoldPoint,
    pub index: usize,
    /// Iterate with the smallest sampled gradient norm, for diagnostics.
    pub best: ManifoldPoint,
    pub best_sample_grad_norm: f64,
    pub grad_evals: u64,
    pub retractions: u64,
    /// Entry `t` describes `x_{t+1}`: `η_{t+1}` and `a_{t+1}` as used to leave it.
    pub trace: Vec<RStormStep>,
}

pub fn rstorm<O, R>(
    oracle: &O,
    params: &RStormParams,
    iterations: usize,
    x1: ManifoldPoint,
    correction: Correction,
    rng: &mut R,
) -> Result<RStormOutput>
where
    O: StochasticOracle + ?Sized,
    R: Rng + ?Sized,
{
    if iterations == 0 {
        return Err(Error::Config("RStorm needs at least one iteration".into()));
    }
    let n = oracle.num_samples();
    if n == 0 {
        return Err(Error::Config("stochastic oracle has no samples".into()));
    }
    let m = oracle.manifold();
    let eta_cap = 1.0 / (4.0 * params.l);
    let pick = rng.random_range(0..iterations);

    let xi = rng.random_range(0..n);
    let mut g = finite_grad(oracle.rgrad_sample(&x1, xi)?, "sample gradient", 1)?;
    let mut evals = 1u64;
    let mut d = g.clone();
    let mut sum_g2 = g.norm().powi(2);
    let mut x = x1;
    let mut chosen = (pick == 0).then(|| x.clone());
    let mut best = (x.clone(), g.norm());
    let mut trace = Vec::with_capacity(iterations);

    for t in 1..iterations {
        let eta = params.kappa / (params.w + sum_g2).cbrt();
        if !(eta > 0.0 && eta <= eta_cap * (1.0 + 1e-12)) {
            return Err(Error::Invariant(format!(
                "stepsize {eta} outside (0, 1/(4L)] at iteration {t}"
            )));
        }
        let a = params.c * eta * eta;
        if !(a > 0.0 && a <= 1.0 + 1e-12) {
            return Err(Error::Invariant(format!("momentum weight {a} outside (0, 1] at iteration {t}")));
        }
        trace.push(RStormStep {
            eta,
            a,
            sample_grad_norm: g.norm(),
            d_norm: d.norm(),
        });

        let next = m.retract(&d.scale(-eta))?;
        let xi = rng.random_range(0..n);
        let g_next = finite_grad(oracle.rgrad_sample(&next, xi)?, "sample gradient", t + 1)?;
        evals += 1;
        let g_prev = match correction {
            Correction::SameSample => {
                evals += 1;
                finite_grad(oracle.rgrad_sample(&x, xi)?, "sample gradient", t)?
            }
            Correction::Stored => g,
        };
        let carried = m.transport(&next, &d.axpy(-1.0, &g_prev))?;
        d = g_next.axpy(1.0 - a, &carried);
        if !d.value().is_finite() {
            return Err(Error::NonFinite(format!("momentum direction at iteration {}", t + 1)));
        }
        g = g_next;
        sum_g2 += g.norm().powi(2);
        x = next;
        if pick == t {
            chosen = Some(x.clone());
        }
        if g.norm() < best.1 {
            best = (x.clone(), g.norm());
        }
    }
    let eta = params.kappa / (params.w + sum_g2).cbrt();
    trace.push(RStormStep {
        eta,
        a: params.c * eta * eta,
        sample_grad_norm: g.norm(),
        d_norm: d.norm(),
    });

    Ok(RStormOutput {
        x: chosen.expect("sampled index lies in 0..iterations"),
        index: pick + 1,
        best: best.0,
        best_sample_grad_norm: best.1,
        grad_evals: evals,
        retractions: iterations as u64 - 1,
        trace,
    })
}
