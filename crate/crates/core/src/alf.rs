//! The smoothed augmented Lagrangian
//!
//! ```text
//! ψ(x) = L_σ(x, z) = f(x) + M_h^{1/σ}(Ax − z/σ) − ‖z‖²/(2σ)
//! ∇ψ(x) = ∇f(x) + A*∇M_h^{1/σ}(Ax − z/σ)
//! ```
//!
//! together with the problem container and the retraction-smoothness
//! constants used to pick inner stepsizes.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::blocks::{spectral_norm, Blocks};
use crate::error::{Error, Result};
use crate::manifold::{Manifold, ManifoldPoint, TangentVector};
use crate::nonsmooth::NonsmoothTerm;

/// Linear map `A` from the manifold's ambient space to the dual space.
#[derive(Clone, Debug)]
pub enum LinearMap {
    Identity,
    /// Left multiplication `X ↦ MX`, applied to every block.
    Left(Arc<DMatrix<f64>>),
}

impl LinearMap {
    pub fn left(m: DMatrix<f64>) -> Self {
        LinearMap::Left(Arc::new(m))
    }

    pub fn apply(&self, x: &Blocks) -> Blocks {
        match self {
            LinearMap::Identity => x.clone(),
            LinearMap::Left(m) => Blocks(x.iter().map(|b| m.as_ref() * b).collect()),
        }
    }

    pub fn adjoint(&self, w: &Blocks) -> Blocks {
        match self {
            LinearMap::Identity => w.clone(),
            LinearMap::Left(m) => Blocks(w.iter().map(|b| m.tr_mul(b)).collect()),
        }
    }

    pub fn operator_norm(&self) -> f64 {
        match self {
            LinearMap::Identity => 1.0,
            LinearMap::Left(m) => spectral_norm(m),
        }
    }

    pub fn codomain_shapes(&self, domain: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
        match self {
            LinearMap::Identity => Ok(domain.to_vec()),
            LinearMap::Left(m) => domain
                .iter()
                .map(|&(n, r)| {
                    if m.ncols() == n {
                        Ok((m.nrows(), r))
                    } else {
                        Err(Error::Dimension(format!(
                            "linear map has {} columns but block has {n} rows",
                            m.ncols()
                        )))
                    }
                })
                .collect(),
        }
    }
}

/// The smooth part `f`.
pub trait SmoothObjective: Send + Sync {
    fn value(&self, x: &Blocks) -> f64;

    fn egrad(&self, x: &Blocks) -> Blocks;

    fn value_and_egrad(&self, x: &Blocks) -> (f64, Blocks) {
        (self.value(x), self.egrad(x))
    }

    /// Finite-sum structure `f = (1/N) Σ_j f_j`, when available.
    fn finite_sum(&self) -> Option<&dyn FiniteSum> {
        None
    }
}

/// Batch oracles whose uniform average is the full objective.
pub trait FiniteSum: Send + Sync {
    fn batch_count(&self) -> usize;

    fn batch_value(&self, x: &Blocks, batch: usize) -> f64;

    fn batch_egrad(&self, x: &Blocks, batch: usize) -> Blocks;
}

/// `min_{x ∈ M} f(x) + h(Ax)`.
#[derive(Clone)]
pub struct CompositeProblem {
    pub manifold: Manifold,
    pub smooth: Arc<dyn SmoothObjective>,
    pub map: LinearMap,
    pub h: NonsmoothTerm,
    /// Lipschitz constant of `∇f`.
    pub grad_lipschitz: f64,
}

impl std::fmt::Debug for CompositeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompositeProblem")
            .field("manifold", &self.manifold.shapes())
            .field("map", &self.map)
            .field("h", &self.h)
            .field("grad_lipschitz", &self.grad_lipschitz)
            .finish()
    }
}

/// Constants of the retraction bounds `‖R_x(u) − x‖ ≤ α‖u‖`,
/// `‖R_x(u) − x − u‖ ≤ β‖u‖²`, the gradient bound `G`, and the projection /
/// retraction-curvature constants `L_p`, `ζ` used by the stochastic solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessConfig {
    pub alpha: f64,
    pub beta: f64,
    pub g_bound: f64,
    pub lp: f64,
    pub zeta: f64,
}

impl SmoothnessConfig {
    pub fn new(alpha: f64, beta: f64, g_bound: f64, lp: f64, zeta: f64) -> Result<Self> {
        let cfg = SmoothnessConfig {
            alpha,
            beta,
            g_bound,
            lp,
            zeta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults `α = β = L_p = ζ = 1`, expressed in the manifold's metric:
    /// for generalized Stiefel factors `α` is scaled by `√d` and `β` by `d`,
    /// with `d = 1/λ_min(B)`.
    pub fn for_manifold(manifold: &Manifold, g_bound: f64) -> Self {
        let d = manifold.metric_distortion();
        SmoothnessConfig {
            alpha: d.sqrt(),
            beta: d,
            g_bound,
            lp: 1.0,
            zeta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.g_bound, self.lp, self.zeta];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("smoothness constants must be positive: {self:?}")))
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("penalty parameter must be positive, got {sigma}")))
    }
}

impl CompositeProblem {
    pub fn new(
        manifold: Manifold,
        smooth: Arc<dyn SmoothObjective>,
        map: LinearMap,
        h: NonsmoothTerm,
        grad_lipschitz: f64,
    ) -> Result<Self> {
        let codomain = map.codomain_shapes(&manifold.shapes())?;
        let h_shapes: Vec<(usize, usize)> = h.blocks().into_iter().map(|(_, r, c)| (r, c)).collect();
        if codomain != h_shapes {
            return Err(Error::Dimension(format!(
                "nonsmooth term shapes {h_shapes:?} do not match the range of A {codomain:?}"
            )));
        }
        if !(grad_lipschitz >= 0.0 && grad_lipschitz.is_finite()) {
            return Err(Error::Config(format!(
                "gradient Lipschitz constant must be finite and >= 0, got {grad_lipschitz}"
            )));
        }
        Ok(CompositeProblem {
            manifold,
            smooth,
            map,
            h,
            grad_lipschitz,
        })
    }

    pub fn finite_sum(&self) -> Option<&dyn FiniteSum> {
        self.smooth.finite_sum()
    }

    /// `φ(x) = f(x) + h(Ax)`.
    pub fn objective(&self, x: &Blocks) -> Result<f64> {
        Ok(self.smooth.value(x) + self.h.value(&self.map.apply(x))?)
    }

    /// `Ax − z/σ`, the argument of the Moreau envelope.
    pub fn shifted(&self, sigma: f64, z: &Blocks, x: &Blocks) -> Result<Blocks> {
        check_sigma(sigma)?;
        let ax = self.map.apply(x);
        ax.check_shape(z, "dual variable")?;
        Ok(ax.axpy(-1.0 / sigma, z))
    }

    /// The part of `ψ` that does not depend on `f`.
    fn penalty_value(&self, sigma: f64, z: &Blocks, v: &Blocks) -> Result<f64> {
        Ok(self.h.moreau_value(v, 1.0 / sigma)? - z.norm_sq() / (2.0 * sigma))
    }

    fn penalty_egrad(&self, sigma: f64, v: &Blocks) -> Result<Blocks> {
        Ok(self.map.adjoint(&self.h.moreau_grad(v, 1.0 / sigma)?))
    }

    pub fn alf_value(&self, sigma: f64, z: &Blocks, x: &Blocks) -> Result<f64> {
        let v = self.shifted(sigma, z, x)?;
        Ok(self.smooth.value(x) + self.penalty_value(sigma, z, &v)?)
    }

    pub fn alf_egrad(&self, sigma: f64, z: &Blocks, x: &Blocks) -> Result<Blocks> {
        let v = self.shifted(sigma, z, x)?;
        Ok(&self.smooth.egrad(x) + &self.penalty_egrad(sigma, &v)?)
    }

    /// Value and Euclidean gradient of `ψ` in one pass over `f`.
    pub fn alf_value_and_egrad(&self, sigma: f64, z: &Blocks, x: &Blocks) -> Result<(f64, Blocks)> {
        let v = self.shifted(sigma, z, x)?;
        let (fv, fg) = self.smooth.value_and_egrad(x);
        Ok((
            fv + self.penalty_value(sigma, z, &v)?,
            &fg + &self.penalty_egrad(sigma, &v)?,
        ))
    }

    pub fn alf_rgrad(&self, sigma: f64, z: &Blocks, x: &ManifoldPoint) -> Result<TangentVector> {
        let g = self.alf_egrad(sigma, z, x.value())?;
        self.manifold.riemannian_gradient(x, &g)
    }

    /// `∇f(x, ξ_j) + A*∇M_h^{1/σ}(Ax − z/σ)` for batch `j`.
    pub fn alf_stoch_egrad(&self, sigma: f64, z: &Blocks, x: &Blocks, batch: usize) -> Result<Blocks> {
        let fs = self
            .finite_sum()
            .ok_or_else(|| Error::Config("problem has no finite-sum structure".into()))?;
        if batch >= fs.batch_count() {
            return Err(Error::Config(format!(
                "batch index {batch} out of range (have {})",
                fs.batch_count()
            )));
        }
        let v = self.shifted(sigma, z, x)?;
        Ok(&fs.batch_egrad(x, batch) + &self.penalty_egrad(sigma, &v)?)
    }

    /// `L = α²(ℓ_∇f + σ‖A‖²) + 2Gβ`.
    pub fn smoothness_constant(&self, sigma: f64, cfg: &SmoothnessConfig) -> f64 {
        let a = self.map.operator_norm();
        cfg.alpha * cfg.alpha * (self.grad_lipschitz + sigma * a * a) + 2.0 * cfg.g_bound * cfg.beta
    }

    /// `max(L̂, L̄)` with `L̄ = (αL_p + ζ)G + αℓ_∇f + σ‖A‖²`: a constant valid
    /// both for retraction smoothness and for the transported-gradient
    /// Lipschitz bound needed by the recursive-momentum solver.
    pub fn storm_lipschitz(&self, sigma: f64, cfg: &SmoothnessConfig) -> f64 {
        let a = self.map.operator_norm();
        let l_bar = (cfg.alpha * cfg.lp + cfg.zeta) * cfg.g_bound
            + cfg.alpha * self.grad_lipschitz
            + sigma * a * a;
        self.smoothness_constant(sigma, cfg).max(l_bar)
    }

    /// Twice the largest `‖∇ψ‖` (with `z = 0`) over `samples` random points,
    /// including every batch gradient when the problem is a finite sum.
    pub fn estimate_gradient_bound(&self, sigma: f64, samples: usize, seed: u64) -> Result<f64> {
        let mut best = 0.0_f64;
        for s in 0..samples.max(1) {
            let x = self.manifold.random_point(seed.wrapping_add(s as u64));
            let z = Blocks::zeros_like(&self.map.apply(x.value()));
            best = best.max(self.alf_egrad(sigma, &z, x.value())?.norm());
            if let Some(fs) = self.finite_sum() {
                for j in 0..fs.batch_count() {
                    best = best.max(self.alf_stoch_egrad(sigma, &z, x.value(), j)?.norm());
                }
            }
        }
        Ok(2.0 * best.max(f64::MIN_POSITIVE))
    }

    /// Largest relative error between directional derivatives of `f` and
    /// central differences along random tangent directions.
    pub fn gradient_check(&self, samples: usize, seed: u64) -> f64 {
        let mut worst = 0.0_f64;
        for s in 0..samples {
            let x = self.manifold.random_point(seed.wrapping_add(2 * s as u64));
            let d = self.manifold.random_point(seed.wrapping_add(2 * s as u64 + 1));
            let d = d.value();
            let g = self.smooth.egrad(x.value());
            let h = 1e-6;
            let fp = self.smooth.value(&x.value().axpy(h, d));
            let fm = self.smooth.value(&x.value().axpy(-h, d));
            let fd = (fp - fm) / (2.0 * h);
            let an = g.inner(d);
            worst = worst.max((fd - an).abs() / an.abs().max(1.0));
        }
        worst
    }
}
