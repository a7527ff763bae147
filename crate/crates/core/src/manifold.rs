//! Stiefel, generalized Stiefel and product manifolds.
//!
//! Points and tangent vectors are [`Blocks`]: one `n×r` matrix per factor.
//! The generalized Stiefel manifold `{X : XᵀBX = I}` carries the metric
//! `⟨u, v⟩ = tr(uᵀBv)`, which gives closed-form tangent projections. The
//! retraction is the polar factor (B-orthonormal polar factor in the
//! generalized case) and vector transport is projection onto the destination
//! tangent space.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::blocks::{sym, Blocks};
use crate::error::{Error, Result};

/// Feasibility tolerance for points on the manifold.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Singular values below this fraction of the largest are treated as zero
/// by the polar factor.
pub const POLAR_RANK_TOL: f64 = 1e-14;

const SYMMETRY_TOL: f64 = 1e-12;

/// A symmetric positive-definite matrix defining a generalized Stiefel
/// constraint, with its Cholesky factor and inverse cached.
#[derive(Debug)]
pub struct SpdMetric {
    b: DMatrix<f64>,
    chol_upper: DMatrix<f64>,
    b_inv: DMatrix<f64>,
    lambda_min: f64,
    lambda_max: f64,
}

impl SpdMetric {
    pub fn new(b: DMatrix<f64>) -> Result<Self> {
        if !b.is_square() || b.is_empty() {
            return Err(Error::Dimension(format!(
                "metric matrix must be square and nonempty, got {:?}",
                b.shape()
            )));
        }
        let asym = (&b - b.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidManifold(format!(
                "metric matrix is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let eig = b.clone().symmetric_eigen();
        let lambda_min = eig.eigenvalues.min();
        let lambda_max = eig.eigenvalues.max();
        if lambda_min <= 0.0 {
            return Err(Error::NotPositiveDefinite(lambda_min));
        }
        let chol = b
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite(lambda_min))?;
        let b_inv = chol.inverse();
        Ok(SpdMetric {
            chol_upper: chol.l().transpose(),
            b,
            b_inv,
            lambda_min,
            lambda_max,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }
}

#[derive(Clone, Debug)]
pub enum Manifold {
    Stiefel { n: usize, r: usize },
    GeneralizedStiefel { n: usize, r: usize, metric: Arc<SpdMetric> },
    Product(Vec<Manifold>),
}

/// A feasible point, tagged with its manifold.
#[derive(Clone, Debug)]
pub struct ManifoldPoint {
    manifold: Manifold,
    value: Blocks,
}

/// A tangent vector together with its base point.
#[derive(Clone, Debug)]
pub struct TangentVector {
    base: ManifoldPoint,
    value: Blocks,
}

impl ManifoldPoint {
    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn value(&self) -> &Blocks {
        &self.value
    }

    pub fn into_value(self) -> Blocks {
        self.value
    }

    /// First (or only) block.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.value[0]
    }
}

impl TangentVector {
    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn value(&self) -> &Blocks {
        &self.value
    }

    pub fn into_value(self) -> Blocks {
        self.value
    }

    /// Norm in the Riemannian metric at the base point.
    pub fn norm(&self) -> f64 {
        self.base.manifold.inner(&self.value, &self.value).sqrt()
    }

    pub fn scale(&self, s: f64) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            value: self.value.scale(s),
        }
    }

    /// `self + s * other`; both vectors must share a base point.
    pub fn axpy(&self, s: f64, other: &TangentVector) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            value: self.value.axpy(s, &other.value),
        }
    }
}

impl Manifold {
    pub fn stiefel(n: usize, r: usize) -> Result<Self> {
        if r == 0 || n < r {
            return Err(Error::InvalidManifold(format!(
                "Stiefel manifold needs n >= r >= 1, got n={n}, r={r}"
            )));
        }
        Ok(Manifold::Stiefel { n, r })
    }

    pub fn generalized_stiefel(b: DMatrix<f64>, r: usize) -> Result<Self> {
        let n = b.nrows();
        if r == 0 || n < r {
            return Err(Error::InvalidManifold(format!(
                "generalized Stiefel manifold needs n >= r >= 1, got n={n}, r={r}"
            )));
        }
        Ok(Manifold::GeneralizedStiefel {
            n,
            r,
            metric: Arc::new(SpdMetric::new(b)?),
        })
    }

    pub fn product(components: Vec<Manifold>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidManifold(
                "product manifold needs at least one component".into(),
            ));
        }
        Ok(Manifold::Product(components))
    }

    /// The non-product factors, in block order.
    pub fn leaves(&self) -> Vec<&Manifold> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Manifold>) {
        match self {
            Manifold::Product(cs) => cs.iter().for_each(|c| c.collect_leaves(out)),
            leaf => out.push(leaf),
        }
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.leaves()
            .into_iter()
            .map(|m| match m {
                Manifold::Stiefel { n, r } | Manifold::GeneralizedStiefel { n, r, .. } => (*n, *r),
                Manifold::Product(_) => unreachable!(),
            })
            .collect()
    }

    pub fn dimension(&self) -> usize {
        self.shapes()
            .iter()
            .map(|&(n, r)| n * r - r * (r + 1) / 2)
            .sum()
    }

    /// Largest `1/λ_min(B)` over generalized factors (1 for plain Stiefel).
    /// Converts Euclidean bounds into bounds in the Riemannian metric.
    pub fn metric_distortion(&self) -> f64 {
        self.leaves()
            .into_iter()
            .map(|m| match m {
                Manifold::GeneralizedStiefel { metric, .. } => 1.0 / metric.lambda_min,
                _ => 1.0,
            })
            .fold(1.0, f64::max)
    }

    fn check_value(&self, value: &Blocks, what: &str) -> Result<()> {
        let shapes = self.shapes();
        if value.shapes() != shapes {
            return Err(Error::Dimension(format!(
                "{what}: manifold expects shapes {shapes:?}, got {:?}",
                value.shapes()
            )));
        }
        Ok(())
    }

    fn check_point(&self, x: &ManifoldPoint) -> Result<()> {
        self.check_value(&x.value, "point")
    }

    /// Wraps `value` as a point. Values outside the feasibility tolerance are
    /// re-orthonormalized once and rejected if still infeasible.
    pub fn point(&self, value: Blocks) -> Result<ManifoldPoint> {
        self.check_value(&value, "point")?;
        if !value.is_finite() {
            return Err(Error::NonFinite("point".into()));
        }
        if self.feasibility_error(&value) <= FEASIBILITY_TOL {
            return Ok(ManifoldPoint {
                manifold: self.clone(),
                value,
            });
        }
        let repaired = self.orthonormalize(&value);
        let err = self.feasibility_error(&repaired);
        if err <= FEASIBILITY_TOL {
            Ok(ManifoldPoint {
                manifold: self.clone(),
                value: repaired,
            })
        } else {
            Err(Error::Infeasible(err))
        }
    }

    /// Wraps `value` as a tangent vector at `x` without projecting.
    pub fn tangent(&self, x: &ManifoldPoint, value: Blocks) -> Result<TangentVector> {
        self.check_point(x)?;
        self.check_value(&value, "tangent vector")?;
        Ok(TangentVector {
            base: x.clone(),
            value,
        })
    }

    pub fn zero_tangent(&self, x: &ManifoldPoint) -> TangentVector {
        TangentVector {
            base: x.clone(),
            value: Blocks::zeros_like(&x.value),
        }
    }

    /// `‖XᵀX − I‖_F` (or `‖XᵀBX − I‖_F`), maximized over product factors.
    pub fn feasibility_error(&self, value: &Blocks) -> f64 {
        self.leaves()
            .into_iter()
            .zip(value.iter())
            .map(|(leaf, x)| {
                let gram = match leaf {
                    Manifold::GeneralizedStiefel { metric, .. } => x.transpose() * (&metric.b * x),
                    _ => x.transpose() * x,
                };
                let r = gram.nrows();
                (gram - DMatrix::<f64>::identity(r, r)).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `‖XᵀΞ + ΞᵀX‖_F` (B-weighted for generalized factors), maximized over
    /// factors. Zero exactly on the tangent space.
    pub fn tangency_residual(&self, x: &ManifoldPoint, xi: &Blocks) -> f64 {
        self.leaves()
            .into_iter()
            .zip(x.value.iter().zip(xi.iter()))
            .map(|(leaf, (x, xi))| {
                let m = match leaf {
                    Manifold::GeneralizedStiefel { metric, .. } => x.transpose() * (&metric.b * xi),
                    _ => x.transpose() * xi,
                };
                (&m + m.transpose()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Riemannian inner product of two ambient matrices.
    pub fn inner(&self, u: &Blocks, v: &Blocks) -> f64 {
        self.leaves()
            .into_iter()
            .zip(u.iter().zip(v.iter()))
            .map(|(leaf, (u, v))| match leaf {
                Manifold::GeneralizedStiefel { metric, .. } => u.dot(&(&metric.b * v)),
                _ => u.dot(v),
            })
            .sum()
    }

    /// Orthogonal projection (in the manifold's metric) onto `T_x M`:
    /// `U − X sym(XᵀU)` for Stiefel, `U − X sym(XᵀBU)` for generalized Stiefel.
    pub fn project_tangent(&self, x: &ManifoldPoint, u: &Blocks) -> Result<TangentVector> {
        self.check_point(x)?;
        self.check_value(u, "projected matrix")?;
        let value = Blocks(
            self.leaves()
                .into_iter()
                .zip(x.value.iter().zip(u.iter()))
                .map(|(leaf, (x, u))| project_leaf(leaf, x, u))
                .collect(),
        );
        Ok(TangentVector {
            base: x.clone(),
            value,
        })
    }

    /// Riemannian gradient from a Euclidean gradient. For generalized factors
    /// the metric gradient is the projection of `B⁻¹∇f`.
    pub fn riemannian_gradient(&self, x: &ManifoldPoint, egrad: &Blocks) -> Result<TangentVector> {
        self.check_point(x)?;
        self.check_value(egrad, "Euclidean gradient")?;
        let value = Blocks(
            self.leaves()
                .into_iter()
                .zip(x.value.iter().zip(egrad.iter()))
                .map(|(leaf, (x, g))| match leaf {
                    // XᵀB(B⁻¹G) = XᵀG, so the B-product in the projection drops out.
                    Manifold::GeneralizedStiefel { metric, .. } => &metric.b_inv * g - x * sym(&x.tr_mul(g)),
                    _ => project_leaf(leaf, x, g),
                })
                .collect(),
        );
        Ok(TangentVector {
            base: x.clone(),
            value,
        })
    }

    /// Polar retraction `R_x(ξ) = (x+ξ)((x+ξ)ᵀ(x+ξ))^{-1/2}`; `R_x(0) = x`.
    pub fn retract(&self, xi: &TangentVector) -> Result<ManifoldPoint> {
        let x = &xi.base;
        self.check_point(x)?;
        self.check_value(&xi.value, "tangent vector")?;
        if !xi.value.is_finite() {
            return Err(Error::NonFinite("retraction direction".into()));
        }
        if xi.value.iter().all(|m| m.iter().all(|&v| v == 0.0)) {
            return Ok(x.clone());
        }
        let moved = &x.value + &xi.value;
        let value = Blocks(
            self.leaves()
                .into_iter()
                .zip(moved.iter())
                .map(|(leaf, y)| match leaf {
                    Manifold::GeneralizedStiefel { metric, .. } => gram_polar(y, &y.tr_mul(&(&metric.b * y))),
                    _ => gram_polar(y, &y.tr_mul(y)),
                })
                .collect(),
        );
        Ok(ManifoldPoint {
            manifold: self.clone(),
            value,
        })
    }

    /// Projection transport: `T_x^y(ξ) = P_{T_y M}(ξ)`.
    pub fn transport(&self, y: &ManifoldPoint, xi: &TangentVector) -> Result<TangentVector> {
        self.check_value(&xi.value, "tangent vector")?;
        self.project_tangent(y, &xi.value)
    }

    /// Deterministic random point: the (B-)orthonormal polar factor of a
    /// standard Gaussian matrix per factor.
    pub fn random_point(&self, seed: u64) -> ManifoldPoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = Blocks(
            self.shapes()
                .into_iter()
                .map(|(n, r)| DMatrix::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng)))
                .collect(),
        );
        ManifoldPoint {
            manifold: self.clone(),
            value: self.orthonormalize(&raw),
        }
    }

    /// Random tangent vector at `x` with standard Gaussian ambient entries,
    /// projected.
    pub fn random_tangent(&self, x: &ManifoldPoint, seed: u64) -> TangentVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = Blocks(
            x.value
                .iter()
                .map(|m| DMatrix::from_fn(m.nrows(), m.ncols(), |_, _| StandardNormal.sample(&mut rng)))
                .collect(),
        );
        self.project_tangent(x, &raw).expect("shapes match by construction")
    }

    fn orthonormalize(&self, value: &Blocks) -> Blocks {
        Blocks(
            self.leaves()
                .into_iter()
                .zip(value.iter())
                .map(|(leaf, y)| match leaf {
                    Manifold::GeneralizedStiefel { metric, .. } => {
                        // W = Lᵀ Y, polar(W) = UVᵀ, result = L⁻ᵀ UVᵀ.
                        let w = &metric.chol_upper * y;
                        let q = polar_factor(&w);
                        metric
                            .chol_upper
                            .solve_upper_triangular(&q)
                            .expect("Cholesky factor is nonsingular")
                    }
                    _ => polar_factor(y),
                })
                .collect(),
        )
    }
}

fn project_leaf(leaf: &Manifold, x: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let s = match leaf {
        Manifold::GeneralizedStiefel { metric, .. } => sym(&x.tr_mul(&(&metric.b * u))),
        _ => sym(&x.tr_mul(u)),
    };
    u - x * s
}

/// `Y G^{-1/2}` for the Gram matrix `G = YᵀY` (or `YᵀBY`). After a tangent
/// step `G = I + ξᵀξ ⪰ I`, so the small eigenproblem is well conditioned.
fn gram_polar(y: &DMatrix<f64>, gram: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sym(gram).symmetric_eigen();
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let w = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
    y * w
}

/// Orthonormal polar factor `UVᵀ` of `y = UΣVᵀ` (`n ≥ r`).
///
/// Directions with `σᵢ < POLAR_RANK_TOL·σ_max` still contribute `UᵢVᵢᵀ`
/// using the singular vectors returned by the SVD.
pub fn polar_factor(y: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = y.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    u * v_t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Blocks {
        Blocks::single(DMatrix::from_column_slice(v.len(), 1, v))
    }

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let m = g.transpose() * &g / n as f64 + DMatrix::identity(n, n) * 0.5;
        (&m + m.transpose()) * 0.5
    }

    #[test]
    fn projecting_the_normal_direction_gives_zero() {
        let m = Manifold::stiefel(2, 1).unwrap();
        let x = m.point(col(&[1.0, 0.0])).unwrap();
        let p = m.project_tangent(&x, &col(&[1.0, 0.0])).unwrap();
        assert_eq!(p.value().norm(), 0.0);
    }

    #[test]
    fn projection_matches_least_squares_on_the_circle() {
        let m = Manifold::stiefel(2, 1).unwrap();
        let x = m.point(col(&[1.0, 0.0])).unwrap();
        let p = m.project_tangent(&x, &col(&[3.0, 4.0])).unwrap();
        // Tangent line at (1,0) is span{(0,1)}; argmin_t ‖(3,4) − (0,t)‖ is t = 4.
        let (a, b) = (0.0_f64, 1.0_f64);
        let t = (3.0 * a + 4.0 * b) / (a * a + b * b);
        assert_eq!(p.value()[0][(0, 0)], 0.0);
        assert!((p.value()[0][(1, 0)] - t).abs() < 1e-15);
    }

    #[test]
    fn projection_matches_tangent_basis_oracle() {
        // Build an orthonormal basis of T_x St(4,2) by Gram-Schmidt on the
        // projected unit matrices, then project by expansion in that basis.
        let m = Manifold::stiefel(4, 2).unwrap();
        let x = m.random_point(3);
        let mut basis: Vec<DMatrix<f64>> = Vec::new();
        for i in 0..4 {
            for j in 0..2 {
                let mut e = DMatrix::zeros(4, 2);
                e[(i, j)] = 1.0;
                let xt = x.matrix().transpose();
                let mut v = &e - x.matrix() * ((&xt * &e + e.transpose() * x.matrix()) * 0.5);
                for b in &basis {
                    let c = v.dot(b);
                    v -= b * c;
                }
                let nv = v.norm();
                if nv > 1e-8 {
                    basis.push(v / nv);
                }
            }
        }
        assert_eq!(basis.len(), m.dimension());
        let u = m.random_point(9).value().scale(2.5);
        let oracle = basis
            .iter()
            .fold(DMatrix::zeros(4, 2), |acc, b| acc + b * u[0].dot(b));
        let p = m.project_tangent(&x, &u).unwrap();
        assert!((p.value()[0].clone() - oracle).norm() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_residual_is_normal() {
        for (k, m) in [
            Manifold::stiefel(6, 3).unwrap(),
            Manifold::generalized_stiefel(spd(5, 1), 2).unwrap(),
        ]
        .into_iter()
        .enumerate()
        {
            let x = m.random_point(k as u64);
            let u = m.random_point(100 + k as u64).value().scale(3.0);
            let p1 = m.project_tangent(&x, &u).unwrap();
            let p2 = m.project_tangent(&x, p1.value()).unwrap();
            assert!(p1.value().distance(p2.value()) < 1e-12);
            assert!(m.tangency_residual(&x, p1.value()) < 1e-10);
            let resid = &u - p1.value();
            let xi = m.random_tangent(&x, 7);
            assert!(m.inner(&resid, xi.value()).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_retraction_is_exact() {
        let m = Manifold::stiefel(5, 2).unwrap();
        let x = m.random_point(1);
        let y = m.retract(&m.zero_tangent(&x)).unwrap();
        assert_eq!(x.value(), y.value());
    }

    #[test]
    fn single_column_polar_closed_form() {
        let m = Manifold::stiefel(2, 1).unwrap();
        let x = m.point(col(&[1.0, 0.0])).unwrap();
        for t in [0.1, 1.0, 7.5] {
            let xi = m.tangent(&x, col(&[0.0, t])).unwrap();
            let y = m.retract(&xi).unwrap();
            let s = (1.0 + t * t).sqrt();
            assert!((y.matrix()[(0, 0)].abs() - 1.0 / s).abs() < 1e-14);
            assert!((y.matrix()[(1, 0)] * y.matrix()[(0, 0)].signum() - t / s).abs() < 1e-14);
        }
    }

    #[test]
    fn retraction_second_order_constant() {
        // Monte-Carlo estimate of β in ‖R_x(u) − x − u‖ ≤ β‖u‖².
        let m = Manifold::stiefel(5, 2).unwrap();
        let mut beta = 0.0_f64;
        for s in 0..1000u64 {
            let x = m.random_point(s);
            let xi = m.random_tangent(&x, 5000 + s);
            let scale = 0.01 + (s % 50) as f64 * 0.04;
            let xi = xi.scale(scale / xi.norm());
            let y = m.retract(&xi).unwrap();
            let dev = (&(y.value() - x.value()) - xi.value()).norm();
            beta = beta.max(dev / (scale * scale));
        }
        assert!(beta.is_finite() && beta <= 1.0, "estimated beta {beta}");
    }

    #[test]
    fn generalized_retraction_is_feasible() {
        let m = Manifold::generalized_stiefel(spd(6, 4), 3).unwrap();
        let x = m.random_point(2);
        assert!(m.feasibility_error(x.value()) < 1e-12);
        let xi = m.random_tangent(&x, 3).scale(0.7);
        let y = m.retract(&xi).unwrap();
        assert!(m.feasibility_error(y.value()) < 1e-10);
    }

    #[test]
    fn transport_properties() {
        let m = Manifold::stiefel(3, 1).unwrap();
        let x = m.random_point(10);
        let y = m.random_point(11);
        let xi = m.random_tangent(&x, 12);
        let ga = m.random_tangent(&x, 13);
        let same = m.transport(&x, &xi).unwrap();
        assert!(same.value().distance(xi.value()) < 1e-12);
        let t = m.transport(&y, &xi).unwrap();
        assert!(m.tangency_residual(&y, t.value()) < 1e-12);
        let direct = m.project_tangent(&y, xi.value()).unwrap();
        assert!(t.value().distance(direct.value()) < 1e-15);
        let combo = xi.scale(2.0).axpy(-3.0, &ga);
        let lhs = m.transport(&y, &combo).unwrap();
        let rhs = m
            .transport(&y, &xi)
            .unwrap()
            .scale(2.0)
            .axpy(-3.0, &m.transport(&y, &ga).unwrap());
        assert!(lhs.value().distance(rhs.value()) < 1e-12);
    }

    #[test]
    fn rayleigh_gradient_on_the_sphere() {
        let n = 4;
        let c = spd(n, 21);
        let m = Manifold::stiefel(n, 1).unwrap();
        let x = m.random_point(22);
        let xv = x.matrix().clone();
        let egrad = Blocks::single(&c * &xv * -2.0);
        let g = m.riemannian_gradient(&x, &egrad).unwrap();
        let q = (xv.transpose() * &c * &xv)[(0, 0)];
        let expected = &c * &xv * -2.0 + &xv * (2.0 * q);
        assert!((g.value()[0].clone() - expected).norm() < 1e-12);
        // d/dt f(R_x(tξ)) at t = 0 equals ⟨grad f, ξ⟩.
        let f = |p: &ManifoldPoint| -(p.matrix().transpose() * &c * p.matrix())[(0, 0)];
        let xi = m.random_tangent(&x, 23);
        let h = 1e-6;
        let fp = f(&m.retract(&xi.scale(h)).unwrap());
        let fm = f(&m.retract(&xi.scale(-h)).unwrap());
        let fd = (fp - fm) / (2.0 * h);
        let an = g.value().inner(xi.value());
        assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0));
    }

    #[test]
    fn generalized_gradient_is_metric_gradient() {
        // ⟨grad f, ξ⟩_B must equal the directional derivative ⟨∇f, ξ⟩.
        let b = spd(5, 31);
        let m = Manifold::generalized_stiefel(b, 2).unwrap();
        let x = m.random_point(32);
        let egrad = m.random_point(33).value().scale(4.0);
        let g = m.riemannian_gradient(&x, &egrad).unwrap();
        let xi = m.random_tangent(&x, 34);
        assert!((m.inner(g.value(), xi.value()) - egrad.inner(xi.value())).abs() < 1e-12);
    }

    #[test]
    fn random_points_are_deterministic_and_distinct() {
        let m = Manifold::stiefel(5, 2).unwrap();
        assert_eq!(m.random_point(4).value(), m.random_point(4).value());
        for s in 0..100 {
            let a = m.random_point(2 * s);
            let b = m.random_point(2 * s + 1);
            assert!(m.feasibility_error(a.value()) <= FEASIBILITY_TOL);
            assert!(a.value().distance(b.value()) > 0.0);
        }
    }

    #[test]
    fn feasibility_error_values() {
        let r = 3;
        let m = Manifold::stiefel(5, r).unwrap();
        let e = DMatrix::<f64>::identity(5, r);
        assert_eq!(m.feasibility_error(&Blocks::single(e.clone())), 0.0);
        let twice = Blocks::single(e * 2.0);
        assert!((m.feasibility_error(&twice) - 3.0 * (r as f64).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn point_construction_repairs_or_rejects() {
        let m = Manifold::stiefel(3, 1).unwrap();
        let p = m.point(col(&[1.0 + 1e-9, 0.0, 0.0])).unwrap();
        assert!(m.feasibility_error(p.value()) < 1e-14);
        assert!(matches!(m.point(col(&[1.0, 0.0])), Err(Error::Dimension(_))));
    }

    #[test]
    fn invalid_descriptors() {
        assert!(Manifold::stiefel(2, 3).is_err());
        assert!(Manifold::stiefel(2, 0).is_err());
        assert!(Manifold::product(vec![]).is_err());
        let mut b = DMatrix::<f64>::identity(3, 3);
        b[(0, 1)] = 1e-6;
        assert!(Manifold::generalized_stiefel(b, 1).is_err());
        let neg = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(
            Manifold::generalized_stiefel(neg, 1),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn product_is_componentwise() {
        let m = Manifold::product(vec![
            Manifold::stiefel(4, 2).unwrap(),
            Manifold::generalized_stiefel(spd(3, 8), 1).unwrap(),
        ])
        .unwrap();
        let x = m.random_point(5);
        assert_eq!(x.value().len(), 2);
        let xi = m.random_tangent(&x, 6);
        assert!(m.tangency_residual(&x, xi.value()) < 1e-12);
        let y = m.retract(&xi).unwrap();
        assert!(m.feasibility_error(y.value()) < 1e-10);
    }
}
