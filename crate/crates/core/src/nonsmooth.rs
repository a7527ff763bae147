//! Convex nonsmooth terms: scaled entrywise ℓ₁ norms and separable sums of
//! them over disjoint blocks.
//!
//! For `h = λ‖·‖₁` and parameter `μ > 0`:
//! - `prox_{μh}(v)` is soft-thresholding at `μλ`,
//! - the Moreau envelope is the Huber function,
//! - `∇M_h^μ(v) = (v − prox_{μh}(v))/μ` is `v/μ` clipped to `[−λ, λ]`,
//! - `prox_{h*}(v) = v − prox_h(v)` is clipping to `[−λ, λ]`.

use crate::blocks::Blocks;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum NonsmoothTerm {
    ScaledL1 { weight: f64, rows: usize, cols: usize },
    SeparableSum(Vec<NonsmoothTerm>),
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn clip(v: f64, t: f64) -> f64 {
    v.clamp(-t, t)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("prox parameter must be positive, got {mu}")))
    }
}

impl NonsmoothTerm {
    /// `weight·‖X‖₁` on `rows×cols` matrices. A zero weight is accepted and
    /// gives the zero function.
    pub fn scaled_l1(weight: f64, rows: usize, cols: usize) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::Domain(format!("l1 weight must be >= 0, got {weight}")));
        }
        Ok(NonsmoothTerm::ScaledL1 { weight, rows, cols })
    }

    pub fn separable_sum(terms: Vec<NonsmoothTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Domain("separable sum needs at least one term".into()));
        }
        Ok(NonsmoothTerm::SeparableSum(terms))
    }

    /// Per-block `(weight, rows, cols)`, in block order.
    pub fn blocks(&self) -> Vec<(f64, usize, usize)> {
        match self {
            NonsmoothTerm::ScaledL1 { weight, rows, cols } => vec![(*weight, *rows, *cols)],
            NonsmoothTerm::SeparableSum(ts) => ts.iter().flat_map(|t| t.blocks()).collect(),
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.blocks().into_iter().map(|(w, _, _)| w).collect()
    }

    fn check(&self, v: &Blocks) -> Result<Vec<f64>> {
        let blocks = self.blocks();
        let expected: Vec<(usize, usize)> = blocks.iter().map(|&(_, r, c)| (r, c)).collect();
        if v.shapes() != expected {
            return Err(Error::Dimension(format!(
                "nonsmooth term expects shapes {expected:?}, got {:?}",
                v.shapes()
            )));
        }
        Ok(blocks.into_iter().map(|(w, _, _)| w).collect())
    }

    fn blockwise<F: Fn(f64, f64) -> f64>(v: &Blocks, weights: &[f64], f: F) -> Blocks {
        Blocks(
            v.iter()
                .zip(weights)
                .map(|(m, &w)| m.map(|x| f(x, w)))
                .collect(),
        )
    }

    pub fn value(&self, v: &Blocks) -> Result<f64> {
        let w = self.check(v)?;
        Ok(v.iter()
            .zip(&w)
            .map(|(m, w)| w * m.iter().map(|x| x.abs()).sum::<f64>())
            .sum())
    }

    /// Frobenius-metric Lipschitz constant: `λ√(entries)` per block,
    /// combined in quadrature across blocks.
    pub fn lipschitz_const(&self) -> f64 {
        self.blocks()
            .into_iter()
            .map(|(w, r, c)| w * w * (r * c) as f64)
            .sum::<f64>()
            .sqrt()
    }

    pub fn prox(&self, v: &Blocks, mu: f64) -> Result<Blocks> {
        check_mu(mu)?;
        let w = self.check(v)?;
        Ok(Self::blockwise(v, &w, |x, w| soft_threshold(x, mu * w)))
    }

    /// `v − prox_{μh}(v)`, computed directly as a clip so that saturated
    /// entries equal `±μλ` exactly.
    pub fn prox_residual(&self, v: &Blocks, mu: f64) -> Result<Blocks> {
        check_mu(mu)?;
        let w = self.check(v)?;
        Ok(Self::blockwise(v, &w, |x, w| clip(x, mu * w)))
    }

    pub fn moreau_value(&self, v: &Blocks, mu: f64) -> Result<f64> {
        check_mu(mu)?;
        let w = self.check(v)?;
        Ok(v.iter()
            .zip(&w)
            .map(|(m, &w)| {
                let t = mu * w;
                m.iter()
                    .map(|&x| {
                        if x.abs() <= t {
                            x * x / (2.0 * mu)
                        } else {
                            w * x.abs() - 0.5 * w * t
                        }
                    })
                    .sum::<f64>()
            })
            .sum())
    }

    pub fn moreau_grad(&self, v: &Blocks, mu: f64) -> Result<Blocks> {
        check_mu(mu)?;
        let w = self.check(v)?;
        Ok(Self::blockwise(v, &w, |x, w| clip(x / mu, w)))
    }

    pub fn prox_conjugate(&self, v: &Blocks) -> Result<Blocks> {
        let w = self.check(v)?;
        Ok(Self::blockwise(v, &w, clip))
    }

    /// The minimum-norm-free sign subgradient `λ·sign(v)` (zero at zero).
    pub fn subgradient(&self, v: &Blocks) -> Result<Blocks> {
        let w = self.check(v)?;
        Ok(Self::blockwise(v, &w, |x, w| w * sign(x)))
    }

    /// Distance from `g` to `∂h(y)`, returned as `(Frobenius distance,
    /// largest entrywise violation)`.
    pub fn subdifferential_distance(&self, y: &Blocks, g: &Blocks) -> Result<(f64, f64)> {
        let w = self.check(y)?;
        y.check_shape(g, "subgradient")?;
        let mut sq = 0.0;
        let mut worst = 0.0_f64;
        for ((ym, gm), &w) in y.iter().zip(g.iter()).zip(&w) {
            for (&yi, &gi) in ym.iter().zip(gm.iter()) {
                let d = if yi != 0.0 {
                    (gi - w * sign(yi)).abs()
                } else {
                    (gi.abs() - w).max(0.0)
                };
                sq += d * d;
                worst = worst.max(d);
            }
        }
        Ok((sq.sqrt(), worst))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scalar(v: f64) -> Blocks {
        Blocks::single(DMatrix::from_element(1, 1, v))
    }

    fn l1(w: f64) -> NonsmoothTerm {
        NonsmoothTerm::scaled_l1(w, 1, 1).unwrap()
    }

    /// argmin_y |y| + (y − v)²/2 by grid search on [−10, 10].
    fn grid_prox(v: f64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        let n = 200_000;
        for i in 0..=n {
            let y = -10.0 + 20.0 * i as f64 / n as f64;
            let obj = y.abs() + 0.5 * (y - v) * (y - v);
            if obj < best.0 {
                best = (obj, y);
            }
        }
        best.1
    }

    #[test]
    fn prox_matches_grid_minimization() {
        let h = l1(1.0);
        for v in [3.0, -0.5, 0.3, -2.2] {
            let p = h.prox(&scalar(v), 1.0).unwrap()[0][(0, 0)];
            assert!((p - grid_prox(v)).abs() < 1e-4, "v={v}");
        }
        assert_eq!(h.prox(&scalar(3.0), 1.0).unwrap()[0][(0, 0)], 2.0);
        assert_eq!(h.prox(&scalar(-0.5), 1.0).unwrap()[0][(0, 0)], 0.0);
        assert_eq!(h.prox(&scalar(0.0), 1.0).unwrap()[0][(0, 0)], 0.0);
    }

    #[test]
    fn prox_small_parameter_limit() {
        let lambda = 0.7;
        let h = NonsmoothTerm::scaled_l1(lambda, 2, 2).unwrap();
        let v = Blocks::single(DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.3, -1e-9]));
        let p = h.prox(&v, 1e-8).unwrap();
        assert!((&p - &v).max_abs() <= 1e-8 * lambda + 1e-15);
    }

    #[test]
    fn nonpositive_parameter_is_a_domain_error() {
        let h = l1(1.0);
        assert!(matches!(h.prox(&scalar(1.0), 0.0), Err(Error::Domain(_))));
        assert!(matches!(h.moreau_value(&scalar(1.0), -1.0), Err(Error::Domain(_))));
        assert!(matches!(h.moreau_grad(&scalar(1.0), f64::NAN), Err(Error::Domain(_))));
        assert!(NonsmoothTerm::scaled_l1(-1.0, 1, 1).is_err());
    }

    #[test]
    fn moreau_value_examples() {
        let h = l1(1.0);
        assert_eq!(h.moreau_value(&scalar(0.5), 1.0).unwrap(), 0.125);
        assert_eq!(h.moreau_value(&scalar(2.0), 1.0).unwrap(), 1.5);
        assert_eq!(h.moreau_value(&scalar(0.0), 1.0).unwrap(), 0.0);
        // Definition: h(p) + (p − v)²/(2μ) with p the grid minimizer.
        for v in [0.5, 2.0, -1.3] {
            let p = grid_prox(v);
            let def = p.abs() + 0.5 * (p - v) * (p - v);
            assert!((h.moreau_value(&scalar(v), 1.0).unwrap() - def).abs() < 1e-8);
        }
    }

    #[test]
    fn moreau_grad_examples() {
        let h = l1(1.0);
        assert_eq!(h.moreau_grad(&scalar(0.5), 1.0).unwrap()[0][(0, 0)], 0.5);
        assert_eq!(h.moreau_grad(&scalar(2.0), 1.0).unwrap()[0][(0, 0)], 1.0);
        assert_eq!(h.moreau_grad(&scalar(0.0), 1.0).unwrap()[0][(0, 0)], 0.0);
        let eps = 1e-6;
        for v in [0.5, 2.0] {
            let fd = (h.moreau_value(&scalar(v + eps), 1.0).unwrap()
                - h.moreau_value(&scalar(v - eps), 1.0).unwrap())
                / (2.0 * eps);
            let g = h.moreau_grad(&scalar(v), 1.0).unwrap()[0][(0, 0)];
            assert!((fd - g).abs() < 1e-8);
        }
    }

    #[test]
    fn conjugate_prox_examples() {
        let h = l1(1.0);
        assert_eq!(h.prox_conjugate(&scalar(2.0)).unwrap()[0][(0, 0)], 1.0);
        assert_eq!(h.prox_conjugate(&scalar(0.0)).unwrap()[0][(0, 0)], 0.0);
        let inside = Blocks::single(DMatrix::from_row_slice(1, 3, &[0.2, -1.0, 0.99]));
        let h3 = NonsmoothTerm::scaled_l1(1.0, 1, 3).unwrap();
        assert_eq!(h3.prox_conjugate(&inside).unwrap(), inside);
        // Moreau identity.
        let v = scalar(2.0);
        let sum = &h.prox(&v, 1.0).unwrap() + &h.prox_conjugate(&v).unwrap();
        assert_eq!(sum, v);
    }

    #[test]
    fn value_and_lipschitz_constant() {
        let h = NonsmoothTerm::scaled_l1(0.5, 2, 2).unwrap();
        let ones = Blocks::single(DMatrix::from_element(2, 2, 1.0));
        assert_eq!(h.value(&ones).unwrap(), 2.0);
        assert_eq!(h.value(&Blocks::zeros_like(&ones)).unwrap(), 0.0);
        assert_eq!(h.lipschitz_const(), 0.5 * 2.0);
        let s = NonsmoothTerm::separable_sum(vec![
            NonsmoothTerm::scaled_l1(1.0, 3, 1).unwrap(),
            NonsmoothTerm::scaled_l1(2.0, 1, 1).unwrap(),
        ])
        .unwrap();
        assert!((s.lipschitz_const() - (3.0_f64 + 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn separable_sum_applies_blockwise() {
        let s = NonsmoothTerm::separable_sum(vec![
            NonsmoothTerm::scaled_l1(1.0, 1, 1).unwrap(),
            NonsmoothTerm::scaled_l1(2.0, 1, 1).unwrap(),
        ])
        .unwrap();
        let v = Blocks(vec![
            DMatrix::from_element(1, 1, 3.0),
            DMatrix::from_element(1, 1, 3.0),
        ]);
        let p = s.prox(&v, 1.0).unwrap();
        assert_eq!(p[0][(0, 0)], 2.0);
        assert_eq!(p[1][(0, 0)], 1.0);
        assert_eq!(s.value(&v).unwrap(), 9.0);
        assert!(s.prox(&scalar(1.0), 1.0).is_err());
    }

    #[test]
    fn subdifferential_distance_of_prox_optimality() {
        let h = NonsmoothTerm::scaled_l1(0.4, 1, 4).unwrap();
        let v = Blocks::single(DMatrix::from_row_slice(1, 4, &[1.0, -0.1, 0.0, -3.0]));
        let mu = 0.5;
        let p = h.prox(&v, mu).unwrap();
        // (v − p)/μ ∈ ∂h(p)
        let g = (&v - &p).scale(1.0 / mu);
        let (d, worst) = h.subdifferential_distance(&p, &g).unwrap();
        assert!(d < 1e-15 && worst < 1e-15);
        let bad = g.map(|x| x + 0.1);
        assert!(h.subdifferential_distance(&p, &bad).unwrap().1 > 0.05);
    }
}
