//! Problem builders (sparse PCA, sparse CCA), synthetic data, dense matrix
//! CSV files and the Riemannian subgradient baseline.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::alf::{CompositeProblem, FiniteSum, LinearMap, SmoothObjective};
use crate::blocks::{spectral_norm, sym, Blocks};
use crate::error::{Error, Result};
use crate::manifold::{Manifold, ManifoldPoint};
use crate::nonsmooth::NonsmoothTerm;

pub const DEFAULT_BATCHES: usize = 100;
pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const DEFAULT_RSUB_GAMMA0: f64 = 1e-2;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn center_columns(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
}

/// Standard Gaussian `m × n` matrix with zero-mean, unit-norm columns.
pub fn gen_spca_data(m: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if m < 2 || n == 0 {
        return Err(Error::Dimension(format!("need m >= 2 rows and n >= 1 columns, got {m}x{n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = gaussian(m, n, &mut rng);
    center_columns(&mut b);
    for mut col in b.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    Ok(b)
}

/// Contiguous row ranges, as equal as possible, the first ones one longer.
pub fn partition_rows(rows: usize, batches: usize) -> Result<Vec<(usize, usize)>> {
    if batches == 0 || batches > rows {
        return Err(Error::Config(format!("cannot split {rows} rows into {batches} batches")));
    }
    let base = rows / batches;
    let extra = rows % batches;
    let mut start = 0;
    Ok((0..batches)
        .map(|j| {
            let len = base + usize::from(j < extra);
            let range = (start, len);
            start += len;
            range
        })
        .collect())
}

/// `f(X) = −tr(XᵀBᵀBX)`, with batches `f_j(X) = −N tr(XᵀB_jᵀB_jX)` over row
/// blocks `B_j`.
#[derive(Debug)]
pub struct SpcaObjective {
    data: DMatrix<f64>,
    gram: DMatrix<f64>,
    gram_norm: f64,
    batches: Vec<(usize, usize)>,
}

impl SpcaObjective {
    pub fn new(data: DMatrix<f64>, batches: usize) -> Result<Self> {
        let gram = data.tr_mul(&data);
        let gram = sym(&gram);
        let gram_norm = spectral_norm(&gram);
        let batches = partition_rows(data.nrows(), batches)?;
        Ok(SpcaObjective {
            data,
            gram,
            gram_norm,
            batches,
        })
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_norm(&self) -> f64 {
        self.gram_norm
    }

    fn rows(&self, j: usize) -> nalgebra::DMatrixView<'_, f64> {
        let (start, len) = self.batches[j];
        self.data.rows(start, len)
    }
}

impl SmoothObjective for SpcaObjective {
    fn value(&self, x: &Blocks) -> f64 {
        -x[0].dot(&(&self.gram * &x[0]))
    }

    fn egrad(&self, x: &Blocks) -> Blocks {
        Blocks::single(&self.gram * &x[0] * -2.0)
    }

    fn value_and_egrad(&self, x: &Blocks) -> (f64, Blocks) {
        let cx = &self.gram * &x[0];
        (-x[0].dot(&cx), Blocks::single(cx * -2.0))
    }

    fn finite_sum(&self) -> Option<&dyn FiniteSum> {
        Some(self)
    }
}

impl FiniteSum for SpcaObjective {
    fn batch_count(&self) -> usize {
        self.batches.len()
    }

    fn batch_value(&self, x: &Blocks, j: usize) -> f64 {
        let bx = self.rows(j) * &x[0];
        -(self.batches.len() as f64) * bx.norm_squared()
    }

    fn batch_egrad(&self, x: &Blocks, j: usize) -> Blocks {
        let bj = self.rows(j);
        let bx = bj * &x[0];
        Blocks::single(bj.tr_mul(&bx) * (-2.0 * self.batches.len() as f64))
    }
}

/// `min −tr(XᵀBᵀBX) + μ‖X‖₁` over the Stiefel manifold `St(n, r)`.
pub fn build_spca(data: DMatrix<f64>, mu: f64, r: usize, batches: usize) -> Result<CompositeProblem> {
    let n = data.ncols();
    if r == 0 || r > n {
        return Err(Error::Dimension(format!("rank {r} must lie in 1..={n}")));
    }
    let obj = SpcaObjective::new(data, batches)?;
    let lip = 2.0 * obj.gram_norm();
    CompositeProblem::new(
        Manifold::stiefel(n, r)?,
        Arc::new(obj),
        LinearMap::Identity,
        NonsmoothTerm::scaled_l1(mu, n, r)?,
        lip,
    )
}

/// Two views sharing `r` latent factors through sparse loadings, plus
/// Gaussian noise; columns centered.
pub fn gen_scca_data(n: usize, p: usize, q: usize, r: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n < 2 || p == 0 || q == 0 || r == 0 {
        return Err(Error::Dimension(format!("invalid sizes n={n}, p={p}, q={q}, r={r}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = gaussian(n, r, &mut rng);
    let loadings = |dim: usize, rng: &mut ChaCha8Rng| {
        let support = (dim / 5).max(1);
        let mut w = DMatrix::zeros(dim, r);
        for k in 0..r {
            for i in 0..support {
                let row = (k * support + i) % dim;
                let s: f64 = StandardNormal.sample(rng);
                w[(row, k)] = 1.0 + 0.5 * s.abs();
            }
        }
        w
    };
    let wx = loadings(p, &mut rng);
    let wy = loadings(q, &mut rng);
    let mut x = &latent * wx.transpose() + gaussian(n, p, &mut rng);
    let mut y = &latent * wy.transpose() + gaussian(n, q, &mut rng);
    center_columns(&mut x);
    center_columns(&mut y);
    Ok((x, y))
}

/// `f(U, V) = −tr(UᵀΣ_xy V)` with per-batch terms
/// `−(N/n) tr(UᵀX_jᵀY_jV)`.
#[derive(Debug)]
pub struct SccaObjective {
    xd: DMatrix<f64>,
    yd: DMatrix<f64>,
    cross: DMatrix<f64>,
    cross_t: DMatrix<f64>,
    batches: Vec<(usize, usize)>,
}

impl SccaObjective {
    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    fn scale(&self) -> f64 {
        self.batches.len() as f64 / self.xd.nrows() as f64
    }
}

impl SmoothObjective for SccaObjective {
    fn value(&self, x: &Blocks) -> f64 {
        -x[0].dot(&(&self.cross * &x[1]))
    }

    fn egrad(&self, x: &Blocks) -> Blocks {
        let mut gu = &self.cross * &x[1];
        let mut gv = &self.cross_t * &x[0];
        gu.neg_mut();
        gv.neg_mut();
        Blocks(vec![gu, gv])
    }

    fn value_and_egrad(&self, x: &Blocks) -> (f64, Blocks) {
        let g = self.egrad(x);
        (x[0].dot(&g[0]), g)
    }

    fn finite_sum(&self) -> Option<&dyn FiniteSum> {
        Some(self)
    }
}

impl FiniteSum for SccaObjective {
    fn batch_count(&self) -> usize {
        self.batches.len()
    }

    fn batch_value(&self, x: &Blocks, j: usize) -> f64 {
        let (start, len) = self.batches[j];
        let xu = self.xd.rows(start, len) * &x[0];
        let yv = self.yd.rows(start, len) * &x[1];
        -self.scale() * xu.dot(&yv)
    }

    fn batch_egrad(&self, x: &Blocks, j: usize) -> Blocks {
        let (start, len) = self.batches[j];
        let xj = self.xd.rows(start, len);
        let yj = self.yd.rows(start, len);
        let s = -self.scale();
        Blocks(vec![xj.tr_mul(&(yj * &x[1])) * s, yj.tr_mul(&(xj * &x[0])) * s])
    }
}

fn regularized_covariance(d: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let n = d.nrows() as f64;
    let mut c = sym(&(d.tr_mul(d) / n));
    for i in 0..c.nrows() {
        c[(i, i)] += ridge;
    }
    let lmin = c.clone().symmetric_eigen().eigenvalues.min();
    if !(lmin > 0.0) {
        return Err(Error::NotPositiveDefinite(lmin));
    }
    Ok(c)
}

/// `min −tr(UᵀΣ_xy V) + μ₁‖U‖₁ + μ₂‖V‖₁` subject to `UᵀΣ_xx U = I`,
/// `VᵀΣ_yy V = I`, with `ridge·I` added to both covariances.
pub fn build_scca(
    xd: DMatrix<f64>,
    yd: DMatrix<f64>,
    mu1: f64,
    mu2: f64,
    r: usize,
    ridge: f64,
    batches: usize,
) -> Result<CompositeProblem> {
    if xd.nrows() != yd.nrows() {
        return Err(Error::Dimension(format!(
            "views have {} and {} samples",
            xd.nrows(),
            yd.nrows()
        )));
    }
    let (p, q) = (xd.ncols(), yd.ncols());
    if r == 0 || r > p.min(q) {
        return Err(Error::Dimension(format!("rank {r} must lie in 1..={}", p.min(q))));
    }
    if !(ridge >= 0.0) {
        return Err(Error::Config(format!("ridge must be nonnegative, got {ridge}")));
    }
    let sxx = regularized_covariance(&xd, ridge)?;
    let syy = regularized_covariance(&yd, ridge)?;
    let cross = xd.tr_mul(&yd) / xd.nrows() as f64;
    let lip = spectral_norm(&cross);
    let manifold = Manifold::product(vec![
        Manifold::generalized_stiefel(sxx, r)?,
        Manifold::generalized_stiefel(syy, r)?,
    ])?;
    let batches = partition_rows(xd.nrows(), batches)?;
    let h = NonsmoothTerm::separable_sum(vec![
        NonsmoothTerm::scaled_l1(mu1, p, r)?,
        NonsmoothTerm::scaled_l1(mu2, q, r)?,
    ])?;
    CompositeProblem::new(
        manifold,
        Arc::new(SccaObjective {
            xd,
            yd,
            cross_t: cross.transpose(),
            cross,
            batches,
        }),
        LinearMap::Identity,
        h,
        lip,
    )
}

/// Checks the smooth part's gradient against central differences and, for
/// finite sums, that the batch gradients average to the full gradient.
pub fn validate_problem(p: &CompositeProblem, samples: usize, seed: u64) -> Result<()> {
    let fd = p.gradient_check(samples, seed);
    if fd > 1e-5 {
        return Err(Error::Invariant(format!("gradient fails finite differences (rel. error {fd:e})")));
    }
    if let Some(fs) = p.finite_sum() {
        for s in 0..samples {
            let x = p.manifold.random_point(seed.wrapping_add(1000 + s as u64));
            let full = p.smooth.egrad(x.value());
            let mut avg = Blocks::zeros_like(&full);
            for j in 0..fs.batch_count() {
                avg = avg.axpy(1.0, &fs.batch_egrad(x.value(), j));
            }
            let avg = avg.scale(1.0 / fs.batch_count() as f64);
            let err = avg.distance(&full) / full.norm().max(1.0);
            if err > 1e-10 {
                return Err(Error::Invariant(format!("batch gradients are biased (rel. error {err:e})")));
            }
        }
    }
    Ok(())
}

/// Reads a header-free, comma-separated, row-major dense matrix.
pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let mut count = 0;
        for cell in line.split(',') {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("not a number: {cell:?}"),
            })?;
            values.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {c} columns, found {count}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or(Error::Parse {
        line: 0,
        msg: "empty matrix file".into(),
    })?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(m))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RsubRecord {
    pub t: usize,
    pub oracle_calls: u64,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct RsubOutput {
    pub x: ManifoldPoint,
    pub best: ManifoldPoint,
    pub best_objective: f64,
    pub trace: Vec<RsubRecord>,
}

/// One step `x ↦ R_x(−γ grad(f + ⟨A*·sign-subgradient⟩))`.
pub fn rsub_step(p: &CompositeProblem, x: &ManifoldPoint, gamma: f64) -> Result<ManifoldPoint> {
    let ax = p.map.apply(x.value());
    let g = p.smooth.egrad(x.value()).axpy(1.0, &p.map.adjoint(&p.h.subgradient(&ax)?));
    let rg = p.manifold.riemannian_gradient(x, &g)?;
    p.manifold.retract(&rg.scale(-gamma))
}

/// Riemannian subgradient method
/// `x_{t+1} = R_{x_t}(−γ_t grad(f + ⟨A*·sign-subgradient⟩))`, `γ_t = γ₀/√(t+1)`,
/// from a seeded random start.
pub fn rsub_baseline(p: &CompositeProblem, gamma0: f64, iterations: usize, seed: u64) -> Result<RsubOutput> {
    rsub_from(p, gamma0, iterations, p.manifold.random_point(seed))
}

pub fn rsub_from(p: &CompositeProblem, gamma0: f64, iterations: usize, x0: ManifoldPoint) -> Result<RsubOutput> {
    if !(gamma0 > 0.0 && gamma0.is_finite()) {
        return Err(Error::Config(format!("gamma0 must be positive, got {gamma0}")));
    }
    let mut x = x0;
    let obj0 = p.objective(x.value())?;
    let mut trace = vec![RsubRecord {
        t: 0,
        oracle_calls: 0,
        objective: obj0,
    }];
    let mut best = (x.clone(), obj0);
    for t in 0..iterations {
        x = rsub_step(p, &x, gamma0 / ((t + 1) as f64).sqrt())?;
        let obj = p.objective(x.value())?;
        if !obj.is_finite() {
            return Err(Error::NonFinite(format!("objective at subgradient step {}", t + 1)));
        }
        if obj < best.1 {
            best = (x.clone(), obj);
        }
        trace.push(RsubRecord {
            t: t + 1,
            oracle_calls: t as u64 + 1,
            objective: obj,
        });
    }
    Ok(RsubOutput {
        x,
        best: best.0,
        best_objective: best.1,
        trace,
    })
}
