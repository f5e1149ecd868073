//! Regularized least squares: `min_v ||Rv - b||^2 + lambda^2 G(v)`.
//!
//! `G` is either the squared Euclidean norm (Tikhonov) or the anisotropic
//! total variation, the sum of absolute forward differences along every grid
//! axis with a replicate boundary. Total variation is smoothed,
//! `|t| ~ sqrt(t^2 + beta^2)`, and minimized by lagged diffusivity: each
//! outer step minimizes the quadratic majorant
//!
//! ```text
//! ||Rv - b||^2 + (lambda^2 / 2) sum_e w_e (Dv)_e^2,   w_e = 1 / sqrt((Dv_k)_e^2 + beta^2)
//! ```
//!
//! Two inner solvers are available. [`Method::GeneralizedKrylov`] minimizes
//! every majorant over one growing subspace, enlarged each step by the
//! normalized gradient of the current majorant, so a step costs a single
//! forward and adjoint product. [`Method::LaggedDiffusivityCg`] runs warm
//! started conjugate gradients on the reweighted normal equations.
//!
//! Both decrease the objective monotonically at fixed `lambda`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{validate, Error, Result};
use crate::estimate::DensityEstimate;
use crate::grid::PixelGrid;
use crate::operator::LinearOperator;
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Penalty {
    Tikhonov,
    TvAnisotropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Selection {
    /// Minimize generalized cross validation over the lambda grid.
    Gcv,
    /// Absolute regularization parameter.
    Fixed { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GeneralizedKrylov,
    LaggedDiffusivityCg,
}

/// How the GCV degrees of freedom are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GcvMethod {
    /// GCV of the problem projected onto the search subspace, refreshed
    /// every iteration as in hybrid Krylov methods. Exact trace, no extra
    /// operator products.
    Projected,
    /// GCV of the full frozen-weight quadratic, one fixed-lambda solve per
    /// grid value and Hutchinson probing of the influence trace.
    Hutchinson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    pub penalty: Penalty,
    /// Candidate lambdas as multiples of `||b||`, strictly increasing.
    pub lambda_grid: Vec<f64>,
    pub selection: Selection,
    pub method: Method,
    pub gcv: GcvMethod,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Relative stopping tolerance.
    pub tolerance: f64,
    /// TV smoothing `beta`; `None` uses `1e-4 * max(b) / pixel volume`.
    pub tv_smoothing: Option<f64>,
    pub nonnegativity: bool,
    pub gcv_probes: usize,
    pub seed: Seed,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self {
            penalty: Penalty::TvAnisotropic,
            lambda_grid: default_lambda_grid(),
            selection: Selection::Gcv,
            method: Method::GeneralizedKrylov,
            gcv: GcvMethod::Projected,
            max_outer_iters: 80,
            max_inner_iters: 200,
            tolerance: 1e-6,
            tv_smoothing: None,
            nonnegativity: true,
            gcv_probes: 20,
            seed: Seed::new(0),
        }
    }
}

/// 15 log-spaced multipliers from `1e-3` to `1e2`.
pub fn default_lambda_grid() -> Vec<f64> {
    log_space(1e-3, 1e2, 15)
}

pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

impl RegConfig {
    pub fn tikhonov() -> Self {
        Self {
            penalty: Penalty::Tikhonov,
            ..Self::default()
        }
    }

    pub fn with_fixed(mut self, lambda: f64) -> Self {
        self.selection = Selection::Fixed { lambda };
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate(!self.lambda_grid.is_empty(), || "lambda grid is empty".into())?;
        validate(
            self.lambda_grid.iter().all(|l| l.is_finite() && *l > 0.0),
            || "lambda grid values must be positive".into(),
        )?;
        validate(self.lambda_grid.windows(2).all(|w| w[0] < w[1]), || {
            "lambda grid must be strictly increasing".into()
        })?;
        validate(self.tolerance > 0.0 && self.tolerance < 1.0, || {
            "tolerance must lie in (0, 1)".into()
        })?;
        validate(self.max_outer_iters > 0 && self.max_inner_iters > 0, || {
            "iteration caps must be positive".into()
        })?;
        if let Selection::Fixed { lambda } = self.selection {
            validate(lambda.is_finite() && lambda > 0.0, || {
                format!("fixed lambda must be positive, got {lambda}")
            })?;
        }
        if let Some(beta) = self.tv_smoothing {
            validate(beta.is_finite() && beta > 0.0, || {
                "tv smoothing must be positive".into()
            })?;
        }
        validate(
            !(self.method == Method::LaggedDiffusivityCg && self.gcv == GcvMethod::Projected)
                || !matches!(self.selection, Selection::Gcv),
            || "projected GCV needs the generalized Krylov method".into(),
        )?;
        validate(
            self.gcv == GcvMethod::Projected || self.gcv_probes > 0,
            || "Hutchinson GCV needs at least one probe".into(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: String,
    pub converged: bool,
    pub penalty: Penalty,
    pub lambda: f64,
    /// Absolute lambda values considered by the selection.
    pub lambda_grid: Vec<f64>,
    /// GCV per grid value; `None` where the value is invalid.
    pub gcv_values: Vec<Option<f64>>,
    pub iterations: usize,
    /// `||Rv - b||` of the unclipped minimizer.
    pub residual_norm: f64,
    /// Objective after every outer iteration at the selected lambda.
    pub objective_trace: Vec<f64>,
    pub beta: f64,
}

/// Result of a solve before post-processing.
#[derive(Debug, Clone)]
pub struct RawSolution {
    pub values: Vec<f64>,
    pub report: SolveReport,
}

// ---------------------------------------------------------------------------
// Finite differences and total variation

/// Forward differences along every axis, stacked axis by axis. Entries past
/// the last pixel of an axis are zero.
pub fn forward_diff(shape: &[usize], v: &[f64], out: &mut [f64]) {
    let n: usize = shape.iter().product();
    let mut stride = 1;
    for (k, &len) in shape.iter().enumerate() {
        let block = &mut out[k * n..(k + 1) * n];
        for i in 0..n {
            let idx = (i / stride) % len;
            block[i] = if idx + 1 < len { v[i + stride] - v[i] } else { 0.0 };
        }
        stride *= len;
    }
}

/// Adjoint of [`forward_diff`].
pub fn forward_diff_adjoint(shape: &[usize], d: &[f64], out: &mut [f64]) {
    let n: usize = shape.iter().product();
    out.iter_mut().for_each(|x| *x = 0.0);
    let mut stride = 1;
    for (k, &len) in shape.iter().enumerate() {
        let block = &d[k * n..(k + 1) * n];
        for i in 0..n {
            let idx = (i / stride) % len;
            if idx + 1 < len {
                out[i] -= block[i];
                out[i + stride] += block[i];
            }
        }
        stride *= len;
    }
}

fn interior_mask(shape: &[usize]) -> Vec<bool> {
    let n: usize = shape.iter().product();
    let mut mask = vec![false; n * shape.len()];
    let mut stride = 1;
    for (k, &len) in shape.iter().enumerate() {
        for i in 0..n {
            mask[k * n + i] = (i / stride) % len + 1 < len;
        }
        stride *= len;
    }
    mask
}

/// Anisotropic total variation `sum |forward differences|`.
pub fn tv_value(shape: &[usize], v: &[f64]) -> f64 {
    let mut d = vec![0.0; v.len() * shape.len()];
    forward_diff(shape, v, &mut d);
    d.iter().map(|x| x.abs()).sum()
}

/// Smoothed total variation `sum sqrt(d^2 + beta^2)` over interior differences.
pub fn smoothed_tv_value(shape: &[usize], v: &[f64], beta: f64) -> f64 {
    let mut d = vec![0.0; v.len() * shape.len()];
    forward_diff(shape, v, &mut d);
    smoothed_from_diffs(&d, &interior_mask(shape), beta)
}

fn smoothed_from_diffs(d: &[f64], mask: &[bool], beta: f64) -> f64 {
    d.iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(x, _)| (x * x + beta * beta).sqrt())
        .sum()
}

/// Gradient of [`smoothed_tv_value`].
pub fn smoothed_tv_gradient(shape: &[usize], v: &[f64], beta: f64) -> Vec<f64> {
    let mut d = vec![0.0; v.len() * shape.len()];
    forward_diff(shape, v, &mut d);
    for x in d.iter_mut() {
        *x /= (*x * *x + beta * beta).sqrt();
    }
    let mut g = vec![0.0; v.len()];
    forward_diff_adjoint(shape, &d, &mut g);
    g
}

fn tv_weights(d: &[f64], beta: f64) -> Vec<f64> {
    d.iter().map(|x| 1.0 / (x * x + beta * beta).sqrt()).collect()
}

// ---------------------------------------------------------------------------
// Small vector helpers

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Removes the components of `x` along the orthonormal `basis`, twice.
fn orthogonalize(basis: &[Vec<f64>], x: &mut [f64], coeffs: Option<&mut Vec<f64>>) {
    let mut acc = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (c, q) in acc.iter_mut().zip(basis) {
            let h = dot(q, x);
            axpy(-h, q, x);
            *c += h;
        }
    }
    if let Some(out) = coeffs {
        *out = acc;
    }
}

// ---------------------------------------------------------------------------
// Conjugate gradients

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub converged: bool,
    pub relative_residual: f64,
}

/// Solves `A x = rhs` for symmetric positive (semi)definite `A`, starting
/// from the given `x`. Stops when `||rhs - Ax|| <= tol ||rhs||`.
pub fn conjugate_gradient<F>(mut a: F, rhs: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> CgOutcome
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            converged: true,
            relative_residual: 0.0,
        };
    }
    let mut ax = vec![0.0; n];
    a(x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; n];
    let mut it = 0;
    while it < max_iter && rr.sqrt() > tol * rhs_norm {
        a(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
        it += 1;
    }
    let rel = rr.sqrt() / rhs_norm;
    CgOutcome {
        iterations: it,
        converged: rel <= tol,
        relative_residual: rel,
    }
}

// ---------------------------------------------------------------------------
// Problem description shared by the solvers

struct Problem<'a, O: LinearOperator + ?Sized> {
    op: &'a O,
    b: &'a [f64],
    shape: Vec<usize>,
    penalty: Penalty,
    beta: f64,
    mask: Vec<bool>,
    atb: Vec<f64>,
}

impl<'a, O: LinearOperator + ?Sized> Problem<'a, O> {
    fn new(op: &'a O, b: &'a [f64], grid: &PixelGrid, penalty: Penalty, beta: f64) -> Self {
        let mut atb = vec![0.0; op.cols()];
        op.adjoint_into(b, &mut atb);
        Self {
            op,
            b,
            shape: grid.shape().to_vec(),
            penalty,
            beta,
            mask: interior_mask(grid.shape()),
            atb,
        }
    }

    fn n(&self) -> usize {
        self.op.cols()
    }

    fn edges(&self) -> usize {
        self.n() * self.shape.len()
    }

    /// Majorant weight `mu` multiplying `sum w (Lv)^2`.
    fn mu(&self, lambda: f64) -> f64 {
        match self.penalty {
            Penalty::Tikhonov => lambda * lambda,
            Penalty::TvAnisotropic => 0.5 * lambda * lambda,
        }
    }

    fn penalty_value(&self, v: &[f64], dv: Option<&[f64]>) -> f64 {
        match self.penalty {
            Penalty::Tikhonov => dot(v, v),
            Penalty::TvAnisotropic => match dv {
                Some(d) => smoothed_from_diffs(d, &self.mask, self.beta),
                None => smoothed_tv_value(&self.shape, v, self.beta),
            },
        }
    }

    fn weights_at(&self, v: &[f64]) -> Option<Vec<f64>> {
        match self.penalty {
            Penalty::Tikhonov => None,
            Penalty::TvAnisotropic => {
                let mut d = vec![0.0; self.edges()];
                forward_diff(&self.shape, v, &mut d);
                Some(tv_weights(&d, self.beta))
            }
        }
    }

    fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.op.rows()];
        self.op.apply_into(v, &mut r);
        for (ri, bi) in r.iter_mut().zip(self.b) {
            *ri -= bi;
        }
        r
    }

    fn objective(&self, v: &[f64], lambda: f64) -> f64 {
        let r = self.residual(v);
        dot(&r, &r) + lambda * lambda * self.penalty_value(v, None)
    }

    /// `out = (R^T R + mu L^T W L) x`.
    fn normal_apply(&self, x: &[f64], out: &mut [f64], mu: f64, weights: Option<&[f64]>, tmp: &mut Vec<f64>) {
        tmp.resize(self.op.rows(), 0.0);
        self.op.apply_into(x, tmp);
        self.op.adjoint_into(tmp, out);
        match weights {
            None => axpy(mu, x, out),
            Some(w) => {
                let mut d = vec![0.0; self.edges()];
                forward_diff(&self.shape, x, &mut d);
                for (di, wi) in d.iter_mut().zip(w) {
                    *di *= wi;
                }
                let mut g = vec![0.0; self.n()];
                forward_diff_adjoint(&self.shape, &d, &mut g);
                axpy(mu, &g, out);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Generalized Krylov subspace

/// Search space `V` with `R V = Q T`, where `Q` is an orthonormal basis whose
/// first column is `b / ||b||`.
struct Subspace {
    v: Vec<Vec<f64>>,
    dv: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    t: Vec<Vec<f64>>,
    b_norm: f64,
}

/// Projected problem for one set of weights.
struct Projected {
    /// `nq x k`.
    t: DMatrix<f64>,
    /// `k x k` penalty Gram matrix.
    m: DMatrix<f64>,
    /// `T^T T`.
    tt: DMatrix<f64>,
    /// `T^T c` with `c = ||b|| e_1`.
    tc: DVector<f64>,
    c: DVector<f64>,
}

impl Subspace {
    fn new(b: &[f64]) -> Self {
        let b_norm = norm(b);
        Self {
            v: Vec::new(),
            dv: Vec::new(),
            q: vec![b.iter().map(|x| x / b_norm).collect()],
            t: Vec::new(),
            b_norm,
        }
    }

    fn dim(&self) -> usize {
        self.v.len()
    }

    /// Adds the direction of `x` not yet spanned. Returns false when `x`
    /// is already (numerically) in the subspace.
    fn push<O: LinearOperator + ?Sized>(&mut self, p: &Problem<O>, mut x: Vec<f64>) -> bool {
        let before = norm(&x);
        if before == 0.0 || !before.is_finite() {
            return false;
        }
        orthogonalize(&self.v, &mut x, None);
        let after = norm(&x);
        if after <= 1e-10 * before {
            return false;
        }
        x.iter_mut().for_each(|e| *e /= after);
        let mut rx = vec![0.0; p.op.rows()];
        p.op.apply_into(&x, &mut rx);
        let scale = norm(&rx);
        let mut coeffs = Vec::new();
        orthogonalize(&self.q, &mut rx, Some(&mut coeffs));
        let rest = norm(&rx);
        if rest > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            rx.iter_mut().for_each(|e| *e /= rest);
            self.q.push(rx);
            coeffs.push(rest);
        }
        if p.penalty == Penalty::TvAnisotropic {
            let mut d = vec![0.0; p.edges()];
            forward_diff(&p.shape, &x, &mut d);
            self.dv.push(d);
        }
        self.v.push(x);
        self.t.push(coeffs);
        true
    }

    fn project<O: LinearOperator + ?Sized>(&self, p: &Problem<O>, weights: Option<&[f64]>) -> Projected {
        let k = self.dim();
        let nq = self.q.len();
        let t = DMatrix::from_fn(nq, k, |i, j| self.t[j].get(i).copied().unwrap_or(0.0));
        let m = match weights {
            None => DMatrix::identity(k, k),
            Some(w) => {
                let e = p.edges();
                let mut wd = DMatrix::<f64>::zeros(e, k);
                let mut plain = DMatrix::<f64>::zeros(e, k);
                for j in 0..k {
                    let col = &self.dv[j];
                    for i in 0..e {
                        plain[(i, j)] = col[i];
                        wd[(i, j)] = col[i] * w[i];
                    }
                }
                let mut m = plain.transpose() * wd;
                m = (&m + m.transpose()) * 0.5;
                m
            }
        };
        let mut c = DVector::zeros(nq);
        c[0] = self.b_norm;
        let tt = t.transpose() * &t;
        let tc = t.transpose() * &c;
        Projected { t, m, tt, tc, c }
    }

    fn expand(&self, y: &DVector<f64>) -> Vec<f64> {
        let mut v = vec![0.0; self.v[0].len()];
        for (yi, col) in y.iter().zip(&self.v) {
            axpy(*yi, col, &mut v);
        }
        v
    }

    fn expand_diff(&self, y: &DVector<f64>) -> Option<Vec<f64>> {
        let first = self.dv.first()?;
        let mut d = vec![0.0; first.len()];
        for (yi, col) in y.iter().zip(&self.dv) {
            axpy(*yi, col, &mut d);
        }
        Some(d)
    }

    /// `R v - b` for `v = V y`, without an operator product.
    fn data_residual(&self, y: &DVector<f64>, proj: &Projected) -> Vec<f64> {
        let coeffs = &proj.t * y - &proj.c;
        let mut r = vec![0.0; self.q[0].len()];
        for (ci, col) in coeffs.iter().zip(&self.q) {
            axpy(*ci, col, &mut r);
        }
        r
    }
}

struct ProjectedSolution {
    y: DVector<f64>,
    /// `||T y - c||^2`, equal to `||R V y - b||^2`.
    misfit: f64,
    /// `trace(T K^{-1} T^T)`.
    trace: f64,
}

fn solve_projected(proj: &Projected, mu: f64, with_trace: bool) -> ProjectedSolution {
    let k = proj.tt.nrows();
    let kmat = &proj.tt + &proj.m * mu;
    let (y, trace) = match kmat.clone().cholesky() {
        Some(ch) => {
            let y = ch.solve(&proj.tc);
            let tr = if with_trace { ch.solve(&proj.tt).trace() } else { 0.0 };
            (y, tr)
        }
        None => {
            let svd = kmat.svd(true, true);
            let tol = 1e-13 * svd.singular_values.max() * k as f64;
            let y = svd.solve(&proj.tc, tol).expect("svd solve");
            let tr = if with_trace {
                svd.solve(&proj.tt, tol).expect("svd solve").trace()
            } else {
                0.0
            };
            (y, tr)
        }
    };
    let r = &proj.t * &y - &proj.c;
    ProjectedSolution {
        misfit: r.norm_squared(),
        y,
        trace,
    }
}

fn projected_gcv(proj: &Projected, sol: &ProjectedSolution, rows: usize) -> Option<f64> {
    let dof = proj.t.nrows() as f64 - sol.trace;
    if dof <= 1e-8 {
        return None;
    }
    Some(rows as f64 * sol.misfit / (dof * dof))
}

fn argmin(values: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = v {
            if v.is_finite() && best.map_or(true, |(_, b)| *v < b) {
                best = Some((i, *v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Iterations with lambda reselected by projected GCV before it is frozen.
const SELECTION_STABLE_ITERS: usize = 5;
const SELECTION_MIN_ITERS: usize = 10;

fn run_krylov<O: LinearOperator + ?Sized>(
    p: &Problem<O>,
    cfg: &RegConfig,
    lambdas: &[f64],
    fixed: Option<f64>,
) -> RawSolution {
    let n = p.n();
    let rows = p.op.rows();
    let atb_norm = norm(&p.atb);
    let mut space = Subspace::new(p.b);
    space.push(p, p.atb.clone());
    if p.penalty == Penalty::TvAnisotropic {
        space.push(p, vec![1.0; n]);
    }

    let mut v = vec![0.0; n];
    let mut weights = p.weights_at(&v);
    let mut lambda = fixed.unwrap_or(lambdas[lambdas.len() / 2]);
    let mut selecting = fixed.is_none();
    let mut last_pick = usize::MAX;
    let mut stable = 0;
    let mut trace = Vec::new();
    let mut gcv_values = vec![None; lambdas.len()];
    let mut converged = false;
    let mut iterations = 0;
    let mut misfit = dot(p.b, p.b);

    for it in 0..cfg.max_outer_iters {
        iterations = it + 1;
        let proj = space.project(p, weights.as_deref());
        if selecting {
            let values: Vec<Option<f64>> = lambdas
                .iter()
                .map(|&l| projected_gcv(&proj, &solve_projected(&proj, p.mu(l), true), rows))
                .collect();
            if let Some(i) = argmin(&values) {
                lambda = lambdas[i];
                if i == last_pick {
                    stable += 1;
                } else {
                    stable = 0;
                    last_pick = i;
                }
            }
            gcv_values = values;
            if stable >= SELECTION_STABLE_ITERS && it + 1 >= SELECTION_MIN_ITERS {
                selecting = false;
                trace.push(p.objective(&v, lambda));
            }
        }
        let mu = p.mu(lambda);
        let sol = solve_projected(&proj, mu, false);
        let v_new = space.expand(&sol.y);
        misfit = sol.misfit;
        let dv = space.expand_diff(&sol.y);
        if !selecting {
            trace.push(sol.misfit + lambda * lambda * p.penalty_value(&v_new, dv.as_deref()));
        }

        // Gradient of the current majorant at the new iterate.
        let r = space.data_residual(&sol.y, &proj);
        let mut g = vec![0.0; n];
        p.op.adjoint_into(&r, &mut g);
        match (&weights, &dv) {
            (Some(w), Some(d)) => {
                let wd: Vec<f64> = d.iter().zip(w).map(|(a, b)| a * b).collect();
                let mut pen = vec![0.0; n];
                forward_diff_adjoint(&p.shape, &wd, &mut pen);
                axpy(mu, &pen, &mut g);
            }
            _ => axpy(mu, &v_new, &mut g),
        }
        let step: f64 = v_new.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let small_gradient = norm(&g) <= cfg.tolerance * atb_norm;
        let small_step = step <= cfg.tolerance * norm(&v_new);
        v = v_new;
        weights = p.weights_at(&v);
        if !selecting && small_gradient && (p.penalty == Penalty::Tikhonov || small_step) {
            converged = true;
            break;
        }
        if !small_gradient {
            space.push(p, g);
        }
    }

    if selecting {
        // Never stabilized: freeze the last pick and report what we have.
        trace.push(p.objective(&v, lambda));
    }
    let report = SolveReport {
        status: status(converged),
        converged,
        penalty: p.penalty,
        lambda,
        lambda_grid: lambdas.to_vec(),
        gcv_values,
        iterations,
        residual_norm: misfit.max(0.0).sqrt(),
        objective_trace: trace,
        beta: p.beta,
    };
    RawSolution { values: v, report }
}

fn status(converged: bool) -> String {
    if converged { "converged" } else { "not-converged" }.to_string()
}

fn run_cg<O: LinearOperator + ?Sized>(p: &Problem<O>, cfg: &RegConfig, lambda: f64) -> RawSolution {
    let n = p.n();
    let mu = p.mu(lambda);
    let mut v = vec![0.0; n];
    let mut trace = vec![p.objective(&v, lambda)];
    let mut converged = false;
    let mut iterations = 0;
    let mut tmp = Vec::new();
    let outer = match p.penalty {
        Penalty::Tikhonov => 1,
        Penalty::TvAnisotropic => cfg.max_outer_iters,
    };
    for it in 0..outer {
        iterations = it + 1;
        let weights = p.weights_at(&v);
        let mut x = v.clone();
        let out = conjugate_gradient(
            |a, out| p.normal_apply(a, out, mu, weights.as_deref(), &mut tmp),
            &p.atb,
            &mut x,
            cfg.tolerance,
            cfg.max_inner_iters,
        );
        let step: f64 = x.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let xn = norm(&x);
        v = x;
        trace.push(p.objective(&v, lambda));
        if out.converged && (p.penalty == Penalty::Tikhonov || step <= cfg.tolerance * xn) {
            converged = true;
            break;
        }
    }
    let r = p.residual(&v);
    let report = SolveReport {
        status: status(converged),
        converged,
        penalty: p.penalty,
        lambda,
        lambda_grid: vec![lambda],
        gcv_values: vec![None],
        iterations,
        residual_norm: norm(&r),
        objective_trace: trace,
        beta: p.beta,
    };
    RawSolution { values: v, report }
}

fn run_fixed<O: LinearOperator + ?Sized>(p: &Problem<O>, cfg: &RegConfig, lambda: f64) -> RawSolution {
    match cfg.method {
        Method::GeneralizedKrylov => run_krylov(p, cfg, &[lambda], Some(lambda)),
        Method::LaggedDiffusivityCg => run_cg(p, cfg, lambda),
    }
}

/// Hutchinson estimate of `trace(R K^{-1} R^T)` for the frozen quadratic.
fn hutchinson_trace<O: LinearOperator + ?Sized>(
    p: &Problem<O>,
    cfg: &RegConfig,
    mu: f64,
    weights: Option<&[f64]>,
    seed: Seed,
) -> f64 {
    let rows = p.op.rows();
    let mut rng = seed.rng();
    let mut tmp = Vec::new();
    let mut total = 0.0;
    for _ in 0..cfg.gcv_probes {
        let z: Vec<f64> = (0..rows).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let mut rtz = vec![0.0; p.n()];
        p.op.adjoint_into(&z, &mut rtz);
        let mut x = vec![0.0; p.n()];
        conjugate_gradient(
            |a, out| p.normal_apply(a, out, mu, weights, &mut tmp),
            &rtz,
            &mut x,
            cfg.tolerance,
            cfg.max_inner_iters,
        );
        // z^T R K^{-1} R^T z = (R^T z)^T x
        total += dot(&rtz, &x);
    }
    total / cfg.gcv_probes as f64
}

fn full_gcv<O: LinearOperator + ?Sized>(
    p: &Problem<O>,
    cfg: &RegConfig,
    lambda: f64,
    sol: &RawSolution,
    seed: Seed,
) -> Result<f64> {
    let rows = p.op.rows();
    let weights = p.weights_at(&sol.values);
    let t = hutchinson_trace(p, cfg, p.mu(lambda), weights.as_deref(), seed);
    if t >= rows as f64 - 1e-9 {
        return Err(Error::InvalidGcv { lambda, trace: t, rows });
    }
    let r = p.residual(&sol.values);
    Ok(rows as f64 * dot(&r, &r) / ((rows as f64 - t) * (rows as f64 - t)))
}

fn default_beta(b: &[f64], grid: &PixelGrid) -> f64 {
    let max_b = b.iter().cloned().fold(0.0, f64::max);
    let beta = 1e-4 * max_b / grid.pixel_volume();
    if beta > 0.0 {
        beta
    } else {
        1e-12
    }
}

fn check_inputs<O: LinearOperator + ?Sized>(op: &O, b: &[f64], grid: &PixelGrid, cfg: &RegConfig) -> Result<()> {
    cfg.validate()?;
    grid.validate()?;
    if op.rows() != b.len() {
        return Err(Error::LengthMismatch {
            expected: op.rows(),
            got: b.len(),
        });
    }
    if op.cols() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: op.cols(),
        });
    }
    validate(b.iter().all(|x| x.is_finite()), || "measurements must be finite".into())?;
    if b.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateInput("measurement vector is all zero".into()));
    }
    Ok(())
}

fn seed_for(cfg: &RegConfig, index: usize) -> Seed {
    cfg.seed.substream(index as u64)
}

/// Minimizer before clipping and normalization.
pub fn solve_raw<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    cfg: &RegConfig,
    grid: &PixelGrid,
) -> Result<RawSolution> {
    check_inputs(op, b, grid, cfg)?;
    let beta = cfg.tv_smoothing.unwrap_or_else(|| default_beta(b, grid));
    let p = Problem::new(op, b, grid, cfg.penalty, beta);
    let scale = norm(b);
    let lambdas: Vec<f64> = cfg.lambda_grid.iter().map(|c| c * scale).collect();
    match cfg.selection {
        Selection::Fixed { lambda } => Ok(run_fixed(&p, cfg, lambda)),
        Selection::Gcv => match cfg.gcv {
            GcvMethod::Projected => Ok(run_krylov(&p, cfg, &lambdas, None)),
            GcvMethod::Hutchinson => {
                let mut best: Option<(f64, RawSolution)> = None;
                let mut values = Vec::with_capacity(lambdas.len());
                for (i, &l) in lambdas.iter().enumerate() {
                    let sol = run_fixed(&p, cfg, l);
                    let g = full_gcv(&p, cfg, l, &sol, seed_for(cfg, i)).ok();
                    values.push(g);
                    if let Some(g) = g {
                        if best.as_ref().map_or(true, |(bg, _)| g < *bg) {
                            best = Some((g, sol));
                        }
                    }
                }
                let (_, mut sol) = best.ok_or_else(|| {
                    Error::DegenerateInput("no lambda in the grid gave a valid GCV value".into())
                })?;
                sol.report.lambda_grid = lambdas;
                sol.report.gcv_values = values;
                Ok(sol)
            }
        },
    }
}

/// Solves the regularized problem and returns a clipped, normalized density.
pub fn solve<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    cfg: &RegConfig,
    grid: &PixelGrid,
) -> Result<(DensityEstimate, SolveReport)> {
    let raw = solve_raw(op, b, cfg, grid)?;
    let est = if cfg.nonnegativity {
        normalize(&raw.values, grid)?
    } else {
        scale_to_unit_mass(&raw.values, grid)?
    };
    Ok((est, raw.report))
}

/// GCV of the frozen-weight quadratic at `lambda`, with the influence trace
/// estimated from `cfg.gcv_probes` Rademacher probes.
pub fn gcv_value<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    lambda: f64,
    cfg: &RegConfig,
    grid: &PixelGrid,
    seed: Seed,
) -> Result<f64> {
    validate(lambda.is_finite() && lambda > 0.0, || "lambda must be positive".into())?;
    check_inputs(op, b, grid, cfg)?;
    validate(cfg.gcv_probes > 0, || "at least one probe is required".into())?;
    let beta = cfg.tv_smoothing.unwrap_or_else(|| default_beta(b, grid));
    let p = Problem::new(op, b, grid, cfg.penalty, beta);
    let sol = run_fixed(&p, cfg, lambda);
    full_gcv(&p, cfg, lambda, &sol, seed)
}

/// Clips negative values and scales to unit mass on the grid.
pub fn normalize(values: &[f64], grid: &PixelGrid) -> Result<DensityEstimate> {
    validate(values.iter().all(|x| x.is_finite()), || "values must be finite".into())?;
    let clipped: Vec<f64> = values.iter().map(|&x| x.max(0.0)).collect();
    scale_to_unit_mass(&clipped, grid)
}

fn scale_to_unit_mass(values: &[f64], grid: &PixelGrid) -> Result<DensityEstimate> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    let total: f64 = values.iter().sum::<f64>() * grid.pixel_volume();
    if !(total > 0.0) {
        return Err(Error::DegenerateEstimate);
    }
    DensityEstimate::new(grid.clone(), values.iter().map(|x| x / total).collect())
}
