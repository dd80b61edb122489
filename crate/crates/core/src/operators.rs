//! Discretization of `v A` on `L2_u`, operator norms, and the splitting experiment.
//!
//! With `g = u f` the operator becomes `g -> v(x) sum_k a_k(x) int_0^x t^k u(t)^{-1} g(t) dt`
//! on plain `L2`. The half line is cut at `R` and split into panels carrying
//! `q` Gauss-Legendre nodes each. Node values of `g` are interpolated on each
//! panel and integrated against `t^k u^{-1}` with a finer rule (product
//! integration), so singular or fast-growing `u^{-1}` is handled inside the
//! weights. Scaling by `sqrt(w_i)` on both sides makes the matrix 2-norm the
//! discrete `L2 -> L2` norm.
//!
//! The matrix is never stored densely. Each term `k` is rank one below the
//! diagonal panel block, so a matvec is a running sum plus one `q x q` block
//! per panel. Per-panel exponents keep exponential weights in range.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criteria::{splitting_criteria, CriteriaError, CriteriaOptions, CriterionReport, DegenerateKernel};
use crate::numerics::{GaussLegendre, WeightExpr, Wide};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("truncation point must be positive and finite, got {0}")]
    BadTruncation(f64),
    #[error("grid size {0} is below the minimum of 16")]
    GridTooSmall(usize),
    #[error("non-finite {what} at x = {x}")]
    NonFinite { what: &'static str, x: f64 },
    #[error("power iteration stalled after {iterations} steps at {last} (last relative change {gap:e})")]
    NoConvergence { last: f64, gap: f64, iterations: usize },
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Nodes per panel.
    pub q: usize,
    /// The first panel is `[0, min(R, 1) 2^-depth]`.
    pub depth_log2: f64,
    /// Gauss order of the product-integration rule on each (partial) panel.
    pub product_order: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { q: 8, depth_log2: 60.0, product_order: 24 }
    }
}

struct Term {
    k: usize,
    /// `sqrt(w_i) v(x_i) a_k(x_i) e^{E_p}`.
    beta: Vec<f64>,
    /// `int_panel t^k u^{-1} l_j / sqrt(w_j) e^{-E_p}`.
    alpha: Vec<f64>,
    /// Row-major `q x q` blocks: `int_{a_p}^{x_i} t^k u^{-1} l_j / sqrt(w_j) e^{-E_p}`.
    local: Vec<f64>,
    /// `E_p`, natural log.
    scale: Vec<f64>,
}

pub struct DiscretizedOperator {
    pub truncation_r: f64,
    pub q: usize,
    pub edges: Vec<f64>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `sqrt(w_i) v(x_i)` and `u(x_i)`, for mapping functions in and out.
    out_scale: Vec<f64>,
    u_at: Vec<f64>,
    terms: Vec<Term>,
}

fn monitor_term(w: &WeightExpr, x: f64) -> f64 {
    let Some(d) = w.derivatives(x, 1) else { return 0.0 };
    if d[0].is_zero() {
        return 0.0;
    }
    let r = d[1].div(d[0]).map(Wide::to_f64).unwrap_or(0.0).abs();
    if r.is_finite() {
        r.min(64.0 * (1.0 + 1.0 / x))
    } else {
        0.0
    }
}

/// Panel edges equidistributing `1/x + sum |(ln w)'|` over the weights involved.
fn panel_edges(kernel: &DegenerateKernel, u: &WeightExpr, v: &WeightExpr, r: f64, panels: usize, spec: &GridSpec) -> Vec<f64> {
    let x_min = r.min(1.0) * 2f64.powf(-spec.depth_log2);
    let fine = 4096;
    let lr = (r / x_min).ln();
    let xs: Vec<f64> = (0..=fine).map(|i| x_min * (lr * i as f64 / fine as f64).exp()).collect();
    let m: Vec<f64> = xs
        .par_iter()
        .map(|&x| {
            let mut s = 1.0 / x + monitor_term(u, x) + monitor_term(v, x);
            for (k, a) in kernel.coeffs.iter().enumerate() {
                if !a.is_zero_constant() {
                    s += monitor_term(a, x) + k as f64 / x;
                }
            }
            s * x
        })
        .collect();
    let mut cum = vec![0.0; fine + 1];
    let h = lr / fine as f64;
    for i in 1..=fine {
        cum[i] = cum[i - 1] + 0.5 * h * (m[i] + m[i - 1]);
    }
    let total = cum[fine];
    let mut edges = vec![0.0, x_min];
    let mut i = 0;
    for p in 1..panels - 1 {
        let target = total * p as f64 / (panels - 1) as f64;
        while cum[i + 1] < target {
            i += 1;
        }
        let t = (target - cum[i]) / (cum[i + 1] - cum[i]);
        edges.push((xs[i].ln() + t * (xs[i + 1].ln() - xs[i].ln())).exp());
    }
    edges.push(r);
    edges
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    (0..nodes.len())
        .map(|j| 1.0 / (0..nodes.len()).filter(|&m| m != j).map(|m| nodes[j] - nodes[m]).product::<f64>())
        .collect()
}

/// All Lagrange basis values at `tau` (reference coordinates).
fn lagrange_at(nodes: &[f64], bw: &[f64], tau: f64, out: &mut [f64]) {
    if let Some(j) = nodes.iter().position(|&n| n == tau) {
        out.fill(0.0);
        out[j] = 1.0;
        return;
    }
    let mut den = 0.0;
    for j in 0..nodes.len() {
        out[j] = bw[j] / (tau - nodes[j]);
        den += out[j];
    }
    for o in out.iter_mut() {
        *o /= den;
    }
}

fn finite(v: Option<Wide>, what: &'static str, x: f64) -> Result<Wide, OperatorError> {
    v.ok_or(OperatorError::NonFinite { what, x })
}

/// Matrix of `f -> v A f` on `L2_u(0, R)` with `n` nodes (rounded down to whole panels).
pub fn discretize(
    kernel: &DegenerateKernel,
    u: &WeightExpr,
    v: &WeightExpr,
    r: f64,
    n: usize,
    spec: &GridSpec,
) -> Result<DiscretizedOperator, OperatorError> {
    if !(r.is_finite() && r > 0.0) {
        return Err(OperatorError::BadTruncation(r));
    }
    if n < 16 {
        return Err(OperatorError::GridTooSmall(n));
    }
    let q = spec.q;
    let panels = (n / q).max(2);
    let edges = panel_edges(kernel, u, v, r, panels, spec);
    let gl = GaussLegendre::new(q);
    let fine = GaussLegendre::new(spec.product_order);
    let bw = barycentric_weights(&gl.nodes);

    let mut nodes = Vec::with_capacity(panels * q);
    let mut weights = Vec::with_capacity(panels * q);
    for p in 0..panels {
        let (a, b) = (edges[p], edges[p + 1]);
        let h = 0.5 * (b - a);
        for (t, w) in gl.nodes.iter().zip(&gl.weights) {
            nodes.push(a + h * (1.0 + t));
            weights.push(w * h);
        }
    }
    let u_at: Vec<f64> = nodes
        .iter()
        .map(|&x| u.eval_wide(x).map(Wide::to_f64).filter(|v| v.is_finite() && *v > 0.0).ok_or(OperatorError::NonFinite { what: "u", x }))
        .collect::<Result<_, _>>()?;
    let v_wide: Vec<Wide> = nodes.iter().map(|&x| finite(v.eval_wide(x), "v", x)).collect::<Result<_, _>>()?;
    let out_scale: Vec<f64> = v_wide
        .iter()
        .zip(&weights)
        .map(|(vw, w)| vw.scale(w.sqrt()).map(Wide::to_f64).unwrap_or(f64::NAN))
        .collect();

    let terms = kernel
        .coeffs
        .iter()
        .enumerate()
        .filter(|(_, a)| !a.is_zero_constant())
        .map(|(k, a)| {
            build_term(k, a, u, &v_wide, &edges, &nodes, &weights, &gl.nodes, &bw, &fine)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DiscretizedOperator { truncation_r: r, q, edges, nodes, weights, out_scale, u_at, terms })
}

#[allow(clippy::too_many_arguments)]
fn build_term(
    k: usize,
    a: &WeightExpr,
    u: &WeightExpr,
    v_wide: &[Wide],
    edges: &[f64],
    nodes: &[f64],
    weights: &[f64],
    ref_nodes: &[f64],
    bw: &[f64],
    fine: &GaussLegendre,
) -> Result<Term, OperatorError> {
    let q = ref_nodes.len();
    let panels = edges.len() - 1;
    let weight_fn = |t: f64| -> Result<Wide, OperatorError> {
        let ui = finite(u.eval_wide(t), "u", t)?;
        let tk = finite(Wide::from_f64(t).and_then(|x| x.powi(k as i64)), "t^k", t)?;
        finite(tk.div(ui), "u^-1", t)
    };
    // per panel: (full moments, partial block) in Wide
    let blocks: Vec<(Vec<Wide>, Vec<Wide>)> = (0..panels)
        .into_par_iter()
        .map(|p| {
            let (lo, hi) = (edges[p], edges[p + 1]);
            let h = 0.5 * (hi - lo);
            let mut lag = vec![0.0; q];
            let mut integrate_to = |end: f64| -> Result<Vec<Wide>, OperatorError> {
                let mut acc = vec![Wide::ZERO; q];
                let hh = 0.5 * (end - lo);
                for (s, w) in fine.nodes.iter().zip(&fine.weights) {
                    let t = lo + hh * (1.0 + s);
                    let f = weight_fn(t)?.scale(w * hh).expect("finite");
                    lagrange_at(ref_nodes, bw, (t - lo) / h - 1.0, &mut lag);
                    for j in 0..q {
                        acc[j] = acc[j].add(f.scale(lag[j]).expect("finite")).expect("finite");
                    }
                }
                Ok(acc)
            };
            let full = integrate_to(hi)?;
            let mut local = Vec::with_capacity(q * q);
            for i in 0..q {
                local.extend(integrate_to(nodes[p * q + i])?);
            }
            Ok((full, local))
        })
        .collect::<Result<_, OperatorError>>()?;

    let mut beta = vec![0.0; panels * q];
    let mut alpha = vec![0.0; panels * q];
    let mut local = vec![0.0; panels * q * q];
    let mut scale = vec![0.0; panels];
    for p in 0..panels {
        let (full, part) = &blocks[p];
        let sw: Vec<f64> = (0..q).map(|j| weights[p * q + j].sqrt()).collect();
        let e = full
            .iter()
            .zip(&sw)
            .map(|(m, s)| m.abs().ln_abs() - s.ln())
            .chain(part.iter().enumerate().map(|(ij, m)| m.abs().ln_abs() - sw[ij % q].ln()))
            .filter(|e| e.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let e = if e.is_finite() { e } else { 0.0 };
        scale[p] = e;
        let down = Wide::exp_f64(-e).expect("finite scale");
        let up = Wide::exp_f64(e).expect("finite scale");
        for j in 0..q {
            let idx = p * q + j;
            alpha[idx] = full[j].mul(down).map(|m| m.to_f64() / sw[j]).unwrap_or(0.0);
            for i in 0..q {
                local[p * q * q + i * q + j] = part[i * q + j].mul(down).map(|m| m.to_f64() / sw[j]).unwrap_or(0.0);
            }
            let x = nodes[idx];
            let ak = finite(a.eval_wide(x), "a_k", x)?;
            let b = v_wide[idx].mul(ak).and_then(|b| b.mul(up)).map(|b| b.to_f64() * sw[j]);
            beta[idx] = match b {
                Some(b) if b.is_finite() => b,
                _ => return Err(OperatorError::NonFinite { what: "v a_k", x }),
            };
        }
    }
    Ok(Term { k, beta, alpha, local, scale })
}

impl Term {
    fn apply(&self, q: usize, x: &[f64], y: &mut [f64]) {
        let panels = self.scale.len();
        let mut carry = 0.0;
        for p in 0..panels {
            if p > 0 {
                carry *= (self.scale[p - 1] - self.scale[p]).exp();
            }
            let base = p * q;
            let xs = &x[base..base + q];
            for i in 0..q {
                let row = &self.local[(base + i) * q..(base + i + 1) * q];
                let s: f64 = row.iter().zip(xs).map(|(a, b)| a * b).sum();
                y[base + i] += self.beta[base + i] * (carry + s);
            }
            carry += self.alpha[base..base + q].iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn apply_transpose(&self, q: usize, y: &[f64], z: &mut [f64]) {
        let panels = self.scale.len();
        // carry holds sum over later panels of beta_i y_i, at the scale of panel p
        let mut carry = 0.0;
        for p in (0..panels).rev() {
            let base = p * q;
            let by: Vec<f64> = (0..q).map(|i| self.beta[base + i] * y[base + i]).collect();
            for j in 0..q {
                let mut s = self.alpha[base + j] * carry;
                for i in 0..q {
                    s += self.local[(base + i) * q + j] * by[i];
                }
                z[base + j] += s;
            }
            if p > 0 {
                carry = (carry + by.iter().sum::<f64>()) * (self.scale[p - 1] - self.scale[p]).exp();
            }
        }
    }

    fn entry(&self, q: usize, i: usize, j: usize) -> f64 {
        let (pi, pj) = (i / q, j / q);
        if pj > pi {
            0.0
        } else if pj == pi {
            self.beta[i] * self.local[i * q + j % q]
        } else {
            self.beta[i] * self.alpha[j] * (self.scale[pj] - self.scale[pi]).exp()
        }
    }
}

impl DiscretizedOperator {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    /// Kernel indices with a nonzero coefficient.
    pub fn terms(&self) -> Vec<usize> {
        self.terms.iter().map(|t| t.k).collect()
    }

    /// `y = M x`, restricted to term `k` when given.
    pub fn apply(&self, x: &[f64], only: Option<usize>) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for t in self.terms.iter().filter(|t| only.is_none_or(|k| t.k == k)) {
            t.apply(self.q, x, &mut y);
        }
        y
    }

    pub fn apply_transpose(&self, y: &[f64], only: Option<usize>) -> Vec<f64> {
        let mut z = vec![0.0; y.len()];
        for t in self.terms.iter().filter(|t| only.is_none_or(|k| t.k == k)) {
            t.apply_transpose(self.q, y, &mut z);
        }
        z
    }

    pub fn entry(&self, i: usize, j: usize, only: Option<usize>) -> f64 {
        self.terms.iter().filter(|t| only.is_none_or(|k| t.k == k)).map(|t| t.entry(self.q, i, j)).sum()
    }

    pub fn to_dense(&self, only: Option<usize>) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j, only))
    }

    /// `(A f)(x_i)` from node values `f(x_j)`, through the conjugated matrix.
    pub fn apply_to_function(&self, f: &[f64]) -> Vec<f64> {
        let g: Vec<f64> = (0..f.len()).map(|j| self.weights[j].sqrt() * self.u_at[j] * f[j]).collect();
        let y = self.apply(&g, None);
        y.iter().zip(&self.out_scale).map(|(y, s)| y / s).collect()
    }

    /// `int_0^R t^k f(t) dt` for every term, by the product-integration weights
    /// of the matrix: the value each `(A_k f)(x) / a_k(x)` takes beyond the support of `f`.
    pub fn total_integrals(&self, f: &[f64]) -> Vec<(usize, f64)> {
        let q = self.q;
        self.terms
            .iter()
            .map(|t| {
                let s = (0..f.len())
                    .map(|j| t.alpha[j] * t.scale[j / q].exp() * self.weights[j].sqrt() * self.u_at[j] * f[j])
                    .sum();
                (t.k, s)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormOptions {
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Dense SVD cross-check up to this size.
    pub svd_max_n: usize,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions { rel_tol: 1e-10, max_iterations: 200_000, seed: 0x5eed, svd_max_n: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    /// Estimates from the all-ones start and from the random restart.
    pub starts: [f64; 2],
    pub dense_svd: Option<f64>,
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn power_run(op: &DiscretizedOperator, only: Option<usize>, mut x: Vec<f64>, opts: &NormOptions) -> Result<(f64, usize), OperatorError> {
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut prev = f64::NAN;
    let mut prev_gap = f64::NAN;
    for it in 1..=opts.max_iterations {
        let y = op.apply(&x, only);
        let sigma = norm2(&y);
        if sigma == 0.0 {
            return Ok((0.0, it));
        }
        let z = op.apply_transpose(&y, only);
        let nz = norm2(&z);
        if nz == 0.0 {
            return Ok((sigma, it));
        }
        x = z.into_iter().map(|v| v / nz).collect();
        let gap = (sigma - prev).abs();
        if it > 3 && gap <= opts.rel_tol * sigma {
            // geometric extrapolation of the remaining error
            let rho = (gap / prev_gap).min(0.999_999);
            if gap == 0.0 || !(rho.is_finite()) || gap * rho / (1.0 - rho) <= opts.rel_tol * sigma {
                return Ok((sigma, it));
            }
        }
        prev_gap = gap;
        prev = sigma;
    }
    Err(OperatorError::NoConvergence { last: prev, gap: prev_gap / prev, iterations: opts.max_iterations })
}

/// Largest singular value of the matrix (of term `k` alone when given).
pub fn operator_norm(op: &DiscretizedOperator, only: Option<usize>, opts: &NormOptions) -> Result<NormEstimate, OperatorError> {
    let n = op.size();
    if op.terms.iter().all(|t| only.is_some_and(|k| t.k != k)) {
        return Ok(NormEstimate { value: 0.0, iterations: 0, starts: [0.0, 0.0], dense_svd: None });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let random: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (a, b) = rayon::join(|| power_run(op, only, vec![1.0; n], opts), || power_run(op, only, random, opts));
    let (a, ia) = a?;
    let (b, ib) = b?;
    let dense_svd = (n <= opts.svd_max_n).then(|| {
        let m = op.to_dense(only);
        m.svd(false, false).singular_values.iter().copied().fold(0.0, f64::max)
    });
    Ok(NormEstimate { value: a.max(b), iterations: ia + ib, starts: [a, b], dense_svd })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentOptions {
    pub grid: GridSpec,
    pub norm: NormOptions,
    pub criteria: CriteriaOptions,
    /// Relative change across the top two rungs below which a norm counts as stable.
    pub stable_tol: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            grid: GridSpec::default(),
            norm: NormOptions::default(),
            criteria: CriteriaOptions::default(),
            stable_tol: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub norm: f64,
    /// `||A_k||` for `k = 0..=n`.
    pub components: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentVerdict {
    SplittingConsistent,
    Mismatch { detail: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingExperiment {
    pub kernel: DegenerateKernel,
    pub u: WeightExpr,
    pub v: WeightExpr,
    #[serde(rename = "R_ladder")]
    pub ladder: Vec<f64>,
    pub rows: Vec<NormRow>,
    pub criteria: CriterionReport,
    pub sum_s: Option<Wide>,
    pub empirical_c1: Option<f64>,
    pub empirical_c2: Option<f64>,
    pub full_stable: bool,
    pub component_stable: Vec<bool>,
    pub verdict: ExperimentVerdict,
    /// Disagreements between criterion verdicts and norm growth.
    pub flags: Vec<String>,
}

fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (b - a).abs() / a.abs().max(b.abs())
    }
}

impl SplittingExperiment {
    fn stable(&self, pick: impl Fn(&NormRow) -> f64, tol: f64) -> bool {
        match self.rows.len() {
            0 => true,
            1 => true,
            m => relative_change(pick(&self.rows[m - 2]), pick(&self.rows[m - 1])) < tol,
        }
    }

    pub fn to_csv(&self) -> String {
        let n = self.kernel.coeffs.len();
        let mut s = String::from("R,N,norm");
        for k in 0..n {
            s.push_str(&format!(",norm_{k}"));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{},{},{}", r.r, r.n, r.norm));
            for c in &r.components {
                s.push_str(&format!(",{c}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Norms of `A` and every `A_k` along the truncation ladder, next to the criteria.
pub fn splitting_experiment(
    kernel: &DegenerateKernel,
    u: &WeightExpr,
    v: &WeightExpr,
    ladder: &[f64],
    n: usize,
    opts: &ExperimentOptions,
) -> Result<SplittingExperiment, OperatorError> {
    let (rows, criteria) = rayon::join(
        || {
            ladder
                .par_iter()
                .map(|&r| {
                    let op = discretize(kernel, u, v, r, n, &opts.grid)?;
                    let norm = operator_norm(&op, None, &opts.norm)?.value;
                    let components = (0..kernel.coeffs.len())
                        .into_par_iter()
                        .map(|k| operator_norm(&op, Some(k), &opts.norm).map(|e| e.value))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(NormRow { r, n: op.size(), norm, components })
                })
                .collect::<Result<Vec<_>, OperatorError>>()
        },
        || splitting_criteria(kernel, u, v, &opts.criteria),
    );
    let rows = rows?;
    let criteria = criteria?;
    let sum_s = criteria.total;
    let ratios: Vec<f64> = match sum_s.map(Wide::to_f64) {
        Some(s) if s > 0.0 && s.is_finite() => rows.iter().map(|r| r.norm / s).collect(),
        _ => vec![],
    };
    let empirical_c1 = ratios.iter().copied().reduce(f64::min);
    let empirical_c2 = ratios.iter().copied().reduce(f64::max);
    let mut exp = SplittingExperiment {
        kernel: kernel.clone(),
        u: u.clone(),
        v: v.clone(),
        ladder: ladder.to_vec(),
        rows,
        criteria,
        sum_s,
        empirical_c1,
        empirical_c2,
        full_stable: false,
        component_stable: vec![],
        verdict: ExperimentVerdict::SplittingConsistent,
        flags: vec![],
    };
    exp.full_stable = exp.stable(|r| r.norm, opts.stable_tol);
    exp.component_stable = (0..kernel.coeffs.len()).map(|k| exp.stable(|r| r.components[k], opts.stable_tol)).collect();
    let all_components = exp.component_stable.iter().all(|&s| s);
    if all_components != exp.full_stable {
        exp.verdict = ExperimentVerdict::Mismatch {
            detail: format!("full operator stable: {}, all components stable: {all_components}", exp.full_stable),
        };
    }
    for (k, stable) in exp.component_stable.iter().enumerate() {
        let s = &exp.criteria.per_k[k].entry.supremum;
        if s.is_finite() != *stable && !matches!(s, crate::criteria::Supremum::Inconclusive { .. }) {
            exp.flags.push(format!(
                "term {k}: criterion {} but norm ladder {}",
                if s.is_finite() { "finite" } else { "infinite" },
                if *stable { "stable" } else { "growing" }
            ));
        }
    }
    Ok(exp)
}
