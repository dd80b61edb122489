//! Boundedness criteria of Muckenhoupt type.
//!
//! Each criterion is a supremum over `r > 0` of a product
//! `T(r) H(r)`, where `T(r)` is an `L2` norm over `(r, inf)` and `H(r)` an
//! `L2` norm over `(0, r)`. The supremum is located on a log grid in `r` and
//! refined by golden-section search around the grid maximum.
//!
//! Signs of kernel coefficients never matter: only `|a_k|` enters a norm.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{gamma, IntegrationError, QuadratureRule, WeightExpr, Wide};
use crate::weights::{doubling_constant, weak_doubling_check, SamplingPlan, Verdict};

/// Integrand `x -> f(x)` of a norm factor.
pub type Integrand<'a> = dyn Fn(f64) -> Option<Wide> + Sync + 'a;
/// Integrand `(x, r) -> f(x, r)` of a norm factor whose integrand moves with `r`.
pub type ShiftedIntegrand<'a> = dyn Fn(f64, f64) -> Option<Wide> + Sync + 'a;

/// One side of a sup-product.
#[derive(Clone, Copy)]
pub enum Factor<'a> {
    /// `||f||_{L2(r, inf)}`.
    Tail(&'a Integrand<'a>),
    /// `||g||_{L2(0, r)}`.
    Head(&'a Integrand<'a>),
    /// `||f(., r)||_{L2(r, inf)}`.
    TailShifted(&'a ShiftedIntegrand<'a>),
    /// `||g(., r)||_{L2(0, r)}`.
    HeadShifted(&'a ShiftedIntegrand<'a>),
}

impl Factor<'_> {
    fn side(&self) -> Side {
        match self {
            Factor::Tail(_) | Factor::TailShifted(_) => Side::Tail,
            Factor::Head(_) | Factor::HeadShifted(_) => Side::Head,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Tail,
    Head,
}

/// The `r` grid and the rules that turn a sampled curve into a verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupGrid {
    pub min_log2_r: f64,
    pub max_log2_r: f64,
    pub points_per_decade: usize,
    /// Golden-section passes around the grid maximum.
    pub refine_passes: usize,
    /// Decades at either end over which steady growth means an infinite supremum.
    pub growth_decades: usize,
    /// Growth must also exceed this multiple of the product at `r = 1`.
    pub growth_factor: f64,
    /// Relative rise over the last decade that leaves a finite supremum in doubt.
    pub drift_tolerance: f64,
}

impl Default for SupGrid {
    fn default() -> Self {
        SupGrid {
            min_log2_r: -12.0,
            max_log2_r: 24.0,
            points_per_decade: 48,
            refine_passes: 3,
            growth_decades: 5,
            growth_factor: 1e4,
            drift_tolerance: 1e-4,
        }
    }
}

impl SupGrid {
    pub fn points(&self) -> Vec<f64> {
        let decades = (self.max_log2_r - self.min_log2_r) * std::f64::consts::LOG10_2;
        let m = (decades * self.points_per_decade as f64).round().max(1.0) as usize;
        let (lo, hi) = (self.min_log2_r, self.max_log2_r);
        (0..=m).map(|i| 2f64.powf(lo + (hi - lo) * i as f64 / m as f64)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidencePoint {
    pub r: f64,
    /// `None` stands for an infinite factor.
    pub tail: Option<Wide>,
    pub head: Option<Wide>,
    pub product: Option<Wide>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    /// `||f||_{L2(r, inf)} = inf` for every `r`.
    TailDivergent { near: f64 },
    /// `||g||_{L2(0, r)} = inf` for every `r`.
    HeadDivergent { near: f64 },
    /// Product rising steadily over the top decades of the grid.
    GrowthAtInfinity { points: Vec<(f64, Wide)> },
    /// Product rising steadily as `r -> 0`.
    GrowthAtZero { points: Vec<(f64, Wide)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Supremum {
    Finite { value: Wide },
    Infinite { witness: Witness },
    Inconclusive { value: Wide, reason: String },
}

impl Supremum {
    pub fn is_finite(&self) -> bool {
        matches!(self, Supremum::Finite { .. })
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Supremum::Infinite { .. })
    }

    /// The sampled value, for finite and inconclusive outcomes.
    pub fn value(&self) -> Option<Wide> {
        match self {
            Supremum::Finite { value } | Supremum::Inconclusive { value, .. } => Some(*value),
            Supremum::Infinite { .. } => None,
        }
    }

    pub fn value_f64(&self) -> f64 {
        self.value().map(Wide::to_f64).unwrap_or(f64::INFINITY)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupEntry {
    pub supremum: Supremum,
    pub argsup_r: f64,
    pub evidence: Vec<EvidencePoint>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupError {
    #[error("{side:?} factor: {source}")]
    Integration { side: Side, source: IntegrationError },
    #[error("both factors diverge (tail near {tail_near}, head near {head_near})")]
    BothDivergent { tail_near: f64, head_near: f64 },
}

enum Curve {
    Divergent { near: f64 },
    /// Squared norms at the grid points.
    Values(Vec<Wide>),
}

fn sq(v: Wide) -> Option<Wide> {
    v.mul(v)
}

fn integral(rule: &QuadratureRule, f: impl Fn(f64) -> Option<Wide>, a: f64, b: f64) -> Result<Wide, IntegrationError> {
    if a >= b {
        return Ok(Wide::ZERO);
    }
    Ok(rule.integrate_wide(f, a, b)?.value.abs())
}

fn divergent_or<T>(r: Result<T, IntegrationError>) -> Result<Result<T, f64>, IntegrationError> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(IntegrationError::Divergent { near }) => Ok(Err(near)),
        Err(e) => Err(e),
    }
}

fn build_curve(f: Factor, grid: &[f64], rule: &QuadratureRule) -> Result<Curve, IntegrationError> {
    let m = grid.len();
    match f {
        Factor::Tail(f) => {
            let g = |x: f64| f(x).and_then(sq);
            let beyond = match divergent_or(integral(rule, g, grid[m - 1], f64::INFINITY))? {
                Ok(v) => v,
                Err(near) => return Ok(Curve::Divergent { near }),
            };
            let cells: Vec<Wide> =
                grid.par_windows(2).map(|w| integral(rule, g, w[0], w[1])).collect::<Result<_, _>>()?;
            let mut out = vec![Wide::ZERO; m];
            out[m - 1] = beyond;
            for i in (0..m - 1).rev() {
                out[i] = out[i + 1].add(cells[i]).expect("finite sum");
            }
            Ok(Curve::Values(out))
        }
        Factor::Head(g) => {
            let h = |x: f64| g(x).and_then(sq);
            let below = match divergent_or(integral(rule, h, 0.0, grid[0]))? {
                Ok(v) => v,
                Err(near) => return Ok(Curve::Divergent { near }),
            };
            let cells: Vec<Wide> =
                grid.par_windows(2).map(|w| integral(rule, h, w[0], w[1])).collect::<Result<_, _>>()?;
            let mut out = vec![below; m];
            for i in 1..m {
                out[i] = out[i - 1].add(cells[i - 1]).expect("finite sum");
            }
            Ok(Curve::Values(out))
        }
        Factor::TailShifted(_) | Factor::HeadShifted(_) => {
            let vals: Vec<Result<Wide, f64>> = grid
                .par_iter()
                .map(|&r| divergent_or(shifted_at(f, r, rule)))
                .collect::<Result<_, _>>()?;
            if let Some(near) = vals.iter().find_map(|v| v.err()) {
                return Ok(Curve::Divergent { near });
            }
            Ok(Curve::Values(vals.into_iter().map(|v| v.unwrap()).collect()))
        }
    }
}

fn shifted_at(f: Factor, r: f64, rule: &QuadratureRule) -> Result<Wide, IntegrationError> {
    match f {
        Factor::TailShifted(f) => integral(rule, |x| f(x, r).and_then(sq), r, f64::INFINITY),
        Factor::HeadShifted(g) => integral(rule, |x| g(x, r).and_then(sq), 0.0, r),
        _ => unreachable!("only shifted factors are evaluated directly"),
    }
}

/// Squared factor at an arbitrary `r` inside the grid.
fn squared_at(f: Factor, curve: &[Wide], grid: &[f64], r: f64, rule: &QuadratureRule) -> Result<Wide, IntegrationError> {
    let i = grid.partition_point(|&g| g <= r).saturating_sub(1).min(grid.len() - 2);
    match f {
        Factor::Tail(f) => {
            let extra = integral(rule, |x| f(x).and_then(sq), r, grid[i + 1])?;
            Ok(curve[i + 1].add(extra).expect("finite sum"))
        }
        Factor::Head(g) => {
            let extra = integral(rule, |x| g(x).and_then(sq), grid[i], r)?;
            Ok(curve[i].add(extra).expect("finite sum"))
        }
        _ => shifted_at(f, r, rule),
    }
}

fn product_of(t: Wide, h: Wide) -> Wide {
    t.sqrt().and_then(|a| h.sqrt().and_then(|b| a.mul(b))).unwrap_or(Wide::ZERO)
}

/// `sup_r T(r) H(r)` with divergence and drift diagnostics.
pub fn sup_product(tail: Factor, head: Factor, grid: &SupGrid, rule: &QuadratureRule) -> Result<SupEntry, SupError> {
    assert!(tail.side() == Side::Tail && head.side() == Side::Head, "factor sides swapped");
    let rs = grid.points();
    let (tc, hc) = rayon::join(|| build_curve(tail, &rs, rule), || build_curve(head, &rs, rule));
    let tc = tc.map_err(|source| SupError::Integration { side: Side::Tail, source })?;
    let hc = hc.map_err(|source| SupError::Integration { side: Side::Head, source })?;
    match (&tc, &hc) {
        (Curve::Divergent { near: tn }, Curve::Divergent { near: hn }) => {
            return Err(SupError::BothDivergent { tail_near: *tn, head_near: *hn });
        }
        (Curve::Divergent { near }, Curve::Values(h)) => {
            let evidence = rs
                .iter()
                .zip(h)
                .map(|(&r, hv)| EvidencePoint { r, tail: None, head: hv.sqrt(), product: None })
                .collect();
            if h.iter().all(|v| v.is_zero()) {
                return Ok(SupEntry { supremum: Supremum::Finite { value: Wide::ZERO }, argsup_r: rs[0], evidence });
            }
            return Ok(SupEntry {
                supremum: Supremum::Infinite { witness: Witness::TailDivergent { near: *near } },
                argsup_r: rs[0],
                evidence,
            });
        }
        (Curve::Values(t), Curve::Divergent { near }) => {
            let evidence = rs
                .iter()
                .zip(t)
                .map(|(&r, tv)| EvidencePoint { r, tail: tv.sqrt(), head: None, product: None })
                .collect();
            if t.iter().all(|v| v.is_zero()) {
                return Ok(SupEntry { supremum: Supremum::Finite { value: Wide::ZERO }, argsup_r: rs[0], evidence });
            }
            return Ok(SupEntry {
                supremum: Supremum::Infinite { witness: Witness::HeadDivergent { near: *near } },
                argsup_r: rs[0],
                evidence,
            });
        }
        _ => {}
    }
    let (Curve::Values(t), Curve::Values(h)) = (&tc, &hc) else { unreachable!() };
    let prods: Vec<Wide> = t.iter().zip(h).map(|(a, b)| product_of(*a, *b)).collect();
    let evidence: Vec<EvidencePoint> = (0..rs.len())
        .map(|i| EvidencePoint { r: rs[i], tail: t[i].sqrt(), head: h[i].sqrt(), product: Some(prods[i]) })
        .collect();
    let eval = |r: f64| -> Result<Wide, SupError> {
        let tv = squared_at(tail, t, &rs, r, rule).map_err(|source| SupError::Integration { side: Side::Tail, source })?;
        let hv = squared_at(head, h, &rs, r, rule).map_err(|source| SupError::Integration { side: Side::Head, source })?;
        Ok(product_of(tv, hv))
    };
    let (supremum, argsup_r) = classify_curve(&rs, &prods, grid, eval)?;
    Ok(SupEntry { supremum, argsup_r, evidence })
}

/// Reads a verdict off a curve sampled at `grid.points()`: steady growth at
/// either end is an infinite supremum, otherwise the grid maximum is refined
/// with `eval`.
pub(crate) fn classify_curve<E>(
    rs: &[f64],
    prods: &[Wide],
    grid: &SupGrid,
    eval: impl Fn(f64) -> Result<Wide, E>,
) -> Result<(Supremum, f64), E> {
    let imax = (0..prods.len()).fold(0, |best, i| if prods[i] > prods[best] { i } else { best });
    let mut best_r = rs[imax];
    let mut best = prods[imax];

    let ppd = grid.points_per_decade.max(1);
    let m = rs.len();
    let i_one = rs.partition_point(|&r| r < 1.0).min(m - 1);
    let at_one = prods[i_one];
    let threshold = at_one.scale(grid.growth_factor).unwrap_or(at_one);

    let top: Vec<usize> = (0..=grid.growth_decades).rev().filter_map(|j| (m - 1).checked_sub(j * ppd)).collect();
    if top.len() == grid.growth_decades + 1
        && top.windows(2).all(|w| prods[w[1]] > prods[w[0]])
        && prods[m - 1] > threshold
    {
        return Ok((
            Supremum::Infinite {
                witness: Witness::GrowthAtInfinity { points: top.iter().map(|&i| (rs[i], prods[i])).collect() },
            },
            rs[m - 1],
        ));
    }
    let bottom_decades = grid.growth_decades.min(i_one / ppd);
    if bottom_decades >= 2 {
        let bottom: Vec<usize> = (0..=bottom_decades).map(|j| j * ppd).collect();
        if bottom.windows(2).all(|w| prods[w[0]] > prods[w[1]]) && prods[0] > threshold {
            return Ok((
                Supremum::Infinite {
                    witness: Witness::GrowthAtZero { points: bottom.iter().map(|&i| (rs[i], prods[i])).collect() },
                },
                rs[0],
            ));
        }
    }

    if imax > 0 && imax + 1 < m && !best.is_zero() {
        let (mut lo, mut hi) = (rs[imax - 1].ln(), rs[imax + 1].ln());
        for _ in 0..grid.refine_passes {
            let (x, v) = golden_max(&eval, lo, hi, 24)?;
            if v > best {
                best = v;
                best_r = x.exp();
            }
            let half = 0.25 * (hi - lo);
            let c = best_r.ln();
            lo = (c - half).max(rs[0].ln());
            hi = (c + half).min(rs[m - 1].ln());
        }
    }

    let rising_top = m > ppd && prods[m - 1].ratio(prods[m - 1 - ppd]) > 1.0 + grid.drift_tolerance;
    let rising_bottom = m > ppd && prods[0].ratio(prods[ppd]) > 1.0 + grid.drift_tolerance;
    let supremum = if rising_top || rising_bottom {
        let end = if rising_top { rs[m - 1] } else { rs[0] };
        Supremum::Inconclusive { value: best, reason: format!("product still rising at the grid edge r = {end:e}") }
    } else {
        Supremum::Finite { value: best }
    };
    Ok((supremum, best_r))
}

fn golden_max<E>(
    f: &impl Fn(f64) -> Result<Wide, E>,
    mut a: f64,
    mut b: f64,
    iters: usize,
) -> Result<(f64, Wide), E> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c.exp())?;
    let mut fd = f(d.exp())?;
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d.exp())?;
        }
    }
    Ok(if fc > fd { (c, fc) } else { (d, fd) })
}

/// `A(x, t) = sum_k a_k(x) t^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegenerateKernel {
    pub coeffs: Vec<WeightExpr>,
}

impl DegenerateKernel {
    pub fn new(coeffs: Vec<WeightExpr>) -> Result<DegenerateKernel, CriteriaError> {
        if coeffs.is_empty() {
            return Err(CriteriaError::EmptyKernel);
        }
        Ok(DegenerateKernel { coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(WeightExpr::is_zero_constant)
    }

    /// The rank-one piece `a_k(x) t^k`.
    pub fn component(&self, k: usize) -> DegenerateKernel {
        let mut coeffs = vec![WeightExpr::constant(0.0); k + 1];
        coeffs[k] = self.coeffs[k].clone();
        DegenerateKernel { coeffs }
    }

    /// `A(x, t)` at a point.
    pub fn eval(&self, x: f64, t: f64) -> Option<f64> {
        let mut s = 0.0;
        let mut tk = 1.0;
        for a in &self.coeffs {
            if !a.is_zero_constant() {
                s += a.eval(x)? * tk;
            }
            tk *= t;
        }
        Some(s)
    }
}

/// `(x - t)^{alpha - 1} / Gamma(alpha)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiemannLiouvilleKernel {
    pub alpha: f64,
    pub gamma_alpha: f64,
}

impl RiemannLiouvilleKernel {
    pub fn new(alpha: f64) -> Result<RiemannLiouvilleKernel, CriteriaError> {
        if !(alpha.is_finite() && alpha >= 1.0) {
            return Err(CriteriaError::BadAlpha(alpha));
        }
        Ok(RiemannLiouvilleKernel { alpha, gamma_alpha: gamma(alpha) })
    }

    /// Expansion into `sum_k a_k(x) t^k` for integer `alpha`.
    pub fn to_degenerate(&self) -> Option<DegenerateKernel> {
        if self.alpha.fract() != 0.0 || self.alpha > 13.0 {
            return None;
        }
        let m = self.alpha as usize - 1;
        let mut coeffs = Vec::with_capacity(m + 1);
        let mut binom = 1.0;
        for k in 0..=m {
            let c = binom * if k % 2 == 0 { 1.0 } else { -1.0 } / self.gamma_alpha.round();
            let xk = WeightExpr::constant(c);
            coeffs.push(if m - k == 0 { xk } else { xk.times_power_of_x((m - k) as u32) });
            binom = binom * (m - k) as f64 / (k + 1) as f64;
        }
        Some(DegenerateKernel { coeffs })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriteriaError {
    #[error("kernel needs at least one coefficient")]
    EmptyKernel,
    #[error("alpha must be a finite number >= 1, got {0}")]
    BadAlpha(f64),
    #[error("term {k}: {source}")]
    Sup { k: usize, source: SupError },
    #[error("side condition fails for term {k}: the coefficient times v is not square integrable near 0 ({source})")]
    SideCondition { k: usize, source: IntegrationError },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriteriaOptions {
    pub grid: SupGrid,
    pub rule: QuadratureRule,
    /// The `delta` of the doubling class used for stamps and side conditions.
    pub delta: f64,
    /// Sampling plan for the doubling stamp of `u^{-2}`; `None` skips stamping.
    pub stamp: Option<SamplingPlan>,
}

impl Default for CriteriaOptions {
    fn default() -> Self {
        CriteriaOptions {
            grid: SupGrid::default(),
            rule: QuadratureRule { rel_tol: 1e-11, ..QuadratureRule::default() },
            delta: 0.0,
            stamp: Some(SamplingPlan::default()),
        }
    }
}

impl CriteriaOptions {
    pub fn unstamped() -> CriteriaOptions {
        CriteriaOptions { stamp: None, ..CriteriaOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingStamp {
    /// The weight that was checked, `u^{-2}`.
    pub weight: String,
    pub delta: f64,
    /// `None` when the check itself failed; see `error`.
    pub verdict: Option<Verdict>,
    #[serde(rename = "D")]
    pub d: Option<Wide>,
    pub error: Option<String>,
}

impl DoublingStamp {
    pub fn is_member(&self) -> bool {
        self.verdict.as_ref().is_some_and(Verdict::is_member)
    }
}

fn u_inv_sq(u: &WeightExpr) -> WeightExpr {
    u.pow(-2.0)
}

pub(crate) fn stamp_doubling(u: &WeightExpr, opts: &CriteriaOptions) -> Option<DoublingStamp> {
    let plan = opts.stamp.as_ref()?;
    let w = u_inv_sq(u);
    Some(match doubling_constant(&w, opts.delta, plan) {
        Ok(r) => DoublingStamp { weight: w.print(), delta: opts.delta, verdict: Some(r.verdict), d: Some(r.d), error: None },
        Err(e) => DoublingStamp { weight: w.print(), delta: opts.delta, verdict: None, d: None, error: Some(e.to_string()) },
    })
}

fn stamp_weak(u: &WeightExpr, opts: &CriteriaOptions) -> Option<DoublingStamp> {
    let plan = opts.stamp.as_ref()?;
    let w = u_inv_sq(u);
    Some(match weak_doubling_check(&w, opts.delta, plan) {
        Ok(r) => DoublingStamp { weight: w.print(), delta: opts.delta, verdict: Some(r.verdict), d: Some(r.d), error: None },
        Err(e) => DoublingStamp { weight: w.print(), delta: opts.delta, verdict: None, d: None, error: Some(e.to_string()) },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionKind {
    Hardy,
    Splitting,
    SimpleRiemannLiouville,
    Adjoint,
    Multiplier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CriterionVerdict {
    Bounded,
    Unbounded { k: usize },
    Inconclusive { reason: String },
}

impl CriterionVerdict {
    fn from_entries<'a>(entries: impl IntoIterator<Item = (usize, &'a Supremum)>) -> CriterionVerdict {
        let mut inconclusive = None;
        for (k, s) in entries {
            match s {
                Supremum::Infinite { .. } => return CriterionVerdict::Unbounded { k },
                Supremum::Inconclusive { reason, .. } if inconclusive.is_none() => {
                    inconclusive = Some(CriterionVerdict::Inconclusive { reason: format!("term {k}: {reason}") })
                }
                _ => {}
            }
        }
        inconclusive.unwrap_or(CriterionVerdict::Bounded)
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, CriterionVerdict::Bounded)
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, CriterionVerdict::Unbounded { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KCriterion {
    pub k: usize,
    #[serde(flatten)]
    pub entry: SupEntry,
}

/// Cross-validation of the single-supremum criterion against the two-condition one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub two_condition_verdict: CriterionVerdict,
    pub agrees: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: CriterionKind,
    pub per_k: Vec<KCriterion>,
    /// `sum_k S_k` when every term is finite.
    pub total: Option<Wide>,
    pub verdict: CriterionVerdict,
    /// Doubling check of `u^{-2}`; the verdict characterizes boundedness only
    /// when this says member.
    pub doubling_stamp: Option<DoublingStamp>,
    pub weak_doubling_stamp: Option<DoublingStamp>,
    pub characterizes_operator: bool,
    pub certifies: Option<String>,
    pub cross_check: Option<CrossCheck>,
}

impl CriterionReport {
    pub(crate) fn assemble(criterion: CriterionKind, per_k: Vec<KCriterion>) -> CriterionReport {
        let verdict = CriterionVerdict::from_entries(per_k.iter().map(|e| (e.k, &e.entry.supremum)));
        let total = per_k.iter().try_fold(Wide::ZERO, |acc, e| match &e.entry.supremum {
            Supremum::Finite { value } => acc.add(*value),
            _ => None,
        });
        CriterionReport {
            criterion,
            per_k,
            total,
            verdict,
            doubling_stamp: None,
            weak_doubling_stamp: None,
            characterizes_operator: false,
            certifies: None,
            cross_check: None,
        }
    }

    pub fn s(&self, k: usize) -> &Supremum {
        &self.per_k[k].entry.supremum
    }
}

pub(crate) fn zero_entry(grid: &SupGrid) -> SupEntry {
    SupEntry { supremum: Supremum::Finite { value: Wide::ZERO }, argsup_r: 2f64.powf(grid.min_log2_r), evidence: vec![] }
}

pub(crate) fn x_pow_over(u: &WeightExpr, k: f64) -> impl Fn(f64) -> Option<Wide> + Sync + '_ {
    move |x| {
        let xk = if k == 0.0 { Wide::ONE } else { Wide::from_f64(x)?.powf(k)? };
        xk.div(u.eval_wide(x)?)
    }
}

fn coeff_times<'a>(a: &'a WeightExpr, v: &'a WeightExpr) -> impl Fn(f64) -> Option<Wide> + Sync + 'a {
    move |x| a.eval_wide(x)?.mul(v.eval_wide(x)?)
}

/// `sup_r ||v||_{L2(r, inf)} ||u^{-1}||_{L2(0, r)}`.
pub fn hardy_criterion(u: &WeightExpr, v: &WeightExpr, opts: &CriteriaOptions) -> Result<CriterionReport, CriteriaError> {
    let tail = |x: f64| v.eval_wide(x);
    let head = x_pow_over(u, 0.0);
    let entry = sup_product(Factor::Tail(&tail), Factor::Head(&head), &opts.grid, &opts.rule)
        .map_err(|source| CriteriaError::Sup { k: 0, source })?;
    let mut rep = CriterionReport::assemble(CriterionKind::Hardy, vec![KCriterion { k: 0, entry }]);
    rep.doubling_stamp = stamp_doubling(u, opts);
    rep.characterizes_operator = true;
    Ok(rep)
}

fn side_condition(f: &Integrand, k: usize, rule: &QuadratureRule) -> Result<(), CriteriaError> {
    rule.integrate_wide(|x| f(x).and_then(sq), 0.0, 1.0)
        .map(|_| ())
        .map_err(|source| CriteriaError::SideCondition { k, source })
}

/// `S_k = sup_r ||a_k v||_{L2(r, inf)} ||x^k u^{-1}||_{L2(0, r)}` for every `k`.
pub fn splitting_criteria(
    kernel: &DegenerateKernel,
    u: &WeightExpr,
    v: &WeightExpr,
    opts: &CriteriaOptions,
) -> Result<CriterionReport, CriteriaError> {
    let n = kernel.degree();
    if opts.delta > 0.0 {
        for k in 0..n {
            let f = coeff_times(&kernel.coeffs[k], v);
            side_condition(&f, k, &opts.rule)?;
        }
    }
    let (per_k, stamp) = rayon::join(
        || {
            (0..=n)
                .into_par_iter()
                .map(|k| {
                    let a = &kernel.coeffs[k];
                    if a.is_zero_constant() {
                        return Ok(KCriterion { k, entry: zero_entry(&opts.grid) });
                    }
                    let tail = coeff_times(a, v);
                    let head = x_pow_over(u, k as f64);
                    let entry = sup_product(Factor::Tail(&tail), Factor::Head(&head), &opts.grid, &opts.rule)
                        .map_err(|source| CriteriaError::Sup { k, source })?;
                    Ok(KCriterion { k, entry })
                })
                .collect::<Result<Vec<_>, CriteriaError>>()
        },
        || stamp_doubling(u, opts),
    );
    let mut rep = CriterionReport::assemble(CriterionKind::Splitting, per_k?);
    rep.characterizes_operator = stamp.as_ref().is_some_and(DoublingStamp::is_member);
    rep.doubling_stamp = stamp;
    Ok(rep)
}

/// The same suprema, read as the criterion for `u^{-1} A^* : L2 -> L2` with weight `v^{-1}`.
pub fn adjoint_criterion(
    kernel: &DegenerateKernel,
    u: &WeightExpr,
    v: &WeightExpr,
    opts: &CriteriaOptions,
) -> Result<CriterionReport, CriteriaError> {
    let mut rep = splitting_criteria(kernel, u, v, opts)?;
    rep.criterion = CriterionKind::Adjoint;
    rep.certifies = Some("||u^-1 A* f||_2 <= C ||v^-1 f||_2".to_string());
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RlReport {
    pub alpha: f64,
    pub gamma_alpha: f64,
    /// `sup ||(x-r)^{a-1} v||_{(r,inf)} ||u^{-1}||_{(0,r)}` and
    /// `sup ||v||_{(r,inf)} ||(r-x)^{a-1} u^{-1}||_{(0,r)}`, both with the `1/Gamma` factor.
    pub conditions: Vec<SupEntry>,
    pub verdict: CriterionVerdict,
}

/// Two-condition criterion for the Riemann-Liouville operator.
pub fn riemann_liouville_criterion(
    kernel: &RiemannLiouvilleKernel,
    u: &WeightExpr,
    v: &WeightExpr,
    opts: &CriteriaOptions,
) -> Result<RlReport, CriteriaError> {
    let RiemannLiouvilleKernel { alpha, gamma_alpha } = *kernel;
    let inv_g = 1.0 / gamma_alpha;
    let p = alpha - 1.0;
    let v_plain = |x: f64| v.eval_wide(x)?.scale(inv_g);
    let u_plain = x_pow_over(u, 0.0);
    let grid = &opts.grid;
    let rule = &opts.rule;
    let (c1, c2) = if p == 0.0 {
        let e = sup_product(Factor::Tail(&v_plain), Factor::Head(&u_plain), grid, rule);
        (e.clone(), e)
    } else {
        let v_shift = |x: f64, r: f64| Wide::from_f64((x - r).max(0.0))?.powf(p)?.mul(v.eval_wide(x)?)?.scale(inv_g);
        let u_shift = |x: f64, r: f64| Wide::from_f64((r - x).max(0.0))?.powf(p)?.div(u.eval_wide(x)?);
        rayon::join(
            || sup_product(Factor::TailShifted(&v_shift), Factor::Head(&u_plain), grid, rule),
            || sup_product(Factor::Tail(&v_plain), Factor::HeadShifted(&u_shift), grid, rule),
        )
    };
    let c1 = c1.map_err(|source| CriteriaError::Sup { k: 0, source })?;
    let c2 = c2.map_err(|source| CriteriaError::Sup { k: 1, source })?;
    let verdict = CriterionVerdict::from_entries([(0, &c1.supremum), (1, &c2.supremum)]);
    Ok(RlReport { alpha, gamma_alpha, conditions: vec![c1, c2], verdict })
}

/// `sup_r ||x^{a-1} v||_{L2(r, inf)} ||u^{-1}||_{L2(0, r)}`, which decides
/// boundedness when `u^{-2}` satisfies the weak doubling condition.
pub fn simple_rl_criterion(
    kernel: &RiemannLiouvilleKernel,
    u: &WeightExpr,
    v: &WeightExpr,
    opts: &CriteriaOptions,
) -> Result<CriterionReport, CriteriaError> {
    let inv_g = 1.0 / kernel.gamma_alpha;
    let p = kernel.alpha - 1.0;
    let tail = move |x: f64| {
        let xp = if p == 0.0 { Wide::ONE } else { Wide::from_f64(x)?.powf(p)? };
        xp.mul(v.eval_wide(x)?)?.scale(inv_g)
    };
    if opts.delta > 0.0 {
        side_condition(&tail, 0, &opts.rule)?;
    }
    let head = x_pow_over(u, 0.0);
    let entry = sup_product(Factor::Tail(&tail), Factor::Head(&head), &opts.grid, &opts.rule)
        .map_err(|source| CriteriaError::Sup { k: 0, source })?;
    let mut rep = CriterionReport::assemble(CriterionKind::SimpleRiemannLiouville, vec![KCriterion { k: 0, entry }]);
    let (two, stamp) = rayon::join(|| riemann_liouville_criterion(kernel, u, v, opts), || stamp_weak(u, opts));
    let two = two?;
    rep.cross_check = Some(CrossCheck { agrees: two.verdict == rep.verdict, two_condition_verdict: two.verdict });
    rep.characterizes_operator = stamp.as_ref().is_some_and(DoublingStamp::is_member);
    rep.weak_doubling_stamp = stamp;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::parse_weight;

    fn w(s: &str) -> WeightExpr {
        parse_weight(s).unwrap()
    }

    fn kernel(cs: &[&str]) -> DegenerateKernel {
        DegenerateKernel::new(cs.iter().map(|c| w(c)).collect()).unwrap()
    }

    fn opts() -> CriteriaOptions {
        CriteriaOptions::unstamped()
    }

    #[test]
    fn hardy_constant_product() {
        let r = hardy_criterion(&w("1"), &w("1/x"), &opts()).unwrap();
        let s = r.s(0).value().unwrap().to_f64();
        assert!((s - 1.0).abs() < 1e-9, "{s}");
        assert!(r.verdict.is_bounded());
        for p in &r.per_k[0].entry.evidence {
            assert!((p.product.unwrap().to_f64() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn hardy_divergent_tail() {
        let r = hardy_criterion(&w("1"), &w("1"), &opts()).unwrap();
        assert!(matches!(r.s(0), Supremum::Infinite { witness: Witness::TailDivergent { .. } }));
        assert!(r.verdict.is_unbounded());
    }

    #[test]
    fn hardy_exponential_pair() {
        // T = e^{-r}/sqrt2, H = sqrt((e^{2r}-1)/2): product rises to 1/2
        let r = hardy_criterion(&w("exp(-x)"), &w("exp(-x)"), &opts()).unwrap();
        let s = r.s(0).value().unwrap().to_f64();
        assert!(r.s(0).is_finite());
        assert!((s - 0.5).abs() < 1e-9, "{s}");
    }

    #[test]
    fn both_factors_divergent_is_an_error() {
        let e = hardy_criterion(&w("x"), &w("1"), &opts()).unwrap_err();
        assert!(matches!(e, CriteriaError::Sup { k: 0, source: SupError::BothDivergent { .. } }), "{e:?}");
    }

    #[test]
    fn head_divergence_witness() {
        let r = hardy_criterion(&w("x"), &w("exp(-x)"), &opts()).unwrap();
        assert!(matches!(r.s(0), Supremum::Infinite { witness: Witness::HeadDivergent { .. } }));
    }

    #[test]
    fn growth_at_zero_is_detected() {
        // T = r^{-3/2}/sqrt3, H = sqrt r: product ~ 1/(sqrt3 r)
        let mut o = opts();
        o.grid.min_log2_r = -24.0;
        let r = hardy_criterion(&w("1"), &w("x^(-2)"), &o).unwrap();
        assert!(matches!(r.s(0), Supremum::Infinite { witness: Witness::GrowthAtZero { .. } }), "{:?}", r.s(0));
    }

    #[test]
    fn counterexample_components_diverge() {
        let r = splitting_criteria(&kernel(&["x", "-1"]), &w("exp(-x)"), &w("exp(-x)"), &opts()).unwrap();
        assert!(r.s(0).is_infinite() && r.s(1).is_infinite());
        for k in 0..2 {
            let Supremum::Infinite { witness: Witness::GrowthAtInfinity { points } } = r.s(k) else { panic!() };
            // both products grow like r / 2
            let (rr, p) = *points.last().unwrap();
            assert!((p.to_f64() / (rr / 2.0) - 1.0).abs() < 1e-3, "{} at {rr}", p);
        }
    }

    #[test]
    fn power_weights_finite() {
        // T = (1+r)^{-3/2}/sqrt3, H = sqrt((1-(1+r)^{-3})/3)
        let r = splitting_criteria(&kernel(&["1"]), &w("(1+x)^2"), &w("(1+x)^(-2)"), &opts()).unwrap();
        let s = r.s(0).value_f64();
        assert!(r.s(0).is_finite());
        // closed-form oracle: maximize over s = (1+r)^3 > 1 of sqrt(s - 1)/(3 s)
        let oracle = (0..200_000)
            .map(|i| 1.0 + 1e-4 * i as f64)
            .map(|s| (s - 1.0f64).sqrt() / (3.0 * s))
            .fold(0.0, f64::max);
        assert!((s - oracle).abs() < 1e-8, "{s} vs {oracle}");
    }

    #[test]
    fn zero_coefficient_gives_zero() {
        let r = splitting_criteria(&kernel(&["0"]), &w("1"), &w("1"), &opts()).unwrap();
        assert_eq!(r.s(0).value().unwrap(), Wide::ZERO);
        assert!(r.verdict.is_bounded());
    }

    #[test]
    fn adjoint_matches_forward() {
        let k = kernel(&["1"]);
        let (u, v) = (w("(1+x)^2"), w("(1+x)^(-2)"));
        let f = splitting_criteria(&k, &u, &v, &opts()).unwrap();
        let a = adjoint_criterion(&k, &u, &v, &opts()).unwrap();
        assert_eq!(f.per_k, a.per_k);
        assert_eq!(a.criterion, CriterionKind::Adjoint);
        assert!(a.certifies.is_some());
    }

    #[test]
    fn n_zero_reduces_to_hardy() {
        let (u, v) = (w("(1+x)^(1/4)"), w("(1+x)^(-2)"));
        let h = hardy_criterion(&u, &w("2*(1+x)^(-2)"), &opts()).unwrap();
        let s = splitting_criteria(&kernel(&["2"]), &u, &v, &opts()).unwrap();
        let (a, b) = (h.s(0).value_f64(), s.s(0).value_f64());
        assert!((a - b).abs() <= 1e-10 * a, "{a} vs {b}");
    }

    #[test]
    fn rl_alpha_one_reduces_to_hardy() {
        let (u, v) = (w("1"), w("1/x"));
        let k = RiemannLiouvilleKernel::new(1.0).unwrap();
        let h = hardy_criterion(&u, &v, &opts()).unwrap().s(0).value_f64();
        let rl = riemann_liouville_criterion(&k, &u, &v, &opts()).unwrap();
        for c in &rl.conditions {
            assert!((c.supremum.value_f64() - h).abs() <= 1e-10 * h);
        }
        let simple = simple_rl_criterion(&k, &u, &v, &opts()).unwrap();
        assert!((simple.s(0).value_f64() - h).abs() <= 1e-10 * h);
    }

    #[test]
    fn rl_two_conditions_bounded_for_exponential() {
        let k = RiemannLiouvilleKernel::new(2.0).unwrap();
        let rl = riemann_liouville_criterion(&k, &w("exp(-x)"), &w("exp(-x)"), &opts()).unwrap();
        assert!(rl.verdict.is_bounded(), "{:?}", rl.verdict);
        // both products tend to 1/(2 sqrt 2)
        for c in &rl.conditions {
            assert!((c.supremum.value_f64() - 0.5 / 2f64.sqrt()).abs() < 1e-6);
        }
        let bad = riemann_liouville_criterion(&k, &w("1"), &w("1"), &opts()).unwrap();
        assert!(bad.verdict.is_unbounded());
    }

    #[test]
    fn simple_rl_disagrees_without_weak_doubling() {
        let k = RiemannLiouvilleKernel::new(2.0).unwrap();
        let mut o = opts();
        o.stamp = Some(SamplingPlan { max_log2_length: 8, ..SamplingPlan::default() });
        let r = simple_rl_criterion(&k, &w("exp(-x)"), &w("exp(-x)"), &o).unwrap();
        assert!(r.s(0).is_infinite());
        let cc = r.cross_check.as_ref().unwrap();
        assert!(cc.two_condition_verdict.is_bounded() && !cc.agrees);
        assert!(r.weak_doubling_stamp.as_ref().unwrap().verdict.as_ref().unwrap().is_violated());
        assert!(!r.characterizes_operator);
    }

    #[test]
    fn simple_rl_power_weights_finite() {
        let k = RiemannLiouvilleKernel::new(2.0).unwrap();
        let r = simple_rl_criterion(&k, &w("(1+x)^3"), &w("(1+x)^(-3)"), &opts()).unwrap();
        assert!(r.s(0).is_finite(), "{:?}", r.s(0));
    }

    #[test]
    fn scaling_covariance() {
        let (u, v) = (w("(1+x)^2"), w("(1+x)^(-2)"));
        let base = hardy_criterion(&u, &v, &opts()).unwrap().s(0).value_f64();
        let sv = hardy_criterion(&u, &w("3*(1+x)^(-2)"), &opts()).unwrap().s(0).value_f64();
        let su = hardy_criterion(&w("3*(1+x)^2"), &v, &opts()).unwrap().s(0).value_f64();
        assert!((sv / base - 3.0).abs() < 1e-10 * 3.0);
        assert!((su * 3.0 / base - 1.0).abs() < 1e-10);
    }

    #[test]
    fn factor_curves_are_monotone() {
        let r = splitting_criteria(&kernel(&["1", "x"]), &w("(1+x)^(1/2)"), &w("(1+x)^(-3)"), &opts()).unwrap();
        for k in &r.per_k {
            for p in k.entry.evidence.windows(2) {
                let (t0, t1) = (p[0].tail.unwrap(), p[1].tail.unwrap());
                let (h0, h1) = (p[0].head.unwrap(), p[1].head.unwrap());
                assert!(t1 <= t0.scale(1.0 + 1e-12).unwrap());
                assert!(h1.scale(1.0 + 1e-12).unwrap() >= h0);
            }
        }
    }

    #[test]
    fn shifted_factors_are_monotone() {
        let k = RiemannLiouvilleKernel::new(2.5).unwrap();
        let rl = riemann_liouville_criterion(&k, &w("(1+x)^2"), &w("(1+x)^(-4)"), &opts()).unwrap();
        for c in &rl.conditions {
            for p in c.evidence.windows(2) {
                assert!(p[1].tail.unwrap() <= p[0].tail.unwrap().scale(1.0 + 1e-9).unwrap());
                assert!(p[1].head.unwrap().scale(1.0 + 1e-9).unwrap() >= p[0].head.unwrap());
            }
        }
    }

    #[test]
    fn side_condition_is_checked_when_delta_positive() {
        let mut o = opts();
        o.delta = 1.0;
        let e = splitting_criteria(&kernel(&["x^(-1)", "1"]), &w("1"), &w("1"), &o).unwrap_err();
        assert!(matches!(e, CriteriaError::SideCondition { k: 0, .. }));
    }

    #[test]
    fn gamma_normalization_and_expansion() {
        let k = RiemannLiouvilleKernel::new(3.0).unwrap();
        assert!((k.gamma_alpha - 2.0).abs() < 1e-12);
        let d = k.to_degenerate().unwrap();
        // (x - t)^2 / 2 at x = 3, t = 1
        assert!((d.eval(3.0, 1.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(RiemannLiouvilleKernel::new(0.5).is_err());
        assert!(RiemannLiouvilleKernel::new(2.5).unwrap().to_degenerate().is_none());
    }

    #[test]
    fn report_round_trips_through_json() {
        let r = hardy_criterion(&w("1"), &w("1/x"), &opts()).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: CriterionReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back.verdict, r.verdict);
        assert_eq!(back.per_k.len(), 1);
    }
}
