//! Pointwise multipliers between weighted Sobolev spaces.
//!
//! `phi` multiplies `W^{(l)}_{2,u}` into `W^{(m)}_{2,v}` (norm
//! `||f||_{L2(0,1)} + ||f^{(l)} u||_2`) iff a handful of norms built from
//! `(phi x^k)^{(m)}` are finite. Derivatives of `phi` come from forward-mode
//! differentiation of the expression tree.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criteria::{
    classify_curve, stamp_doubling, sup_product, x_pow_over, zero_entry, CriteriaOptions, CriterionKind,
    CriterionReport, DoublingStamp, Factor, KCriterion, SupEntry, SupError, Supremum, Witness,
};
use crate::numerics::{GaussLegendre, IntegrationError, Poly, WeightExpr, Wide};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiplierError {
    #[error("need m <= l and l >= 1, got l = {l}, m = {m}")]
    Orders { l: usize, m: usize },
    #[error("derivatives of phi are not available at x = {x}")]
    Derivatives { x: f64 },
    #[error("g must vanish to order {l} at 0 (coefficient {k} is {c})")]
    NotFlat { l: usize, k: usize, c: f64 },
    #[error("condition for k = {k}: {source}")]
    Sup { k: usize, source: SupError },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierProblem {
    pub phi: WeightExpr,
    pub u: WeightExpr,
    pub v: WeightExpr,
    pub l: usize,
    pub m: usize,
}

impl MultiplierProblem {
    pub fn new(phi: WeightExpr, u: WeightExpr, v: WeightExpr, l: usize, m: usize) -> Result<Self, MultiplierError> {
        if l == 0 || m > l {
            return Err(MultiplierError::Orders { l, m });
        }
        Ok(MultiplierProblem { phi, u, v, l, m })
    }

    /// `(phi x^k)^{(m)}` at `x`, by the product rule.
    pub fn phi_xk_derivative(&self, k: usize, x: f64) -> Option<Wide> {
        phi_xk_derivative(&self.phi, k, self.m, x)
    }
}

fn phi_xk_derivative(phi: &WeightExpr, k: usize, m: usize, x: f64) -> Option<Wide> {
    let d = phi.derivatives(x, m)?;
    let mut sum = Wide::ZERO;
    let mut binom = 1.0;
    let mut falling = 1.0;
    for j in 0..=m.min(k) {
        // C(m, j) phi^{(m-j)} k!/(k-j)! x^{k-j}
        let xp = if k == j { Wide::ONE } else { Wide::from_f64(x)?.powi((k - j) as i64)? };
        let term = d[m - j].mul(xp)?.scale(binom * falling)?;
        sum = sum.add(term)?;
        binom = binom * (m - j) as f64 / (j + 1) as f64;
        falling *= (k - j) as f64;
    }
    Some(sum)
}

/// Outcome of a single norm that may be infinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NormCheck {
    Finite { value: Wide },
    Infinite { near: f64 },
    Inconclusive { reason: String },
}

impl NormCheck {
    pub fn is_finite(&self) -> bool {
        matches!(self, NormCheck::Finite { .. })
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, NormCheck::Infinite { .. })
    }

    fn from_integral(r: Result<Wide, IntegrationError>) -> NormCheck {
        match r {
            Ok(v) => NormCheck::Finite { value: v.abs().sqrt().expect("nonnegative") },
            Err(IntegrationError::Divergent { near }) => NormCheck::Infinite { near },
            Err(e) => NormCheck::Inconclusive { reason: e.to_string() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KNorm {
    pub k: usize,
    #[serde(flatten)]
    pub norm: NormCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MultiplierVerdict {
    Multiplier,
    NotMultiplier { failed: Vec<String> },
    Inconclusive { reason: String },
}

impl MultiplierVerdict {
    pub fn is_multiplier(&self) -> bool {
        matches!(self, MultiplierVerdict::Multiplier)
    }

    pub fn is_not_multiplier(&self) -> bool {
        matches!(self, MultiplierVerdict::NotMultiplier { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses {
    /// `(1 + x^{l-1}) u^{-1}` in `L2(0, inf)`.
    pub polynomial_decay: NormCheck,
    /// `v^{-1}` in `L2(0, r)` at `r = 1` and `r = 10`.
    pub v_inverse_local: Vec<(f64, NormCheck)>,
    /// Doubling check of `u^{-2}`.
    pub doubling_stamp: Option<DoublingStamp>,
}

impl Hypotheses {
    fn v_ok(&self) -> bool {
        self.v_inverse_local.iter().all(|(_, c)| c.is_finite())
    }

    pub fn first_theorem_applies(&self) -> bool {
        self.polynomial_decay.is_finite() && self.v_ok()
    }

    pub fn second_theorem_applies(&self) -> bool {
        self.doubling_stamp.as_ref().is_some_and(DoublingStamp::is_member) && self.v_ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierReport {
    pub l: usize,
    pub m: usize,
    pub hypotheses: Hypotheses,
    /// `||(phi x^k)^{(m)} v||_2`, `k = 0..l`.
    pub cond_2_6: Vec<KNorm>,
    /// `sup_r ||(phi x^k)^{(m)} v||_{L2(r, inf)} ||x^{l-k-1} u^{-1}||_{L2(0, r)}`.
    pub cond_2_7: CriterionReport,
    /// `ess sup |phi v u^{-1}|`, only when `m = l`.
    pub cond_2_8: Option<SupEntry>,
    /// Verdict under the polynomial-decay hypothesis on `u`; `None` when it fails.
    pub first_theorem: Option<MultiplierVerdict>,
    /// Verdict under the doubling hypothesis on `u^{-2}`; `None` when it fails.
    pub second_theorem: Option<MultiplierVerdict>,
    /// Under the polynomial-decay hypothesis, finite norms and sup must make
    /// every supremum finite; `None` when there is nothing to compare.
    pub reduction_consistent: Option<bool>,
}

const LOCAL_V_POINTS: [f64; 2] = [1.0, 10.0];

/// Sampled ess-sup of `|h|` over the criteria grid.
fn ess_sup(h: impl Fn(f64) -> Option<Wide> + Sync, opts: &CriteriaOptions) -> SupEntry {
    let rs = opts.grid.points();
    let vals: Vec<Option<Wide>> = rs.par_iter().map(|&x| h(x).map(Wide::abs)).collect();
    if let Some(i) = vals.iter().position(Option::is_none) {
        let near = rs[i];
        return SupEntry { supremum: Supremum::Infinite { witness: Witness::TailDivergent { near } }, argsup_r: near, evidence: vec![] };
    }
    let vals: Vec<Wide> = vals.into_iter().map(Option::unwrap).collect();
    let eval = |x: f64| h(x).map(Wide::abs).ok_or(());
    match classify_curve(&rs, &vals, &opts.grid, eval) {
        Ok((supremum, argsup_r)) => SupEntry { supremum, argsup_r, evidence: vec![] },
        Err(()) => SupEntry {
            supremum: Supremum::Inconclusive { value: Wide::ZERO, reason: "not finite during refinement".into() },
            argsup_r: f64::NAN,
            evidence: vec![],
        },
    }
}

/// True when `h` vanishes on every grid point; DSL expressions are analytic,
/// so this means `h = 0`.
fn vanishes(h: &(impl Fn(f64) -> Option<Wide> + Sync), opts: &CriteriaOptions) -> bool {
    opts.grid.points().par_iter().all(|&x| h(x).is_some_and(|v| v.is_zero()))
}

fn l2_on(opts: &CriteriaOptions, h: impl Fn(f64) -> Option<Wide>, a: f64, b: f64) -> NormCheck {
    NormCheck::from_integral(opts.rule.integrate_wide(|x| h(x).and_then(|v| v.mul(v)), a, b).map(|r| r.value))
}

fn sup_or_infinite(r: Result<SupEntry, SupError>, k: usize) -> Result<SupEntry, MultiplierError> {
    match r {
        Ok(e) => Ok(e),
        // both factors infinite at every r: the product is too
        Err(SupError::BothDivergent { tail_near, .. }) => Ok(SupEntry {
            supremum: Supremum::Infinite { witness: Witness::TailDivergent { near: tail_near } },
            argsup_r: f64::NAN,
            evidence: vec![],
        }),
        Err(source) => Err(MultiplierError::Sup { k, source }),
    }
}

fn verdict(cond_2_6: &[KNorm], sups: Option<&CriterionReport>, cond_2_8: Option<&SupEntry>) -> MultiplierVerdict {
    let mut failed = Vec::new();
    let mut doubt = Vec::new();
    for c in cond_2_6 {
        match &c.norm {
            NormCheck::Infinite { .. } => failed.push(format!("norm k = {}", c.k)),
            NormCheck::Inconclusive { reason } => doubt.push(format!("norm k = {}: {reason}", c.k)),
            NormCheck::Finite { .. } => {}
        }
    }
    if let Some(rep) = sups {
        for e in &rep.per_k {
            match &e.entry.supremum {
                Supremum::Infinite { .. } => failed.push(format!("supremum k = {}", e.k)),
                Supremum::Inconclusive { reason, .. } => doubt.push(format!("supremum k = {}: {reason}", e.k)),
                Supremum::Finite { .. } => {}
            }
        }
    }
    if let Some(e) = cond_2_8 {
        match &e.supremum {
            Supremum::Infinite { .. } => failed.push("ess sup of phi v / u".into()),
            Supremum::Inconclusive { reason, .. } => doubt.push(format!("ess sup: {reason}")),
            Supremum::Finite { .. } => {}
        }
    }
    if !failed.is_empty() {
        MultiplierVerdict::NotMultiplier { failed }
    } else if !doubt.is_empty() {
        MultiplierVerdict::Inconclusive { reason: doubt.join("; ") }
    } else {
        MultiplierVerdict::Multiplier
    }
}

/// Evaluates every multiplier condition and the hypotheses that make them
/// necessary and sufficient. `opts.delta` and `opts.stamp` drive the doubling stamp.
pub fn check_multiplier(p: &MultiplierProblem, opts: &CriteriaOptions) -> Result<MultiplierReport, MultiplierError> {
    let (l, m) = (p.l, p.m);
    let u_inv = x_pow_over(&p.u, 0.0);
    let v_inv = |x: f64| Wide::ONE.div(p.v.eval_wide(x)?);
    let decay = |x: f64| u_inv(x)?.scale(1.0 + x.powi(l as i32 - 1));
    let hypotheses = Hypotheses {
        polynomial_decay: l2_on(opts, decay, 0.0, f64::INFINITY),
        v_inverse_local: LOCAL_V_POINTS.iter().map(|&r| (r, l2_on(opts, v_inv, 0.0, r))).collect(),
        doubling_stamp: stamp_doubling(&p.u, opts),
    };

    let per_k: Vec<(KNorm, KCriterion)> = (0..l)
        .into_par_iter()
        .map(|k| {
            let tail = move |x: f64| p.phi_xk_derivative(k, x)?.mul(p.v.eval_wide(x)?);
            if vanishes(&tail, opts) {
                return Ok((KNorm { k, norm: NormCheck::Finite { value: Wide::ZERO } }, KCriterion { k, entry: zero_entry(&opts.grid) }));
            }
            let norm = l2_on(opts, tail, 0.0, f64::INFINITY);
            let head = x_pow_over(&p.u, (l - k - 1) as f64);
            let entry = sup_or_infinite(sup_product(Factor::Tail(&tail), Factor::Head(&head), &opts.grid, &opts.rule), k)?;
            Ok((KNorm { k, norm }, KCriterion { k, entry }))
        })
        .collect::<Result<_, MultiplierError>>()?;
    let (cond_2_6, sups): (Vec<KNorm>, Vec<KCriterion>) = per_k.into_iter().unzip();
    let cond_2_7 = CriterionReport::assemble(CriterionKind::Multiplier, sups);

    let cond_2_8 = (m == l).then(|| {
        let h = |x: f64| p.phi.eval_wide(x)?.mul(p.v.eval_wide(x)?)?.mul(u_inv(x)?);
        if vanishes(&h, opts) {
            zero_entry(&opts.grid)
        } else {
            ess_sup(h, opts)
        }
    });

    let first_theorem = hypotheses.first_theorem_applies().then(|| verdict(&cond_2_6, None, cond_2_8.as_ref()));
    let second_theorem =
        hypotheses.second_theorem_applies().then(|| verdict(&cond_2_6, Some(&cond_2_7), cond_2_8.as_ref()));
    let reduction_consistent = match &first_theorem {
        Some(MultiplierVerdict::Multiplier) => Some(cond_2_7.per_k.iter().all(|e| !e.entry.supremum.is_infinite())),
        _ => None,
    };
    Ok(MultiplierReport { l, m, hypotheses, cond_2_6, cond_2_7, cond_2_8, first_theorem, second_theorem, reduction_consistent })
}

/// Composite Gauss-Legendre rule for the inner integrals of [`verify_lemma21`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeibnizRule {
    pub nodes: usize,
    pub panels: usize,
}

impl Default for LeibnizRule {
    fn default() -> Self {
        LeibnizRule { nodes: 8, panels: 4 }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Largest absolute gap between `(phi g)^{(m)}` computed directly and through
/// the integral representation in terms of `g^{(l)}`, over the points of `grid`.
pub fn verify_lemma21(
    phi: &Poly,
    g: &Poly,
    l: usize,
    m: usize,
    grid: &[f64],
    rule: LeibnizRule,
) -> Result<f64, MultiplierError> {
    if l == 0 || m > l {
        return Err(MultiplierError::Orders { l, m });
    }
    if let Some((k, &c)) = g.coeffs.iter().enumerate().take(l).find(|(_, c)| **c != 0.0) {
        return Err(MultiplierError::NotFlat { l, k, c });
    }
    let lhs = phi.mul(g).nth_derivative(m);
    let gl = g.nth_derivative(l);
    let gauss = GaussLegendre::new(rule.nodes);
    let fact: f64 = (1..l).map(|i| i as f64).product();
    let terms: Vec<(f64, Poly)> = (0..l)
        .map(|k| (binomial(l - 1, k), phi.mul(&Poly::monomial(k)).nth_derivative(m)))
        .collect();
    let worst = grid
        .par_iter()
        .map(|&x| {
            let h = x / rule.panels as f64;
            let mut rhs = if m == l { phi.eval(x) * gl.eval(x) } else { 0.0 };
            for (k, (c, d)) in terms.iter().enumerate() {
                let inner: f64 = (0..rule.panels)
                    .map(|i| {
                        gauss.integrate(i as f64 * h, (i + 1) as f64 * h, |t| (-t).powi((l - k - 1) as i32) * gl.eval(t))
                    })
                    .sum();
                rhs += c * d.eval(x) * inner / fact;
            }
            (lhs.eval(x) - rhs).abs()
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}
