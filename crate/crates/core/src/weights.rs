//! Doubling weights: sampled estimates of `D(w)`, the power-ratio envelopes
//! derived from it, and the origin-anchored weak doubling condition.
//!
//! A weight `w` is doubling with threshold `delta` when
//! `int_I w <= D int_{I/2} w` for every interval `I` in `(0, inf)` with
//! `|I| >= delta`, `I/2` being the concentric interval of half length.
//! Nothing here is a proof: verdicts summarize a finite interval family.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{IntegrationError, QuadratureRule, WeightExpr, Wide};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("integration failed on [{a}, {b}]: {source}")]
    Integration { a: f64, b: f64, source: IntegrationError },
    #[error("weight has nonpositive mass on [{a}, {b}]")]
    NonPositive { a: f64, b: f64 },
    #[error("delta must be a finite nonnegative number, got {0}")]
    BadDelta(f64),
    #[error("interval pair {index} is not nested or is shorter than delta")]
    BadPair { index: usize },
}

/// Which intervals the doubling estimators look at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingPlan {
    /// Interval lengths run over `2^k`, `k` in this range (clipped below at delta).
    pub min_log2_length: i32,
    pub max_log2_length: i32,
    /// Left endpoints are `0` and `2^j`, `j` in this range.
    pub min_log2_left: i32,
    pub max_log2_left: i32,
    /// A ratio above this, still rising, is evidence of violation.
    pub divergence_threshold: f64,
    /// Number of consecutive length doublings over which the rise must be strict.
    pub growth_run: usize,
    /// Relative rise over the last `growth_run` doublings that makes a
    /// sub-threshold sequence inconclusive rather than settled.
    pub drift_tolerance: f64,
    pub rule: QuadratureRule,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            min_log2_length: -10,
            max_log2_length: 20,
            min_log2_left: -10,
            max_log2_left: 20,
            divergence_threshold: 1e6,
            growth_run: 5,
            drift_tolerance: 0.1,
            rule: QuadratureRule { rel_tol: 1e-10, ..QuadratureRule::default() },
        }
    }
}

impl SamplingPlan {
    fn lengths(&self, delta: f64) -> Vec<f64> {
        let mut out: Vec<f64> = (self.min_log2_length..=self.max_log2_length)
            .map(|k| 2f64.powi(k))
            .filter(|&l| l >= delta)
            .collect();
        if delta > 0.0 && out.first().is_none_or(|&l| l > delta) {
            out.insert(0, delta);
        }
        out
    }

    fn lefts(&self) -> Vec<f64> {
        std::iter::once(0.0).chain((self.min_log2_left..=self.max_log2_left).map(|j| 2f64.powi(j))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Interval {
        Interval { a, b }
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn is_empty(&self) -> bool {
        self.b <= self.a
    }

    /// Concentric interval scaled by `s`.
    pub fn scaled(&self, s: f64) -> Interval {
        let c = 0.5 * (self.a + self.b);
        let h = 0.5 * s * self.len();
        Interval { a: c - h, b: c + h }
    }

    pub fn contains(&self, o: &Interval) -> bool {
        self.a <= o.a && o.b <= self.b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub interval: Interval,
    /// `int_I w / int_{I/2} w`.
    pub ratio: Wide,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Verdict {
    Member,
    Violated { witness: Interval, ratio: Wide },
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn is_member(&self) -> bool {
        matches!(self, Verdict::Member)
    }

    pub fn is_violated(&self) -> bool {
        matches!(self, Verdict::Violated { .. })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoublingReport {
    pub delta: f64,
    #[serde(rename = "D")]
    pub d: Wide,
    #[serde(rename = "E")]
    pub e: Wide,
    /// `log2(1 + 1/E^2)`.
    pub alpha: f64,
    /// `log_{3/2} E`.
    pub beta: f64,
    /// Smallest and largest `log2` growth of `int_a^{a+L} w` under `L -> 2L`
    /// on the sampled family, a much tighter pair of exponents than the above.
    pub empirical_alpha: f64,
    pub empirical_beta: f64,
    pub samples: Vec<Sample>,
    pub verdict: Verdict,
}

/// Exponents of the power envelopes attached to a doubling constant.
pub fn exponents_from_d(d: Wide) -> (Wide, f64, f64) {
    let e = d.mul(d).unwrap_or(d);
    let beta = e.ln_abs() / 1.5f64.ln();
    // 1/E^2 underflows harmlessly to zero for huge E
    let inv_e2 = e.mul(e).and_then(|e2| Wide::ONE.div(e2)).map(|v| v.to_f64()).unwrap_or(0.0);
    let alpha = inv_e2.ln_1p() / std::f64::consts::LN_2;
    (e, alpha, beta)
}

fn mass(rule: &QuadratureRule, w: &WeightExpr, iv: Interval) -> Result<Wide, WeightError> {
    let r = rule
        .integrate_wide(|x| w.eval_wide(x), iv.a, iv.b)
        .map_err(|source| WeightError::Integration { a: iv.a, b: iv.b, source })?;
    if r.value <= Wide::ZERO {
        return Err(WeightError::NonPositive { a: iv.a, b: iv.b });
    }
    Ok(r.value)
}

fn doubling_ratio(rule: &QuadratureRule, w: &WeightExpr, iv: Interval) -> Result<(Wide, Wide), WeightError> {
    let full = mass(rule, w, iv)?;
    let half = mass(rule, w, iv.scaled(0.5))?;
    Ok((full.div(half).ok_or(WeightError::NonPositive { a: iv.a, b: iv.b })?, full))
}

/// Rows whose longest interval exceeds its left endpoint by this factor are
/// checked for slow drift.
const ANCHOR_SEPARATION: f64 = 1024.0;

/// Verdict of one increasing-length sequence of ratios.
fn classify(seq: &[(Interval, Wide)], plan: &SamplingPlan, check_drift: bool) -> Verdict {
    let run = plan.growth_run.max(1);
    let threshold = Wide::from_f64(plan.divergence_threshold).unwrap_or(Wide::ONE);
    if seq.len() > run {
        for end in run..seq.len() {
            let window = &seq[end - run..=end];
            let rising = window.windows(2).all(|p| p[1].1 > p[0].1);
            if rising && window[run].1 > threshold {
                return Verdict::Violated { witness: window[run].0, ratio: window[run].1 };
            }
        }
        let tail = &seq[seq.len() - run - 1..];
        let rising = tail.windows(2).all(|p| p[1].1 > p[0].1);
        let rise = tail[run].1.ratio(tail[0].1) - 1.0;
        if check_drift && rising && rise > plan.drift_tolerance {
            let iv = tail[run].0;
            return Verdict::Inconclusive {
                reason: format!(
                    "ratio still rising by {:.1}% over the last {run} doublings ending at [{}, {}]",
                    100.0 * rise,
                    iv.a,
                    iv.b
                ),
            };
        }
    }
    if let Some((iv, r)) = seq.iter().find(|(_, r)| *r > threshold) {
        return Verdict::Inconclusive {
            reason: format!("ratio {r} on [{}, {}] exceeds the threshold without steady growth", iv.a, iv.b),
        };
    }
    Verdict::Member
}

fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    let mut inconclusive = None;
    for v in verdicts {
        match v {
            Verdict::Violated { .. } => return v,
            Verdict::Inconclusive { .. } if inconclusive.is_none() => inconclusive = Some(v),
            _ => {}
        }
    }
    inconclusive.unwrap_or(Verdict::Member)
}

/// Samples the doubling ratio over intervals `[a, a + L]` with `a` in
/// `{0} U {2^j}` and `L = 2^k >= delta`, and reports the maximum as `D`.
pub fn doubling_constant(w: &WeightExpr, delta: f64, plan: &SamplingPlan) -> Result<DoublingReport, WeightError> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(WeightError::BadDelta(delta));
    }
    let lengths = plan.lengths(delta);
    let lefts = plan.lefts();
    // one row per left endpoint: (interval, ratio, mass) with increasing length
    let rows: Vec<Vec<(Interval, Wide, Wide)>> = lefts
        .par_iter()
        .map(|&a| {
            lengths
                .iter()
                .map(|&l| {
                    let iv = Interval::new(a, a + l);
                    doubling_ratio(&plan.rule, w, iv).map(|(r, m)| (iv, r, m))
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;

    let mut d = Wide::ONE;
    let mut samples = Vec::new();
    let mut emp_lo = f64::INFINITY;
    let mut emp_hi = f64::NEG_INFINITY;
    for row in &rows {
        for (iv, r, _) in row {
            d = d.max(*r);
            samples.push(Sample { interval: *iv, ratio: *r });
        }
        for p in row.windows(2) {
            if p[1].0.len() == 2.0 * p[0].0.len() {
                let g = p[1].2.ratio(p[0].2).log2();
                emp_lo = emp_lo.min(g);
                emp_hi = emp_hi.max(g);
            }
        }
    }
    let verdict = combine(rows.iter().map(|row| {
        let seq: Vec<(Interval, Wide)> = row.iter().map(|(iv, r, _)| (*iv, *r)).collect();
        // for L not far beyond the left endpoint the ratio is still moving
        // towards its dilation limit, which is not evidence of anything
        let settled = seq.last().is_some_and(|(iv, _)| iv.a * ANCHOR_SEPARATION <= iv.len());
        classify(&seq, plan, settled)
    }));
    let (e, alpha, beta) = exponents_from_d(d);
    Ok(DoublingReport {
        delta,
        d,
        e,
        alpha,
        beta,
        empirical_alpha: emp_lo,
        empirical_beta: emp_hi,
        samples,
        verdict,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeakDoublingReport {
    pub delta: f64,
    #[serde(rename = "D")]
    pub d: Wide,
    /// `(r, int_0^{2r} w / int_0^r w)`.
    pub samples: Vec<(f64, Wide)>,
    pub verdict: Verdict,
}

/// `int_0^{2r} w <= D int_0^r w` sampled at `r = 2^k >= delta`.
pub fn weak_doubling_check(w: &WeightExpr, delta: f64, plan: &SamplingPlan) -> Result<WeakDoublingReport, WeightError> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(WeightError::BadDelta(delta));
    }
    let rs = plan.lengths(delta);
    let samples: Vec<(f64, Wide)> = rs
        .par_iter()
        .map(|&r| {
            let full = mass(&plan.rule, w, Interval::new(0.0, 2.0 * r))?;
            let head = mass(&plan.rule, w, Interval::new(0.0, r))?;
            Ok((r, full.div(head).ok_or(WeightError::NonPositive { a: 0.0, b: r })?))
        })
        .collect::<Result<_, WeightError>>()?;
    let d = samples.iter().fold(Wide::ONE, |m, s| m.max(s.1));
    let seq: Vec<(Interval, Wide)> = samples.iter().map(|&(r, q)| (Interval::new(0.0, 2.0 * r), q)).collect();
    let verdict = classify(&seq, plan, true);
    Ok(WeakDoublingReport { delta, d, samples, verdict })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioBoundsRow {
    pub inner: Interval,
    pub outer: Interval,
    pub length_ratio: f64,
    pub mass_ratio: Wide,
    pub lower_envelope: Wide,
    pub upper_envelope: Wide,
    /// `mass_ratio / lower_envelope`; at least 1 when the lower bound holds.
    pub lower_slack: f64,
    /// `upper_envelope / mass_ratio`; at least 1 when the upper bound holds.
    pub upper_slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioBoundsTable {
    pub alpha: f64,
    pub beta: f64,
    /// `(1 + 1/E^2)^{-1} / 2^{alpha + 1}`.
    pub lower_constant: f64,
    /// `E`.
    pub upper_constant: Wide,
    /// Largest `A` and smallest `B` for which the envelopes hold on the pair set.
    pub fitted_a: f64,
    pub fitted_b: f64,
    pub rows: Vec<RatioBoundsRow>,
    pub all_pass: bool,
}

/// Checks `A lambda^alpha <= int_{D2} w / int_{D1} w <= E lambda^beta`,
/// `lambda = |D2| / |D1|`, for nested pairs `(D1, D2)`.
pub fn ratio_bounds_check(
    w: &WeightExpr,
    report: &DoublingReport,
    pairs: &[(Interval, Interval)],
    rule: &QuadratureRule,
) -> Result<RatioBoundsTable, WeightError> {
    let (alpha, beta, e) = (report.alpha, report.beta, report.e);
    let inv_e2 = e.mul(e).and_then(|e2| Wide::ONE.div(e2)).map(|v| v.to_f64()).unwrap_or(0.0);
    let lower_constant = 1.0 / (1.0 + inv_e2) / 2f64.powf(alpha + 1.0);
    let mut rows = Vec::with_capacity(pairs.len());
    let mut fitted_a = f64::INFINITY;
    let mut fitted_b: f64 = 0.0;
    for (index, &(inner, outer)) in pairs.iter().enumerate() {
        if !outer.contains(&inner) || inner.is_empty() || inner.len() < report.delta {
            return Err(WeightError::BadPair { index });
        }
        let lambda = outer.len() / inner.len();
        let mass_ratio = if inner == outer {
            Wide::ONE
        } else {
            let m1 = mass(rule, w, inner)?;
            let m2 = mass(rule, w, outer)?;
            m2.div(m1).ok_or(WeightError::NonPositive { a: inner.a, b: inner.b })?
        };
        let lam_a = Wide::lit(lambda).powf(alpha).unwrap_or(Wide::ONE);
        let lam_b = Wide::lit(lambda).powf(beta).unwrap_or(Wide::ONE);
        let lower_envelope = lam_a.scale(lower_constant).unwrap_or(Wide::ZERO);
        let upper_envelope = lam_b.mul(e).unwrap_or(lam_b);
        let lower_slack = mass_ratio.ratio(lower_envelope);
        let upper_slack = upper_envelope.ratio(mass_ratio);
        fitted_a = fitted_a.min(mass_ratio.ratio(lam_a));
        fitted_b = fitted_b.max(mass_ratio.ratio(lam_b));
        let pass = lower_slack >= 1.0 - 1e-12 && upper_slack >= 1.0 - 1e-12;
        rows.push(RatioBoundsRow {
            inner,
            outer,
            length_ratio: lambda,
            mass_ratio,
            lower_envelope,
            upper_envelope,
            lower_slack,
            upper_slack,
            pass,
        });
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(RatioBoundsTable {
        alpha,
        beta,
        lower_constant,
        upper_constant: e,
        fitted_a,
        fitted_b,
        rows,
        all_pass,
    })
}
