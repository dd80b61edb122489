//! Composite Gauss-Legendre quadrature with panel-refinement error control.
//!
//! Every panel is integrated with the `order`-point Gauss rule twice: once on
//! the whole panel and once on its two halves. The halved value is kept and the
//! difference between the two is the panel's error estimate. Panels with the
//! largest estimates are bisected until the summed estimate drops below
//! `rel_tol` times the integral of `|f|`.
//!
//! Endpoints at `0` and `+inf` are handled by geometric panel extension: the
//! panels `[b 2^{-j-1}, b 2^{-j}]` (towards zero) or `[R 2^j, R 2^{j+1}]`
//! (towards infinity) are added one by one until a panel contributes less than
//! `extension_cutoff` of the running total. Contributions that stop decaying
//! are reported as divergence.
//!
//! All sums are carried in [`Wide`] so integrands like `e^{2x}` on `(0, 2^24)`
//! produce finite, comparable results.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::wide::Wide;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("integral diverges near x = {near}")]
    Divergent { near: f64 },
    #[error("no convergence after {panels} panels (estimate {estimate}, error {error})")]
    NonConvergent { panels: usize, estimate: f64, error: f64 },
    #[error("invalid interval ({a}, {b})")]
    BadInterval { a: f64, b: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailPolicy {
    /// Panels `[R 2^j, R 2^{j+1}]` appended until negligible.
    GeometricPanels,
    /// `x = t / (1 - t)` onto a finite interval.
    Substitution,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on `P_n` from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> GaussLegendre {
        assert!(n >= 1, "Gauss rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Plain `f64` integral of `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        self.nodes.iter().zip(&self.weights).map(|(t, w)| w * f(c + h * t)).sum::<f64>() * h
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

fn cached_rule(order: usize) -> &'static GaussLegendre {
    static RULES: OnceLock<Vec<GaussLegendre>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (0..=64).map(|n| GaussLegendre::new(n.max(1))).collect());
    &rules[order]
}

const FAR_ZERO: f64 = 1.0 / 1024.0;
const FAR_INFINITY: f64 = 1024.0;
const DIVERGENCE_WINDOW: usize = 16;

/// Settings for composite integration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureRule {
    /// Gauss nodes per panel.
    pub order: usize,
    pub rel_tol: f64,
    pub max_panels: usize,
    /// Where geometric tail panels start for `(a, inf)`.
    pub tail_cutoff: f64,
    pub tail_policy: TailPolicy,
    /// A tail or zero-end panel below this fraction of the total ends extension.
    pub extension_cutoff: f64,
    pub max_extensions: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule {
            order: 10,
            rel_tol: 1e-12,
            max_panels: 4000,
            tail_cutoff: 1.0,
            tail_policy: TailPolicy::GeometricPanels,
            extension_cutoff: 1e-14,
            max_extensions: 1100,
        }
    }
}

/// Result of an integration carried in the wide range.
#[derive(Clone, Debug)]
pub struct WideIntegral {
    pub value: Wide,
    /// Integral of `|f|`, the scale errors are measured against.
    pub abs_value: Wide,
    pub error: Wide,
    /// Final panels in increasing order of their left endpoint.
    pub panels: Vec<(f64, f64)>,
}

/// Result of an integration that fits an `f64`.
#[derive(Clone, Debug)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub panels: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug)]
struct PanelValue {
    value: Wide,
    abs: Wide,
}

struct Panel {
    a: f64,
    b: f64,
    /// Gauss value on each half.
    left: PanelValue,
    right: PanelValue,
    fine: PanelValue,
    err: Wide,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.partial_cmp(&o.err).unwrap_or(Ordering::Equal)
    }
}

fn wadd(a: Wide, b: Wide) -> Wide {
    a.add(b).expect("sum of finite wide values")
}

impl QuadratureRule {
    pub fn with_order(order: usize) -> QuadratureRule {
        QuadratureRule { order, ..QuadratureRule::default() }
    }

    fn gauss<F: Fn(f64) -> Option<Wide>>(&self, f: &F, a: f64, b: f64) -> Result<PanelValue, IntegrationError> {
        let rule = cached_rule(self.order.clamp(1, 64));
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        let hw = Wide::from_f64(h).ok_or(IntegrationError::BadInterval { a, b })?;
        let mut value = Wide::ZERO;
        let mut abs = Wide::ZERO;
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            let x = c + h * t;
            let fx = f(x).ok_or(IntegrationError::NonFinite { x })?;
            let term = fx.scale(*w).ok_or(IntegrationError::NonFinite { x })?;
            value = value.add(term).ok_or(IntegrationError::NonFinite { x })?;
            abs = abs.add(term.abs()).ok_or(IntegrationError::NonFinite { x })?;
        }
        let value = value.mul(hw).ok_or(IntegrationError::NonFinite { x: c })?;
        let abs = abs.mul(hw).ok_or(IntegrationError::NonFinite { x: c })?;
        Ok(PanelValue { value, abs })
    }

    fn make_panel<F: Fn(f64) -> Option<Wide>>(
        &self,
        f: &F,
        a: f64,
        b: f64,
        whole: Option<PanelValue>,
    ) -> Result<Panel, IntegrationError> {
        let whole = match whole {
            Some(w) => w,
            None => self.gauss(f, a, b)?,
        };
        let m = 0.5 * (a + b);
        let left = self.gauss(f, a, m)?;
        let right = self.gauss(f, m, b)?;
        let fine = PanelValue { value: wadd(left.value, right.value), abs: wadd(left.abs, right.abs) };
        let err = fine.value.sub(whole.value).expect("finite difference").abs();
        Ok(Panel { a, b, left, right, fine, err })
    }

    /// Adaptive integration over a finite interval with no endpoint singularity.
    /// `floor` is an absolute error level that is always acceptable.
    fn adaptive<F: Fn(f64) -> Option<Wide>>(
        &self,
        f: &F,
        a: f64,
        b: f64,
        floor: Wide,
    ) -> Result<WideIntegral, IntegrationError> {
        if !(a.is_finite() && b.is_finite()) || b < a {
            return Err(IntegrationError::BadInterval { a, b });
        }
        if a == b {
            return Ok(WideIntegral { value: Wide::ZERO, abs_value: Wide::ZERO, error: Wide::ZERO, panels: vec![] });
        }
        // octave breakpoints when the interval spans many scales
        let mut cuts = vec![a];
        if a > 0.0 && b / a > 4.0 {
            let mut t = a * 2.0;
            while t < b * 0.75 {
                cuts.push(t);
                t *= 2.0;
            }
        }
        cuts.push(b);
        let mut heap = BinaryHeap::new();
        let mut done: Vec<Panel> = Vec::new();
        let mut value = Wide::ZERO;
        let mut abs = Wide::ZERO;
        let mut err = Wide::ZERO;
        for w in cuts.windows(2) {
            let p = self.make_panel(f, w[0], w[1], None)?;
            value = wadd(value, p.fine.value);
            abs = wadd(abs, p.fine.abs);
            err = wadd(err, p.err);
            heap.push(p);
        }
        let finish = |heap: &BinaryHeap<Panel>, done: &Vec<Panel>| {
            // exact resummation; the running sums only steer refinement
            let mut value = Wide::ZERO;
            let mut abs = Wide::ZERO;
            let mut err = Wide::ZERO;
            let mut panels = Vec::with_capacity(heap.len() + done.len());
            for p in heap.iter().chain(done.iter()) {
                value = wadd(value, p.fine.value);
                abs = wadd(abs, p.fine.abs);
                err = wadd(err, p.err);
                panels.push((p.a, p.b));
            }
            panels.sort_by(|x, y| x.0.total_cmp(&y.0));
            WideIntegral { value, abs_value: abs, error: err, panels }
        };
        loop {
            let target = abs.scale(self.rel_tol).expect("finite").max(floor);
            if err <= target || heap.is_empty() {
                let r = finish(&heap, &done);
                let target = r.abs_value.scale(self.rel_tol).expect("finite").max(floor);
                if r.error <= target || heap.is_empty() {
                    return Ok(r);
                }
                value = r.value;
                abs = r.abs_value;
                err = r.error;
            }
            if heap.len() + done.len() >= self.max_panels {
                let r = finish(&heap, &done);
                return Err(IntegrationError::NonConvergent {
                    panels: r.panels.len(),
                    estimate: r.value.to_f64(),
                    error: r.error.to_f64(),
                });
            }
            let worst = heap.pop().expect("nonempty heap");
            let m = 0.5 * (worst.a + worst.b);
            if m <= worst.a || m >= worst.b || (worst.b - worst.a) <= 1e-14 * worst.a.abs().max(worst.b.abs()) {
                // cannot bisect any further; keep what we have
                done.push(worst);
                continue;
            }
            let l = self.make_panel(f, worst.a, m, Some(worst.left))?;
            let r = self.make_panel(f, m, worst.b, Some(worst.right))?;
            value = wadd(wadd(value, worst.fine.value.neg()), wadd(l.fine.value, r.fine.value));
            abs = wadd(wadd(abs, worst.fine.abs.neg()), wadd(l.fine.abs, r.fine.abs)).abs();
            err = wadd(wadd(err, worst.err.neg()), wadd(l.err, r.err)).abs();
            heap.push(l);
            heap.push(r);
        }
    }

    /// Geometric extension from `start` towards zero (`dir < 0`) or infinity (`dir > 0`).
    fn extend<F: Fn(f64) -> Option<Wide>>(
        &self,
        f: &F,
        start: f64,
        towards_zero: bool,
        mut total: WideIntegral,
    ) -> Result<WideIntegral, IntegrationError> {
        let mut edge = start;
        let mut history: Vec<Wide> = Vec::new();
        let mut quiet = 0;
        let mut far_panels = 0usize;
        for _ in 0..self.max_extensions {
            let (lo, hi) = if towards_zero { (edge * 0.5, edge) } else { (edge, edge * 2.0) };
            if !hi.is_finite() || hi > 1e300 || lo < 1e-300 {
                break;
            }
            let floor = total.abs_value.scale(self.rel_tol).expect("finite");
            let piece = self.adaptive(f, lo, hi, floor)?;
            edge = if towards_zero { lo } else { hi };
            total.value = wadd(total.value, piece.value);
            total.abs_value = wadd(total.abs_value, piece.abs_value);
            total.error = wadd(total.error, piece.error);
            total.panels.extend(piece.panels);
            history.push(piece.abs_value);
            if piece.abs_value <= total.abs_value.scale(self.extension_cutoff).expect("finite") {
                quiet += 1;
                if quiet >= 2 {
                    // geometric remainder bound from the observed decay
                    let n = history.len();
                    let last = history[n - 1];
                    let prev = history[n - 2];
                    let rho = if prev.is_zero() { 0.0 } else { last.ratio(prev).min(0.999) };
                    let rem = last.scale(rho / (1.0 - rho)).expect("finite");
                    total.error = wadd(total.error, rem);
                    total.panels.sort_by(|x, y| x.0.total_cmp(&y.0));
                    return Ok(total);
                }
            } else {
                quiet = 0;
            }
            // Contributions may climb for a while before the mass is reached, so
            // only a run of non-decaying panels far from x = 1 counts as divergence.
            let far = if towards_zero { edge <= FAR_ZERO } else { edge >= FAR_INFINITY };
            far_panels = if far { far_panels + 1 } else { 0 };
            let n = history.len();
            if far_panels > DIVERGENCE_WINDOW
                && history[n - DIVERGENCE_WINDOW - 1..]
                    .windows(2)
                    .all(|p| !p[0].is_zero() && p[1].ratio(p[0]) >= 0.999)
            {
                return Err(IntegrationError::Divergent { near: edge });
            }
        }
        let n = history.len();
        let stalled = n >= 2 && history[n - 1] > total.abs_value.scale(1e-8).expect("finite");
        if stalled {
            Err(IntegrationError::Divergent { near: edge })
        } else {
            Err(IntegrationError::NonConvergent {
                panels: total.panels.len(),
                estimate: total.value.to_f64(),
                error: total.error.to_f64(),
            })
        }
    }

    fn zero_end<F: Fn(f64) -> Option<Wide>>(&self, f: &F, b: f64) -> Result<WideIntegral, IntegrationError> {
        let first = self.adaptive(f, 0.5 * b, b, Wide::ZERO)?;
        self.extend(f, 0.5 * b, true, first)
    }

    fn substitution<F: Fn(f64) -> Option<Wide>>(&self, f: &F, a: f64) -> Result<WideIntegral, IntegrationError> {
        let g = |t: f64| {
            let s = 1.0 - t;
            let x = t / s;
            f(x)?.scale(1.0 / (s * s))
        };
        let ta = a / (1.0 + a);
        let mut r = self.adaptive(&g, ta, 1.0, Wide::ZERO)?;
        r.panels = r.panels.iter().map(|&(p, q)| (p / (1.0 - p), if q < 1.0 { q / (1.0 - q) } else { f64::INFINITY })).collect();
        Ok(r)
    }

    /// Integral of `f` over `(a, b)`, `b` possibly `+inf`, in the wide range.
    pub fn integrate_wide<F: Fn(f64) -> Option<Wide>>(&self, f: F, a: f64, b: f64) -> Result<WideIntegral, IntegrationError> {
        if a.is_nan() || b.is_nan() || a < 0.0 && !a.is_finite() || b < a {
            return Err(IntegrationError::BadInterval { a, b });
        }
        if a == b {
            return self.adaptive(&f, a, a, Wide::ZERO);
        }
        if b.is_finite() {
            if a == 0.0 {
                return self.zero_end(&f, b);
            }
            return self.adaptive(&f, a, b, Wide::ZERO);
        }
        if self.tail_policy == TailPolicy::Substitution && a >= 0.0 {
            return self.substitution(&f, a);
        }
        let cut = if a > 0.0 { self.tail_cutoff.max(2.0 * a) } else { self.tail_cutoff.max(1.0) };
        let head = if a == 0.0 { self.zero_end(&f, cut)? } else { self.adaptive(&f, a, cut, Wide::ZERO)? };
        self.extend(&f, cut, false, head)
    }

    /// Integral of a plain `f64` integrand; the result must fit an `f64`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Integral, IntegrationError> {
        let r = self.integrate_wide(|x| Wide::from_f64(f(x)), a, b)?;
        let value = r.value.to_f64();
        if !value.is_finite() {
            return Err(IntegrationError::Divergent { near: b });
        }
        Ok(Integral { value, error: r.error.to_f64(), panels: r.panels })
    }
}

/// `(integral of w^2 over (a, b))^{1/2}` in the wide range.
pub fn weighted_l2_norm_wide<F: Fn(f64) -> Option<Wide>>(
    rule: &QuadratureRule,
    w: F,
    a: f64,
    b: f64,
) -> Result<Wide, IntegrationError> {
    let r = rule.integrate_wide(|x| w(x).and_then(|v| v.mul(v)), a, b)?;
    Ok(r.value.abs().sqrt().expect("nonnegative"))
}

/// `||w||_{L2(a, b)}` for an `f64` function.
pub fn weighted_l2_norm<F: Fn(f64) -> f64>(rule: &QuadratureRule, w: F, a: f64, b: f64) -> Result<f64, IntegrationError> {
    let n = weighted_l2_norm_wide(rule, |x| Wide::from_f64(w(x)), a, b)?;
    let v = n.to_f64();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(IntegrationError::Divergent { near: b })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule() -> QuadratureRule {
        QuadratureRule::default()
    }

    #[test]
    fn gauss_rule_is_exact_for_monomials() {
        for q in [1, 2, 5, 10, 16, 24] {
            let g = GaussLegendre::new(q);
            for j in 0..(2 * q) {
                let exact = (2f64.powi(j as i32 + 1) - 0.5f64.powi(j as i32 + 1)) / (j as f64 + 1.0);
                let got = g.integrate(0.5, 2.0, |x| x.powi(j as i32));
                assert!(((got - exact) / exact).abs() < 1e-12, "q={q} j={j} got={got} exact={exact}");
            }
        }
    }

    #[test]
    fn unit_interval_length() {
        let r = rule().integrate(|_| 1.0, 0.0, 1.0).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn decaying_exponential_tail() {
        let r = rule().integrate(|x| (-2.0 * x).exp(), 0.0, f64::INFINITY).unwrap();
        assert!((r.value - 0.5).abs() < 1e-13, "{}", r.value);
        let r = rule().integrate(|x| x * x * (-x).exp(), 0.0, f64::INFINITY).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12, "{}", r.value);
    }

    #[test]
    fn substitution_policy_agrees() {
        let sub = QuadratureRule { tail_policy: TailPolicy::Substitution, ..rule() };
        let r = sub.integrate(|x| (-2.0 * x).exp(), 0.0, f64::INFINITY).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12, "{}", r.value);
        let r = sub.integrate(|x| 1.0 / (1.0 + x * x), 0.0, f64::INFINITY).unwrap();
        assert!((r.value - std::f64::consts::FRAC_PI_2).abs() < 1e-11, "{}", r.value);
    }

    #[test]
    fn singular_at_zero_and_slow_tail() {
        let r = rule().integrate(|x| x.powf(-0.5), 0.0, 1.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-11, "{}", r.value);
        let r = rule().integrate(|x| x.powi(-2), 1.0, f64::INFINITY).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12, "{}", r.value);
    }

    #[test]
    fn divergence_is_reported() {
        let e = rule().integrate(|_| 1.0, 0.0, f64::INFINITY).unwrap_err();
        assert!(matches!(e, IntegrationError::Divergent { .. }), "{e:?}");
        let e = rule().integrate(|x| 1.0 / x, 1.0, f64::INFINITY).unwrap_err();
        assert!(matches!(e, IntegrationError::Divergent { .. }), "{e:?}");
        let e = rule().integrate(|x| x.powf(-1.5), 0.0, 1.0).unwrap_err();
        assert!(matches!(e, IntegrationError::Divergent { .. }), "{e:?}");
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let e = rule().integrate(|x| if x > 0.3 { f64::NAN } else { 1.0 }, 0.1, 1.0).unwrap_err();
        assert!(matches!(e, IntegrationError::NonFinite { .. }));
    }

    #[test]
    fn wide_range_exponential_norm() {
        // ||e^x||_{L2(0, r)}^2 = (e^{2r} - 1)/2
        let r = 4096.0;
        let got = weighted_l2_norm_wide(&rule(), |x| Wide::exp_f64(x), 0.0, r).unwrap();
        let expect = 2.0 * r - 2f64.ln();
        assert!((2.0 * got.ln_abs() - expect).abs() < 1e-9);
    }

    #[test]
    fn l2_norm_examples() {
        let n = weighted_l2_norm(&rule(), |_| 1.0, 0.0, 4.0).unwrap();
        assert!((n - 2.0).abs() < 1e-14);
        let n = weighted_l2_norm(&rule(), |x| (-x).exp(), 1.0, f64::INFINITY).unwrap();
        assert!((n - ((-2.0f64).exp() / 2.0).sqrt()).abs() < 1e-13);
        let n = weighted_l2_norm(&rule(), |x| x, 0.0, 1.0).unwrap();
        assert!((n - 1.0 / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn panels_tile_the_interval() {
        let r = rule().integrate(|x| (10.0 * x).sin().abs() + 1.0, 0.3, 7.0).unwrap();
        assert_eq!(r.panels.first().unwrap().0, 0.3);
        assert_eq!(r.panels.last().unwrap().1, 7.0);
        for w in r.panels.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }

    #[test]
    fn refinement_stays_within_reported_error() {
        let f = |x: f64| (3.0 * x).cos() * (-x * x).exp();
        let coarse = QuadratureRule { rel_tol: 1e-6, order: 4, ..rule() };
        let fine = QuadratureRule { rel_tol: 1e-14, ..rule() };
        let c = coarse.integrate(f, 0.0, 5.0).unwrap();
        let t = fine.integrate(f, 0.0, 5.0).unwrap();
        assert!((c.value - t.value).abs() <= c.error.max(1e-15), "{} vs {} err {}", c.value, t.value, c.error);
    }
}
