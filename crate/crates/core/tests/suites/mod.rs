//! Property checks shared by the proptest suite and the acceptance run.
//! Each returns `Err` with a description of the first violation.

#![allow(dead_code)]

use volterra_split::criteria::{hardy_criterion, splitting_criteria, CriteriaOptions, DegenerateKernel};
use volterra_split::numerics::{parse_weight, weighted_l2_norm, GaussLegendre, QuadratureRule, WeightExpr};
use volterra_split::operators::{discretize, operator_norm, GridSpec, NormOptions};
use volterra_split::weights::{doubling_constant, weak_doubling_check, SamplingPlan};

pub type Check = Result<(), String>;

pub fn w(s: &str) -> WeightExpr {
    parse_weight(s).unwrap()
}

pub fn kernel(cs: &[String]) -> DegenerateKernel {
    DegenerateKernel::new(cs.iter().map(|c| w(c)).collect()).unwrap()
}

pub fn small_plan() -> SamplingPlan {
    SamplingPlan { min_log2_left: -4, max_log2_left: 12, min_log2_length: -4, max_log2_length: 16, ..SamplingPlan::default() }
}

pub fn power_log(a: f64, b: f64) -> String {
    format!("(1+x)^({a})*log(2+x)^({b})")
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

pub fn gauss_exact(q: usize, a: f64, len: f64) -> Check {
    let g = GaussLegendre::new(q);
    let b = a + len;
    for d in 0..2 * q {
        let got = g.integrate(a, b, |x| x.powi(d as i32));
        let p = d as i32 + 1;
        let exact = (b.powi(p) - a.powi(p)) / p as f64;
        // cancellation in the closed form sets the attainable accuracy
        let scale = b.abs().max(a.abs()).powi(p) / p as f64 * len.max(1.0);
        ensure!((got - exact).abs() <= 1e-12 * scale.max(exact.abs()), "q {q} degree {d} on ({a}, {b}): {got} vs {exact}");
    }
    Ok(())
}

pub fn interval_additivity(e: f64, c: f64, a: f64, l1: f64, l2: f64) -> Check {
    let rule = QuadratureRule::default();
    let f = |x: f64| (1.0 + x).powf(e) * (2.0 + (c * x).sin());
    let (b, d) = (a + l1, a + l1 + l2);
    let run = |lo, hi| rule.integrate(f, lo, hi).map_err(|e| e.to_string());
    let (whole, left, right) = (run(a, d)?, run(a, b)?, run(b, d)?);
    let slack = whole.error + left.error + right.error + 1e-13 * whole.value.abs();
    let gap = (whole.value - left.value - right.value).abs();
    ensure!(gap <= slack, "({a}, {b}, {d}): gap {gap:e} above {slack:e}");
    Ok(())
}

pub fn norm_monotone(e: f64, a: f64, l: f64, s: f64, t: f64) -> Check {
    let rule = QuadratureRule::default();
    let f = |x: f64| x.powf(e) * (-0.1 * x).exp();
    let (lo, hi) = (a + s.min(t) * l, a + s.max(t) * l);
    let sub = weighted_l2_norm(&rule, f, lo, hi).map_err(|e| e.to_string())?;
    let sup = weighted_l2_norm(&rule, f, a, a + l).map_err(|e| e.to_string())?;
    ensure!(sub <= sup * (1.0 + 1e-12), "({lo}, {hi}) inside ({a}, {}): {sub} > {sup}", a + l);
    Ok(())
}

pub fn doubling_at_least_one(src: &str, delta: f64) -> Check {
    let r = doubling_constant(&w(src), delta, &small_plan()).map_err(|e| e.to_string())?;
    ensure!(r.d.to_f64() >= 1.0, "{src}: D = {}", r.d);
    Ok(())
}

/// `Ok(false)` when the base weight is not a member and there is nothing to check.
pub fn closure_under_powers(src: &str) -> Result<bool, String> {
    let base = doubling_constant(&w(src), 0.0, &small_plan()).map_err(|e| e.to_string())?;
    if !base.verdict.is_member() {
        return Ok(false);
    }
    for g in [1u32, 2] {
        let r = doubling_constant(&w(src).times_power_of_x(g), 0.0, &small_plan()).map_err(|e| e.to_string())?;
        ensure!(r.verdict.is_member(), "x^{g} {src}: {:?}", r.verdict);
        ensure!(r.d.to_f64() >= 1.0, "x^{g} {src}: D = {}", r.d);
    }
    Ok(true)
}

pub fn member_not_weakly_violated(src: &str) -> Check {
    let r = doubling_constant(&w(src), 0.0, &small_plan()).map_err(|e| e.to_string())?;
    if r.verdict.is_member() {
        let weak = weak_doubling_check(&w(src), 0.0, &small_plan()).map_err(|e| e.to_string())?;
        ensure!(!weak.verdict.is_violated(), "{src}: {:?}", weak.verdict);
    }
    Ok(())
}

pub fn scale_covariance(a: f64, b: f64, c: f64) -> Check {
    let opts = CriteriaOptions::unstamped();
    let u = format!("(1+x)^({a})");
    let v = format!("(1+x)^(-{b})");
    let run = |u: &str, v: &str| hardy_criterion(&w(u), &w(v), &opts).map_err(|e| e.to_string());
    let base = run(&u, &v)?;
    if !base.verdict.is_bounded() {
        return Ok(());
    }
    let s0 = base.s(0).value_f64();
    let sv = run(&u, &format!("{c}*{v}"))?.s(0).value_f64();
    let su = run(&format!("{c}*{u}"), &v)?.s(0).value_f64();
    ensure!((sv / s0 - c).abs() <= 1e-10 * c, "v scaled by {c}: {sv} / {s0}");
    ensure!((su * c / s0 - 1.0).abs() <= 1e-10, "u scaled by {c}: {su} / {s0}");
    Ok(())
}

pub fn factors_monotone(a: f64, b: f64, n: usize) -> Check {
    let cs: Vec<String> = (0..=n).map(|k| format!("{}", k + 1)).collect();
    let (u, v) = (w(&format!("(1+x)^({a})")), w(&format!("(1+x)^(-{b})")));
    let r = splitting_criteria(&kernel(&cs), &u, &v, &CriteriaOptions::unstamped()).map_err(|e| e.to_string())?;
    for k in &r.per_k {
        for p in k.entry.evidence.windows(2) {
            if let (Some(t0), Some(t1)) = (p[0].tail, p[1].tail) {
                ensure!(t1 <= t0.scale(1.0 + 1e-10).unwrap(), "tail k = {} rises at r = {}", k.k, p[1].r);
            }
            if let (Some(h0), Some(h1)) = (p[0].head, p[1].head) {
                ensure!(h1.scale(1.0 + 1e-10).unwrap() >= h0, "head k = {} falls at r = {}", k.k, p[1].r);
            }
        }
    }
    Ok(())
}

pub fn causality_and_triangle(c: &[f64], a: f64, b: f64, r: f64) -> Check {
    let cs: Vec<String> = c.iter().map(|x| format!("{x}")).collect();
    let (u, v) = (w(&format!("(1+x)^({a})")), w(&format!("(1+x)^(-{b})")));
    let op = discretize(&kernel(&cs), &u, &v, r, 96, &GridSpec::default()).map_err(|e| e.to_string())?;
    let q = op.q;
    for i in 0..op.size() {
        for j in (i / q + 1) * q..op.size() {
            ensure!(op.entry(i, j, None) == 0.0, "entry ({i}, {j}) above the block diagonal");
        }
    }
    let o = NormOptions::default();
    let norm = |only| operator_norm(&op, only, &o).map(|e| e.value).map_err(|e| e.to_string());
    let full = norm(None)?;
    let mut parts = 0.0;
    for t in op.terms() {
        parts += norm(Some(t))?;
    }
    ensure!(full <= parts * (1.0 + 1e-8), "norm {full} above the sum of components {parts}");
    Ok(())
}
