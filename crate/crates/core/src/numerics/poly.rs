//! Dense real polynomials and bracketed root finding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest degree the root finder accepts.
pub const MAX_ROOT_DEGREE: usize = 12;

/// Grid cells per unit of degree in the sign scan.
const SCAN_CELLS_PER_DEGREE: usize = 400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("degree {0} exceeds the root finder limit of {MAX_ROOT_DEGREE}")]
    DegreeTooHigh(usize),
    #[error("leading coefficient is zero")]
    ZeroLeading,
    #[error("invalid interval ({0}, {1})")]
    BadInterval(f64, f64),
}

/// Coefficients in increasing powers: `c[0] + c[1] x + ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Poly {
        Poly { coeffs }
    }

    pub fn monomial(k: usize) -> Poly {
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        Poly { coeffs: c }
    }

    /// Nominal degree (length - 1), regardless of trailing zeros.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Sum of `|c_k| |x|^k`, the natural rounding scale of `eval(x)`.
    pub fn magnitude(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x.abs() + c.abs())
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly { coeffs: vec![0.0] };
        }
        Poly { coeffs: self.coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect() }
    }

    pub fn nth_derivative(&self, n: usize) -> Poly {
        (0..n).fold(self.clone(), |p, _| p.derivative())
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut c = vec![0.0; self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly { coeffs: c }
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        let c = (0..n)
            .map(|k| self.coeffs.get(k).copied().unwrap_or(0.0) + o.coeffs.get(k).copied().unwrap_or(0.0))
            .collect();
        Poly { coeffs: c }
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly { coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    /// `p(s x)`: rescales the variable.
    pub fn compose_scale(&self, s: f64) -> Poly {
        let mut f = 1.0;
        Poly {
            coeffs: self
                .coeffs
                .iter()
                .map(|c| {
                    let v = c * f;
                    f *= s;
                    v
                })
                .collect(),
        }
    }

    /// Maximum of `|p|` on `[a, b]` from endpoints and critical points.
    pub fn max_abs_on(&self, a: f64, b: f64) -> f64 {
        let mut best = self.eval(a).abs().max(self.eval(b).abs());
        let d = self.derivative().trimmed();
        if d.degree() >= 1 && d.coeffs.iter().any(|&c| c != 0.0) {
            if let Ok(crit) = find_roots(&d, a, b) {
                for c in crit {
                    best = best.max(self.eval(c).abs());
                }
            }
        }
        // coarse grid guards against a missed critical point
        let n = 64 * self.degree().max(1);
        for i in 1..n {
            let x = a + (b - a) * i as f64 / n as f64;
            best = best.max(self.eval(x).abs());
        }
        best
    }

    /// Drops trailing zero coefficients.
    pub fn trimmed(&self) -> Poly {
        let mut c = self.coeffs.clone();
        while c.len() > 1 && *c.last().unwrap() == 0.0 {
            c.pop();
        }
        Poly { coeffs: c }
    }
}

fn bisect(p: &Poly, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = p.eval(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = p.eval(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Real roots of `p` in `[a, b]`, ascending.
///
/// Simple roots are bracketed by a sign scan on a uniform grid and polished
/// by bisection. Even-multiplicity roots show no sign change; they are taken
/// from the critical points of `p` at which `|p|` is at rounding level.
pub fn find_roots(p: &Poly, a: f64, b: f64) -> Result<Vec<f64>, RootError> {
    if !(a.is_finite() && b.is_finite()) || b <= a {
        return Err(RootError::BadInterval(a, b));
    }
    let deg = p.degree();
    if deg > MAX_ROOT_DEGREE {
        return Err(RootError::DegreeTooHigh(deg));
    }
    if p.coeffs.last().copied().unwrap_or(0.0) == 0.0 {
        return Err(RootError::ZeroLeading);
    }
    if deg == 0 {
        return Ok(vec![]);
    }
    let cells = SCAN_CELLS_PER_DEGREE * deg;
    let mut roots = Vec::new();
    let mut x0 = a;
    let mut f0 = p.eval(a);
    if f0 == 0.0 {
        roots.push(a);
    }
    for i in 1..=cells {
        let x1 = if i == cells { b } else { a + (b - a) * i as f64 / cells as f64 };
        let f1 = p.eval(x1);
        if f1 == 0.0 {
            roots.push(x1);
        } else if f0 != 0.0 && (f0 < 0.0) != (f1 < 0.0) {
            roots.push(bisect(p, x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    if deg >= 2 {
        let d = p.derivative();
        let spacing = (b - a) / cells as f64;
        for c in find_roots(&d, a, b)? {
            let tol = 8.0 * deg as f64 * f64::EPSILON * p.magnitude(c).max(f64::MIN_POSITIVE);
            let near_existing = roots.iter().any(|r| (r - c).abs() < 2.0 * spacing);
            if !near_existing && p.eval(c).abs() <= tol {
                roots.push(c);
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * x.abs().max(1.0));
    Ok(roots)
}
