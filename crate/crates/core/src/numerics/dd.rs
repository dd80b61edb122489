//! Double-double arithmetic and a refined dense solve for moment systems.
//!
//! Hankel matrices of moments lose roughly `2n` bits per degree; carrying the
//! elimination in ~106-bit arithmetic keeps residuals near working precision
//! for the degrees used here.

use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct DD {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DD {
    pub const ZERO: DD = DD { hi: 0.0, lo: 0.0 };
    pub const ONE: DD = DD { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> DD {
        DD { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> DD {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn sqrt(self) -> DD {
        if self.hi <= 0.0 {
            return DD::ZERO;
        }
        let x = self.hi.sqrt();
        let xd = DD::from_f64(x);
        // one Newton step: x + (a - x^2) / (2x)
        xd + (self - xd * xd) / DD::from_f64(2.0 * x)
    }
}

impl Add for DD {
    type Output = DD;
    fn add(self, o: DD) -> DD {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DD { hi, lo }
    }
}

impl Neg for DD {
    type Output = DD;
    fn neg(self) -> DD {
        DD { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for DD {
    type Output = DD;
    fn sub(self, o: DD) -> DD {
        self + (-o)
    }
}

impl Mul for DD {
    type Output = DD;
    fn mul(self, o: DD) -> DD {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DD { hi, lo }
    }
}

impl Div for DD {
    type Output = DD;
    fn div(self, o: DD) -> DD {
        let q1 = self.hi / o.hi;
        let r = self - o * DD::from_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * DD::from_f64(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DD { hi, lo } + DD::from_f64(q3)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("matrix is numerically singular (pivot ratio {pivot_ratio:e})")]
    Singular { pivot_ratio: f64 },
    #[error("dimension mismatch")]
    Dimension,
}

/// Result of [`solve_refined`].
#[derive(Clone, Debug)]
pub struct Solution {
    pub x: Vec<DD>,
    /// Ratio of smallest to largest pivot magnitude, a cheap conditioning proxy.
    pub pivot_ratio: f64,
    /// Max-norm residual after refinement, relative to `max |b|`.
    pub residual: f64,
}

fn lu_solve(a: &[Vec<DD>], b: &[DD]) -> Result<(Vec<DD>, f64), SolveError> {
    let n = b.len();
    let mut m: Vec<Vec<DD>> = a.to_vec();
    let mut rhs = b.to_vec();
    let mut max_pivot: f64 = 0.0;
    let mut min_pivot = f64::INFINITY;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].hi.abs().total_cmp(&m[j][col].hi.abs()))
            .expect("nonempty range");
        if m[piv][col].hi == 0.0 {
            return Err(SolveError::Singular { pivot_ratio: 0.0 });
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        let p = m[col][col];
        max_pivot = max_pivot.max(p.hi.abs());
        min_pivot = min_pivot.min(p.hi.abs());
        for row in col + 1..n {
            let factor = m[row][col] / p;
            for k in col..n {
                let t = factor * m[col][k];
                m[row][k] = m[row][k] - t;
            }
            rhs[row] = rhs[row] - factor * rhs[col];
        }
    }
    let mut x = vec![DD::ZERO; n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for k in row + 1..n {
            s = s - m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    let ratio = if max_pivot > 0.0 { min_pivot / max_pivot } else { 0.0 };
    Ok((x, ratio))
}

/// Solves `a x = b` in double-double with one step of iterative refinement.
pub fn solve_refined(a: &[Vec<DD>], b: &[DD]) -> Result<Solution, SolveError> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(SolveError::Dimension);
    }
    let (mut x, pivot_ratio) = lu_solve(a, b)?;
    if pivot_ratio < 1e-28 {
        return Err(SolveError::Singular { pivot_ratio });
    }
    let residual_of = |x: &[DD]| -> Vec<DD> {
        (0..n)
            .map(|i| {
                let mut s = b[i];
                for j in 0..n {
                    s = s - a[i][j] * x[j];
                }
                s
            })
            .collect()
    };
    let r = residual_of(&x);
    let (d, _) = lu_solve(a, &r)?;
    for i in 0..n {
        x[i] = x[i] + d[i];
    }
    let bmax = b.iter().map(|v| v.hi.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let residual = residual_of(&x).iter().map(|v| v.to_f64().abs()).fold(0.0, f64::max) / bmax;
    Ok(Solution { x, pivot_ratio, residual })
}

/// Determinant of a symmetric positive definite matrix via Cholesky in double-double.
/// Returns `None` when a pivot is not positive.
pub fn spd_determinant(a: &[Vec<DD>]) -> Option<DD> {
    let n = a.len();
    let mut l = vec![vec![DD::ZERO; n]; n];
    let mut det = DD::ONE;
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d = d - l[j][k] * l[j][k];
        }
        if d.hi <= 0.0 {
            return None;
        }
        det = det * d;
        let djj = d.sqrt();
        l[j][j] = djj;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s = s - l[i][k] * l[j][k];
            }
            l[i][j] = s / djj;
        }
    }
    Some(det)
}
