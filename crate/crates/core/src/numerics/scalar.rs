//! Number types the expression evaluator can run over.
//!
//! Every operation is fallible: `None` means the value left the domain
//! (log of a non-positive number, division by zero) or, for plain `f64`, that
//! range was lost and the caller should retry in [`Wide`].

use super::wide::Wide;

pub trait Scalar: Copy {
    fn constant(c: f64) -> Option<Self>;
    fn add(self, o: Self) -> Option<Self>;
    fn sub(self, o: Self) -> Option<Self>;
    fn mul(self, o: Self) -> Option<Self>;
    fn div(self, o: Self) -> Option<Self>;
    fn neg(self) -> Option<Self>;
    fn exp(self) -> Option<Self>;
    fn ln(self) -> Option<Self>;
    fn abs(self) -> Option<Self>;
    /// `self^p` for a constant exponent.
    fn powf(self, p: f64) -> Option<Self>;
    /// The value part, used to decide whether an exponent is a constant.
    fn value(self) -> f64;
    /// True when the number carries no dependence on the variable (jets).
    fn is_constant(self) -> bool {
        true
    }
}

/// Magnitudes outside this band are handed over to [`Wide`].
const F64_SAFE_MAX: f64 = 1e290;
const F64_SAFE_MIN: f64 = 1e-290;

fn checked(v: f64) -> Option<f64> {
    if !v.is_finite() {
        return None;
    }
    let a = v.abs();
    if a != 0.0 && !(F64_SAFE_MIN..=F64_SAFE_MAX).contains(&a) {
        return None;
    }
    Some(v)
}

impl Scalar for f64 {
    fn constant(c: f64) -> Option<Self> {
        checked(c)
    }
    fn add(self, o: Self) -> Option<Self> {
        checked(self + o)
    }
    fn sub(self, o: Self) -> Option<Self> {
        checked(self - o)
    }
    fn mul(self, o: Self) -> Option<Self> {
        let v = self * o;
        if v == 0.0 && self != 0.0 && o != 0.0 {
            return None;
        }
        checked(v)
    }
    fn div(self, o: Self) -> Option<Self> {
        if o == 0.0 {
            return None;
        }
        let v = self / o;
        if v == 0.0 && self != 0.0 {
            return None;
        }
        checked(v)
    }
    fn neg(self) -> Option<Self> {
        Some(-self)
    }
    fn exp(self) -> Option<Self> {
        if self.abs() > 660.0 {
            return None;
        }
        checked(self.exp())
    }
    fn ln(self) -> Option<Self> {
        if self <= 0.0 {
            return None;
        }
        Some(f64::ln(self))
    }
    fn abs(self) -> Option<Self> {
        Some(f64::abs(self))
    }
    fn powf(self, p: f64) -> Option<Self> {
        if self < 0.0 && p.fract() != 0.0 {
            return None;
        }
        if self == 0.0 && p < 0.0 {
            return None;
        }
        let v = if p.fract() == 0.0 && p.abs() <= 64.0 { self.powi(p as i32) } else { f64::powf(self, p) };
        if v == 0.0 && self != 0.0 {
            return None;
        }
        checked(v)
    }
    fn value(self) -> f64 {
        self
    }
}

impl Scalar for Wide {
    fn constant(c: f64) -> Option<Self> {
        Wide::from_f64(c)
    }
    fn add(self, o: Self) -> Option<Self> {
        Wide::add(self, o)
    }
    fn sub(self, o: Self) -> Option<Self> {
        Wide::sub(self, o)
    }
    fn mul(self, o: Self) -> Option<Self> {
        Wide::mul(self, o)
    }
    fn div(self, o: Self) -> Option<Self> {
        Wide::div(self, o)
    }
    fn neg(self) -> Option<Self> {
        Some(Wide::neg(self))
    }
    fn exp(self) -> Option<Self> {
        Wide::exp(self)
    }
    fn ln(self) -> Option<Self> {
        if self.is_sign_negative() || self.is_zero() {
            return None;
        }
        Wide::from_f64(self.ln_abs())
    }
    fn abs(self) -> Option<Self> {
        Some(Wide::abs(self))
    }
    fn powf(self, p: f64) -> Option<Self> {
        Wide::powf(self, p)
    }
    fn value(self) -> f64 {
        self.to_f64()
    }
}
