//! Floating point with an unbounded binary exponent.
//!
//! Norms of exponential weights such as `e^{x}` on `(0, 2^24)` overflow `f64`
//! long before the products they feed into stop being meaningful
//! (`e^{-r} * e^{r}` is perfectly tame). [`Wide`] keeps an `f64` mantissa in
//! `[0.5, 1)` and an `i64` exponent so those products can be formed exactly as
//! ordinary floats would, without rescaling tricks at every call site.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;

/// Largest binary exponent accepted before a value is treated as invalid.
const EXP_LIMIT: i64 = 1 << 52;

/// `m * 2^e` with `|m|` in `[0.5, 1)`, or exactly zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wide {
    m: f64,
    e: i64,
}

/// Splits a finite nonzero `x` into `(fr, ex)` with `x = fr * 2^ex`, `|fr|` in `[0.5, 1)`.
fn frexp(x: f64) -> (f64, i64) {
    let bits = x.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    if exp_bits == 0 {
        // subnormal
        let (fr, ex) = frexp(x * f64::from_bits(0x43f0_0000_0000_0000)); // 2^64
        return (fr, ex - 64);
    }
    let fr = f64::from_bits((bits & !(0x7ff_u64 << 52)) | (1022_u64 << 52));
    (fr, exp_bits - 1022)
}

fn ldexp(x: f64, ex: i64) -> f64 {
    if x == 0.0 {
        return x;
    }
    if ex > 2100 {
        return x.signum() * f64::INFINITY;
    }
    if ex < -2200 {
        return 0.0 * x.signum();
    }
    // two steps keep each power of two representable
    let half = ex / 2;
    x * 2f64.powi(half as i32) * 2f64.powi((ex - half) as i32)
}

impl Wide {
    pub const ZERO: Wide = Wide { m: 0.0, e: 0 };
    pub const ONE: Wide = Wide { m: 0.5, e: 1 };

    fn normalize(m: f64, e: i64) -> Option<Wide> {
        if m == 0.0 {
            return Some(Wide::ZERO);
        }
        if !m.is_finite() {
            return None;
        }
        let (fr, ex) = frexp(m);
        let e = e.checked_add(ex)?;
        if e.abs() > EXP_LIMIT {
            return None;
        }
        Some(Wide { m: fr, e })
    }

    /// Converts a finite `f64`; `None` for NaN or infinities.
    pub fn from_f64(x: f64) -> Option<Wide> {
        Wide::normalize(x, 0)
    }

    /// Panicking conversion for literals known to be finite.
    pub fn lit(x: f64) -> Wide {
        Wide::from_f64(x).expect("finite literal")
    }

    /// Nearest `f64`; saturates to `±inf` or `0`.
    pub fn to_f64(self) -> f64 {
        ldexp(self.m, self.e)
    }

    pub fn is_zero(self) -> bool {
        self.m == 0.0
    }

    pub fn is_sign_negative(self) -> bool {
        self.m < 0.0
    }

    pub fn signum(self) -> f64 {
        if self.m == 0.0 {
            0.0
        } else {
            self.m.signum()
        }
    }

    /// True when the value is representable as a normal `f64`.
    pub fn fits_f64(self) -> bool {
        self.m == 0.0 || (-1020..=1023).contains(&self.e)
    }

    pub fn abs(self) -> Wide {
        Wide { m: self.m.abs(), e: self.e }
    }

    pub fn neg(self) -> Wide {
        Wide { m: -self.m, e: self.e }
    }

    pub fn mul(self, o: Wide) -> Option<Wide> {
        Wide::normalize(self.m * o.m, self.e + o.e)
    }

    pub fn div(self, o: Wide) -> Option<Wide> {
        if o.m == 0.0 {
            return None;
        }
        Wide::normalize(self.m / o.m, self.e - o.e)
    }

    pub fn add(self, o: Wide) -> Option<Wide> {
        if self.m == 0.0 {
            return Some(o);
        }
        if o.m == 0.0 {
            return Some(self);
        }
        let (big, small) = if self.e >= o.e { (self, o) } else { (o, self) };
        let d = big.e - small.e;
        if d > 64 {
            return Some(big);
        }
        Wide::normalize(big.m + ldexp(small.m, -d), big.e)
    }

    pub fn sub(self, o: Wide) -> Option<Wide> {
        self.add(o.neg())
    }

    pub fn scale(self, k: f64) -> Option<Wide> {
        Wide::normalize(self.m * k, self.e)
    }

    /// Natural logarithm of `|self|`.
    pub fn ln_abs(self) -> f64 {
        if self.m == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.m.abs().ln() + self.e as f64 * std::f64::consts::LN_2
    }

    pub fn log10_abs(self) -> f64 {
        self.ln_abs() / std::f64::consts::LN_10
    }

    /// `e^a` for any finite `a` whose result fits the exponent range.
    pub fn exp_f64(a: f64) -> Option<Wide> {
        if !a.is_finite() {
            return None;
        }
        if a.abs() < 700.0 {
            return Wide::from_f64(a.exp());
        }
        let k = (a / std::f64::consts::LN_2).floor();
        if k.abs() > EXP_LIMIT as f64 {
            return if a < 0.0 { Some(Wide::ZERO) } else { None };
        }
        let r = (-k).mul_add(LN2_HI, a) - k * LN2_LO;
        Wide::normalize(r.exp(), k as i64)
    }

    pub fn exp(self) -> Option<Wide> {
        if self.e > 1023 {
            return if self.m < 0.0 { Some(Wide::ZERO) } else { None };
        }
        Wide::exp_f64(self.to_f64())
    }

    pub fn sqrt(self) -> Option<Wide> {
        if self.m < 0.0 {
            return None;
        }
        if self.m == 0.0 {
            return Some(self);
        }
        let (m, e) = if self.e % 2 != 0 { (self.m * 2.0, self.e - 1) } else { (self.m, self.e) };
        Wide::normalize(m.sqrt(), e / 2)
    }

    pub fn powi(self, n: i64) -> Option<Wide> {
        if n == 0 {
            return Some(Wide::ONE);
        }
        let mut base = if n < 0 { Wide::ONE.div(self)? } else { self };
        let mut k = n.unsigned_abs();
        let mut acc = Wide::ONE;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(base)?;
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(base)?;
            }
        }
        Some(acc)
    }

    /// `self^p`; negative bases only for integral `p`.
    pub fn powf(self, p: f64) -> Option<Wide> {
        if !p.is_finite() {
            return None;
        }
        if p.fract() == 0.0 && p.abs() <= 64.0 {
            return self.powi(p as i64);
        }
        if self.m < 0.0 {
            return None;
        }
        if self.m == 0.0 {
            return if p > 0.0 { Some(Wide::ZERO) } else { None };
        }
        // split the exponent so e*p stays exact-ish for huge e
        let ep = self.e as f64 * p;
        let whole = ep.floor();
        if whole.abs() > EXP_LIMIT as f64 {
            return if ep < 0.0 { Some(Wide::ZERO) } else { None };
        }
        let frac = ep - whole;
        let m = self.m.powf(p) * frac.exp2();
        Wide::normalize(m, whole as i64)
    }

    pub fn max(self, o: Wide) -> Wide {
        if o > self {
            o
        } else {
            self
        }
    }

    pub fn min(self, o: Wide) -> Wide {
        if o < self {
            o
        } else {
            self
        }
    }

    /// `self / o` as an `f64` ratio (saturating).
    pub fn ratio(self, o: Wide) -> f64 {
        match self.div(o) {
            Some(q) => q.to_f64(),
            None => f64::NAN,
        }
    }
}

impl PartialOrd for Wide {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        let sa = self.signum();
        let sb = o.signum();
        if sa != sb {
            return sa.partial_cmp(&sb);
        }
        if sa == 0.0 {
            return Some(Ordering::Equal);
        }
        let mag = match self.e.cmp(&o.e) {
            Ordering::Equal => self.m.abs().partial_cmp(&o.m.abs())?,
            ord => ord,
        };
        Some(if sa > 0.0 { mag } else { mag.reverse() })
    }
}

impl fmt::Display for Wide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.fits_f64() {
            return write!(f, "{}", self.to_f64());
        }
        let l = self.log10_abs();
        let exp10 = l.floor();
        let mant = 10f64.powf(l - exp10) * self.signum();
        write!(f, "{mant:.12}e{exp10}")
    }
}

/// In-range values serialize as JSON numbers, the rest as scientific strings.
impl Serialize for Wide {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.fits_f64() {
            s.serialize_f64(self.to_f64())
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl std::str::FromStr for Wide {
    type Err = String;

    /// Accepts plain floats and the `<mantissa>e<exponent>` form `Display` emits.
    fn from_str(t: &str) -> Result<Wide, String> {
        if let Ok(v) = t.parse::<f64>() {
            // decimal strings far outside the f64 range parse to 0 or inf
            if v != 0.0 || t.split(['e', 'E']).next().and_then(|m| m.parse::<f64>().ok()) == Some(0.0) {
                if let Some(w) = Wide::from_f64(v) {
                    return Ok(w);
                }
            }
        }
        let (m, e) = t.split_once(['e', 'E']).ok_or_else(|| format!("not a number: {t}"))?;
        let m: f64 = m.parse().map_err(|_| format!("bad mantissa in {t}"))?;
        let e: f64 = e.parse().map_err(|_| format!("bad exponent in {t}"))?;
        let mw = Wide::from_f64(m).ok_or_else(|| format!("bad mantissa in {t}"))?;
        if m == 0.0 {
            return Ok(Wide::ZERO);
        }
        Wide::exp_f64(e * std::f64::consts::LN_10)
            .and_then(|p| p.mul(mw))
            .ok_or_else(|| format!("out of range: {t}"))
    }
}

impl<'de> Deserialize<'de> for Wide {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Wide, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Wide::from_f64(v).ok_or_else(|| serde::de::Error::custom("non-finite number")),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serde_round_trip() {
        for w in [Wide::lit(2.5), Wide::exp_f64(5000.0).unwrap(), Wide::exp_f64(-5000.0).unwrap().neg()] {
            let s = serde_json::to_string(&w).unwrap();
            let back: Wide = serde_json::from_str(&s).unwrap();
            assert!((back.ratio(w) - 1.0).abs() < 1e-10, "{s}");
        }
    }

    #[test]
    fn round_trips_ordinary_values() {
        for x in [1.0, -3.5, 1e-300, 6.02e23, f64::MIN_POSITIVE / 8.0] {
            assert_eq!(Wide::lit(x).to_f64(), x);
        }
    }

    #[test]
    fn exp_beyond_f64_range() {
        let big = Wide::exp_f64(2.0e6).unwrap();
        let small = Wide::exp_f64(-2.0e6).unwrap();
        let p = big.mul(small).unwrap().to_f64();
        assert!((p - 1.0).abs() < 1e-9, "{p}");
        assert!((big.ln_abs() - 2.0e6).abs() < 1e-6);
    }

    #[test]
    fn add_aligns_exponents() {
        let a = Wide::lit(1.0);
        let b = Wide::lit(2f64.powi(-30));
        assert_eq!(a.add(b).unwrap().to_f64(), 1.0 + 2f64.powi(-30));
        assert_eq!(a.sub(a).unwrap(), Wide::ZERO);
    }

    #[test]
    fn ordering_respects_sign_and_exponent() {
        let huge = Wide::exp_f64(5000.0).unwrap();
        assert!(huge > Wide::lit(1e300));
        assert!(huge.neg() < Wide::lit(-1e300));
        assert!(Wide::ZERO < Wide::lit(1e-300));
    }

    #[test]
    fn sqrt_and_powers() {
        let x = Wide::exp_f64(3001.0).unwrap();
        let s = x.sqrt().unwrap();
        assert!((s.ln_abs() - 1500.5).abs() < 1e-9);
        let c = Wide::lit(-2.0).powi(3).unwrap();
        assert_eq!(c.to_f64(), -8.0);
        let f = Wide::lit(2.0).powf(0.5).unwrap();
        assert!((f.to_f64() - 2f64.sqrt()).abs() < 1e-15);
        let p = Wide::exp_f64(2000.0).unwrap().powf(1.5).unwrap();
        assert!((p.ln_abs() - 3000.0).abs() < 1e-9);
    }
}
