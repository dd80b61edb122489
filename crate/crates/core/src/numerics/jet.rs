//! Truncated Taylor series ("jets") for forward-mode derivatives of arbitrary order.
//!
//! A jet stores `f(x0), f'(x0)/1!, f''(x0)/2!, ...` up to a runtime order no
//! larger than [`JET_CAP`]` - 1`. Evaluating an expression over jets yields all
//! derivatives at once with no finite-difference noise.

use super::scalar::Scalar;

pub const JET_CAP: usize = 8;

#[derive(Clone, Copy, Debug)]
pub struct Jet<T: Scalar> {
    c: [T; JET_CAP],
    order: usize,
}

impl<T: Scalar> Jet<T> {
    fn zeros(order: usize) -> Jet<T> {
        let z = T::constant(0.0).expect("zero is representable");
        Jet { c: [z; JET_CAP], order }
    }

    /// The identity function seeded at `x0`.
    pub fn variable(x0: T, order: usize) -> Jet<T> {
        assert!(order < JET_CAP, "jet order {order} exceeds capacity");
        let mut j = Jet::zeros(order);
        j.c[0] = x0;
        if order >= 1 {
            j.c[1] = T::constant(1.0).expect("one is representable");
        }
        j
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Taylor coefficient `f^{(k)}(x0) / k!`.
    pub fn coeff(&self, k: usize) -> T {
        self.c[k]
    }

    /// `f^{(k)}(x0)`.
    pub fn derivative(&self, k: usize) -> Option<T> {
        let mut fact = 1.0;
        for i in 2..=k {
            fact *= i as f64;
        }
        self.c[k].mul(T::constant(fact)?)
    }

    fn binary_order(&self, o: &Jet<T>) -> usize {
        self.order.max(o.order)
    }

    fn powi(self, n: i64) -> Option<Jet<T>> {
        if n == 0 {
            return Jet::constant_jet(1.0, self.order);
        }
        let mut base = if n < 0 { Jet::constant_jet(1.0, self.order)?.div(self)? } else { self };
        let mut k = n.unsigned_abs();
        let mut acc = Jet::constant_jet(1.0, self.order)?;
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

    fn constant_jet(v: f64, order: usize) -> Option<Jet<T>> {
        let mut j = Jet::zeros(order);
        j.c[0] = T::constant(v)?;
        Some(j)
    }
}

impl<T: Scalar> Scalar for Jet<T> {
    fn constant(c: f64) -> Option<Self> {
        // order 0 jets widen on contact with higher-order operands
        Jet::constant_jet(c, 0)
    }

    fn add(self, o: Self) -> Option<Self> {
        let mut r: Jet<T> = Jet::zeros(self.binary_order(&o));
        for k in 0..=r.order {
            r.c[k] = self.c[k].add(o.c[k])?;
        }
        Some(r)
    }

    fn sub(self, o: Self) -> Option<Self> {
        let mut r: Jet<T> = Jet::zeros(self.binary_order(&o));
        for k in 0..=r.order {
            r.c[k] = self.c[k].sub(o.c[k])?;
        }
        Some(r)
    }

    fn mul(self, o: Self) -> Option<Self> {
        let mut r: Jet<T> = Jet::zeros(self.binary_order(&o));
        for k in 0..=r.order {
            let mut s = self.c[0].mul(o.c[k])?;
            for j in 1..=k {
                s = s.add(self.c[j].mul(o.c[k - j])?)?;
            }
            r.c[k] = s;
        }
        Some(r)
    }

    fn div(self, o: Self) -> Option<Self> {
        let mut r: Jet<T> = Jet::zeros(self.binary_order(&o));
        for k in 0..=r.order {
            let mut s = self.c[k];
            for j in 0..k {
                s = s.sub(r.c[j].mul(o.c[k - j])?)?;
            }
            r.c[k] = s.div(o.c[0])?;
        }
        Some(r)
    }

    fn neg(self) -> Option<Self> {
        let mut r = self;
        for k in 0..=r.order {
            r.c[k] = r.c[k].neg()?;
        }
        Some(r)
    }

    fn exp(self) -> Option<Self> {
        let mut r = Jet::zeros(self.order);
        r.c[0] = self.c[0].exp()?;
        for k in 1..=self.order {
            let mut s = T::constant(0.0)?;
            for j in 1..=k {
                let t = self.c[j].mul(r.c[k - j])?.mul(T::constant(j as f64)?)?;
                s = s.add(t)?;
            }
            r.c[k] = s.div(T::constant(k as f64)?)?;
        }
        Some(r)
    }

    fn ln(self) -> Option<Self> {
        let mut r = Jet::zeros(self.order);
        r.c[0] = self.c[0].ln()?;
        for k in 1..=self.order {
            let mut s = T::constant(0.0)?;
            for j in 1..k {
                let t = r.c[j].mul(self.c[k - j])?.mul(T::constant(j as f64)?)?;
                s = s.add(t)?;
            }
            let s = s.div(T::constant(k as f64)?)?;
            r.c[k] = self.c[k].sub(s)?.div(self.c[0])?;
        }
        Some(r)
    }

    fn abs(self) -> Option<Self> {
        if self.c[0].value() < 0.0 {
            self.neg()
        } else {
            Some(self)
        }
    }

    fn powf(self, p: f64) -> Option<Self> {
        if p.fract() == 0.0 && p.abs() <= 64.0 {
            return self.powi(p as i64);
        }
        if self.c[0].value() <= 0.0 {
            return None;
        }
        // b_k = 1/(k a_0) * sum_{j=1..k} ((p+1) j - k) a_j b_{k-j}
        let mut r = Jet::zeros(self.order);
        r.c[0] = self.c[0].powf(p)?;
        for k in 1..=self.order {
            let mut s = T::constant(0.0)?;
            for j in 1..=k {
                let coef = (p + 1.0) * j as f64 - k as f64;
                let t = self.c[j].mul(r.c[k - j])?.mul(T::constant(coef)?)?;
                s = s.add(t)?;
            }
            r.c[k] = s.div(self.c[0].mul(T::constant(k as f64)?)?)?;
        }
        Some(r)
    }

    fn value(self) -> f64 {
        self.c[0].value()
    }

    fn is_constant(self) -> bool {
        (1..=self.order).all(|k| self.c[k].value() == 0.0)
    }
}
