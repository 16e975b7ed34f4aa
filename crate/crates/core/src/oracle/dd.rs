//! Double-double arithmetic (~106-bit significand) for reference evaluations.
//!
//! Only what the finite-difference oracle needs: `+ − × ÷`, `exp`, `ln`.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

const LN2: DoubleDouble = DoubleDouble { hi: std::f64::consts::LN_2, lo: 2.3190468138462996e-17 };

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    /// Exact `a + b`.
    pub fn sum_of(a: f64, b: f64) -> Self {
        let (hi, lo) = two_sum(a, b);
        Self { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    /// Multiplication by `2^k`, exact.
    fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Self { hi: self.hi * s, lo: self.lo * s }
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Self { hi: f64::INFINITY, lo: 0.0 };
        }
        if self.hi < -745.0 {
            return Self::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2 * Self::from(k);
        // r ∈ [−ln2/2, ln2/2]; shrink by 2^10 and take the Taylor series of expm1
        let r = r.ldexp(-10);
        let mut term = r;
        let mut sum = r;
        for i in 2..=14 {
            term = term * r / Self::from(i as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // expm1(2t) = expm1(t)·(2 + expm1(t))
        for _ in 0..10 {
            sum = sum * (sum + Self::from(2.0));
        }
        (sum + Self::ONE).ldexp(k as i32)
    }

    pub fn ln(self) -> Self {
        assert!(self.hi > 0.0, "ln of non-positive double-double");
        // Newton on exp: y ← y + x·exp(−y) − 1
        let mut y = Self::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Self::ONE;
        }
        y
    }
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (s1, s2) = two_sum(self.hi, o.hi);
        let (t1, t2) = two_sum(self.lo, o.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Self { hi, lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (p1, p2) = two_prod(self.hi, o.hi);
        let p2 = p2 + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p1, p2);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self - o * Self::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Self::from(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::from(q3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: DoubleDouble, b: DoubleDouble, rel: f64) -> bool {
        ((a - b).to_f64() / b.to_f64()).abs() <= rel
    }

    #[test]
    fn exp_of_one_is_e() {
        let e = DoubleDouble { hi: std::f64::consts::E, lo: 1.4456468917292502e-16 };
        assert!(close(DoubleDouble::ONE.exp(), e, 1e-30));
    }

    #[test]
    fn ln_of_two() {
        assert!(close(DoubleDouble::from(2.0).ln(), LN2, 1e-30));
    }

    #[test]
    fn exp_ln_round_trip() {
        for x in [0.3, 1.7, -2.5, 5.0, 1e-3, -30.0] {
            let t = DoubleDouble::from(x);
            let back = t.exp().ln();
            assert!((back - t).to_f64().abs() <= 1e-29 * (1.0 + x.abs()), "{x}");
            let third = t / DoubleDouble::from(3.0);
            let split = third.exp() * third.exp() * third.exp() / t.exp() - DoubleDouble::ONE;
            assert!(split.to_f64().abs() < 1e-29, "{x}: {:e}", split.to_f64());
        }
    }

    #[test]
    fn division_inverts_multiplication() {
        let a = DoubleDouble::new(1.0 / 3.0, 1e-20);
        let b = DoubleDouble::from(7.25);
        assert!(close(a * b / b, a, 1e-31));
    }
}
