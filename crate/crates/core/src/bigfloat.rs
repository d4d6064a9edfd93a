//! Binary floating point with an arbitrary-size mantissa.
//!
//! A value is `mant * 2^exp`, rounded half-to-even to `prec` mantissa bits
//! after every operation. Trailing zero bits are stripped so equal values
//! have equal representations.

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BigFloat {
    mant: BigInt,
    exp: i64,
    prec: u32,
}

fn bits(m: &BigInt) -> i64 {
    m.bits() as i64
}

/// Round `mant * 2^exp` to `prec` bits; `sticky` marks discarded nonzero bits
/// below the mantissa (from an inexact division or square root).
fn round(mant: BigInt, exp: i64, prec: u32, sticky: bool) -> (BigInt, i64) {
    if mant.is_zero() {
        return (mant, 0);
    }
    let sign = mant.sign();
    let mut mag = mant.magnitude().clone();
    let mut e = exp;
    let b = mag.bits() as i64;
    if b > prec as i64 {
        let shift = (b - prec as i64) as u64;
        let q = &mag >> shift;
        let rem = &mag - (&q << shift);
        let half = BigUint::one() << (shift - 1);
        let up = match rem.cmp(&half) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => sticky || q.bit(0),
        };
        mag = if up { q + 1u32 } else { q };
        e += shift as i64;
        if mag.bits() as i64 > prec as i64 {
            mag >>= 1u32;
            e += 1;
        }
    }
    if let Some(tz) = mag.trailing_zeros() {
        if tz > 0 {
            mag >>= tz;
            e += tz as i64;
        }
    }
    (BigInt::from_biguint(sign, mag), e)
}

impl BigFloat {
    pub fn zero(prec: u32) -> Self {
        BigFloat { mant: BigInt::zero(), exp: 0, prec }
    }

    pub fn from_parts(mant: BigInt, exp: i64, prec: u32) -> Self {
        let (mant, exp) = round(mant, exp, prec, false);
        BigFloat { mant, exp, prec }
    }

    pub fn from_bigint(n: &BigInt, prec: u32) -> Self {
        Self::from_parts(n.clone(), 0, prec)
    }

    pub fn from_i64(n: i64, prec: u32) -> Self {
        Self::from_parts(BigInt::from(n), 0, prec)
    }

    /// Exact conversion of a finite f64 (then rounded to `prec`, which is a no-op for prec >= 53).
    pub fn from_f64(x: f64, prec: u32) -> Self {
        assert!(x.is_finite(), "non-finite f64 in BigFloat::from_f64");
        if x == 0.0 {
            return Self::zero(prec);
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 0 { 1i64 } else { -1 };
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        Self::from_parts(BigInt::from(m) * sign, e, prec)
    }

    pub fn from_ratio(num: &BigInt, den: &BigInt, prec: u32) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        let n = Self::from_parts(num.clone(), 0, u32::MAX);
        let d = Self::from_parts(den.clone(), 0, u32::MAX);
        n.div_prec(&d, prec)
    }

    pub fn from_rational(q: &BigRational, prec: u32) -> Self {
        Self::from_ratio(q.numer(), q.denom(), prec)
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn with_prec(&self, prec: u32) -> Self {
        Self::from_parts(self.mant.clone(), self.exp, prec)
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    pub fn signum(&self) -> i32 {
        match self.mant.sign() {
            Sign::Minus => -1,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        }
    }

    pub fn neg(&self) -> Self {
        BigFloat { mant: -self.mant.clone(), exp: self.exp, prec: self.prec }
    }

    pub fn abs(&self) -> Self {
        BigFloat { mant: self.mant.abs(), exp: self.exp, prec: self.prec }
    }

    /// Position just above the leading bit: |x| < 2^top.
    fn top(&self) -> i64 {
        self.exp + bits(&self.mant)
    }

    pub fn add(&self, other: &Self) -> Self {
        let prec = self.prec.max(other.prec);
        if other.is_zero() {
            return self.with_prec(prec);
        }
        if self.is_zero() {
            return other.with_prec(prec);
        }
        // When the operands do not overlap within the precision window the
        // smaller one cannot change the rounded result.
        let gap = self.top() - other.top();
        if gap > prec as i64 + 2 {
            return self.with_prec(prec);
        }
        if -gap > prec as i64 + 2 {
            return other.with_prec(prec);
        }
        let e = self.exp.min(other.exp);
        let a = &self.mant << (self.exp - e) as u64;
        let b = &other.mant << (other.exp - e) as u64;
        Self::from_parts(a + b, e, prec)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let prec = self.prec.max(other.prec);
        Self::from_parts(&self.mant * &other.mant, self.exp + other.exp, prec)
    }

    pub fn mul_i64(&self, n: i64) -> Self {
        Self::from_parts(&self.mant * n, self.exp, self.prec)
    }

    /// Multiply by 2^k exactly.
    pub fn ldexp(&self, k: i64) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        BigFloat { mant: self.mant.clone(), exp: self.exp + k, prec: self.prec }
    }

    pub fn div(&self, other: &Self) -> Self {
        self.div_prec(other, self.prec.max(other.prec))
    }

    fn div_prec(&self, other: &Self, prec: u32) -> Self {
        assert!(!other.is_zero(), "BigFloat division by zero");
        if self.is_zero() {
            return Self::zero(prec);
        }
        let shift = (prec as i64 + 2 + bits(&other.mant) - bits(&self.mant)).max(0);
        let num = &self.mant << shift as u64;
        let q = &num / &other.mant;
        let sticky = !(&num - &q * &other.mant).is_zero();
        let (m, e) = round(q, self.exp - other.exp - shift, prec, sticky);
        BigFloat { mant: m, exp: e, prec }
    }

    pub fn sqrt(&self) -> Self {
        assert!(self.signum() >= 0, "sqrt of negative BigFloat");
        if self.is_zero() {
            return self.clone();
        }
        let prec = self.prec;
        let mut s = (2 * (prec as i64 + 2) - bits(&self.mant)).max(0);
        if (self.exp - s).rem_euclid(2) != 0 {
            s += 1;
        }
        let n = self.mant.magnitude() << s as u64;
        let r = n.sqrt();
        let sticky = &r * &r != n;
        let (m, e) = round(BigInt::from(r), (self.exp - s) / 2, prec, sticky);
        BigFloat { mant: m, exp: e, prec }
    }

    pub fn exp(&self) -> Self {
        let prec = self.prec;
        if self.is_zero() {
            return Self::from_i64(1, prec);
        }
        // exp(x) = exp(x / 2^s)^(2^s) with |x / 2^s| < 2^-20.
        let s = (self.top() + 20).max(0);
        let work = prec + s as u32 + 40;
        let y = self.with_prec(work).ldexp(-s);
        let mut sum = BigFloat::from_i64(1, work);
        let mut term = BigFloat::from_i64(1, work);
        let mut k = 1i64;
        loop {
            term = term.mul(&y).div(&BigFloat::from_i64(k, work));
            if term.is_zero() || term.top() < -(work as i64) - 4 {
                break;
            }
            sum = sum.add(&term);
            k += 1;
        }
        for _ in 0..s {
            sum = sum.mul(&sum);
        }
        sum.with_prec(prec)
    }

    pub fn floor(&self) -> BigInt {
        if self.exp >= 0 {
            return &self.mant << self.exp as u64;
        }
        let sh = (-self.exp) as u64;
        let q = self.mant.magnitude() >> sh;
        if self.mant.sign() == Sign::Minus {
            let exact = (&q << sh) == *self.mant.magnitude();
            let q = BigInt::from(q);
            if exact {
                -q
            } else {
                -q - 1
            }
        } else {
            BigInt::from(q)
        }
    }

    /// Exact rational value.
    pub fn to_rational(&self) -> BigRational {
        if self.exp >= 0 {
            BigRational::from_integer(&self.mant << self.exp as u64)
        } else {
            BigRational::new(self.mant.clone(), BigInt::one() << (-self.exp) as u64)
        }
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let b = bits(&self.mant);
        let (m, e) = if b > 64 {
            (&self.mant >> (b - 64) as u64, self.exp + b - 64)
        } else {
            (self.mant.clone(), self.exp)
        };
        ldexp_f64(m.to_f64().unwrap_or(0.0), e)
    }

    /// log2 |x| as f64, finite even when |x| is outside the f64 range.
    pub fn log2_abs(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        let b = bits(&self.mant);
        let (m, e) = if b > 64 {
            (self.mant.magnitude() >> (b - 64) as u64, self.exp + b - 64)
        } else {
            (self.mant.magnitude().clone(), self.exp)
        };
        m.to_f64().unwrap_or(1.0).log2() + e as f64
    }

    /// Scientific decimal with `digits` significant digits, e.g. `-1.2500e-3`.
    pub fn to_sci(&self, digits: usize) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let digits = digits.max(1);
        let mut e10 = (self.log2_abs() * std::f64::consts::LOG10_2).floor() as i64;
        // Exact rationals are fine for moderate exponents; beyond that scale in floating point
        // with enough guard bits that the rounded digits are unaffected.
        let huge = self.top().abs() > 4096;
        let q = if huge { BigRational::zero() } else { self.to_rational().abs() };
        loop {
            let scale = digits as i64 - 1 - e10;
            let ten = BigInt::from(10);
            let scaled = if huge {
                let work = self.prec.max(64) + 64 + 2 * (64 - scale.unsigned_abs().leading_zeros());
                let p = pow10(scale.unsigned_abs(), work);
                let x = self.abs().with_prec(work);
                if scale >= 0 { x.mul(&p) } else { x.div(&p) }.to_rational()
            } else if scale >= 0 {
                &q * BigRational::from_integer(num_traits::pow(ten, scale as usize))
            } else {
                &q / BigRational::from_integer(num_traits::pow(ten, (-scale) as usize))
            };
            let n = round_half_even(&scaled);
            let s = n.to_string();
            if s.len() > digits {
                e10 += 1;
                continue;
            }
            if s.len() < digits {
                e10 -= 1;
                continue;
            }
            let sign = if self.signum() < 0 { "-" } else { "" };
            let (head, tail) = s.split_at(1);
            return if tail.is_empty() {
                format!("{sign}{head}e{e10}")
            } else {
                format!("{sign}{head}.{tail}e{e10}")
            };
        }
    }

    /// Number of decimal digits that round-trip `prec` bits.
    pub fn decimal_digits(prec: u32) -> usize {
        (prec as f64 * std::f64::consts::LOG10_2).ceil() as usize + 1
    }
}

/// 10^n rounded to `prec` bits, by repeated squaring.
fn pow10(mut n: u64, prec: u32) -> BigFloat {
    let mut base = BigFloat::from_i64(10, prec);
    let mut acc = BigFloat::from_i64(1, prec);
    while n > 0 {
        if n & 1 == 1 {
            acc = acc.mul(&base);
        }
        base = base.mul(&base);
        n >>= 1;
    }
    acc
}

fn round_half_even(q: &BigRational) -> BigInt {
    let fl = q.floor();
    let frac = q - &fl;
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let base = fl.to_integer();
    match frac.cmp(&half) {
        Ordering::Less => base,
        Ordering::Greater => base + 1,
        Ordering::Equal => {
            if (&base % 2u32).is_zero() {
                base
            } else {
                base + 1
            }
        }
    }
}

fn ldexp_f64(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * 2f64.powi(e as i32)
}

impl PartialOrd for BigFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.sub(other).signum().cmp(&0))
    }
}

/// Parse a decimal literal (`-12`, `1.5`, `2.5e-3`) as an exact rational.
pub fn parse_decimal(text: &str) -> Option<BigRational> {
    let t = text.trim();
    let (mantissa, exp10) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i64>().ok()?),
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match body.find('.') {
        Some(i) => (&body[..i], &body[i + 1..]),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int_part}{frac_part}0").parse::<BigInt>().ok()? / 10;
    let scale = exp10 - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let mut q = if scale >= 0 {
        BigRational::from_integer(digits * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(digits, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        q = -q;
    }
    Some(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bf(x: f64) -> BigFloat {
        BigFloat::from_f64(x, 256)
    }

    #[test]
    fn f64_roundtrip() {
        for x in [1.0, -0.1, 3.5e-300, 1e300, 123456.789] {
            assert_eq!(bf(x).to_f64(), x);
        }
    }

    #[test]
    fn arithmetic_matches_f64_on_simple_values() {
        assert_eq!(bf(1.5).add(&bf(2.25)).to_f64(), 3.75);
        assert_eq!(bf(1.5).mul(&bf(-2.0)).to_f64(), -3.0);
        assert_eq!(bf(1.0).div(&bf(4.0)).to_f64(), 0.25);
        assert!(bf(1.0).sub(&bf(1.0)).is_zero());
    }

    #[test]
    fn sqrt_two_squared() {
        let s = bf(2.0).sqrt();
        let err = s.mul(&s).sub(&bf(2.0));
        assert!(err.log2_abs() < -250.0);
        assert!((s.to_f64() - std::f64::consts::SQRT_2).abs() < 1e-16);
    }

    #[test]
    fn one_third_to_decimal() {
        let third = BigFloat::from_ratio(&BigInt::from(1), &BigInt::from(3), 256);
        assert_eq!(third.to_sci(10), "3.333333333e-1");
        // Beyond the exact-rational range: compare against exact digits of 3^-1 · 2^-5000.
        let tiny = third.ldexp(-5000);
        let exact = BigRational::new(BigInt::one(), BigInt::from(3) << 5000usize);
        let digits = tiny.to_sci(30);
        let e10: i64 = digits.split('e').nth(1).unwrap().parse().unwrap();
        let scaled = exact * BigRational::from_integer(num_traits::pow(BigInt::from(10), (29 - e10) as usize));
        let mantissa: String = digits.split('e').next().unwrap().replace('.', "");
        assert_eq!(mantissa, round_half_even(&scaled).to_string());
        let back = parse_decimal(&third.to_sci(BigFloat::decimal_digits(256))).unwrap();
        let diff = BigFloat::from_rational(&back, 256).sub(&third);
        assert!(diff.log2_abs() < -250.0);
    }

    #[test]
    fn exp_values() {
        assert!((bf(1.0).exp().to_f64() - std::f64::consts::E).abs() < 1e-15);
        let tiny = bf(-300.0).exp();
        assert!((tiny.log2_abs() - (-300.0 / std::f64::consts::LN_2)).abs() < 1e-9);
        // exp(a) exp(-a) = 1 to nearly full precision.
        let a = bf(7.25);
        let prod = a.exp().mul(&a.neg().exp());
        assert!(prod.sub(&bf(1.0)).log2_abs() < -240.0);
    }

    #[test]
    fn floor_handles_negatives() {
        assert_eq!(bf(-2.5).floor(), BigInt::from(-3));
        assert_eq!(bf(-2.0).floor(), BigInt::from(-2));
        assert_eq!(bf(2.75).floor(), BigInt::from(2));
    }

    #[test]
    fn decimal_parsing() {
        assert_eq!(parse_decimal("1e-12").unwrap(), BigRational::new(1.into(), num_traits::pow(BigInt::from(10), 12)));
        assert_eq!(parse_decimal("-2.1").unwrap(), BigRational::new((-21).into(), 10.into()));
        assert!(parse_decimal("abc").is_none());
    }

    #[test]
    fn ties_round_to_even() {
        // 2^4 + 1 with 4 bits of precision: 17 -> 16; 2^4 + 3 = 19 -> 20.
        assert_eq!(BigFloat::from_i64(17, 4).to_f64(), 16.0);
        assert_eq!(BigFloat::from_i64(19, 4).to_f64(), 20.0);
        assert_eq!(BigFloat::from_i64(25, 4).to_f64(), 24.0);
    }
}
