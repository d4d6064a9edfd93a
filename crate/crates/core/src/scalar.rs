//! Complex coefficients on two backends: exact Gaussian rationals and
//! binary big floats with a recorded mantissa width.

use crate::bigfloat::{parse_decimal, BigFloat};
use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub const DEFAULT_BITS: u32 = 256;
pub const MIN_BITS: u32 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Backend {
    Exact,
    Float(u32),
}

impl Backend {
    pub fn float(bits: u32) -> Result<Backend> {
        if bits < MIN_BITS {
            return Err(Error::Parse(format!("float precision {bits} below {MIN_BITS} bits")));
        }
        Ok(Backend::Float(bits))
    }

    pub fn parse(text: &str) -> Result<Backend> {
        let t = text.trim();
        if t == "exact" {
            return Ok(Backend::Exact);
        }
        if t == "float" {
            return Ok(Backend::Float(DEFAULT_BITS));
        }
        if let Some(b) = t.strip_prefix("float:") {
            let bits = b.parse::<u32>().map_err(|_| Error::Parse(format!("bad backend {t}")))?;
            return Backend::float(bits);
        }
        Err(Error::Parse(format!("unknown backend {t:?} (exact | float | float:<bits>)")))
    }

    /// The wider of two backends; exact combined with float is a mismatch.
    pub fn join(self, other: Backend) -> Result<Backend> {
        match (self, other) {
            (Backend::Exact, Backend::Exact) => Ok(Backend::Exact),
            (Backend::Float(a), Backend::Float(b)) => Ok(Backend::Float(a.max(b))),
            (a, b) => Err(Error::Backend(a.to_string(), b.to_string())),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Exact => write!(f, "exact"),
            Backend::Float(b) => write!(f, "float:{b}"),
        }
    }
}

impl From<Backend> for String {
    fn from(b: Backend) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for Backend {
    type Error = Error;
    fn try_from(s: String) -> Result<Backend> {
        Backend::parse(&s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FloatComplex {
    pub re: BigFloat,
    pub im: BigFloat,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Scalar {
    Exact(Complex<BigRational>),
    Float(FloatComplex),
}

fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl Scalar {
    pub fn zero(backend: Backend) -> Scalar {
        Scalar::from_i64(0, backend)
    }

    pub fn one(backend: Backend) -> Scalar {
        Scalar::from_i64(1, backend)
    }

    pub fn from_i64(n: i64, backend: Backend) -> Scalar {
        match backend {
            Backend::Exact => Scalar::Exact(Complex::new(q(n), q(0))),
            Backend::Float(p) => Scalar::Float(FloatComplex {
                re: BigFloat::from_i64(n, p),
                im: BigFloat::zero(p),
            }),
        }
    }

    pub fn ratio(n: i64, d: i64, backend: Backend) -> Scalar {
        Scalar::real_rational(&BigRational::new(BigInt::from(n), BigInt::from(d)), backend)
    }

    pub fn real_rational(r: &BigRational, backend: Backend) -> Scalar {
        Scalar::complex_rational(r, &q(0), backend)
    }

    pub fn complex_rational(re: &BigRational, im: &BigRational, backend: Backend) -> Scalar {
        match backend {
            Backend::Exact => Scalar::Exact(Complex::new(re.clone(), im.clone())),
            Backend::Float(p) => Scalar::Float(FloatComplex {
                re: BigFloat::from_rational(re, p),
                im: BigFloat::from_rational(im, p),
            }),
        }
    }

    /// The exact binary value of `x` (exact on both backends).
    pub fn from_f64(x: f64, backend: Backend) -> Scalar {
        let b = BigFloat::from_f64(x, 64);
        Scalar::real_rational(&b.to_rational(), backend)
    }

    pub fn from_float(re: BigFloat, im: BigFloat) -> Scalar {
        Scalar::Float(FloatComplex { re, im })
    }

    pub fn i(backend: Backend) -> Scalar {
        Scalar::complex_rational(&q(0), &q(1), backend)
    }

    /// Parse a real literal: `p/q`, a decimal, `[c*]sqrt(r)` or `[c*]exp(r)` with c, r rational.
    /// Square roots of non-squares and exponentials of nonzero r need the float backend.
    pub fn parse_real(text: &str, backend: Backend) -> Result<Scalar> {
        let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Parse(format!("cannot parse real literal {text:?}"));
        let (neg, body) = match t.strip_prefix('-') {
            Some(b) => (true, b.to_string()),
            None => (false, t.clone()),
        };
        let value = if let Some(pos) = body.find("sqrt(") {
            if !body.ends_with(')') {
                return Err(bad());
            }
            let coef = match &body[..pos] {
                "" => q(1),
                c => parse_rational(c.strip_suffix('*').ok_or_else(bad)?).ok_or_else(bad)?,
            };
            let arg = parse_rational(&body[pos + 5..body.len() - 1]).ok_or_else(bad)?;
            if arg.is_negative() {
                return Err(bad());
            }
            let root = match exact_sqrt(&arg) {
                Some(r) => Scalar::real_rational(&(coef * r), backend),
                None => match backend {
                    Backend::Exact => {
                        return Err(Error::NotRepresentable(format!(
                            "{text} is irrational; use the float backend"
                        )))
                    }
                    Backend::Float(p) => {
                        let s = BigFloat::from_rational(&arg, p + 16).sqrt();
                        let c = BigFloat::from_rational(&coef, p + 16);
                        Scalar::from_float(c.mul(&s).with_prec(p), BigFloat::zero(p))
                    }
                },
            };
            root
        } else if let Some(pos) = body.find("exp(") {
            if !body.ends_with(')') {
                return Err(bad());
            }
            let coef = match &body[..pos] {
                "" => q(1),
                c => parse_rational(c.strip_suffix('*').ok_or_else(bad)?).ok_or_else(bad)?,
            };
            let arg = parse_rational(&body[pos + 4..body.len() - 1]).ok_or_else(bad)?;
            if arg.is_zero() {
                Scalar::real_rational(&coef, backend)
            } else {
                match backend {
                    Backend::Exact => {
                        return Err(Error::NotRepresentable(format!(
                            "{text} is transcendental; use the float backend"
                        )))
                    }
                    Backend::Float(p) => {
                        let e = Scalar::real_rational(&arg, Backend::Float(p + 16)).exp_real()?;
                        (&Scalar::real_rational(&coef, Backend::Float(p + 16)) * &e).to_backend(backend)
                    }
                }
            }
        } else {
            Scalar::real_rational(&parse_rational(&body).ok_or_else(bad)?, backend)
        };
        Ok(if neg { -&value } else { value })
    }

    pub fn backend(&self) -> Backend {
        match self {
            Scalar::Exact(_) => Backend::Exact,
            Scalar::Float(c) => Backend::Float(c.re.prec().max(c.im.prec())),
        }
    }

    /// Convert to another backend. Exact to float rounds; float to exact is the exact binary value.
    pub fn to_backend(&self, backend: Backend) -> Scalar {
        match (self, backend) {
            (Scalar::Exact(c), b) => Scalar::complex_rational(&c.re, &c.im, b),
            (Scalar::Float(c), Backend::Exact) => {
                Scalar::Exact(Complex::new(c.re.to_rational(), c.im.to_rational()))
            }
            (Scalar::Float(c), Backend::Float(p)) => {
                Scalar::from_float(c.re.with_prec(p), c.im.with_prec(p))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Exact(c) => c.re.is_zero() && c.im.is_zero(),
            Scalar::Float(c) => c.re.is_zero() && c.im.is_zero(),
        }
    }

    pub fn is_real(&self) -> bool {
        match self {
            Scalar::Exact(c) => c.im.is_zero(),
            Scalar::Float(c) => c.im.is_zero(),
        }
    }

    pub fn re(&self) -> Scalar {
        match self {
            Scalar::Exact(c) => Scalar::Exact(Complex::new(c.re.clone(), q(0))),
            Scalar::Float(c) => Scalar::from_float(c.re.clone(), BigFloat::zero(c.im.prec())),
        }
    }

    pub fn im(&self) -> Scalar {
        match self {
            Scalar::Exact(c) => Scalar::Exact(Complex::new(c.im.clone(), q(0))),
            Scalar::Float(c) => Scalar::from_float(c.im.clone(), BigFloat::zero(c.re.prec())),
        }
    }

    pub fn conj(&self) -> Scalar {
        match self {
            Scalar::Exact(c) => Scalar::Exact(c.conj()),
            Scalar::Float(c) => Scalar::from_float(c.re.clone(), c.im.neg()),
        }
    }

    /// Multiply by the imaginary unit.
    pub fn mul_i(&self) -> Scalar {
        match self {
            Scalar::Exact(c) => Scalar::Exact(Complex::new(-c.im.clone(), c.re.clone())),
            Scalar::Float(c) => Scalar::from_float(c.im.neg(), c.re.clone()),
        }
    }

    pub fn mul_int(&self, n: i64) -> Scalar {
        match self {
            Scalar::Exact(c) => Scalar::Exact(Complex::new(&c.re * q(n), &c.im * q(n))),
            Scalar::Float(c) => Scalar::from_float(c.re.mul_i64(n), c.im.mul_i64(n)),
        }
    }

    pub fn powi(&self, n: u32) -> Scalar {
        let mut acc = Scalar::one(self.backend());
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    pub fn to_c64(&self) -> (f64, f64) {
        match self {
            Scalar::Exact(c) => (rat_f64(&c.re), rat_f64(&c.im)),
            Scalar::Float(c) => (c.re.to_f64(), c.im.to_f64()),
        }
    }

    pub fn re_f64(&self) -> f64 {
        self.to_c64().0
    }

    /// ln |z| in f64, finite for magnitudes far outside the f64 range.
    pub fn ln_abs(&self) -> f64 {
        let (re, im) = match self {
            Scalar::Exact(c) => (
                BigFloat::from_rational(&c.re, 80),
                BigFloat::from_rational(&c.im, 80),
            ),
            Scalar::Float(c) => (c.re.with_prec(80), c.im.with_prec(80)),
        };
        let n2 = re.mul(&re).add(&im.mul(&im));
        if n2.is_zero() {
            return f64::NEG_INFINITY;
        }
        0.5 * n2.log2_abs() * std::f64::consts::LN_2
    }

    pub fn abs_f64(&self) -> f64 {
        self.ln_abs().exp()
    }

    /// Sign of the real part (-1, 0, 1).
    pub fn sign_re(&self) -> i32 {
        match self {
            Scalar::Exact(c) => {
                if c.re.is_zero() {
                    0
                } else if c.re.is_positive() {
                    1
                } else {
                    -1
                }
            }
            Scalar::Float(c) => c.re.signum(),
        }
    }

    /// Floor of the real part.
    pub fn floor_re(&self) -> BigInt {
        match self {
            Scalar::Exact(c) => c.re.floor().to_integer(),
            Scalar::Float(c) => c.re.floor(),
        }
    }

    pub fn inv(&self) -> Result<Scalar> {
        if self.is_zero() {
            return Err(Error::ZeroDivisor("scalar inverse of zero".into()));
        }
        Ok(&Scalar::one(self.backend()) / self)
    }

    /// e^x for real x. Exact backend only represents e^0.
    pub fn exp_real(&self) -> Result<Scalar> {
        match self {
            Scalar::Exact(c) if c.re.is_zero() && c.im.is_zero() => Ok(Scalar::one(Backend::Exact)),
            Scalar::Exact(_) => Err(Error::NotRepresentable("exp of a nonzero rational".into())),
            // Past 2^48 the result's binary exponent no longer fits.
            Scalar::Float(c) if c.re.log2_abs() > 48.0 => {
                Err(Error::NotRepresentable(format!("exp of {} is out of range", c.re.to_f64())))
            }
            Scalar::Float(c) => Ok(Scalar::from_float(c.re.exp(), BigFloat::zero(c.re.prec()))),
        }
    }

    /// Square root of a nonnegative real.
    pub fn sqrt_real(&self) -> Result<Scalar> {
        if self.sign_re() < 0 || !self.is_real() {
            return Err(Error::NotRepresentable("sqrt of a negative or complex value".into()));
        }
        match self {
            Scalar::Exact(c) => exact_sqrt(&c.re)
                .map(|r| Scalar::real_rational(&r, Backend::Exact))
                .ok_or_else(|| Error::NotRepresentable("irrational square root".into())),
            Scalar::Float(c) => Ok(Scalar::from_float(c.re.sqrt(), BigFloat::zero(c.re.prec()))),
        }
    }

    /// Serialized (re, im): "p/q" strings on the exact backend, scientific decimals on floats.
    pub fn to_strings(&self) -> (String, String) {
        match self {
            Scalar::Exact(c) => (rat_string(&c.re), rat_string(&c.im)),
            Scalar::Float(c) => {
                let d = BigFloat::decimal_digits(c.re.prec());
                (c.re.to_sci(d), c.im.to_sci(d))
            }
        }
    }

    pub fn from_strings(re: &str, im: &str, backend: Backend) -> Result<Scalar> {
        let bad = |s: &str| Error::Parse(format!("bad coefficient {s:?}"));
        let r = parse_rational(re).ok_or_else(|| bad(re))?;
        let i = parse_rational(im).ok_or_else(|| bad(im))?;
        Ok(Scalar::complex_rational(&r, &i, backend))
    }
}

pub fn rat_string(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// `p/q`, an integer, or a decimal literal.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let t = text.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n = parse_decimal(n)?;
        let d = parse_decimal(d)?;
        if d.is_zero() {
            return None;
        }
        return Some(n / d);
    }
    parse_decimal(t)
}

fn exact_sqrt(r: &BigRational) -> Option<BigRational> {
    let n = r.numer().to_biguint()?;
    let d = r.denom().to_biguint()?;
    let (sn, sd) = (n.sqrt(), d.sqrt());
    if &sn * &sn == n && &sd * &sd == d {
        Some(BigRational::new(sn.into(), sd.into()))
    } else {
        None
    }
}

fn rat_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        BigFloat::from_rational(r, 64).to_f64()
    })
}

fn float_mul(a: &FloatComplex, b: &FloatComplex) -> FloatComplex {
    if a.im.is_zero() && b.im.is_zero() {
        let p = a.im.prec().max(b.im.prec());
        return FloatComplex { re: a.re.mul(&b.re), im: BigFloat::zero(p) };
    }
    FloatComplex {
        re: a.re.mul(&b.re).sub(&a.im.mul(&b.im)),
        im: a.re.mul(&b.im).add(&a.im.mul(&b.re)),
    }
}

fn float_div(a: &FloatComplex, b: &FloatComplex) -> FloatComplex {
    assert!(!(b.re.is_zero() && b.im.is_zero()), "scalar division by zero");
    if b.im.is_zero() {
        return FloatComplex { re: a.re.div(&b.re), im: a.im.div(&b.re) };
    }
    let den = b.re.mul(&b.re).add(&b.im.mul(&b.im));
    FloatComplex {
        re: a.re.mul(&b.re).add(&a.im.mul(&b.im)).div(&den),
        im: a.im.mul(&b.re).sub(&a.re.mul(&b.im)).div(&den),
    }
}

fn mismatch(a: &Scalar, b: &Scalar) -> ! {
    panic!("scalar backend mismatch: {} vs {}", a.backend(), b.backend())
}

impl Add<&Scalar> for &Scalar {
    type Output = Scalar;
    fn add(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a + b),
            (Scalar::Float(a), Scalar::Float(b)) => {
                Scalar::from_float(a.re.add(&b.re), a.im.add(&b.im))
            }
            _ => mismatch(self, rhs),
        }
    }
}

impl Sub<&Scalar> for &Scalar {
    type Output = Scalar;
    fn sub(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a - b),
            (Scalar::Float(a), Scalar::Float(b)) => {
                Scalar::from_float(a.re.sub(&b.re), a.im.sub(&b.im))
            }
            _ => mismatch(self, rhs),
        }
    }
}

impl Mul<&Scalar> for &Scalar {
    type Output = Scalar;
    fn mul(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => {
                if a.im.is_zero() && b.im.is_zero() {
                    Scalar::Exact(Complex::new(&a.re * &b.re, q(0)))
                } else {
                    Scalar::Exact(a * b)
                }
            }
            (Scalar::Float(a), Scalar::Float(b)) => Scalar::Float(float_mul(a, b)),
            _ => mismatch(self, rhs),
        }
    }
}

impl Div<&Scalar> for &Scalar {
    type Output = Scalar;
    fn div(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => {
                assert!(!(b.re.is_zero() && b.im.is_zero()), "scalar division by zero");
                if b.im.is_zero() {
                    Scalar::Exact(Complex::new(&a.re / &b.re, &a.im / &b.re))
                } else {
                    Scalar::Exact(a / b)
                }
            }
            (Scalar::Float(a), Scalar::Float(b)) => Scalar::Float(float_div(a, b)),
            _ => mismatch(self, rhs),
        }
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Exact(a) => Scalar::Exact(-a.clone()),
            Scalar::Float(a) => Scalar::from_float(a.re.neg(), a.im.neg()),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (re, im) = self.to_strings();
        if self.is_real() {
            write!(f, "{re}")
        } else {
            write!(f, "({re}) + i({im})")
        }
    }
}

/// Exact rational helper used by callers building model constants.
pub fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl Scalar {
    /// Real part as an exact rational, if on the exact backend.
    pub fn as_rational(&self) -> Option<BigRational> {
        match self {
            Scalar::Exact(c) if c.im.is_zero() => Some(c.re.clone()),
            _ => None,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            Scalar::Exact(c) => c.re.is_one() && c.im.is_zero(),
            Scalar::Float(c) => c.im.is_zero() && c.re.to_rational().is_one(),
        }
    }
}
