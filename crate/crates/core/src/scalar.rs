//! Exact scalars of the form `a + b·√2` with rational `a`, `b`.
//!
//! Haar normalisations `2^((k-1)/2)` alternate between rationals and
//! rational multiples of `√2`, so every coefficient, integral and pairing
//! produced by the dyadic constructions stays inside this ring.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeTuple, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Builds the rational `num/den`.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Builds the integer `n` as a rational.
pub fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// `2^e` as a rational, for any integer exponent.
pub fn pow2(e: i64) -> BigRational {
    let p = BigInt::one() << e.unsigned_abs();
    if e >= 0 {
        BigRational::from_integer(p)
    } else {
        BigRational::new(BigInt::one(), p)
    }
}

/// Parses `"p/q"`, `"p"` or a plain decimal such as `"-0.125"`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("invalid rational `{s}`"));
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| bad())?;
        let q = BigInt::from_str(q.trim()).map_err(|_| bad())?;
        if q.is_zero() {
            return Err(Error::Parse(format!("zero denominator in `{s}`")));
        }
        return Ok(BigRational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let negative = int.starts_with('-');
        let int_digits = int.trim_start_matches(['-', '+']);
        if !frac.chars().all(|c| c.is_ascii_digit())
            || !int_digits.chars().all(|c| c.is_ascii_digit())
            || (int_digits.is_empty() && frac.is_empty())
        {
            return Err(bad());
        }
        let digits = format!("{int_digits}{frac}");
        let mantissa = BigInt::from_str(if digits.is_empty() { "0" } else { &digits })
            .map_err(|_| bad())?;
        let scale = num_traits::pow(BigInt::from(10), frac.len());
        let value = BigRational::new(mantissa, scale);
        return Ok(if negative { -value } else { value });
    }
    BigInt::from_str(s)
        .map(BigRational::from_integer)
        .map_err(|_| bad())
}

/// Canonical text form: `"p"` for integers, `"p/q"` otherwise.
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Converts an `f64` to the nearest rational on the grid `2^-bits`.
pub fn rational_from_f64(x: f64, bits: u32) -> BigRational {
    assert!(x.is_finite(), "cannot convert non-finite float {x}");
    let scaled = (x * (bits as f64).exp2()).round();
    let numer = BigRational::from_float(scaled)
        .map(|r| r.to_integer())
        .unwrap_or_else(BigInt::zero);
    BigRational::new(numer, BigInt::one() << bits)
}

/// Rational to float, robust for huge numerators and denominators.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if let Some(x) = r.to_f64() {
        if x.is_finite() {
            return x;
        }
    }
    let nb = r.numer().bits() as i64;
    let db = r.denom().bits() as i64;
    let shift = nb - db;
    let scaled = if shift > 0 {
        r / BigRational::from_integer(BigInt::one() << shift as u64)
    } else {
        r * BigRational::from_integer(BigInt::one() << (-shift) as u64)
    };
    scaled.to_f64().unwrap_or(0.0) * (shift as f64).exp2()
}

/// An exact element `a + b·√2` of the quadratic field `Q(√2)`.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct QuadRational {
    a: BigRational,
    b: BigRational,
}

impl QuadRational {
    pub fn new(a: BigRational, b: BigRational) -> Self {
        Self { a, b }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::from_rational(BigRational::one())
    }

    pub fn sqrt2() -> Self {
        Self::new(BigRational::zero(), BigRational::one())
    }

    pub fn from_rational(a: BigRational) -> Self {
        Self::new(a, BigRational::zero())
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rational(rat(n))
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_rational(ratio(num, den))
    }

    /// `(√2)^e`, i.e. `2^(e/2)`, for any integer `e`.
    pub fn sqrt2_pow(e: i64) -> Self {
        let half = e.div_euclid(2);
        if e.rem_euclid(2) == 0 {
            Self::from_rational(pow2(half))
        } else {
            Self::new(BigRational::zero(), pow2(half))
        }
    }

    /// Rational part `a`.
    pub fn rational_part(&self) -> &BigRational {
        &self.a
    }

    /// Coefficient `b` of `√2`.
    pub fn sqrt2_part(&self) -> &BigRational {
        &self.b
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    /// Exact sign as an ordering against zero.
    pub fn sign(&self) -> Ordering {
        let sa = self.a.cmp(&BigRational::zero());
        let sb = self.b.cmp(&BigRational::zero());
        match (sa, sb) {
            (Ordering::Equal, s) | (s, Ordering::Equal) => s,
            (x, y) if x == y => x,
            // opposite signs: compare a² with 2b²
            (sa, _) => {
                let a2 = &self.a * &self.a;
                let b2 = &self.b * &self.b * rat(2);
                match a2.cmp(&b2) {
                    Ordering::Greater => sa,
                    Ordering::Less => sa.reverse(),
                    Ordering::Equal => Ordering::Equal,
                }
            }
        }
    }

    pub fn is_positive(&self) -> bool {
        self.sign() == Ordering::Greater
    }

    pub fn is_negative(&self) -> bool {
        self.sign() == Ordering::Less
    }

    pub fn abs(&self) -> Self {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }

    /// Galois conjugate `a - b√2`.
    pub fn conj(&self) -> Self {
        Self::new(self.a.clone(), -&self.b)
    }

    /// Field norm `a² - 2b²`.
    pub fn field_norm(&self) -> BigRational {
        &self.a * &self.a - &self.b * &self.b * rat(2)
    }

    pub fn square(&self) -> Self {
        self * self
    }

    pub fn checked_recip(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        let n = self.field_norm();
        Some(Self::new(&self.a / &n, -&self.b / &n))
    }

    pub fn checked_div(&self, rhs: &Self) -> Option<Self> {
        rhs.checked_recip().map(|r| self * &r)
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Floating point value, avoiding cancellation when `a` and `b√2`
    /// nearly cancel.
    pub fn to_f64(&self) -> f64 {
        let a = rational_to_f64(&self.a);
        let b = rational_to_f64(&self.b) * std::f64::consts::SQRT_2;
        if self.a.is_zero() || self.b.is_zero() || (a >= 0.0) == (b >= 0.0) {
            return a + b;
        }
        let conj = a - b;
        if conj == 0.0 {
            return a + b;
        }
        rational_to_f64(&self.field_norm()) / conj
    }

    /// Non-negative square root as a float; used for display only.
    pub fn sqrt_f64(&self) -> f64 {
        self.to_f64().max(0.0).sqrt()
    }
}

impl fmt::Debug for QuadRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for QuadRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.a.is_zero(), self.b.is_zero()) {
            (_, true) => write!(f, "{}", format_rational(&self.a)),
            (true, false) => write!(f, "{}·√2", format_rational(&self.b)),
            (false, false) => {
                if self.b.is_negative() {
                    write!(f, "{} - {}·√2", format_rational(&self.a), format_rational(&-&self.b))
                } else {
                    write!(f, "{} + {}·√2", format_rational(&self.a), format_rational(&self.b))
                }
            }
        }
    }
}

impl PartialOrd for QuadRational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QuadRational {
    fn cmp(&self, other: &Self) -> Ordering {
        (self - other).sign()
    }
}

impl From<BigRational> for QuadRational {
    fn from(a: BigRational) -> Self {
        Self::from_rational(a)
    }
}

impl From<i64> for QuadRational {
    fn from(n: i64) -> Self {
        Self::from_int(n)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl<'a, 'b> $trait<&'b QuadRational> for &'a QuadRational {
            type Output = QuadRational;
            fn $method(self, rhs: &'b QuadRational) -> QuadRational {
                let f: fn(&QuadRational, &QuadRational) -> QuadRational = $body;
                f(self, rhs)
            }
        }
        impl<'a> $trait<QuadRational> for &'a QuadRational {
            type Output = QuadRational;
            fn $method(self, rhs: QuadRational) -> QuadRational {
                $trait::$method(self, &rhs)
            }
        }
        impl<'b> $trait<&'b QuadRational> for QuadRational {
            type Output = QuadRational;
            fn $method(self, rhs: &'b QuadRational) -> QuadRational {
                $trait::$method(&self, rhs)
            }
        }
        impl $trait<QuadRational> for QuadRational {
            type Output = QuadRational;
            fn $method(self, rhs: QuadRational) -> QuadRational {
                $trait::$method(&self, &rhs)
            }
        }
    };
}

forward_binop!(Add, add, |x, y| QuadRational::new(&x.a + &y.a, &x.b + &y.b));
forward_binop!(Sub, sub, |x, y| QuadRational::new(&x.a - &y.a, &x.b - &y.b));
forward_binop!(Mul, mul, |x, y| {
    if x.b.is_zero() && y.b.is_zero() {
        return QuadRational::from_rational(&x.a * &y.a);
    }
    QuadRational::new(
        &x.a * &y.a + &x.b * &y.b * rat(2),
        &x.a * &y.b + &x.b * &y.a,
    )
});
forward_binop!(Div, div, |x, y| x
    .checked_div(y)
    .expect("division of QuadRational by zero"));

impl Neg for QuadRational {
    type Output = QuadRational;
    fn neg(self) -> QuadRational {
        QuadRational::new(-self.a, -self.b)
    }
}

impl Neg for &QuadRational {
    type Output = QuadRational;
    fn neg(self) -> QuadRational {
        QuadRational::new(-&self.a, -&self.b)
    }
}

impl AddAssign<&QuadRational> for QuadRational {
    fn add_assign(&mut self, rhs: &QuadRational) {
        self.a += &rhs.a;
        self.b += &rhs.b;
    }
}

impl AddAssign for QuadRational {
    fn add_assign(&mut self, rhs: QuadRational) {
        self.a += rhs.a;
        self.b += rhs.b;
    }
}

impl SubAssign<&QuadRational> for QuadRational {
    fn sub_assign(&mut self, rhs: &QuadRational) {
        self.a -= &rhs.a;
        self.b -= &rhs.b;
    }
}

impl Sum for QuadRational {
    fn sum<I: Iterator<Item = QuadRational>>(iter: I) -> Self {
        iter.fold(QuadRational::zero(), |mut acc, x| {
            acc += x;
            acc
        })
    }
}

impl<'a> Sum<&'a QuadRational> for QuadRational {
    fn sum<I: Iterator<Item = &'a QuadRational>>(iter: I) -> Self {
        iter.fold(QuadRational::zero(), |mut acc, x| {
            acc += x;
            acc
        })
    }
}

impl FromStr for QuadRational {
    type Err = Error;

    /// Accepts a bare rational (`"3/4"`) or `"a,b"` meaning `a + b√2`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(',') {
            Some((a, b)) => Ok(Self::new(parse_rational(a)?, parse_rational(b)?)),
            None => Ok(Self::from_rational(parse_rational(s)?)),
        }
    }
}

/// Wire form: a pair `["a", "b"]` meaning `a + b√2`.
impl Serialize for QuadRational {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut t = serializer.serialize_tuple(2)?;
        t.serialize_element(&format_rational(&self.a))?;
        t.serialize_element(&format_rational(&self.b))?;
        t.end()
    }
}

impl<'de> Deserialize<'de> for QuadRational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct QrVisitor;

        impl<'de> Visitor<'de> for QrVisitor {
            type Value = QuadRational;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a pair of rationals [\"a\", \"b\"] or a rational string")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<QuadRational, E> {
                parse_rational(v)
                    .map(QuadRational::from_rational)
                    .map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<QuadRational, E> {
                Ok(QuadRational::from_int(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<QuadRational, E> {
                Ok(QuadRational::from_rational(BigRational::from_integer(v.into())))
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<QuadRational, A::Error> {
                let a: String = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let b: String = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                let a = parse_rational(&a).map_err(de::Error::custom)?;
                let b = parse_rational(&b).map_err(de::Error::custom)?;
                Ok(QuadRational::new(a, b))
            }
        }

        deserializer.deserialize_any(QrVisitor)
    }
}

/// Serde adapter for a single rational written as `"p/q"`.
pub mod rational_str {
    use super::*;

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(de::Error::custom)
    }
}

/// Serde adapter for a list of rationals written as `["p/q", ...]`.
pub mod rational_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[BigRational], s: S) -> std::result::Result<S::Ok, S::Error> {
        let strings: Vec<String> = v.iter().map(format_rational).collect();
        strings.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<BigRational>, D::Error> {
        let strings = Vec::<String>::deserialize(d)?;
        strings
            .iter()
            .map(|s| parse_rational(s).map_err(de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(a: (i64, i64), b: (i64, i64)) -> QuadRational {
        QuadRational::new(ratio(a.0, a.1), ratio(b.0, b.1))
    }

    #[test]
    fn sqrt2_squares_to_two() {
        assert_eq!(QuadRational::sqrt2().square(), QuadRational::from_int(2));
        assert_eq!(QuadRational::sqrt2_pow(3), q((0, 1), (2, 1)));
        assert_eq!(QuadRational::sqrt2_pow(-1), q((0, 1), (1, 2)));
        assert_eq!(QuadRational::sqrt2_pow(-2), QuadRational::from_ratio(1, 2));
    }

    #[test]
    fn sign_handles_near_cancellation() {
        // convergents of √2 from above (99/70) and below (140/99)
        assert!(q((99, 70), (-1, 1)).is_positive());
        assert!(q((140, 99), (-1, 1)).is_negative());
        assert!(q((-3, 1), (2, 1)).is_negative());
        assert!(q((3, 1), (-2, 1)).is_positive());
        assert_eq!(QuadRational::zero().sign(), Ordering::Equal);
    }

    #[test]
    fn division_uses_conjugate() {
        let x = q((1, 1), (1, 1));
        let y = x.checked_recip().unwrap();
        assert_eq!(&x * &y, QuadRational::one());
        assert_eq!(y, q((-1, 1), (1, 1)));
        assert!(QuadRational::zero().checked_recip().is_none());
    }

    #[test]
    fn float_value_of_nearly_cancelling_element() {
        let x = q((577, 408), (-1, 1));
        let expect = 577.0 / 408.0 - std::f64::consts::SQRT_2;
        assert!((x.to_f64() - expect).abs() < 1e-15);
        assert!(x.to_f64() > 0.0);
    }

    #[test]
    fn parses_and_formats_rationals() {
        assert_eq!(parse_rational("3/6").unwrap(), ratio(1, 2));
        assert_eq!(parse_rational("-0.125").unwrap(), ratio(-1, 8));
        assert_eq!(parse_rational("7").unwrap(), rat(7));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert_eq!(format_rational(&ratio(-2, 4)), "-1/2");
        assert_eq!(format_rational(&rat(5)), "5");
    }

    #[test]
    fn json_pair_round_trip() {
        let x = q((-3, 7), (5, 2));
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, r#"["-3/7","5/2"]"#);
        let back: QuadRational = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
    }

    fn arb_q() -> impl Strategy<Value = QuadRational> {
        (-50i64..50, 1i64..20, -50i64..50, 1i64..20)
            .prop_map(|(a, b, c, d)| QuadRational::new(ratio(a, b), ratio(c, d)))
    }

    proptest! {
        #[test]
        fn add_sub_round_trip(x in arb_q(), y in arb_q()) {
            prop_assert_eq!(&(&x + &y) - &y, x);
        }

        #[test]
        fn mul_div_round_trip(x in arb_q(), y in arb_q()) {
            prop_assume!(!y.is_zero());
            prop_assert_eq!(&(&x * &y) / &y, x);
        }

        #[test]
        fn order_agrees_with_floats(x in arb_q(), y in arb_q()) {
            let (fx, fy) = (x.to_f64(), y.to_f64());
            if (fx - fy).abs() > 1e-9 {
                prop_assert_eq!(x.cmp(&y), fx.partial_cmp(&fy).unwrap());
            }
        }

        #[test]
        fn squares_are_nonnegative(x in arb_q()) {
            prop_assert!(x.square().sign() != Ordering::Less);
        }
    }
}
