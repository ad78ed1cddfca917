//! Exact scalar arithmetic: arbitrary-precision rationals, real quadratic
//! field elements `a + b√d`, and plain floats with explicit demotion.
//!
//! The scalar field carries contraction ratios, translations and measure
//! atoms. Exact variants support canonical hashing keys (key equality iff
//! value equality) and certified conversion to `f64` with an error bound of
//! at most a few ulps, so that dyadic binning can be performed exactly.

use std::cmp::Ordering;
use std::fmt;

use num::bigint::{BigInt, Sign};
use num::integer::Integer;
use num::{BigRational, BigUint, One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which exact field a scalar (or a whole measure) lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    Rational,
    /// `Q(√d)` with `d ≥ 2` square-free.
    Quadratic(u64),
    Float,
}

impl Field {
    /// Smallest common field of two operands. Mixing exact with float
    /// demotes to float; distinct quadratic fields do not combine.
    pub fn join(self, other: Field) -> Result<Field> {
        use Field::*;
        match (self, other) {
            (Float, _) | (_, Float) => Ok(Float),
            (Rational, f) | (f, Rational) => Ok(f),
            (Quadratic(d1), Quadratic(d2)) => {
                if d1 == d2 {
                    Ok(Quadratic(d1))
                } else {
                    Err(Error::FieldMismatch(d1, d2))
                }
            }
        }
    }

    pub fn is_exact(self) -> bool {
        !matches!(self, Field::Float)
    }
}

/// A scalar value: exact rational, exact `a + b√d`, or 64-bit float.
///
/// Invariants: rationals are stored in lowest terms with positive
/// denominator (guaranteed by `num::BigRational`); quadratic values have
/// `b ≠ 0` and `d ≥ 2` square-free (a vanishing irrational part collapses
/// to the `Rational` variant at construction).
#[derive(Clone, Debug, PartialEq)]
pub enum Scalar {
    Rational(BigRational),
    Quadratic {
        a: BigRational,
        b: BigRational,
        d: u64,
    },
    Float(f64),
}

impl Scalar {
    pub fn zero() -> Scalar {
        Scalar::Rational(BigRational::zero())
    }

    pub fn one() -> Scalar {
        Scalar::Rational(BigRational::one())
    }

    pub fn from_int(n: i64) -> Scalar {
        Scalar::Rational(BigRational::from_integer(BigInt::from(n)))
    }

    /// Exact rational `num/den`; `den` must be nonzero.
    pub fn rational(num: i64, den: i64) -> Scalar {
        assert!(den != 0, "zero denominator");
        Scalar::Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_big_rational(r: BigRational) -> Scalar {
        Scalar::Rational(r)
    }

    /// `a + b√d`. Requires `d ≥ 2` square-free; collapses to rational when
    /// `b = 0`.
    pub fn quadratic(a: BigRational, b: BigRational, d: u64) -> Result<Scalar> {
        if !is_square_free(d) {
            return Err(Error::InvalidScalar(format!(
                "d = {d} must be a square-free integer ≥ 2"
            )));
        }
        Ok(Self::quadratic_unchecked(a, b, d))
    }

    fn quadratic_unchecked(a: BigRational, b: BigRational, d: u64) -> Scalar {
        if b.is_zero() {
            Scalar::Rational(a)
        } else {
            Scalar::Quadratic { a, b, d }
        }
    }

    pub fn float(v: f64) -> Result<Scalar> {
        if v.is_finite() {
            Ok(Scalar::Float(v))
        } else {
            Err(Error::InvalidScalar(format!("non-finite float {v}")))
        }
    }

    pub fn field(&self) -> Field {
        match self {
            Scalar::Rational(_) => Field::Rational,
            Scalar::Quadratic { d, .. } => Field::Quadratic(*d),
            Scalar::Float(_) => Field::Float,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.field().is_exact()
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Rational(r) => r.is_zero(),
            Scalar::Quadratic { .. } => false, // b ≠ 0 and √d irrational
            Scalar::Float(v) => *v == 0.0,
        }
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Scalar::Rational(r) => Some(r),
            _ => None,
        }
    }

    fn demote(&self) -> f64 {
        self.to_float().0
    }

    pub fn try_add(&self, other: &Scalar) -> Result<Scalar> {
        use Scalar::*;
        Ok(match (self, other) {
            (Float(x), y) => Float(x + y.demote()),
            (x, Float(y)) => Float(x.demote() + y),
            (Rational(x), Rational(y)) => Rational(x + y),
            (Rational(x), Quadratic { a, b, d }) | (Quadratic { a, b, d }, Rational(x)) => {
                Scalar::quadratic_unchecked(a + x, b.clone(), *d)
            }
            (Quadratic { a: a1, b: b1, d: d1 }, Quadratic { a: a2, b: b2, d: d2 }) => {
                if d1 != d2 {
                    return Err(Error::FieldMismatch(*d1, *d2));
                }
                Scalar::quadratic_unchecked(a1 + a2, b1 + b2, *d1)
            }
        })
    }

    pub fn neg(&self) -> Scalar {
        use Scalar::*;
        match self {
            Rational(x) => Rational(-x),
            Quadratic { a, b, d } => Quadratic {
                a: -a,
                b: -b,
                d: *d,
            },
            Float(x) => Float(-x),
        }
    }

    pub fn try_sub(&self, other: &Scalar) -> Result<Scalar> {
        self.try_add(&other.neg())
    }

    pub fn try_mul(&self, other: &Scalar) -> Result<Scalar> {
        use Scalar::*;
        Ok(match (self, other) {
            (Float(x), y) => Float(x * y.demote()),
            (x, Float(y)) => Float(x.demote() * y),
            (Rational(x), Rational(y)) => Rational(x * y),
            (Rational(x), Quadratic { a, b, d }) | (Quadratic { a, b, d }, Rational(x)) => {
                Scalar::quadratic_unchecked(a * x, b * x, *d)
            }
            (Quadratic { a: a1, b: b1, d: d1 }, Quadratic { a: a2, b: b2, d: d2 }) => {
                if d1 != d2 {
                    return Err(Error::FieldMismatch(*d1, *d2));
                }
                let d_rat = BigRational::from_integer(BigInt::from(*d1));
                Scalar::quadratic_unchecked(
                    a1 * a2 + b1 * b2 * &d_rat,
                    a1 * b2 + a2 * b1,
                    *d1,
                )
            }
        })
    }

    /// Exact multiplicative inverse of a nonzero exact scalar.
    /// `(a + b√d)^{-1} = (a − b√d) / (a² − b²d)`.
    pub(crate) fn recip_exact(&self) -> Result<Scalar> {
        match self {
            Scalar::Rational(r) => {
                if r.is_zero() {
                    Err(Error::Domain("reciprocal of zero".into()))
                } else {
                    Ok(Scalar::Rational(r.recip()))
                }
            }
            Scalar::Quadratic { a, b, d } => {
                let d_rat = BigRational::from_integer(BigInt::from(*d));
                let norm = a * a - b * b * &d_rat; // nonzero: √d irrational
                Ok(Scalar::quadratic_unchecked(a / &norm, -(b / &norm), *d))
            }
            Scalar::Float(v) => {
                if *v == 0.0 {
                    Err(Error::Domain("reciprocal of zero".into()))
                } else {
                    Ok(Scalar::Float(1.0 / v))
                }
            }
        }
    }

    /// Exact sign: `1`, `0` or `-1`. The sign of `a + b√d` is decided by
    /// rationalizing (comparing `a²` against `b²d`), never by floats.
    pub fn sign(&self) -> i8 {
        match self {
            Scalar::Rational(r) => match r.numer().sign() {
                Sign::Plus => 1,
                Sign::NoSign => 0,
                Sign::Minus => -1,
            },
            Scalar::Quadratic { a, b, d } => {
                let sa = sign_rat(a);
                let sb = sign_rat(b);
                debug_assert!(sb != 0);
                if sa == 0 {
                    return sb;
                }
                if sa == sb {
                    return sa;
                }
                // Opposite signs: |a| vs |b|√d ⇔ a² vs b²d.
                let d_rat = BigRational::from_integer(BigInt::from(*d));
                let lhs = a * a;
                let rhs = b * b * &d_rat;
                match lhs.cmp(&rhs) {
                    Ordering::Greater => sa,
                    Ordering::Less => sb,
                    // a² = b²d with b ≠ 0 would make √d rational.
                    Ordering::Equal => unreachable!("√d rational for square-free d ≥ 2"),
                }
            }
            Scalar::Float(v) => {
                if *v > 0.0 {
                    1
                } else if *v < 0.0 {
                    -1
                } else {
                    0
                }
            }
        }
    }

    /// Total comparison. Exact between exact scalars of a common field
    /// (rationals promote into `Q(√d)`); falls back to float comparison as
    /// soon as a float is involved. Errors only on mismatched quadratic
    /// fields.
    pub fn cmp_numeric(&self, other: &Scalar) -> Result<Ordering> {
        if matches!(self, Scalar::Float(_)) || matches!(other, Scalar::Float(_)) {
            return Ok(self.demote().total_cmp(&other.demote()));
        }
        let diff = self.try_sub(other)?;
        Ok(match diff.sign() {
            1 => Ordering::Greater,
            -1 => Ordering::Less,
            _ => Ordering::Equal,
        })
    }

    /// Exact absolute value.
    pub fn abs(&self) -> Scalar {
        if self.sign() < 0 {
            self.neg()
        } else {
            self.clone()
        }
    }

    /// Canonical byte key for an exact scalar: keys are equal iff the values
    /// are equal, and stable across runs. Floats are refused.
    pub fn canonical_key(&self) -> Result<Vec<u8>> {
        match self {
            Scalar::Rational(r) => {
                let mut k = b"r:".to_vec();
                k.extend_from_slice(r.numer().to_str_radix(10).as_bytes());
                k.push(b'/');
                k.extend_from_slice(r.denom().to_str_radix(10).as_bytes());
                Ok(k)
            }
            Scalar::Quadratic { a, b, d } => {
                let mut k = b"q:".to_vec();
                k.extend_from_slice(&Scalar::Rational(a.clone()).canonical_key()?);
                k.push(b';');
                k.extend_from_slice(&Scalar::Rational(b.clone()).canonical_key()?);
                k.push(b';');
                k.extend_from_slice(d.to_string().as_bytes());
                Ok(k)
            }
            Scalar::Float(_) => Err(Error::NotCanonicalizable),
        }
    }

    /// Convert to `f64` with a certified error bound: `|value − self| ≤
    /// error_bound`, and for exact scalars `error_bound ≤ 4` ulps of the
    /// result (0 when the conversion is exact).
    pub fn to_float(&self) -> (f64, f64) {
        match self {
            Scalar::Float(v) => (*v, 0.0),
            Scalar::Rational(r) => {
                let (v, exact) = ratio_to_f64(r);
                let bound = if exact { 0.0 } else { 0.5 * ulp(v) };
                (v, bound)
            }
            Scalar::Quadratic { a, b, d } => quadratic_to_f64(a, b, *d),
        }
    }

    /// Exact floor of an exact scalar.
    pub fn floor_exact(&self) -> Result<BigInt> {
        match self {
            Scalar::Rational(r) => Ok(r.floor().to_integer()),
            Scalar::Quadratic { .. } => {
                let (v, _) = self.to_float();
                let mut k = BigInt::from(v.floor() as i64);
                // Certify k ≤ x < k+1 exactly, adjusting for the float error.
                loop {
                    let kx = Scalar::Rational(BigRational::from_integer(k.clone()));
                    if self.cmp_numeric(&kx)? == Ordering::Less {
                        k -= 1;
                        continue;
                    }
                    let kx1 = Scalar::Rational(BigRational::from_integer(&k + 1));
                    if self.cmp_numeric(&kx1)? != Ordering::Less {
                        k += 1;
                        continue;
                    }
                    return Ok(k);
                }
            }
            Scalar::Float(_) => Err(Error::Domain(
                "exact floor of a float scalar is undefined".into(),
            )),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Rational(r) => write!(f, "{r}"),
            Scalar::Quadratic { a, b, d } => write!(f, "{a}+({b})√{d}"),
            Scalar::Float(v) => write!(f, "{v}"),
        }
    }
}

fn sign_rat(r: &BigRational) -> i8 {
    match r.numer().sign() {
        Sign::Plus => 1,
        Sign::NoSign => 0,
        Sign::Minus => -1,
    }
}

fn is_square_free(d: u64) -> bool {
    if d < 2 {
        return false;
    }
    let mut n = d;
    let mut p = 2u64;
    while p.saturating_mul(p) <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return false;
            }
        }
        p += 1;
    }
    true
}

/// Unit in the last place of `v` (smallest for zero/subnormal inputs).
fn ulp(v: f64) -> f64 {
    let a = v.abs();
    if !a.is_finite() {
        return f64::INFINITY;
    }
    let next = f64::from_bits(a.to_bits() + 1);
    next - a
}

/// Correctly rounded (round-to-nearest-even) conversion of a big rational to
/// `f64`. Returns the value and whether it is exact.
pub fn ratio_to_f64(r: &BigRational) -> (f64, bool) {
    let num = r.numer();
    let den = r.denom();
    if num.is_zero() {
        return (0.0, true);
    }
    let negative = num.sign() == Sign::Minus;
    let a: BigUint = num.magnitude().clone();
    let b: BigUint = den.magnitude().clone();
    let e = a.bits() as i64 - b.bits() as i64;
    // Shift so the integer quotient carries 54–56 significant bits.
    let s = 55 - e;
    let (q, rem) = if s >= 0 {
        (&a << s as u64).div_rem(&b)
    } else {
        a.div_rem(&(&b << (-s) as u64))
    };
    let qbits = q.bits() as i64;
    debug_assert!(qbits >= 54);
    let extra = (qbits - 53) as u64;
    let mut mant = num::ToPrimitive::to_u64(&(&q >> extra)).expect("53-bit mantissa");
    let round_bit = q.bit(extra - 1);
    let sticky = !rem.is_zero()
        || (extra >= 2 && {
            let mask = (BigUint::one() << (extra - 1)) - 1u32;
            !(&q & &mask).is_zero()
        });
    let mut exp2 = extra as i64 - s;
    let exact = !round_bit && !sticky;
    if round_bit && (sticky || mant & 1 == 1) {
        mant += 1;
        if mant == 1u64 << 53 {
            mant >>= 1;
            exp2 += 1;
        }
    }
    let v = compose_f64(mant, exp2);
    (if negative { -v } else { v }, exact)
}

/// `mant · 2^exp2` for `mant < 2^53`; exact in the normal range.
fn compose_f64(mant: u64, exp2: i64) -> f64 {
    let m = mant as f64;
    if exp2 >= 0 {
        if exp2 > 1023 {
            return f64::INFINITY;
        }
        m * pow2(exp2 as i32)
    } else {
        if exp2 < -1200 {
            return 0.0;
        }
        // Split the shift to stay clear of intermediate underflow.
        if exp2 < -1000 {
            m * pow2(-1000) * pow2((exp2 + 1000) as i32)
        } else {
            m * pow2(exp2 as i32)
        }
    }
}

fn pow2(e: i32) -> f64 {
    2.0f64.powi(e)
}

/// `a + b√d` (b ≠ 0) to f64 with certified bound ≤ 1 ulp: the irrational
/// part is bracketed by integer square roots at increasing precision until
/// the bracket is below a quarter ulp of the rounded midpoint.
fn quadratic_to_f64(a: &BigRational, b: &BigRational, d: u64) -> (f64, f64) {
    let mut k: u64 = 64;
    loop {
        // r = floor(√(d·4^k)) / 2^k satisfies r ≤ √d < r + 2^{-k}.
        let root = num::integer::sqrt(BigUint::from(d) << (2 * k));
        let r = BigRational::new(
            BigInt::from_biguint(Sign::Plus, root),
            BigInt::from(BigUint::one() << k),
        );
        let half_step = BigRational::new(BigInt::one(), BigInt::from(BigUint::one() << (k + 1)));
        // Midpoint of the enclosure [a + b·r, a + b·(r + 2^{-k})] (order
        // depends on the sign of b); half-width is |b|·2^{-k-1}.
        let mid = a + b * (&r + &half_step);
        let half_width = b.abs() * &half_step;
        let (v, exact) = ratio_to_f64(&mid);
        let u = ulp(v);
        // Accept once half-width ≤ ulp/4 (total error ≤ 0.75 ulp).
        let quarter_ulp = f64_to_ratio(u) / BigRational::from_integer(BigInt::from(4));
        if v != 0.0 && half_width <= quarter_ulp {
            let bound = if exact && half_width.is_zero() {
                0.0
            } else {
                u
            };
            return (v, bound);
        }
        k *= 2;
        assert!(k <= 1 << 20, "quadratic_to_f64 failed to converge");
    }
}

/// Exact rational value of a finite f64.
pub fn f64_to_ratio(v: f64) -> BigRational {
    assert!(v.is_finite());
    if v == 0.0 {
        return BigRational::zero();
    }
    let bits = v.to_bits();
    let sign = if v.is_sign_negative() { -1 } else { 1 };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e) = if exp == 0 {
        (frac, -1074i64)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    };
    let m = BigInt::from(mant) * sign;
    if e >= 0 {
        BigRational::from_integer(m << e as u64)
    } else {
        BigRational::new(m, BigInt::one() << (-e) as u64)
    }
}

/// Parse a scalar from a compact literal: an integer (`-3`), a fraction
/// (`2/3`), a decimal (`0.75`, read exactly), the keyword `golden` for the
/// golden contraction `(√5−1)/2`, or `sqrt<d>` / `a+b*sqrt<d>` for quadratic
/// values with rational `a`, `b`.
pub fn parse_scalar(s: &str) -> Result<Scalar> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("golden") {
        return golden_contraction();
    }
    if let Some(rest) = s.strip_prefix("sqrt") {
        let d: u64 = rest
            .parse()
            .map_err(|_| Error::InvalidScalar(format!("bad sqrt literal: {s}")))?;
        return Scalar::quadratic(BigRational::zero(), BigRational::one(), d);
    }
    if let Some((lhs, rhs)) = s.split_once("*sqrt") {
        // a+b*sqrtd
        let (a_str, b_str) = match lhs.rsplit_once('+') {
            Some((a, b)) => (a, b),
            None => ("0", lhs),
        };
        let a = parse_rational(a_str)?;
        let b = parse_rational(b_str)?;
        let d: u64 = rhs
            .parse()
            .map_err(|_| Error::InvalidScalar(format!("bad sqrt literal: {s}")))?;
        return Scalar::quadratic(a, b, d);
    }
    Ok(Scalar::Rational(parse_rational(s)?))
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let num: BigInt = n
            .trim()
            .parse()
            .map_err(|_| Error::InvalidScalar(format!("bad numerator: {s}")))?;
        let den: BigInt = d
            .trim()
            .parse()
            .map_err(|_| Error::InvalidScalar(format!("bad denominator: {s}")))?;
        if den.is_zero() {
            return Err(Error::InvalidScalar("zero denominator".into()));
        }
        return Ok(BigRational::new(num, den));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let digits = frac_part.len() as u32;
        let combined = format!("{int_part}{frac_part}");
        let num: BigInt = combined
            .parse()
            .map_err(|_| Error::InvalidScalar(format!("bad decimal: {s}")))?;
        let den = BigInt::from(10u32).pow(digits);
        return Ok(BigRational::new(num, den));
    }
    let n: BigInt = s
        .parse()
        .map_err(|_| Error::InvalidScalar(format!("bad rational: {s}")))?;
    Ok(BigRational::from_integer(n))
}

/// The golden contraction ratio `λ = (√5 − 1)/2`, the flagship algebraic
/// parameter with exact overlaps (`λ² + λ = 1`).
pub fn golden_contraction() -> Result<Scalar> {
    Scalar::quadratic(
        BigRational::new(BigInt::from(-1), BigInt::from(2)),
        BigRational::new(BigInt::from(1), BigInt::from(2)),
        5,
    )
}

// ---------------------------------------------------------------------------
// JSON encoding: integers as decimal strings to avoid 53-bit truncation.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum ScalarRepr {
    Rational { num: String, den: String },
    Quadratic { a: Box<ScalarRepr>, b: Box<ScalarRepr>, d: u64 },
    Float { value: f64 },
}

impl Serialize for Scalar {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        scalar_to_repr(self).serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = ScalarRepr::deserialize(de)?;
        repr_to_scalar(&repr).map_err(serde::de::Error::custom)
    }
}

fn scalar_to_repr(s: &Scalar) -> ScalarRepr {
    match s {
        Scalar::Rational(r) => ScalarRepr::Rational {
            num: r.numer().to_str_radix(10),
            den: r.denom().to_str_radix(10),
        },
        Scalar::Quadratic { a, b, d } => ScalarRepr::Quadratic {
            a: Box::new(scalar_to_repr(&Scalar::Rational(a.clone()))),
            b: Box::new(scalar_to_repr(&Scalar::Rational(b.clone()))),
            d: *d,
        },
        Scalar::Float(v) => ScalarRepr::Float { value: *v },
    }
}

fn repr_to_scalar(r: &ScalarRepr) -> Result<Scalar> {
    match r {
        ScalarRepr::Rational { num, den } => {
            let n: BigInt = num
                .parse()
                .map_err(|_| Error::InvalidScalar(format!("bad integer string: {num}")))?;
            let d: BigInt = den
                .parse()
                .map_err(|_| Error::InvalidScalar(format!("bad integer string: {den}")))?;
            if d.is_zero() {
                return Err(Error::InvalidScalar("zero denominator".into()));
            }
            Ok(Scalar::Rational(BigRational::new(n, d)))
        }
        ScalarRepr::Quadratic { a, b, d } => {
            let a = match repr_to_scalar(a)? {
                Scalar::Rational(r) => r,
                _ => return Err(Error::InvalidScalar("quadratic part a must be rational".into())),
            };
            let b = match repr_to_scalar(b)? {
                Scalar::Rational(r) => r,
                _ => return Err(Error::InvalidScalar("quadratic part b must be rational".into())),
            };
            Scalar::quadratic(a, b, *d)
        }
        ScalarRepr::Float { value } => Scalar::float(*value),
    }
}

/// Exact rational for small integers, used pervasively by callers.
pub fn big_rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn golden() -> Scalar {
        golden_contraction().unwrap()
    }

    #[test]
    fn rational_add_reduces() {
        let a = Scalar::rational(1, 3);
        let b = Scalar::rational(1, 6);
        let s = a.try_add(&b).unwrap();
        assert_eq!(s, Scalar::rational(1, 2));
    }

    #[test]
    fn golden_satisfies_minimal_polynomial() {
        // λ² + λ = 1 exactly.
        let l = golden();
        let l2 = l.try_mul(&l).unwrap();
        let s = l2.try_add(&l).unwrap();
        assert_eq!(s, Scalar::one());
    }

    #[test]
    fn sign_by_rationalization() {
        // 3/2 − √2 > 0 because (3/2)² = 9/4 > 2.
        let x = Scalar::quadratic(big_rat(3, 2), big_rat(-1, 1), 2).unwrap();
        assert_eq!(x.sign(), 1);
        // 7/5 − √2 < 0 because 49/25 < 2.
        let y = Scalar::quadratic(big_rat(7, 5), big_rat(-1, 1), 2).unwrap();
        assert_eq!(y.sign(), -1);
    }

    #[test]
    fn canonical_key_reduction_and_degeneracy() {
        let k1 = Scalar::rational(2, 4).canonical_key().unwrap();
        let k2 = Scalar::rational(1, 2).canonical_key().unwrap();
        assert_eq!(k1, k2);
        // b = 0 collapses to the rational variant.
        let q = Scalar::quadratic(big_rat(1, 1), big_rat(0, 1), 5).unwrap();
        assert_eq!(
            q.canonical_key().unwrap(),
            Scalar::one().canonical_key().unwrap()
        );
        // λ + λ² = 1 for the golden ratio: engineered collision.
        let l = golden();
        let sum = l.try_add(&l.try_mul(&l).unwrap()).unwrap();
        assert_eq!(
            sum.canonical_key().unwrap(),
            Scalar::one().canonical_key().unwrap()
        );
        assert!(Scalar::Float(0.5).canonical_key().is_err());
    }

    #[test]
    fn key_inequality_for_distinct_values() {
        let l = golden();
        let l2 = l.try_mul(&l).unwrap();
        assert_ne!(
            l.canonical_key().unwrap(),
            l2.canonical_key().unwrap()
        );
    }

    #[test]
    fn to_float_simple_values() {
        let (v, e) = Scalar::rational(1, 3).to_float();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert!(e > 0.0 && e <= 4.0 * ulp(v));
        let (v1, e1) = Scalar::one().to_float();
        assert_eq!(v1, 1.0);
        assert_eq!(e1, 0.0);
        let (g, eg) = golden().to_float();
        assert!((g - 0.6180339887498949).abs() < 1e-15);
        assert!(eg <= 4.0 * ulp(g));
    }

    #[test]
    fn to_float_certified_on_random_rationals() {
        // |value − exact| ≤ error_bound, checked in exact arithmetic,
        // for rationals with denominators up to 2^40.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..1000 {
            let num = (next() % (1u64 << 40)) as i64 - (1i64 << 39);
            let den = (next() % (1u64 << 40)) as i64 + 1;
            let r = BigRational::new(BigInt::from(num), BigInt::from(den));
            let (v, bound) = Scalar::Rational(r.clone()).to_float();
            let diff = (f64_to_ratio(v) - &r).abs();
            assert!(
                diff <= f64_to_ratio(bound),
                "certified bound violated for {num}/{den}"
            );
            assert!(bound <= 4.0 * ulp(v));
        }
    }

    #[test]
    fn to_float_quadratic_cancellation() {
        // 682 − 305·√5 ≈ −7.3e-4: catastrophic cancellation must still
        // honor the ulp-scale bound.
        let x = Scalar::quadratic(big_rat(682, 1), big_rat(-305, 1), 5).unwrap();
        let (v, bound) = x.to_float();
        assert!(v < 0.0 && v > -1e-3);
        assert!(bound <= 4.0 * ulp(v));
        // Verify the enclosure exactly: |v − x| ≤ bound means
        // v − bound ≤ x ≤ v + bound, decidable by exact sign tests.
        let lo = Scalar::Rational(f64_to_ratio(v) - f64_to_ratio(bound));
        let hi = Scalar::Rational(f64_to_ratio(v) + f64_to_ratio(bound));
        assert_eq!(x.cmp_numeric(&lo).unwrap(), Ordering::Greater);
        assert_eq!(x.cmp_numeric(&hi).unwrap(), Ordering::Less);
    }

    #[test]
    fn floor_exact_quadratic() {
        let l = golden(); // 0.618...
        assert_eq!(l.floor_exact().unwrap(), BigInt::from(0));
        let phi = Scalar::quadratic(big_rat(1, 2), big_rat(1, 2), 5).unwrap(); // 1.618...
        assert_eq!(phi.floor_exact().unwrap(), BigInt::from(1));
        let neg = l.neg(); // -0.618...
        assert_eq!(neg.floor_exact().unwrap(), BigInt::from(-1));
    }

    #[test]
    fn mixed_field_errors_and_demotion() {
        let r2 = Scalar::quadratic(big_rat(0, 1), big_rat(1, 1), 2).unwrap();
        let r5 = golden();
        assert!(matches!(
            r2.try_add(&r5),
            Err(Error::FieldMismatch(2, 5))
        ));
        let f = Scalar::Float(0.5);
        let sum = f.try_add(&Scalar::rational(1, 2)).unwrap();
        assert!(matches!(sum, Scalar::Float(v) if v == 1.0));
    }

    #[test]
    fn json_round_trip_matches_schema() {
        let s = Scalar::rational(-3, 7);
        let js = serde_json::to_value(&s).unwrap();
        assert_eq!(
            js,
            serde_json::json!({"type":"rational","num":"-3","den":"7"})
        );
        let back: Scalar = serde_json::from_value(js).unwrap();
        assert_eq!(back, s);

        let g = golden();
        let jg = serde_json::to_value(&g).unwrap();
        assert_eq!(jg["type"], "quadratic");
        assert_eq!(jg["d"], 5);
        let back: Scalar = serde_json::from_value(jg).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn parse_scalar_literals() {
        assert_eq!(parse_scalar("2/3").unwrap(), Scalar::rational(2, 3));
        assert_eq!(parse_scalar("0.75").unwrap(), Scalar::rational(3, 4));
        assert_eq!(parse_scalar("golden").unwrap(), golden());
        let s = parse_scalar("1/2+1/2*sqrt5").unwrap();
        assert_eq!(
            s,
            Scalar::quadratic(big_rat(1, 2), big_rat(1, 2), 5).unwrap()
        );
    }

    proptest! {
        #[test]
        fn field_laws_commutative_associative(
            an in -50i64..50, ad in 1i64..20,
            bn in -50i64..50, bd in 1i64..20,
            cn in -50i64..50, cd in 1i64..20,
            qa in -5i64..5, qb in -5i64..5,
        ) {
            let mk = |n, d, ba: i64, bb: i64| {
                Scalar::quadratic(big_rat(n, d) + big_rat(ba, 1), big_rat(bb, 1), 5).unwrap()
            };
            let a = mk(an, ad, 0, qa);
            let b = mk(bn, bd, qa, qb);
            let c = mk(cn, cd, qb, 1);
            // Commutativity.
            prop_assert_eq!(a.try_add(&b).unwrap(), b.try_add(&a).unwrap());
            prop_assert_eq!(a.try_mul(&b).unwrap(), b.try_mul(&a).unwrap());
            // Associativity.
            let ab_c = a.try_add(&b).unwrap().try_add(&c).unwrap();
            let a_bc = a.try_add(&b.try_add(&c).unwrap()).unwrap();
            prop_assert_eq!(ab_c, a_bc);
            let m1 = a.try_mul(&b).unwrap().try_mul(&c).unwrap();
            let m2 = a.try_mul(&b.try_mul(&c).unwrap()).unwrap();
            prop_assert_eq!(m1, m2);
        }

        #[test]
        fn canonical_key_iff_equal(
            an in -20i64..20, ad in 1i64..10,
            bn in -20i64..20, bd in 1i64..10,
        ) {
            let a = Scalar::rational(an, ad);
            let b = Scalar::rational(bn, bd);
            let equal_keys = a.canonical_key().unwrap() == b.canonical_key().unwrap();
            let equal_values = a.try_sub(&b).unwrap().is_zero();
            prop_assert_eq!(equal_keys, equal_values);
        }
    }
}
