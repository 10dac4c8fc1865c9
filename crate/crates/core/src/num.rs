//! Exact rational arithmetic helpers.
//!
//! All authoritative geometry in this crate is computed over `BigRational`.
//! Square roots never appear as values: lengths are carried as squared
//! rationals and compared through the sign-guarded helpers below. The few
//! thresholds that are genuinely irrational (multiples of powers of sqrt(5),
//! unit-ball volumes involving pi) are decided through certified interval
//! refinement, which terminates because the compared quantities are rational
//! and the thresholds are not.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;

pub type Rat = BigRational;

/// `n / d` as an exact rational. Panics if `d == 0`.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Integer `n` as an exact rational.
pub fn rint(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// `i / 2^k` as an exact rational.
pub fn dyadic(i: i64, k: u32) -> Rat {
    Rat::new(BigInt::from(i), BigInt::one() << k)
}

/// Parses `p`, `p/q`, or a decimal like `-3.25` into an exact rational.
pub fn parse_rat(s: &str) -> Result<Rat, String> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| format!("bad rational numerator in {s:?}"))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| format!("bad rational denominator in {s:?}"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in {s:?}"));
        }
        Ok(Rat::new(n, d))
    } else if let Some((int, frac)) = s.split_once('.') {
        let neg = int.trim_start().starts_with('-');
        let i: BigInt = if int.is_empty() || int == "-" {
            BigInt::zero()
        } else {
            int.parse().map_err(|_| format!("bad decimal in {s:?}"))?
        };
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("bad decimal fraction in {s:?}"));
        }
        let f: BigInt = frac.parse().map_err(|_| format!("bad decimal in {s:?}"))?;
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let mag = Rat::new(i.abs() * &scale + f, scale);
        Ok(if neg { -mag } else { mag })
    } else {
        let n: BigInt = s.parse().map_err(|_| format!("bad integer in {s:?}"))?;
        Ok(Rat::from_integer(n))
    }
}

/// Formats a rational as `p/q` with the denominator always present.
pub fn rat_to_string(r: &Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Floor of a rational as a `BigInt`.
pub fn rat_floor(r: &Rat) -> BigInt {
    num_integer::Integer::div_floor(r.numer(), r.denom())
}

/// Ceiling of a rational as a `BigInt`.
pub fn rat_ceil(r: &Rat) -> BigInt {
    num_integer::Integer::div_ceil(r.numer(), r.denom())
}

/// Non-authoritative float approximation, for logs and decimal exports only.
pub fn rat_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Floor of the integer square root of a nonnegative `BigInt`.
fn isqrt(x: &BigInt) -> BigInt {
    debug_assert!(!x.is_negative());
    x.sqrt()
}

/// Rational bounds `lo <= sqrt(x) <= hi` with `hi - lo <= 2^-bits`-scale width.
/// Exact (lo == hi) whenever `x` is the square of a rational.
pub fn sqrt_bounds(x: &Rat, bits: u32) -> (Rat, Rat) {
    assert!(!x.is_negative(), "sqrt_bounds of negative value");
    if x.is_zero() {
        return (Rat::zero(), Rat::zero());
    }
    // sqrt(n/d) = sqrt(n*d)/d; scale by 4^bits for precision.
    let nd = x.numer() * x.denom();
    let scaled = &nd << (2 * bits);
    let s = isqrt(&scaled);
    let den = Rat::from_integer(x.denom() << bits);
    let lo = Rat::from_integer(s.clone()) / &den;
    if &s * &s == scaled {
        (lo.clone(), lo)
    } else {
        let hi = Rat::from_integer(s + 1) / den;
        (lo, hi)
    }
}

/// Largest rational with `lo^2 <= x` at the given precision.
pub fn sqrt_lower(x: &Rat, bits: u32) -> Rat {
    sqrt_bounds(x, bits).0
}

/// Smallest rational with `hi^2 >= x` at the given precision.
pub fn sqrt_upper(x: &Rat, bits: u32) -> Rat {
    sqrt_bounds(x, bits).1
}

/// Compares `a` against `sqrt(x2)` exactly. Requires `x2 >= 0`.
pub fn cmp_rat_sqrt(a: &Rat, x2: &Rat) -> Ordering {
    assert!(!x2.is_negative(), "cmp_rat_sqrt against negative square");
    if a.is_negative() {
        return if x2.is_zero() && a.is_zero() {
            Ordering::Equal
        } else {
            Ordering::Less
        };
    }
    (a * a).cmp(x2)
}

/// Decides `sqrt(lhs2) >= r + sqrt(d2)` exactly, for `r >= 0`, `lhs2, d2 >= 0`.
pub fn ge_sum_sqrt(lhs2: &Rat, r: &Rat, d2: &Rat) -> bool {
    assert!(!r.is_negative() && !lhs2.is_negative() && !d2.is_negative());
    // lhs2 >= r^2 + d2 + 2 r sqrt(d2)  <=>  t >= 2 r sqrt(d2) with t = lhs2 - r^2 - d2.
    let t = lhs2 - r * r - d2;
    if t.is_negative() {
        return false;
    }
    &t * &t >= rint(4) * r * r * d2
}

/// Decides `sqrt(lhs2) <= r + sqrt(d2)` exactly, for `r >= 0`, `lhs2, d2 >= 0`.
pub fn le_sum_sqrt(lhs2: &Rat, r: &Rat, d2: &Rat) -> bool {
    assert!(!r.is_negative() && !lhs2.is_negative() && !d2.is_negative());
    let t = lhs2 - r * r - d2;
    if !t.is_positive() {
        return true;
    }
    &t * &t <= rint(4) * r * r * d2
}

const PI_DIGITS: &str = "14159265358979323846264338327950288419716939937510582097494459230781640628620899862803482534211706798214808651328230664709384460955058223172535940812848111745028410270193852110555964462294895493038196";

/// Rational interval `(lo, hi)` with `lo < pi < hi`, `hi - lo = 10^-digits`.
pub fn pi_interval(digits: usize) -> (Rat, Rat) {
    let digits = digits.clamp(1, PI_DIGITS.len());
    let frac: BigInt = PI_DIGITS[..digits].parse().expect("pi digits parse");
    let scale = BigInt::from(10u32).pow(digits as u32);
    let lo = Rat::new(BigInt::from(3) * &scale + frac, scale.clone());
    let hi = &lo + Rat::new(BigInt::one(), scale);
    (lo, hi)
}

/// A value `plain * pi^pi_pow` with rational `plain`, decided against
/// rationals by interval refinement. `pi_pow` is typically -2, 0, or 2
/// (squared thresholds involving unit-ball volumes).
#[derive(Debug, Clone, PartialEq)]
pub struct PiScaled {
    pub plain: Rat,
    pub pi_pow: i32,
}

impl PiScaled {
    pub fn rational(plain: Rat) -> Self {
        PiScaled { plain, pi_pow: 0 }
    }

    pub fn new(plain: Rat, pi_pow: i32) -> Self {
        PiScaled { plain, pi_pow }
    }

    pub fn is_rational(&self) -> bool {
        self.pi_pow == 0 || self.plain.is_zero()
    }

    pub fn scale(&self, by: &Rat) -> Self {
        PiScaled {
            plain: &self.plain * by,
            pi_pow: self.pi_pow,
        }
    }

    /// Compares against a rational exactly. Terminates for every input
    /// because `pi` is transcendental: equality only happens through the
    /// rational fast path.
    pub fn cmp_rat(&self, other: &Rat) -> Ordering {
        if self.is_rational() {
            return self.plain.cmp(other);
        }
        // Reduce to comparing plain vs other * pi^-pi_pow.
        for digits in [20usize, 40, 80, 160, PI_DIGITS.len()] {
            let (lo, hi) = pi_interval(digits);
            let (plo, phi) = pow_interval(&lo, &hi, -self.pi_pow);
            let other_lo = other * &plo;
            let other_hi = other * &phi;
            let (other_lo, other_hi) = if other.is_negative() {
                (other_hi, other_lo)
            } else {
                (other_lo, other_hi)
            };
            if self.plain < other_lo {
                return Ordering::Less;
            }
            if self.plain > other_hi {
                return Ordering::Greater;
            }
        }
        panic!("pi-scaled comparison undecided at maximum precision: {self:?} vs {other}");
    }

    /// Certified `self >= other`.
    pub fn ge_rat(&self, other: &Rat) -> bool {
        self.cmp_rat(other) != Ordering::Less
    }

    /// Non-authoritative float value for reports.
    pub fn approx_f64(&self) -> f64 {
        rat_f64(&self.plain) * std::f64::consts::PI.powi(self.pi_pow)
    }
}

fn pow_interval(lo: &Rat, hi: &Rat, pow: i32) -> (Rat, Rat) {
    // lo, hi > 0 assumed (pi bounds).
    debug_assert!(lo.is_positive());
    let p = pow.unsigned_abs();
    let mut l = Rat::one();
    let mut h = Rat::one();
    for _ in 0..p {
        l *= lo;
        h *= hi;
    }
    if pow >= 0 {
        (l, h)
    } else {
        (h.recip(), l.recip())
    }
}

/// A closed rational interval used for certified evaluation of inequalities
/// whose terms involve square roots or pi. Outward rounding happens only at
/// `sqrt` and `pi`; rational operations stay exact.
#[derive(Debug, Clone)]
pub struct RatInterval {
    pub lo: Rat,
    pub hi: Rat,
}

impl RatInterval {
    pub fn exact(v: Rat) -> Self {
        RatInterval { lo: v.clone(), hi: v }
    }

    pub fn pi(digits: usize) -> Self {
        let (lo, hi) = pi_interval(digits);
        RatInterval { lo, hi }
    }

    pub fn sqrt_of(x: &Rat, bits: u32) -> Self {
        let (lo, hi) = sqrt_bounds(x, bits);
        RatInterval { lo, hi }
    }

    pub fn add(&self, o: &Self) -> Self {
        RatInterval {
            lo: &self.lo + &o.lo,
            hi: &self.hi + &o.hi,
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        RatInterval {
            lo: &self.lo - &o.hi,
            hi: &self.hi - &o.lo,
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let cands = [
            &self.lo * &o.lo,
            &self.lo * &o.hi,
            &self.hi * &o.lo,
            &self.hi * &o.hi,
        ];
        let lo = cands.iter().min().unwrap().clone();
        let hi = cands.iter().max().unwrap().clone();
        RatInterval { lo, hi }
    }

    pub fn recip(&self) -> Self {
        assert!(
            self.lo.is_positive() || self.hi.is_negative(),
            "interval reciprocal across zero"
        );
        RatInterval {
            lo: self.hi.clone().recip(),
            hi: self.lo.clone().recip(),
        }
    }

    pub fn powi(&self, p: u32) -> Self {
        let mut out = RatInterval::exact(Rat::one());
        for _ in 0..p {
            out = out.mul(self);
        }
        out
    }

    /// Certified comparison: `Some(true)` if `self >= o` for every member,
    /// `Some(false)` if `self < o` for every member, `None` if undecided.
    pub fn ge(&self, o: &Self) -> Option<bool> {
        if self.lo >= o.hi {
            Some(true)
        } else if self.hi < o.lo {
            Some(false)
        } else {
            None
        }
    }
}
