//! Rational enclosures `[lo, hi]` of real quantities.
//!
//! Transcendental values (`sqrt`, `ln`, `exp`, `2^r`) are evaluated by series
//! with explicit remainder bounds; every rounding step is directed outward, so
//! `lo <= true value <= hi` always holds. Enclosures of rational values stay
//! degenerate (`lo == hi`) through the arithmetic.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{fmt_rat, int, rat_str, Rational};

/// Extra bits carried internally beyond the requested precision.
pub const GUARD_BITS: u64 = 24;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealEnclosure {
    #[serde(with = "rat_str")]
    lo: Rational,
    #[serde(with = "rat_str")]
    hi: Rational,
}

impl RealEnclosure {
    pub fn new(lo: Rational, hi: Rational) -> Self {
        assert!(lo <= hi, "enclosure with lo > hi");
        RealEnclosure { lo, hi }
    }

    pub fn exact(q: Rational) -> Self {
        RealEnclosure { lo: q.clone(), hi: q }
    }

    pub fn lo(&self) -> &Rational {
        &self.lo
    }

    pub fn hi(&self) -> &Rational {
        &self.hi
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn contains(&self, q: &Rational) -> bool {
        &self.lo <= q && q <= &self.hi
    }

    pub fn is_subset_of(&self, other: &RealEnclosure) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn intersects(&self, other: &RealEnclosure) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// Certainly below `q`.
    pub fn lt(&self, q: &Rational) -> bool {
        &self.hi < q
    }

    pub fn add(&self, o: &RealEnclosure) -> RealEnclosure {
        RealEnclosure { lo: &self.lo + &o.lo, hi: &self.hi + &o.hi }
    }

    pub fn sub(&self, o: &RealEnclosure) -> RealEnclosure {
        RealEnclosure { lo: &self.lo - &o.hi, hi: &self.hi - &o.lo }
    }

    pub fn mul(&self, o: &RealEnclosure) -> RealEnclosure {
        if self.is_exact() && o.is_exact() {
            return RealEnclosure::exact(&self.lo * &o.lo);
        }
        let c = [&self.lo * &o.lo, &self.lo * &o.hi, &self.hi * &o.lo, &self.hi * &o.hi];
        let lo = c.iter().min().cloned().unwrap_or_default();
        let hi = c.iter().max().cloned().unwrap_or_default();
        RealEnclosure { lo, hi }
    }

    pub fn scale(&self, q: &Rational) -> RealEnclosure {
        self.mul(&RealEnclosure::exact(q.clone()))
    }

    pub fn recip(&self) -> Result<RealEnclosure> {
        if !self.lo.is_positive() && !self.hi.is_negative() {
            return Err(Error::Domain("reciprocal of an enclosure containing 0".into()));
        }
        Ok(RealEnclosure { lo: self.hi.recip(), hi: self.lo.recip() })
    }

    pub fn div(&self, o: &RealEnclosure) -> Result<RealEnclosure> {
        Ok(self.mul(&o.recip()?))
    }

    /// Outward rounding to `bits` significant bits relative to the larger endpoint.
    pub fn round_out(&self, bits: u64) -> RealEnclosure {
        if self.is_exact() {
            return self.clone();
        }
        let mag = if self.lo.abs() > self.hi.abs() { self.lo.abs() } else { self.hi.abs() };
        if mag.is_zero() {
            return self.clone();
        }
        let step = ulp(&mag, bits);
        RealEnclosure { lo: floor_to(&self.lo, &step), hi: ceil_to(&self.hi, &step) }
    }

    /// Final presentation at `precision` bits: rounded outward on a grid one
    /// step coarser than the internal result, then widened by one grid step.
    /// The widening makes enclosures at precision `p + 8` nest inside those at `p`.
    pub fn finish(&self, precision: u64) -> RealEnclosure {
        if self.is_exact() {
            return self.clone();
        }
        let mag = if self.lo.abs() > self.hi.abs() { self.lo.abs() } else { self.hi.abs() };
        if mag.is_zero() {
            return self.clone();
        }
        let step = ulp(&mag, precision + 4);
        RealEnclosure {
            lo: floor_to(&self.lo, &step) - &step,
            hi: ceil_to(&self.hi, &step) + &step,
        }
    }

    /// Approximate decimal rendering for human-facing output.
    pub fn approx_f64(&self) -> f64 {
        let mid = (&self.lo + &self.hi) / int(2);
        to_f64(&mid)
    }
}

impl fmt::Display for RealEnclosure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_exact() {
            write!(f, "{}", fmt_rat(&self.lo))
        } else {
            write!(f, "[{}, {}]", fmt_rat(&self.lo), fmt_rat(&self.hi))
        }
    }
}

pub fn to_f64(q: &Rational) -> f64 {
    // keep 64 significant bits before converting
    if q.is_zero() {
        return 0.0;
    }
    let e = floor_log2(&q.abs());
    let shift = 60 - e;
    let scaled = if shift >= 0 {
        (q.numer() << shift as usize) / q.denom()
    } else {
        q.numer() / (q.denom() << (-shift) as usize)
    };
    let m: f64 = scaled.to_string().parse().unwrap_or(f64::NAN);
    m * 2f64.powi(-(shift as i32))
}

/// `floor(log2 q)` for `q > 0`.
pub fn floor_log2(q: &Rational) -> i64 {
    debug_assert!(q.is_positive());
    let n = q.numer().magnitude();
    let d = q.denom().magnitude();
    let mut e = n.bits() as i64 - d.bits() as i64;
    // now 2^(e-1) < q < 2^(e+1)
    let cmp = if e >= 0 { n.cmp(&(d << e as usize)) } else { (n << (-e) as usize).cmp(d) };
    if cmp == Ordering::Less {
        e -= 1;
    }
    e
}

fn pow2(e: i64) -> Rational {
    if e >= 0 {
        Rational::from_integer(BigInt::one() << e as usize)
    } else {
        Rational::new(BigInt::one(), BigInt::one() << (-e) as usize)
    }
}

/// Grid step `2^(floor(log2 mag) - bits + 1)`.
fn ulp(mag: &Rational, bits: u64) -> Rational {
    pow2(floor_log2(mag) - bits as i64 + 1)
}

fn floor_to(q: &Rational, step: &Rational) -> Rational {
    (q / step).floor() * step
}

fn ceil_to(q: &Rational, step: &Rational) -> Rational {
    (q / step).ceil() * step
}

fn abs_step(bits: u64) -> Rational {
    pow2(-(bits as i64))
}

fn perfect_sqrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.sqrt();
    (&r * &r == *n).then_some(r)
}

/// Enclosure of `sqrt(q)` for `q >= 0`; exact when `q` is the square of a rational.
pub fn sqrt(q: &Rational, bits: u64) -> Result<RealEnclosure> {
    if q.is_negative() {
        return Err(Error::Domain(format!("sqrt of negative {}", fmt_rat(q))));
    }
    if q.is_zero() {
        return Ok(RealEnclosure::exact(Rational::zero()));
    }
    if let (Some(n), Some(d)) = (perfect_sqrt(q.numer()), perfect_sqrt(q.denom())) {
        return Ok(RealEnclosure::exact(Rational::new(n, d)));
    }
    let e = floor_log2(q);
    // q * 4^k has at least 2*bits integer bits
    let k = (bits as i64 + 2 - e.div_euclid(2)).max(0) as usize;
    let scaled = (q.numer() << (2 * k)) / q.denom();
    let s = scaled.sqrt();
    let den = BigInt::one() << k;
    Ok(RealEnclosure {
        lo: Rational::new(s.clone(), den.clone()),
        hi: Rational::new(s + 1, den),
    })
}

pub fn sqrt_enc(x: &RealEnclosure, bits: u64) -> Result<RealEnclosure> {
    if x.is_exact() {
        return sqrt(&x.lo, bits);
    }
    let lo = sqrt(&x.lo, bits)?.lo;
    let hi = sqrt(&x.hi, bits)?.hi;
    Ok(RealEnclosure { lo, hi })
}

/// `2 atanh(t) = ln((1+t)/(1-t))` for `0 <= t <= 1/3`, absolute error below `2^-bits`.
fn two_atanh(t: &Rational, bits: u64) -> RealEnclosure {
    if t.is_zero() {
        return RealEnclosure::exact(Rational::zero());
    }
    let step = abs_step(bits + 8);
    let t2 = t * t;
    // lower and upper bounds on t^(2i+1), rounded on the grid once they grow large
    let mut p_lo = t.clone();
    let mut p_hi = t.clone();
    let mut lo = Rational::zero();
    let mut hi = Rational::zero();
    let tol = abs_step(bits + 4);
    let two = int(2);
    for i in 0u64.. {
        let k = int((2 * i + 1) as i64);
        lo += floor_to(&(&p_lo * &two / &k), &step);
        hi += ceil_to(&(&p_hi * &two / &k), &step);
        p_lo = &p_lo * &t2;
        p_hi = &p_hi * &t2;
        if p_hi.denom().bits() > bits + 64 {
            p_lo = floor_to(&p_lo, &step);
            p_hi = ceil_to(&p_hi, &step);
        }
        // tail: 2 t^(2i+3) / ((2i+3)(1 - t^2)), with 1/(1 - t^2) <= 9/8
        let rem = &p_hi * &two * Rational::new(BigInt::from(9), BigInt::from(8)) / int((2 * i + 3) as i64);
        if rem < tol {
            hi += rem;
            break;
        }
    }
    RealEnclosure { lo, hi }
}

/// Enclosure of `ln 2`.
pub fn ln2(bits: u64) -> RealEnclosure {
    two_atanh(&Rational::new(BigInt::one(), BigInt::from(3)), bits + 4)
}

/// Enclosure of `ln q` for `q > 0`; exact (zero) at `q = 1`.
pub fn ln(q: &Rational, bits: u64) -> Result<RealEnclosure> {
    if !q.is_positive() {
        return Err(Error::Domain(format!("ln of non-positive {}", fmt_rat(q))));
    }
    if q.is_one() {
        return Ok(RealEnclosure::exact(Rational::zero()));
    }
    let e = floor_log2(q);
    let m = q / pow2(e); // in [1, 2)
    let t = (&m - int(1)) / (&m + int(1));
    let extra = 64 - (e.unsigned_abs().max(1)).leading_zeros() as u64;
    let wp = bits + extra + 4;
    let lnm = two_atanh(&t, wp);
    let l2 = ln2(wp);
    Ok(lnm.add(&l2.scale(&int(e))))
}

pub fn ln_enc(x: &RealEnclosure, bits: u64) -> Result<RealEnclosure> {
    if x.is_exact() {
        return ln(&x.lo, bits);
    }
    let lo = ln(&x.lo, bits)?.lo;
    let hi = ln(&x.hi, bits)?.hi;
    Ok(RealEnclosure { lo, hi })
}

/// Enclosure of `e^q` with relative error below `2^-bits`.
pub fn exp(q: &Rational, bits: u64) -> RealEnclosure {
    if q.is_zero() {
        return RealEnclosure::exact(Rational::one());
    }
    // r = q / 2^s with |r| <= 1/2, then square s times
    let s: u64 = (floor_log2(&q.abs()) + 2).max(0) as u64;
    let r = q / pow2(s as i64);
    let wp = bits + s + 16;
    let step = abs_step(wp + 4);
    let tol = abs_step(wp + 2);
    let mut lo = Rational::zero();
    let mut hi = Rational::zero();
    let mut term = RealEnclosure::exact(Rational::one());
    for i in 1u64.. {
        lo += floor_to(&term.lo, &step);
        hi += ceil_to(&term.hi, &step);
        term = term.scale(&(&r / int(i as i64)));
        if term.hi.denom().bits() > wp + 64 || term.lo.denom().bits() > wp + 64 {
            term = RealEnclosure { lo: floor_to(&term.lo, &step), hi: ceil_to(&term.hi, &step) };
        }
        // |tail| <= 2 |next term| since |r| <= 1/2
        let mag = if term.lo.abs() > term.hi.abs() { term.lo.abs() } else { term.hi.abs() };
        let rem = mag * int(2);
        if rem < tol {
            lo -= &rem;
            hi += &rem;
            break;
        }
    }
    let mut enc = RealEnclosure { lo, hi };
    for _ in 0..s {
        enc = RealEnclosure { lo: &enc.lo * &enc.lo, hi: &enc.hi * &enc.hi }.round_out(wp);
    }
    enc
}

pub fn exp_enc(x: &RealEnclosure, bits: u64) -> RealEnclosure {
    if x.is_exact() {
        return exp(&x.lo, bits);
    }
    RealEnclosure { lo: exp(&x.lo, bits).lo, hi: exp(&x.hi, bits).hi }
}

/// Enclosure of `2^r`; exact for integer `r`.
pub fn pow2_rational(r: &Rational, bits: u64) -> RealEnclosure {
    if r.is_integer() {
        let e: i64 = r.to_integer().try_into().expect("exponent fits i64");
        return RealEnclosure::exact(pow2(e));
    }
    let wp = bits + 8 + (64 - r.abs().ceil().to_integer().bits());
    let arg = ln2(wp).scale(r);
    exp_enc(&arg, bits + 4)
}

/// Enclosure of `log2 q`; exact when `q` is a power of two.
pub fn log2(q: &Rational, bits: u64) -> Result<RealEnclosure> {
    if !q.is_positive() {
        return Err(Error::Domain(format!("log2 of non-positive {}", fmt_rat(q))));
    }
    let e = floor_log2(q);
    if *q == pow2(e) {
        return Ok(RealEnclosure::exact(int(e)));
    }
    let wp = bits + 8;
    ln(q, wp)?.div(&ln2(wp))
}
