//! Exact rationals and canonical finite unions of half-open subintervals of `[0, 1)`.
//!
//! Every [`IntervalSet`] is kept canonical: parts sorted, pairwise disjoint and
//! non-adjacent. Two sets are equal as point sets iff they are equal as values.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `2^-k` as an exact rational.
pub fn pow2_neg(k: u64) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << k)
}

/// Formats as `num/den`, always with an explicit denominator (`0/1`, `3/1`).
pub fn fmt_rat(q: &Rational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

/// Parses `num/den` or a bare integer.
pub fn parse_rat(s: &str) -> Result<Rational, Error> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
            let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(Rational::new(n, d))
        }
        None => Ok(Rational::from_integer(BigInt::from_str(s).map_err(|_| bad())?)),
    }
}

/// serde adapter serializing a [`Rational`] as a `"num/den"` string.
pub mod rat_str {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_rat(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rat(&s).map_err(serde::de::Error::custom)
    }
}

/// Half-open interval `[lo, hi)` with `0 <= lo <= hi <= 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "rat_str")]
    lo: Rational,
    #[serde(with = "rat_str")]
    hi: Rational,
}

impl Interval {
    pub fn new(lo: Rational, hi: Rational) -> Result<Self, Error> {
        if lo.is_negative() || hi > Rational::one() || lo > hi {
            return Err(Error::Domain(format!(
                "interval [{}, {}) not inside [0,1)",
                fmt_rat(&lo),
                fmt_rat(&hi)
            )));
        }
        Ok(Interval { lo, hi })
    }

    pub(crate) fn new_unchecked(lo: Rational, hi: Rational) -> Self {
        debug_assert!(!lo.is_negative() && lo <= hi && hi <= Rational::one());
        Interval { lo, hi }
    }

    pub fn unit() -> Self {
        Interval { lo: Rational::zero(), hi: Rational::one() }
    }

    /// The dyadic interval `[a 2^-k, (a+1) 2^-k)`.
    pub fn dyadic(a: u64, k: u64) -> Self {
        let d = BigInt::one() << k;
        Interval {
            lo: Rational::new(BigInt::from(a), d.clone()),
            hi: Rational::new(BigInt::from(a) + 1, d),
        }
    }

    pub fn lo(&self) -> &Rational {
        &self.lo
    }

    pub fn hi(&self) -> &Rational {
        &self.hi
    }

    pub fn len(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.lo <= x && x < &self.hi
    }

    pub fn midpoint(&self) -> Rational {
        (&self.lo + &self.hi) / int(2)
    }

    /// `[lo, mid)` and `[mid, hi)`.
    pub fn halves(&self) -> (Interval, Interval) {
        let mid = self.midpoint();
        (
            Interval { lo: self.lo.clone(), hi: mid.clone() },
            Interval { lo: mid, hi: self.hi.clone() },
        )
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        self.is_empty() || (other.lo <= self.lo && self.hi <= other.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", fmt_rat(&self.lo), fmt_rat(&self.hi))
    }
}

/// Canonical finite union of half-open intervals in `[0, 1)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalSet {
    parts: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { parts: Vec::new() }
    }

    pub fn unit() -> Self {
        IntervalSet { parts: vec![Interval::unit()] }
    }

    pub fn from_interval(iv: Interval) -> Self {
        Self::from_parts(vec![iv])
    }

    /// Canonicalizes an arbitrary list of intervals (any order, overlaps allowed).
    pub fn from_parts(mut parts: Vec<Interval>) -> Self {
        parts.retain(|p| !p.is_empty());
        parts.sort_unstable_by(|x, y| x.lo.cmp(&y.lo));
        Self::from_sorted(parts)
    }

    /// Canonicalizes intervals already sorted by `lo`.
    fn from_sorted(parts: Vec<Interval>) -> Self {
        let mut out: Vec<Interval> = Vec::with_capacity(parts.len());
        for p in parts {
            if p.is_empty() {
                continue;
            }
            match out.last_mut() {
                Some(last) if p.lo <= last.hi => {
                    if p.hi > last.hi {
                        last.hi = p.hi;
                    }
                }
                _ => out.push(p),
            }
        }
        IntervalSet { parts: out }
    }

    pub fn parts(&self) -> &[Interval] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn measure(&self) -> Rational {
        self.parts.iter().fold(Rational::zero(), |acc, p| acc + p.len())
    }

    pub fn contains(&self, x: &Rational) -> bool {
        // last part with lo <= x
        let idx = self.parts.partition_point(|p| &p.lo <= x);
        idx > 0 && self.parts[idx - 1].contains(x)
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut merged = Vec::with_capacity(self.parts.len() + other.parts.len());
        let (mut i, mut j) = (0, 0);
        while i < self.parts.len() || j < other.parts.len() {
            let take_left = j >= other.parts.len()
                || (i < self.parts.len() && self.parts[i].lo <= other.parts[j].lo);
            if take_left {
                merged.push(self.parts[i].clone());
                i += 1;
            } else {
                merged.push(other.parts[j].clone());
                j += 1;
            }
        }
        Self::from_sorted(merged)
    }

    /// Union of many sets in one sort-and-merge pass.
    pub fn union_all<'a, I>(sets: I) -> IntervalSet
    where
        I: IntoIterator<Item = &'a IntervalSet>,
    {
        let parts: Vec<Interval> = sets.into_iter().flat_map(|s| s.parts.iter().cloned()).collect();
        Self::from_parts(parts)
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.parts.len() && j < other.parts.len() {
            let (a, b) = (&self.parts[i], &other.parts[j]);
            let lo = if a.lo > b.lo { &a.lo } else { &b.lo };
            let hi = if a.hi < b.hi { &a.hi } else { &b.hi };
            if lo < hi {
                out.push(Interval { lo: lo.clone(), hi: hi.clone() });
            }
            if a.hi < b.hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        // pieces of canonical inputs are disjoint and sorted; adjacency can't arise
        IntervalSet { parts: out }
    }

    pub fn intersect_interval(&self, iv: &Interval) -> IntervalSet {
        if iv.is_empty() {
            return IntervalSet::empty();
        }
        let start = self.parts.partition_point(|p| p.hi <= iv.lo);
        let mut out = Vec::new();
        for p in &self.parts[start..] {
            if p.lo >= iv.hi {
                break;
            }
            let lo = if p.lo > iv.lo { &p.lo } else { &iv.lo };
            let hi = if p.hi < iv.hi { &p.hi } else { &iv.hi };
            out.push(Interval { lo: lo.clone(), hi: hi.clone() });
        }
        IntervalSet { parts: out }
    }

    /// `[0, 1) \ self`.
    pub fn complement_in_unit(&self) -> IntervalSet {
        let mut out = Vec::with_capacity(self.parts.len() + 1);
        let mut cursor = Rational::zero();
        for p in &self.parts {
            if p.lo > cursor {
                out.push(Interval { lo: cursor.clone(), hi: p.lo.clone() });
            }
            cursor = p.hi.clone();
        }
        if cursor < Rational::one() {
            out.push(Interval { lo: cursor, hi: Rational::one() });
        }
        IntervalSet { parts: out }
    }

    pub fn difference(&self, other: &IntervalSet) -> IntervalSet {
        self.intersect(&other.complement_in_unit())
    }

    pub fn is_subset_of(&self, other: &IntervalSet) -> bool {
        self.difference(other).is_empty()
    }

    /// Preimage under `x -> {base^shift x}`: the union over `r < base^shift` of
    /// `(self + r) / base^shift`.
    pub fn pullback(&self, base: u64, shift: u64) -> IntervalSet {
        if shift == 0 || self.is_empty() {
            return self.clone();
        }
        let scale = BigUint::from(base).pow(shift as u32);
        let copies: u64 = scale.clone().try_into().unwrap_or(u64::MAX);
        let scale = BigInt::from(scale);
        let mut out = Vec::with_capacity(self.parts.len().saturating_mul(copies as usize));
        let mut r = BigInt::zero();
        let one = BigInt::one();
        while r < scale {
            for p in &self.parts {
                let lo = (&p.lo + Rational::from_integer(r.clone())) / Rational::from_integer(scale.clone());
                let hi = (&p.hi + Rational::from_integer(r.clone())) / Rational::from_integer(scale.clone());
                match out.last_mut() {
                    Some(Interval { hi: last_hi, .. }) if *last_hi == lo => *last_hi = hi,
                    _ => out.push(Interval { lo, hi }),
                }
            }
            r += &one;
        }
        IntervalSet { parts: out }
    }

    /// Checks the canonical-form invariant.
    pub fn is_canonical(&self) -> bool {
        self.parts.iter().all(|p| p.lo < p.hi && !p.lo.is_negative() && p.hi <= Rational::one())
            && self.parts.windows(2).all(|w| w[0].hi < w[1].lo)
    }

    /// Grid denominator: lcm of all endpoint denominators.
    pub fn common_denominator(&self) -> BigInt {
        self.parts
            .iter()
            .flat_map(|p| [p.lo.denom(), p.hi.denom()])
            .fold(BigInt::one(), |acc, d| acc.lcm(d))
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.parts.is_empty() {
            return write!(f, "{{}}");
        }
        let parts: Vec<String> = self.parts.iter().map(|p| p.to_string()).collect();
        write!(f, "{{{}}}", parts.join(" u "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: i64, b: i64, c: i64, d: i64) -> Interval {
        Interval::new(rat(a, b), rat(c, d)).unwrap()
    }

    fn set(parts: &[Interval]) -> IntervalSet {
        IntervalSet::from_parts(parts.to_vec())
    }

    #[test]
    fn union_examples() {
        let a = set(&[iv(0, 1, 1, 4)]);
        let b = set(&[iv(1, 4, 1, 2)]);
        assert_eq!(a.union(&b), set(&[iv(0, 1, 1, 2)]));
        assert_eq!(a.union(&b).len(), 1);

        assert_eq!(IntervalSet::empty().union(&a), a);

        let c = set(&[iv(0, 1, 1, 2)]);
        let d = set(&[iv(1, 4, 3, 4)]);
        assert_eq!(c.union(&d), set(&[iv(0, 1, 3, 4)]));
    }

    #[test]
    fn intersect_examples() {
        let a = set(&[iv(0, 1, 1, 2)]);
        let b = set(&[iv(1, 4, 3, 4)]);
        assert_eq!(a.intersect(&b), set(&[iv(1, 4, 1, 2)]));
        assert_eq!(b.intersect(&IntervalSet::unit()), b);

        let c = set(&[iv(0, 1, 1, 4), iv(3, 4, 1, 1)]);
        let d = set(&[iv(1, 8, 7, 8)]);
        assert_eq!(c.intersect(&d), set(&[iv(1, 8, 1, 4), iv(3, 4, 7, 8)]));
        assert_eq!(c.intersect_interval(&iv(1, 8, 7, 8)), c.intersect(&d));
    }

    #[test]
    fn measure_examples() {
        assert_eq!(IntervalSet::empty().measure(), int(0));
        assert_eq!(IntervalSet::unit().measure(), int(1));
        let s = set(&[iv(1, 16, 2, 16), iv(5, 16, 6, 16), iv(9, 16, 10, 16), iv(13, 16, 14, 16)]);
        assert_eq!(s.measure(), rat(1, 4));
    }

    #[test]
    fn complement_examples() {
        assert_eq!(IntervalSet::empty().complement_in_unit(), IntervalSet::unit());
        assert_eq!(IntervalSet::unit().complement_in_unit(), IntervalSet::empty());
        let s = set(&[iv(1, 4, 1, 2)]);
        assert_eq!(s.complement_in_unit(), set(&[iv(0, 1, 1, 4), iv(1, 2, 1, 1)]));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(Interval::new(rat(-1, 2), rat(1, 2)).is_err());
        assert!(Interval::new(rat(1, 2), rat(3, 2)).is_err());
        assert!(Interval::new(rat(3, 4), rat(1, 2)).is_err());
    }

    #[test]
    fn membership_is_half_open() {
        let s = set(&[iv(1, 4, 1, 2), iv(3, 4, 1, 1)]);
        assert!(s.contains(&rat(1, 4)));
        assert!(!s.contains(&rat(1, 2)));
        assert!(s.contains(&rat(7, 8)));
        assert!(!s.contains(&rat(0, 1)));
    }

    #[test]
    fn pullback_of_half() {
        let s = set(&[iv(0, 1, 1, 2)]);
        assert_eq!(s.pullback(2, 1), set(&[iv(0, 1, 1, 4), iv(1, 2, 3, 4)]));
        // a set touching both 0 and 1 merges across copies
        let t = set(&[iv(0, 1, 1, 4), iv(3, 4, 1, 1)]);
        let p = t.pullback(2, 1);
        assert!(p.is_canonical());
        assert_eq!(p, set(&[iv(0, 1, 1, 8), iv(3, 8, 5, 8), iv(7, 8, 1, 1)]));
    }

    #[test]
    fn rational_strings() {
        assert_eq!(fmt_rat(&int(0)), "0/1");
        assert_eq!(fmt_rat(&rat(6, 8)), "3/4");
        assert_eq!(parse_rat(" 6/8 ").unwrap(), rat(3, 4));
        assert_eq!(parse_rat("5").unwrap(), int(5));
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("x").is_err());
    }
}
