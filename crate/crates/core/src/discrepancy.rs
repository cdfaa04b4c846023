//! Exact extreme and star discrepancy of finite point sets in `[0, 1)`.
//!
//! With `A(t) = #{x_j < t}/N - t`, the deviation of `[u, v)` is `A(v) - A(u)`,
//! so `D_N = sup A - inf A` over `[0, 1]` (both sides include `A(0) = A(1) = 0`).
//! The supremum is approached just to the right of a point,
//! `A(x_i⁺) = #{x_j <= x_i}/N - x_i`, and the infimum at the point itself.

use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enclosure::{self, RealEnclosure, GUARD_BITS};
use crate::error::{Error, Result};
use crate::measure::{fmt_rat, int, rat_str, Rational};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointSet {
    points: Vec<Rational>,
}

impl PointSet {
    pub fn new(points: Vec<Rational>) -> Result<PointSet> {
        if let Some(p) = points.iter().find(|p| p.is_negative() || **p >= int(1)) {
            return Err(Error::Domain(format!("point {} outside [0,1)", fmt_rat(p))));
        }
        Ok(PointSet { points })
    }

    pub fn points(&self) -> &[Rational] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: Rational) -> Result<()> {
        if p.is_negative() || p >= int(1) {
            return Err(Error::Domain(format!("point {} outside [0,1)", fmt_rat(&p))));
        }
        self.points.push(p);
        Ok(())
    }
}

/// `{b^j x}` for `j = 0..N-1`, exactly.
pub fn orbit_points(x: &Rational, b: u64, n: u64) -> Result<PointSet> {
    if x.is_negative() || *x >= int(1) {
        return Err(Error::Domain(format!("x = {} outside [0,1)", fmt_rat(x))));
    }
    if b < 2 || n == 0 {
        return Err(Error::Domain("need b >= 2 and N >= 1".into()));
    }
    let q = x.denom().clone();
    let mut r = x.numer().clone();
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        out.push(Rational::new(r.clone(), q.clone()));
        r = (r * b) % &q;
    }
    Ok(PointSet { points: out })
}

/// `(max A(x_i⁺), min A(x_i))` over the sorted points.
fn extremes(ps: &PointSet) -> (Rational, Rational) {
    let mut pts = ps.points.clone();
    pts.sort_unstable();
    let n = int(pts.len() as i64);
    let mut hi = Rational::zero();
    let mut lo = Rational::zero();
    let mut i = 0;
    while i < pts.len() {
        let mut j = i;
        while j < pts.len() && pts[j] == pts[i] {
            j += 1;
        }
        // i points lie strictly below pts[i], j points at or below it
        let below = int(i as i64) / &n - &pts[i];
        let upto = int(j as i64) / &n - &pts[i];
        if below < lo {
            lo = below;
        }
        if upto > hi {
            hi = upto;
        }
        i = j;
    }
    (hi, lo)
}

/// `D_N = sup_{0<=u<v<=1} |#{u <= x_j < v}/N - (v-u)|`.
pub fn extreme_discrepancy(ps: &PointSet) -> Result<Rational> {
    if ps.is_empty() {
        return Err(Error::Domain("empty point set".into()));
    }
    let (hi, lo) = extremes(ps);
    Ok(hi - lo)
}

/// `D*_N = sup_{0<v<=1} |#{x_j < v}/N - v|`.
pub fn star_discrepancy(ps: &PointSet) -> Result<Rational> {
    if ps.is_empty() {
        return Err(Error::Domain("empty point set".into()));
    }
    let (hi, lo) = extremes(ps);
    Ok(if hi > -lo.clone() { hi } else { -lo })
}

/// `D_N √N / √(ln ln N)` for the orbit of `x`; `N >= 16`.
pub fn normality_ratio(x: &Rational, b: u64, n: u64, precision: u64) -> Result<RealEnclosure> {
    let d = extreme_discrepancy(&orbit_points(x, b, n)?)?;
    ratio_for(&d, n, precision)
}

/// `d √N / √(ln ln N)` for a given exact discrepancy.
pub fn ratio_for(d: &Rational, n: u64, precision: u64) -> Result<RealEnclosure> {
    if n < 16 {
        return Err(Error::Domain(format!("ratio needs N >= 16, got {n}")));
    }
    let wp = precision + GUARD_BITS;
    let nq = int(n as i64);
    let lnln = enclosure::ln_enc(&enclosure::ln(&nq, wp)?, wp)?;
    let q = RealEnclosure::exact(nq).div(&lnln)?;
    Ok(enclosure::sqrt_enc(&q, wp)?.scale(d).finish(precision))
}

/// `C_b = 166 + 664/(√b - 1)`; exact for perfect squares.
pub fn philipp_constant(b: u64, precision: u64) -> Result<RealEnclosure> {
    if b < 2 {
        return Err(Error::Domain(format!("base must be >= 2, got {b}")));
    }
    let wp = precision + GUARD_BITS;
    let root = enclosure::sqrt(&int(b as i64), wp)?;
    let frac = RealEnclosure::exact(int(664)).div(&root.sub(&RealEnclosure::exact(int(1))))?;
    Ok(frac.add(&RealEnclosure::exact(int(166))).finish(precision))
}

/// The lacunary constant for ratio `θ`: `√84/9` at `θ = 2`,
/// `√(2(θ+1)/(θ-1))/2` for odd `θ`, `√(2(θ+1)θ(θ-2)/(θ-1)³)/2` for even `θ >= 4`.
pub fn fukuyama_constant(theta: u64, precision: u64) -> Result<RealEnclosure> {
    if theta < 2 {
        return Err(Error::Domain(format!("theta must be >= 2, got {theta}")));
    }
    let wp = precision + GUARD_BITS;
    let t = theta as i64;
    let enc = if theta == 2 {
        enclosure::sqrt(&int(84), wp)?.scale(&Rational::new(1.into(), 9.into()))
    } else if theta % 2 == 1 {
        let q = Rational::new((2 * (t + 1)).into(), (t - 1).into());
        enclosure::sqrt(&q, wp)?.scale(&Rational::new(1.into(), 2.into()))
    } else {
        let q = Rational::new((2 * (t + 1) * t * (t - 2)).into(), ((t - 1) * (t - 1) * (t - 1)).into());
        enclosure::sqrt(&q, wp)?.scale(&Rational::new(1.into(), 2.into()))
    };
    Ok(enc.finish(precision))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub schema: String,
    pub base: u64,
    pub n: u64,
    #[serde(with = "rat_str")]
    pub d: Rational,
    #[serde(with = "rat_str")]
    pub d_star: Rational,
    /// `D_N √N/√(ln ln N)`, present for `N >= 16`.
    pub ratio: Option<RealEnclosure>,
    pub philipp: RealEnclosure,
    /// `3 C_b`, the target for the limsup of the ratio.
    pub three_philipp: RealEnclosure,
}

pub fn discrepancy_report(x: &Rational, b: u64, n: u64, precision: u64) -> Result<DiscrepancyReport> {
    let ps = orbit_points(x, b, n)?;
    let d = extreme_discrepancy(&ps)?;
    let d_star = star_discrepancy(&ps)?;
    let ratio = if n >= 16 { Some(ratio_for(&d, n, precision)?) } else { None };
    let philipp = philipp_constant(b, precision)?;
    let three_philipp = philipp.scale(&int(3));
    Ok(DiscrepancyReport { schema: "absnorm.discrepancy/1".into(), base: b, n, d, d_star, ratio, philipp, three_philipp })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridRow {
    pub n: u64,
    #[serde(with = "rat_str")]
    pub d: Rational,
    pub ratio: RealEnclosure,
    /// Running maximum of the upper ratio bound up to this `N`; a diagnostic only.
    #[serde(with = "rat_str")]
    pub running_max_hi: Rational,
}

/// Ratios on the geometric grid `N = 16, 32, …, <= n_max`.
pub fn ratio_grid(x: &Rational, b: u64, n_max: u64, precision: u64) -> Result<Vec<GridRow>> {
    let ns: Vec<u64> = std::iter::successors(Some(16u64), |n| n.checked_mul(2)).take_while(|&n| n <= n_max).collect();
    let rows: Vec<(u64, Rational, RealEnclosure)> = ns
        .par_iter()
        .map(|&n| {
            let d = extreme_discrepancy(&orbit_points(x, b, n)?)?;
            let r = ratio_for(&d, n, precision)?;
            Ok((n, d, r))
        })
        .collect::<Result<_>>()?;
    let mut best = Rational::zero();
    Ok(rows
        .into_iter()
        .map(|(n, d, ratio)| {
            if ratio.hi() > &best {
                best = ratio.hi().clone();
            }
            GridRow { n, d, ratio, running_max_hi: best.clone() }
        })
        .collect())
}

/// CSV with columns `N,D_N,ratio_lo,ratio_hi`, all exact `num/den`.
pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut s = String::from("N,D_N,ratio_lo,ratio_hi\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.n, fmt_rat(&r.d), fmt_rat(r.ratio.lo()), fmt_rat(r.ratio.hi()));
    }
    s
}

/// The dyadic rational `0.d₁d₂…dₙ`.
pub fn digits_to_rational(digits: &str) -> Result<Rational> {
    let mut num = BigUint::zero();
    for c in digits.chars() {
        num <<= 1;
        match c {
            '0' => {}
            '1' => num += 1u32,
            _ => return Err(Error::Parse(format!("digit {c:?} is not binary"))),
        }
    }
    Ok(Rational::new(num.into(), num_bigint::BigInt::from(BigUint::from(1u32) << digits.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::rat;

    fn ps(v: &[(i64, i64)]) -> PointSet {
        PointSet::new(v.iter().map(|&(a, b)| rat(a, b)).collect()).unwrap()
    }

    #[test]
    fn orbit_examples() {
        assert_eq!(orbit_points(&int(0), 2, 3).unwrap().points(), &[int(0), int(0), int(0)]);
        assert_eq!(orbit_points(&rat(2, 3), 2, 4).unwrap().points(), &[rat(2, 3), rat(1, 3), rat(2, 3), rat(1, 3)]);
        assert_eq!(orbit_points(&rat(1, 7), 2, 3).unwrap().points(), &[rat(1, 7), rat(2, 7), rat(4, 7)]);
        assert!(orbit_points(&int(1), 2, 3).is_err());
    }

    #[test]
    fn extreme_examples() {
        assert_eq!(extreme_discrepancy(&ps(&[(0, 1)])).unwrap(), int(1));
        assert_eq!(extreme_discrepancy(&ps(&[(1, 4), (3, 4)])).unwrap(), rat(1, 2));
        assert_eq!(extreme_discrepancy(&ps(&[(1, 8), (3, 8), (5, 8), (7, 8)])).unwrap(), rat(1, 4));
        let orbit = orbit_points(&rat(2, 3), 2, 4).unwrap();
        assert_eq!(extreme_discrepancy(&orbit).unwrap(), rat(2, 3));
    }

    #[test]
    fn star_examples() {
        assert_eq!(star_discrepancy(&ps(&[(0, 1)])).unwrap(), int(1));
        assert_eq!(star_discrepancy(&ps(&[(1, 2)])).unwrap(), rat(1, 2));
        assert_eq!(star_discrepancy(&ps(&[(1, 4), (3, 4)])).unwrap(), rat(1, 4));
    }

    #[test]
    fn ratio_examples() {
        let r = normality_ratio(&int(0), 2, 16, 64).unwrap();
        let v = 4.0 / 16f64.ln().ln().sqrt();
        assert!(enclosure::to_f64(r.lo()) <= v + 1e-12 && v - 1e-12 <= enclosure::to_f64(r.hi()));
        assert!(normality_ratio(&int(0), 2, 15, 64).is_err());
        let d = rat(1, 8);
        let one = ratio_for(&d, 64, 64).unwrap();
        let two = ratio_for(&(d * int(2)), 64, 64).unwrap();
        assert!(two.intersects(&one.scale(&int(2))));
        assert!(ratio_for(&rat(1, 8), 64, 72).unwrap().is_subset_of(&one));
    }

    #[test]
    fn constants() {
        assert_eq!(philipp_constant(4, 64).unwrap(), RealEnclosure::exact(int(830)));
        assert_eq!(philipp_constant(9, 64).unwrap(), RealEnclosure::exact(int(498)));
        let c2 = philipp_constant(2, 64).unwrap();
        let c3 = philipp_constant(3, 64).unwrap();
        assert!(c3.hi() < c2.lo() && c3.lo() > &int(166));
        let f2 = fukuyama_constant(2, 64).unwrap();
        assert!(f2.lo() * f2.lo() * int(81) <= int(84) && f2.hi() * f2.hi() * int(81) >= int(84));
        assert!((enclosure::to_f64(f2.lo()) - 1.0184).abs() < 1e-4);
        assert_eq!(fukuyama_constant(3, 64).unwrap(), RealEnclosure::exact(int(1)));
        let f4 = fukuyama_constant(4, 64).unwrap();
        assert!((enclosure::to_f64(f4.lo()) - 0.8607).abs() < 1e-4);
        assert!(fukuyama_constant(1, 64).is_err());
    }

    #[test]
    fn grid_and_csv() {
        let rows = ratio_grid(&rat(1, 3), 2, 128, 32).unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![16, 32, 64, 128]);
        assert!(rows.windows(2).all(|w| w[0].running_max_hi <= w[1].running_max_hi));
        let csv = grid_csv(&rows);
        assert!(csv.starts_with("N,D_N,ratio_lo,ratio_hi\n16,"));
    }

    #[test]
    fn digit_rationals() {
        assert_eq!(digits_to_rational("101").unwrap(), rat(5, 8));
        assert!(digits_to_rational("102").is_err());
    }
}
