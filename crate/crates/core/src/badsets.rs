//! Bad sets `G(b,n,a,h)`, `H(b,n,a,h,ℓ,m)`, their unions and `Δ_m`.
//!
//! Thresholds involve `φ(2ⁿ)` and fractional powers of two, so each set is
//! returned as a [`SetEnclosure`]: `outer` is the deviation region at the lower
//! end of the threshold enclosure, `inner` at the upper end. Because `F` only
//! takes the finitely many values `|c - λN|`, the two coincide as soon as the
//! threshold enclosure separates the attainable values.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enclosure::{self, RealEnclosure, GUARD_BITS};
use crate::error::{Error, Result};
use crate::measure::{fmt_rat, int, rat, rat_str, Interval, IntervalSet, Rational};
use crate::orbit::{self, f_of_count, f_value_interval, Band, Window};
use crate::mc::ParamSource;
use crate::schedule::ParamSchedule;

/// `T(N) = ⌊log₄ N⌋ + 1`.
pub fn t_of(n: u128) -> u64 {
    assert!(n >= 1, "T(N) needs N >= 1");
    (127 - n.leading_zeros() as u64) / 2 + 1
}

/// `T(2ⁿ)` without materializing `2ⁿ`.
pub fn t_pow2(n: u64) -> u64 {
    n / 2 + 1
}

/// `2(1+2δ)(1/2 + 2/(√b - 1))`.
fn phi_coefficient(b: u64, delta: &Rational, bits: u64) -> Result<RealEnclosure> {
    let root = enclosure::sqrt(&int(b as i64), bits)?;
    let denom = root.sub(&RealEnclosure::exact(int(1)));
    let c = RealEnclosure::exact(rat(1, 2)).add(&RealEnclosure::exact(int(2)).div(&denom)?);
    Ok(c.scale(&(int(2) * (int(1) + int(2) * delta))))
}

/// `φ(N) = 2(1+2δ)(1/2 + 2/(√b-1)) √(N ln ln N)`.
pub fn phi(n: &BigUint, b: u64, delta: &Rational, precision: u64) -> Result<RealEnclosure> {
    if b < 2 {
        return Err(Error::Domain(format!("base must be >= 2, got {b}")));
    }
    if *n < BigUint::from(3u32) {
        return Err(Error::Domain(format!("phi needs ln ln N > 0, got N = {n}")));
    }
    let wp = precision + GUARD_BITS;
    let nq = Rational::from_integer(BigInt::from(n.clone()));
    let lnln = enclosure::ln_enc(&enclosure::ln(&nq, wp)?, wp)?;
    let root = enclosure::sqrt_enc(&lnln.scale(&nq), wp)?;
    Ok(phi_coefficient(b, delta, wp)?.mul(&root).finish(precision))
}

/// Index of one `G` or `H` component; `lm` is `(ℓ, m)` for `H`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BadSetIndex {
    pub b: u64,
    pub n: u64,
    pub a: u64,
    pub h: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lm: Option<(u64, u64)>,
}

impl BadSetIndex {
    pub fn g(b: u64, n: u64, a: u64, h: u64) -> Self {
        BadSetIndex { b, n, a, h, lm: None }
    }

    pub fn h(b: u64, n: u64, a: u64, h: u64, l: u64, m: u64) -> Self {
        BadSetIndex { b, n, a, h, lm: Some((l, m)) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        if self.b < 2 {
            return bad(format!("base must be >= 2, got {}", self.b));
        }
        if self.n == 0 || self.n > 62 {
            return bad(format!("n = {} outside 1..=62", self.n));
        }
        let t = t_pow2(self.n);
        if self.h == 0 || self.h > t {
            return bad(format!("h = {} outside 1..={t}", self.h));
        }
        if let Some((l, m)) = self.lm {
            if l == 0 || l < self.n.div_ceil(2) || l > self.n {
                return bad(format!("l = {l} outside {}..={}", self.n.div_ceil(2).max(1), self.n));
            }
            if m == 0 || m > 1u64 << (self.n - l) {
                return bad(format!("m = {m} outside 1..={}", 1u64 << (self.n - l)));
            }
        }
        let depth = self.depth();
        if self.a >= 1u64 << t.min(63) || self.a >= 1u64 << depth {
            return bad(format!("a = {} outside the band range at depth {depth}", self.a));
        }
        Ok(())
    }

    /// Depth of the dyadic band: `h+1` below the level cap, otherwise the cap
    /// (`G`) or `h` itself (`H`, where `h` may exceed `T(2^(ℓ-1))`).
    pub fn depth(&self) -> u64 {
        match self.lm {
            None => {
                let t = t_pow2(self.n);
                if self.h < t {
                    self.h + 1
                } else {
                    t
                }
            }
            Some((l, _)) => {
                if self.h < t_pow2(l - 1) {
                    self.h + 1
                } else {
                    self.h
                }
            }
        }
    }

    pub fn band(&self) -> Result<Band> {
        Band::dyadic(self.a, self.depth() as u32)
    }

    pub fn window(&self) -> Window {
        match self.lm {
            None => Window { base: self.b, offset: 0, len: 1 << self.n },
            Some((l, m)) => Window { base: self.b, offset: (1 << self.n) + m * (1 << l), len: 1 << (l - 1) },
        }
    }

    /// Exponent `e` with threshold `2^e φ(2ⁿ)`.
    fn threshold_exponent(&self) -> Rational {
        let e = Rational::new(-BigInt::from(self.h), BigInt::from(8));
        match self.lm {
            None => e,
            Some((l, _)) => e + Rational::new(BigInt::from(l as i64 - self.n as i64 - 3), BigInt::from(6)),
        }
    }

    pub fn threshold(&self, delta: &Rational, precision: u64) -> Result<RealEnclosure> {
        let wp = precision + GUARD_BITS;
        let p = phi(&(BigUint::one() << self.n as usize), self.b, delta, wp)?;
        Ok(enclosure::pow2_rational(&self.threshold_exponent(), wp).mul(&p).finish(precision))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetEnclosure {
    pub inner: IntervalSet,
    pub outer: IntervalSet,
}

impl SetEnclosure {
    pub fn empty() -> Self {
        SetEnclosure::default()
    }

    pub fn exact(s: IntervalSet) -> Self {
        SetEnclosure { inner: s.clone(), outer: s }
    }

    pub fn is_exact(&self) -> bool {
        self.inner == self.outer
    }

    pub fn is_empty(&self) -> bool {
        self.outer.is_empty()
    }

    pub fn union_all<'a>(items: impl IntoIterator<Item = &'a SetEnclosure> + Clone) -> SetEnclosure {
        SetEnclosure {
            inner: IntervalSet::union_all(items.clone().into_iter().map(|s| &s.inner)),
            outer: IntervalSet::union_all(items.into_iter().map(|s| &s.outer)),
        }
    }

    pub fn union(&self, o: &SetEnclosure) -> SetEnclosure {
        SetEnclosure { inner: self.inner.union(&o.inner), outer: self.outer.union(&o.outer) }
    }

    /// `[μ(inner), μ(outer)]`.
    pub fn measure(&self) -> RealEnclosure {
        RealEnclosure::new(self.inner.measure(), self.outer.measure())
    }
}

fn pow_big(base: u64, e: u64) -> BigUint {
    BigUint::from(base).pow(e as u32)
}

/// Deviation regions at both ends of a threshold enclosure, over the window
/// `[0, len)`. Skips the sweep entirely when the threshold is outside the range of `F`.
fn base_enclosure(base: u64, len: u64, band: &Band, t: &RealEnclosure, budget: u64) -> Result<SetEnclosure> {
    let lam = band.len();
    let n = int(len as i64);
    let max_f = if lam > rat(1, 2) { &lam * &n } else { (int(1) - &lam) * &n };
    if t.lo() > &max_f {
        return Ok(SetEnclosure::empty());
    }
    if !t.hi().is_positive() {
        return Ok(SetEnclosure::exact(IntervalSet::unit()));
    }
    let keep_lo: Vec<bool> = (0..=len).map(|c| f_of_count(c, len, band) >= *t.lo()).collect();
    let keep_hi: Vec<bool> = (0..=len).map(|c| f_of_count(c, len, band) >= *t.hi()).collect();
    let w = Window::new(base, 0, len)?;
    let outer = orbit::count_region(&w, band, |c| keep_lo[c as usize], budget)?;
    let inner = if keep_lo == keep_hi {
        outer.clone()
    } else if !keep_hi.iter().any(|&k| k) {
        IntervalSet::empty()
    } else {
        orbit::count_region(&w, band, |c| keep_hi[c as usize], budget)?
    };
    Ok(SetEnclosure { inner, outer })
}

fn pull(s: &IntervalSet, base: u64, shift: u64, budget: u64) -> Result<IntervalSet> {
    if shift == 0 || s.is_empty() || *s == IntervalSet::unit() {
        return Ok(s.clone());
    }
    let copies = pow_big(base, shift) * BigUint::from(s.len());
    if copies > BigUint::from(budget) {
        return Err(Error::Budget {
            what: format!("pullback of {} parts by {base}^{shift}", s.len()),
            needed: copies.to_string(),
            budget,
        });
    }
    Ok(s.pullback(base, shift))
}

fn pull_enclosure(s: &SetEnclosure, base: u64, shift: u64, budget: u64) -> Result<SetEnclosure> {
    let outer = pull(&s.outer, base, shift, budget)?;
    let inner = if s.inner == s.outer { outer.clone() } else { pull(&s.inner, base, shift, budget)? };
    Ok(SetEnclosure { inner, outer })
}

fn window_budget_check(b: u64, len_log2: u64, budget: u64) -> Result<()> {
    // a sweep over 2^len_log2 orbit points has about 2 b^(2^len_log2) breakpoints
    if len_log2 >= 63 || orbit::sweep_cost(b, 1 << len_log2) > budget as u128 {
        return Err(Error::Budget {
            what: format!("window of length 2^{len_log2} in base {b}"),
            needed: format!("2*{b}^(2^{len_log2})"),
            budget,
        });
    }
    Ok(())
}

fn component(idx: &BadSetIndex, delta: &Rational, precision: u64, budget: u64) -> Result<SetEnclosure> {
    idx.validate()?;
    let t = idx.threshold(delta, precision)?;
    component_at(idx, &t, budget)
}

fn component_at(idx: &BadSetIndex, t: &RealEnclosure, budget: u64) -> Result<SetEnclosure> {
    let w = idx.window();
    let base = base_enclosure(idx.b, w.len, &idx.band()?, t, budget)?;
    pull_enclosure(&base, idx.b, w.offset, budget)
}

pub fn g_set(idx: &BadSetIndex, sched: &ParamSchedule, precision: u64, budget: u64) -> Result<SetEnclosure> {
    if idx.lm.is_some() {
        return Err(Error::Domain("g_set takes an index without (l, m)".into()));
    }
    component(idx, &sched.delta, precision, budget)
}

pub fn h_set(idx: &BadSetIndex, sched: &ParamSchedule, precision: u64, budget: u64) -> Result<SetEnclosure> {
    if idx.lm.is_none() {
        return Err(Error::Domain("h_set needs (l, m)".into()));
    }
    component(idx, &sched.delta, precision, budget)
}

/// `G_{b,n}`: union over `1 <= h <= T(2ⁿ)` and `0 <= a < 2^h`.
pub fn g_union(b: u64, n: u64, sched: &ParamSchedule, precision: u64, budget: u64) -> Result<SetEnclosure> {
    if n == 0 {
        return Err(Error::Domain("n must be >= 1".into()));
    }
    window_budget_check(b, n, budget)?;
    let thresholds: Vec<RealEnclosure> = (1..=t_pow2(n))
        .map(|h| BadSetIndex::g(b, n, 0, h).threshold(&sched.delta, precision))
        .collect::<Result<_>>()?;
    let jobs: Vec<BadSetIndex> =
        (1..=t_pow2(n)).flat_map(|h| (0..1u64 << h).map(move |a| BadSetIndex::g(b, n, a, h))).collect();
    let parts: Vec<SetEnclosure> = jobs
        .par_iter()
        .map(|idx| {
            idx.validate()?;
            component_at(idx, &thresholds[idx.h as usize - 1], budget)
        })
        .collect::<Result<_>>()?;
    Ok(SetEnclosure::union_all(parts.iter()))
}

/// `H_{b,n}`: union over `h`, `a < 2^h`, `⌈n/2⌉ <= ℓ <= n` and `1 <= m <= 2^(n-ℓ)`.
///
/// Pullback commutes with union, so for each `ℓ` the regions over `(h, a)` are
/// swept on `[0, 2^(ℓ-1))`, merged, and pulled back once per offset `2ⁿ + m 2^ℓ`.
pub fn h_union(b: u64, n: u64, sched: &ParamSchedule, precision: u64, budget: u64) -> Result<SetEnclosure> {
    if n == 0 {
        return Err(Error::Domain("n must be >= 1".into()));
    }
    let lmin = n.div_ceil(2).max(1);
    window_budget_check(b, n - 1, budget)?;
    let mut jobs = Vec::new();
    for l in lmin..=n {
        for h in 1..=t_pow2(n) {
            let t = BadSetIndex::h(b, n, 0, h, l, 1).threshold(&sched.delta, precision)?;
            for a in 0..1u64 << h {
                jobs.push((l, BadSetIndex::h(b, n, a, h, l, 1), t.clone()));
            }
        }
    }
    let bases: Vec<(u64, SetEnclosure)> = jobs
        .par_iter()
        .map(|(l, idx, t)| {
            idx.validate()?;
            Ok((*l, base_enclosure(b, 1 << (l - 1), &idx.band()?, t, budget)?))
        })
        .collect::<Result<_>>()?;
    let mut pulls = Vec::new();
    for l in lmin..=n {
        let merged = SetEnclosure::union_all(bases.iter().filter(|(bl, _)| *bl == l).map(|(_, s)| s));
        for m in 1..=1u64 << (n - l) {
            pulls.push((merged.clone(), (1u64 << n) + m * (1 << l)));
        }
    }
    let parts: Vec<SetEnclosure> =
        pulls.par_iter().map(|(s, off)| pull_enclosure(s, b, *off, budget)).collect::<Result<_>>()?;
    Ok(SetEnclosure::union_all(parts.iter()))
}

/// One `(b, k)` contribution to `Δ_m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub b: u64,
    pub k: u64,
    pub g_parts: usize,
    pub h_parts: usize,
    #[serde(with = "rat_str")]
    pub outer_measure: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaEnclosure {
    pub index: u64,
    pub set: SetEnclosure,
    pub levels: Vec<LevelSummary>,
}

/// `Δ_m = ⋃_{b=2}^{b_m} ⋃_{k=z_b}^{m} (G_{b,k} ∪ H_{b,k})`, capped at the schedule horizon.
pub fn delta_n(m: u64, sched: &ParamSchedule, precision: u64, budget: u64) -> Result<DeltaEnclosure> {
    if m == 0 {
        return Err(Error::Domain("Delta index must be >= 1".into()));
    }
    let mut sets = Vec::new();
    let mut summary = Vec::new();
    let levels = sched.level_ranges(m)?.into_iter().flat_map(|(b, z, k)| (z..=k).map(move |k| (b, k)));
    for (b, k) in levels {
        let g = g_union(b, k, sched, precision, budget)?;
        let h = h_union(b, k, sched, precision, budget)?;
        let both = g.union(&h);
        summary.push(LevelSummary {
            b,
            k,
            g_parts: g.outer.len(),
            h_parts: h.outer.len(),
            outer_measure: both.outer.measure(),
        });
        sets.push(both);
    }
    Ok(DeltaEnclosure { index: m, set: SetEnclosure::union_all(sets.iter()), levels: summary })
}

/// Strict upper bound on the tail `r_m`.
///
/// Unbounded schedules use the analytic bound of [`ParamSchedule::tail_upper_analytic`].
/// With a horizon `K` the exceptional set is `Δ_K` itself, so the tail is
/// measured: `μ(outer Δ_K) - μ(inner Δ_m)`, which bounds `μ(Δ_K \ Δ_m)`.
pub fn r_tail_upper(m: u64, sched: &ParamSchedule, precision: u64, budget: u64) -> Result<Rational> {
    match sched.horizon {
        None => sched.tail_upper_analytic(m),
        Some(k) if m >= k => Ok(Rational::zero()),
        Some(k) => {
            let full = delta_n(k, sched, precision, budget)?;
            let part = delta_n(m, sched, precision, budget)?;
            Ok(full.set.outer.measure() - part.set.inner.measure())
        }
    }
}

/// `2 b^(2m-2) m e^(-ε² N b^m / (6m))`, under `6/⌊N/m⌋ <= ε <= 1/b^m`.
pub fn lemma1_bound(b: u64, m: u64, n: u64, eps: &Rational, precision: u64) -> Result<RealEnclosure> {
    if b < 2 || m == 0 || n == 0 {
        return Err(Error::Domain("need b >= 2, m >= 1, N >= 1".into()));
    }
    let q = n / m;
    if q == 0 {
        return Err(Error::Domain(format!("floor(N/m) = 0 for N = {n}, m = {m}")));
    }
    let lower = rat(6, q as i64);
    if *eps < lower {
        return Err(Error::Domain(format!("hypothesis 6/floor(N/m) <= eps fails: {} > {}", fmt_rat(&lower), fmt_rat(eps))));
    }
    let bm = Rational::from_integer(BigInt::from(pow_big(b, m)));
    if *eps > bm.recip() {
        return Err(Error::Domain(format!("hypothesis eps <= 1/b^m fails: {} > 1/{b}^{m}", fmt_rat(eps))));
    }
    let coef = int(2) * Rational::from_integer(BigInt::from(pow_big(b, 2 * m - 2))) * int(m as i64);
    let arg = -(eps * eps) * int(n as i64) * &bm / int(6 * m as i64);
    Ok(enclosure::exp(&arg, precision + GUARD_BITS).scale(&coef).finish(precision))
}

/// `9·2^(2(k+2)) (k+2) e^(-ε² N b^(k+2) / (6(k+2)))`.
pub fn lemma2_bound(b: u64, k: u64, n: u64, eps: &Rational, precision: u64) -> Result<RealEnclosure> {
    if b < 2 || k == 0 || n == 0 || !eps.is_positive() {
        return Err(Error::Domain("need b >= 2, k >= 1, N >= 1, eps > 0".into()));
    }
    let coef = int(9) * Rational::from_integer(BigInt::one() << (2 * (k + 2)) as usize) * int(k as i64 + 2);
    let bk = Rational::from_integer(BigInt::from(pow_big(b, k + 2)));
    let arg = -(eps * eps) * int(n as i64) * bk / int(6 * (k as i64 + 2));
    Ok(enclosure::exp(&arg, precision + GUARD_BITS).scale(&coef).finish(precision))
}

/// One row of the empirical check of a closed-form bound.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundRow {
    pub b: u64,
    /// `k` for the dyadic bound, `m` for the `b`-adic one.
    pub k: u64,
    pub n: u64,
    #[serde(with = "rat_str")]
    pub eps: Rational,
    pub bound: RealEnclosure,
    #[serde(with = "rat_str")]
    pub worst_measure: Rational,
    pub worst_a: u64,
    pub vacuous: bool,
    pub holds: bool,
}

/// Exact worst case over `a` of `μ{F >= εN}` (dyadic bands of depth `k`), against the bound.
///
/// The measure does not depend on the window offset, so one offset suffices.
pub fn lemma2_row(b: u64, k: u64, n: u64, eps: &Rational, precision: u64) -> Result<BoundRow> {
    let bound = lemma2_bound(b, k, n, eps, precision)?;
    let t = eps * int(n as i64);
    let w = Window::new(b, 0, n)?;
    let mut worst = (Rational::zero(), 0);
    for a in 0..1u64 << k {
        let mu = orbit::deviation_measure(&w, &Band::dyadic(a, k as u32)?, &t)?;
        if mu > worst.0 {
            worst = (mu, a);
        }
    }
    let vacuous = bound.hi() >= &int(1);
    let holds = vacuous || worst.0 <= *bound.hi();
    Ok(BoundRow { b, k, n, eps: eps.clone(), bound, worst_measure: worst.0, worst_a: worst.1, vacuous, holds })
}

/// Same for `b`-adic bands of depth `m` and the strict region `{F > εN}`.
pub fn lemma1_row(b: u64, m: u64, n: u64, eps: &Rational, precision: u64) -> Result<BoundRow> {
    let bound = lemma1_bound(b, m, n, eps, precision)?;
    let t = eps * int(n as i64);
    let w = Window::new(b, 0, n)?;
    let mut worst = (Rational::zero(), 0);
    for a in 0..pow_big(b, m).to_u64().expect("small band") {
        let mu = orbit::deviation_measure_strict(&w, &Band::adic(a, b, m as u32)?, &t)?;
        if mu > worst.0 {
            worst = (mu, a);
        }
    }
    let vacuous = bound.hi() >= &int(1);
    let holds = vacuous || worst.0 <= *bound.hi();
    Ok(BoundRow { b, k: m, n, eps: eps.clone(), bound, worst_measure: worst.0, worst_a: worst.1, vacuous, holds })
}

/// The standard grid: `b ∈ {2,3}`, `k ∈ {1,2}`, `N ∈ {2⁴..2¹⁰}`, `ε ∈ {1/4, 1/2, 1}`.
pub fn lemma2_grid(precision: u64) -> Result<Vec<BoundRow>> {
    let mut jobs = Vec::new();
    for b in [2u64, 3] {
        for k in [1u64, 2] {
            for e in 4..=10 {
                for eps in [rat(1, 4), rat(1, 2), int(1)] {
                    jobs.push((b, k, 1u64 << e, eps));
                }
            }
        }
    }
    jobs.par_iter().map(|(b, k, n, eps)| lemma2_row(*b, *k, *n, eps, precision)).collect()
}

/// `b ∈ {2,3}`, `m ∈ {1,2}`, `N ∈ {2⁴..2¹⁰}`, with every `ε` from a fixed
/// candidate list that meets the hypothesis.
pub fn lemma1_grid(precision: u64) -> Result<Vec<BoundRow>> {
    let candidates = [rat(1, 2), rat(1, 3), rat(1, 4), rat(1, 8), rat(1, 9), rat(1, 16)];
    let mut jobs = Vec::new();
    for b in [2u64, 3] {
        for m in [1u64, 2] {
            for e in 4..=10 {
                let n = 1u64 << e;
                for eps in &candidates {
                    let q = n / m;
                    let ok = rat(6, q as i64) <= *eps && *eps <= Rational::new(BigInt::one(), BigInt::from(pow_big(b, m)));
                    if ok {
                        jobs.push((b, m, n, eps.clone()));
                    }
                }
            }
        }
    }
    jobs.par_iter().map(|(b, m, n, eps)| lemma1_row(*b, *m, *n, eps, precision)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthReport {
    #[serde(with = "rat_str")]
    pub lhs: Rational,
    #[serde(with = "rat_str")]
    pub rhs: Rational,
    pub holds: bool,
}

/// Both sides of `|F(0,N,α₁,α₂)| <= N/2^(k-1) + Σ_{m=1}^{k} max_a |F(0,N,a2^-m,(a+1)2^-m)|`
/// evaluated exactly at `x`.
pub fn dyadic_depth_decomposition_check(
    x: &Rational,
    b: u64,
    n: u64,
    target: &Interval,
    k: u64,
) -> Result<DepthReport> {
    if k == 0 || k > 20 {
        return Err(Error::Domain(format!("depth k = {k} outside 1..=20")));
    }
    let w = Window::new(b, 0, n)?;
    let lhs = f_value_interval(x, &w, target);
    let mut rhs = Rational::new(BigInt::from(n), BigInt::one() << (k - 1) as usize);
    for m in 1..=k {
        let worst = (0..1u64 << m)
            .map(|a| f_value_interval(x, &w, &Interval::dyadic(a, m)))
            .max()
            .unwrap_or_default();
        rhs += worst;
    }
    let holds = lhs <= rhs;
    Ok(DepthReport { lhs, rhs, holds })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockReport {
    pub n: u64,
    /// `(ℓ, m_ℓ)` minimizing each block term.
    pub witness: Vec<(u64, u64)>,
    #[serde(with = "rat_str")]
    pub lhs: Rational,
    /// Right side without the `N^(1/3)` term.
    #[serde(with = "rat_str")]
    pub rhs_without_root: Rational,
    pub holds: bool,
    /// `n` odd: the lower block index `n/2` was rounded up.
    pub odd_n: bool,
}

/// Exhaustive witness search for the block decomposition
/// `F(0,N) <= N^(1/3) + F(0,2ⁿ) + Σ_{ℓ=⌈n/2⌉}^{n} F(2ⁿ + m_ℓ 2^ℓ, 2^(ℓ-1))`
/// with `0 <= m_ℓ <= 2^(n-ℓ) - 1`, for the band `[a2^-h, (a+1)2^-h)`.
///
/// The block terms are independent, so minimizing each one separately gives the
/// smallest right side over all witnesses.
pub fn block_decomposition_check(x: &Rational, b: u64, big_n: u64, h: u64, a: u64) -> Result<BlockReport> {
    if big_n == 0 {
        return Err(Error::Domain("N must be >= 1".into()));
    }
    if h == 0 || h > 62 || a >= 1u64 << h {
        return Err(Error::Domain(format!("band a = {a}, h = {h} out of range")));
    }
    let n = 63 - big_n.leading_zeros() as u64;
    let target = Interval::dyadic(a, h);
    let lhs = f_value_interval(x, &Window::new(b, 0, big_n)?, &target);
    let mut rhs = f_value_interval(x, &Window::new(b, 0, 1 << n)?, &target);
    let mut witness = Vec::new();
    for l in n.div_ceil(2).max(1)..=n {
        let mut best: Option<(Rational, u64)> = None;
        for m in 0..1u64 << (n - l) {
            let v = f_value_interval(x, &Window::new(b, (1 << n) + m * (1 << l), 1 << (l - 1))?, &target);
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                best = Some((v, m));
            }
        }
        let (v, m) = best.expect("nonempty range");
        rhs += v;
        witness.push((l, m));
    }
    // lhs <= N^(1/3) + rhs  <=>  d <= 0 or d^3 <= N, with d = lhs - rhs
    let d = &lhs - &rhs;
    let holds = !d.is_positive() || &d * &d * &d <= int(big_n as i64);
    Ok(BlockReport { n, witness, lhs, rhs_without_root: rhs, holds, odd_n: n % 2 == 1 })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthCase {
    #[serde(with = "rat_str")]
    pub x: Rational,
    pub b: u64,
    pub n: u64,
    pub target: Interval,
    pub k: u64,
    pub report: DepthReport,
}

/// `count` seeded draws of the depth decomposition with `N <= 32`, `k <= 3`.
pub fn depth_sweep(seed: u64, count: usize) -> Result<Vec<DepthCase>> {
    let mut src = ParamSource::new(seed);
    let mut cases = Vec::with_capacity(count);
    for _ in 0..count {
        let x = src.unit_rational(1 << 16);
        let b = src.range(2, 5);
        let n = src.range(1, 32);
        let k = src.range(1, 3);
        let q = src.range(1, 64);
        let lo = src.below(q);
        let hi = src.range(lo + 1, q);
        let target = Interval::new(rat(lo as i64, q as i64), rat(hi as i64, q as i64))?;
        cases.push((x, b, n, target, k));
    }
    cases
        .into_par_iter()
        .map(|(x, b, n, target, k)| {
            let report = dyadic_depth_decomposition_check(&x, b, n, &target, k)?;
            Ok(DepthCase { x, b, n, target, k, report })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCase {
    #[serde(with = "rat_str")]
    pub x: Rational,
    pub b: u64,
    pub big_n: u64,
    pub h: u64,
    pub a: u64,
    pub report: BlockReport,
}

/// `count` seeded draws of the block decomposition with `N <= 24`, `h <= 3`.
pub fn block_sweep(seed: u64, count: usize) -> Result<Vec<BlockCase>> {
    let mut src = ParamSource::new(seed);
    let mut cases = Vec::with_capacity(count);
    for _ in 0..count {
        let x = src.unit_rational(1 << 16);
        let b = src.range(2, 5);
        let big_n = src.range(1, 24);
        let h = src.range(1, 3);
        let a = src.below(1 << h);
        cases.push((x, b, big_n, h, a));
    }
    cases
        .into_par_iter()
        .map(|(x, b, big_n, h, a)| {
            let report = block_decomposition_check(&x, b, big_n, h, a)?;
            Ok(BlockCase { x, b, big_n, h, a, report })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummationReport {
    pub n0: u64,
    /// Rational upper bound on `Σ_{n>=n0} (n⁻³ + 2n^(-5/2))`.
    #[serde(with = "rat_str")]
    pub bound: Rational,
    #[serde(with = "rat_str")]
    pub eta: Rational,
    pub holds: bool,
}

/// Summation structure behind the measure of the exceptional set at `δ = 1/2`:
/// integral bounds `Σ_{n>=n0} n⁻³ < 1/(2(n0-1)²)` and
/// `Σ_{n>=n0} 2n^(-5/2) < (4/3)(n0-1)^(-3/2)`, compared with `η`.
pub fn summation_check(n0: u64, eta: &Rational) -> Result<SummationReport> {
    if n0 < 2 {
        return Err(Error::Domain("n0 must be >= 2".into()));
    }
    let c = int(n0 as i64 - 1);
    let cubic = (int(2) * &c * &c).recip();
    // (n0-1)^(-3/2) <= 1/((n0-1) * lower(sqrt(n0-1)))
    let root_lo = enclosure::sqrt(&c, 64)?.lo().clone();
    let half = rat(4, 3) * (&c * root_lo).recip();
    let bound = cubic + half;
    let holds = bound < *eta;
    Ok(SummationReport { n0, bound, eta: eta.clone(), holds })
}

/// Count of `F` values strictly between the threshold ends; a refinement can
/// only help while this is nonzero.
pub fn straddled_values(len: u64, band: &Band, t: &RealEnclosure) -> usize {
    orbit::attainable_f_values(len, band)
        .into_iter()
        .filter(|v| v >= t.lo() && v < t.hi())
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::pow2_neg;

    #[test]
    fn t_examples() {
        assert_eq!(t_of(1), 1);
        assert_eq!(t_of(4), 2);
        assert_eq!(t_of(3), 1);
        assert_eq!(t_of(1024), 6);
        for n in 0..60u64 {
            assert_eq!(t_pow2(n), t_of(1u128 << n));
        }
    }

    #[test]
    fn phi_forms_agree_at_half() {
        // 2(1+2δ)(1/2 + 2/(√b-1)) = 2 + 8/(√b-1) at δ = 1/2
        for b in [2u64, 3, 4, 7, 9, 10] {
            let c = phi_coefficient(b, &rat(1, 2), 96).unwrap();
            let s = enclosure::sqrt(&int(b as i64), 96).unwrap();
            let other = RealEnclosure::exact(int(2))
                .add(&RealEnclosure::exact(int(8)).div(&s.sub(&RealEnclosure::exact(int(1)))).unwrap());
            assert!(c.intersects(&other));
        }
        assert_eq!(phi_coefficient(4, &rat(1, 2), 64).unwrap(), RealEnclosure::exact(int(10)));
        assert_eq!(phi_coefficient(9, &rat(1, 2), 64).unwrap(), RealEnclosure::exact(int(6)));
    }

    #[test]
    fn phi_value_and_width() {
        let n = BigUint::from(1024u32);
        for p in [20u64, 53, 80] {
            let e = phi(&n, 4, &rat(1, 2), p).unwrap();
            let v = 10.0 * (1024f64 * 1024f64.ln().ln()).sqrt();
            assert!(enclosure::to_f64(e.lo()) <= v + 1e-9 && v - 1e-9 <= enclosure::to_f64(e.hi()));
            assert!(e.width() <= e.hi() * pow2_neg(p));
            let fine = phi(&n, 4, &rat(1, 2), p + 8).unwrap();
            assert!(fine.is_subset_of(&e));
        }
        assert!(phi(&BigUint::from(2u32), 2, &rat(1, 2), 32).is_err());
        assert!(phi(&BigUint::from(3u32), 2, &rat(1, 2), 32).is_ok());
    }

    #[test]
    fn index_validation_and_depths() {
        assert!(BadSetIndex::g(2, 4, 0, 1).validate().is_ok());
        assert!(BadSetIndex::g(2, 4, 0, 4).validate().is_err()); // T(16) = 3
        assert_eq!(BadSetIndex::g(2, 4, 0, 2).depth(), 3);
        assert_eq!(BadSetIndex::g(2, 4, 0, 3).depth(), 3);
        // H at n = 4, l = 2: T(2) = 1, so h = 1 uses depth h
        assert_eq!(BadSetIndex::h(2, 4, 0, 1, 2, 1).depth(), 1);
        assert_eq!(BadSetIndex::h(2, 4, 0, 1, 4, 1).depth(), 2);
        assert!(BadSetIndex::h(2, 4, 0, 1, 1, 1).validate().is_err());
        assert!(BadSetIndex::h(2, 4, 0, 1, 2, 5).validate().is_err());
        assert!(BadSetIndex::h(2, 3, 0, 1, 2, 2).validate().is_ok()); // ⌈3/2⌉ = 2
        let w = BadSetIndex::h(2, 4, 0, 1, 2, 1).window();
        assert_eq!((w.offset, w.len), (20, 2));
    }

    fn toy(delta: Rational) -> ParamSchedule {
        let mut s = ParamSchedule::toy("toy-small").unwrap();
        s.delta = delta;
        s
    }

    #[test]
    fn extreme_thresholds() {
        let band = Band::dyadic(0, 2).unwrap();
        let huge = RealEnclosure::exact(int(100));
        assert_eq!(base_enclosure(2, 8, &band, &huge, 1000).unwrap(), SetEnclosure::empty());
        let neg = RealEnclosure::new(int(-2), int(0));
        assert_eq!(base_enclosure(2, 8, &band, &neg, 1000).unwrap(), SetEnclosure::exact(IntervalSet::unit()));
    }

    #[test]
    fn enclosure_soundness_on_toy_sets() {
        let s = toy(rat(-2, 5));
        for (a, h) in [(0u64, 1u64), (1, 1), (0, 2), (3, 2)] {
            let idx = BadSetIndex::g(2, 3, a, h);
            let e = g_set(&idx, &s, 16, 1 << 20).unwrap();
            assert!(e.inner.is_subset_of(&e.outer));
            let t = idx.threshold(&s.delta, 16).unwrap();
            // every region is a union of cells where F is constant; check cell midpoints
            for p in e.outer.difference(&e.inner).parts() {
                let f = orbit::f_value(&p.midpoint(), &idx.window(), &idx.band().unwrap());
                assert!(t.lo() <= &f && &f <= t.hi());
            }
        }
    }

    #[test]
    fn g_union_is_monotone_and_subadditive() {
        let s = toy(rat(-2, 5));
        let u = g_union(2, 3, &s, 32, 1 << 20).unwrap();
        let mut sum = Rational::zero();
        for h in 1..=t_pow2(3) {
            for a in 0..1u64 << h {
                let c = g_set(&BadSetIndex::g(2, 3, a, h), &s, 32, 1 << 20).unwrap();
                assert!(c.outer.is_subset_of(&u.outer));
                assert!(u.outer.measure() >= c.outer.measure());
                sum += c.outer.measure();
            }
        }
        assert!(u.outer.measure() <= sum);
    }

    #[test]
    fn h_union_matches_component_sets() {
        let s = toy(rat(-2, 5));
        let u = h_union(2, 3, &s, 32, 1 << 22).unwrap();
        let mut all = Vec::new();
        for h in 1..=t_pow2(3) {
            for l in 2..=3 {
                for a in 0..1u64 << h {
                    for m in 1..=1u64 << (3 - l) {
                        all.push(h_set(&BadSetIndex::h(2, 3, a, h, l, m), &s, 32, 1 << 22).unwrap());
                    }
                }
            }
        }
        assert_eq!(u, SetEnclosure::union_all(all.iter()));
    }

    #[test]
    fn full_schedule_delta_is_empty_before_z2() {
        let s = ParamSchedule::paper();
        let d = delta_n(4, &s, 32, 1000).unwrap();
        assert!(d.set.is_empty() && d.levels.is_empty());
        let d = delta_n(s.p(11).unwrap(), &s, 32, 1000).unwrap();
        assert!(d.set.is_empty());
        let err = delta_n(s.p(12).unwrap(), &s, 32, 1 << 24).unwrap_err();
        assert!(matches!(err, Error::Budget { .. }));
    }

    #[test]
    fn delta_grows_with_index() {
        let s = ParamSchedule::toy("toy-small").unwrap();
        let d2 = delta_n(2, &s, 32, 1 << 24).unwrap();
        let d3 = delta_n(3, &s, 32, 1 << 24).unwrap();
        assert!(d2.set.outer.is_subset_of(&d3.set.outer));
        assert!(d2.set.inner.is_subset_of(&d3.set.inner));
        assert_eq!(delta_n(99, &s, 32, 1 << 24).unwrap().set, d3.set);
    }

    #[test]
    fn measured_tail() {
        let s = ParamSchedule::toy("toy-tail").unwrap();
        assert_eq!(r_tail_upper(3, &s, 32, 1 << 24).unwrap(), Rational::zero());
        let r2 = r_tail_upper(2, &s, 32, 1 << 24).unwrap();
        let r1 = r_tail_upper(1, &s, 32, 1 << 24).unwrap();
        assert!(r1 >= r2 && !r2.is_negative());
    }

    #[test]
    fn badic_bound_examples() {
        let e = lemma1_bound(2, 1, 64, &rat(1, 2), 64).unwrap();
        let v = 2.0 * (-16f64 / 3.0).exp();
        assert!(enclosure::to_f64(e.lo()) <= v * (1.0 + 1e-12) && enclosure::to_f64(e.hi()) >= v * (1.0 - 1e-12));
        assert!((v - 0.00966).abs() < 1e-5);
        assert!(lemma1_bound(2, 1, 64, &int(1), 64).is_err()); // eps > 1/b^m
        assert!(lemma1_bound(2, 1, 8, &rat(1, 2), 64).is_err()); // 6/8 > 1/2
        let later = lemma1_bound(2, 1, 128, &rat(1, 2), 64).unwrap();
        assert!(later.hi() < e.lo());
    }

    #[test]
    fn dyadic_bound_examples() {
        let e = lemma2_bound(2, 1, 8, &int(1), 64).unwrap();
        let v = 1728.0 * (-32f64 / 9.0).exp();
        assert!((enclosure::to_f64(e.lo()) - v).abs() < 1e-9 * v);
        assert!(v > 49.0 && v < 49.5);
        let tiny = lemma2_bound(2, 1, 4096, &rat(1, 4), 64).unwrap();
        assert!(tiny.hi() < &Rational::new(BigInt::one(), BigInt::from(10u32).pow(45)));
        assert!(tiny.lo().is_positive());
        let fine = lemma2_bound(2, 1, 4096, &rat(1, 4), 72).unwrap();
        assert!(fine.is_subset_of(&tiny));
    }

    #[test]
    fn dyadic_bound_is_beaten_by_orbits_stuck_near_zero() {
        // all 12 points of {3^j x} in [0,1/4) forces x < 1/(4·3^11)
        let row = lemma2_row(3, 2, 12, &rat(3, 4), 64).unwrap();
        assert_eq!(row.worst_measure, rat(1, 708588));
        assert_eq!(row.worst_a, 0);
        assert!(!row.vacuous);
        assert!(row.bound.hi() < &row.worst_measure);
        assert!(!row.holds);
        let swept = orbit::deviation_region(&Window::new(3, 0, 12).unwrap(), &Band::dyadic(0, 2).unwrap(), &int(9), 1 << 24);
        assert_eq!(swept.unwrap().measure(), rat(1, 708588));
        // base 2 at the same point is fine
        assert!(lemma2_row(2, 2, 12, &rat(3, 4), 64).unwrap().holds);
    }

    #[test]
    fn depth_decomposition_examples() {
        let r = dyadic_depth_decomposition_check(&int(0), 2, 4, &Interval::unit(), 2).unwrap();
        assert_eq!(r.lhs, Rational::zero());
        assert!(r.holds);
        let r = dyadic_depth_decomposition_check(&rat(2, 3), 2, 8, &Interval::new(rat(1, 5), rat(5, 7)).unwrap(), 2)
            .unwrap();
        assert!(r.holds);
    }

    #[test]
    fn block_decomposition_examples() {
        let r = block_decomposition_check(&rat(2, 3), 2, 12, 1, 0).unwrap();
        assert_eq!(r.n, 3);
        assert!(r.odd_n && r.holds);
        let r = block_decomposition_check(&rat(5, 11), 3, 16, 2, 1).unwrap();
        assert!(r.holds);
    }

    #[test]
    fn summation_examples() {
        assert!(summation_check(20, &rat(1, 8)).unwrap().holds);
        assert!(!summation_check(5, &rat(1, 8)).unwrap().holds);
    }
}
