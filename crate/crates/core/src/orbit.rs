//! The counting function `F(M, N, α₁, α₂, {b^j x})` and its level sets.
//!
//! Orbits are indexed from `j = 0`: the window `[M, M+N)` covers the points
//! `{b^M x}, …, {b^(M+N-1) x}`.
//!
//! Two exact routes to the deviation region `{x : F >= t}`:
//!
//! * [`deviation_region`] materializes the set by a sweep over the preimage
//!   breakpoints of the band. The set for window `[M, M+N)` is the pullback of
//!   the set for `[0, N)` under `x -> {b^M x}`, so only `[0, N)` is swept.
//! * [`count_distribution`] returns the exact law of the hit count under
//!   Lebesgue measure without materializing anything. It propagates densities
//!   through the transfer operator of `x -> {bx}`; for a band on the grid
//!   `1/D` these densities stay constant on every cell `[u/D, (u+1)/D)`, so the
//!   state is `(cell, count)` and the cost is polynomial in `N`.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{int, Interval, IntervalSet, Rational};

/// The target interval `[a/den, (a+1)/den)`.
///
/// Dyadic bands (`den = 2^k`) are the ones the bad sets use; `b`-adic bands
/// (`den = b^m`) are used for the Hardy–Wright style bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Band {
    pub a: u64,
    pub den: u64,
}

impl Band {
    pub fn dyadic(a: u64, k: u32) -> Result<Band> {
        if k == 0 || k > 62 {
            return Err(Error::Domain(format!("band depth k = {k} outside 1..=62")));
        }
        Band::adic(a, 2, k)
    }

    pub fn adic(a: u64, base: u64, m: u32) -> Result<Band> {
        let den = base
            .checked_pow(m)
            .ok_or_else(|| Error::Domain(format!("band denominator {base}^{m} overflows")))?;
        if a >= den {
            return Err(Error::Domain(format!("band index a = {a} must be < {den}")));
        }
        Ok(Band { a, den })
    }

    pub fn interval(&self) -> Interval {
        Interval::new_unchecked(
            Rational::new(BigInt::from(self.a), BigInt::from(self.den)),
            Rational::new(BigInt::from(self.a + 1), BigInt::from(self.den)),
        )
    }

    /// Depth `k` when `den = 2^k`.
    pub fn depth(&self) -> Option<u32> {
        self.den.is_power_of_two().then(|| self.den.trailing_zeros())
    }

    pub fn len(&self) -> Rational {
        Rational::new(BigInt::one(), BigInt::from(self.den))
    }
}

/// Orbit index range `[offset, offset + len)` for base `base`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub base: u64,
    pub offset: u64,
    pub len: u64,
}

impl Window {
    pub fn new(base: u64, offset: u64, len: u64) -> Result<Window> {
        if base < 2 {
            return Err(Error::Domain(format!("base must be >= 2, got {base}")));
        }
        if len == 0 {
            return Err(Error::Domain("window length must be >= 1".into()));
        }
        Ok(Window { base, offset, len })
    }
}

/// `{x in [0,1) : {b^j x} in band}`, of measure exactly `1/den`.
pub fn preimage_band(base: u64, j: u64, band: &Band) -> IntervalSet {
    IntervalSet::from_interval(band.interval()).pullback(base, j)
}

/// Fractional parts `{b^j x}` for `j` in the window, as residues over the denominator of `x`.
fn orbit_residues(x: &Rational, w: &Window) -> (Vec<BigInt>, BigInt) {
    let q = x.denom().clone();
    let b = BigInt::from(w.base);
    let mut r = x.numer().mod_floor_pos(&q);
    if w.offset > 0 {
        r = (r * b.modpow(&BigInt::from(w.offset), &q)) % &q;
    }
    let mut out = Vec::with_capacity(w.len as usize);
    for _ in 0..w.len {
        out.push(r.clone());
        r = (r * &b) % &q;
    }
    (out, q)
}

trait ModFloorPos {
    fn mod_floor_pos(&self, q: &BigInt) -> BigInt;
}

impl ModFloorPos for BigInt {
    fn mod_floor_pos(&self, q: &BigInt) -> BigInt {
        let r = self % q;
        if r.is_negative() {
            r + q
        } else {
            r
        }
    }
}

/// `#{j in window : {b^j x} in [lo, hi)}`.
pub fn hit_count(x: &Rational, w: &Window, target: &Interval) -> u64 {
    let (res, q) = orbit_residues(x, w);
    let (ln, ld) = (target.lo().numer(), target.lo().denom());
    let (hn, hd) = (target.hi().numer(), target.hi().denom());
    let lo_q = ln * &q;
    let hi_q = hn * &q;
    res.iter()
        .filter(|r| {
            // r/q >= ln/ld  and  r/q < hn/hd
            (*r * ld) >= lo_q && (*r * hd) < hi_q
        })
        .count() as u64
}

/// `F = |count - (α₂ - α₁) N|` for an arbitrary target interval.
pub fn f_value_interval(x: &Rational, w: &Window, target: &Interval) -> Rational {
    let count = int(hit_count(x, w, target) as i64);
    (count - target.len() * int(w.len as i64)).abs()
}

/// `F(M, N, a/den, (a+1)/den, {b^j x})`, exactly.
pub fn f_value(x: &Rational, w: &Window, band: &Band) -> Rational {
    f_value_interval(x, w, &band.interval())
}

/// `|c - N/den|` as a rational.
pub fn f_of_count(count: u64, len: u64, band: &Band) -> Rational {
    let den = band.den as i128;
    let num = (count as i128 * den - len as i128).abs();
    Rational::new(BigInt::from(num), BigInt::from(den))
}

fn pow_u128(base: u64, e: u64) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..e {
        acc = acc.checked_mul(base as u128)?;
    }
    Some(acc)
}

/// Number of breakpoint events a sweep over window `[0, N)` generates:
/// `2 (b^N - 1)/(b - 1)`, saturating.
pub fn sweep_cost(base: u64, len: u64) -> u128 {
    let mut total: u128 = 0;
    let mut p: u128 = 1;
    for _ in 0..len {
        total = total.saturating_add(p.saturating_mul(2));
        p = p.saturating_mul(base as u128);
    }
    total
}

fn check_budget(what: impl FnOnce() -> String, needed: u128, budget: u64) -> Result<()> {
    if needed > budget as u128 {
        return Err(Error::Budget { what: what(), needed: needed.to_string(), budget });
    }
    Ok(())
}

/// All preimage endpoints of the band over the window, plus 0 and 1, sorted and distinct.
pub fn breakpoints(w: &Window, band: &Band, budget: u64) -> Result<Vec<Rational>> {
    let last = w.offset + w.len;
    let cost = sweep_cost(w.base, last);
    check_budget(|| format!("breakpoints of window [{}, {})", w.offset, last), cost, budget)?;
    let mut out = vec![Rational::zero(), Rational::one()];
    let den = BigInt::from(band.den);
    for j in w.offset..last {
        let bj = BigInt::from(w.base).pow(j as u32);
        let scale = &bj * &den;
        let mut m = BigInt::zero();
        while m < bj {
            let left = &m * &den + band.a;
            out.push(Rational::new(left.clone(), scale.clone()));
            out.push(Rational::new(left + 1, scale.clone()));
            m += 1;
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Elementary cells of the sweep over window `[0, N)`: `(start, end, count)` as
/// numerators over the common denominator `b^(N-1) * den`.
struct Sweep {
    denominator: u128,
    cells: Vec<(u128, u128, u64)>,
}

fn sweep(base: u64, len: u64, band: &Band, budget: u64) -> Result<Sweep> {
    let cost = sweep_cost(base, len);
    check_budget(|| format!("sweep over window of length {len} in base {base}"), cost, budget)?;
    let top = pow_u128(base, len - 1)
        .and_then(|p| p.checked_mul(band.den as u128))
        .ok_or_else(|| Error::Budget {
            what: "sweep grid denominator".into(),
            needed: format!("{base}^{} * {}", len - 1, band.den),
            budget,
        })?;
    let den = band.den as u128;
    let a = band.a as u128;
    let mut events: Vec<(u128, i32)> = Vec::with_capacity(cost as usize);
    let mut bj: u128 = 1;
    for _ in 0..len {
        let scale = top / (bj * den);
        for m in 0..bj {
            let left = (m * den + a) * scale;
            events.push((left, 1));
            events.push((left + scale, -1));
        }
        bj *= base as u128;
    }
    events.sort_unstable();
    let mut cells = Vec::with_capacity(events.len() + 1);
    let mut count: i64 = 0;
    let mut pos: u128 = 0;
    let mut i = 0;
    while i < events.len() {
        let p = events[i].0;
        if p > pos {
            cells.push((pos, p, count as u64));
            pos = p;
        }
        while i < events.len() && events[i].0 == p {
            count += events[i].1 as i64;
            i += 1;
        }
    }
    if pos < top {
        cells.push((pos, top, count as u64));
    }
    Ok(Sweep { denominator: top, cells })
}

fn region_from_sweep(sw: &Sweep, keep: impl Fn(u64) -> bool) -> IntervalSet {
    let q = BigInt::from(sw.denominator);
    let mut parts = Vec::new();
    let mut run: Option<(u128, u128)> = None;
    for &(s, e, c) in &sw.cells {
        if keep(c) {
            run = match run {
                Some((rs, re)) if re == s => Some((rs, e)),
                Some((rs, re)) => {
                    parts.push((rs, re));
                    Some((s, e))
                }
                None => Some((s, e)),
            };
        }
    }
    if let Some(r) = run {
        parts.push(r);
    }
    let parts = parts
        .into_iter()
        .map(|(s, e)| {
            Interval::new_unchecked(
                Rational::new(BigInt::from(s), q.clone()),
                Rational::new(BigInt::from(e), q.clone()),
            )
        })
        .collect();
    IntervalSet::from_parts(parts)
}

/// `{x : count of hits over the window satisfies keep}`, exact.
pub fn count_region(
    w: &Window,
    band: &Band,
    keep: impl Fn(u64) -> bool,
    budget: u64,
) -> Result<IntervalSet> {
    let base_region = {
        let sw = sweep(w.base, w.len, band, budget)?;
        region_from_sweep(&sw, keep)
    };
    if w.offset == 0 || base_region.is_empty() || base_region == IntervalSet::unit() {
        return Ok(base_region);
    }
    let copies = pow_u128(w.base, w.offset).unwrap_or(u128::MAX);
    let needed = copies.saturating_mul(base_region.len() as u128);
    check_budget(
        || format!("pullback of {} parts by {}^{}", base_region.len(), w.base, w.offset),
        needed,
        budget,
    )?;
    Ok(base_region.pullback(w.base, w.offset))
}

/// `{x in [0,1) : F(M, N, band, {b^j x}) >= t}`, exact.
pub fn deviation_region(w: &Window, band: &Band, t: &Rational, budget: u64) -> Result<IntervalSet> {
    let w = *w;
    let b = *band;
    let t = t.clone();
    count_region(&w, band, move |c| f_of_count(c, w.len, &b) >= t, budget)
}

/// `{x : F > t}` (strict), used where a bound is stated with `>`.
pub fn deviation_region_strict(w: &Window, band: &Band, t: &Rational, budget: u64) -> Result<IntervalSet> {
    let w = *w;
    let b = *band;
    let t = t.clone();
    count_region(&w, band, move |c| f_of_count(c, w.len, &b) > t, budget)
}

/// Exact law of the hit count over any window of length `len`.
///
/// Returns weights `W[c]` with `Σ W[c] = b^len * den`; the measure of
/// `{count = c}` is `W[c] / (b^len * den)`. The offset of the window does not
/// enter: Lebesgue measure is invariant under `x -> {bx}`.
pub fn count_distribution(base: u64, len: u64, band: &Band) -> Result<(Vec<BigUint>, BigUint)> {
    if base < 2 {
        return Err(Error::Domain(format!("base must be >= 2, got {base}")));
    }
    let d = band.den as usize;
    if d > 1 << 20 {
        return Err(Error::Domain(format!("band grid {d} too fine for the transfer method")));
    }
    let n = len as usize;
    // successor cell for (u, digit): floor((u + digit*D)/b)
    let succ: Vec<Vec<usize>> = (0..d)
        .map(|u| (0..base as usize).map(|dig| (u + dig * d) / base as usize).collect())
        .collect();
    let a = band.a as usize;
    // weights[c][u]
    let mut cur: Vec<Vec<BigUint>> = vec![vec![BigUint::one(); d]];
    for step in 0..n {
        let mut next: Vec<Vec<BigUint>> = vec![vec![BigUint::zero(); d]; step + 2];
        for (c, row) in cur.iter().enumerate() {
            for u in 0..d {
                for &v in &succ[u] {
                    let w = &row[v];
                    if w.is_zero() {
                        continue;
                    }
                    let nc = if v == a { c + 1 } else { c };
                    next[nc][u] += w;
                }
            }
        }
        cur = next;
    }
    let weights: Vec<BigUint> = cur.into_iter().map(|row| row.into_iter().sum()).collect();
    let total = BigUint::from(base).pow(len as u32) * BigUint::from(band.den);
    debug_assert_eq!(weights.iter().sum::<BigUint>(), total);
    Ok((weights, total))
}

/// Exact measure of `{x : keep(count)}` via [`count_distribution`].
pub fn count_measure(w: &Window, band: &Band, keep: impl Fn(u64) -> bool) -> Result<Rational> {
    let (weights, total) = count_distribution(w.base, w.len, band)?;
    let hit: BigUint = weights
        .iter()
        .enumerate()
        .filter(|(c, _)| keep(*c as u64))
        .map(|(_, x)| x)
        .sum();
    Ok(Rational::new(BigInt::from(hit), BigInt::from(total)))
}

/// Exact measure of `{x : F >= t}` without materializing the set.
pub fn deviation_measure(w: &Window, band: &Band, t: &Rational) -> Result<Rational> {
    count_measure(w, band, |c| f_of_count(c, w.len, band) >= *t)
}

pub fn deviation_measure_strict(w: &Window, band: &Band, t: &Rational) -> Result<Rational> {
    count_measure(w, band, |c| f_of_count(c, w.len, band) > *t)
}

/// Distinct values `F` can take on a window of length `len`.
pub fn attainable_f_values(len: u64, band: &Band) -> Vec<Rational> {
    let mut v: Vec<Rational> = (0..=len).map(|c| f_of_count(c, len, band)).collect();
    v.sort_unstable();
    v.dedup();
    v
}
