//! Independent reference computations shared by the oracle tests and the
//! acceptance suite. Everything here is brute force on purpose.
#![allow(dead_code)]

use absnorm_core::measure::{int, rat};
use absnorm_core::{Interval, IntervalSet, Rational};

/// Hit counts of the band `[a/2^k, (a+1)/2^k)` over the window
/// `[offset, offset+len)`, one per cell `[c/Q, (c+1)/Q)` with
/// `Q = b^(offset+len-1) 2^k`. Every breakpoint of the count lies on this grid,
/// so the count is constant on each cell and read off at its left end.
pub fn cell_hits(b: u64, offset: u64, len: u64, a: u64, k: u32) -> (u128, Vec<u32>) {
    let q = (b as u128).pow((offset + len - 1) as u32) << k;
    let lo = a as u128 * q;
    let hi = (a as u128 + 1) * q;
    let mut mult = Vec::with_capacity(len as usize);
    let mut p = (b as u128).pow(offset as u32) % q;
    for _ in 0..len {
        mult.push(p);
        p = p * b as u128 % q;
    }
    let hits = (0..q)
        .map(|c| {
            mult.iter()
                .filter(|&&m| {
                    let r = (c * m % q) << k;
                    r >= lo && r < hi
                })
                .count() as u32
        })
        .collect();
    (q, hits)
}

/// `|count - len/2^k|`.
pub fn deviation(count: u32, len: u64, k: u32) -> Rational {
    let d = ((count as i64) << k) - len as i64;
    rat(d.abs(), 1 << k)
}

/// `{x : F >= t}` assembled cell by cell.
pub fn cylinder_region(b: u64, offset: u64, len: u64, a: u64, k: u32, t: &Rational) -> IntervalSet {
    let (q, hits) = cell_hits(b, offset, len, a, k);
    let qi = Rational::from_integer(q.into());
    let mut parts = Vec::new();
    let mut start: Option<u128> = None;
    for (c, &h) in hits.iter().enumerate() {
        let keep = deviation(h, len, k) >= *t;
        match (keep, start) {
            (true, None) => start = Some(c as u128),
            (false, Some(s)) => {
                parts.push(cell_span(s, c as u128, &qi));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        parts.push(cell_span(s, q, &qi));
    }
    IntervalSet::from_parts(parts)
}

fn cell_span(s: u128, e: u128, q: &Rational) -> Interval {
    let lo = Rational::from_integer(s.into()) / q;
    let hi = Rational::from_integer(e.into()) / q;
    Interval::new(lo, hi).expect("nonempty run")
}

/// Number of cells with `F >= t`.
pub fn cells_at_least(hits: &[u32], len: u64, k: u32, t: &Rational) -> u128 {
    hits.iter().filter(|&&h| deviation(h, len, k) >= *t).count() as u128
}

/// An interval endpoint; `plus` is the right limit `v⁺`.
#[derive(Clone)]
struct End {
    v: Rational,
    plus: bool,
}

fn count_in(points: &[Rational], u: &End, v: &End) -> usize {
    points
        .iter()
        .filter(|p| {
            let above = if u.plus { **p > u.v } else { **p >= u.v };
            let below = if v.plus { **p <= v.v } else { **p < v.v };
            above && below
        })
        .count()
}

/// `(D_N, D*_N)` by enumerating every critical interval: `u` ranges over
/// `{0, x_i, x_i⁺}` and `v` over `{1, x_j, x_j⁺}`.
pub fn brute_discrepancy(points: &[Rational]) -> (Rational, Rational) {
    let n = int(points.len() as i64);
    let mut us = vec![End { v: int(0), plus: false }];
    let mut vs = vec![End { v: int(1), plus: false }];
    for p in points {
        us.push(End { v: p.clone(), plus: false });
        us.push(End { v: p.clone(), plus: true });
        vs.push(End { v: p.clone(), plus: false });
        vs.push(End { v: p.clone(), plus: true });
    }
    let zero = int(0);
    let mut d = zero.clone();
    let mut d_star = zero.clone();
    for u in &us {
        for v in &vs {
            let empty = v.v < u.v || (v.v == u.v && (u.plus || !v.plus));
            if empty {
                continue;
            }
            let c = int(count_in(points, u, v) as i64) / &n;
            let len = &v.v - &u.v;
            let dev = if c > len { &c - &len } else { &len - &c };
            if dev > d {
                d = dev.clone();
            }
            if u.v == zero && !u.plus && dev > d_star {
                d_star = dev;
            }
        }
    }
    (d, d_star)
}

/// Fractional parts `{b^j x}`, `j < n`, by repeated multiplication.
pub fn orbit(x: &Rational, b: u64, n: u64) -> Vec<Rational> {
    let mut y = x.clone();
    let mut out = Vec::new();
    for _ in 0..n {
        let f = &y - Rational::from_integer(y.floor().to_integer());
        out.push(f.clone());
        y = f * int(b as i64);
    }
    out
}
