//! Digit emission by nested dyadic halving.
//!
//! Step `n` splits `I_{n-1}` into halves `I⁰, I¹` and picks the smallest `d`
//! with `μ(outer Δ_{p_n} ∩ I^d) + r_{p_n} < 2^-n`. The outer enclosure makes a
//! passing test sound; a test that fails only because of enclosure slack
//! triggers a precision refinement before the other half is considered.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::badsets::{self, DeltaEnclosure};
use crate::enclosure::{self, RealEnclosure};
use crate::error::{Error, Result};
use crate::measure::{fmt_rat, int, pow2_neg, rat_str, Interval, Rational};
use crate::schedule::{ParamSchedule, MAX_STEP};

pub const CERT_SCHEMA: &str = "absnorm.certificate";
pub const CERT_VERSION: u32 = 1;
/// Refinement rounds per step, doubling the precision each round.
pub const REFINEMENT_ROUNDS: u32 = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: u64,
    /// Index `p_n` of the finite approximation `Δ_{p_n}`.
    pub p: u64,
    pub left: Interval,
    pub right: Interval,
    pub digit: u8,
    /// `μ(outer Δ_{p_n} ∩ I⁰)`.
    #[serde(with = "rat_str")]
    pub measure_left: Rational,
    /// `μ(outer Δ_{p_n} ∩ I¹)`.
    #[serde(with = "rat_str")]
    pub measure_right: Rational,
    #[serde(with = "rat_str")]
    pub tail: Rational,
    #[serde(with = "rat_str")]
    pub threshold: Rational,
    pub precision: u64,
    pub delta_parts: usize,
    pub delta_levels: usize,
}

impl StepRecord {
    pub fn chosen_measure(&self) -> &Rational {
        if self.digit == 0 {
            &self.measure_left
        } else {
            &self.measure_right
        }
    }

    pub fn chosen(&self) -> &Interval {
        if self.digit == 0 {
            &self.left
        } else {
            &self.right
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub schema: String,
    pub version: u32,
    pub schedule: ParamSchedule,
    pub schedule_hash: String,
    pub precision: u64,
    pub budget: u64,
    pub digits: String,
    pub steps: Vec<StepRecord>,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Certificate> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("certificate: {e}")))
    }
}

/// Mutable construction state; `Δ` enclosures and tails are cached by `(index, precision)`.
pub struct ConstructionState {
    sched: ParamSchedule,
    interval: Interval,
    digits: Vec<u8>,
    deltas: HashMap<(u64, u64), Arc<DeltaEnclosure>>,
    tails: HashMap<(u64, u64), Rational>,
}

impl ConstructionState {
    pub fn new(sched: ParamSchedule) -> Result<Self> {
        sched.validate()?;
        Ok(ConstructionState {
            sched,
            interval: Interval::unit(),
            digits: Vec::new(),
            deltas: HashMap::new(),
            tails: HashMap::new(),
        })
    }

    pub fn interval(&self) -> &Interval {
        &self.interval
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn schedule(&self) -> &ParamSchedule {
        &self.sched
    }

    fn delta(&mut self, p: u64, precision: u64, budget: u64) -> Result<Arc<DeltaEnclosure>> {
        let key = (self.sched.effective_index(p), precision);
        if let Some(d) = self.deltas.get(&key) {
            return Ok(d.clone());
        }
        let d = Arc::new(badsets::delta_n(p, &self.sched, precision, budget)?);
        self.deltas.insert(key, d.clone());
        Ok(d)
    }

    fn tail(&mut self, p: u64, precision: u64, budget: u64) -> Result<Rational> {
        let key = (self.sched.effective_index(p), precision);
        if let Some(r) = self.tails.get(&key) {
            return Ok(r.clone());
        }
        let r = match self.sched.horizon {
            // reuse the cached sets rather than recomputing them inside r_tail_upper
            Some(k) if p < k => {
                let full = self.delta(k, precision, budget)?;
                let part = self.delta(p, precision, budget)?;
                full.set.outer.measure() - part.set.inner.measure()
            }
            _ => badsets::r_tail_upper(p, &self.sched, precision, budget)?,
        };
        self.tails.insert(key, r.clone());
        Ok(r)
    }

    /// Whether raising the precision could change any quantity of this step.
    fn refinable(&mut self, p: u64, precision: u64, budget: u64) -> Result<bool> {
        if !self.delta(p, precision, budget)?.set.is_exact() {
            return Ok(true);
        }
        match self.sched.horizon {
            Some(k) if p < k => Ok(!self.delta(k, precision, budget)?.set.is_exact()),
            _ => Ok(false),
        }
    }

    /// Decides the next digit.
    pub fn step(&mut self, precision: u64, budget: u64) -> Result<(u8, StepRecord)> {
        let n = self.digits.len() as u64 + 1;
        if n > MAX_STEP + 1 {
            return Err(Error::Domain(format!("step {n} beyond the supported range")));
        }
        let p = self.sched.p(n)?;
        let (left, right) = self.interval.halves();
        let threshold = pow2_neg(n);
        let mut last = None;
        for round in 0..=REFINEMENT_ROUNDS {
            let prec = precision << round;
            let delta = self.delta(p, prec, budget)?;
            let r = self.tail(p, prec, budget)?;
            let ml = delta.set.outer.intersect_interval(&left).measure();
            let mr = delta.set.outer.intersect_interval(&right).measure();
            let record = |digit: u8| StepRecord {
                n,
                p,
                left: left.clone(),
                right: right.clone(),
                digit,
                measure_left: ml.clone(),
                measure_right: mr.clone(),
                tail: r.clone(),
                threshold: threshold.clone(),
                precision: prec,
                delta_parts: delta.set.outer.len(),
                delta_levels: delta.levels.len(),
            };
            let can_refine = round < REFINEMENT_ROUNDS && self.refinable(p, prec, budget)?;
            if &ml + &r < threshold {
                return Ok(self.commit(record(0)));
            }
            let left_inner = delta.set.inner.intersect_interval(&left).measure();
            if can_refine && &left_inner + &r < threshold {
                continue;
            }
            if &mr + &r < threshold {
                return Ok(self.commit(record(1)));
            }
            last = Some((ml.clone() + &r, mr.clone() + &r));
            if !can_refine {
                break;
            }
        }
        let (l, r) = last.expect("at least one round ran");
        Err(Error::Indeterminate { step: n, left: fmt_rat(&l), right: fmt_rat(&r), threshold: fmt_rat(&threshold) })
    }

    fn commit(&mut self, rec: StepRecord) -> (u8, StepRecord) {
        self.interval = rec.chosen().clone();
        self.digits.push(rec.digit);
        (rec.digit, rec)
    }
}

/// Runs `count` steps, handing each digit to `emit` as soon as it is decided.
pub fn run_streaming(
    sched: &ParamSchedule,
    count: u64,
    precision: u64,
    budget: u64,
    mut emit: impl FnMut(u8, &StepRecord),
) -> Result<Certificate> {
    if count == 0 {
        return Err(Error::Domain("digit count must be >= 1".into()));
    }
    if precision == 0 {
        return Err(Error::Domain("precision must be >= 1".into()));
    }
    let mut state = ConstructionState::new(sched.clone())?;
    let mut steps = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let (d, rec) = state.step(precision, budget)?;
        emit(d, &rec);
        steps.push(rec);
    }
    Ok(Certificate {
        schema: CERT_SCHEMA.into(),
        version: CERT_VERSION,
        schedule: sched.clone(),
        schedule_hash: sched.hash(),
        precision,
        budget,
        digits: digits_string(state.digits()),
        steps,
    })
}

pub fn run(sched: &ParamSchedule, count: u64, precision: u64, budget: u64) -> Result<(String, Certificate)> {
    let cert = run_streaming(sched, count, precision, budget, |_, _| {})?;
    Ok((cert.digits.clone(), cert))
}

pub fn digits_string(d: &[u8]) -> String {
    d.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}

/// `[0.d₁…dₙ, 0.d₁…dₙ + 2^-n)`.
pub fn prefix_interval(digits: &str) -> Result<Interval> {
    let mut num = BigInt::zero();
    for c in digits.chars() {
        num <<= 1;
        match c {
            '0' => {}
            '1' => num += 1,
            _ => return Err(Error::Parse(format!("digit {c:?} is not binary"))),
        }
    }
    let den = BigInt::one() << digits.len();
    Interval::new(Rational::new(num.clone(), den.clone()), Rational::new(num + 1, den))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub step: Option<u64>,
    pub field: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub steps_checked: usize,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    fn fail(&mut self, step: Option<u64>, field: &str, detail: String) {
        self.mismatches.push(Mismatch { step, field: field.into(), detail });
    }

    /// First step named in a mismatch.
    pub fn first_bad_step(&self) -> Option<u64> {
        self.mismatches.iter().filter_map(|m| m.step).min()
    }
}

/// Recomputes every step from scratch and checks all recorded quantities.
///
/// When `sched` is given it must match the schedule embedded in the certificate.
pub fn verify_certificate(cert: &Certificate, sched: Option<&ParamSchedule>, budget: u64) -> Result<VerifyReport> {
    let mut rep = VerifyReport::default();
    if cert.schema != CERT_SCHEMA || cert.version != CERT_VERSION {
        return Err(Error::Parse(format!("unsupported certificate {} v{}", cert.schema, cert.version)));
    }
    cert.schedule.validate()?;
    if let Some(s) = sched {
        if *s != cert.schedule {
            rep.fail(None, "schedule", format!("certificate schedule {} differs from {}", cert.schedule.name, s.name));
        }
    }
    if cert.schedule_hash != cert.schedule.hash() {
        rep.fail(None, "schedule_hash", format!("recorded {} computed {}", cert.schedule_hash, cert.schedule.hash()));
    }
    if cert.digits.len() != cert.steps.len() {
        rep.fail(None, "digits", format!("{} digits for {} steps", cert.digits.len(), cert.steps.len()));
    }
    let digits: Vec<char> = cert.digits.chars().collect();
    let mut prev = Interval::unit();
    for (i, st) in cert.steps.iter().enumerate() {
        let n = i as u64 + 1;
        let at = Some(n);
        rep.steps_checked += 1;
        if st.n != n {
            rep.fail(at, "n", format!("recorded {}", st.n));
        }
        match cert.schedule.p(n) {
            Ok(p) if p == st.p => {}
            Ok(p) => rep.fail(at, "p", format!("recorded {} expected {p}", st.p)),
            Err(e) => rep.fail(at, "p", e.to_string()),
        }
        if st.threshold != pow2_neg(n) {
            rep.fail(at, "threshold", format!("recorded {}", fmt_rat(&st.threshold)));
        }
        let (l, r) = prev.halves();
        if st.left != l || st.right != r {
            rep.fail(at, "halves", format!("recorded {} | {}, expected {l} | {r}", st.left, st.right));
        }
        if st.digit > 1 {
            rep.fail(at, "digit", format!("recorded {}", st.digit));
        }
        let ch = digits.get(i).copied();
        if ch != Some(if st.digit == 0 { '0' } else { '1' }) {
            rep.fail(at, "digit", format!("step digit {} but digit string has {ch:?}", st.digit));
        }
        let chosen = st.chosen().clone();
        if chosen.len() != pow2_neg(n) || !chosen.is_subset_of(&prev) {
            rep.fail(at, "nesting", format!("{chosen} is not a half of {prev}"));
        }
        match prefix_interval(&cert.digits.chars().take(i + 1).collect::<String>()) {
            Ok(iv) if iv == chosen => {}
            Ok(iv) => rep.fail(at, "digits", format!("digit prefix gives {iv}, step chose {chosen}")),
            Err(e) => rep.fail(at, "digits", e.to_string()),
        }
        // independent recomputation, no caches
        let delta = badsets::delta_n(st.p, &cert.schedule, st.precision, budget)?;
        let tail = badsets::r_tail_upper(st.p, &cert.schedule, st.precision, budget)?;
        let ml = delta.set.outer.intersect_interval(&st.left).measure();
        let mr = delta.set.outer.intersect_interval(&st.right).measure();
        if ml != st.measure_left {
            rep.fail(at, "measure_left", format!("recorded {} recomputed {}", fmt_rat(&st.measure_left), fmt_rat(&ml)));
        }
        if mr != st.measure_right {
            rep.fail(at, "measure_right", format!("recorded {} recomputed {}", fmt_rat(&st.measure_right), fmt_rat(&mr)));
        }
        if tail != st.tail {
            rep.fail(at, "tail", format!("recorded {} recomputed {}", fmt_rat(&st.tail), fmt_rat(&tail)));
        }
        if delta.set.outer.len() != st.delta_parts || delta.levels.len() != st.delta_levels {
            rep.fail(
                at,
                "components",
                format!(
                    "recorded {}/{} recomputed {}/{}",
                    st.delta_parts,
                    st.delta_levels,
                    delta.set.outer.len(),
                    delta.levels.len()
                ),
            );
        }
        // the recorded inequality itself
        if !(st.chosen_measure() + &st.tail < st.threshold) {
            rep.fail(at, "inequality", "chosen measure + tail is not below the threshold".into());
        }
        if st.digit == 1 && &st.measure_left + &st.tail < st.threshold {
            rep.fail(at, "smallest-digit", "left half passes, digit 0 should have been chosen".into());
        }
        prev = chosen;
    }
    rep.ok = rep.mismatches.is_empty();
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainRow {
    pub n: u64,
    pub p: u64,
    #[serde(with = "rat_str")]
    pub tail: Rational,
    /// `Σ_{j<=n} 2^(j-1) r_{p_j}`.
    #[serde(with = "rat_str")]
    pub partial_sum: Rational,
    /// `Σ_{j<=n} 2^(j-1) (b_{p_j}/p_j + η 2^(-b_{p_j}))`.
    #[serde(with = "rat_str")]
    pub majorant: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainReport {
    pub rows: Vec<ChainRow>,
    /// `3/4 + η/4`.
    #[serde(with = "rat_str")]
    pub headroom: Rational,
    pub below_seven_eighths: bool,
    pub with_eta_below_one: bool,
    pub majorant_dominates: bool,
    pub headroom_holds: bool,
}

impl ChainReport {
    pub fn holds(&self) -> bool {
        self.below_seven_eighths && self.with_eta_below_one && self.majorant_dominates && self.headroom_holds
    }
}

/// Exact partial sums of `2^(j-1) r_{p_j}` against `7/8` and `1 - η`.
pub fn inequality_chain_check(sched: &ParamSchedule, n_max: u64) -> Result<ChainReport> {
    if n_max == 0 || n_max > MAX_STEP {
        return Err(Error::Domain(format!("n_max must lie in 1..={MAX_STEP}")));
    }
    let mut rows = Vec::new();
    let mut sum = Rational::zero();
    let mut maj = Rational::zero();
    for n in 1..=n_max {
        let p = sched.p(n)?;
        let r = sched.tail_upper_analytic(p)?;
        let w = Rational::from_integer(BigInt::one() << (n - 1) as usize);
        let bp = sched.bcap(p);
        sum += &w * &r;
        maj += &w * (Rational::new(BigInt::from(bp), BigInt::from(p)) + &sched.eta * pow2_neg(bp));
        rows.push(ChainRow { n, p, tail: r, partial_sum: sum.clone(), majorant: maj.clone() });
    }
    let seven_eighths = Rational::new(BigInt::from(7), BigInt::from(8));
    let headroom = Rational::new(BigInt::from(3), BigInt::from(4)) + &sched.eta / int(4);
    let below = rows.iter().all(|r| r.partial_sum < seven_eighths);
    let with_eta = rows.iter().all(|r| &sched.eta + &r.partial_sum < int(1));
    let dominated = rows.iter().all(|r| r.partial_sum <= r.majorant);
    let head = rows.iter().all(|r| r.majorant < headroom) && headroom <= seven_eighths;
    Ok(ChainReport {
        rows,
        headroom,
        below_seven_eighths: below,
        with_eta_below_one: with_eta,
        majorant_dominates: dominated,
        headroom_holds: head,
    })
}

/// `log₂` of the naive operation count `(2n+2)^(2^(2^(2n+2)))`, kept symbolic:
/// the value is `factor · 2^shift` with `shift = 2^(2n+2)` and `factor = log₂(2n+2)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub n: u64,
    pub shift: u64,
    pub factor: RealEnclosure,
}

impl CostEstimate {
    pub fn is_exact(&self) -> bool {
        self.factor.is_exact()
    }

    /// The full integer when it is exact and small enough to print.
    pub fn exact_value(&self) -> Option<BigUint> {
        if !self.factor.is_exact() || self.shift > 1 << 16 {
            return None;
        }
        let f = self.factor.lo().to_integer().to_biguint()?;
        Some(f << self.shift as usize)
    }

    /// Strict comparison; shifts differ by a factor of 4 between steps while factors stay below 64.
    pub fn exceeds(&self, other: &CostEstimate) -> bool {
        if self.shift != other.shift {
            return self.shift > other.shift;
        }
        self.factor.lo() > other.factor.hi()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        if self.is_exact() {
            let _ = write!(s, "{} * 2^{}", self.factor.lo().to_integer(), self.shift);
        } else {
            let _ = write!(s, "[{}, {}] * 2^{}", fmt_rat(self.factor.lo()), fmt_rat(self.factor.hi()), self.shift);
        }
        s
    }
}

pub fn cost_estimate(n: u64) -> Result<CostEstimate> {
    if n == 0 || n > MAX_STEP {
        return Err(Error::Domain(format!("n must lie in 1..={MAX_STEP}")));
    }
    let factor = enclosure::log2(&int(2 * n as i64 + 2), 64)?;
    Ok(CostEstimate { n, shift: 1 << (2 * n + 2), factor })
}

pub const DIGITS_PER_LINE: usize = 64;

/// Digit file: `#` header lines, then 64 binary digits per line.
pub fn write_digit_file(digits: &str, sched: &ParamSchedule, precision: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# absnorm digits v1");
    let _ = writeln!(out, "# preset: {}", sched.name);
    let _ = writeln!(out, "# schedule-hash: {}", sched.hash());
    let _ = writeln!(out, "# delta: {}  eta: {}", fmt_rat(&sched.delta), fmt_rat(&sched.eta));
    let _ = writeln!(out, "# precision: {precision}");
    let _ = writeln!(out, "# count: {}", digits.len());
    for chunk in digits.as_bytes().chunks(DIGITS_PER_LINE) {
        out.push_str(std::str::from_utf8(chunk).expect("ascii digits"));
        out.push('\n');
    }
    out
}

/// Reads the digits back, ignoring header and blank lines.
pub fn read_digit_file(text: &str) -> Result<String> {
    let mut digits = String::new();
    let mut declared = None;
    for line in text.lines() {
        let line = line.trim();
        if let Some(h) = line.strip_prefix('#') {
            if let Some(c) = h.trim().strip_prefix("count:") {
                declared = Some(c.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad count {c:?}")))?);
            }
            continue;
        }
        for c in line.chars() {
            match c {
                '0' | '1' => digits.push(c),
                _ => return Err(Error::Parse(format!("unexpected character {c:?} in digit file"))),
            }
        }
    }
    if let Some(n) = declared {
        if n != digits.len() {
            return Err(Error::Parse(format!("header declares {n} digits, file has {}", digits.len())));
        }
    }
    if digits.is_empty() {
        return Err(Error::Parse("digit file holds no digits".into()));
    }
    Ok(digits)
}
