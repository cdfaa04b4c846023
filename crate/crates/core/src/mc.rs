//! Seeded Monte Carlo estimates of measures, used to cross-check the exact engine.
//!
//! Sample `i` of stream `s` under seed `σ` is the dyadic rational `u / 2^L`,
//! where `u` is read from the ChaCha20 keystream for `(σ, s)` starting at word
//! `i·L/32`. Any sample can be regenerated on its own, so ranges of indices
//! are drawn in parallel and the hit count does not depend on scheduling.
//!
//! The 4σ test is done exactly: with `p̂` the hit fraction, `v = p̂(1-p̂)/n` and
//! `d` the distance from `p̂` to the reference enclosure, the verdict is
//! consistent iff `d² <= 16 v`.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::badsets;
use crate::enclosure::{self, RealEnclosure};
use crate::error::{Error, Result};
use crate::measure::{int, rat, rat_str, Interval, IntervalSet, Rational};
use crate::orbit::{self, Band, Window};

pub const ESTIMATE_SCHEMA: &str = "absnorm.estimate/1";
pub const MIN_SAMPLES: u64 = 100;
pub const DEFAULT_RESOLUTION: u32 = 128;

const CHUNK: u64 = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub seed: u64,
    pub samples: u64,
    pub stream: u64,
    /// `L`, a positive multiple of 64 and at least 128.
    pub resolution_bits: u32,
}

impl SamplerSpec {
    pub fn new(seed: u64, samples: u64) -> SamplerSpec {
        SamplerSpec { seed, samples, stream: 0, resolution_bits: DEFAULT_RESOLUTION }
    }

    /// Same seed and size on an independent stream.
    pub fn split(&self, stream: u64) -> SamplerSpec {
        SamplerSpec { stream, ..*self }
    }

    pub fn with_resolution(&self, bits: u32) -> SamplerSpec {
        SamplerSpec { resolution_bits: bits, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < MIN_SAMPLES {
            return Err(Error::Domain(format!("need at least {MIN_SAMPLES} samples, got {}", self.samples)));
        }
        if self.resolution_bits < 128 || !self.resolution_bits.is_multiple_of(64) {
            return Err(Error::Domain(format!("resolution {} is not a multiple of 64 that is >= 128", self.resolution_bits)));
        }
        Ok(())
    }

    fn words(&self) -> u128 {
        u128::from(self.resolution_bits / 32)
    }

    /// Samples `start..end`, in order.
    pub fn draw_range(&self, start: u64, end: u64) -> Vec<Rational> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(u128::from(start) * self.words());
        let bytes = (self.resolution_bits / 8) as usize;
        let den = BigInt::one() << self.resolution_bits as usize;
        let mut buf = vec![0u8; bytes];
        (start..end)
            .map(|_| {
                rng.fill_bytes(&mut buf);
                Rational::new(BigUint::from_bytes_le(&buf).into(), den.clone())
            })
            .collect()
    }

    pub fn draw(&self, i: u64) -> Rational {
        self.draw_range(i, i + 1).pop().expect("one sample")
    }
}

/// Smallest admissible `L` with `2^L >= b^steps · den · 2^64`, so that at most a
/// `2^-64` share of sample cells straddles a breakpoint of an orbit region.
pub fn resolution_for(base: u64, steps: u64, den: u64) -> u32 {
    let per_step = 64 - (base - 1).leading_zeros() as u64;
    let den_bits = 64 - (den.max(1) - 1).leading_zeros() as u64;
    let need = (per_step * steps + den_bits + 64).max(128);
    (need.div_ceil(64) * 64) as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    /// No reference value was supplied.
    Unchecked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema: String,
    pub seed: u64,
    pub stream: u64,
    pub samples: u64,
    pub resolution_bits: u32,
    pub hits: u64,
    #[serde(with = "rat_str")]
    pub estimate: Rational,
    /// `p̂(1-p̂)/n`, the squared standard error.
    #[serde(with = "rat_str")]
    pub variance: Rational,
    pub std_error: f64,
    /// Outward enclosure of `[p̂ - 4σ, p̂ + 4σ]`.
    pub interval: RealEnclosure,
    pub exact: Option<RealEnclosure>,
    pub verdict: Verdict,
}

impl EstimateReport {
    pub fn consistent(&self) -> bool {
        self.verdict == Verdict::Consistent
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Distance from `p` to the enclosure, zero inside it.
fn distance(p: &Rational, e: &RealEnclosure) -> Rational {
    if p < e.lo() {
        e.lo() - p
    } else if p > e.hi() {
        p - e.hi()
    } else {
        Rational::zero()
    }
}

/// `|p - q| <= 4σ` for `σ² = variance`.
fn within_four_sigma(d: &Rational, variance: &Rational) -> bool {
    d * d <= variance * int(16)
}

/// Estimate the measure of `{x : region(x)}`; `exact`, when given, decides the verdict.
pub fn mc_measure<F>(region: F, spec: &SamplerSpec, exact: Option<RealEnclosure>) -> Result<EstimateReport>
where
    F: Fn(&Rational) -> bool + Sync,
{
    spec.validate()?;
    let chunks: Vec<u64> = (0..spec.samples.div_ceil(CHUNK)).collect();
    let hits: u64 = chunks
        .par_iter()
        .map(|&c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(spec.samples);
            spec.draw_range(start, end).iter().filter(|x| region(x)).count() as u64
        })
        .sum();
    let n = int(spec.samples as i64);
    let p = int(hits as i64) / &n;
    let variance = &p * (int(1) - &p) / &n;
    let sigma = enclosure::sqrt(&variance, 64)?;
    let band = sigma.scale(&int(4));
    let interval = RealEnclosure::new(&p - band.hi(), &p + band.hi());
    let verdict = match &exact {
        None => Verdict::Unchecked,
        Some(e) if within_four_sigma(&distance(&p, e), &variance) => Verdict::Consistent,
        Some(_) => Verdict::Inconsistent,
    };
    Ok(EstimateReport {
        schema: ESTIMATE_SCHEMA.into(),
        seed: spec.seed,
        stream: spec.stream,
        samples: spec.samples,
        resolution_bits: spec.resolution_bits,
        hits,
        std_error: enclosure::to_f64(sigma.hi()),
        estimate: p,
        variance,
        interval,
        exact,
        verdict,
    })
}

/// Estimate the measure of an exact interval set, checked against its exact measure.
pub fn mc_measure_set(set: &IntervalSet, spec: &SamplerSpec) -> Result<EstimateReport> {
    mc_measure(|x| set.contains(x), spec, Some(RealEnclosure::exact(set.measure())))
}

/// Membership in `{x : F(M, N, band) >= t}` (or `> t`), evaluated on the orbit of `x` directly.
pub fn deviation_predicate(w: Window, band: Band, t: Rational, strict: bool) -> impl Fn(&Rational) -> bool + Sync {
    let target: Interval = band.interval();
    move |x: &Rational| {
        let f = orbit::f_value_interval(x, &w, &target);
        if strict {
            f > t
        } else {
            f >= t
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVerdict {
    /// The bound is at least 1, so there is nothing to check.
    Vacuous,
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lemma: u8,
    pub b: u64,
    pub k: u64,
    pub n: u64,
    #[serde(with = "rat_str")]
    pub eps: Rational,
    /// Band index with the largest exact measure.
    pub a: u64,
    pub bound: RealEnclosure,
    pub estimate: EstimateReport,
    pub verdict: BoundVerdict,
}

/// Sample the worst-case deviation region for one of the two closed-form bounds.
///
/// `lemma = 1`: `b`-adic band of depth `k`, region `{F > εN}`.
/// `lemma = 2`: dyadic band of depth `k`, region `{F >= εN}`.
/// The exact measure comes from the transfer-operator count law.
pub fn check_bound(lemma: u8, b: u64, k: u64, n: u64, eps: &Rational, spec: &SamplerSpec, precision: u64) -> Result<BoundCheck> {
    let (row, band, strict) = match lemma {
        1 => {
            let row = badsets::lemma1_row(b, k, n, eps, precision)?;
            let band = Band::adic(row.worst_a, b, k as u32)?;
            (row, band, true)
        }
        2 => {
            let row = badsets::lemma2_row(b, k, n, eps, precision)?;
            let band = Band::dyadic(row.worst_a, k as u32)?;
            (row, band, false)
        }
        _ => return Err(Error::Domain(format!("no closed-form bound numbered {lemma}"))),
    };
    let w = Window::new(b, 0, n)?;
    let t = eps * int(n as i64);
    let bits = spec.resolution_bits.max(resolution_for(b, n, band.den));
    let spec = spec.with_resolution(bits);
    let exact = RealEnclosure::exact(row.worst_measure.clone());
    let estimate = mc_measure(deviation_predicate(w, band, t, strict), &spec, Some(exact))?;
    let hi = row.bound.hi();
    let verdict = if hi >= &int(1) {
        BoundVerdict::Vacuous
    } else {
        let below = &estimate.estimate <= hi || within_four_sigma(&(&estimate.estimate - hi), &estimate.variance);
        if row.worst_measure <= *hi && below {
            BoundVerdict::Pass
        } else {
            BoundVerdict::Fail
        }
    };
    Ok(BoundCheck { lemma, b, k, n, eps: eps.clone(), a: row.worst_a, bound: row.bound, estimate, verdict })
}

/// A region of known measure for calibration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationRegion {
    Union(IntervalSet),
    Deviation {
        window: Window,
        band: Band,
        #[serde(with = "rat_str")]
        threshold: Rational,
    },
}

impl CalibrationRegion {
    pub fn exact_measure(&self) -> Result<Rational> {
        match self {
            CalibrationRegion::Union(s) => Ok(s.measure()),
            CalibrationRegion::Deviation { window, band, threshold } => {
                Ok(orbit::deviation_region(window, band, threshold, u64::MAX)?.measure())
            }
        }
    }

    pub fn estimate(&self, spec: &SamplerSpec) -> Result<EstimateReport> {
        let exact = Some(RealEnclosure::exact(self.exact_measure()?));
        match self {
            CalibrationRegion::Union(s) => mc_measure(|x| s.contains(x), spec, exact),
            CalibrationRegion::Deviation { window, band, threshold } => {
                let bits = spec.resolution_bits.max(resolution_for(window.base, window.offset + window.len, band.den));
                mc_measure(deviation_predicate(*window, *band, threshold.clone(), false), &spec.with_resolution(bits), exact)
            }
        }
    }
}

/// Seeded source of small random parameters, kept apart from the sample streams
/// by using the seed's last stream.
pub struct ParamSource(ChaCha20Rng);

impl ParamSource {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        ParamSource(rng)
    }

    /// Uniform-ish in `0..n`; the modulo bias is irrelevant at these sizes.
    pub fn below(&mut self, n: u64) -> u64 {
        self.0.next_u64() % n
    }

    /// In `lo..=hi`.
    pub fn range(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.below(hi - lo + 1)
    }

    /// `p/q` in `[0, 1)` with `q` in `2..=max_den`.
    pub fn unit_rational(&mut self, max_den: u64) -> Rational {
        let q = self.range(2, max_den);
        Rational::new(BigInt::from(self.below(q)), BigInt::from(q))
    }
}

fn random_union(src: &mut ParamSource) -> IntervalSet {
    let parts = src.range(1, 4);
    let sets: Vec<IntervalSet> = (0..parts)
        .map(|_| {
            let q = src.range(2, 12) as i64;
            let a = src.below(q as u64) as i64;
            let c = src.range(a as u64 + 1, q as u64) as i64;
            IntervalSet::from_interval(Interval::new(rat(a, q), rat(c, q)).expect("a < c"))
        })
        .collect();
    IntervalSet::union_all(&sets)
}

fn random_deviation(src: &mut ParamSource) -> Result<CalibrationRegion> {
    let b = src.range(2, 3);
    let len = src.range(1, 6);
    let offset = src.range(0, 2);
    let k = src.range(1, 3) as u32;
    let band = Band::dyadic(src.below(1 << k), k)?;
    let window = Window::new(b, offset, len)?;
    let values = orbit::attainable_f_values(len, &band);
    let threshold = values[src.below(values.len() as u64) as usize].clone();
    Ok(CalibrationRegion::Deviation { window, band, threshold })
}

/// `count` regions whose exact measure lies in `[1/20, 19/20]`, alternating
/// interval unions and orbit deviation regions.
pub fn calibration_regions(seed: u64, count: usize) -> Result<Vec<CalibrationRegion>> {
    let mut src = ParamSource::new(seed);
    let (lo, hi) = (rat(1, 20), rat(19, 20));
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let region = if out.len() % 2 == 0 {
            CalibrationRegion::Union(random_union(&mut src))
        } else {
            random_deviation(&mut src)?
        };
        let mu = region.exact_measure()?;
        if lo <= mu && mu <= hi {
            out.push(region);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub seed: u64,
    pub samples: u64,
    pub checks: usize,
    pub consistent: usize,
    pub reports: Vec<EstimateReport>,
}

impl CalibrationReport {
    /// Consistent share of at least `num/den`.
    pub fn at_least(&self, num: usize, den: usize) -> bool {
        self.consistent * den >= self.checks * num
    }
}

/// Region `i` is sampled on stream `i` of the seed.
pub fn calibration(seed: u64, count: usize, samples: u64) -> Result<CalibrationReport> {
    let regions = calibration_regions(seed, count)?;
    let base = SamplerSpec::new(seed, samples);
    let reports: Vec<EstimateReport> =
        regions.iter().enumerate().map(|(i, r)| r.estimate(&base.split(i as u64))).collect::<Result<_>>()?;
    let consistent = reports.iter().filter(|r| r.consistent()).count();
    Ok(CalibrationReport { seed, samples, checks: reports.len(), consistent, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Signed;

    #[test]
    fn trivial_regions() {
        let spec = SamplerSpec::new(7, 500);
        let all = mc_measure_set(&IntervalSet::unit(), &spec).unwrap();
        assert_eq!(all.estimate, int(1));
        assert_eq!(all.std_error, 0.0);
        assert!(all.consistent());
        let none = mc_measure_set(&IntervalSet::empty(), &spec).unwrap();
        assert_eq!(none.estimate, int(0));
        assert!(none.consistent());
    }

    #[test]
    fn two_quarters() {
        let set = IntervalSet::from_parts(vec![
            Interval::new(int(0), rat(1, 4)).unwrap(),
            Interval::new(rat(3, 4), int(1)).unwrap(),
        ]);
        let r = mc_measure_set(&set, &SamplerSpec::new(1, 10_000)).unwrap();
        assert!(r.consistent(), "{}", r.to_json());
        assert!(r.interval.contains(&rat(1, 2)));
        assert_eq!(r.verdict, Verdict::Consistent);
    }

    #[test]
    fn too_few_samples() {
        assert!(mc_measure(|_| true, &SamplerSpec::new(1, 99), None).is_err());
        assert!(SamplerSpec::new(1, 100).with_resolution(100).validate().is_err());
    }

    #[test]
    fn samples_are_counter_addressed() {
        let spec = SamplerSpec::new(11, 3000);
        let all = spec.draw_range(0, 3000);
        assert_eq!(spec.draw(0), all[0]);
        assert_eq!(spec.draw(2047), all[2047]);
        assert_eq!(spec.draw_range(1500, 1600), all[1500..1600].to_vec());
        assert_ne!(spec.split(1).draw(0), all[0]);
        let wide = spec.with_resolution(256);
        assert_eq!(wide.draw_range(5, 7), vec![wide.draw(5), wide.draw(6)]);
        assert!(all.iter().all(|x| !x.is_negative() && *x < int(1)));
    }

    #[test]
    fn reproducible() {
        let set = IntervalSet::from_interval(Interval::new(rat(1, 3), rat(5, 7)).unwrap());
        let spec = SamplerSpec::new(99, 2500);
        assert_eq!(mc_measure_set(&set, &spec).unwrap(), mc_measure_set(&set, &spec).unwrap());
        assert_ne!(mc_measure_set(&set, &spec).unwrap().hits, mc_measure_set(&set, &spec.split(3)).unwrap().hits);
    }

    #[test]
    fn wrong_reference_is_caught() {
        let set = IntervalSet::from_interval(Interval::new(int(0), rat(1, 2)).unwrap());
        let r = mc_measure(|x| set.contains(x), &SamplerSpec::new(5, 10_000), Some(RealEnclosure::exact(rat(1, 4)))).unwrap();
        assert_eq!(r.verdict, Verdict::Inconsistent);
    }

    #[test]
    fn resolution_rule() {
        assert_eq!(resolution_for(2, 1, 2), 128);
        assert_eq!(resolution_for(2, 100, 8), 192);
        assert_eq!(resolution_for(3, 40, 4), 192);
    }

    #[test]
    fn orbit_region_against_sweep() {
        let w = Window::new(3, 1, 4).unwrap();
        let band = Band::dyadic(1, 2).unwrap();
        let t = rat(3, 4);
        let exact = orbit::deviation_measure(&w, &band, &t).unwrap();
        let spec = SamplerSpec::new(3, 4000).with_resolution(resolution_for(3, 5, 4));
        let r = mc_measure(deviation_predicate(w, band, t, false), &spec, Some(RealEnclosure::exact(exact))).unwrap();
        assert!(r.consistent(), "{}", r.to_json());
    }

    #[test]
    fn bound_checks() {
        let spec = SamplerSpec::new(2, 2000);
        let vac = check_bound(2, 2, 1, 16, &rat(1, 4), &spec, 32).unwrap();
        assert_eq!(vac.verdict, BoundVerdict::Vacuous);
        assert!(vac.estimate.consistent(), "{}", vac.estimate.to_json());
        // exact measure 2^-255: no hits, and the degenerate band excludes it
        let real = check_bound(2, 2, 1, 256, &rat(1, 2), &spec, 32).unwrap();
        assert_eq!(real.verdict, BoundVerdict::Pass);
        assert_eq!(real.estimate.hits, 0);
        assert_eq!(real.estimate.exact, Some(RealEnclosure::exact(rat(1, 1) / int(2).pow(255))));
        assert!(check_bound(3, 2, 1, 16, &rat(1, 4), &spec, 32).is_err());
        assert!(check_bound(1, 2, 1, 16, &rat(1, 100), &spec, 32).is_err());
    }

    #[test]
    fn small_calibration() {
        let rep = calibration(17, 10, 1000).unwrap();
        assert_eq!(rep.checks, 10);
        assert!(rep.at_least(9, 10), "{} of {}", rep.consistent, rep.checks);
        assert_eq!(rep, calibration(17, 10, 1000).unwrap());
    }
}
