//! Construction parameters: `δ`, `η`, the per-base starting level `z_b`, the
//! look-ahead `p_n`, the base cap `b_m` and, for toy schedules, a finite horizon.
//!
//! The paper preset fixes `δ = 1/2`, `η = 1/8`, `p_n = 2^(2n+2)`,
//! `b_m = max(2, ⌊log₂ m⌋)` and `z_b` = least integer above `e^(12/ln 2)` whose
//! tail `Σ_{k≥z} k⁻²` is below `η/2^b`. Toy schedules keep the same structure
//! with small explicit values so the bad sets can actually be materialized;
//! they must declare a `horizon` (the largest level `k` that exists), which
//! makes their exceptional set a finite union whose tails can be measured
//! rather than bounded analytically.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::enclosure::{self, RealEnclosure};
use crate::error::{Error, Result};
use crate::measure::{fmt_rat, int, rat, rat_str, Rational};

/// Largest step index the look-ahead of the paper preset supports (`p_30 = 2^62`).
pub const MAX_STEP: u64 = 30;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetTag {
    Paper,
    Toy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZRule {
    /// Least integer above `e^(12/ln 2)` with `Σ_{k≥z} k⁻² < η/2^b`.
    Paper,
    /// Explicit per-base values, `default` for bases not listed.
    Table {
        default: u64,
        #[serde(default)]
        bases: BTreeMap<String, u64>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PRule {
    /// `p_n = 2^(2n+2)`.
    Paper,
    /// `p_n = offset + slope * n`.
    Linear { offset: u64, slope: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcapRule {
    /// `b_m = max(2, ⌊log₂ m⌋)`.
    Log2,
    Fixed(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSchedule {
    pub name: String,
    pub preset: PresetTag,
    #[serde(with = "rat_str")]
    pub delta: Rational,
    #[serde(with = "rat_str")]
    pub eta: Rational,
    pub z_rule: ZRule,
    pub p_rule: PRule,
    pub bcap: BcapRule,
    /// Largest level `k` of the exceptional set; `None` means unbounded (the paper preset).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
}

fn least_z0() -> u128 {
    static Z0: OnceLock<u128> = OnceLock::new();
    *Z0.get_or_init(|| {
        // least integer strictly above e^(12/ln 2)
        let mut bits = 64;
        loop {
            let arg = RealEnclosure::exact(int(12)).div(&enclosure::ln2(bits + 16)).expect("ln 2 > 0");
            let e = enclosure::exp_enc(&arg, bits);
            let lo = e.lo().floor().to_integer();
            let hi = e.hi().floor().to_integer();
            if lo == hi {
                let z: u128 = (lo + 1u32).try_into().expect("fits");
                return z;
            }
            bits *= 2;
        }
    })
}

/// Strict bracket `(1/z + 1/(2z²), 1/(z - 1/2))` of `Σ_{k≥z} k⁻²`.
pub fn inverse_square_tail_bracket(z: u128) -> (Rational, Rational) {
    let zq = Rational::from_integer(BigInt::from(z));
    let lower = zq.recip() + (int(2) * &zq * &zq).recip();
    let upper = (zq - rat(1, 2)).recip();
    (lower, upper)
}

/// Strict upper bound `1/(z - 1/2)` on `Σ_{k≥z} k⁻²`, from the midpoint rule for a convex summand.
pub fn inverse_square_tail_upper(z: u128) -> Rational {
    inverse_square_tail_bracket(z).1
}

/// Least `z` with `Σ_{k≥z} k⁻² < c`.
fn least_tail_below(c: &Rational) -> Result<u128> {
    // upper(z) < c  <=>  z > 1/c + 1/2
    let zu = (c.recip() + rat(1, 2)).floor().to_integer() + 1u32;
    let zu: u128 = zu
        .try_into()
        .map_err(|_| Error::Domain(format!("tail target {} too small", fmt_rat(c))))?;
    // every z' < zu must certainly fail for zu to be least; tails are decreasing,
    // so it is enough that lower(zu - 1) >= c
    if zu <= 1 {
        return Ok(1);
    }
    let (lower, _) = inverse_square_tail_bracket(zu - 1);
    if lower >= *c {
        Ok(zu)
    } else {
        Err(Error::Domain(format!(
            "least z with tail below {} is not determined by the available tail bounds",
            fmt_rat(c)
        )))
    }
}

impl ParamSchedule {
    pub fn paper() -> ParamSchedule {
        ParamSchedule {
            name: "paper".into(),
            preset: PresetTag::Paper,
            delta: rat(1, 2),
            eta: rat(1, 8),
            z_rule: ZRule::Paper,
            p_rule: PRule::Paper,
            bcap: BcapRule::Log2,
            horizon: None,
        }
    }

    /// Built-in toy schedules. All bases start at level 2; thresholds use a
    /// negative `δ` so the bad sets are nonempty at desk scale.
    pub fn toy(name: &str) -> Result<ParamSchedule> {
        let table = |default: u64| ZRule::Table { default, bases: BTreeMap::new() };
        let s = match name {
            // base 2, levels 2..=3, full look-ahead from the first step
            "toy-small" => ParamSchedule {
                name: name.into(),
                preset: PresetTag::Toy,
                delta: rat(-3, 8),
                eta: rat(1, 16),
                z_rule: table(2),
                p_rule: PRule::Paper,
                bcap: BcapRule::Fixed(2),
                horizon: Some(3),
            },
            // look-ahead grows one level per step, so early steps carry a measured tail
            "toy-tail" => ParamSchedule {
                name: name.into(),
                preset: PresetTag::Toy,
                delta: rat(-2, 5),
                eta: rat(1, 16),
                z_rule: table(2),
                p_rule: PRule::Linear { offset: 0, slope: 1 },
                bcap: BcapRule::Fixed(2),
                horizon: Some(3),
            },
            // bases 2 and 3 at level 2
            "toy-mixed" => ParamSchedule {
                name: name.into(),
                preset: PresetTag::Toy,
                delta: rat(-3, 8),
                eta: rat(1, 16),
                z_rule: table(2),
                p_rule: PRule::Paper,
                bcap: BcapRule::Fixed(3),
                horizon: Some(2),
            },
            _ => return Err(Error::Domain(format!("unknown preset {name:?}"))),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["paper", "toy-small", "toy-tail", "toy-mixed"]
    }

    pub fn builtin(name: &str) -> Result<ParamSchedule> {
        match name {
            "paper" => Ok(ParamSchedule::paper()),
            other => ParamSchedule::toy(other),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta <= rat(-1, 2) {
            return Err(Error::Domain(format!("delta = {} must exceed -1/2", fmt_rat(&self.delta))));
        }
        if !self.eta.is_positive() || self.eta > rat(1, 8) {
            return Err(Error::Domain(format!("eta = {} must lie in (0, 1/8]", fmt_rat(&self.eta))));
        }
        if let BcapRule::Fixed(b) = self.bcap {
            if b < 2 {
                return Err(Error::Domain("fixed base cap must be >= 2".into()));
            }
        }
        if let PRule::Linear { slope, offset } = self.p_rule {
            if slope == 0 && offset == 0 {
                return Err(Error::Domain("linear p-rule must be positive".into()));
            }
        }
        match (&self.z_rule, self.horizon) {
            (ZRule::Paper, _) => {}
            (ZRule::Table { default, bases }, Some(_)) => {
                if *default == 0 || bases.values().any(|&z| z == 0) {
                    return Err(Error::Domain("z values must be >= 1".into()));
                }
                for k in bases.keys() {
                    let b: u64 = k.parse().map_err(|_| Error::Parse(format!("bad base key {k:?}")))?;
                    if b < 2 {
                        return Err(Error::Domain(format!("z table base {b} < 2")));
                    }
                }
            }
            (ZRule::Table { .. }, None) => {
                return Err(Error::Domain(
                    "a z table needs a finite horizon: the analytic tail relies on the paper z rule".into(),
                ))
            }
        }
        if self.preset == PresetTag::Paper && self.horizon.is_some() {
            return Err(Error::Domain("the paper preset has no horizon".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<ParamSchedule> {
        let s: ParamSchedule = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schedule serializes")
    }

    /// Short stable hash of the canonical serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("schedule serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    /// `z_b`, the first level at which base `b` contributes.
    pub fn z(&self, b: u64) -> Result<u128> {
        match &self.z_rule {
            ZRule::Paper => {
                let c = &self.eta / Rational::from_integer(BigInt::one() << b as usize);
                Ok(least_z0().max(least_tail_below(&c)?))
            }
            ZRule::Table { default, bases } => {
                Ok(bases.get(&b.to_string()).copied().unwrap_or(*default) as u128)
            }
        }
    }

    /// Look-ahead `p_n` for step `n`.
    pub fn p(&self, n: u64) -> Result<u64> {
        match self.p_rule {
            PRule::Paper => {
                if n > MAX_STEP {
                    return Err(Error::Domain(format!("step {n} beyond supported {MAX_STEP}")));
                }
                Ok(1u64 << (2 * n + 2))
            }
            PRule::Linear { offset, slope } => Ok(offset + slope * n),
        }
    }

    /// Base cap `b_m` for the finite approximation `Δ_m`.
    pub fn bcap(&self, m: u64) -> u64 {
        match self.bcap {
            BcapRule::Log2 => {
                let lg = if m == 0 { 0 } else { 63 - m.leading_zeros() as u64 };
                lg.max(2)
            }
            BcapRule::Fixed(b) => b,
        }
    }

    /// Index actually materialized for `Δ_m`: capped at the horizon.
    pub fn effective_index(&self, m: u64) -> u64 {
        self.horizon.map_or(m, |h| m.min(h))
    }

    /// Level ranges `(b, z_b, k_max)` whose `G_{b,k} ∪ H_{b,k}` make up `Δ_m`.
    pub fn level_ranges(&self, m: u64) -> Result<Vec<(u64, u64, u64)>> {
        let m = self.effective_index(m);
        let mut out = Vec::new();
        for b in 2..=self.bcap(m) {
            let z = self.z(b)?;
            if z <= m as u128 {
                out.push((b, z as u64, m));
            }
        }
        Ok(out)
    }

    /// `(b, k)` pairs of `Δ_m`, expanded; only for small schedules.
    pub fn levels(&self, m: u64) -> Result<Vec<(u64, u64)>> {
        let ranges = self.level_ranges(m)?;
        let total: u64 = ranges.iter().map(|(_, z, k)| k - z + 1).sum();
        if total > 1 << 16 {
            return Err(Error::Budget { what: format!("level list of Delta_{m}"), needed: total.to_string(), budget: 1 << 16 });
        }
        Ok(ranges.into_iter().flat_map(|(b, z, k)| (z..=k).map(move |k| (b, k))).collect())
    }

    /// Strict rational upper bound on `r_m = s - s_m` for unbounded schedules:
    /// `Σ_{b=2}^{b_m} 1/(max(m+1, z_b) - 1/2) + η 2^(-b_m)`.
    pub fn tail_upper_analytic(&self, m: u64) -> Result<Rational> {
        if self.horizon.is_some() || self.z_rule != ZRule::Paper {
            return Err(Error::Domain("analytic tail needs an unbounded schedule with the paper z rule".into()));
        }
        let bm = self.bcap(m);
        let mut sum = Rational::zero();
        for b in 2..=bm {
            let start = (m as u128 + 1).max(self.z(b)?);
            sum += inverse_square_tail_upper(start);
        }
        sum += &self.eta / Rational::from_integer(BigInt::one() << bm as usize);
        Ok(sum)
    }

    /// Strict upper bound on `s = Σ_b Σ_{k≥z_b} k⁻²` (the total tail budget).
    pub fn s_upper(&self) -> Result<Rational> {
        // s = r_0 in the notation of the tail formula (no level materialized)
        self.tail_upper_analytic(0)
    }
}
