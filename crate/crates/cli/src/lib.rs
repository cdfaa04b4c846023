//! Command implementations behind the `absnorm` binary.
//!
//! Every command returns its report as a string for stdout; progress and
//! diagnostics go to stderr. Errors carry the process exit code.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use absnorm_core::badsets::{self, BoundRow, SetEnclosure};
use absnorm_core::constructor::{self, Certificate};
use absnorm_core::discrepancy;
use absnorm_core::mc::{self, SamplerSpec};
use absnorm_core::schedule::ParamSchedule;
use absnorm_core::{fmt_rat, parse_rat, Error, Rational};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

pub const DEFAULT_PRECISION: u64 = 64;
pub const DEFAULT_BUDGET: u64 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Io = 1,
    Usage = 2,
    Budget = 3,
    Indeterminate = 4,
    Verification = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
    /// Report to print on stdout even though the command failed.
    pub report: Option<String>,
}

impl CliError {
    fn new(code: ExitCode, message: impl Into<String>) -> Self {
        CliError { code, message: message.into(), report: None }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) => ExitCode::Usage,
            Error::Budget { .. } => ExitCode::Budget,
            Error::Indeterminate { .. } => ExitCode::Indeterminate,
            Error::Parse(_) => ExitCode::Io,
        };
        CliError::new(code, e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "absnorm", version, about = "Exact construction and analysis of an absolutely normal number")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit binary digits with a certificate.
    Digits(DigitsArgs),
    /// Inspect a bad set G, H or Delta.
    Badset(BadsetArgs),
    /// Exact discrepancy of an orbit {b^j x}.
    Discrepancy(DiscrepancyArgs),
    /// Re-check a certificate from scratch.
    Verify(VerifyArgs),
    /// Bound-versus-measure tables and decomposition sweeps.
    Lemma(LemmaArgs),
    /// log2 of the naive operation count for n steps.
    Cost(CostArgs),
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Built-in schedule: paper, toy-small, toy-tail, toy-mixed.
    #[arg(long, default_value = "paper")]
    pub preset: String,
    /// TOML schedule file; overrides --preset.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
}

impl ScheduleArgs {
    pub fn load(&self) -> CliResult<ParamSchedule> {
        match &self.config {
            Some(path) => Ok(ParamSchedule::from_toml(&read_text(path)?)?),
            None => Ok(ParamSchedule::builtin(&self.preset)?),
        }
    }
}

#[derive(Debug, Args)]
pub struct WorkArgs {
    /// Bits of precision for threshold enclosures.
    #[arg(long, default_value_t = DEFAULT_PRECISION, value_parser = clap::value_parser!(u64).range(8..=4096))]
    pub precision: u64,
    /// Upper bound on sweep events per materialized set.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
}

#[derive(Debug, Args)]
pub struct DigitsArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub work: WorkArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    /// Digit file to write.
    #[arg(long, default_value = "digits.txt")]
    pub out: PathBuf,
    /// Certificate file to write.
    #[arg(long, default_value = "certificate.json")]
    pub cert: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    G,
    H,
    Delta,
}

#[derive(Debug, Args)]
pub struct BadsetArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub work: WorkArgs,
    #[arg(long, value_enum)]
    pub which: Which,
    /// Base; required for g and h.
    #[arg(short, long)]
    pub b: Option<u64>,
    /// Level n (the index m for delta).
    #[arg(short, long)]
    pub n: u64,
    /// Include the interval lists.
    #[arg(long)]
    pub intervals: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["x", "digits_file"])))]
pub struct DiscrepancyArgs {
    /// Starting point as num/den.
    #[arg(long)]
    pub x: Option<String>,
    /// Digit file; x is the dyadic rational it spells.
    #[arg(long)]
    pub digits_file: Option<PathBuf>,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..))]
    pub base: u64,
    /// Number of orbit points.
    #[arg(short = 'N', long = "points", value_parser = clap::value_parser!(u64).range(1..=1 << 22))]
    pub points: u64,
    #[arg(long, default_value_t = DEFAULT_PRECISION, value_parser = clap::value_parser!(u64).range(8..=4096))]
    pub precision: u64,
    /// Also write N = 16, 32, ... ratios as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub certificate: PathBuf,
    /// Require this preset instead of trusting the embedded schedule.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Defaults to the budget recorded in the certificate.
    #[arg(long)]
    pub budget: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LemmaId {
    /// b-adic bands, strict region.
    #[value(name = "1")]
    One,
    /// Dyadic bands.
    #[value(name = "2")]
    Two,
    /// Block decomposition witnesses.
    #[value(name = "4")]
    Four,
    /// Dyadic depth decomposition.
    Depth,
    /// Monte Carlo calibration against exact measures.
    Calibration,
}

#[derive(Debug, Args)]
pub struct LemmaArgs {
    #[arg(value_enum)]
    pub id: LemmaId,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bases, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub b: Vec<u64>,
    /// Band depths k (or m), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<u64>,
    /// Window lengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<u64>,
    /// Deviation levels as num/den, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<String>,
    /// Random draws for sweeps, regions for calibration.
    #[arg(long)]
    pub count: Option<usize>,
    /// Monte Carlo samples; for 1 and 2 also samples every row.
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_PRECISION, value_parser = clap::value_parser!(u64).range(8..=4096))]
    pub precision: u64,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(short, long, value_parser = clap::value_parser!(u64).range(1..=30))]
    pub n: u64,
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::new(ExitCode::Io, format!("cannot read {}: {e}", path.display())))
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::new(ExitCode::Io, format!("cannot write {}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| CliError::new(ExitCode::Usage, format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Digits(a) => cmd_digits(&a),
        Command::Badset(a) => cmd_badset(&a),
        Command::Discrepancy(a) => cmd_discrepancy(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Lemma(a) => cmd_lemma(&a),
        Command::Cost(a) => cmd_cost(&a),
    }
}

pub fn cmd_digits(a: &DigitsArgs) -> CliResult<String> {
    let sched = a.schedule.load()?;
    let cert = constructor::run_streaming(&sched, a.count, a.work.precision, a.work.budget, |d, rec| {
        eprintln!("digit {}: {d} (Delta parts {}, tail {})", rec.n, rec.delta_parts, fmt_rat(&rec.tail));
    })?;
    write_atomic(&a.out, &constructor::write_digit_file(&cert.digits, &sched, a.work.precision))?;
    write_atomic(&a.cert, &cert.to_json())?;
    Ok(pretty(&json!({
        "schema": "absnorm.digits/1",
        "preset": sched.name,
        "schedule_hash": cert.schedule_hash,
        "count": a.count,
        "digits": cert.digits,
        "digit_file": a.out.display().to_string(),
        "certificate": a.cert.display().to_string(),
    })))
}

fn set_json(s: &absnorm_core::IntervalSet) -> Value {
    s.parts().iter().map(|p| json!([fmt_rat(p.lo()), fmt_rat(p.hi())])).collect()
}

pub fn cmd_badset(a: &BadsetArgs) -> CliResult<String> {
    let sched = a.schedule.load()?;
    let (p, budget) = (a.work.precision, a.work.budget);
    let need_b = || a.b.ok_or_else(|| CliError::new(ExitCode::Usage, "--b is required for g and h"));
    let mut levels = Value::Null;
    let set: SetEnclosure = match a.which {
        Which::G => badsets::g_union(need_b()?, a.n, &sched, p, budget)?,
        Which::H => badsets::h_union(need_b()?, a.n, &sched, p, budget)?,
        Which::Delta => {
            let d = badsets::delta_n(a.n, &sched, p, budget)?;
            levels = serde_json::to_value(&d.levels).expect("levels serialize");
            d.set
        }
    };
    let mut report = json!({
        "schema": "absnorm.badset/1",
        "preset": sched.name,
        "which": format!("{:?}", a.which).to_lowercase(),
        "b": a.b,
        "n": a.n,
        "components": set.outer.parts().len(),
        "inner_components": set.inner.parts().len(),
        "inner_measure": fmt_rat(&set.inner.measure()),
        "outer_measure": fmt_rat(&set.outer.measure()),
        "exact": set.is_exact(),
    });
    if a.which == Which::Delta {
        report["levels"] = levels;
    }
    if a.intervals {
        report["inner"] = set_json(&set.inner);
        report["outer"] = set_json(&set.outer);
    }
    Ok(pretty(&report))
}

pub fn cmd_discrepancy(a: &DiscrepancyArgs) -> CliResult<String> {
    let x: Rational = match (&a.x, &a.digits_file) {
        (Some(s), _) => parse_rat(s)?,
        (None, Some(path)) => discrepancy::digits_to_rational(&constructor::read_digit_file(&read_text(path)?)?)?,
        (None, None) => return Err(CliError::new(ExitCode::Usage, "one of --x or --digits-file is required")),
    };
    let report = discrepancy::discrepancy_report(&x, a.base, a.points, a.precision)?;
    if let Some(csv) = &a.csv {
        let rows = discrepancy::ratio_grid(&x, a.base, a.points, a.precision)?;
        write_atomic(csv, &discrepancy::grid_csv(&rows))?;
        eprintln!("wrote {} grid rows to {}", rows.len(), csv.display());
    }
    let mut v = serde_json::to_value(&report).expect("report serializes");
    v["x"] = json!(fmt_rat(&x));
    Ok(pretty(&v))
}

pub fn cmd_verify(a: &VerifyArgs) -> CliResult<String> {
    let cert = Certificate::from_json(&read_text(&a.certificate)?)?;
    let expected = match (&a.preset, &a.config) {
        (Some(p), _) => Some(ParamSchedule::builtin(p)?),
        (None, Some(c)) => Some(ParamSchedule::from_toml(&read_text(c)?)?),
        (None, None) => None,
    };
    let budget = a.budget.unwrap_or(cert.budget);
    let rep = constructor::verify_certificate(&cert, expected.as_ref(), budget)?;
    let out = pretty(&json!({
        "schema": "absnorm.verify/1",
        "certificate": a.certificate.display().to_string(),
        "ok": rep.ok,
        "steps_checked": rep.steps_checked,
        "first_bad_step": rep.first_bad_step(),
        "mismatches": rep.mismatches,
    }));
    if rep.ok {
        Ok(out)
    } else {
        let at = rep.first_bad_step().map_or("the header".to_string(), |s| format!("step {s}"));
        Err(CliError { code: ExitCode::Verification, message: format!("verification failed at {at}"), report: Some(out) })
    }
}

fn parse_list(items: &[String]) -> CliResult<Vec<Rational>> {
    items.iter().map(|s| parse_rat(s).map_err(CliError::from)).collect()
}

fn or_default<T: Clone>(given: &[T], default: &[T]) -> Vec<T> {
    if given.is_empty() {
        default.to_vec()
    } else {
        given.to_vec()
    }
}

/// Rows of the bound tables for the requested grid; infeasible b-adic points are skipped.
fn bound_rows(a: &LemmaArgs, lemma: u8) -> CliResult<Vec<BoundRow>> {
    let default_grid = a.b.is_empty() && a.k.is_empty() && a.n.is_empty() && a.eps.is_empty();
    if default_grid {
        return Ok(if lemma == 1 { badsets::lemma1_grid(a.precision)? } else { badsets::lemma2_grid(a.precision)? });
    }
    let bs = or_default(&a.b, &[2, 3]);
    let ks = or_default(&a.k, &[1, 2]);
    let ns = or_default(&a.n, &(4..=10).map(|e| 1u64 << e).collect::<Vec<_>>());
    let eps = if a.eps.is_empty() {
        vec![parse_rat("1/4")?, parse_rat("1/2")?, parse_rat("1")?]
    } else {
        parse_list(&a.eps)?
    };
    let mut rows = Vec::new();
    for &b in &bs {
        for &k in &ks {
            for &n in &ns {
                for e in &eps {
                    let row = if lemma == 1 { badsets::lemma1_row(b, k, n, e, a.precision) } else { badsets::lemma2_row(b, k, n, e, a.precision) };
                    match row {
                        Ok(r) => rows.push(r),
                        Err(Error::Domain(msg)) if lemma == 1 => eprintln!("skipped b={b} m={k} N={n} eps={}: {msg}", fmt_rat(e)),
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn failing(report: Value, failures: usize, what: &str) -> CliResult<String> {
    let out = pretty(&report);
    if failures == 0 {
        Ok(out)
    } else {
        Err(CliError { code: ExitCode::Verification, message: format!("{failures} {what}"), report: Some(out) })
    }
}

pub fn cmd_lemma(a: &LemmaArgs) -> CliResult<String> {
    match a.id {
        LemmaId::One | LemmaId::Two => {
            let lemma = if a.id == LemmaId::One { 1 } else { 2 };
            let rows = bound_rows(a, lemma)?;
            let mut violations = rows.iter().filter(|r| !r.holds).count();
            let mut checks = Vec::new();
            if let Some(samples) = a.samples {
                let spec = SamplerSpec::new(a.seed, samples);
                for (i, r) in rows.iter().enumerate() {
                    let c = mc::check_bound(lemma, r.b, r.k, r.n, &r.eps, &spec.split(i as u64), a.precision)?;
                    if c.verdict == mc::BoundVerdict::Fail {
                        violations += 1;
                    }
                    checks.push(c);
                }
            }
            let vacuous = rows.iter().filter(|r| r.vacuous).count();
            let report = json!({
                "schema": "absnorm.lemma/1",
                "lemma": lemma.to_string(),
                "rows": rows,
                "vacuous": vacuous,
                "violations": violations,
                "samples": checks,
            });
            failing(report, violations, "bound violations")
        }
        LemmaId::Four => {
            let cases = badsets::block_sweep(a.seed, a.count.unwrap_or(50))?;
            let failures = cases.iter().filter(|c| !c.report.holds).count();
            let report = json!({ "schema": "absnorm.lemma/1", "lemma": "4", "seed": a.seed, "cases": cases, "failures": failures });
            failing(report, failures, "cases without a witness")
        }
        LemmaId::Depth => {
            let cases = badsets::depth_sweep(a.seed, a.count.unwrap_or(100))?;
            let failures = cases.iter().filter(|c| !c.report.holds).count();
            let report = json!({ "schema": "absnorm.lemma/1", "lemma": "depth", "seed": a.seed, "cases": cases, "failures": failures });
            failing(report, failures, "depth decomposition failures")
        }
        LemmaId::Calibration => {
            let rep = mc::calibration(a.seed, a.count.unwrap_or(100), a.samples.unwrap_or(4000))?;
            let ok = rep.at_least(99, 100);
            let report = json!({
                "schema": "absnorm.calibration/1",
                "seed": rep.seed,
                "samples": rep.samples,
                "checks": rep.checks,
                "consistent": rep.consistent,
                "ok": ok,
                "reports": rep.reports,
            });
            failing(report, usize::from(!ok), "calibration below 99% consistent")
        }
    }
}

pub fn cmd_cost(a: &CostArgs) -> CliResult<String> {
    let c = constructor::cost_estimate(a.n)?;
    Ok(pretty(&json!({
        "schema": "absnorm.cost/1",
        "n": c.n,
        "log2_ops": c.render(),
        "log2_value": c.exact_value().map(|v| v.to_string()),
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("absnorm").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn cost_values() {
        let out = run(parse(&["cost", "-n", "1"])).unwrap();
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["log2_value"], "131072");
        let v: Value = serde_json::from_str(&run(parse(&["cost", "-n", "3"])).unwrap()).unwrap();
        assert_eq!(v["log2_ops"], "3 * 2^256");
        assert!(Cli::try_parse_from(["absnorm", "cost", "-n", "0"]).is_err());
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::Domain("x".into())).code, ExitCode::Usage);
        assert_eq!(CliError::from(Error::Parse("x".into())).code, ExitCode::Io);
        let b = Error::Budget { what: "w".into(), needed: "1".into(), budget: 0 };
        assert_eq!(CliError::from(b).code, ExitCode::Budget);
        let e = run(parse(&["badset", "--preset", "nope", "--which", "g", "-b", "2", "-n", "4"])).unwrap_err();
        assert_eq!(e.code, ExitCode::Usage);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("absnorm-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("out.txt");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }
}
