//! Command implementations for the `mtype-lab` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mtype_core::factorization::{default_schedule, factorize_with_schedule, identity_l1_witness, verify_factorization};
use mtype_core::haar::{analyze, synthesize, HaarCoefficients, Tree};
use mtype_core::ideal::{
    diagonal_type_exact, diagonal_type_witness, estimate, haar_ratio, summation_cotype_witness, type_p_ratio,
    verify_relations, Direction, IdealKind, SearchConfig,
};
use mtype_core::martingale::Mds;
use mtype_core::norm::NormKind;
use mtype_core::scalar::{format_rational, parse_rational, rat};
use mtype_core::spaces::{diagonal_operator, log_diagonal_sequence, summation_operator, OperatorSpec};
use mtype_core::stepfn::StepFunction;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SEED_ENV: &str = "MTYPE_LAB_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("resource cap exceeded: {0}")]
    Cap(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Input(_) => 2,
            CliError::Cap(_) => 3,
            CliError::Construction(_) => 4,
        }
    }
}

impl From<mtype_core::Error> for CliError {
    fn from(e: mtype_core::Error) -> Self {
        use mtype_core::Error as E;
        match e {
            E::LevelCap { .. } => CliError::Cap(e.to_string()),
            E::InsufficientIndexSet { .. } | E::ZeroPairing(_) => CliError::Construction(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "mtype-lab", version, about = "Exact martingale and Haar type/cotype ideal norms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Haar coefficients of a step function.
    Analyze(AnalyzeArgs),
    /// Step function from Haar coefficients.
    Synthesize(SynthesizeArgs),
    /// Certified lower and rigorous upper bounds, one row per n.
    Estimate(EstimateArgs),
    /// Check the relations between the ideal norms.
    Verify(VerifyArgs),
    /// Factor the summation operator through a martingale witness.
    Factorize(FactorizeArgs),
    /// Emit a named witness.
    Witness(WitnessArgs),
    /// Closed-form diagonal type values next to the witness ratios.
    DiagonalTable(DiagonalArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    Summation,
    Diagonal,
    Identity,
    SummationWitness,
}

#[derive(Args, Debug, Clone)]
pub struct OperatorArgs {
    #[arg(long, value_enum)]
    pub builtin: Option<Builtin>,
    /// Operator JSON file.
    #[arg(long)]
    pub operator: Option<PathBuf>,
    /// Diagonal entries, comma separated, or `log:D`.
    #[arg(long)]
    pub t: Option<String>,
    /// Dimension of the builtin operator (default depends on n).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Norm for the identity builtin: l1, l2 or linf.
    #[arg(long, default_value = "l1")]
    pub norm: String,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Enumeration budget.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Level cap.
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Step function JSON file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub builtin: Option<Builtin>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub m: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    #[arg(long)]
    pub kind: String,
    /// Index range such as `3`, `1..5` or `1,2,4`.
    #[arg(long)]
    pub n: String,
    /// First Haar level; defaults to 0 for haar-cotype and 1 otherwise.
    #[arg(long)]
    pub m: Option<usize>,
    /// Exponent for `type-p`.
    #[arg(long)]
    pub p: Option<String>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    #[arg(long)]
    pub n: String,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct FactorizeArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    /// Witness JSON `{"mds": …, "g": …}`; defaults to the identity witness.
    #[arg(long)]
    pub witness: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma separated deltas, tried in order.
    #[arg(long)]
    pub delta_schedule: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum WitnessKind {
    Summation,
    Diagonal,
    IdentityL1,
}

#[derive(Args, Debug)]
pub struct WitnessArgs {
    #[arg(long, value_enum)]
    pub kind: WitnessKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub t: Option<String>,
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiagonalArgs {
    #[arg(long)]
    pub t: String,
    #[arg(long)]
    pub n: String,
    #[arg(long, default_value = "2")]
    pub p: String,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Floats for human output: 12 significant digits.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("float");
    format!("{rounded}")
}

/// `3`, `1..5` (inclusive), `1..=5` or `1,2,4`.
pub fn parse_range(s: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::Input(format!("invalid index range `{s}`"));
    let num = |x: &str| x.trim().parse::<usize>().map_err(|_| bad());
    let out = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<CliResult<Vec<_>>>()?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(out)
}

pub fn parse_list(s: &str) -> CliResult<Vec<BigRational>> {
    if let Some(d) = s.strip_prefix("log:") {
        let d = d.trim().parse::<usize>().map_err(|_| CliError::Input(format!("invalid length in `{s}`")))?;
        return Ok(log_diagonal_sequence(d, 48));
    }
    s.split(',').map(|x| parse_rational(x).map_err(CliError::from)).collect()
}

fn parse_p(p: Option<&str>) -> CliResult<BigRational> {
    p.map_or(Ok(rat(2)), |s| parse_rational(s).map_err(CliError::from))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Input(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
    })
}

fn emit(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::Input(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

impl OperatorArgs {
    /// The operator used for index `n`.
    pub fn resolve(&self, n: usize) -> CliResult<OperatorSpec> {
        if let Some(path) = &self.operator {
            return read_json(path);
        }
        match self.builtin {
            Some(Builtin::Summation) => Ok(summation_operator(self.dim.unwrap_or(1 << n))?),
            Some(Builtin::Diagonal) => {
                let t = self.t.as_deref().ok_or_else(|| CliError::Input("--t is required for the diagonal operator".into()))?;
                Ok(diagonal_operator(&parse_list(t)?)?)
            }
            Some(Builtin::Identity) => {
                let norm: NormKind = self.norm.parse()?;
                Ok(OperatorSpec::identity(self.dim.unwrap_or(2 * n), norm)?)
            }
            Some(Builtin::SummationWitness) => {
                Err(CliError::Input("summation-witness is a function, not an operator".into()))
            }
            None => Err(CliError::Input("one of --builtin or --operator is required".into())),
        }
    }
}

fn check_cap(n: usize, cfg: &SearchConfig) -> CliResult<()> {
    if n > cfg.level_cap {
        return Err(mtype_core::Error::LevelCap { n, cap: cfg.level_cap }.into());
    }
    Ok(())
}

impl RunArgs {
    pub fn config(&self) -> CliResult<SearchConfig> {
        let mut cfg = SearchConfig::default();
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Ok(s) = std::env::var(SEED_ENV) {
            cfg.seed = s.trim().parse().map_err(|_| CliError::Input(format!("{SEED_ENV} is not an integer")))?;
        }
        if let Some(b) = self.budget {
            cfg.enum_budget = b;
        }
        if let Some(c) = self.cap {
            if c == 0 {
                return Err(CliError::Input("--cap must be positive".into()));
            }
            cfg.level_cap = c;
        }
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Synthesize(a) => cmd_synthesize(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Factorize(a) => cmd_factorize(a),
        Command::Witness(a) => cmd_witness(a),
        Command::DiagonalTable(a) => cmd_diagonal_table(a),
    }
}

fn cmd_analyze(a: AnalyzeArgs) -> CliResult<()> {
    let f: StepFunction = match (&a.input, a.builtin) {
        (Some(path), _) => read_json(path)?,
        (None, Some(Builtin::SummationWitness)) => {
            let n = a.n.ok_or_else(|| CliError::Input("--n is required".into()))?;
            mtype_core::ideal::indicator_function(n, 1 << n)
        }
        _ => return Err(CliError::Input("--input or --builtin summation-witness is required".into())),
    };
    let n = match a.n {
        Some(n) => n,
        None => (0..=mtype_core::haar::DEFAULT_LEVEL_CAP)
            .find(|&k| f.is_dyadic(k))
            .ok_or_else(|| CliError::Input("the function is not dyadic; pass --n".into()))?,
    };
    let c = analyze(&f, Tree::new(a.m, n)?);
    emit(a.output.as_deref(), &to_json(&c))
}

fn cmd_synthesize(a: SynthesizeArgs) -> CliResult<()> {
    let c: HaarCoefficients = read_json(&a.input)?;
    emit(a.output.as_deref(), &to_json(&synthesize(&c).canonical()))
}

#[derive(Serialize)]
struct EstimateTable<T> {
    seed: u64,
    config: SearchConfig,
    rows: Vec<T>,
}

fn cmd_estimate(a: EstimateArgs) -> CliResult<()> {
    let cfg = a.run.config()?;
    let mut kind: IdealKind = a.kind.parse()?;
    if let IdealKind::TypeP(_) = kind {
        kind = IdealKind::TypeP(parse_p(a.p.as_deref())?);
    } else if a.kind.replace('-', "_") == "type_p" {
        kind = IdealKind::TypeP(parse_p(a.p.as_deref())?);
    }
    let m = a.m.unwrap_or(if kind == IdealKind::HaarCotype { 0 } else { 1 });
    let mut rows = Vec::new();
    for n in parse_range(&a.n)? {
        check_cap(n, &cfg)?;
        let t = a.op.resolve(n)?;
        rows.push(estimate(&t, &kind, m, n, &cfg)?);
    }
    let text = match a.run.format {
        Format::Json => to_json(&EstimateTable { seed: cfg.seed, config: cfg.clone(), rows }),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let header = ["kind", "m", "n", "lower", "upper", "lower_sq", "upper_sq", "exact", "upper_source", "witness", "seed"];
            w.write_record(header).map_err(|e| CliError::Input(e.to_string()))?;
            for r in &rows {
                let opt = |x: &Option<mtype_core::scalar::QuadRational>| x.as_ref().map_or(String::new(), |v| v.to_string());
                w.write_record([
                    r.kind.to_string(),
                    r.m.map_or(String::new(), |m| m.to_string()),
                    r.n.to_string(),
                    sig12(r.lower),
                    sig12(r.upper),
                    opt(&r.lower_sq),
                    opt(&r.upper_sq),
                    r.exact.to_string(),
                    r.upper_source.clone(),
                    r.witness_family.clone(),
                    r.seed.to_string(),
                ])
                .map_err(|e| CliError::Input(e.to_string()))?;
            }
            String::from_utf8(w.into_inner().map_err(|e| CliError::Input(e.to_string()))?).expect("utf8")
        }
    };
    emit(a.run.output.as_deref(), &text)
}

fn cmd_verify(a: VerifyArgs) -> CliResult<()> {
    let cfg = a.run.config()?;
    let mut reports = Vec::new();
    for n in parse_range(&a.n)? {
        check_cap(n, &cfg)?;
        let t = a.op.resolve(n)?;
        reports.push(verify_relations(&t, n, &cfg)?);
    }
    let text = match a.run.format {
        Format::Json => to_json(&EstimateTable { seed: cfg.seed, config: cfg.clone(), rows: reports.clone() }),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["n", "relation", "lhs", "rhs", "constant_sq", "lower", "scaled_upper", "passed"])
                .map_err(|e| CliError::Input(e.to_string()))?;
            for r in &reports {
                for c in &r.checks {
                    w.write_record([
                        r.n.to_string(),
                        c.relation.clone(),
                        c.lhs.clone(),
                        c.rhs.clone(),
                        format_rational(&c.constant_sq),
                        sig12(c.lower),
                        sig12(c.scaled_upper),
                        c.passed.to_string(),
                    ])
                    .map_err(|e| CliError::Input(e.to_string()))?;
                }
            }
            String::from_utf8(w.into_inner().map_err(|e| CliError::Input(e.to_string()))?).expect("utf8")
        }
    };
    emit(a.run.output.as_deref(), &text)?;
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| r.checks.iter().filter(|c| !c.passed).map(move |c| format!("n={}: {} ({} vs {})", r.n, c.relation, c.lhs, c.rhs)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failed.join("; ")))
    }
}

#[derive(Deserialize, Serialize)]
pub struct WitnessFile {
    pub mds: Mds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<StepFunction>,
}

fn cmd_factorize(a: FactorizeArgs) -> CliResult<()> {
    let witness: WitnessFile = match &a.witness {
        Some(p) => read_json(p)?,
        None => {
            let n = a.n.ok_or_else(|| CliError::Input("--n is required without --witness".into()))?;
            WitnessFile { mds: identity_l1_witness(n)?, g: None }
        }
    };
    let n = witness.mds.len() / 2;
    let t = a.op.resolve(n.max(1))?;
    let schedule = match &a.delta_schedule {
        Some(s) => parse_list(s)?,
        None => default_schedule(),
    };
    let res = factorize_with_schedule(&t, &witness.mds, witness.g.as_ref(), &schedule)?;
    let report = verify_factorization(&res, &t)?;
    if !report.passed {
        return Err(CliError::Verify("recomputed factorization does not match".into()));
    }
    eprintln!(
        "norm product {} <= witness-relative bound {} (delta {})",
        sig12(res.product_bound),
        sig12(res.witness_bound),
        format_rational(&res.delta)
    );
    emit(a.output.as_deref(), &to_json(&res))
}

fn cmd_witness(a: WitnessArgs) -> CliResult<()> {
    let text = match a.kind {
        WitnessKind::Summation => {
            to_json(&summation_cotype_witness(a.n, a.cap.unwrap_or(mtype_core::haar::DEFAULT_LEVEL_CAP))?)
        }
        WitnessKind::Diagonal => {
            let t = a.t.as_deref().ok_or_else(|| CliError::Input("--t is required".into()))?;
            to_json(&diagonal_type_witness(&parse_list(t)?, a.n, &parse_p(a.p.as_deref())?)?)
        }
        WitnessKind::IdentityL1 => to_json(&WitnessFile { mds: identity_l1_witness(a.n)?, g: None }),
    };
    emit(a.output.as_deref(), &text)
}

#[derive(Serialize)]
struct DiagonalRow {
    n: usize,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    value_sq: Option<String>,
    witness_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness_ratio_sq: Option<String>,
}

fn cmd_diagonal_table(a: DiagonalArgs) -> CliResult<()> {
    let t = parse_list(&a.t)?;
    let p = parse_rational(&a.p)?;
    let op = diagonal_operator(&t)?;
    let mut rows = Vec::new();
    for n in parse_range(&a.n)? {
        let v = diagonal_type_exact(&t, n, &p)?;
        let c = diagonal_type_witness(&t, n, &p)?;
        let (ratio, ratio_sq) = if p == rat(2) {
            let r = haar_ratio(&op, &c, Direction::Type)?;
            (r.value(), Some(r.value_sq().to_string()))
        } else {
            (type_p_ratio(&op, &c, &p)?, None)
        };
        rows.push(DiagonalRow {
            n,
            value: v.value,
            value_sq: v.value_sq.as_ref().map(format_rational),
            witness_ratio: ratio,
            witness_ratio_sq: ratio_sq,
        });
    }
    let text = match a.format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["n", "value", "value_sq", "witness_ratio", "witness_ratio_sq"])
                .map_err(|e| CliError::Input(e.to_string()))?;
            for r in &rows {
                w.write_record([
                    r.n.to_string(),
                    sig12(r.value),
                    r.value_sq.clone().unwrap_or_default(),
                    sig12(r.witness_ratio),
                    r.witness_ratio_sq.clone().unwrap_or_default(),
                ])
                .map_err(|e| CliError::Input(e.to_string()))?;
            }
            String::from_utf8(w.into_inner().map_err(|e| CliError::Input(e.to_string()))?).expect("utf8")
        }
    };
    emit(a.output.as_deref(), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_range("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_range("4").unwrap(), vec![4]);
        assert_eq!(parse_range("1,4").unwrap(), vec![1, 4]);
        assert!(parse_range("3..1").is_err());
        assert!(parse_range("0").is_err());
    }

    #[test]
    fn significant_digits() {
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(2.0), "2");
        assert_eq!(sig12(1234567.891234567), "1234567.89123");
    }

    #[test]
    fn exit_codes() {
        let cap: CliError = mtype_core::Error::LevelCap { n: 20, cap: 12 }.into();
        assert_eq!(cap.exit_code(), 3);
        let weak: CliError = mtype_core::Error::InsufficientIndexSet { found: 0, needed: 2 }.into();
        assert_eq!(weak.exit_code(), 4);
        let parse: CliError = mtype_core::Error::Parse("x".into()).into();
        assert_eq!(parse.exit_code(), 2);
    }
}
