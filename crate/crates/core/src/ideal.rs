//! Type and cotype ideal norms: exact ratio evaluators, witness families,
//! certified estimates and the cross-check suite.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::One;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::haar::{analyze, synthesize, HaarCoefficients, Tree, TreeIndex, DEFAULT_LEVEL_CAP};
use crate::martingale::{from_haar_coeffs, glue, Mds};
use crate::norm::NormKind;
use crate::scalar::{format_rational, parse_rational, rat, rational_from_f64, rational_to_f64, QuadRational};
use crate::search::{self, Objective, Problem};
use crate::spaces::OperatorSpec;
use crate::stepfn::{IntervalPartition, StepFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Type,
    Cotype,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MartingaleVariant {
    Type,
    Cotype,
    /// Type ratio restricted to differences of equal norm.
    EqualNorm,
    /// `‖Σ Td_k‖² / (n · max_k ‖d_k‖²)`.
    EqualNormSup,
}

/// `num / den` with `den > 0`, both exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SquaredRatio {
    pub num: QuadRational,
    pub den: QuadRational,
}

impl SquaredRatio {
    fn new(num: QuadRational, den: QuadRational) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::ZeroDenominator);
        }
        Ok(Self { num, den })
    }

    pub fn value_sq(&self) -> QuadRational {
        self.num.checked_div(&self.den).expect("positive denominator")
    }

    pub fn value(&self) -> f64 {
        self.value_sq().sqrt_f64()
    }

    /// Exact comparison by cross multiplication.
    pub fn cmp_ratio(&self, other: &SquaredRatio) -> Ordering {
        (&self.num * &other.den).cmp(&(&other.num * &self.den))
    }
}

impl Serialize for SquaredRatio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("SquaredRatio", 4)?;
        st.serialize_field("num", &self.num)?;
        st.serialize_field("den", &self.den)?;
        st.serialize_field("value_sq", &self.value_sq())?;
        st.serialize_field("value", &self.value())?;
        st.end()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IdealKind {
    HaarType,
    HaarCotype,
    MType,
    MCotype,
    EqMType,
    TypeP(BigRational),
}

impl IdealKind {
    pub fn is_haar(&self) -> bool {
        matches!(self, IdealKind::HaarType | IdealKind::HaarCotype | IdealKind::TypeP(_))
    }

    fn variant(&self) -> Option<MartingaleVariant> {
        match self {
            IdealKind::MType => Some(MartingaleVariant::Type),
            IdealKind::MCotype => Some(MartingaleVariant::Cotype),
            IdealKind::EqMType => Some(MartingaleVariant::EqualNormSup),
            _ => None,
        }
    }
}

impl fmt::Display for IdealKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdealKind::HaarType => f.write_str("haar_type"),
            IdealKind::HaarCotype => f.write_str("haar_cotype"),
            IdealKind::MType => f.write_str("mtype"),
            IdealKind::MCotype => f.write_str("mcotype"),
            IdealKind::EqMType => f.write_str("eq_mtype"),
            IdealKind::TypeP(p) => write!(f, "type_p({})", format_rational(p)),
        }
    }
}

impl FromStr for IdealKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match s.as_str() {
            "haar_type" => IdealKind::HaarType,
            "haar_cotype" => IdealKind::HaarCotype,
            "mtype" => IdealKind::MType,
            "mcotype" => IdealKind::MCotype,
            "eq_mtype" => IdealKind::EqMType,
            _ => {
                let inner = s
                    .strip_prefix("type_p(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Parse(format!("unknown ideal norm kind '{s}'")))?;
                IdealKind::TypeP(parse_rational(inner)?)
            }
        })
    }
}

impl Serialize for IdealKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Exact `(numerator², denominator²)` of the Haar type or cotype inequality.
pub fn haar_ratio(t: &OperatorSpec, c: &HaarCoefficients, dir: Direction) -> Result<SquaredRatio> {
    if c.dimension() != t.cols() {
        return Err(Error::DimensionMismatch { expected: t.cols(), found: c.dimension() });
    }
    let tc = c.apply(t)?;
    let (num, den) = match dir {
        Direction::Type => (
            synthesize(&tc).l2_norm_sq(t.target())?,
            sum_norms_sq(c, t.source())?,
        ),
        Direction::Cotype => (
            sum_norms_sq(&tc, t.target())?,
            synthesize(c).l2_norm_sq(t.source())?,
        ),
    };
    SquaredRatio::new(num, den)
}

fn sum_norms_sq(c: &HaarCoefficients, norm: &NormKind) -> Result<QuadRational> {
    c.coeffs().iter().map(|x| norm.norm_sq(x)).sum()
}

/// `‖Σ Tx χ‖² / (L · max_k Σ_j ‖x_k^(j)‖²)` over the `L` levels of the tree:
/// the sup variant for the martingale of the coefficients.
fn haar_sup_ratio(t: &OperatorSpec, c: &HaarCoefficients) -> Result<SquaredRatio> {
    let tc = c.apply(t)?;
    let num = synthesize(&tc).l2_norm_sq(t.target())?;
    let tr = c.tree();
    let mut max = QuadRational::zero();
    for k in tr.levels() {
        let s: QuadRational = c.level(k).iter().map(|x| t.source().norm_sq(x)).sum::<Result<_>>()?;
        max = max.max(s);
    }
    SquaredRatio::new(num, max * QuadRational::from_int(tr.level_count() as i64))
}

/// Exact ratio of a martingale difference sequence.
pub fn martingale_ratio(t: &OperatorSpec, mds: &Mds, variant: MartingaleVariant) -> Result<SquaredRatio> {
    if mds.dimension() != t.cols() {
        return Err(Error::DimensionMismatch { expected: t.cols(), found: mds.dimension() });
    }
    let report = mds.validate();
    if !report.valid {
        return Err(Error::InvalidMds(report.violations.join("; ")));
    }
    let td = mds.apply(t)?;
    let src = mds.norms_sq(t.source())?;
    let type_num = || td.sum().l2_norm_sq(t.target());
    match variant {
        MartingaleVariant::Type => SquaredRatio::new(type_num()?, src.iter().sum()),
        MartingaleVariant::Cotype => {
            let num = td.norms_sq(t.target())?.iter().sum();
            SquaredRatio::new(num, mds.sum().l2_norm_sq(t.source())?)
        }
        MartingaleVariant::EqualNorm => {
            if src.windows(2).any(|w| w[0] != w[1]) {
                return Err(Error::UnequalNorms);
            }
            SquaredRatio::new(type_num()?, src.iter().sum())
        }
        MartingaleVariant::EqualNormSup => {
            let max = src.iter().cloned().fold(QuadRational::zero(), QuadRational::max);
            SquaredRatio::new(type_num()?, max * QuadRational::from_int(mds.len() as i64))
        }
    }
}

fn check_p(p: &BigRational) -> Result<f64> {
    if *p <= BigRational::one() || *p > rat(2) {
        return Err(Error::InvalidArgument(format!("p = {} must lie in (1, 2]", format_rational(p))));
    }
    Ok(rational_to_f64(p))
}

/// Conjugate exponent `p' = p/(p-1)`.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// Haar type `p` ratio (floating point):
/// `‖Σ Tx χ‖_{L_p} / (Σ_k ‖Σ_j x_k^(j) χ_k^(j)‖_{L_p}^p)^{1/p}`.
pub fn type_p_ratio(t: &OperatorSpec, c: &HaarCoefficients, p: &BigRational) -> Result<f64> {
    let pf = check_p(p)?;
    if c.dimension() != t.cols() {
        return Err(Error::DimensionMismatch { expected: t.cols(), found: c.dimension() });
    }
    let g = synthesize(&c.apply(t)?);
    let num: f64 = g
        .partition()
        .lengths()
        .iter()
        .zip(g.values())
        .map(|(len, v)| {
            let v: Vec<f64> = v.iter().map(QuadRational::to_f64).collect();
            rational_to_f64(len) * t.target().norm_f64(&v).powf(pf)
        })
        .sum();
    let mut den = 0.0;
    for (TreeIndex { k, .. }, x) in c.iter() {
        let x: Vec<f64> = x.iter().map(QuadRational::to_f64).collect();
        let nx = t.source().norm_f64(&x);
        den += if k == 0 {
            nx.powf(pf)
        } else {
            let h = 2f64.powf((k as f64 - 1.0) / 2.0);
            2f64.powi(1 - k as i32) * (h * nx).powf(pf)
        };
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((num / den).powf(1.0 / pf))
}

/// Haar coefficients over `D_0^n` of `f = e_i` on the `i`-th dyadic interval
/// of length `2^-n`, valued in `ℝ^{2^n}`.
pub fn summation_cotype_witness(n: usize, cap: usize) -> Result<HaarCoefficients> {
    let tr = Tree::with_cap(0, n, cap)?;
    Ok(analyze(&indicator_function(n, 1 << n), tr))
}

/// `f = e_{⌊i·dim/2^n⌋}` on the `i`-th cell of the level-`n` dyadic partition.
pub fn indicator_function(n: usize, dim: usize) -> StepFunction {
    let cells = 1usize << n;
    let values = (0..cells)
        .map(|i| {
            let mut v = vec![QuadRational::zero(); dim];
            v[i * dim / cells] = QuadRational::one();
            v
        })
        .collect();
    StepFunction::new(IntervalPartition::dyadic(n), values).expect("shape")
}

/// `x_k^(j) = c_k e_k` over `D_1^n` with `c_k = w_k 2^{-(k-1)/2}`,
/// `w_k = τ_k^{p'-1}`: every level uses one basis vector of `ℓ₁^{len t}`.
/// Exact for `p = 2`; otherwise `w_k` is rounded to a `2^-48` grid.
pub fn diagonal_type_witness(t: &[BigRational], n: usize, p: &BigRational) -> Result<HaarCoefficients> {
    let pf = check_p(p)?;
    if n == 0 || t.len() < n {
        return Err(Error::InvalidArgument(format!("diagonal of length {} cannot index {n} levels", t.len())));
    }
    let weights: Vec<QuadRational> = t[..n]
        .iter()
        .map(|tau| {
            if *p == rat(2) {
                QuadRational::from_rational(tau.clone())
            } else {
                QuadRational::from_rational(rational_from_f64(rational_to_f64(tau).powf(conjugate(pf) - 1.0), 48))
            }
        })
        .collect();
    let cols: Vec<usize> = (0..n).collect();
    level_basis_witness(Tree::with_cap(1, n, usize::MAX)?, t.len(), &cols, &weights)
}

/// `x_k^(j) = w_k 2^{-(k-1)/2} e_{cols[k]}` (`w_0 e_{cols[0]}` at level 0).
fn level_basis_witness(tr: Tree, dim: usize, cols: &[usize], weights: &[QuadRational]) -> Result<HaarCoefficients> {
    let mut c = HaarCoefficients::zeros(tr, dim);
    for (slot, k) in tr.levels().enumerate() {
        let amp = if k == 0 { weights[slot].clone() } else { &weights[slot] * QuadRational::sqrt2_pow(1 - k as i64) };
        for j in 1..=crate::haar::level_size(k) {
            let mut v = vec![QuadRational::zero(); dim];
            v[cols[slot]] = amp.clone();
            c.set(k, j, v)?;
        }
    }
    Ok(c)
}

/// Closed form `(Σ_{k≤n} τ_k^{p'})^{1/p'}`; exact squared value at `p = 2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagonalValue {
    pub n: usize,
    pub value: f64,
    #[serde(serialize_with = "ser_opt_rational")]
    pub value_sq: Option<BigRational>,
}

fn ser_opt_rational<S: Serializer>(r: &Option<BigRational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_some(&format_rational(r)),
        None => s.serialize_none(),
    }
}

pub fn diagonal_type_exact(t: &[BigRational], n: usize, p: &BigRational) -> Result<DiagonalValue> {
    let pf = check_p(p)?;
    if n == 0 || t.len() < n {
        return Err(Error::InvalidArgument(format!("diagonal of length {} cannot index {n} levels", t.len())));
    }
    if *p == rat(2) {
        let sq: BigRational = t[..n].iter().map(|x| x * x).sum();
        return Ok(DiagonalValue { n, value: rational_to_f64(&sq).sqrt(), value_sq: Some(sq) });
    }
    let q = conjugate(pf);
    let s: f64 = t[..n].iter().map(|x| rational_to_f64(x).powf(q)).sum();
    Ok(DiagonalValue { n, value: s.powf(1.0 / q), value_sq: None })
}

/// Search parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SearchConfig {
    pub seed: u64,
    pub restarts: usize,
    pub sweeps: usize,
    /// Maximal number of signed-basis patterns to enumerate.
    pub enum_budget: u64,
    /// Depth of the dyadic witnesses used for martingale kinds.
    pub search_depth: usize,
    pub level_cap: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            seed: 0x006d_7479_7065,
            restarts: 8,
            sweeps: 40,
            enum_budget: 1_000_000,
            search_depth: 5,
            level_cap: DEFAULT_LEVEL_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "form", content = "data", rename_all = "snake_case")]
pub enum Witness {
    Haar(HaarCoefficients),
    Martingale(Mds),
    None,
}

/// Certified lower bound (with witness) and rigorous upper bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdealNormEstimate {
    pub kind: IdealKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub n: usize,
    pub lower: f64,
    pub upper: f64,
    pub lower_sq: Option<QuadRational>,
    pub upper_sq: Option<QuadRational>,
    pub exact: bool,
    pub upper_source: String,
    pub witness_family: String,
    pub witness: Witness,
    pub seed: u64,
    pub budget: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A rigorous squared upper bound and where it came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UpperBound {
    pub value_sq: QuadRational,
    pub source: String,
}

fn levels_of(m: usize, n: usize) -> usize {
    n + 1 - m
}

fn q(n: usize) -> QuadRational {
    QuadRational::from_int(n as i64)
}

/// Direct bounds in terms of `‖T‖²`.
fn direct_bounds(t: &OperatorSpec, kind: &IdealKind, m: usize, n: usize) -> Vec<(QuadRational, String)> {
    let n2 = t.operator_norm().upper_sq;
    let mut out = Vec::new();
    match kind {
        IdealKind::HaarType | IdealKind::HaarCotype => {
            let l = levels_of(m, n);
            out.push((&n2 * q(l), format!("levels: {l}·‖T‖²")));
            let hilbert = if *kind == IdealKind::HaarType { t.target().is_hilbert() } else { t.source().is_hilbert() };
            if hilbert {
                out.push((n2.clone(), "orthogonality: ‖T‖²".into()));
            }
        }
        IdealKind::MType | IdealKind::EqMType => {
            out.push((&n2 * q(n), format!("triangle: {n}·‖T‖²")));
            out.push((&n2 * q(4 * n), format!("universal: 4·{n}·‖T‖²")));
            if t.target().is_hilbert() {
                out.push((n2.clone(), "orthogonality: ‖T‖²".into()));
            }
        }
        IdealKind::MCotype => {
            out.push((&n2 * q(4 * n), format!("universal: 4·{n}·‖T‖²")));
            if t.source().is_hilbert() {
                out.push((n2.clone(), "orthogonality: ‖T‖²".into()));
            }
        }
        IdealKind::TypeP(_) => {}
    }
    out
}

fn best_direct(t: &OperatorSpec, kind: &IdealKind, m: usize, n: usize) -> (QuadRational, String) {
    direct_bounds(t, kind, m, n).into_iter().min_by(|a, b| a.0.cmp(&b.0)).expect("nonempty")
}

/// Minimum of the direct bounds and of their transfers through the sandwich
/// inequalities, duality and the equal-norm comparison. Squared.
pub fn upper_bound(t: &OperatorSpec, kind: &IdealKind, m: usize, n: usize) -> Result<UpperBound> {
    if matches!(kind, IdealKind::TypeP(_)) {
        return Err(Error::Unsupported("type p bounds are not squared ring values".into()));
    }
    let mut cands = direct_bounds(t, kind, m, n);
    let scaled = |f: i64, (v, s): (QuadRational, String), what: &str| (v * QuadRational::from_int(f), format!("{what}: {s}"));
    match kind {
        IdealKind::HaarType | IdealKind::HaarCotype if n >= 1 => {
            let factor = if *kind == IdealKind::HaarType { 4 } else { 9 };
            if m == 0 {
                cands.push(scaled(factor, best_direct(t, kind, 1, n), "sandwich from D_1"));
            } else if m == 1 {
                cands.push(scaled(1, best_direct(t, kind, 0, n), "sandwich from D_0"));
            }
        }
        IdealKind::MType => {
            cands.push(scaled(256, best_direct(t, &IdealKind::EqMType, 0, n), "equal-norm comparison"));
        }
        _ => {}
    }
    if let Ok(adj) = t.adjoint() {
        match kind {
            IdealKind::HaarType if m < n => {
                let f = if m == 0 { 1 } else { 4 };
                cands.push(scaled(f, best_direct(&adj, &IdealKind::HaarCotype, m, n), "duality"));
            }
            IdealKind::HaarCotype if m < n => {
                cands.push(scaled(1, best_direct(&adj, &IdealKind::HaarType, m, n), "duality"));
            }
            IdealKind::MType | IdealKind::EqMType => {
                cands.push(scaled(4, best_direct(&adj, &IdealKind::MCotype, 0, n), "duality"));
            }
            IdealKind::MCotype => {
                cands.push(scaled(4, best_direct(&adj, &IdealKind::MType, 0, n), "duality"));
            }
            _ => {}
        }
    }
    let (value_sq, source) = cands.into_iter().min_by(|a, b| a.0.cmp(&b.0)).expect("nonempty");
    Ok(UpperBound { value_sq, source })
}

/// Rounds a float family onto a `2^-20` grid relative to its largest entry.
fn rationalize(tr: Tree, cols: usize, x: &[f64]) -> Option<HaarCoefficients> {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let coeffs = x
        .chunks(cols)
        .map(|c| c.iter().map(|v| QuadRational::from_rational(rational_from_f64(v / scale, 20))).collect())
        .collect();
    HaarCoefficients::new(tr, cols, coeffs).ok()
}

fn to_flat(c: &HaarCoefficients) -> Vec<f64> {
    c.to_f64().into_iter().flatten().collect()
}

fn exact_objective(t: &OperatorSpec, c: &HaarCoefficients, obj: Objective) -> Result<SquaredRatio> {
    match obj {
        Objective::Type => haar_ratio(t, c, Direction::Type),
        Objective::Cotype => haar_ratio(t, c, Direction::Cotype),
        Objective::TypeSup => haar_sup_ratio(t, c),
    }
}

/// `‖T e_c‖` as a ring element: exact for `ℓ₁`/`ℓ∞` targets, rounded otherwise.
fn column_weight(t: &OperatorSpec, c: usize) -> QuadRational {
    let col = t.column(c);
    t.target().norm_exact(&col).unwrap_or_else(|| {
        let v: Vec<f64> = col.iter().map(QuadRational::to_f64).collect();
        QuadRational::from_rational(rational_from_f64(t.target().norm_f64(&v), 30))
    })
}

/// Explicit witnesses tried before any search.
fn named_families(t: &OperatorSpec, tr: Tree, obj: Objective) -> Vec<(String, HaarCoefficients)> {
    let cols = t.cols();
    let weights: Vec<QuadRational> = (0..cols).map(|c| column_weight(t, c)).collect();
    let best_col = (0..cols).max_by(|&a, &b| weights[a].cmp(&weights[b]).then(b.cmp(&a))).unwrap_or(0);
    let mut out = Vec::new();
    let mut single = HaarCoefficients::zeros(tr, cols);
    let mut e = vec![QuadRational::zero(); cols];
    e[best_col] = QuadRational::one();
    single.set(tr.n(), 1, e).expect("in tree");
    out.push(("single-haar".to_string(), single));
    match obj {
        Objective::Type | Objective::TypeSup => {
            let mut order: Vec<usize> = (0..cols).collect();
            order.sort_by(|&a, &b| weights[b].cmp(&weights[a]).then(a.cmp(&b)));
            let level_cols: Vec<usize> = (0..tr.level_count()).map(|s| order[s % cols]).collect();
            let w: Vec<QuadRational> = if obj == Objective::Type {
                level_cols.iter().map(|&c| weights[c].clone()).collect()
            } else {
                vec![QuadRational::one(); tr.level_count()]
            };
            if w.iter().any(|x| !x.is_zero()) {
                if let Ok(c) = level_basis_witness(tr, cols, &level_cols, &w) {
                    out.push(("diagonal".to_string(), c));
                }
            }
        }
        Objective::Cotype => {
            out.push(("indicator".to_string(), analyze(&indicator_function(tr.n(), cols), tr)));
        }
    }
    out
}

struct HaarSearch {
    coeffs: HaarCoefficients,
    ratio: SquaredRatio,
    family: String,
}

/// Best certified Haar witness for one objective.
fn search_haar(t: &OperatorSpec, tr: Tree, obj: Objective, cfg: &SearchConfig) -> Result<HaarSearch> {
    let named = named_families(t, tr, obj);
    let problem = Problem::new(t, tr, obj);
    let mut floats: Vec<(String, f64, Vec<f64>)> = Vec::new();
    if obj != Objective::Cotype && *t.source() == NormKind::L1 {
        if let Some(count) = search::pattern_count(tr.len(), t.cols()).filter(|&c| c <= cfg.enum_budget) {
            for (v, x) in search::enumerate_patterns(&problem, count, 4) {
                let (v2, x2) = search::ascend(&problem, x.clone(), cfg.sweeps);
                floats.push(("extreme-point".into(), v, x));
                floats.push(("extreme-point+ascent".into(), v2, x2));
            }
        }
    }
    for (name, c) in &named {
        let (v, x) = search::ascend(&problem, to_flat(c), cfg.sweeps);
        floats.push((format!("{name}+ascent"), v, x));
    }
    for (v, x) in search::random_restarts(&problem, cfg.seed, cfg.restarts, cfg.sweeps).into_iter().take(4) {
        floats.push(("random-restart".into(), v, x));
    }
    floats.sort_by(|a, b| b.1.total_cmp(&a.1));
    floats.truncate(6);
    let mut cands: Vec<(String, HaarCoefficients)> = named;
    cands.extend(floats.into_iter().filter_map(|(name, _, x)| rationalize(tr, t.cols(), &x).map(|c| (name, c))));
    let scored: Vec<Option<(String, HaarCoefficients, SquaredRatio)>> = cands
        .into_par_iter()
        .map(|(name, c)| exact_objective(t, &c, obj).ok().map(|r| (name, c, r)))
        .collect();
    let mut best: Option<(String, HaarCoefficients, SquaredRatio)> = None;
    for cand in scored.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| cand.2.cmp_ratio(&b.2) == Ordering::Greater) {
            best = Some(cand);
        }
    }
    let (family, coeffs, ratio) = best.ok_or(Error::ZeroDenominator)?;
    Ok(HaarSearch { coeffs, ratio, family })
}

/// Largest divisor of `n` not exceeding `bound`.
fn largest_divisor(n: usize, bound: usize) -> usize {
    (1..=bound.min(n)).rev().find(|d| n.is_multiple_of(*d)).unwrap_or(1)
}

const MARTINGALE_NOTE: &str = "martingale lower bounds range over dyadic filtrations and their glued refinements only";

/// Certified lower and rigorous upper bound for one ideal norm.
/// `m` is the first tree level for Haar kinds and ignored otherwise.
pub fn estimate(t: &OperatorSpec, kind: &IdealKind, m: usize, n: usize, cfg: &SearchConfig) -> Result<IdealNormEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("index n must be positive".into()));
    }
    if let IdealKind::TypeP(p) = kind {
        return estimate_type_p(t, p, n, cfg);
    }
    let budget = cfg.enum_budget;
    let (lower_ratio, family, witness, note) = if kind.is_haar() {
        let tr = Tree::with_cap(m, n, cfg.level_cap)?;
        let obj = if *kind == IdealKind::HaarType { Objective::Type } else { Objective::Cotype };
        let s = search_haar(t, tr, obj, cfg)?;
        (s.ratio, s.family, Witness::Haar(s.coeffs), None)
    } else {
        if n > 1 << cfg.level_cap.min(20) {
            return Err(Error::LevelCap { n, cap: cfg.level_cap });
        }
        let depth = cfg.search_depth.max(1).min(cfg.level_cap);
        let variant = kind.variant().expect("martingale kind");
        let mut cands: Vec<(String, Mds)> = Vec::new();
        match kind {
            IdealKind::MType | IdealKind::MCotype => {
                let d = n.min(depth);
                let obj = if *kind == IdealKind::MType { Objective::Type } else { Objective::Cotype };
                let s = search_haar(t, Tree::with_cap(1, d, usize::MAX)?, obj, cfg)?;
                cands.push((format!("dyadic depth {d}, {}", s.family), from_haar_coeffs(&s.coeffs)?.pad(n - d)));
            }
            _ => {
                let dq = n.min(depth);
                let dp = largest_divisor(n, depth);
                let mut depths = vec![dp];
                if dq != dp {
                    depths.push(dq);
                }
                for d in depths {
                    let s = search_haar(t, Tree::with_cap(1, d, usize::MAX)?, Objective::TypeSup, cfg)?;
                    let base = from_haar_coeffs(&s.coeffs)?;
                    if n.is_multiple_of(d) {
                        cands.push((format!("dyadic depth {d} glued mod {}, {}", n / d, s.family), glue(&base, n / d)?));
                    } else {
                        cands.push((format!("dyadic depth {d}, padded, {}", s.family), base.pad(n - d)));
                    }
                }
            }
        }
        let mut best: Option<(SquaredRatio, String, Mds)> = None;
        for (name, mds) in cands {
            let r = martingale_ratio(t, &mds, variant)?;
            if best.as_ref().is_none_or(|b| r.cmp_ratio(&b.0) == Ordering::Greater) {
                best = Some((r, name, mds));
            }
        }
        let (r, name, mds) = best.expect("at least one candidate");
        (r, name, Witness::Martingale(mds), Some(MARTINGALE_NOTE.to_string()))
    };
    let ub = upper_bound(t, kind, m, n)?;
    let lower_sq = lower_ratio.value_sq();
    let exact = lower_sq == ub.value_sq;
    Ok(IdealNormEstimate {
        kind: kind.clone(),
        m: kind.is_haar().then_some(m),
        n,
        lower: lower_sq.sqrt_f64(),
        upper: ub.value_sq.sqrt_f64(),
        lower_sq: Some(lower_sq),
        upper_sq: Some(ub.value_sq),
        exact,
        upper_source: ub.source,
        witness_family: family,
        witness,
        seed: cfg.seed,
        budget,
        note,
    })
}

fn estimate_type_p(t: &OperatorSpec, p: &BigRational, n: usize, cfg: &SearchConfig) -> Result<IdealNormEstimate> {
    let pf = check_p(p)?;
    let tr = Tree::with_cap(1, n, cfg.level_cap)?;
    let mut cands: Vec<(String, HaarCoefficients)> = Vec::new();
    let weights: Vec<f64> = (0..t.cols()).map(|c| column_weight(t, c).to_f64()).collect();
    let mut order: Vec<usize> = (0..t.cols()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let level_cols: Vec<usize> = (0..n).map(|s| order[s % t.cols()]).collect();
    let w: Vec<QuadRational> = level_cols
        .iter()
        .map(|&c| QuadRational::from_rational(rational_from_f64(weights[c].powf(conjugate(pf) - 1.0), 48)))
        .collect();
    if w.iter().any(|x| !x.is_zero()) {
        cands.push(("diagonal".into(), level_basis_witness(tr, t.cols(), &level_cols, &w)?));
    }
    let s = search_haar(t, tr, Objective::Type, cfg)?;
    cands.push((format!("type-2 search, {}", s.family), s.coeffs));
    let mut best: Option<(f64, String, HaarCoefficients)> = None;
    for (name, c) in cands {
        if let Ok(v) = type_p_ratio(t, &c, p) {
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, name, c));
            }
        }
    }
    let (lower, family, c) = best.ok_or(Error::ZeroDenominator)?;
    let upper = (n as f64).powf(1.0 / conjugate(pf)) * t.norm_upper_f64();
    Ok(IdealNormEstimate {
        kind: IdealKind::TypeP(p.clone()),
        m: Some(1),
        n,
        lower,
        upper,
        lower_sq: None,
        upper_sq: None,
        exact: false,
        upper_source: format!("Hölder over levels: {n}^(1/p')·‖T‖"),
        witness_family: family,
        witness: Witness::Haar(c),
        seed: cfg.seed,
        budget: cfg.enum_budget,
        note: Some("floating-point bounds".into()),
    })
}

/// Re-evaluates the stored witness; `None` for float-only kinds.
pub fn witness_ratio(t: &OperatorSpec, est: &IdealNormEstimate) -> Result<Option<SquaredRatio>> {
    match (&est.kind, &est.witness) {
        (IdealKind::HaarType, Witness::Haar(c)) => haar_ratio(t, c, Direction::Type).map(Some),
        (IdealKind::HaarCotype, Witness::Haar(c)) => haar_ratio(t, c, Direction::Cotype).map(Some),
        (k, Witness::Martingale(mds)) if k.variant().is_some() => {
            martingale_ratio(t, mds, k.variant().expect("checked")).map(Some)
        }
        _ => Ok(None),
    }
}

/// One checked inequality `lower(lhs)² ≤ constant² · upper(rhs)²`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelationCheck {
    pub relation: String,
    pub lhs: String,
    pub rhs: String,
    #[serde(with = "crate::scalar::rational_str")]
    pub constant_sq: BigRational,
    pub lower: f64,
    pub scaled_upper: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelationReport {
    pub n: usize,
    pub checks: Vec<RelationCheck>,
    pub violations: usize,
    pub note: String,
}

impl RelationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn label(e: &IdealNormEstimate, dual: bool) -> String {
    let op = if dual { "T'" } else { "T" };
    match e.m {
        Some(m) => format!("{}({op}|D_{m}^{})", e.kind, e.n),
        None => format!("{}({op}|M_{})", e.kind, e.n),
    }
}

fn check(name: &str, lhs: (&IdealNormEstimate, bool), c_sq: BigRational, rhs: (&IdealNormEstimate, bool)) -> RelationCheck {
    let lo = lhs.0.lower_sq.clone().expect("exact lower");
    let up = rhs.0.upper_sq.clone().expect("exact upper") * QuadRational::from_rational(c_sq.clone());
    RelationCheck {
        relation: name.to_string(),
        lhs: label(lhs.0, lhs.1),
        rhs: label(rhs.0, rhs.1),
        lower: lo.sqrt_f64(),
        scaled_upper: up.sqrt_f64(),
        passed: lo <= up,
        constant_sq: c_sq,
    }
}

/// Checks every relation between the ideal norms at index `n` in its
/// soundly checkable direction: certified lower bound of the smaller side
/// against the rigorous upper bound of the larger side times the constant.
pub fn verify_relations(t: &OperatorSpec, n: usize, cfg: &SearchConfig) -> Result<RelationReport> {
    use IdealKind::*;
    if n == 0 {
        return Err(Error::InvalidArgument("index n must be positive".into()));
    }
    Tree::with_cap(0, n, cfg.level_cap)?;
    let one = BigRational::one;
    let est = |op: &OperatorSpec, kind: IdealKind, m: usize, idx: usize| estimate(op, &kind, m, idx, cfg);
    let ht1 = est(t, HaarType, 1, n)?;
    let ht0 = est(t, HaarType, 0, n)?;
    let hc1 = est(t, HaarCotype, 1, n)?;
    let hc0 = est(t, HaarCotype, 0, n)?;
    let mt = est(t, MType, 0, n)?;
    let mc = est(t, MCotype, 0, n)?;
    let eq = est(t, EqMType, 0, n)?;
    let eq_next = est(t, EqMType, 0, n + 1)?;
    let mt_big = est(t, MType, 0, 1 << n)?;
    let mut checks = vec![
        check("haar type below martingale type", (&ht1, false), one(), (&mt, false)),
        check("haar cotype below martingale cotype", (&hc1, false), one(), (&mc, false)),
        check("type sandwich, lower side", (&ht1, false), one(), (&ht0, false)),
        check("type sandwich, upper side", (&ht0, false), rat(4), (&ht1, false)),
        check("cotype sandwich, lower side", (&hc1, false), one(), (&hc0, false)),
        check("cotype sandwich, upper side", (&hc0, false), rat(9), (&hc1, false)),
        check(
            "type of length 2^n against cotype on D_0^n",
            (&mt_big, false),
            rat(9) * rat(1 << n) / rat(n as i64),
            (&hc0, false),
        ),
        check("equal-norm type is non-decreasing", (&eq, false), one(), (&eq_next, false)),
        check("type against equal-norm type", (&mt, false), rat(256), (&eq, false)),
        check("equal-norm type below type", (&eq, false), one(), (&mt, false)),
    ];
    if let Ok(adj) = t.adjoint() {
        let a_ht0 = est(&adj, HaarType, 0, n)?;
        let a_hc0 = est(&adj, HaarCotype, 0, n)?;
        let a_mt = est(&adj, MType, 0, n)?;
        let a_mc = est(&adj, MCotype, 0, n)?;
        checks.extend([
            check("duality on D_0^n", (&hc0, false), one(), (&a_ht0, true)),
            check("duality on D_0^n", (&a_ht0, true), one(), (&hc0, false)),
            check("duality on D_0^n", (&a_hc0, true), one(), (&ht0, false)),
            check("duality on D_0^n", (&ht0, false), one(), (&a_hc0, true)),
            check("martingale duality", (&mc, false), rat(4), (&a_mt, true)),
            check("martingale duality", (&a_mt, true), rat(4), (&mc, false)),
            check("martingale duality", (&a_mc, true), rat(4), (&mt, false)),
            check("martingale duality", (&mt, false), rat(4), (&a_mc, true)),
        ]);
        if n >= 2 {
            let a_ht1 = est(&adj, HaarType, 1, n)?;
            let a_hc1 = est(&adj, HaarCotype, 1, n)?;
            checks.extend([
                check("duality on D_1^n", (&hc1, false), one(), (&a_ht1, true)),
                check("duality on D_1^n", (&a_ht1, true), rat(4), (&hc1, false)),
                check("duality on D_1^n", (&a_hc1, true), one(), (&ht1, false)),
                check("duality on D_1^n", (&ht1, false), rat(4), (&a_hc1, true)),
            ]);
        }
    }
    let violations = checks.iter().filter(|c| !c.passed).count();
    Ok(RelationReport { n, checks, violations, note: MARTINGALE_NOTE.to_string() })
}

/// Best ratios over the brute-force instance set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EqualNormComparison {
    pub n: usize,
    pub instances: usize,
    pub best_equal_norm: SquaredRatio,
    pub best_equal_norm_sup: SquaredRatio,
    pub agree: bool,
}

/// Enumerates dyadic martingales over `D_1^n` with
/// `x_k^(j) = α_k 2^{-(k-1)/2} s e_i`, `α_k ∈ {1, 1/2}`, every sign `s` and
/// basis vector `e_i`, and compares the best equal-norm ratio (constant `α`)
/// with the best sup ratio (all `α`).
pub fn equal_norm_bruteforce(t: &OperatorSpec, n: usize) -> Result<EqualNormComparison> {
    let dim = t.cols();
    if !(1..=3).contains(&n) || dim > 2 || !t.source().is_lp() {
        return Err(Error::InvalidArgument("brute force needs n ≤ 3, dimension ≤ 2 and an lp source".into()));
    }
    let tr = Tree::with_cap(1, n, usize::MAX)?;
    let len = tr.len();
    let cells = 1usize << n;
    // α is scaled by 2 so that cell values are integer vectors
    let bound = 2 * n as i64;
    let side = (2 * bound + 1) as usize;
    let mut table: HashMap<Vec<i64>, QuadRational> = HashMap::new();
    for code in 0..side.pow(dim as u32) {
        let v: Vec<i64> = (0..dim).map(|i| (code / side.pow(i as u32) % side) as i64 - bound).collect();
        let qv: Vec<QuadRational> = v.iter().map(|&x| QuadRational::from_int(x)).collect();
        table.insert(v, t.target().norm_sq(&t.apply(&qv)?)?);
    }
    let positions = tr.indices();
    let choices = 2 * dim;
    let patterns = choices.pow(len as u32);
    let alphas = 1usize << n;
    let per_alpha: Vec<(QuadRational, QuadRational)> = (0..alphas)
        .into_par_iter()
        .map(|amask| {
            let alpha: Vec<i64> = (0..n).map(|k| if amask >> k & 1 == 1 { 1 } else { 2 }).collect();
            let sum_sq = QuadRational::from_int(alpha.iter().map(|a| a * a).sum());
            let mut best = QuadRational::zero();
            let mut cell = vec![vec![0i64; dim]; cells];
            for code in 0..patterns {
                for c in cell.iter_mut() {
                    c.iter_mut().for_each(|x| *x = 0);
                }
                let mut rest = code;
                for idx in &positions {
                    let ch = rest % choices;
                    rest /= choices;
                    let (coord, sign) = (ch / 2, if ch.is_multiple_of(2) { 1 } else { -1 });
                    let a = alpha[idx.k - 1];
                    let half = cells >> idx.k;
                    let start = (idx.j - 1) * 2 * half;
                    for (off, c) in cell[start..start + 2 * half].iter_mut().enumerate() {
                        c[coord] += if off < half { sign * a } else { -sign * a };
                    }
                }
                let num: QuadRational = cell.iter().map(|v| table[v].clone()).sum();
                if num > best {
                    best = num;
                }
            }
            // ratios carry the common factor 2^-n from the cell average
            let scale = QuadRational::from_int(cells as i64);
            // a zero denominator marks a non-constant α
            let eq_den = if alpha.windows(2).all(|w| w[0] == w[1]) { sum_sq * scale } else { QuadRational::zero() };
            (best, eq_den)
        })
        .collect();
    let scale = QuadRational::from_int(cells as i64);
    let mut best_eq: Option<SquaredRatio> = None;
    let mut best_sup: Option<SquaredRatio> = None;
    for (amask, (num, eq_den)) in per_alpha.into_iter().enumerate() {
        let alpha: Vec<i64> = (0..n).map(|k| if amask >> k & 1 == 1 { 1 } else { 2 }).collect();
        let max_sq = QuadRational::from_int(alpha.iter().map(|a| a * a).max().expect("n ≥ 1"));
        let sup = SquaredRatio { num: num.clone(), den: max_sq * q(n) * &scale };
        if best_sup.as_ref().is_none_or(|b| sup.cmp_ratio(b) == Ordering::Greater) {
            best_sup = Some(sup);
        }
        if !eq_den.is_zero() {
            let r = SquaredRatio { num, den: eq_den };
            if best_eq.as_ref().is_none_or(|b| r.cmp_ratio(b) == Ordering::Greater) {
                best_eq = Some(r);
            }
        }
    }
    let best_equal_norm = best_eq.expect("constant α present");
    let best_equal_norm_sup = best_sup.expect("nonempty");
    let agree = best_equal_norm.cmp_ratio(&best_equal_norm_sup) == Ordering::Equal;
    Ok(EqualNormComparison { n, instances: alphas * patterns, best_equal_norm, best_equal_norm_sup, agree })
}

/// The coefficient family of one brute-force instance (for cross-checks).
pub fn equal_norm_instance(dim: usize, n: usize, alpha: &[BigRational], choice: &[(usize, bool)]) -> Result<HaarCoefficients> {
    let tr = Tree::with_cap(1, n, usize::MAX)?;
    if alpha.len() != n || choice.len() != tr.len() {
        return Err(Error::InvalidArgument("instance shape".into()));
    }
    let mut c = HaarCoefficients::zeros(tr, dim);
    for (idx, &(coord, neg)) in tr.indices().into_iter().zip(choice) {
        let mut v = vec![QuadRational::zero(); dim];
        let a = QuadRational::from_rational(alpha[idx.k - 1].clone()) * QuadRational::sqrt2_pow(1 - idx.k as i64);
        v[coord] = if neg { -a } else { a };
        c.set(idx.k, idx.j, v)?;
    }
    Ok(c)
}
