//! Constructive factorization `Σ_n = B [L₂,T] A` of the summation operator
//! through a martingale witness.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::martingale::Mds;
use crate::norm::NormKind;
use crate::scalar::{rational_from_f64, rational_str, QuadRational};
use crate::spaces::OperatorSpec;
use crate::stepfn::StepFunction;

/// Default descending schedule for `delta`.
pub fn default_schedule() -> Vec<BigRational> {
    [(9, 10), (3, 4), (1, 2), (1, 4)]
        .iter()
        .map(|&(a, b)| BigRational::new(a.into(), b.into()))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorizationResult {
    pub n: usize,
    #[serde(with = "rational_str")]
    pub delta: BigRational,
    /// Selected 1-based difference indices `i_1 < … < i_n`.
    pub indices: Vec<usize>,
    /// `⟨[L₂,T] d_{i_k}, g⟩`.
    pub pairings: Vec<QuadRational>,
    /// `A e_k = d_{i_k} / ⟨[L₂,T] d_{i_k}, g⟩`.
    pub a: Vec<StepFunction>,
    /// Row functionals `E_{i_k} g` of `B`.
    pub b: Vec<StepFunction>,
    pub norm_a_sq: QuadRational,
    /// Upper bound for `‖B‖²` (attained by the row of largest norm).
    pub norm_b_sq: QuadRational,
    pub product_bound: f64,
    /// Squared equal-norm sup ratio of the full witness.
    pub witness_ratio_sq: QuadRational,
    /// `6√n / (δ r)` with `r` the witness ratio.
    pub witness_bound: f64,
    pub composed: Vec<Vec<QuadRational>>,
    pub note: String,
}

const NOTE: &str = "bounds are relative to the supplied witness ratio r, not the ideal norm itself";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntryMismatch {
    pub row: usize,
    pub col: usize,
    pub expected: QuadRational,
    pub found: QuadRational,
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorizationReport {
    pub passed: bool,
    pub mismatches: Vec<EntryMismatch>,
    pub norm_a_sq: QuadRational,
    pub norm_b_sq: QuadRational,
    pub product: f64,
    pub norms_consistent: bool,
}

/// Smallest convenient `c` in the ring with `c ≥ 0` and `c² ≥ x`; exact for
/// rational perfect squares.
pub fn sqrt_upper(x: &QuadRational) -> QuadRational {
    if !x.is_positive() {
        return QuadRational::zero();
    }
    if x.is_rational() {
        let r = x.rational_part();
        let (n, d) = (r.numer(), r.denom());
        let (sn, sd) = (n.sqrt(), d.sqrt());
        if &(&sn * &sn) == n && &(&sd * &sd) == d {
            return QuadRational::from_rational(BigRational::new(sn, sd));
        }
    }
    let mut bump = 1e-12;
    loop {
        let c = QuadRational::from_rational(rational_from_f64(x.sqrt_f64() * (1.0 + bump), 48));
        if c.square() >= *x {
            return c;
        }
        bump *= 16.0;
    }
}

/// Pointwise functional `h` with `⟨v, h⟩ = ‖v‖²` and `‖h‖_* = ‖v‖`.
fn norming_value(v: &[QuadRational], norm: &NormKind) -> Result<Vec<QuadRational>> {
    let sign = |x: &QuadRational| match x.sign() {
        Ordering::Greater => QuadRational::one(),
        Ordering::Less => -QuadRational::one(),
        Ordering::Equal => QuadRational::zero(),
    };
    match norm {
        NormKind::L2 => Ok(v.to_vec()),
        NormKind::L1 => {
            let s = norm.norm_exact(v).expect("l1");
            Ok(v.iter().map(|x| sign(x) * &s).collect())
        }
        NormKind::Linf => {
            let s = norm.norm_exact(v).expect("linf");
            let mut out = vec![QuadRational::zero(); v.len()];
            if let Some(i) = v.iter().position(|x| x.abs() == s) {
                out[i] = sign(&v[i]) * &s;
            }
            Ok(out)
        }
        NormKind::WeightedL2Sum { .. } => Err(Error::Unsupported("norming functional for weighted targets".into())),
    }
}

/// The norming functional of `Σ [L₂,T] d_k`, scaled so that `‖g‖_{L₂} ≤ 1`.
pub fn norming_functional(t: &OperatorSpec, mds: &Mds) -> Result<StepFunction> {
    let s = mds.apply(t)?.sum();
    let target = t.target();
    let h = StepFunction::new(
        s.partition().clone(),
        s.values().iter().map(|v| norming_value(v, target)).collect::<Result<_>>()?,
    )?;
    let c = sqrt_upper(&s.l2_norm_sq(target)?);
    let inv = c.checked_recip().ok_or(Error::ZeroDenominator)?;
    Ok(h.scale(&inv))
}

struct Prepared {
    pairings: Vec<QuadRational>,
    sum_sq: QuadRational,
}

fn prepare(t: &OperatorSpec, mds: &Mds, g: &StepFunction) -> Result<Prepared> {
    let report = mds.validate();
    if !report.valid {
        return Err(Error::InvalidMds(report.violations.join("; ")));
    }
    if mds.dimension() != t.cols() {
        return Err(Error::DimensionMismatch { expected: t.cols(), found: mds.dimension() });
    }
    if g.dimension() != t.rows() {
        return Err(Error::DimensionMismatch { expected: t.rows(), found: g.dimension() });
    }
    if mds.is_empty() || !mds.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("witness length must be 2n, found {}", mds.len())));
    }
    if g.l2_norm_sq(&t.target().dual())? > QuadRational::one() {
        return Err(Error::InvalidArgument("the functional has L2 norm above 1".into()));
    }
    let image = mds.apply(t)?;
    let pairings = image.differences().iter().map(|d| d.pairing(g)).collect::<Result<Vec<_>>>()?;
    let total: QuadRational = pairings.iter().cloned().sum();
    if !total.is_positive() {
        return Err(Error::InvalidArgument("the witness pairing with the functional is not positive".into()));
    }
    Ok(Prepared { pairings, sum_sq: image.sum().l2_norm_sq(t.target())? })
}

/// `F = {k : ⟨[L₂,T] d_k, g⟩ > θ}` with `θ = δ ‖Σ [L₂,T] d_k‖ / (4 · 2n)`,
/// which equals `δ r M / (4√(2n))` for the sup ratio `r` and `M = max ‖d_k‖`.
fn select(pre: &Prepared, delta: &BigRational) -> Vec<usize> {
    let len = pre.pairings.len();
    let rhs = QuadRational::from_rational(delta * delta) * &pre.sum_sq;
    let scale = QuadRational::from_int(16 * (len * len) as i64);
    pre.pairings
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_positive() && &scale * p.square() > rhs)
        .map(|(i, _)| i + 1)
        .collect()
}

/// The index set `F` for a given `delta` (1-based).
pub fn selected_indices(t: &OperatorSpec, mds: &Mds, g: &StepFunction, delta: &BigRational) -> Result<Vec<usize>> {
    check_delta(delta)?;
    Ok(select(&prepare(t, mds, g)?, delta))
}

fn check_delta(delta: &BigRational) -> Result<()> {
    if !delta.is_positive() || delta >= &BigRational::one() {
        return Err(Error::InvalidArgument(format!("delta must lie in (0,1), found {delta}")));
    }
    Ok(())
}

fn max_sq(fs: &[StepFunction], norm: &NormKind) -> Result<QuadRational> {
    let mut best = QuadRational::zero();
    for f in fs {
        best = best.max(f.l2_norm_sq(norm)?);
    }
    Ok(best)
}

fn compose(t: &OperatorSpec, a: &[StepFunction], b: &[StepFunction]) -> Result<Vec<Vec<QuadRational>>> {
    let images = a.iter().map(|f| t.apply_l2(f)).collect::<Result<Vec<_>>>()?;
    b.par_iter()
        .map(|row| images.iter().map(|col| col.pairing(row)).collect::<Result<Vec<_>>>())
        .collect()
}

/// Lower-triangular ones: the matrix of `Σ_n`.
pub fn summation_matrix(n: usize) -> Vec<Vec<QuadRational>> {
    (0..n)
        .map(|h| (0..n).map(|k| if k <= h { QuadRational::one() } else { QuadRational::zero() }).collect())
        .collect()
}

pub fn build_factorization(
    t: &OperatorSpec,
    mds: &Mds,
    g: &StepFunction,
    delta: &BigRational,
) -> Result<FactorizationResult> {
    check_delta(delta)?;
    let pre = prepare(t, mds, g)?;
    let n = mds.len() / 2;
    let f = select(&pre, delta);
    if f.len() < n {
        return Err(Error::InsufficientIndexSet { found: f.len(), needed: n });
    }
    let indices: Vec<usize> = f[..n].to_vec();
    let mut pairings = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for &i in &indices {
        let p = pre.pairings[i - 1].clone();
        let inv = p.checked_recip().ok_or(Error::ZeroPairing(i))?;
        a.push(mds.differences()[i - 1].scale(&inv));
        b.push(g.conditional_expectation(mds.filtration().get(i)));
        pairings.push(p);
    }
    let norm_a_sq = max_sq(&a, t.source())?;
    let norm_b_sq = max_sq(&b, &t.target().dual())?;
    let composed = compose(t, &a, &b)?;
    if composed != summation_matrix(n) {
        return Err(Error::InvalidMds("composition does not reproduce the summation operator".into()));
    }
    let m_sq = max_sq(mds.differences(), t.source())?;
    let witness_ratio_sq = pre
        .sum_sq
        .checked_div(&(QuadRational::from_int(2 * n as i64) * m_sq))
        .ok_or(Error::ZeroDenominator)?;
    let delta_f = crate::scalar::rational_to_f64(delta);
    Ok(FactorizationResult {
        n,
        delta: delta.clone(),
        indices,
        pairings,
        a,
        b,
        product_bound: norm_a_sq.sqrt_f64() * norm_b_sq.sqrt_f64(),
        witness_bound: 6.0 * (n as f64).sqrt() / (delta_f * witness_ratio_sq.sqrt_f64()),
        norm_a_sq,
        norm_b_sq,
        witness_ratio_sq,
        composed,
        note: NOTE.into(),
    })
}

/// Tries each `delta` in order and returns the first success, or the error of
/// the last attempt.
pub fn factorize_with_schedule(
    t: &OperatorSpec,
    mds: &Mds,
    g: Option<&StepFunction>,
    schedule: &[BigRational],
) -> Result<FactorizationResult> {
    let owned;
    let g = match g {
        Some(g) => g,
        None => {
            owned = norming_functional(t, mds)?;
            &owned
        }
    };
    let mut last = Error::InvalidArgument("empty delta schedule".into());
    for delta in schedule {
        match build_factorization(t, mds, g, delta) {
            Ok(r) => return Ok(r),
            Err(e @ Error::InsufficientIndexSet { .. }) | Err(e @ Error::ZeroPairing(_)) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Recomputes the composed matrix and both norms from the stored maps.
pub fn verify_factorization(res: &FactorizationResult, t: &OperatorSpec) -> Result<FactorizationReport> {
    if res.a.len() != res.n || res.b.len() != res.n {
        return Err(Error::DimensionMismatch { expected: res.n, found: res.a.len().min(res.b.len()) });
    }
    let composed = compose(t, &res.a, &res.b)?;
    let expected = summation_matrix(res.n);
    let mut mismatches = Vec::new();
    for (h, (row, want)) in composed.iter().zip(&expected).enumerate() {
        for (k, (x, w)) in row.iter().zip(want).enumerate() {
            if x != w {
                mismatches.push(EntryMismatch { row: h + 1, col: k + 1, expected: w.clone(), found: x.clone() });
            }
        }
    }
    let norm_a_sq = max_sq(&res.a, t.source())?;
    let norm_b_sq = max_sq(&res.b, &t.target().dual())?;
    let norms_consistent = norm_a_sq == res.norm_a_sq && norm_b_sq == res.norm_b_sq;
    Ok(FactorizationReport {
        passed: mismatches.is_empty() && norms_consistent,
        mismatches,
        product: norm_a_sq.sqrt_f64() * norm_b_sq.sqrt_f64(),
        norm_a_sq,
        norm_b_sq,
        norms_consistent,
    })
}

/// The `ℓ₁` witness `d_k = e_k r_k` of length `2n` (Rademacher directions).
pub fn identity_l1_witness(n: usize) -> Result<Mds> {
    let len = 2 * n;
    let ones = vec![BigRational::one(); len];
    let c = crate::ideal::diagonal_type_witness(&ones, len, &BigRational::from_integer(BigInt::from(2)))?;
    crate::martingale::from_haar_coeffs(&c)
}
