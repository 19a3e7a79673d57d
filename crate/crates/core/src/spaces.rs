//! Operators between finite-dimensional normed coordinate spaces.

use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::norm::NormKind;
use crate::scalar::{rational_from_f64, QuadRational};
use crate::stepfn::StepFunction;

/// Sign enumeration is used for exact norms out of `ℓ∞` up to this many
/// coordinates.
const SIGN_ENUM_MAX: usize = 16;

/// A `rows × cols` matrix acting from `(source, cols)` to `(target, rows)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperatorSpec {
    rows: usize,
    cols: usize,
    source: NormKind,
    target: NormKind,
    matrix: Vec<Vec<QuadRational>>,
}

/// Squared operator norm bounds; `exact` implies `lower_sq == upper_sq`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OperatorNorm {
    pub lower_sq: QuadRational,
    pub upper_sq: QuadRational,
    pub exact: bool,
}

impl OperatorNorm {
    fn exact(v: QuadRational) -> Self {
        Self { lower_sq: v.clone(), upper_sq: v, exact: true }
    }

    pub fn lower(&self) -> f64 {
        self.lower_sq.sqrt_f64()
    }

    pub fn upper(&self) -> f64 {
        self.upper_sq.sqrt_f64()
    }
}

impl OperatorSpec {
    pub fn new(matrix: Vec<Vec<QuadRational>>, source: NormKind, target: NormKind) -> Result<Self> {
        let rows = matrix.len();
        if rows == 0 {
            return Err(Error::InvalidArgument("operator with no rows".into()));
        }
        let cols = matrix[0].len();
        if let Some(r) = matrix.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch { expected: cols, found: r.len() });
        }
        source.check_dimension(cols)?;
        target.check_dimension(rows)?;
        Ok(Self { rows, cols, source, target, matrix })
    }

    pub fn zero(rows: usize, cols: usize, source: NormKind, target: NormKind) -> Result<Self> {
        Self::new(vec![vec![QuadRational::zero(); cols]; rows], source, target)
    }

    pub fn identity(dim: usize, norm: NormKind) -> Result<Self> {
        let m = (0..dim)
            .map(|i| (0..dim).map(|j| QuadRational::from_int(i64::from(i == j))).collect())
            .collect();
        Self::new(m, norm.clone(), norm)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn source(&self) -> &NormKind {
        &self.source
    }

    pub fn target(&self) -> &NormKind {
        &self.target
    }

    pub fn matrix(&self) -> &[Vec<QuadRational>] {
        &self.matrix
    }

    pub fn entry(&self, r: usize, c: usize) -> &QuadRational {
        &self.matrix[r][c]
    }

    pub fn column(&self, c: usize) -> Vec<QuadRational> {
        self.matrix.iter().map(|r| r[c].clone()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().flatten().all(QuadRational::is_zero)
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.matrix.iter().map(|r| r.iter().map(QuadRational::to_f64).collect()).collect()
    }

    pub fn scale(&self, c: &QuadRational) -> OperatorSpec {
        let matrix = self.matrix.iter().map(|r| r.iter().map(|x| x * c).collect()).collect();
        OperatorSpec { matrix, ..self.clone() }
    }

    /// Exact matrix-vector product.
    pub fn apply(&self, v: &[QuadRational]) -> Result<Vec<QuadRational>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: v.len() });
        }
        Ok(self.apply_unchecked(v))
    }

    fn apply_unchecked(&self, v: &[QuadRational]) -> Vec<QuadRational> {
        let nz: Vec<usize> = (0..v.len()).filter(|&i| !v[i].is_zero()).collect();
        self.matrix
            .iter()
            .map(|row| {
                nz.iter()
                    .filter(|&&i| !row[i].is_zero())
                    .map(|&i| &row[i] * &v[i])
                    .sum()
            })
            .collect()
    }

    /// `[L₂,T]f(t) = T(f(t))`, written on the partition of `f`.
    pub fn apply_l2(&self, f: &StepFunction) -> Result<StepFunction> {
        if f.dimension() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: f.dimension() });
        }
        let values = f.values().iter().map(|v| self.apply_unchecked(v)).collect();
        StepFunction::new(f.partition().clone(), values)
    }

    pub fn transpose_matrix(&self) -> Vec<Vec<QuadRational>> {
        (0..self.cols).map(|c| self.column(c)).collect()
    }

    /// `T': Y' → X'` for `ℓ_p` source and target.
    pub fn adjoint(&self) -> Result<OperatorSpec> {
        if !self.source.is_lp() || !self.target.is_lp() {
            return Err(Error::Unsupported("adjoints of weighted sum spaces".into()));
        }
        OperatorSpec::new(self.transpose_matrix(), self.target.dual(), self.source.dual())
    }

    /// `T ⊗ I` acting on `weights.len()` blocks with the given block weights:
    /// the operator `[L₂,T]` restricted to functions on a partition whose
    /// cell lengths are `weights`.
    pub fn lift(&self, weights: &[BigRational]) -> Result<OperatorSpec> {
        let blocks = weights.len();
        let mut matrix = vec![vec![QuadRational::zero(); blocks * self.cols]; blocks * self.rows];
        for b in 0..blocks {
            for (r, row) in self.matrix.iter().enumerate() {
                for (c, x) in row.iter().enumerate() {
                    matrix[b * self.rows + r][b * self.cols + c] = x.clone();
                }
            }
        }
        OperatorSpec::new(
            matrix,
            NormKind::weighted(weights.to_vec(), self.source.clone()),
            NormKind::weighted(weights.to_vec(), self.target.clone()),
        )
    }

    /// Exact `‖T‖²` where available, otherwise certified bounds.
    pub fn operator_norm(&self) -> OperatorNorm {
        if self.is_zero() {
            return OperatorNorm::exact(QuadRational::zero());
        }
        if self.source == NormKind::L1 {
            return OperatorNorm::exact(self.max_column_sq());
        }
        if self.target == NormKind::Linf {
            return OperatorNorm::exact(self.max_row_dual_sq());
        }
        if self.source == NormKind::Linf && self.cols <= SIGN_ENUM_MAX {
            let best = sign_vectors(self.cols)
                .map(|s| self.target.norm_sq(&self.apply_unchecked(&s)).expect("dimension"))
                .max()
                .expect("nonempty");
            return OperatorNorm::exact(best);
        }
        if self.target == NormKind::L1 && self.rows <= SIGN_ENUM_MAX {
            let t = self.transpose_matrix();
            let dual = self.source.dual();
            let best = sign_vectors(self.rows)
                .map(|s| {
                    let v: Vec<QuadRational> = t
                        .iter()
                        .map(|row| row.iter().zip(&s).map(|(a, b)| a * b).sum())
                        .collect();
                    dual.norm_sq(&v).expect("dimension")
                })
                .max()
                .expect("nonempty");
            return OperatorNorm::exact(best);
        }
        let upper = self.generic_upper_sq();
        let lower = self.witness_lower_sq().min(upper.clone());
        let exact = lower == upper;
        OperatorNorm { lower_sq: lower, upper_sq: upper, exact }
    }

    /// `max_c ‖T e_c‖²`, the exact norm out of `ℓ₁`.
    fn max_column_sq(&self) -> QuadRational {
        (0..self.cols)
            .map(|c| self.target.norm_sq(&self.column(c)).expect("dimension"))
            .max()
            .expect("nonempty")
    }

    /// `max_r ‖row_r‖'²`, the exact norm into `ℓ∞`.
    fn max_row_dual_sq(&self) -> QuadRational {
        let dual = self.source.dual();
        self.matrix
            .iter()
            .map(|r| dual.norm_sq(r).expect("dimension"))
            .max()
            .expect("nonempty")
    }

    fn generic_upper_sq(&self) -> QuadRational {
        let via_l1 = QuadRational::from_rational(self.source.to_l1_const_sq(self.cols)) * self.max_column_sq();
        let via_linf =
            QuadRational::from_rational(self.target.from_linf_const_sq(self.rows)) * self.max_row_dual_sq();
        let mut best = via_l1.min(via_linf);
        if self.source == NormKind::L2 && self.target == NormKind::L2 {
            let frob: QuadRational = self.matrix.iter().flatten().map(QuadRational::square).sum();
            let col_abs = (0..self.cols)
                .map(|c| self.matrix.iter().map(|r| r[c].abs()).sum::<QuadRational>())
                .max()
                .expect("nonempty");
            let row_abs = self
                .matrix
                .iter()
                .map(|r| r.iter().map(QuadRational::abs).sum::<QuadRational>())
                .max()
                .expect("nonempty");
            best = best.min(frob).min(col_abs * row_abs).min(self.gram_gershgorin());
        }
        best
    }

    /// Gershgorin bound on the largest eigenvalue of `TᵀT`.
    fn gram_gershgorin(&self) -> QuadRational {
        let t = self.transpose_matrix();
        (0..self.cols)
            .map(|i| {
                (0..self.cols)
                    .map(|j| t[i].iter().zip(&t[j]).map(|(a, b)| a * b).sum::<QuadRational>().abs())
                    .sum::<QuadRational>()
            })
            .max()
            .expect("nonempty")
    }

    /// Best exact ratio `‖Tv‖²/‖v‖²` over a few candidate vectors.
    fn witness_lower_sq(&self) -> QuadRational {
        let mut candidates: Vec<Vec<QuadRational>> = (0..self.cols)
            .map(|c| (0..self.cols).map(|i| QuadRational::from_int(i64::from(i == c))).collect())
            .collect();
        candidates.push(vec![QuadRational::one(); self.cols]);
        candidates.push(
            self.power_iteration()
                .into_iter()
                .map(|x| QuadRational::from_rational(rational_from_f64(x, 30)))
                .collect(),
        );
        candidates
            .iter()
            .filter_map(|v| {
                let den = self.source.norm_sq(v).ok()?;
                if den.is_zero() {
                    return None;
                }
                let num = self.target.norm_sq(&self.apply_unchecked(v)).ok()?;
                Some(num / den)
            })
            .max()
            .unwrap_or_else(QuadRational::zero)
    }

    /// Float approximation of a maximizer of `‖Tv‖₂/‖v‖₂`.
    fn power_iteration(&self) -> Vec<f64> {
        let a = self.to_f64();
        let mut v: Vec<f64> = (0..self.cols).map(|i| 1.0 + 0.01 * i as f64).collect();
        for _ in 0..200 {
            let w: Vec<f64> = a.iter().map(|r| r.iter().zip(&v).map(|(x, y)| x * y).sum()).collect();
            let mut u = vec![0.0; self.cols];
            for (r, wr) in a.iter().zip(&w) {
                for (ui, x) in u.iter_mut().zip(r) {
                    *ui += x * wr;
                }
            }
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                break;
            }
            v = u.into_iter().map(|x| x / norm).collect();
        }
        v
    }

    /// `‖T‖` as a float upper bound.
    pub fn norm_upper_f64(&self) -> f64 {
        self.operator_norm().upper()
    }
}

/// All `±1` vectors with first coordinate `+1` (the norm is even).
fn sign_vectors(d: usize) -> impl Iterator<Item = Vec<QuadRational>> {
    let count = 1u64 << (d - 1);
    (0..count).map(move |mask| {
        (0..d)
            .map(|i| {
                if i > 0 && mask >> (i - 1) & 1 == 1 {
                    QuadRational::from_int(-1)
                } else {
                    QuadRational::one()
                }
            })
            .collect()
    })
}

/// `Σ_n: ℓ₁ⁿ → ℓ∞ⁿ`, partial sums.
pub fn summation_operator(n: usize) -> Result<OperatorSpec> {
    if n == 0 {
        return Err(Error::InvalidArgument("summation operator needs n ≥ 1".into()));
    }
    let m = (0..n)
        .map(|r| (0..n).map(|c| QuadRational::from_int(i64::from(c <= r))).collect())
        .collect();
    OperatorSpec::new(m, NormKind::L1, NormKind::Linf)
}

/// `D_t: ℓ₁^d → ℓ₁^d`, `(ξ_k) ↦ (τ_k ξ_k)`, for positive non-increasing `t`.
pub fn diagonal_operator(t: &[BigRational]) -> Result<OperatorSpec> {
    if t.is_empty() {
        return Err(Error::InvalidArgument("empty diagonal".into()));
    }
    if t.iter().any(|x| !x.is_positive()) {
        return Err(Error::InvalidArgument("diagonal entries must be positive".into()));
    }
    if t.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidArgument("diagonal entries must be non-increasing".into()));
    }
    let d = t.len();
    let m = (0..d)
        .map(|r| {
            (0..d)
                .map(|c| {
                    if r == c {
                        QuadRational::from_rational(t[r].clone())
                    } else {
                        QuadRational::zero()
                    }
                })
                .collect()
        })
        .collect();
    OperatorSpec::new(m, NormKind::L1, NormKind::L1)
}

/// Rational approximations of `τ_k = 1/(1 + ln k)`, `k = 1..=d`, on a
/// `2^-bits` grid. Monotonicity is preserved by the rounding.
pub fn log_diagonal_sequence(d: usize, bits: u32) -> Vec<BigRational> {
    let mut out: Vec<BigRational> = Vec::with_capacity(d);
    for k in 1..=d {
        let x = rational_from_f64(1.0 / (1.0 + (k as f64).ln()), bits);
        let x = match out.last() {
            Some(prev) if x > *prev => prev.clone(),
            _ => x,
        };
        out.push(if x.is_positive() { x } else { BigRational::one() / BigRational::from_integer((1u64 << bits).into()) });
    }
    out
}

#[derive(Serialize, Deserialize)]
struct OperatorWire {
    rows: usize,
    cols: usize,
    source: NormKind,
    target: NormKind,
    matrix: Vec<Vec<QuadRational>>,
}

impl Serialize for OperatorSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OperatorWire {
            rows: self.rows,
            cols: self.cols,
            source: self.source.clone(),
            target: self.target.clone(),
            matrix: self.matrix.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for OperatorSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = OperatorWire::deserialize(d)?;
        let op = OperatorSpec::new(w.matrix, w.source, w.target).map_err(serde::de::Error::custom)?;
        if op.rows != w.rows || op.cols != w.cols {
            return Err(serde::de::Error::custom(format!(
                "declared shape {}x{} but matrix is {}x{}",
                w.rows, w.cols, op.rows, op.cols
            )));
        }
        Ok(op)
    }
}
