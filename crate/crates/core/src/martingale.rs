//! Martingale difference sequences over interval filtrations and the
//! glueing, blocking and bucketing transforms.

use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::haar::{haar_fn, HaarCoefficients, Tree};
use crate::norm::NormKind;
use crate::scalar::{pow2, rat, QuadRational};
use crate::spaces::OperatorSpec;
use crate::stepfn::{IntervalPartition, StepFunction};

/// Partitions `P_0 ⊆ P_1 ⊆ … ⊆ P_n`, coarse to fine.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Filtration {
    partitions: Vec<IntervalPartition>,
}

impl Filtration {
    /// No nesting check; see [`Filtration::is_nested`].
    pub fn new(partitions: Vec<IntervalPartition>) -> Result<Self> {
        if partitions.is_empty() {
            return Err(Error::InvalidMds("empty filtration".into()));
        }
        Ok(Self { partitions })
    }

    /// `P_k` = dyadic partition of level `start + k`, `k = 0..=len`.
    pub fn dyadic(start: usize, len: usize) -> Self {
        Self { partitions: (start..=start + len).map(IntervalPartition::dyadic).collect() }
    }

    pub fn partitions(&self) -> &[IntervalPartition] {
        &self.partitions
    }

    pub fn get(&self, k: usize) -> &IntervalPartition {
        &self.partitions[k]
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// First index `k ≥ 1` with `P_k` not refining `P_{k-1}`.
    pub fn first_unnested(&self) -> Option<usize> {
        (1..self.partitions.len()).find(|&k| !self.partitions[k].refines(&self.partitions[k - 1]))
    }

    pub fn is_nested(&self) -> bool {
        self.first_unnested().is_none()
    }
}

/// Differences `d_1, …, d_n` adapted to `P_1, …, P_n` with `E_{k-1} d_k = 0`.
/// An optional constant `initial` plays the role of a level-0 term and is not
/// one of the differences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mds {
    filtration: Filtration,
    differences: Vec<StepFunction>,
    initial: Option<Vec<QuadRational>>,
    dimension: usize,
}

/// Outcome of [`Mds::validate`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<String>,
}

impl Mds {
    /// Checks shapes only; use [`Mds::validate`] or [`Mds::new_validated`]
    /// for the martingale identities.
    pub fn new(filtration: Filtration, differences: Vec<StepFunction>, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidArgument("zero-dimensional differences".into()));
        }
        if filtration.len() != differences.len() + 1 {
            return Err(Error::InvalidMds(format!(
                "{} differences need {} partitions, found {}",
                differences.len(),
                differences.len() + 1,
                filtration.len()
            )));
        }
        if let Some(d) = differences.iter().find(|d| d.dimension() != dimension) {
            return Err(Error::DimensionMismatch { expected: dimension, found: d.dimension() });
        }
        Ok(Self { filtration, differences, initial: None, dimension })
    }

    pub fn new_validated(filtration: Filtration, differences: Vec<StepFunction>, dimension: usize) -> Result<Self> {
        let m = Self::new(filtration, differences, dimension)?;
        let report = m.validate();
        if !report.valid {
            return Err(Error::InvalidMds(report.violations.join("; ")));
        }
        Ok(m)
    }

    pub fn with_initial(mut self, initial: Option<Vec<QuadRational>>) -> Result<Self> {
        if let Some(v) = &initial {
            if v.len() != self.dimension {
                return Err(Error::DimensionMismatch { expected: self.dimension, found: v.len() });
            }
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn filtration(&self) -> &Filtration {
        &self.filtration
    }

    pub fn differences(&self) -> &[StepFunction] {
        &self.differences
    }

    pub fn initial(&self) -> Option<&[QuadRational]> {
        self.initial.as_deref()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.differences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.differences.is_empty()
    }

    /// Exact check of nesting, measurability and the martingale property.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if let Some(k) = self.filtration.first_unnested() {
            violations.push(format!("partition {k} does not refine partition {}", k - 1));
        }
        for (i, d) in self.differences.iter().enumerate() {
            let k = i + 1;
            if !d.is_measurable(self.filtration.get(k)) {
                violations.push(format!("d_{k} is not measurable with respect to partition {k}"));
            }
            if !d.conditional_expectation(self.filtration.get(k - 1)).is_zero() {
                violations.push(format!("E_{} d_{k} is not zero", k - 1));
            }
        }
        ValidationReport { valid: violations.is_empty(), violations }
    }

    /// `‖d_k‖²_{L₂}` for every difference.
    pub fn norms_sq(&self, norm: &NormKind) -> Result<Vec<QuadRational>> {
        self.differences.iter().map(|d| d.l2_norm_sq(norm)).collect()
    }

    /// `Σ_k d_k` (without the initial term).
    pub fn sum(&self) -> StepFunction {
        StepFunction::sum(self.dimension, &self.differences).expect("equal dimensions")
    }

    /// `([L₂,T] d_k)`, adapted to the same filtration.
    pub fn apply(&self, t: &OperatorSpec) -> Result<Mds> {
        let differences = self.differences.iter().map(|d| t.apply_l2(d)).collect::<Result<Vec<_>>>()?;
        let initial = match &self.initial {
            Some(v) => Some(t.apply(v)?),
            None => None,
        };
        Mds::new(self.filtration.clone(), differences, t.rows())?.with_initial(initial)
    }

    /// Multiplies every difference by `c`.
    pub fn scale(&self, c: &QuadRational) -> Mds {
        Mds {
            differences: self.differences.iter().map(|d| d.scale(c)).collect(),
            initial: self.initial.as_ref().map(|v| v.iter().map(|x| x * c).collect()),
            ..self.clone()
        }
    }

    /// Appends `extra` zero differences (the last partition is repeated).
    pub fn pad(&self, extra: usize) -> Mds {
        let mut out = self.clone();
        let last = self.filtration.partitions.last().expect("nonempty").clone();
        for _ in 0..extra {
            out.filtration.partitions.push(last.clone());
            out.differences.push(StepFunction::zero(self.dimension));
        }
        out
    }

    /// The subsequence `(d_{k_i})` with filtration `P_{k_1 - 1}, P_{k_1}, P_{k_2}, …`.
    /// `indices` are 1-based and strictly increasing.
    pub fn subsequence(&self, indices: &[usize]) -> Result<Mds> {
        if indices.windows(2).any(|w| w[0] >= w[1]) || indices.iter().any(|&k| k == 0 || k > self.len()) {
            return Err(Error::InvalidArgument("subsequence indices must be increasing and in range".into()));
        }
        let first = indices.first().map_or(0, |k| k - 1);
        let mut parts = vec![self.filtration.get(first).clone()];
        parts.extend(indices.iter().map(|&k| self.filtration.get(k).clone()));
        let diffs = indices.iter().map(|&k| self.differences[k - 1].clone()).collect();
        Mds::new(Filtration::new(parts)?, diffs, self.dimension)
    }
}

/// The martingale `d_k = Σ_j x_k^(j) χ_k^(j)` over the dyadic filtration.
/// A level-0 coefficient becomes the initial constant.
pub fn from_haar_coeffs(c: &HaarCoefficients) -> Result<Mds> {
    let tr = c.tree();
    let first = tr.m().max(1);
    let d = c.dimension();
    let mut diffs = Vec::with_capacity(tr.n() + 1 - first);
    for k in first..=tr.n() {
        let h = QuadRational::sqrt2_pow(k as i64 - 1);
        let mut values = Vec::with_capacity(1 << k);
        for x in c.level(k) {
            let plus: Vec<QuadRational> = x.iter().map(|v| v * &h).collect();
            let minus: Vec<QuadRational> = plus.iter().map(|v| -v).collect();
            values.push(plus);
            values.push(minus);
        }
        diffs.push(StepFunction::new(IntervalPartition::dyadic(k), values)?.canonical());
    }
    let initial = (tr.m() == 0).then(|| c.level(0)[0].clone());
    Mds::new(Filtration::dyadic(first - 1, tr.n() + 1 - first), diffs, d)?.with_initial(initial)
}

/// The partition of the glued filtration after the step that places
/// `Φ_j^m d_k`: blocks `1..=j` carry `P_k`, the remaining blocks `P_{k-1}`.
fn glued_partition(f: &Filtration, m: usize, k: usize, j: usize) -> IntervalPartition {
    let blocks: Vec<&IntervalPartition> = (1..=m).map(|b| f.get(if b <= j { k } else { k - 1 })).collect();
    IntervalPartition::glue_blocks(&blocks)
}

/// `Φ_1^m d_1, …, Φ_m^m d_1, Φ_1^m d_2, …, Φ_m^m d_n` with the glued filtration.
pub fn glue(mds: &Mds, modulus: usize) -> Result<Mds> {
    if modulus == 0 {
        return Err(Error::InvalidArgument("glueing modulus must be positive".into()));
    }
    if modulus == 1 {
        return Ok(mds.clone());
    }
    let f = mds.filtration();
    let mut parts = vec![glued_partition(f, modulus, 1, 0)];
    let mut diffs = Vec::with_capacity(mds.len() * modulus);
    for (i, d) in mds.differences().iter().enumerate() {
        for j in 1..=modulus {
            diffs.push(d.transport(j, modulus)?);
            parts.push(glued_partition(f, modulus, i + 1, j));
        }
    }
    Mds::new(Filtration::new(parts)?, diffs, mds.dimension())?.with_initial(mds.initial.clone())
}

/// Blocks of the glued sequence: each group is a list of runs
/// `(k, first, last)` in glued order and becomes the single difference
/// `Σ_runs Σ_{j=first..=last} Φ_j^m d_k`.
fn block_glued(mds: &Mds, modulus: usize, groups: &[Vec<(usize, usize, usize)>]) -> Result<Mds> {
    let f = mds.filtration();
    let dim = mds.dimension();
    let mut parts = vec![IntervalPartition::glue_blocks(&vec![f.get(0); modulus])];
    let mut diffs = Vec::with_capacity(groups.len());
    for group in groups {
        let mut pieces = Vec::new();
        for &(k, a, b) in group {
            for j in a..=b {
                pieces.push(mds.differences()[k - 1].transport(j, modulus)?);
            }
        }
        diffs.push(StepFunction::sum(dim, &pieces)?);
        let &(k, _, b) = group.last().expect("nonempty group");
        parts.push(glued_partition(f, modulus, k, b));
    }
    Mds::new(Filtration::new(parts)?, diffs, dim)?.with_initial(mds.initial.clone())
}

/// Glue with modulus `n + 1` and block `n` consecutive terms, giving `n + 1`
/// differences of squared norm `n/(n+1)` times the common input value.
pub fn equalize(mds: &Mds, norm: &NormKind) -> Result<Mds> {
    let n = mds.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot equalize an empty sequence".into()));
    }
    let norms = mds.norms_sq(norm)?;
    if norms.iter().any(|x| *x != norms[0]) {
        return Err(Error::UnequalNorms);
    }
    let m = n + 1;
    // glued order position p (0-based) ↦ (k, j) = (p / m + 1, p % m + 1)
    let mut groups = Vec::with_capacity(m);
    for h in 0..m {
        let mut runs: Vec<(usize, usize, usize)> = Vec::new();
        for p in h * n..(h + 1) * n {
            let (k, j) = (p / m + 1, p % m + 1);
            match runs.last_mut() {
                Some(r) if r.0 == k => r.2 = j,
                _ => runs.push((k, j, j)),
            }
        }
        groups.push(runs);
    }
    block_glued(mds, m, &groups)
}

/// Output of [`normalize_mds`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NormalizeReport {
    /// `4^l ≤ 16n < 4^{l+1}`.
    pub l: usize,
    /// Glueing modulus `4^l`.
    pub m: usize,
    /// 1-based indices with `‖d_k‖² ≤ 4^{-l}`.
    pub discarded: Vec<usize>,
    /// `(k, h)` with `4^{-h} < ‖d_k‖² ≤ 4^{1-h}`.
    pub buckets: Vec<(usize, usize)>,
    pub mds: Mds,
}

/// Bucket the differences by norm, glue with `m = 4^l` and block each kept
/// difference into `4^{l-h}` pieces of squared norm in `(1/m, 4/m]`.
pub fn normalize_mds(mds: &Mds, norm: &NormKind) -> Result<NormalizeReport> {
    let n = mds.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot normalize an empty sequence".into()));
    }
    let norms = mds.norms_sq(norm)?;
    let total: QuadRational = norms.iter().sum();
    if total != QuadRational::one() {
        return Err(Error::NormalizationPrecondition(total.to_string()));
    }
    let mut l = 0;
    while 4usize.pow(l as u32 + 1) <= 16 * n {
        l += 1;
    }
    let m = 4usize.pow(l as u32);
    let quarter = |e: usize| QuadRational::from_rational(pow2(-2 * e as i64));
    let mut discarded = Vec::new();
    let mut buckets = Vec::new();
    for (i, s) in norms.iter().enumerate() {
        if *s <= quarter(l) {
            discarded.push(i + 1);
            continue;
        }
        let h = (1..=l).find(|&h| *s > quarter(h)).expect("norm above 4^-l lies in a bucket");
        buckets.push((i + 1, h));
    }
    let kept: Vec<usize> = buckets.iter().map(|b| b.0).collect();
    let sub = mds.subsequence(&kept)?;
    let mut groups = Vec::new();
    for (pos, &(_, h)) in buckets.iter().enumerate() {
        let size = 4usize.pow(h as u32);
        for j in 0..m / size {
            groups.push(vec![(pos + 1, j * size + 1, (j + 1) * size)]);
        }
    }
    let out = if groups.is_empty() {
        sub
    } else {
        block_glued(&sub, m, &groups)?
    };
    Ok(NormalizeReport { l, m, discarded, buckets, mds: out })
}

/// Haar data of the two-variable function `F_n(s,t) = d_i(t)` for
/// `s ∈ Δ_n^(i)`: coefficients are `[L₂,X]` elements written as value vectors
/// on `partition`, normed by `norm`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CotypeInstance {
    pub coeffs: HaarCoefficients,
    pub partition: IntervalPartition,
    pub norm: NormKind,
}

impl CotypeInstance {
    /// The lifted operator `[L₂,T]` on the encoding space.
    pub fn lift(&self, t: &OperatorSpec) -> Result<OperatorSpec> {
        t.lift(&self.partition.lengths())
    }

    /// Decodes an encoded vector back into a step function.
    pub fn decode(&self, v: &[QuadRational], dim: usize) -> Result<StepFunction> {
        StepFunction::new(self.partition.clone(), v.chunks(dim).map(<[_]>::to_vec).collect())
    }
}

/// Flattens the values of `f` on `p` into one vector.
fn encode(f: &StepFunction, p: &IntervalPartition) -> Result<Vec<QuadRational>> {
    Ok(f.values_on(p)?.into_iter().flatten().collect())
}

/// `N_k^(j)`: 1-based indices `i` with `Δ_n^(i) ⊆ Δ_k^(j)`.
pub fn dyadic_block(n: usize, k: usize, j: usize) -> std::ops::RangeInclusive<usize> {
    let size = 1usize << (n - k);
    (j - 1) * size + 1..=j * size
}

pub fn mds_to_cotype_instance(mds: &Mds, norm: &NormKind) -> Result<CotypeInstance> {
    let len = mds.len();
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(len));
    }
    let n = len.trailing_zeros() as usize;
    let dim = mds.dimension();
    let partition = mds
        .differences()
        .iter()
        .fold(IntervalPartition::trivial(), |p, d| p.common_refinement(d.partition()));
    let encoded = mds
        .differences()
        .iter()
        .map(|d| encode(d, &partition))
        .collect::<Result<Vec<_>>>()?;
    let width = partition.cell_count() * dim;
    let block_sum = |r: std::ops::RangeInclusive<usize>| -> Vec<QuadRational> {
        let mut acc = vec![QuadRational::zero(); width];
        for i in r {
            for (a, x) in acc.iter_mut().zip(&encoded[i - 1]) {
                if !x.is_zero() {
                    *a += x;
                }
            }
        }
        acc
    };
    let tr = Tree::with_cap(0, n, usize::MAX)?;
    let mut coeffs = Vec::with_capacity(tr.len());
    let scale0 = QuadRational::from_rational(pow2(-(n as i64)));
    coeffs.push(block_sum(1..=len).into_iter().map(|x| x * &scale0).collect());
    for k in 1..=n {
        let c = QuadRational::sqrt2_pow(k as i64 - 1 - 2 * n as i64);
        for j in 1..=1usize << (k - 1) {
            let a = block_sum(dyadic_block(n, k, 2 * j - 1));
            let b = block_sum(dyadic_block(n, k, 2 * j));
            coeffs.push(a.iter().zip(&b).map(|(x, y)| (x - y) * &c).collect());
        }
    }
    let weighted = NormKind::weighted(partition.lengths(), norm.clone());
    Ok(CotypeInstance { coeffs: HaarCoefficients::new(tr, width, coeffs)?, partition, norm: weighted })
}

/// `‖F_n‖²` computed from a cotype instance: the `L₂(ds)` norm of the
/// synthesized Haar polynomial with values in the encoding space.
pub fn two_variable_norm_sq(inst: &CotypeInstance) -> Result<QuadRational> {
    crate::haar::synthesize(&inst.coeffs).l2_norm_sq(&inst.norm)
}

/// A Haar function as a one-difference martingale over `{P_{k-1}, P_k}`.
pub fn single_haar_mds(k: usize, j: usize) -> Result<Mds> {
    let d = haar_fn(k, j)?;
    let f = Filtration::dyadic(k.saturating_sub(1), 1);
    Mds::new(f, vec![d], 1)
}

#[derive(Serialize, Deserialize)]
struct MdsWire {
    dimension: usize,
    filtration: Filtration,
    differences: Vec<StepFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial: Option<Vec<QuadRational>>,
}

impl Serialize for Mds {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MdsWire {
            dimension: self.dimension,
            filtration: self.filtration.clone(),
            differences: self.differences.clone(),
            initial: self.initial.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mds {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = MdsWire::deserialize(d)?;
        Mds::new(w.filtration, w.differences, w.dimension)
            .and_then(|m| m.with_initial(w.initial))
            .map_err(D::Error::custom)
    }
}

/// `1/m` as a ring element.
pub fn recip(m: usize) -> QuadRational {
    QuadRational::from_rational(BigRational::one() / rat(m as i64))
}
