//! Vector-valued step functions on `[0,1)` with rational breakpoints.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::norm::NormKind;
use crate::scalar::{pow2, rat, rational_vec, QuadRational};

/// A finite partition of `[0,1)` into half-open intervals `[t_i, t_{i+1})`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct IntervalPartition {
    breakpoints: Vec<BigRational>,
}

impl IntervalPartition {
    pub fn new(breakpoints: Vec<BigRational>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidPartition("need at least the breakpoints 0 and 1".into()));
        }
        if !breakpoints[0].is_zero() || !breakpoints[breakpoints.len() - 1].is_one() {
            return Err(Error::InvalidPartition("breakpoints must start at 0 and end at 1".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPartition("breakpoints must be strictly increasing".into()));
        }
        Ok(Self { breakpoints })
    }

    pub fn trivial() -> Self {
        Self { breakpoints: vec![BigRational::zero(), BigRational::one()] }
    }

    /// `m` cells of equal length.
    pub fn uniform(m: usize) -> Self {
        assert!(m > 0, "uniform partition needs at least one cell");
        let m_r = BigInt::from(m);
        Self {
            breakpoints: (0..=m).map(|i| BigRational::new(BigInt::from(i), m_r.clone())).collect(),
        }
    }

    /// The dyadic intervals `Δ_level^(i) = [(i-1)/2^level, i/2^level)`.
    pub fn dyadic(level: usize) -> Self {
        Self::uniform(1usize << level)
    }

    pub fn breakpoints(&self) -> &[BigRational] {
        &self.breakpoints
    }

    pub fn cell_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn cell(&self, i: usize) -> (&BigRational, &BigRational) {
        (&self.breakpoints[i], &self.breakpoints[i + 1])
    }

    pub fn lengths(&self) -> Vec<BigRational> {
        self.breakpoints.windows(2).map(|w| &w[1] - &w[0]).collect()
    }

    /// True when every breakpoint of `coarser` is a breakpoint of `self`.
    pub fn refines(&self, coarser: &IntervalPartition) -> bool {
        let mut it = self.breakpoints.iter().peekable();
        'outer: for b in &coarser.breakpoints {
            while let Some(x) = it.peek() {
                match (*x).cmp(b) {
                    std::cmp::Ordering::Less => {
                        it.next();
                    }
                    std::cmp::Ordering::Equal => continue 'outer,
                    std::cmp::Ordering::Greater => return false,
                }
            }
            return false;
        }
        true
    }

    /// Union of breakpoints.
    pub fn common_refinement(&self, other: &IntervalPartition) -> IntervalPartition {
        if self == other {
            return self.clone();
        }
        let (a, b) = (&self.breakpoints, &other.breakpoints);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => match x.cmp(y) {
                    std::cmp::Ordering::Less => {
                        i += 1;
                        x
                    }
                    std::cmp::Ordering::Greater => {
                        j += 1;
                        y
                    }
                    std::cmp::Ordering::Equal => {
                        i += 1;
                        j += 1;
                        x
                    }
                },
                (Some(x), None) => {
                    i += 1;
                    x
                }
                (None, Some(y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            out.push(next.clone());
        }
        IntervalPartition { breakpoints: out }
    }

    /// Index of the cell containing `t ∈ [0,1)`.
    pub fn locate(&self, t: &BigRational) -> Option<usize> {
        if *t < self.breakpoints[0] || *t >= self.breakpoints[self.breakpoints.len() - 1] {
            return None;
        }
        Some(self.breakpoints.partition_point(|b| b <= t) - 1)
    }

    /// Breakpoints of this partition transported into the block
    /// `[(j-1)/m, j/m)`, i.e. the points `(j-1+s)/m`.
    pub fn block_image(&self, j: usize, m: usize) -> Vec<BigRational> {
        let m_r = rat(m as i64);
        let shift = rat(j as i64 - 1);
        self.breakpoints.iter().map(|s| (&shift + s) / &m_r).collect()
    }

    /// Concatenates one partition image per block of `[0,1)` split into
    /// `blocks.len()` equal pieces.
    pub fn glue_blocks(blocks: &[&IntervalPartition]) -> IntervalPartition {
        let m = blocks.len();
        let mut out: Vec<BigRational> = Vec::new();
        for (idx, p) in blocks.iter().enumerate() {
            let img = p.block_image(idx + 1, m);
            let skip = usize::from(!out.is_empty());
            out.extend(img.into_iter().skip(skip));
        }
        IntervalPartition { breakpoints: out }
    }
}

impl fmt::Debug for IntervalPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.breakpoints.iter().map(crate::scalar::format_rational).collect();
        write!(f, "{{{}}}", s.join(","))
    }
}

impl Serialize for IntervalPartition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        rational_vec::serialize(&self.breakpoints, s)
    }
}

impl<'de> Deserialize<'de> for IntervalPartition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let bps = rational_vec::deserialize(d)?;
        IntervalPartition::new(bps).map_err(serde::de::Error::custom)
    }
}

fn zero_vec(dim: usize) -> Vec<QuadRational> {
    vec![QuadRational::zero(); dim]
}

fn is_zero_vec(v: &[QuadRational]) -> bool {
    v.iter().all(QuadRational::is_zero)
}

/// A piecewise constant map `[0,1) → Q(√2)^dimension`.
///
/// Equality is equality as functions: two step functions on different
/// partitions compare equal when their canonical forms agree.
#[derive(Clone)]
pub struct StepFunction {
    partition: IntervalPartition,
    values: Vec<Vec<QuadRational>>,
    dimension: usize,
}

impl StepFunction {
    pub fn new(partition: IntervalPartition, values: Vec<Vec<QuadRational>>) -> Result<Self> {
        if values.len() != partition.cell_count() {
            return Err(Error::DimensionMismatch { expected: partition.cell_count(), found: values.len() });
        }
        let dimension = values[0].len();
        if dimension == 0 {
            return Err(Error::InvalidArgument("zero-dimensional values".into()));
        }
        if let Some(bad) = values.iter().find(|v| v.len() != dimension) {
            return Err(Error::DimensionMismatch { expected: dimension, found: bad.len() });
        }
        Ok(Self { partition, values, dimension })
    }

    pub fn constant(value: Vec<QuadRational>) -> Result<Self> {
        Self::new(IntervalPartition::trivial(), vec![value])
    }

    pub fn zero(dimension: usize) -> Self {
        assert!(dimension > 0, "zero-dimensional step function");
        Self {
            partition: IntervalPartition::trivial(),
            values: vec![zero_vec(dimension)],
            dimension,
        }
    }

    /// Scalar step function from one value per cell.
    pub fn scalar(partition: IntervalPartition, values: Vec<QuadRational>) -> Result<Self> {
        Self::new(partition, values.into_iter().map(|v| vec![v]).collect())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn partition(&self) -> &IntervalPartition {
        &self.partition
    }

    pub fn values(&self) -> &[Vec<QuadRational>] {
        &self.values
    }

    pub fn into_parts(self) -> (IntervalPartition, Vec<Vec<QuadRational>>) {
        (self.partition, self.values)
    }

    fn check_dim(&self, other: &StepFunction) -> Result<()> {
        if self.dimension != other.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, found: other.dimension });
        }
        Ok(())
    }

    /// Merges adjacent cells carrying equal values.
    pub fn canonical(&self) -> StepFunction {
        let mut bps = vec![self.partition.breakpoints[0].clone()];
        let mut vals: Vec<Vec<QuadRational>> = Vec::with_capacity(self.values.len());
        for (i, v) in self.values.iter().enumerate() {
            if vals.last() == Some(v) {
                bps.pop();
            } else {
                vals.push(v.clone());
            }
            bps.push(self.partition.breakpoints[i + 1].clone());
        }
        StepFunction {
            partition: IntervalPartition { breakpoints: bps },
            values: vals,
            dimension: self.dimension,
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.values.windows(2).all(|w| w[0] != w[1])
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| is_zero_vec(v))
    }

    pub fn evaluate(&self, t: &BigRational) -> Option<&[QuadRational]> {
        self.partition.locate(t).map(|i| self.values[i].as_slice())
    }

    /// Values on a partition that refines this function's partition.
    pub fn values_on(&self, finer: &IntervalPartition) -> Result<Vec<Vec<QuadRational>>> {
        if !finer.refines(&self.partition) {
            return Err(Error::InvalidPartition("target partition does not refine the function".into()));
        }
        let mut out = Vec::with_capacity(finer.cell_count());
        let mut src = 0;
        for i in 0..finer.cell_count() {
            while self.partition.breakpoints[src + 1] <= finer.breakpoints[i] {
                src += 1;
            }
            out.push(self.values[src].clone());
        }
        Ok(out)
    }

    /// The same function written on a finer partition (not canonical).
    pub fn refine_to(&self, finer: &IntervalPartition) -> Result<StepFunction> {
        let values = self.values_on(finer)?;
        Ok(StepFunction { partition: finer.clone(), values, dimension: self.dimension })
    }

    /// Both functions rewritten on the union of their breakpoints.
    pub fn common_refinement(f: &StepFunction, g: &StepFunction) -> (StepFunction, StepFunction) {
        let p = f.partition.common_refinement(&g.partition);
        (
            f.refine_to(&p).expect("common refinement refines f"),
            g.refine_to(&p).expect("common refinement refines g"),
        )
    }

    fn zip_with(
        &self,
        other: &StepFunction,
        op: impl Fn(&QuadRational, &QuadRational) -> QuadRational,
    ) -> Result<StepFunction> {
        self.check_dim(other)?;
        let (f, g) = Self::common_refinement(self, other);
        let values = f
            .values
            .iter()
            .zip(&g.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| op(x, y)).collect())
            .collect();
        Ok(StepFunction { partition: f.partition, values, dimension: self.dimension }.canonical())
    }

    pub fn checked_add(&self, other: &StepFunction) -> Result<StepFunction> {
        self.zip_with(other, |x, y| x + y)
    }

    pub fn checked_sub(&self, other: &StepFunction) -> Result<StepFunction> {
        self.zip_with(other, |x, y| x - y)
    }

    /// Sum of several functions of equal dimension.
    pub fn sum<'a>(dimension: usize, fs: impl IntoIterator<Item = &'a StepFunction>) -> Result<StepFunction> {
        let fs: Vec<&StepFunction> = fs.into_iter().collect();
        if let Some(f) = fs.iter().find(|f| f.dimension != dimension) {
            return Err(Error::DimensionMismatch { expected: dimension, found: f.dimension });
        }
        let partition = fs
            .iter()
            .fold(IntervalPartition::trivial(), |p, f| p.common_refinement(&f.partition));
        let mut values = vec![zero_vec(dimension); partition.cell_count()];
        for f in fs {
            for (acc, v) in values.iter_mut().zip(f.values_on(&partition)?) {
                for (a, x) in acc.iter_mut().zip(v) {
                    if !x.is_zero() {
                        *a += x;
                    }
                }
            }
        }
        Ok(StepFunction { partition, values, dimension }.canonical())
    }

    pub fn scale(&self, c: &QuadRational) -> StepFunction {
        let values = self.values.iter().map(|v| v.iter().map(|x| x * c).collect()).collect();
        StepFunction { partition: self.partition.clone(), values, dimension: self.dimension }.canonical()
    }

    pub fn neg(&self) -> StepFunction {
        self.scale(&QuadRational::from_int(-1))
    }

    /// Applies `op` to every cell value; `op` must produce vectors of length
    /// `out_dim`.
    pub fn map_values(&self, out_dim: usize, op: impl Fn(&[QuadRational]) -> Vec<QuadRational>) -> StepFunction {
        let values: Vec<Vec<QuadRational>> = self.values.iter().map(|v| op(v)).collect();
        debug_assert!(values.iter().all(|v| v.len() == out_dim));
        StepFunction { partition: self.partition.clone(), values, dimension: out_dim }.canonical()
    }

    /// Scalar function `t ↦ f(t)_i`.
    pub fn coordinate(&self, i: usize) -> StepFunction {
        self.map_values(1, |v| vec![v[i].clone()])
    }

    /// `∫₀¹ ‖f(t)‖² dt`, exact.
    pub fn l2_norm_sq(&self, norm: &NormKind) -> Result<QuadRational> {
        norm.check_dimension(self.dimension)?;
        let mut total = QuadRational::zero();
        for (len, v) in self.partition.lengths().into_iter().zip(&self.values) {
            if is_zero_vec(v) {
                continue;
            }
            total += QuadRational::from_rational(len) * norm.norm_sq(v)?;
        }
        Ok(total)
    }

    /// `∫₀¹ ⟨f(t), g(t)⟩ dt` under the coordinate pairing.
    pub fn pairing(&self, other: &StepFunction) -> Result<QuadRational> {
        self.check_dim(other)?;
        let (f, g) = Self::common_refinement(self, other);
        let mut total = QuadRational::zero();
        for ((len, a), b) in f.partition.lengths().into_iter().zip(&f.values).zip(&g.values) {
            let dot: QuadRational = a
                .iter()
                .zip(b)
                .filter(|(x, y)| !x.is_zero() && !y.is_zero())
                .map(|(x, y)| x * y)
                .sum();
            if !dot.is_zero() {
                total += QuadRational::from_rational(len) * dot;
            }
        }
        Ok(total)
    }

    /// `∫₀¹ f(t) dt`.
    pub fn integral(&self) -> Vec<QuadRational> {
        self.cell_integrals(&IntervalPartition::trivial()).pop().expect("one cell")
    }

    /// Integrals of `f` over every cell of `p`.
    pub fn cell_integrals(&self, p: &IntervalPartition) -> Vec<Vec<QuadRational>> {
        let r = self.partition.common_refinement(p);
        let vals = self.values_on(&r).expect("refinement");
        let mut out = vec![zero_vec(self.dimension); p.cell_count()];
        let mut cell = 0;
        for (i, (len, v)) in r.lengths().into_iter().zip(vals).enumerate() {
            while p.breakpoints[cell + 1] <= r.breakpoints[i] {
                cell += 1;
            }
            if is_zero_vec(&v) {
                continue;
            }
            let len = QuadRational::from_rational(len);
            for (acc, x) in out[cell].iter_mut().zip(&v) {
                if !x.is_zero() {
                    *acc += &len * x;
                }
            }
        }
        out
    }

    /// Conditional expectation onto the σ-algebra generated by `p`: the
    /// cell averages of `f`.
    pub fn conditional_expectation(&self, p: &IntervalPartition) -> StepFunction {
        let integrals = self.cell_integrals(p);
        let values = integrals
            .into_iter()
            .zip(p.lengths())
            .map(|(v, len)| {
                let inv = QuadRational::from_rational(BigRational::one() / len);
                v.into_iter().map(|x| x * &inv).collect()
            })
            .collect();
        StepFunction { partition: p.clone(), values, dimension: self.dimension }.canonical()
    }

    /// True when `f` is constant on every cell of `p`.
    pub fn is_measurable(&self, p: &IntervalPartition) -> bool {
        p.refines(&self.canonical().partition)
    }

    /// `Φ_j^m f`: `f(mt - j + 1)` on `[(j-1)/m, j/m)`, zero elsewhere.
    pub fn transport(&self, j: usize, m: usize) -> Result<StepFunction> {
        if m == 0 || j == 0 || j > m {
            return Err(Error::InvalidArgument(format!("transport block {j} of {m} out of range")));
        }
        if m == 1 {
            return Ok(self.clone());
        }
        let img = self.partition.block_image(j, m);
        let mut bps = Vec::with_capacity(img.len() + 2);
        let mut values = Vec::with_capacity(self.values.len() + 2);
        if j > 1 {
            bps.push(BigRational::zero());
            values.push(zero_vec(self.dimension));
        }
        bps.extend(img);
        values.extend(self.values.iter().cloned());
        if j < m {
            values.push(zero_vec(self.dimension));
            bps.push(BigRational::one());
        }
        Ok(StepFunction {
            partition: IntervalPartition { breakpoints: bps },
            values,
            dimension: self.dimension,
        }
        .canonical())
    }

    /// True when the two functions are never simultaneously nonzero.
    pub fn support_disjoint(&self, other: &StepFunction) -> bool {
        let (f, g) = Self::common_refinement(self, other);
        f.values.iter().zip(&g.values).all(|(a, b)| is_zero_vec(a) || is_zero_vec(b))
    }

    /// The canonical breakpoints are dyadic with level at most `level`.
    pub fn is_dyadic(&self, level: usize) -> bool {
        IntervalPartition::dyadic(level).refines(&self.canonical().partition)
    }
}

impl PartialEq for StepFunction {
    fn eq(&self, other: &Self) -> bool {
        if self.dimension != other.dimension {
            return false;
        }
        let (a, b) = (self.canonical(), other.canonical());
        a.partition == b.partition && a.values == b.values
    }
}

impl Eq for StepFunction {}

impl fmt::Debug for StepFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StepFunction")
            .field("partition", &self.partition)
            .field("values", &self.values)
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct StepFunctionWire {
    dimension: usize,
    breakpoints: IntervalPartition,
    values: Vec<Vec<QuadRational>>,
}

impl Serialize for StepFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StepFunctionWire {
            dimension: self.dimension,
            breakpoints: self.partition.clone(),
            values: self.values.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StepFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = StepFunctionWire::deserialize(d)?;
        let f = StepFunction::new(w.breakpoints, w.values).map_err(serde::de::Error::custom)?;
        if f.dimension != w.dimension {
            return Err(serde::de::Error::custom(format!(
                "declared dimension {} but values have length {}",
                w.dimension, f.dimension
            )));
        }
        Ok(f)
    }
}

/// Dyadic cell length `2^-level` as a ring element.
pub fn dyadic_length(level: usize) -> QuadRational {
    QuadRational::from_rational(pow2(-(level as i64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use proptest::prelude::*;

    fn part(xs: &[(i64, i64)]) -> IntervalPartition {
        IntervalPartition::new(xs.iter().map(|&(p, q)| ratio(p, q)).collect()).unwrap()
    }

    fn qi(x: i64) -> QuadRational {
        QuadRational::from_int(x)
    }

    fn haar11() -> StepFunction {
        StepFunction::scalar(IntervalPartition::dyadic(1), vec![qi(1), qi(-1)]).unwrap()
    }

    fn haar21() -> StepFunction {
        let s = QuadRational::sqrt2();
        StepFunction::scalar(IntervalPartition::dyadic(2), vec![s.clone(), -s, qi(0), qi(0)]).unwrap()
    }

    #[test]
    fn partitions_are_validated() {
        assert!(IntervalPartition::new(vec![rat(0)]).is_err());
        assert!(IntervalPartition::new(vec![rat(0), ratio(1, 2), ratio(1, 2), rat(1)]).is_err());
        assert!(IntervalPartition::new(vec![ratio(1, 4), rat(1)]).is_err());
        assert_eq!(IntervalPartition::dyadic(3).cell_count(), 8);
    }

    #[test]
    fn common_refinement_unions_breakpoints() {
        let f = StepFunction::scalar(part(&[(0, 1), (1, 2), (1, 1)]), vec![qi(1), qi(2)]).unwrap();
        let g = StepFunction::scalar(part(&[(0, 1), (1, 3), (1, 1)]), vec![qi(5), qi(7)]).unwrap();
        let (f2, g2) = StepFunction::common_refinement(&f, &g);
        let expect = part(&[(0, 1), (1, 3), (1, 2), (1, 1)]);
        assert_eq!(f2.partition(), &expect);
        assert_eq!(g2.partition(), &expect);
        assert_eq!(f2, f);
        assert_eq!(g2, g);

        let (f3, g3) = StepFunction::common_refinement(&f, &f);
        assert_eq!(f3.partition(), f.partition());
        assert_eq!(g3.values(), f.values());
    }

    #[test]
    fn refinement_of_constant_splits_into_equal_cells() {
        let f = StepFunction::constant(vec![qi(3)]).unwrap();
        let g = StepFunction::scalar(part(&[(0, 1), (1, 4), (1, 1)]), vec![qi(0), qi(1)]).unwrap();
        let (f2, _) = StepFunction::common_refinement(&f, &g);
        assert_eq!(f2.values().len(), 2);
        // oracle: evaluate at the cell midpoints
        for mid in [ratio(1, 8), ratio(5, 8)] {
            assert_eq!(f2.evaluate(&mid).unwrap(), f.evaluate(&mid).unwrap());
        }
        assert!(!f2.is_canonical());
        assert!(f2.canonical().is_canonical());
    }

    #[test]
    fn l2_norms() {
        let f = StepFunction::constant(vec![qi(1), qi(1)]).unwrap();
        assert_eq!(f.l2_norm_sq(&NormKind::L1).unwrap(), qi(4));
        assert_eq!(haar11().l2_norm_sq(&NormKind::L2).unwrap(), qi(1));
        assert_eq!(haar21().l2_norm_sq(&NormKind::L2).unwrap(), qi(1));
        assert!(f.l2_norm_sq(&NormKind::weighted(vec![rat(1), rat(1), rat(1)], NormKind::L1)).is_err());
    }

    #[test]
    fn indicator_basis_function_has_unit_norm() {
        // f(t) = e_i on Δ_2^(i), four-dimensional
        let vals = (0..4)
            .map(|i| (0..4).map(|c| qi(i64::from(c == i))).collect())
            .collect();
        let f = StepFunction::new(IntervalPartition::dyadic(2), vals).unwrap();
        assert_eq!(f.l2_norm_sq(&NormKind::L1).unwrap(), qi(1));
    }

    #[test]
    fn pairings_of_haar_functions() {
        let z = StepFunction::zero(1);
        assert_eq!(haar11().pairing(&z).unwrap(), qi(0));
        assert_eq!(haar11().pairing(&haar11()).unwrap(), qi(1));
        assert_eq!(haar11().pairing(&haar21()).unwrap(), qi(0));
        assert!(haar11().pairing(&StepFunction::zero(2)).is_err());
    }

    #[test]
    fn conditional_expectations() {
        let f = haar21();
        let c = f.conditional_expectation(&IntervalPartition::trivial());
        assert_eq!(c, StepFunction::constant(f.integral()).unwrap());
        assert_eq!(f.conditional_expectation(f.partition()), f);
        assert!(f.conditional_expectation(&IntervalPartition::dyadic(1)).is_zero());
        assert!(!f.is_measurable(&IntervalPartition::dyadic(1)));
        assert!(f.is_measurable(&IntervalPartition::dyadic(2)));
    }

    #[test]
    fn transport_places_function_in_block() {
        let f = haar11();
        assert_eq!(f.transport(1, 1).unwrap(), f);
        let c = StepFunction::constant(vec![qi(5)]).unwrap();
        let t = c.transport(2, 3).unwrap();
        assert_eq!(t.partition(), &part(&[(0, 1), (1, 3), (2, 3), (1, 1)]));
        assert_eq!(t.values(), &[vec![qi(0)], vec![qi(5)], vec![qi(0)]]);
        assert!(c.transport(4, 3).is_err());
        assert!(c.transport(0, 3).is_err());
    }

    #[test]
    fn json_round_trip() {
        let f = haar21();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.starts_with(r#"{"dimension":1,"breakpoints":["0","1/4","1/2","3/4","1"]"#));
        let back: StepFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back.partition(), f.partition());
        assert_eq!(back.values(), f.values());
        let bad = r#"{"dimension":2,"breakpoints":["0","1"],"values":[[["1","0"]]]}"#;
        assert!(serde_json::from_str::<StepFunction>(bad).is_err());
    }

    fn arb_partition() -> impl Strategy<Value = IntervalPartition> {
        proptest::collection::btree_set((1i64..24, 1i64..25), 0..5).prop_map(|pts| {
            let mut bps: Vec<BigRational> = pts
                .into_iter()
                .filter(|(p, q)| p < q)
                .map(|(p, q)| ratio(p, q))
                .collect();
            bps.push(rat(0));
            bps.push(rat(1));
            bps.sort();
            bps.dedup();
            IntervalPartition::new(bps).unwrap()
        })
    }

    fn arb_function(dim: usize) -> impl Strategy<Value = StepFunction> {
        arb_partition().prop_flat_map(move |p| {
            let cells = p.cell_count();
            proptest::collection::vec(proptest::collection::vec((-6i64..6, -3i64..3), dim), cells)
                .prop_map(move |vals| {
                    let vals = vals
                        .into_iter()
                        .map(|v| v.into_iter().map(|(a, b)| QuadRational::new(rat(a), ratio(b, 2))).collect())
                        .collect();
                    StepFunction::new(p.clone(), vals).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn conditional_expectation_contracts(f in arb_function(2), p in arb_partition()) {
            let e = f.conditional_expectation(&p);
            for norm in [NormKind::L1, NormKind::L2, NormKind::Linf] {
                prop_assert!(e.l2_norm_sq(&norm).unwrap() <= f.l2_norm_sq(&norm).unwrap());
            }
        }

        #[test]
        fn conditional_expectation_is_linear_and_idempotent(
            f in arb_function(2), g in arb_function(2), p in arb_partition()
        ) {
            let e = f.conditional_expectation(&p);
            prop_assert_eq!(e.conditional_expectation(&p), e.clone());
            let lhs = f.checked_add(&g).unwrap().conditional_expectation(&p);
            let rhs = e.checked_add(&g.conditional_expectation(&p)).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn conditional_expectation_is_self_adjoint(
            f in arb_function(2), g in arb_function(2), p in arb_partition()
        ) {
            let lhs = f.conditional_expectation(&p).pairing(&g).unwrap();
            let rhs = f.pairing(&g.conditional_expectation(&p)).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn transport_scales_norm(f in arb_function(2), m in 1usize..6, j_seed in 0usize..6) {
            let j = j_seed % m + 1;
            let t = f.transport(j, m).unwrap();
            let expect = f.l2_norm_sq(&NormKind::L1).unwrap() * QuadRational::from_ratio(1, m as i64);
            prop_assert_eq!(t.l2_norm_sq(&NormKind::L1).unwrap(), expect);
        }

        #[test]
        fn transports_to_distinct_blocks_are_disjoint(f in arb_function(1), m in 2usize..6) {
            for j in 1..m {
                let a = f.transport(j, m).unwrap();
                let b = f.transport(j + 1, m).unwrap();
                prop_assert!(a.support_disjoint(&b));
            }
        }
    }
}
