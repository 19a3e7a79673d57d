//! Haar functions, dyadic trees and Haar polynomials.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::{ratio, rat, QuadRational};
use crate::spaces::OperatorSpec;
use crate::stepfn::{IntervalPartition, StepFunction};

/// Largest level accepted unless a caller raises the cap.
pub const DEFAULT_LEVEL_CAP: usize = 12;

/// Index `(k, j)` of the Haar function `χ_k^(j)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeIndex {
    pub k: usize,
    pub j: usize,
}

impl TreeIndex {
    pub fn new(k: usize, j: usize) -> Result<Self> {
        let ok = if k == 0 { j == 0 } else { k < 63 && j >= 1 && j <= 1usize << (k - 1) };
        if ok {
            Ok(Self { k, j })
        } else {
            Err(Error::InvalidIndex { k, j })
        }
    }
}

impl fmt::Display for TreeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.k, self.j)
    }
}

/// Number of indices at level `k`.
pub fn level_size(k: usize) -> usize {
    if k == 0 {
        1
    } else {
        1 << (k - 1)
    }
}

/// The dyadic tree `D_m^n`: levels `m..=n`, with `(0,0)` present iff `m = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tree {
    m: usize,
    n: usize,
}

impl Tree {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        Self::with_cap(m, n, DEFAULT_LEVEL_CAP)
    }

    pub fn with_cap(m: usize, n: usize, cap: usize) -> Result<Self> {
        if m > n {
            return Err(Error::InvalidArgument(format!("tree levels {m}..{n} are empty")));
        }
        if n > cap {
            return Err(Error::LevelCap { n, cap });
        }
        Ok(Self { m, n })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<usize> {
        self.m..=self.n
    }

    pub fn level_count(&self) -> usize {
        self.n - self.m + 1
    }

    pub fn len(&self) -> usize {
        let hi = 1usize << self.n;
        let lo = 1usize << self.m.max(1).saturating_sub(1);
        hi - lo + usize::from(self.m == 0)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of `(k, j)` in level-major order.
    pub fn position(&self, idx: TreeIndex) -> Option<usize> {
        if idx.k < self.m || idx.k > self.n {
            return None;
        }
        if idx.k == 0 {
            return Some(0);
        }
        let base = usize::from(self.m == 0);
        let first = self.m.max(1);
        Some(base + (1usize << (idx.k - 1)) - (1usize << (first - 1)) + idx.j - 1)
    }

    /// Index range of level `k` in level-major order.
    pub fn level_range(&self, k: usize) -> std::ops::Range<usize> {
        let start = self.position(TreeIndex { k, j: if k == 0 { 0 } else { 1 } }).expect("level in tree");
        start..start + level_size(k)
    }

    pub fn indices(&self) -> Vec<TreeIndex> {
        self.levels()
            .flat_map(|k| {
                let js: Vec<usize> = if k == 0 { vec![0] } else { (1..=level_size(k)).collect() };
                js.into_iter().map(move |j| TreeIndex { k, j })
            })
            .collect()
    }
}

/// `tree(m, n)` with the default level cap.
pub fn tree(m: usize, n: usize) -> Result<Vec<TreeIndex>> {
    Ok(Tree::new(m, n)?.indices())
}

/// `χ_k^(j)`: `±2^{(k-1)/2}` on the two halves of `Δ_{k-1}^(j)`, `χ_0^(0) ≡ 1`.
pub fn haar_fn(k: usize, j: usize) -> Result<StepFunction> {
    let idx = TreeIndex::new(k, j)?;
    if idx.k == 0 {
        return StepFunction::constant(vec![QuadRational::one()]);
    }
    let den = 1i64 << k;
    let a = ratio(2 * j as i64 - 2, den);
    let b = ratio(2 * j as i64 - 1, den);
    let c = ratio(2 * j as i64, den);
    let h = QuadRational::sqrt2_pow(k as i64 - 1);
    let mut bps = Vec::with_capacity(5);
    let mut vals = Vec::with_capacity(4);
    if !a.is_zero() {
        bps.push(rat(0));
        vals.push(QuadRational::zero());
    }
    bps.extend([a, b, c.clone()]);
    vals.push(h.clone());
    vals.push(-h);
    if !c.is_one() {
        bps.push(rat(1));
        vals.push(QuadRational::zero());
    }
    StepFunction::scalar(IntervalPartition::new(bps)?, vals)
}

/// A coefficient vector for every index of a dyadic tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HaarCoefficients {
    tree: Tree,
    dimension: usize,
    coeffs: Vec<Vec<QuadRational>>,
}

impl HaarCoefficients {
    pub fn new(tree: Tree, dimension: usize, coeffs: Vec<Vec<QuadRational>>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidArgument("zero-dimensional coefficients".into()));
        }
        if coeffs.len() != tree.len() {
            return Err(Error::DimensionMismatch { expected: tree.len(), found: coeffs.len() });
        }
        if let Some(c) = coeffs.iter().find(|c| c.len() != dimension) {
            return Err(Error::DimensionMismatch { expected: dimension, found: c.len() });
        }
        Ok(Self { tree, dimension, coeffs })
    }

    pub fn zeros(tree: Tree, dimension: usize) -> Self {
        Self { tree, dimension, coeffs: vec![vec![QuadRational::zero(); dimension]; tree.len()] }
    }

    pub fn tree(&self) -> Tree {
        self.tree
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Coefficients in level-major order.
    pub fn coeffs(&self) -> &[Vec<QuadRational>] {
        &self.coeffs
    }

    pub fn get(&self, k: usize, j: usize) -> Result<&[QuadRational]> {
        let pos = self.tree.position(TreeIndex::new(k, j)?).ok_or(Error::InvalidIndex { k, j })?;
        Ok(&self.coeffs[pos])
    }

    pub fn set(&mut self, k: usize, j: usize, value: Vec<QuadRational>) -> Result<()> {
        if value.len() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, found: value.len() });
        }
        let pos = self.tree.position(TreeIndex::new(k, j)?).ok_or(Error::InvalidIndex { k, j })?;
        self.coeffs[pos] = value;
        Ok(())
    }

    /// Coefficients at level `k`, ordered by `j`.
    pub fn level(&self, k: usize) -> &[Vec<QuadRational>] {
        &self.coeffs[self.tree.level_range(k)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (TreeIndex, &[QuadRational])> {
        self.tree.indices().into_iter().zip(self.coeffs.iter().map(Vec::as_slice))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().flatten().all(QuadRational::is_zero)
    }

    /// `(T x_k^(j))`.
    pub fn apply(&self, t: &OperatorSpec) -> Result<HaarCoefficients> {
        let coeffs = self.coeffs.iter().map(|x| t.apply(x)).collect::<Result<Vec<_>>>()?;
        HaarCoefficients::new(self.tree, t.rows(), coeffs)
    }

    pub fn scale(&self, c: &QuadRational) -> HaarCoefficients {
        let coeffs = self.coeffs.iter().map(|x| x.iter().map(|v| v * c).collect()).collect();
        HaarCoefficients { coeffs, ..self.clone() }
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.coeffs.iter().map(|x| x.iter().map(QuadRational::to_f64).collect()).collect()
    }
}

/// `x_k^(j) = ∫ f χ_k^(j)` for every index of `tr`.
pub fn analyze(f: &StepFunction, tr: Tree) -> HaarCoefficients {
    let d = f.dimension();
    // integrals over Δ_k^(i), refined from level n upward
    let mut level_ints = f.cell_integrals(&IntervalPartition::dyadic(tr.n()));
    let mut coeffs: Vec<Vec<Vec<QuadRational>>> = vec![Vec::new(); tr.n() + 1];
    for k in (1..=tr.n()).rev() {
        let h = QuadRational::sqrt2_pow(k as i64 - 1);
        let mut parent = Vec::with_capacity(level_ints.len() / 2);
        let mut level = Vec::with_capacity(level_ints.len() / 2);
        for pair in level_ints.chunks(2) {
            let (l, r) = (&pair[0], &pair[1]);
            if k >= tr.m() {
                level.push(l.iter().zip(r).map(|(a, b)| (a - b) * &h).collect());
            }
            parent.push(l.iter().zip(r).map(|(a, b)| a + b).collect::<Vec<_>>());
        }
        coeffs[k] = level;
        level_ints = parent;
    }
    if tr.m() == 0 {
        coeffs[0] = level_ints;
    }
    let flat: Vec<Vec<QuadRational>> = coeffs.into_iter().flatten().collect();
    HaarCoefficients::new(tr, d, flat).expect("analysis produces one vector per index")
}

/// `Σ x_k^(j) χ_k^(j)` on the level-`n` dyadic partition.
pub fn synthesize(c: &HaarCoefficients) -> StepFunction {
    let tr = c.tree();
    let n = tr.n();
    let cells = 1usize << n;
    let d = c.dimension();
    let mut values = vec![vec![QuadRational::zero(); d]; cells];
    if tr.m() == 0 {
        for v in values.iter_mut() {
            v.clone_from(&c.level(0)[0]);
        }
    }
    for k in tr.levels().filter(|&k| k >= 1) {
        let h = QuadRational::sqrt2_pow(k as i64 - 1);
        let span = 1usize << (n + 1 - k);
        for (jm1, x) in c.level(k).iter().enumerate() {
            if x.iter().all(QuadRational::is_zero) {
                continue;
            }
            let pos: Vec<QuadRational> = x.iter().map(|v| v * &h).collect();
            for (i, cell) in values[jm1 * span..(jm1 + 1) * span].iter_mut().enumerate() {
                let plus = i < span / 2;
                for (acc, p) in cell.iter_mut().zip(&pos) {
                    if plus {
                        *acc += p;
                    } else {
                        *acc -= p;
                    }
                }
            }
        }
    }
    StepFunction::new(IntervalPartition::dyadic(n), values).expect("dyadic values")
}

impl Serialize for HaarCoefficients {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        struct Coeffs<'a>(&'a HaarCoefficients);
        impl Serialize for Coeffs<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut map = s.serialize_map(Some(self.0.coeffs.len()))?;
                for (idx, x) in self.0.iter() {
                    map.serialize_entry(&idx.to_string(), x)?;
                }
                map.end()
            }
        }
        let mut map = s.serialize_map(Some(4))?;
        map.serialize_entry("m", &self.tree.m())?;
        map.serialize_entry("n", &self.tree.n())?;
        map.serialize_entry("dimension", &self.dimension)?;
        map.serialize_entry("coeffs", &Coeffs(self))?;
        map.end()
    }
}

#[derive(Deserialize)]
struct HaarWire {
    m: usize,
    n: usize,
    dimension: usize,
    coeffs: BTreeMap<String, Vec<QuadRational>>,
}

fn parse_index(key: &str) -> Result<TreeIndex> {
    let (k, j) = key
        .split_once(',')
        .ok_or_else(|| Error::Parse(format!("coefficient key `{key}` is not of the form k,j")))?;
    let k = k.trim().parse().map_err(|_| Error::Parse(format!("bad level in `{key}`")))?;
    let j = j.trim().parse().map_err(|_| Error::Parse(format!("bad position in `{key}`")))?;
    TreeIndex::new(k, j)
}

impl<'de> Deserialize<'de> for HaarCoefficients {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = HaarWire::deserialize(d)?;
        let tr = Tree::with_cap(w.m, w.n, usize::MAX).map_err(D::Error::custom)?;
        if w.dimension == 0 {
            return Err(D::Error::custom("zero-dimensional coefficients"));
        }
        let mut slots: Vec<Option<Vec<QuadRational>>> = vec![None; tr.len()];
        for (key, v) in w.coeffs {
            let idx = parse_index(&key).map_err(D::Error::custom)?;
            let pos = tr
                .position(idx)
                .ok_or_else(|| D::Error::custom(format!("index {idx} is outside the tree")))?;
            if v.len() != w.dimension {
                return Err(D::Error::custom(format!("coefficient {idx} has length {}", v.len())));
            }
            slots[pos] = Some(v);
        }
        let coeffs = slots
            .into_iter()
            .zip(tr.indices())
            .map(|(s, idx)| s.ok_or_else(|| D::Error::custom(format!("missing coefficient {idx}"))))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        HaarCoefficients::new(tr, w.dimension, coeffs).map_err(D::Error::custom)
    }
}

/// Cell length `2^-k` of level `k`.
pub fn dyadic_cell(k: usize) -> BigRational {
    crate::scalar::pow2(-(k as i64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::NormKind;
    use proptest::prelude::*;

    fn qi(x: i64) -> QuadRational {
        QuadRational::from_int(x)
    }

    #[test]
    fn haar_function_examples() {
        assert_eq!(haar_fn(0, 0).unwrap(), StepFunction::constant(vec![qi(1)]).unwrap());
        let h11 = StepFunction::scalar(IntervalPartition::dyadic(1), vec![qi(1), qi(-1)]).unwrap();
        assert_eq!(haar_fn(1, 1).unwrap(), h11);
        let s = QuadRational::sqrt2();
        let h21 = StepFunction::scalar(IntervalPartition::dyadic(2), vec![s.clone(), -s, qi(0), qi(0)]).unwrap();
        assert_eq!(haar_fn(2, 1).unwrap(), h21);
        assert!(haar_fn(2, 3).is_err());
        assert!(haar_fn(0, 1).is_err());
        assert!(haar_fn(1, 0).is_err());
    }

    #[test]
    fn tree_examples() {
        assert_eq!(tree(1, 1).unwrap(), vec![TreeIndex { k: 1, j: 1 }]);
        let t02 = tree(0, 2).unwrap();
        let expect: Vec<TreeIndex> = [(0, 0), (1, 1), (2, 1), (2, 2)].iter().map(|&(k, j)| TreeIndex { k, j }).collect();
        assert_eq!(t02, expect);
        assert_eq!(tree(2, 3).unwrap().len(), 6);
        assert!(tree(3, 2).is_err());
        assert!(matches!(Tree::new(0, 13), Err(Error::LevelCap { n: 13, cap: 12 })));
        for n in 1..8 {
            assert_eq!(Tree::new(1, n).unwrap().len(), (1 << n) - 1);
            assert_eq!(Tree::new(0, n).unwrap().len(), 1 << n);
            for m in 0..=n {
                let t = Tree::new(m, n).unwrap();
                let idx = t.indices();
                assert_eq!(idx.len(), t.len());
                for (p, i) in idx.iter().enumerate() {
                    assert_eq!(t.position(*i), Some(p));
                }
            }
        }
    }

    #[test]
    fn orthonormal_up_to_level_six() {
        let fns: Vec<(TreeIndex, StepFunction)> = Tree::new(0, 6)
            .unwrap()
            .indices()
            .into_iter()
            .map(|i| (i, haar_fn(i.k, i.j).unwrap()))
            .collect();
        for (a, fa) in &fns {
            for (b, fb) in &fns {
                // skip pairs with disjoint supports far apart to keep the test quick
                if a.k == b.k && a.j != b.j && (a.j as i64 - b.j as i64).abs() > 2 {
                    continue;
                }
                let p = fa.pairing(fb).unwrap();
                assert_eq!(p, qi(i64::from(a == b)), "{a} {b}");
            }
        }
    }

    #[test]
    fn same_level_supports_are_disjoint() {
        for k in 1..=5 {
            for j in 1..level_size(k) {
                assert!(haar_fn(k, j).unwrap().support_disjoint(&haar_fn(k, j + 1).unwrap()));
            }
        }
    }

    #[test]
    fn analyze_examples() {
        let c = StepFunction::constant(vec![qi(3), qi(-1)]).unwrap();
        let a = analyze(&c, Tree::new(0, 3).unwrap());
        assert_eq!(a.get(0, 0).unwrap(), &[qi(3), qi(-1)]);
        assert!(a.iter().skip(1).all(|(_, x)| x.iter().all(QuadRational::is_zero)));

        // e_i on Δ_1^(i)
        let f = StepFunction::new(IntervalPartition::dyadic(1), vec![vec![qi(1), qi(0)], vec![qi(0), qi(1)]]).unwrap();
        let a = analyze(&f, Tree::new(0, 1).unwrap());
        let half = QuadRational::from_ratio(1, 2);
        assert_eq!(a.get(0, 0).unwrap(), &[half.clone(), half.clone()]);
        assert_eq!(a.get(1, 1).unwrap(), &[half.clone(), -half]);
    }

    #[test]
    fn synthesize_examples() {
        let tr = Tree::new(1, 3).unwrap();
        assert!(synthesize(&HaarCoefficients::zeros(tr, 2)).is_zero());
        let mut c = HaarCoefficients::zeros(tr, 2);
        c.set(1, 1, vec![qi(2), qi(5)]).unwrap();
        let expect = haar_fn(1, 1)
            .unwrap()
            .map_values(2, |v| vec![&v[0] * qi(2), &v[0] * qi(5)]);
        assert_eq!(synthesize(&c), expect);
    }

    #[test]
    fn json_is_level_major() {
        let mut c = HaarCoefficients::zeros(Tree::new(0, 2).unwrap(), 1);
        c.set(2, 2, vec![QuadRational::sqrt2()]).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(
            s,
            r#"{"m":0,"n":2,"dimension":1,"coeffs":{"0,0":[["0","0"]],"1,1":[["0","0"]],"2,1":[["0","0"]],"2,2":[["0","1"]]}}"#
        );
        let back: HaarCoefficients = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let missing = r#"{"m":1,"n":1,"dimension":1,"coeffs":{}}"#;
        assert!(serde_json::from_str::<HaarCoefficients>(missing).is_err());
    }

    fn arb_coeffs(m: usize, n: usize, d: usize) -> impl Strategy<Value = HaarCoefficients> {
        let tr = Tree::new(m, n).unwrap();
        proptest::collection::vec((-5i64..5, -2i64..2), tr.len() * d).prop_map(move |xs| {
            let coeffs = xs
                .chunks(d)
                .map(|c| c.iter().map(|&(a, b)| QuadRational::new(rat(a), ratio(b, 3))).collect())
                .collect();
            HaarCoefficients::new(tr, d, coeffs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn analysis_inverts_synthesis(c in (0usize..3, 1usize..6).prop_flat_map(|(m, n)| arb_coeffs(m.min(n), n, 2))) {
            prop_assert_eq!(analyze(&synthesize(&c), c.tree()), c);
        }

        #[test]
        fn parseval(c in (0usize..2, 1usize..6).prop_flat_map(|(m, n)| arb_coeffs(m, n, 2))) {
            let lhs = synthesize(&c).l2_norm_sq(&NormKind::L2).unwrap();
            let rhs: QuadRational = c.coeffs().iter().map(|x| NormKind::L2.norm_sq(x).unwrap()).sum();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn synthesis_of_analysis_is_projection(
            vals in proptest::collection::vec(-5i64..5, 7),
            n in 0usize..5,
        ) {
            let p = IntervalPartition::uniform(7);
            let f = StepFunction::scalar(p, vals.into_iter().map(qi).collect()).unwrap();
            let lhs = synthesize(&analyze(&f, Tree::new(0, n).unwrap()));
            prop_assert_eq!(lhs, f.conditional_expectation(&IntervalPartition::dyadic(n)));
        }
    }
}
