//! Seeded generators of exact test data.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;

use crate::haar::{level_size, HaarCoefficients, Tree};
use crate::martingale::{from_haar_coeffs, Filtration, Mds};
use crate::norm::NormKind;
use crate::scalar::{ratio, rat, QuadRational};
use crate::stepfn::{IntervalPartition, StepFunction};

/// A point with rational coordinates on the unit sphere of `ℝ^len`
/// (inverse stereographic projection of a random rational point).
pub fn rational_sphere_point<R: Rng>(rng: &mut R, len: usize) -> Vec<BigRational> {
    assert!(len > 0, "sphere of dimension zero");
    if len == 1 {
        return vec![if rng.gen_bool(0.5) { rat(1) } else { rat(-1) }];
    }
    let y: Vec<BigRational> = (0..len - 1).map(|_| ratio(rng.gen_range(-6..=6), rng.gen_range(1..=4))).collect();
    let s: BigRational = y.iter().map(|v| v * v).sum();
    let den = &s + BigRational::one();
    let mut out: Vec<BigRational> = y.iter().map(|v| rat(2) * v / &den).collect();
    out.push((s - BigRational::one()) / den);
    out
}

/// A random vector of norm exactly one.
pub fn unit_vector<R: Rng>(rng: &mut R, dim: usize, norm: &NormKind) -> Vec<QuadRational> {
    match norm {
        NormKind::L2 => rational_sphere_point(rng, dim).into_iter().map(QuadRational::from_rational).collect(),
        NormKind::L1 | NormKind::Linf => loop {
            let v: Vec<BigRational> = (0..dim).map(|_| rat(rng.gen_range(-5..=5))).collect();
            let scale = if *norm == NormKind::L1 {
                v.iter().map(|x| x.abs()).sum::<BigRational>()
            } else {
                v.iter().map(|x| x.abs()).max().expect("dim > 0")
            };
            if !scale.is_zero() {
                break v.into_iter().map(|x| QuadRational::from_rational(x / &scale)).collect();
            }
        },
        NormKind::WeightedL2Sum { .. } => panic!("unit vectors are generated for lp norms only"),
    }
}

/// Random coefficients with small rational entries (a few with a `√2` part).
pub fn random_haar_coeffs<R: Rng>(rng: &mut R, tree: Tree, dim: usize) -> HaarCoefficients {
    let coeffs = (0..tree.len())
        .map(|_| {
            (0..dim)
                .map(|_| QuadRational::new(ratio(rng.gen_range(-4..=4), rng.gen_range(1..=3)), ratio(rng.gen_range(-1..=1), 2)))
                .collect()
        })
        .collect();
    HaarCoefficients::new(tree, dim, coeffs).expect("shape")
}

/// A dyadic martingale of length `level_norms.len()` with
/// `‖d_k‖_{L₂} = |level_norms[k-1]|` exactly.
pub fn haar_mds_with_level_norms<R: Rng>(
    rng: &mut R,
    dim: usize,
    norm: &NormKind,
    level_norms: &[BigRational],
) -> Mds {
    let n = level_norms.len();
    let tree = Tree::with_cap(1, n, usize::MAX).expect("n ≥ 1");
    let mut c = HaarCoefficients::zeros(tree, dim);
    for (i, a) in level_norms.iter().enumerate() {
        let k = i + 1;
        let w = rational_sphere_point(rng, level_size(k));
        for (j, wj) in w.iter().enumerate() {
            let u = unit_vector(rng, dim, norm);
            let scale = QuadRational::from_rational(wj * a);
            c.set(k, j + 1, u.into_iter().map(|x| x * &scale).collect()).expect("in tree");
        }
    }
    from_haar_coeffs(&c).expect("dyadic tree")
}

/// Dyadic martingale of length `n` with every `‖d_k‖_{L₂} = r`.
pub fn equal_norm_haar_mds<R: Rng>(rng: &mut R, n: usize, dim: usize, norm: &NormKind, r: &BigRational) -> Mds {
    haar_mds_with_level_norms(rng, dim, norm, &vec![r.clone(); n])
}

/// Dyadic martingale with `Σ_k ‖d_k‖² = 1`, norms from a rational sphere point.
pub fn unit_total_haar_mds<R: Rng>(rng: &mut R, n: usize, dim: usize, norm: &NormKind) -> Mds {
    let a = rational_sphere_point(rng, n);
    haar_mds_with_level_norms(rng, dim, norm, &a)
}

/// A martingale over a random, non-dyadic interval filtration: each step
/// splits one or two cells at random rational points, and `d_k` is a random
/// `P_k`-measurable function minus its `P_{k-1}` conditional expectation.
pub fn random_mds<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Mds {
    let mut parts = vec![IntervalPartition::trivial()];
    let mut diffs = Vec::with_capacity(n);
    let fractions = [ratio(1, 2), ratio(1, 3), ratio(2, 3), ratio(1, 4), ratio(3, 5)];
    for _ in 0..n {
        let prev = parts.last().expect("nonempty").clone();
        let mut bps = prev.breakpoints().to_vec();
        for _ in 0..rng.gen_range(1..=2) {
            let cells = bps.len() - 1;
            let c = rng.gen_range(0..cells);
            let f = &fractions[rng.gen_range(0..fractions.len())];
            let t = &bps[c] + (&bps[c + 1] - &bps[c]) * f;
            bps.insert(c + 1, t);
        }
        let p = IntervalPartition::new(bps).expect("split points are interior");
        let vals = (0..p.cell_count())
            .map(|_| {
                (0..dim)
                    .map(|_| QuadRational::new(rat(rng.gen_range(-5..=5)), ratio(rng.gen_range(-1..=1), 1)))
                    .collect()
            })
            .collect();
        let v = StepFunction::new(p.clone(), vals).expect("shape");
        let d = v.checked_sub(&v.conditional_expectation(&prev)).expect("dimension");
        diffs.push(d);
        parts.push(p);
    }
    Mds::new(Filtration::new(parts).expect("nonempty"), diffs, dim).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sphere_points_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for len in 1..6 {
            let p = rational_sphere_point(&mut rng, len);
            assert_eq!(p.iter().map(|x| x * x).sum::<BigRational>(), rat(1));
        }
    }

    #[test]
    fn generators_produce_valid_martingales() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..5 {
            assert!(random_mds(&mut rng, n, 2).validate().valid);
            for norm in [NormKind::L1, NormKind::L2, NormKind::Linf] {
                let m = unit_total_haar_mds(&mut rng, n, 2, &norm);
                assert!(m.validate().valid);
                let total: QuadRational = m.norms_sq(&norm).unwrap().iter().sum();
                assert_eq!(total, QuadRational::one());
            }
        }
    }
}
