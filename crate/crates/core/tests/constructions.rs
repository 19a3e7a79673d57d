use mtype_core::haar::Tree;
use mtype_core::ideal::{martingale_ratio, MartingaleVariant};
use mtype_core::martingale::{dyadic_block, equalize, glue, mds_to_cotype_instance, normalize_mds, recip, two_variable_norm_sq};
use mtype_core::norm::NormKind;
use mtype_core::sample;
use mtype_core::scalar::{pow2, rat, QuadRational};
use mtype_core::spaces::{summation_operator, OperatorSpec};
use mtype_core::stepfn::StepFunction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn glue_scales_differences_and_keeps_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..20 {
        let n = rng.gen_range(1..=3);
        let dim = rng.gen_range(1..=2);
        let m = sample::random_mds(&mut rng, n, dim);
        for modulus in [2, 3] {
            let g = glue(&m, modulus).unwrap();
            assert!(g.validate().valid);
            let before = m.norms_sq(&NormKind::L2).unwrap();
            for (i, x) in g.norms_sq(&NormKind::L2).unwrap().iter().enumerate() {
                assert_eq!(*x, &before[i / modulus] * recip(modulus));
            }
            assert_eq!(g.sum().l2_norm_sq(&NormKind::L1).unwrap(), m.sum().l2_norm_sq(&NormKind::L1).unwrap());
        }
    }
}

#[test]
fn equalize_keeps_type_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let t = summation_operator(2).unwrap();
    for n in 1..=3 {
        let m = sample::equal_norm_haar_mds(&mut rng, n, 2, &NormKind::L1, &rat(1));
        let e = equalize(&m, &NormKind::L1).unwrap();
        assert_eq!(e.len(), n + 1);
        let a = martingale_ratio(&t, &m, MartingaleVariant::Type).unwrap();
        let b = martingale_ratio(&t, &e, MartingaleVariant::Type).unwrap();
        assert_eq!(a.value_sq(), b.value_sq());
    }
}

#[test]
fn normalize_buckets_norms() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for _ in 0..10 {
        let n = rng.gen_range(1..=4);
        let m = sample::unit_total_haar_mds(&mut rng, n, 2, &NormKind::L2);
        let r = normalize_mds(&m, &NormKind::L2).unwrap();
        assert!(r.mds.len() <= 16 * n);
        let lo = recip(r.m);
        let hi = &lo * QuadRational::from_int(4);
        assert!(r.mds.norms_sq(&NormKind::L2).unwrap().iter().all(|x| *x > lo && *x <= hi));
    }
}

#[test]
fn two_variable_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let t = OperatorSpec::identity(2, NormKind::L1).unwrap();
    for n in 1..=2 {
        let len = 1 << n;
        let m = sample::random_mds(&mut rng, len, 2);
        let inst = mds_to_cotype_instance(&m, &NormKind::L1).unwrap();
        let total: QuadRational = m.norms_sq(&NormKind::L1).unwrap().into_iter().sum();
        let f_sq = two_variable_norm_sq(&inst).unwrap();
        assert_eq!(f_sq, total * QuadRational::from_rational(pow2(-(n as i64))));
        let lifted = inst.lift(&t).unwrap();
        let image = m.apply(&t).unwrap();
        let tr = Tree::new(0, n).unwrap();
        for (idx, x) in inst.coeffs.iter() {
            if idx.k == 0 {
                continue;
            }
            let lhs = lifted.target().norm_sq(&lifted.apply(x).unwrap()).unwrap();
            let block = |j| {
                StepFunction::sum(2, dyadic_block(n, idx.k, j).map(|i| &image.differences()[i - 1])).unwrap()
            };
            let diff = block(2 * idx.j - 1).checked_sub(&block(2 * idx.j)).unwrap();
            let rhs = diff.l2_norm_sq(&NormKind::L1).unwrap()
                * QuadRational::from_rational(pow2(idx.k as i64 - 1 - 2 * n as i64));
            assert_eq!(lhs, rhs);
        }
        assert!(tr.len() == inst.coeffs.coeffs().len());
    }
}
