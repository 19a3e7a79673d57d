use mtype_core::factorization::{default_schedule, factorize_with_schedule, identity_l1_witness, summation_matrix, verify_factorization};
use mtype_core::haar::Tree;
use mtype_core::ideal::{diagonal_type_witness, estimate, haar_ratio, summation_cotype_witness, Direction, IdealKind, SearchConfig};
use mtype_core::norm::NormKind;
use mtype_core::scalar::{pow2, ratio, QuadRational};
use mtype_core::spaces::{diagonal_operator, summation_operator, OperatorSpec};
use num_rational::BigRational;

#[test]
fn summation_witness_is_exact() {
    for n in 1..=5 {
        let c = summation_cotype_witness(n, 12).unwrap();
        assert_eq!(c.tree(), Tree::new(0, n).unwrap());
        let t = summation_operator(1 << n).unwrap();
        let tc = c.apply(&t).unwrap();
        for (idx, x) in tc.iter() {
            if idx.k == 0 {
                continue;
            }
            let sup = NormKind::Linf.norm_exact(x).unwrap();
            assert_eq!(sup, QuadRational::sqrt2_pow(-(idx.k as i64) - 1), "level {}", idx.k);
        }
        let r = haar_ratio(&t, &c, Direction::Cotype).unwrap();
        assert_eq!(r.value_sq(), QuadRational::from_ratio(4 + n as i64, 4));
    }
}

#[test]
fn summation_cotype_bounds_hold() {
    let cfg = SearchConfig::default();
    for n in 1..=4 {
        let t = summation_operator(1 << n).unwrap();
        let e = estimate(&t, &IdealKind::HaarCotype, 0, n, &cfg).unwrap();
        let np1 = QuadRational::from_int(n as i64 + 1);
        assert!(e.lower_sq.clone().unwrap() * QuadRational::from_int(4) >= np1);
        assert!(e.upper_sq.clone().unwrap() <= np1);
    }
}

#[test]
fn diagonal_type_values() {
    let halves: Vec<BigRational> = (0..4).map(|k| pow2(-k)).collect();
    let ones = vec![ratio(1, 1); 4];
    for t in [ones, halves] {
        let op = diagonal_operator(&t).unwrap();
        for n in 1..=4 {
            let c = diagonal_type_witness(&t, n, &ratio(2, 1)).unwrap();
            let r = haar_ratio(&op, &c, Direction::Type).unwrap();
            let want: BigRational = t[..n].iter().map(|x| x * x).sum();
            assert_eq!(r.value_sq(), QuadRational::from_rational(want));
        }
    }
}

#[test]
fn identity_factorizations() {
    for n in 1..=3 {
        let t = OperatorSpec::identity(2 * n, NormKind::L1).unwrap();
        let mds = identity_l1_witness(n).unwrap();
        let res = factorize_with_schedule(&t, &mds, None, &default_schedule()).unwrap();
        assert_eq!(res.composed, summation_matrix(n));
        assert!(res.product_bound <= res.witness_bound);
        let report = verify_factorization(&res, &t).unwrap();
        assert!(report.passed && report.mismatches.is_empty());
    }
}
