//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use mtype_core::factorization::{default_schedule, factorize_with_schedule, identity_l1_witness, summation_matrix, verify_factorization};
use mtype_core::haar::{analyze, haar_fn, synthesize, Tree};
use mtype_core::ideal::{
    conjugate, diagonal_type_exact, diagonal_type_witness, equal_norm_bruteforce, estimate, haar_ratio, martingale_ratio,
    summation_cotype_witness, type_p_ratio, Direction, IdealKind, MartingaleVariant, SearchConfig,
};
use mtype_core::martingale::{dyadic_block, equalize, glue, mds_to_cotype_instance, normalize_mds, recip, two_variable_norm_sq};
use mtype_core::norm::NormKind;
use mtype_core::sample;
use mtype_core::scalar::{pow2, rat, ratio, rational_to_f64, QuadRational};
use mtype_core::spaces::{diagonal_operator, summation_operator, OperatorSpec};
use mtype_core::stepfn::{IntervalPartition, StepFunction};
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn q(x: i64) -> QuadRational {
    QuadRational::from_int(x)
}

fn norms() -> [NormKind; 3] {
    [NormKind::L1, NormKind::L2, NormKind::Linf]
}

fn summation_witness_exact() -> Check {
    let start = Instant::now();
    for n in 1..=6 {
        let c = summation_cotype_witness(n, 12).map_err(|e| e.to_string())?;
        let t = summation_operator(1 << n).unwrap();
        for (idx, x) in c.apply(&t).unwrap().iter() {
            if idx.k == 0 {
                continue;
            }
            let sup = NormKind::Linf.norm_exact(x).unwrap();
            ensure(sup == QuadRational::sqrt2_pow(-(idx.k as i64) - 1), || format!("n={n}, {idx}: sup norm {sup}"))?;
        }
        let f = synthesize(&c);
        let f_sq = f.l2_norm_sq(&NormKind::L1).unwrap();
        ensure(f_sq == q(1), || format!("n={n}: ‖f‖² = {f_sq}"))?;
        let r = haar_ratio(&t, &c, Direction::Cotype).unwrap().value_sq();
        ensure(r == QuadRational::from_ratio(4 + n as i64, 4), || format!("n={n}: ratio² = {r}"))?;
        ensure(r * q(4) >= q(n as i64 + 1), || format!("n={n}: ratio below (n+1)/4"))?;
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(5), || format!("took {took:?}"))
}

fn summation_cotype_bounds() -> Check {
    let cfg = SearchConfig::default();
    for n in 1..=5 {
        let t = summation_operator(1 << n).unwrap();
        let e = estimate(&t, &IdealKind::HaarCotype, 0, n, &cfg).map_err(|e| e.to_string())?;
        let np1 = q(n as i64 + 1);
        let lo = e.lower_sq.clone().ok_or("no exact lower bound")?;
        let up = e.upper_sq.clone().ok_or("no exact upper bound")?;
        ensure(lo.clone() * q(4) >= np1, || format!("n={n}: lower² {lo}"))?;
        ensure(up <= np1, || format!("n={n}: upper² {up}"))?;
    }
    Ok(())
}

fn diagonal_values() -> Check {
    let ones = vec![rat(1); 4];
    let halves: Vec<BigRational> = (0..4).map(|k| pow2(-k)).collect();
    for t in [&ones, &halves] {
        let op = diagonal_operator(t).unwrap();
        for n in 1..=4 {
            let c = diagonal_type_witness(t, n, &rat(2)).unwrap();
            let r = haar_ratio(&op, &c, Direction::Type).unwrap().value_sq();
            let want: BigRational = t[..n].iter().map(|x| x * x).sum();
            ensure(r == QuadRational::from_rational(want.clone()), || format!("t={t:?}, n={n}: {r} vs {want}"))?;
            for p in [ratio(4, 3), ratio(3, 2)] {
                let c = diagonal_type_witness(t, n, &p).unwrap();
                let got = type_p_ratio(&op, &c, &p).unwrap();
                let q = conjugate(rational_to_f64(&p));
                let want = t[..n].iter().map(|x| rational_to_f64(x).powf(q)).sum::<f64>().powf(1.0 / q);
                let table = diagonal_type_exact(t, n, &p).unwrap().value;
                ensure((got - want).abs() <= 1e-9 && (table - want).abs() <= 1e-9, || {
                    format!("p={p}, n={n}: witness {got}, table {table}, formula {want}")
                })?;
            }
        }
    }
    Ok(())
}

fn glue_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x14);
    for trial in 0..100 {
        let n = rng.gen_range(1..=4);
        let dim = rng.gen_range(1..=3);
        let norm = &norms()[trial % 3];
        let m = sample::random_mds(&mut rng, n, dim);
        let before = m.norms_sq(norm).unwrap();
        let total = m.sum().l2_norm_sq(norm).unwrap();
        for modulus in [2, 3, 5] {
            let g = glue(&m, modulus).map_err(|e| e.to_string())?;
            ensure(g.validate().valid, || format!("trial {trial}, mod {modulus}: not a martingale"))?;
            ensure(g.len() == n * modulus, || format!("trial {trial}: length {}", g.len()))?;
            for (i, x) in g.norms_sq(norm).unwrap().iter().enumerate() {
                ensure(*x == &before[i / modulus] * recip(modulus), || format!("trial {trial}, mod {modulus}, d_{}", i + 1))?;
            }
            ensure(g.sum().l2_norm_sq(norm).unwrap() == total, || format!("trial {trial}, mod {modulus}: sum changed"))?;
        }
    }
    Ok(())
}

fn equalize_construction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x33);
    let ops = [summation_operator(2).unwrap(), OperatorSpec::identity(2, NormKind::L1).unwrap()];
    for trial in 0..24 {
        let n = 1 + trial % 4;
        let t = &ops[trial % 2];
        let r = ratio(1 + (trial % 3) as i64, 2);
        let m = sample::equal_norm_haar_mds(&mut rng, n, 2, t.source(), &r);
        let e = equalize(&m, t.source()).map_err(|e| e.to_string())?;
        ensure(e.len() == n + 1, || format!("trial {trial}: length {}", e.len()))?;
        let want = QuadRational::from_rational(&r * &r * ratio(n as i64, n as i64 + 1));
        ensure(e.norms_sq(t.source()).unwrap().iter().all(|x| *x == want), || format!("trial {trial}: norms"))?;
        let a = martingale_ratio(t, &m, MartingaleVariant::Type).unwrap();
        let b = martingale_ratio(t, &e, MartingaleVariant::Type).unwrap();
        ensure(a.value_sq() == b.value_sq(), || format!("trial {trial}: ratio {} vs {}", a.value_sq(), b.value_sq()))?;
    }
    Ok(())
}

fn normalize_construction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x34);
    for trial in 0..100 {
        let n = rng.gen_range(1..=4);
        let norm = &norms()[trial % 3];
        let m = sample::unit_total_haar_mds(&mut rng, n, 2, norm);
        let r = normalize_mds(&m, norm).map_err(|e| e.to_string())?;
        ensure(r.mds.len() <= 16 * n, || format!("trial {trial}: length {}", r.mds.len()))?;
        let lo = recip(r.m);
        let hi = &lo * q(4);
        for x in r.mds.norms_sq(norm).unwrap() {
            ensure(x > lo && x <= hi, || format!("trial {trial}: norm² {x} outside (1/{}, 4/{}]", r.m, r.m))?;
        }
    }
    Ok(())
}

fn two_variable_machinery() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x22);
    let ops = [OperatorSpec::identity(2, NormKind::L1).unwrap(), summation_operator(2).unwrap()];
    for trial in 0..6 {
        let n = 2 + trial % 2;
        let len = 1 << n;
        let t = &ops[trial % 2];
        let m = sample::random_mds(&mut rng, len, 2);
        let inst = mds_to_cotype_instance(&m, t.source()).map_err(|e| e.to_string())?;
        let total: QuadRational = m.norms_sq(t.source()).unwrap().into_iter().sum();
        let f_sq = two_variable_norm_sq(&inst).unwrap();
        ensure(f_sq == total * QuadRational::from_rational(pow2(-(n as i64))), || format!("trial {trial}: ‖F‖²"))?;
        let lifted = inst.lift(t).unwrap();
        let image = m.apply(t).unwrap();
        let block = |k: usize, j: usize| {
            StepFunction::sum(t.rows(), dyadic_block(n, k, j).map(|i| &image.differences()[i - 1])).unwrap()
        };
        for (idx, x) in inst.coeffs.iter() {
            if idx.k == 0 {
                continue;
            }
            let (k, j) = (idx.k, idx.j);
            let lhs = lifted.target().norm_sq(&lifted.apply(x).unwrap()).unwrap();
            let diff = block(k, 2 * j - 1).checked_sub(&block(k, 2 * j)).unwrap();
            let diff_sq = diff.l2_norm_sq(t.target()).unwrap();
            let rhs = diff_sq.clone() * QuadRational::from_rational(pow2(k as i64 - 1 - 2 * n as i64));
            ensure(lhs == rhs, || format!("trial {trial}, {idx}: {lhs} vs {rhs}"))?;
            let parent = block(k - 1, j).l2_norm_sq(t.target()).unwrap();
            ensure(parent <= diff_sq * q(9), || format!("trial {trial}, {idx}: parent block too large"))?;
        }
    }
    Ok(())
}

fn equal_norm_equivalence() -> Check {
    let ops = [
        OperatorSpec::identity(2, NormKind::L1).unwrap(),
        OperatorSpec::identity(2, NormKind::L2).unwrap(),
        summation_operator(2).unwrap(),
        diagonal_operator(&[rat(1), ratio(1, 2)]).unwrap(),
    ];
    for t in &ops {
        for n in 1..=3 {
            let c = equal_norm_bruteforce(t, n).map_err(|e| e.to_string())?;
            let (a, b) = (c.best_equal_norm.value_sq(), c.best_equal_norm_sup.value_sq());
            ensure(c.agree && a == b, || format!("n={n}: {a} vs {b}"))?;
        }
    }
    Ok(())
}

fn factorization() -> Check {
    for n in 1..=3 {
        let t = OperatorSpec::identity(2 * n, NormKind::L1).unwrap();
        let mds = identity_l1_witness(n).unwrap();
        let res = factorize_with_schedule(&t, &mds, None, &default_schedule()).map_err(|e| e.to_string())?;
        ensure(res.composed == summation_matrix(n), || format!("n={n}: composed matrix differs"))?;
        let report = verify_factorization(&res, &t).unwrap();
        ensure(report.passed, || format!("n={n}: recomputation failed"))?;
        let r_sq = martingale_ratio(&t, &mds, MartingaleVariant::EqualNormSup).unwrap().value_sq();
        ensure(r_sq == res.witness_ratio_sq, || format!("n={n}: witness ratio {r_sq}"))?;
        let bound = 6.0 * (n as f64).sqrt() / (rational_to_f64(&res.delta) * r_sq.sqrt_f64());
        let product: f64 = mtype_lab::sig12(report.product).parse().unwrap();
        let bound: f64 = mtype_lab::sig12(bound).parse().unwrap();
        ensure(product <= bound + 1e-12, || format!("n={n}: product {product} above {bound}"))?;
    }
    Ok(())
}

fn run_cli(args: &[&str]) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_mtype-lab"))
        .args(args)
        .env_remove(mtype_lab::SEED_ENV)
        .output()
        .expect("run mtype-lab");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn relation_suite() -> Check {
    let ops: [&[&str]; 5] = [
        &["--builtin", "summation", "--dim", "4"],
        &["--builtin", "summation", "--dim", "8"],
        &["--builtin", "identity", "--dim", "4", "--norm", "l1"],
        &["--builtin", "identity", "--dim", "4", "--norm", "l2"],
        &["--builtin", "diagonal", "--t", "1,1/2,1/4"],
    ];
    for op in ops {
        let mut args = vec!["verify", "--n", "1..4"];
        args.extend_from_slice(op);
        let (code, stdout) = run_cli(&args);
        let v: serde_json::Value = serde_json::from_slice(&stdout).map_err(|e| format!("{op:?}: {e}"))?;
        let violations: u64 = v["rows"].as_array().ok_or("no rows")?.iter().map(|r| r["violations"].as_u64().unwrap()).sum();
        ensure(code == 0 && violations == 0, || format!("{op:?}: exit {code}, {violations} violations"))?;
    }
    Ok(())
}

fn haar_system() -> Check {
    let idx = Tree::new(0, 6).unwrap().indices();
    let fns: Vec<StepFunction> = idx.iter().map(|i| haar_fn(i.k, i.j).unwrap()).collect();
    for (a, fa) in idx.iter().zip(&fns) {
        for (b, fb) in idx.iter().zip(&fns) {
            let p = fa.pairing(fb).unwrap();
            ensure(p == q(i64::from(a == b)), || format!("<{a}, {b}> = {p}"))?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x11);
    for level in 0..=6 {
        let tr = Tree::new(0, level).unwrap();
        let c = sample::random_haar_coeffs(&mut rng, tr, 2);
        ensure(analyze(&synthesize(&c), tr) == c, || format!("level {level}: analyze∘synthesize"))?;
        let values = (0..1usize << level)
            .map(|_| (0..2).map(|_| QuadRational::from_ratio(rng.gen_range(-9..=9), rng.gen_range(1..=4))).collect())
            .collect();
        let f = StepFunction::new(IntervalPartition::dyadic(level), values).unwrap();
        let a = analyze(&f, tr);
        ensure(synthesize(&a) == f, || format!("level {level}: synthesize∘analyze"))?;
        let energy: QuadRational = a.iter().map(|(_, x)| NormKind::L2.norm_sq(x).unwrap()).sum();
        ensure(energy == f.l2_norm_sq(&NormKind::L2).unwrap(), || format!("level {level}: Parseval"))?;
    }
    Ok(())
}

fn determinism() -> Check {
    let args = ["estimate", "--builtin", "summation", "--kind", "haar-cotype", "--n", "1..4", "--seed", "17"];
    let (c1, a) = run_cli(&args);
    let (c2, b) = run_cli(&args);
    ensure(c1 == 0 && c2 == 0, || format!("exit codes {c1}, {c2}"))?;
    ensure(!a.is_empty() && a == b, || "outputs differ".to_string())?;
    let args = ["estimate", "--builtin", "diagonal", "--t", "1,1/2,1/3", "--kind", "mtype", "--n", "1..3", "--seed", "5", "--format", "csv"];
    ensure(run_cli(&args).1 == run_cli(&args).1, || "csv outputs differ".to_string())
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("summation witness values are exact", summation_witness_exact),
        ("summation cotype bounds", summation_cotype_bounds),
        ("diagonal type values", diagonal_values),
        ("glueing identities", glue_identities),
        ("equal-norm blocking", equalize_construction),
        ("norm bucketing", normalize_construction),
        ("two-variable cotype machinery", two_variable_machinery),
        ("equal-norm and sup variants agree", equal_norm_equivalence),
        ("summation operator factorization", factorization),
        ("relation suite", relation_suite),
        ("Haar system identities", haar_system),
        ("deterministic output", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS {:>2} {name} ({secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
