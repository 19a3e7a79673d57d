//! Floating-point search for Haar witnesses. Results are only candidates;
//! callers certify them exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::haar::{Tree, TreeIndex};
use crate::norm::NormKind;
use crate::spaces::OperatorSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Objective {
    /// `‖Σ Tx χ‖² / Σ ‖x‖²`.
    Type,
    /// `Σ ‖Tx‖² / ‖Σ x χ‖²`.
    Cotype,
    /// `‖Σ Tx χ‖² / (L · max_k Σ_j ‖x_k^(j)‖²)`.
    TypeSup,
}

/// Haar witness problem with the operator in floating point.
pub(crate) struct Problem {
    rows: usize,
    cols: usize,
    /// column-major: `col[c][r]`
    col: Vec<Vec<f64>>,
    src: NormKind,
    tgt: NormKind,
    tree: Tree,
    objective: Objective,
    /// per tree position: level, first cell, support width in cells, amplitude
    support: Vec<(usize, usize, usize, f64)>,
    cells: usize,
}

fn norm_sq(norm: &NormKind, v: &[f64]) -> f64 {
    match norm {
        NormKind::L2 => v.iter().map(|x| x * x).sum(),
        _ => norm.norm_f64(v).powi(2),
    }
}

impl Problem {
    pub(crate) fn new(t: &OperatorSpec, tree: Tree, objective: Objective) -> Self {
        let a = t.to_f64();
        let col = (0..t.cols()).map(|c| a.iter().map(|r| r[c]).collect()).collect();
        let n = tree.n();
        let support = tree
            .indices()
            .into_iter()
            .map(|TreeIndex { k, j }| {
                if k == 0 {
                    (0, 0, 1usize << n, 1.0)
                } else {
                    let half = 1usize << (n - k);
                    (k, (j - 1) * 2 * half, 2 * half, 2f64.powf((k as f64 - 1.0) / 2.0))
                }
            })
            .collect();
        Self {
            rows: t.rows(),
            cols: t.cols(),
            col,
            src: t.source().clone(),
            tgt: t.target().clone(),
            tree,
            objective,
            support,
            cells: 1 << n,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.tree.len()
    }

    pub(crate) fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (c, &v) in x.iter().enumerate() {
            if v != 0.0 {
                for (o, a) in out.iter_mut().zip(&self.col[c]) {
                    *o += v * a;
                }
            }
        }
        out
    }

    fn level_slot(&self, k: usize) -> usize {
        k - self.tree.m()
    }

    /// Objective value of a flattened coefficient family.
    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        State::new(self, x.to_vec()).value()
    }
}

/// Incrementally updated evaluation state.
struct State<'a> {
    p: &'a Problem,
    x: Vec<f64>,
    tx: Vec<Vec<f64>>,
    /// synthesized function: in the target for type objectives, in the
    /// source for cotype
    synth: Vec<Vec<f64>>,
    cell_sq: Vec<f64>,
    idx_sq: Vec<f64>,
    cell_total: f64,
    idx_total: f64,
    level_totals: Vec<f64>,
}

impl<'a> State<'a> {
    fn new(p: &'a Problem, x: Vec<f64>) -> Self {
        let mut s = State {
            p,
            x,
            tx: Vec::new(),
            synth: Vec::new(),
            cell_sq: Vec::new(),
            idx_sq: Vec::new(),
            cell_total: 0.0,
            idx_total: 0.0,
            level_totals: Vec::new(),
        };
        s.rebuild();
        s
    }

    fn is_type(&self) -> bool {
        self.p.objective != Objective::Cotype
    }

    fn xi(&self, i: usize) -> &[f64] {
        &self.x[i * self.p.cols..(i + 1) * self.p.cols]
    }

    fn rebuild(&mut self) {
        let p = self.p;
        self.tx = (0..p.len()).map(|i| p.apply(self.xi(i))).collect();
        let width = if self.is_type() { p.rows } else { p.cols };
        self.synth = vec![vec![0.0; width]; p.cells];
        for i in 0..p.len() {
            let (_, start, width, h) = p.support[i];
            let v: Vec<f64> = if self.is_type() { self.tx[i].clone() } else { self.xi(i).to_vec() };
            for cell in start..start + width {
                let s = if p.support[i].0 == 0 || cell < start + width / 2 { h } else { -h };
                for (a, b) in self.synth[cell].iter_mut().zip(&v) {
                    *a += s * b;
                }
            }
        }
        let cell_norm = if self.is_type() { &p.tgt } else { &p.src };
        self.cell_sq = self.synth.iter().map(|v| norm_sq(cell_norm, v)).collect();
        self.idx_sq = (0..p.len())
            .map(|i| if self.is_type() { norm_sq(&p.src, self.xi(i)) } else { norm_sq(&p.tgt, &self.tx[i]) })
            .collect();
        self.cell_total = self.cell_sq.iter().sum();
        self.idx_total = self.idx_sq.iter().sum();
        self.level_totals = vec![0.0; p.tree.level_count()];
        for i in 0..p.len() {
            self.level_totals[p.level_slot(p.support[i].0)] += self.idx_sq[i];
        }
    }

    fn combine(&self, cell_total: f64, idx_total: f64, level_max: f64) -> f64 {
        let mean = cell_total / self.p.cells as f64;
        let (num, den) = match self.p.objective {
            Objective::Type => (mean, idx_total),
            Objective::Cotype => (idx_total, mean),
            Objective::TypeSup => (mean, self.p.tree.level_count() as f64 * level_max),
        };
        if den <= 1e-300 || !num.is_finite() {
            0.0
        } else {
            num / den
        }
    }

    fn value(&self) -> f64 {
        let lm = self.level_totals.iter().cloned().fold(0.0, f64::max);
        self.combine(self.cell_total, self.idx_total, lm)
    }

    /// Objective after `x_i[c] += delta`, plus the data to commit it.
    fn trial(&self, i: usize, c: usize, delta: f64) -> (f64, Trial) {
        let p = self.p;
        let mut xi = self.xi(i).to_vec();
        xi[c] += delta;
        let mut txi = self.tx[i].clone();
        for (o, a) in txi.iter_mut().zip(&p.col[c]) {
            *o += delta * a;
        }
        let new_idx = if self.is_type() { norm_sq(&p.src, &xi) } else { norm_sq(&p.tgt, &txi) };
        let (_, start, width, h) = p.support[i];
        let mut cells = Vec::with_capacity(width);
        let mut cell_total = self.cell_total;
        for cell in start..start + width {
            let s = if p.support[i].0 == 0 || cell < start + width / 2 { h } else { -h };
            let mut v = self.synth[cell].clone();
            if self.is_type() {
                for (a, b) in v.iter_mut().zip(&p.col[c]) {
                    *a += s * delta * b;
                }
            } else {
                v[c] += s * delta;
            }
            let nsq = norm_sq(if self.is_type() { &p.tgt } else { &p.src }, &v);
            cell_total += nsq - self.cell_sq[cell];
            cells.push((cell, v, nsq));
        }
        let idx_total = self.idx_total + new_idx - self.idx_sq[i];
        let slot = p.level_slot(p.support[i].0);
        let mut lm = 0.0f64;
        for (s, t) in self.level_totals.iter().enumerate() {
            let t = if s == slot { t + new_idx - self.idx_sq[i] } else { *t };
            lm = lm.max(t);
        }
        let v = self.combine(cell_total, idx_total, lm);
        (v, Trial { i, xi, txi, new_idx, cells, cell_total, idx_total })
    }

    fn commit(&mut self, t: Trial) {
        let cols = self.p.cols;
        let slot = self.p.level_slot(self.p.support[t.i].0);
        self.level_totals[slot] += t.new_idx - self.idx_sq[t.i];
        self.x[t.i * cols..(t.i + 1) * cols].copy_from_slice(&t.xi);
        self.tx[t.i] = t.txi;
        self.idx_sq[t.i] = t.new_idx;
        for (cell, v, nsq) in t.cells {
            self.synth[cell] = v;
            self.cell_sq[cell] = nsq;
        }
        self.cell_total = t.cell_total;
        self.idx_total = t.idx_total;
    }
}

struct Trial {
    i: usize,
    xi: Vec<f64>,
    txi: Vec<f64>,
    new_idx: f64,
    cells: Vec<(usize, Vec<f64>, f64)>,
    cell_total: f64,
    idx_total: f64,
}

/// Coordinate and per-level scale ascent from `x`.
pub(crate) fn ascend(p: &Problem, x: Vec<f64>, sweeps: usize) -> (f64, Vec<f64>) {
    let mut s = State::new(p, x);
    let mut best = s.value();
    let scale = s.x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return (best, s.x);
    }
    let mut step = 0.5 * scale;
    for _ in 0..sweeps {
        let mut improved = false;
        for i in 0..p.len() {
            for c in 0..p.cols {
                let cur = s.x[i * p.cols + c];
                for delta in [step, -step, -2.0 * cur, -cur] {
                    if delta == 0.0 {
                        continue;
                    }
                    let (v, t) = s.trial(i, c, delta);
                    if v > best * (1.0 + 1e-12) {
                        s.commit(t);
                        best = v;
                        improved = true;
                        break;
                    }
                }
            }
        }
        for k in p.tree.levels() {
            for f in [1.5, 1.0 / 1.5, 1.1, 1.0 / 1.1] {
                let mut y = s.x.clone();
                for (i, sup) in p.support.iter().enumerate() {
                    if sup.0 == k {
                        for v in &mut y[i * p.cols..(i + 1) * p.cols] {
                            *v *= f;
                        }
                    }
                }
                let cand = State::new(p, y);
                let v = cand.value();
                if v > best * (1.0 + 1e-12) {
                    s = cand;
                    best = v;
                    improved = true;
                    break;
                }
            }
        }
        s.rebuild();
        best = s.value();
        if !improved {
            step *= 0.5;
            if step < 1e-7 * scale {
                break;
            }
        }
    }
    (best, s.x)
}

/// Deterministic seed for restart `r`.
pub(crate) fn restart_seed(seed: u64, r: usize) -> u64 {
    seed ^ (r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Seeded random restarts followed by ascent; results sorted best first,
/// ties broken by restart index.
pub(crate) fn random_restarts(p: &Problem, seed: u64, restarts: usize, sweeps: usize) -> Vec<(f64, Vec<f64>)> {
    let mut out: Vec<(usize, f64, Vec<f64>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(seed, r));
            let sparse = r % 2 == 1;
            let x: Vec<f64> = (0..p.len() * p.cols())
                .map(|_| {
                    if sparse && rng.gen_bool(0.7) {
                        0.0
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect();
            let (v, x) = ascend(p, x, sweeps);
            (r, v, x)
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out.into_iter().map(|(_, v, x)| (v, x)).collect()
}

/// Number of signed-basis-vector patterns, or `None` on overflow.
pub(crate) fn pattern_count(len: usize, cols: usize) -> Option<u64> {
    let base = 2 * cols as u64;
    let mut total: u64 = 1;
    for _ in 0..len {
        total = total.checked_mul(base)?;
    }
    Some(total / 2)
}

fn decode_pattern(p: &Problem, mut code: u64) -> Vec<f64> {
    let base = 2 * p.cols as u64;
    let mut x = vec![0.0; p.len() * p.cols];
    for i in 0..p.len() {
        // the first index always carries a + sign: the objective is even
        let choice = if i == 0 {
            let c = code % p.cols as u64;
            code /= p.cols as u64;
            2 * c
        } else {
            let c = code % base;
            code /= base;
            c
        };
        let (c, sign) = ((choice / 2) as usize, if choice % 2 == 0 { 1.0 } else { -1.0 });
        let k = p.support[i].0;
        let amp = if k == 0 { 1.0 } else { 2f64.powf(-(k as f64 - 1.0) / 2.0) };
        x[i * p.cols + c] = sign * amp;
    }
    x
}

/// Evaluates every signed-basis-vector pattern with unit level norms and
/// returns the `top` best, deterministically ordered.
pub(crate) fn enumerate_patterns(p: &Problem, count: u64, top: usize) -> Vec<(f64, Vec<f64>)> {
    let chunk = 4096u64;
    let chunks = count.div_ceil(chunk);
    let mut best: Vec<(f64, u64)> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut local: Vec<(f64, u64)> = Vec::with_capacity(top + 1);
            for code in ci * chunk..((ci + 1) * chunk).min(count) {
                let v = p.eval(&decode_pattern(p, code));
                local.push((v, code));
                local.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                local.truncate(top);
            }
            local
        })
        .reduce(Vec::new, |mut a, b| {
            a.extend(b);
            a.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            a.truncate(top);
            a
        });
    best.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    best.into_iter().map(|(v, code)| (v, decode_pattern(p, code))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{diagonal_operator, summation_operator};
    use crate::scalar::{rat, ratio};

    #[test]
    fn incremental_updates_match_full_evaluation() {
        let t = summation_operator(4).unwrap();
        for obj in [Objective::Type, Objective::Cotype, Objective::TypeSup] {
            let p = Problem::new(&t, Tree::new(0, 2).unwrap(), obj);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let x: Vec<f64> = (0..p.len() * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut s = State::new(&p, x);
            for step in 0..50 {
                let (i, c) = (step % p.len(), (step * 7) % 4);
                let (v, tr) = s.trial(i, c, 0.3 - 0.01 * step as f64);
                s.commit(tr);
                let full = p.eval(&s.x);
                assert!((v - full).abs() < 1e-9 * full.max(1.0), "{obj:?}");
            }
        }
    }

    #[test]
    fn ascent_finds_diagonal_value() {
        // D_(1,1/2) on ℓ₁²: the type norm over D_1^2 is √(5/4)
        let t = diagonal_operator(&[rat(1), ratio(1, 2)]).unwrap();
        let p = Problem::new(&t, Tree::new(1, 2).unwrap(), Objective::Type);
        let best = random_restarts(&p, 7, 4, 40);
        assert!(best[0].0 >= 1.25 - 1e-6);
        assert!(best[0].0 <= 1.25 + 1e-6);
    }

    #[test]
    fn enumeration_is_deterministic() {
        let t = summation_operator(2).unwrap();
        let p = Problem::new(&t, Tree::new(1, 2).unwrap(), Objective::Type);
        let count = pattern_count(p.len(), 2).unwrap();
        assert_eq!(count, 32);
        let a = enumerate_patterns(&p, count, 3);
        let b = enumerate_patterns(&p, count, 3);
        assert_eq!(a.len(), 3);
        assert_eq!(a.iter().map(|x| x.0).collect::<Vec<_>>(), b.iter().map(|x| x.0).collect::<Vec<_>>());
    }
}
