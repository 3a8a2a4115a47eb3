//! Balanced ±1 colorings of complex matrix columns.
//!
//! The backend is the method of conditional expectations on the real
//! embedding (a ones row, then the real and imaginary part of every complex
//! row) with pessimistic estimator Φ = Σ_rows cosh(λ⟨row, x⟩) and
//! λ = √(2 ln(2R)/n), R = 2m+1. Each sign is chosen to minimize Φ, which
//! keeps every real row below √(2n ln 2R), so every complex row stays below
//! 2√(n ln 2R) ≤ [`K_IMPL`]·√(n ln(4(2m+1))). Balancing then flips |Σx|/2
//! majority coordinates, one at a time, each time picking the flip with the
//! smallest resulting Φ; this at most doubles the bound.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::RootTable;

/// Constant in `disc ≤ K_IMPL·√(n·ln(4(2m+1)))` for unbalanced colorings.
pub const K_IMPL: f64 = 2.0;

/// Short description of the backend, surfaced in generator metadata.
pub const BACKEND: &str = "conditional expectations, cosh estimator on the real embedding";

/// Instances whose exhaustive enumeration costs at most this many row
/// updates are solved exactly instead.
pub const EXHAUSTIVE_BUDGET: u64 = 1 << 23;

/// S and C are recomputed from the exact row sums this often.
const RESYNC_EVERY: usize = 64;

/// Tolerance on entry moduli, so that roots of unity computed in floating
/// point are accepted.
const MODULUS_TOL: f64 = 1e-12;

/// λ used by the estimator for n columns and m complex rows.
pub fn estimator_lambda(n: usize, m: usize) -> f64 {
    let r = (2 * m + 1) as f64;
    (2.0 * (2.0 * r).ln() / n as f64).sqrt()
}

/// `K_IMPL·√(n·ln(4(2m+1)))`.
pub fn unbalanced_bound(n: usize, m: usize) -> f64 {
    K_IMPL * (n as f64 * (4.0 * (2 * m + 1) as f64).ln()).sqrt()
}

/// Twice [`unbalanced_bound`].
pub fn balanced_bound(n: usize, m: usize) -> f64 {
    2.0 * unbalanced_bound(n, m)
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidParameter(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        for (k, z) in data.iter().enumerate() {
            let modulus = z.norm();
            if !(modulus <= 1.0 + MODULUS_TOL) {
                return Err(Error::EntryModulus { row: k / cols.max(1), col: k % cols.max(1), modulus });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    /// ‖A x‖∞ over the complex rows.
    pub fn disc(&self, x: &[i8]) -> f64 {
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(x).map(|(a, &s)| a * f64::from(s)).sum::<Complex64>().norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl RealMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// (2m+1)×n real embedding: a row of ones, then Re and Im of each row.
pub fn real_embed(a: &ComplexMatrix) -> RealMatrix {
    let (m, n) = (a.rows, a.cols);
    let mut data = vec![1.0; n];
    data.reserve(2 * m * n);
    for i in 0..m {
        data.extend((0..n).map(|j| a.get(i, j).re));
        data.extend((0..n).map(|j| a.get(i, j).im));
    }
    RealMatrix { rows: 2 * m + 1, cols: n, data }
}

/// One column over the tracked rows, with sinh/cosh of λ·entry.
#[derive(Debug, Clone, Default)]
pub struct Column {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub sh_re: Vec<f64>,
    pub ch_re: Vec<f64>,
    pub sh_im: Vec<f64>,
    pub ch_im: Vec<f64>,
}

impl Column {
    fn with_len(k: usize) -> Self {
        let z = vec![0.0; k];
        Self { re: z.clone(), im: z.clone(), sh_re: z.clone(), ch_re: z.clone(), sh_im: z.clone(), ch_im: z }
    }

    fn fill_hyper(&mut self, lambda: f64) {
        for (v, (s, c)) in self.re.iter().zip(self.sh_re.iter_mut().zip(self.ch_re.iter_mut())) {
            (*s, *c) = sinh_cosh(lambda * v);
        }
        for (v, (s, c)) in self.im.iter().zip(self.sh_im.iter_mut().zip(self.ch_im.iter_mut())) {
            (*s, *c) = sinh_cosh(lambda * v);
        }
    }
}

#[inline]
fn sinh_cosh(y: f64) -> (f64, f64) {
    let e = y.exp();
    let r = 1.0 / e;
    (0.5 * (e - r), 0.5 * (e + r))
}

/// Column access for the partition routine.
///
/// A source may track fewer complex rows than it has, as long as every
/// omitted row is the conjugate of a tracked one; `tracked_weights` then
/// gives each tracked row's multiplicity.
pub trait ComplexColumns {
    /// Complex row count m of the matrix.
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn tracked_weights(&self) -> Vec<f64>;
    fn column(&self, j: usize, re: &mut [f64], im: &mut [f64]);

    fn hyper_column(&self, j: usize, lambda: f64, out: &mut Column) {
        self.column(j, &mut out.re, &mut out.im);
        out.fill_hyper(lambda);
    }
}

impl ComplexColumns for ComplexMatrix {
    fn n_rows(&self) -> usize {
        self.rows
    }

    fn n_cols(&self) -> usize {
        self.cols
    }

    fn tracked_weights(&self) -> Vec<f64> {
        vec![1.0; self.rows]
    }

    fn column(&self, j: usize, re: &mut [f64], im: &mut [f64]) {
        for i in 0..self.rows {
            let z = self.get(i, j);
            re[i] = z.re;
            im[i] = z.im;
        }
    }
}

/// Lookup tables shared by every block of one partition level: the rows
/// a = 1..N−1 of the Fourier matrix, tracked as a = 1..N/2.
pub struct FourierLevel<'a> {
    table: &'a RootTable,
    lambda: f64,
    sh_cos: Vec<f64>,
    ch_cos: Vec<f64>,
    sh_sin: Vec<f64>,
    ch_sin: Vec<f64>,
}

impl<'a> FourierLevel<'a> {
    /// Tables for blocks of `block_size` columns.
    pub fn new(table: &'a RootTable, block_size: usize) -> Self {
        let lambda = estimator_lambda(block_size, table.n() - 1);
        let (sh_cos, ch_cos) = table.cos().iter().map(|&c| sinh_cosh(lambda * c)).unzip();
        let (sh_sin, ch_sin) = table.sin().iter().map(|&s| sinh_cosh(lambda * s)).unzip();
        Self { table, lambda, sh_cos, ch_cos, sh_sin, ch_sin }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn block<'b>(&'b self, indices: &'b [u32]) -> FourierBlock<'b> {
        FourierBlock { level: self, indices }
    }
}

/// Starred Fourier matrix restricted to the columns `indices`.
pub struct FourierBlock<'b> {
    level: &'b FourierLevel<'b>,
    indices: &'b [u32],
}

impl FourierBlock<'_> {
    fn for_each_row(&self, j: usize, mut f: impl FnMut(usize, usize)) {
        let n = self.level.table.n();
        let s = self.indices[j] as usize % n;
        let mut k = s;
        for a in 0..n / 2 {
            f(a, k);
            k += s;
            if k >= n {
                k -= n;
            }
        }
    }
}

impl ComplexColumns for FourierBlock<'_> {
    fn n_rows(&self) -> usize {
        self.level.table.n() - 1
    }

    fn n_cols(&self) -> usize {
        self.indices.len()
    }

    fn tracked_weights(&self) -> Vec<f64> {
        crate::fourier::half_weights(self.level.table.n())
    }

    fn column(&self, j: usize, re: &mut [f64], im: &mut [f64]) {
        let (cos, sin) = (self.level.table.cos(), self.level.table.sin());
        self.for_each_row(j, |a, k| {
            re[a] = cos[k];
            im[a] = sin[k];
        });
    }

    fn hyper_column(&self, j: usize, lambda: f64, out: &mut Column) {
        if lambda != self.level.lambda {
            self.column(j, &mut out.re, &mut out.im);
            out.fill_hyper(lambda);
            return;
        }
        let l = self.level;
        let (cos, sin) = (l.table.cos(), l.table.sin());
        self.for_each_row(j, |a, k| {
            out.re[a] = cos[k];
            out.im[a] = sin[k];
            out.sh_re[a] = l.sh_cos[k];
            out.ch_re[a] = l.ch_cos[k];
            out.sh_im[a] = l.sh_sin[k];
            out.ch_im[a] = l.ch_sin[k];
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignVector {
    pub x: Vec<i8>,
}

impl SignVector {
    pub fn balance(&self) -> i64 {
        self.x.iter().map(|&s| i64::from(s)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub signs: SignVector,
    /// ‖A x‖∞ over the complex rows.
    pub disc: f64,
    /// Contractual bound for this call (doubled when balanced).
    pub bound: f64,
    pub lambda: f64,
    /// Coordinates flipped by balancing.
    pub flips: usize,
    /// Solved by exhaustive search rather than the estimator.
    pub exhaustive: bool,
    /// Re and Im of A x on the tracked rows.
    pub ax_re: Vec<f64>,
    pub ax_im: Vec<f64>,
}

/// Running row sums u and S = sinh(λu), C = cosh(λu), for the ones row and
/// the tracked Re/Im rows.
struct State {
    lambda: f64,
    w: Vec<f64>,
    u0: f64,
    u_re: Vec<f64>,
    u_im: Vec<f64>,
    s0: f64,
    c0: f64,
    s_re: Vec<f64>,
    c_re: Vec<f64>,
    s_im: Vec<f64>,
    c_im: Vec<f64>,
}

impl State {
    fn new(lambda: f64, w: Vec<f64>) -> Self {
        let k = w.len();
        let z = vec![0.0; k];
        Self {
            lambda,
            w,
            u0: 0.0,
            u_re: z.clone(),
            u_im: z.clone(),
            s0: 0.0,
            c0: 1.0,
            s_re: z.clone(),
            c_re: vec![1.0; k],
            s_im: z,
            c_im: vec![1.0; k],
        }
    }

    fn resync(&mut self) {
        let l = self.lambda;
        (self.s0, self.c0) = sinh_cosh(l * self.u0);
        for (u, (s, c)) in self.u_re.iter().zip(self.s_re.iter_mut().zip(self.c_re.iter_mut())) {
            (*s, *c) = sinh_cosh(l * u);
        }
        for (u, (s, c)) in self.u_im.iter().zip(self.s_im.iter_mut().zip(self.c_im.iter_mut())) {
            (*s, *c) = sinh_cosh(l * u);
        }
    }

    /// Φ(u + d) − Φ(u − d) = 2 Σ w sinh(λu) sinh(λd), halved.
    fn score(&self, col: &Column, sh1: f64) -> f64 {
        let mut acc = self.s0 * sh1;
        for a in 0..self.w.len() {
            acc += self.w[a] * (self.s_re[a] * col.sh_re[a] + self.s_im[a] * col.sh_im[a]);
        }
        acc
    }

    /// Change in Φ when u moves by −2x·d.
    fn flip_delta(&self, col: &Column, x: f64, sh1: f64, ch1: f64) -> f64 {
        // cosh(λu − 2xλd) − cosh(λu) with cosh(2y) = 2ch²−1, sinh(2y) = 2 sh ch
        let term = |s: f64, c: f64, sh: f64, ch: f64| {
            let ch2 = 2.0 * ch * ch - 1.0;
            let sh2 = 2.0 * sh * ch;
            c * (ch2 - 1.0) - x * s * sh2
        };
        let mut acc = term(self.s0, self.c0, sh1, ch1);
        for a in 0..self.w.len() {
            acc += self.w[a]
                * (term(self.s_re[a], self.c_re[a], col.sh_re[a], col.ch_re[a])
                    + term(self.s_im[a], self.c_im[a], col.sh_im[a], col.ch_im[a]));
        }
        acc
    }

    /// u += x·d, with S and C advanced by the addition formulas.
    fn add(&mut self, col: &Column, x: f64, sh1: f64, ch1: f64, exact_s_c: bool) {
        self.u0 += x;
        let (s, c) = (self.s0, self.c0);
        self.s0 = s * ch1 + x * c * sh1;
        self.c0 = c * ch1 + x * s * sh1;
        for a in 0..self.w.len() {
            self.u_re[a] += x * col.re[a];
            self.u_im[a] += x * col.im[a];
            if !exact_s_c {
                let (s, c) = (self.s_re[a], self.c_re[a]);
                self.s_re[a] = s * col.ch_re[a] + x * c * col.sh_re[a];
                self.c_re[a] = c * col.ch_re[a] + x * s * col.sh_re[a];
                let (s, c) = (self.s_im[a], self.c_im[a]);
                self.s_im[a] = s * col.ch_im[a] + x * c * col.sh_im[a];
                self.c_im[a] = c * col.ch_im[a] + x * s * col.sh_im[a];
            }
        }
    }
}

/// Sign vector for the columns of `cols`; with `require_balance`, Σx = 0.
pub fn partition_columns<C: ComplexColumns + ?Sized>(cols: &C, require_balance: bool) -> Result<Partition> {
    partition_columns_with(cols, require_balance, EXHAUSTIVE_BUDGET)
}

fn binomial_half(n: usize) -> u64 {
    (0..n / 2).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// As [`partition_columns`], solving exactly when the enumeration costs at
/// most `exhaustive_budget` row updates.
pub fn partition_columns_with<C: ComplexColumns + ?Sized>(
    cols: &C,
    require_balance: bool,
    exhaustive_budget: u64,
) -> Result<Partition> {
    let n = cols.n_cols();
    let m = cols.n_rows();
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one column".into()));
    }
    if require_balance && n % 2 == 1 {
        return Err(Error::InvalidParameter(format!("balanced partition needs an even column count, got {n}")));
    }
    let lambda = estimator_lambda(n, m);
    let w = cols.tracked_weights();
    if n < 32 {
        let candidates = if require_balance { binomial_half(n) } else { 1u64 << n };
        if candidates.saturating_mul((n * w.len().max(1)) as u64) <= exhaustive_budget {
            return Ok(exhaustive(cols, require_balance, lambda, w.len()));
        }
    }
    let (sh1, ch1) = sinh_cosh(lambda);
    let k = w.len();
    let mut st = State::new(lambda, w);
    let mut col = Column::with_len(k);
    let mut x = vec![0i8; n];

    for (j, xj) in x.iter_mut().enumerate() {
        if j % RESYNC_EVERY == 0 {
            st.resync();
        }
        cols.hyper_column(j, lambda, &mut col);
        let sign = if st.score(&col, sh1) <= 0.0 { 1.0 } else { -1.0 };
        *xj = sign as i8;
        st.add(&col, sign, sh1, ch1, false);
    }

    let mut flips = 0;
    if require_balance {
        let alpha: i64 = x.iter().map(|&s| i64::from(s)).sum();
        let majority = alpha.signum() as i8;
        let needed = (alpha.unsigned_abs() / 2) as usize;
        for _ in 0..needed {
            st.resync();
            let mut best: Option<(f64, usize)> = None;
            for j in (0..n).filter(|&j| x[j] == majority) {
                cols.hyper_column(j, lambda, &mut col);
                let d = st.flip_delta(&col, f64::from(majority), sh1, ch1);
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            let (_, j) = best.expect("majority coordinates remain while unbalanced");
            cols.hyper_column(j, lambda, &mut col);
            st.add(&col, -2.0 * f64::from(majority), sh1, ch1, true);
            x[j] = -majority;
            flips += 1;
        }
    }

    let disc = st.u_re.iter().zip(&st.u_im).map(|(r, i)| r.hypot(*i)).fold(0.0, f64::max);
    let bound = if require_balance { balanced_bound(n, m) } else { unbalanced_bound(n, m) };
    Ok(Partition {
        signs: SignVector { x },
        disc,
        bound,
        lambda,
        flips,
        exhaustive: false,
        ax_re: st.u_re,
        ax_im: st.u_im,
    })
}

/// Minimum-discrepancy sign vector by enumeration; the first minimizer in
/// mask order wins.
fn exhaustive<C: ComplexColumns + ?Sized>(cols: &C, require_balance: bool, lambda: f64, k: usize) -> Partition {
    let n = cols.n_cols();
    let (mut re, mut im) = (vec![0.0; n * k], vec![0.0; n * k]);
    for j in 0..n {
        cols.column(j, &mut re[j * k..(j + 1) * k], &mut im[j * k..(j + 1) * k]);
    }
    let (mut sr, mut si) = (vec![0.0; k], vec![0.0; k]);
    let mut best: Option<(f64, u32)> = None;
    for mask in 0u32..1 << n {
        if require_balance && mask.count_ones() as usize * 2 != n {
            continue;
        }
        sr.iter_mut().chain(si.iter_mut()).for_each(|v| *v = 0.0);
        for j in 0..n {
            let x = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
            for a in 0..k {
                sr[a] += x * re[j * k + a];
                si[a] += x * im[j * k + a];
            }
        }
        let d = sr.iter().zip(&si).map(|(r, i)| r.hypot(*i)).fold(0.0, f64::max);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, mask));
        }
    }
    let (disc, mask) = best.expect("at least one candidate");
    let x: Vec<i8> = (0..n).map(|j| if mask >> j & 1 == 1 { 1 } else { -1 }).collect();
    let (mut ax_re, mut ax_im) = (vec![0.0; k], vec![0.0; k]);
    for (j, &s) in x.iter().enumerate() {
        for a in 0..k {
            ax_re[a] += f64::from(s) * re[j * k + a];
            ax_im[a] += f64::from(s) * im[j * k + a];
        }
    }
    let m = cols.n_rows();
    let bound = if require_balance { balanced_bound(n, m) } else { unbalanced_bound(n, m) };
    Partition { signs: SignVector { x }, disc, bound, lambda, flips: 0, exhaustive: true, ax_re, ax_im }
}

/// Dense-matrix entry point.
pub fn balanced_sign_partition(a: &ComplexMatrix, require_balance: bool) -> Result<Partition> {
    partition_columns(a, require_balance)
}

/// Split of an index set into its −1 and +1 children.
#[derive(Debug, Clone, PartialEq)]
pub struct SetSplit {
    pub minus: Vec<u32>,
    pub plus: Vec<u32>,
    pub partition: Partition,
}

/// Balanced split of `set`, where column j of `cols` belongs to `set[j]`.
pub fn partition_set<C: ComplexColumns + ?Sized>(set: &[u32], cols: &C) -> Result<SetSplit> {
    if set.len() % 2 == 1 || set.is_empty() {
        return Err(Error::InvalidParameter(format!("set size {} must be even and nonzero", set.len())));
    }
    if cols.n_cols() != set.len() {
        return Err(Error::InvalidParameter("column count does not match set size".into()));
    }
    let partition = partition_columns(cols, true)?;
    let (mut minus, mut plus) = (Vec::with_capacity(set.len() / 2), Vec::with_capacity(set.len() / 2));
    for (&s, &x) in set.iter().zip(&partition.signs.x) {
        if x < 0 {
            minus.push(s);
        } else {
            plus.push(s);
        }
    }
    Ok(SetSplit { minus, plus, partition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_matrix(rng: &mut impl Rng, m: usize, n: usize) -> ComplexMatrix {
        let data = (0..m * n)
            .map(|_| {
                let r = rng.gen::<f64>().sqrt();
                Complex64::from_polar(r, rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        ComplexMatrix::new(m, n, data).unwrap()
    }

    #[test]
    fn embedding_examples() {
        let a = ComplexMatrix::new(1, 1, vec![Complex64::new(0.0, 1.0)]).unwrap();
        let e = real_embed(&a);
        assert_eq!(e.rows, 3);
        assert_eq!(e.data, vec![1.0, 0.0, 1.0]);
        let r = ComplexMatrix::new(2, 3, (0..6).map(|k| Complex64::new(k as f64 / 6.0, 0.0)).collect()).unwrap();
        let e = real_embed(&r);
        assert!(e.row(2).iter().chain(e.row(4)).all(|&v| v == 0.0));
        let x = [1.0, 1.0, -1.0];
        let norm = (0..e.rows).map(|i| e.row(i).iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().abs()).fold(0.0, f64::max);
        assert!(norm >= 1.0);
    }

    #[test]
    fn modulus_is_checked() {
        let e = ComplexMatrix::new(1, 2, vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 1.0)]).unwrap_err();
        assert!(matches!(e, Error::EntryModulus { row: 0, col: 1, .. }));
    }

    #[test]
    fn two_columns_balanced() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 4, 2);
        let p = partition_columns_with(&a, true, 0).unwrap();
        assert_eq!(p.signs.balance(), 0);
        let expect = (0..4).map(|i| (a.get(i, 0) - a.get(i, 1)).norm()).fold(0.0, f64::max);
        assert!((p.disc - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let p = balanced_sign_partition(&ComplexMatrix::zeros(3, 6), true).unwrap();
        assert_eq!(p.disc, 0.0);
        assert_eq!(p.signs.balance(), 0);
    }

    #[test]
    fn odd_balanced_is_rejected() {
        assert!(balanced_sign_partition(&ComplexMatrix::zeros(1, 3), true).is_err());
    }

    #[test]
    fn recorded_disc_matches_recomputation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let (m, n) = (rng.gen_range(1..40), 2 * rng.gen_range(1..40));
            let a = random_matrix(&mut rng, m, n);
            for (bal, budget) in [(false, 0), (true, 0), (true, EXHAUSTIVE_BUDGET)] {
                let p = partition_columns_with(&a, bal, budget).unwrap();
                assert!((p.disc - a.disc(&p.signs.x)).abs() < 1e-9);
                assert!(p.disc <= p.bound);
            }
        }
    }

    /// Real-embedded rows never exceed √(2n ln 2R).
    #[test]
    fn real_rows_obey_estimator_bound() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let (m, n) = (rng.gen_range(1..64), rng.gen_range(1..128));
            let a = random_matrix(&mut rng, m, n);
            let p = partition_columns_with(&a, false, 0).unwrap();
            assert!(!p.exhaustive);
            let e = real_embed(&a);
            let r = (2 * m + 1) as f64;
            let limit = (2.0 * n as f64 * (2.0 * r).ln()).sqrt();
            for i in 0..e.rows {
                let v: f64 = e.row(i).iter().zip(&p.signs.x).map(|(a, &s)| a * f64::from(s)).sum();
                assert!(v.abs() <= limit + 1e-9);
            }
        }
    }

    #[test]
    fn near_optimal_on_small_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for _ in 0..40 {
            let n = 2 * rng.gen_range(1..=8);
            let m = rng.gen_range(1..=n);
            let a = random_matrix(&mut rng, m, n);
            let p = balanced_sign_partition(&a, true).unwrap();
            let mut opt = f64::INFINITY;
            for mask in 0u32..1 << n {
                if mask.count_ones() as usize * 2 != n {
                    continue;
                }
                let x: Vec<i8> = (0..n).map(|j| if mask >> j & 1 == 1 { 1 } else { -1 }).collect();
                opt = opt.min(a.disc(&x));
            }
            assert!(p.disc <= 4.0 * opt + 1e-12, "n={n} m={m}: {} vs opt {opt}", p.disc);
        }
    }

    #[test]
    fn fourier_block_matches_dense_columns() {
        let n = 16;
        let table = RootTable::new(n);
        let idx: Vec<u32> = vec![3, 5, 6, 9, 12, 15];
        let level = FourierLevel::new(&table, idx.len());
        let block = level.block(&idx);
        let dense = ComplexMatrix::new(
            n - 1,
            idx.len(),
            (1..n).flat_map(|a| idx.iter().map(move |&s| (a, s))).map(|(a, s)| table.root(a * s as usize % n)).collect(),
        )
        .unwrap();
        let pf = partition_columns(&block, true).unwrap();
        let pd = partition_columns(&dense, true).unwrap();
        assert!((pf.lambda - pd.lambda).abs() < 1e-15);
        assert!((pf.disc - dense.disc(&pf.signs.x)).abs() < 1e-9);
        assert!(pf.disc <= pf.bound);
    }

    #[test]
    fn partition_set_children() {
        let n = 32;
        let table = RootTable::new(n);
        let set: Vec<u32> = (0..n as u32).collect();
        let level = FourierLevel::new(&table, n);
        let split = partition_set(&set, &level.block(&set)).unwrap();
        assert_eq!(split.minus.len(), n / 2);
        assert_eq!(split.plus.len(), n / 2);
        // parent sum is zero, so each child sum is ±½ W*x
        for child in [&split.minus, &split.plus] {
            let norm = (1..n)
                .map(|a| child.iter().map(|&s| table.root(a * s as usize % n)).sum::<Complex64>().norm())
                .fold(0.0, f64::max);
            assert!(norm <= 0.5 * split.partition.disc + 1e-9);
        }
        let single = [4u32, 7];
        let level2 = FourierLevel::new(&table, 2);
        let s = partition_set(&single, &level2.block(&single)).unwrap();
        assert_eq!(s.minus.len() + s.plus.len(), 2);
        assert!(partition_set(&[1, 2, 3], &level2.block(&[1, 2, 3])).is_err());
    }
}
