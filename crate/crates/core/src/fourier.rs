//! Generating polynomials of spray distributions and their Fourier vectors.
//!
//! A window of Λ consecutive shifts has generating polynomial
//! `(1/Λ) Σ z^{s_k}`; its Fourier vector is that polynomial evaluated at
//! every N-th root of unity. Multi-phase spray distributions are cyclic
//! convolutions of window distributions, so their Fourier vectors are
//! coordinate-wise products.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::Result;
use crate::model::{Direction, FourierVector, GroupDistribution, ShiftSchedule, SprayConfig};

/// Leaf size for pairwise summation.
const PAIRWISE_LEAF: usize = 32;

/// Pairwise (tree) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_LEAF {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Table of `exp(2πi k / N)` for `k in 0..N`, stored as separate cos/sin arrays.
#[derive(Debug, Clone)]
pub struct RootTable {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RootTable {
    pub fn new(n: usize) -> Self {
        let (cos, sin) = (0..n)
            .map(|k| {
                let theta = TAU * k as f64 / n as f64;
                (theta.cos(), theta.sin())
            })
            .unzip();
        Self { n, cos, sin }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn root(&self, k: usize) -> Complex64 {
        Complex64::new(self.cos[k], self.sin[k])
    }

    pub fn cos(&self) -> &[f64] {
        &self.cos
    }

    pub fn sin(&self) -> &[f64] {
        &self.sin
    }
}

/// Σ_terms weight · ω^{a·residue} for every frequency `a in freqs`, with
/// pairwise summation over the terms. Returns (re, im).
pub(crate) fn exp_sums(
    table: &RootTable,
    terms: &[(u32, f64)],
    freqs: std::ops::Range<usize>,
) -> (Vec<f64>, Vec<f64>) {
    let len = freqs.len();
    if terms.len() <= PAIRWISE_LEAF {
        let n = table.n;
        let mut re = vec![0.0; len];
        let mut im = vec![0.0; len];
        for &(g, w) in terms {
            let g = g as usize;
            let mut idx = (freqs.start * g) % n.max(1);
            for i in 0..len {
                re[i] += w * table.cos[idx];
                im[i] += w * table.sin[idx];
                idx += g;
                if idx >= n {
                    idx -= n;
                }
            }
        }
        return (re, im);
    }
    let (l, r) = terms.split_at(terms.len() / 2);
    let (mut re, mut im) = exp_sums(table, l, freqs.clone());
    let (re2, im2) = exp_sums(table, r, freqs);
    for i in 0..len {
        re[i] += re2[i];
        im[i] += im2[i];
    }
    (re, im)
}

#[inline]
fn exponent(s: u32, n: usize, direction: Direction) -> u32 {
    match direction {
        Direction::Forward => s,
        Direction::Backward => ((n - s as usize) % n) as u32,
    }
}

/// Histogram of (possibly negated) shifts over `[start, start+len)`.
pub fn window_counts(sched: &ShiftSchedule, start: u64, len: usize, direction: Direction) -> Vec<u64> {
    let n = sched.n_nodes();
    let mut counts = vec![0u64; n];
    for k in start..start + len as u64 {
        counts[exponent(sched.shift_at(k), n, direction) as usize] += 1;
    }
    counts
}

/// Uniform one-hop distribution over the window `[start, start+len)`.
pub fn dist_from_window(sched: &ShiftSchedule, start: u64, len: usize, direction: Direction) -> GroupDistribution {
    assert!(len >= 1, "window length must be >= 1");
    let counts = window_counts(sched, start, len, direction);
    let l = len as f64;
    GroupDistribution::from_raw(counts.iter().map(|&c| c as f64 / l).collect())
}

/// Window terms for `exp_sums`: direct (one per timestep) when the window is
/// shorter than N, histogram otherwise.
pub(crate) fn window_terms(sched: &ShiftSchedule, start: u64, len: usize, direction: Direction) -> Vec<(u32, f64)> {
    let n = sched.n_nodes();
    if len <= n {
        (start..start + len as u64).map(|k| (exponent(sched.shift_at(k), n, direction), 1.0)).collect()
    } else {
        window_counts(sched, start, len, direction)
            .into_iter()
            .enumerate()
            .filter(|&(_, c)| c > 0)
            .map(|(g, c)| (g as u32, c as f64))
            .collect()
    }
}

/// Fourier vector of a single window's distribution.
pub fn window_fourier(
    table: &RootTable,
    sched: &ShiftSchedule,
    start: u64,
    len: usize,
    direction: Direction,
) -> FourierVector {
    let n = sched.n_nodes();
    let terms = window_terms(sched, start, len, direction);
    let (re, im) = exp_sums(table, &terms, 0..n);
    let l = len as f64;
    FourierVector::new(re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r / l, i / l)).collect())
}

/// `values[j] = Σ_k mass[k] exp(2πi jk/N)`.
pub fn fourier_of(dist: &GroupDistribution) -> FourierVector {
    let n = dist.n_nodes();
    let table = RootTable::new(n);
    let terms: Vec<(u32, f64)> = dist
        .mass()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m != 0.0)
        .map(|(k, &m)| (k as u32, m))
        .collect();
    let (re, im) = exp_sums(&table, &terms, 0..n);
    FourierVector::new(re.into_iter().zip(im).map(|(r, i)| Complex64::new(r, i)).collect())
}

/// Start times of the h phases a spray config uses, relative to start `t`.
/// Forward sprays use phases 1..h, backward sprays phases h+1..2h.
pub fn phase_starts(config: &SprayConfig, t: u64) -> Vec<u64> {
    let lambda = config.phase_len as u64;
    let first = match config.direction {
        Direction::Forward => 0,
        Direction::Backward => config.hop_count as u64,
    };
    (0..config.hop_count as u64).map(|j| t + (first + j) * lambda).collect()
}

/// Unstarred Fourier vector of the spray distribution from start `t`.
pub fn spray_fourier(sched: &ShiftSchedule, config: &SprayConfig, t: u64) -> Result<FourierVector> {
    config.validate(sched.period())?;
    let table = RootTable::new(sched.n_nodes());
    let mut acc: Option<FourierVector> = None;
    for start in phase_starts(config, t) {
        let w = window_fourier(&table, sched, start, config.phase_len, config.direction);
        acc = Some(match acc {
            None => w,
            Some(a) => a.hadamard(&w),
        });
    }
    Ok(acc.expect("hop_count >= 1"))
}

/// Starred Fourier vector (index 0 zeroed) of the spray distribution.
pub fn spray_fourier_star(sched: &ShiftSchedule, config: &SprayConfig, t: u64) -> Result<FourierVector> {
    Ok(spray_fourier(sched, config, t)?.star())
}

/// Cyclic convolution: the distribution of X + Y.
pub fn convolve(x: &GroupDistribution, y: &GroupDistribution) -> GroupDistribution {
    let n = x.n_nodes();
    assert_eq!(n, y.n_nodes(), "convolving distributions over different groups");
    let mut out = vec![0.0; n];
    let ys: Vec<(usize, f64)> = y.mass().iter().copied().enumerate().filter(|&(_, m)| m != 0.0).collect();
    for (i, &mx) in x.mass().iter().enumerate() {
        if mx == 0.0 {
            continue;
        }
        for &(j, my) in &ys {
            let k = if i + j >= n { i + j - n } else { i + j };
            out[k] += mx * my;
        }
    }
    GroupDistribution::from_raw(out)
}

/// Destination-offset distribution of h-hop spraying from start `t`.
pub fn spray_distribution(sched: &ShiftSchedule, config: &SprayConfig, t: u64) -> Result<GroupDistribution> {
    config.validate(sched.period())?;
    let mut acc: Option<GroupDistribution> = None;
    for start in phase_starts(config, t) {
        let w = dist_from_window(sched, start, config.phase_len, config.direction);
        acc = Some(match acc {
            None => w,
            Some(a) => convolve(&a, &w),
        });
    }
    Ok(acc.expect("hop_count >= 1"))
}

pub fn two_norm(v: &FourierVector) -> f64 {
    let sq: Vec<f64> = v.values().iter().map(|z| z.norm_sqr()).collect();
    pairwise_sum(&sq).sqrt()
}

/// ℓ^q norm of the coordinate moduli.
pub fn q_norm(v: &FourierVector, q: f64) -> f64 {
    assert!(q >= 1.0, "q must be >= 1");
    let max = v.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    // scale by the max modulus so large q does not underflow
    let terms: Vec<f64> = v.values().iter().map(|z| (z.norm() / max).powf(q)).collect();
    max * pairwise_sum(&terms).powf(1.0 / q)
}

/// Σ_k |mass[k] − 1/N|.
pub fn tv_to_uniform(dist: &GroupDistribution) -> f64 {
    let u = 1.0 / dist.n_nodes() as f64;
    let terms: Vec<f64> = dist.mass().iter().map(|m| (m - u).abs()).collect();
    pairwise_sum(&terms)
}

/// Sliding state for a window's Fourier coefficients at frequencies
/// `1..=N/2`. The lower half determines the rest, since a real
/// distribution has `p̂[N−a] = conj(p̂[a])`.
#[derive(Debug, Clone)]
pub(crate) struct HalfSpectrum {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Frequencies tracked by `HalfSpectrum` and their multiplicity in the full
/// squared 2-norm.
pub(crate) fn half_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    (1..=half).map(|a| if 2 * a == n { 1.0 } else { 2.0 }).collect()
}

impl HalfSpectrum {
    /// Unnormalized sums Σ_k ω^{a s_k}, a = 1..=N/2, over `[start, start+len)`.
    pub fn compute(table: &RootTable, sched: &ShiftSchedule, start: u64, len: usize) -> Self {
        let half = table.n / 2;
        let terms = window_terms(sched, start, len, Direction::Forward);
        let (re, im) = exp_sums(table, &terms, 1..half + 1);
        Self { re, im }
    }

    /// Replaces monomial `outgoing` by `incoming`.
    #[inline]
    pub fn slide(&mut self, table: &RootTable, outgoing: u32, incoming: u32) {
        if outgoing == incoming {
            return;
        }
        let n = table.n;
        let (o, i) = (outgoing as usize, incoming as usize);
        let (mut io, mut ii) = (o % n, i % n);
        for a in 0..self.re.len() {
            self.re[a] += table.cos[ii] - table.cos[io];
            self.im[a] += table.sin[ii] - table.sin[io];
            io += o;
            if io >= n {
                io -= n;
            }
            ii += i;
            if ii >= n {
                ii -= n;
            }
        }
    }

    /// |coefficient / len|² per tracked frequency.
    #[inline]
    pub fn magnitudes(&self, len: usize, out: &mut [f64]) {
        let inv = 1.0 / (len as f64 * len as f64);
        for ((o, r), i) in out.iter_mut().zip(&self.re).zip(&self.im) {
            *o = (r * r + i * i) * inv;
        }
    }
}
