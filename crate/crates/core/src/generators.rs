//! Schedule constructions: i.i.d. random shifts, convolution powers of a
//! certified base window, the derandomized recursive-partition ordering,
//! and the (uncertified) primitive-root ordering.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::certifier::{certify_base, BaseCert};
use crate::discrepancy::{self, FourierLevel, K_IMPL};
use crate::error::{Error, Result};
use crate::fourier::RootTable;
use crate::model::ShiftSchedule;

/// Largest convolution period accepted by default.
pub const DEFAULT_PERIOD_CAP: u64 = 1 << 26;

const STREAM_RANDOM: u64 = 1;
const STREAM_BASE: u64 = 2;

/// ChaCha8 keyed by `seed` on stream `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Sidecar record written next to generated schedules, one JSON object per
/// line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenMeta {
    pub construction: String,
    pub params: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retries: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<LevelStats>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discrepancy: Option<Value>,
    pub digest: String,
}

impl GenMeta {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metadata serializes") + "\n"
    }
}

/// T i.i.d. uniform shifts.
pub fn gen_random(n_nodes: usize, period: usize, seed: u64) -> Result<ShiftSchedule> {
    if period == 0 || n_nodes == 0 {
        return Err(Error::InvalidParameter("need N >= 1 and T >= 1".into()));
    }
    let mut rng = stream_rng(seed, STREAM_RANDOM);
    let n = n_nodes as u32;
    ShiftSchedule::new(n_nodes, (0..period).map(|_| rng.gen_range(0..n)).collect())
}

/// How base windows are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseSampler {
    /// Λ i.i.d. uniform shifts.
    Uniform,
    /// A uniformly random permutation of Z/(N); needs Λ = N.
    Permutation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseOutcome {
    pub schedule: ShiftSchedule,
    /// Failed samples before the accepted one.
    pub retries: usize,
    pub cert: BaseCert,
}

/// First sampled window of length Λ whose 2H-norm passes.
pub fn gen_base_certified(
    n_nodes: usize,
    lambda: usize,
    big_h: usize,
    eps: f64,
    seed: u64,
    max_retries: usize,
) -> Result<BaseOutcome> {
    gen_base_certified_with(n_nodes, lambda, big_h, eps, seed, max_retries, BaseSampler::Uniform)
}

pub fn gen_base_certified_with(
    n_nodes: usize,
    lambda: usize,
    big_h: usize,
    eps: f64,
    seed: u64,
    max_retries: usize,
    sampler: BaseSampler,
) -> Result<BaseOutcome> {
    if max_retries == 0 || lambda == 0 || n_nodes == 0 {
        return Err(Error::InvalidParameter("need max_retries, lambda and N >= 1".into()));
    }
    if sampler == BaseSampler::Permutation && lambda != n_nodes {
        return Err(Error::InvalidParameter("permutation sampling needs lambda = N".into()));
    }
    let mut rng = stream_rng(seed, STREAM_BASE);
    let n = n_nodes as u32;
    for attempt in 0..max_retries {
        let shifts: Vec<u32> = match sampler {
            BaseSampler::Uniform => (0..lambda).map(|_| rng.gen_range(0..n)).collect(),
            BaseSampler::Permutation => {
                let mut p: Vec<u32> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            }
        };
        let schedule = ShiftSchedule::new(n_nodes, shifts)?;
        let cert = certify_base(&schedule, eps, big_h)?;
        if cert.pass {
            return Ok(BaseOutcome { schedule, retries: attempt, cert });
        }
    }
    Err(Error::RetriesExhausted(max_retries))
}

/// Timestep as base-Λ digits, least significant first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedRadixTime {
    pub lambda: usize,
    pub digits: Vec<usize>,
}

impl MixedRadixTime {
    pub fn from_time(mut t: u64, lambda: usize, big_h: usize) -> Self {
        let digits = (0..big_h)
            .map(|_| {
                let d = (t % lambda as u64) as usize;
                t /= lambda as u64;
                d
            })
            .collect();
        Self { lambda, digits }
    }

    pub fn to_time(&self) -> u64 {
        self.digits.iter().rev().fold(0u64, |acc, &d| acc * self.lambda as u64 + d as u64)
    }
}

/// Λ^H-periodic schedule with s_t = Σ_j base[t_j] mod N.
pub fn gen_convolution(base: &ShiftSchedule, big_h: usize, period_cap: u64) -> Result<ShiftSchedule> {
    let bases = vec![base.clone(); big_h];
    gen_convolution_multi(&bases, period_cap)
}

/// As [`gen_convolution`] with a distinct base per digit.
pub fn gen_convolution_multi(bases: &[ShiftSchedule], period_cap: u64) -> Result<ShiftSchedule> {
    let first = bases.first().ok_or_else(|| Error::InvalidParameter("need H >= 1".into()))?;
    let (n, lambda) = (first.n_nodes(), first.period());
    if bases.iter().any(|b| b.n_nodes() != n || b.period() != lambda) {
        return Err(Error::InvalidParameter("all bases must share N and length".into()));
    }
    let period = (lambda as u128).checked_pow(bases.len() as u32).unwrap_or(u128::MAX);
    if period > period_cap as u128 {
        return Err(Error::PeriodOverflow(period, period_cap));
    }
    let mut cur = vec![0u32];
    for base in bases {
        let mut next = Vec::with_capacity(cur.len() * lambda);
        for &d in base.shifts() {
            next.extend(cur.iter().map(|&s| ((s as u64 + d as u64) % n as u64) as u32));
        }
        cur = next;
    }
    ShiftSchedule::new(n, cur)
}

/// Aggregates for one level of the partition tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub blocks: usize,
    pub block_size: usize,
    /// max over blocks A of ‖W*_A 1‖∞.
    pub max_block_norm: f64,
    /// Largest discrepancy among the splits producing this level.
    pub max_disc: f64,
    /// Balanced discrepancy bound for those splits.
    pub disc_bound: f64,
    /// M_ℓ = ½ M_{ℓ−1} + ½ disc_bound.
    pub recursion_bound: f64,
    /// C · 2^(−ℓ/2) · √(N ℓ); zero at level 0.
    pub closed_form_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTree {
    pub depth: usize,
    /// `blocks[ℓ]` lists the 2^ℓ blocks of level ℓ in order.
    pub blocks: Vec<Vec<Vec<u32>>>,
    pub levels: Vec<LevelStats>,
    /// C in the closed-form bound, 2·K_IMPL·√L/(√2−1) with L = ln(4(2N−1)).
    pub constant_c: f64,
    pub k_impl: f64,
}

impl PartitionTree {
    pub fn leaves(&self) -> Vec<u32> {
        self.blocks[self.depth].iter().map(|b| b[0]).collect()
    }
}

/// Recursive balanced halving of {0,…,N−1} on the starred Fourier matrix;
/// the leaf order is the schedule.
pub fn gen_derand(log2_n: u32, eps: f64) -> Result<(ShiftSchedule, PartitionTree)> {
    if log2_n == 0 || log2_n > 24 {
        return Err(Error::InvalidParameter(format!("log2 N = {log2_n} must lie in 1..=24")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must lie in (0, 1)")));
    }
    let depth = log2_n as usize;
    let n = 1usize << depth;
    let m = n - 1;
    let table = RootTable::new(n);
    let half = n / 2;
    let l_const = (4.0 * (2 * m + 1) as f64).ln();
    let constant_c = 2.0 * K_IMPL * l_const.sqrt() / (2f64.sqrt() - 1.0);

    let root: Vec<u32> = (0..n as u32).collect();
    // W*·1 on the tracked rows a = 1..N/2
    let root_sum = {
        let (mut re, mut im) = (vec![0.0; half], vec![0.0; half]);
        let cos = table.cos();
        let sin = table.sin();
        for a in 1..=half {
            let (mut r, mut i) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for s in 0..n {
                let k = a * s % n;
                r.push(cos[k]);
                i.push(sin[k]);
            }
            re[a - 1] = crate::fourier::pairwise_sum(&r);
            im[a - 1] = crate::fourier::pairwise_sum(&i);
        }
        (re, im)
    };
    let norm_of = |(re, im): &(Vec<f64>, Vec<f64>)| re.iter().zip(im).map(|(r, i)| r.hypot(*i)).fold(0.0, f64::max);

    let m0 = norm_of(&root_sum);
    let mut levels = vec![LevelStats {
        level: 0,
        blocks: 1,
        block_size: n,
        max_block_norm: m0,
        max_disc: 0.0,
        disc_bound: 0.0,
        recursion_bound: m0,
        closed_form_bound: 0.0,
    }];
    let mut blocks = vec![vec![root]];
    let mut sums = vec![root_sum];

    for level in 1..=depth {
        let parent_size = n >> (level - 1);
        let fl = FourierLevel::new(&table, parent_size);
        let parents = &blocks[level - 1];
        let splits: Vec<Result<discrepancy::SetSplit>> =
            parents.par_iter().map(|b| discrepancy::partition_set(b, &fl.block(b))).collect();

        let mut next_blocks = Vec::with_capacity(2 * parents.len());
        let mut next_sums = Vec::with_capacity(if level < depth { 2 * parents.len() } else { 0 });
        let (mut max_norm, mut max_disc) = (0.0f64, 0.0f64);
        let disc_bound = discrepancy::balanced_bound(parent_size, m);
        for (split, parent) in splits.into_iter().zip(&sums) {
            let split = split?;
            let p = &split.partition;
            if p.disc > p.bound {
                return Err(Error::BoundViolation { disc: p.disc, bound: p.bound });
            }
            max_disc = max_disc.max(p.disc);
            for sign in [-1.0, 1.0] {
                let child: (Vec<f64>, Vec<f64>) = (
                    parent.0.iter().zip(&p.ax_re).map(|(a, b)| 0.5 * (a + sign * b)).collect(),
                    parent.1.iter().zip(&p.ax_im).map(|(a, b)| 0.5 * (a + sign * b)).collect(),
                );
                max_norm = max_norm.max(norm_of(&child));
                if level < depth {
                    next_sums.push(child);
                }
            }
            next_blocks.push(split.minus);
            next_blocks.push(split.plus);
        }
        let prev = levels[level - 1].recursion_bound;
        levels.push(LevelStats {
            level,
            blocks: next_blocks.len(),
            block_size: n >> level,
            max_block_norm: max_norm,
            max_disc,
            disc_bound,
            recursion_bound: 0.5 * prev + 0.5 * disc_bound,
            closed_form_bound: constant_c * 2f64.powf(-(level as f64) / 2.0) * ((n * level) as f64).sqrt(),
        });
        blocks.push(next_blocks);
        sums = next_sums;
    }

    let tree = PartitionTree { depth, blocks, levels, constant_c, k_impl: K_IMPL };
    let schedule = ShiftSchedule::new(n, tree.leaves())?;
    Ok((schedule, tree))
}

/// Phase length for hop count h on the derandomized schedule: N when h = 1,
/// otherwise the smallest power of two ≥ C²(4N)^(1/h) ε^(−2/h) log₂ N.
pub fn lambda_for_h_derand(eps: f64, h: usize, n_nodes: usize, const_c: f64) -> Result<u64> {
    if !n_nodes.is_power_of_two() || n_nodes < 2 {
        return Err(Error::InvalidParameter(format!("N = {n_nodes} must be a power of two")));
    }
    if h == 0 {
        return Err(Error::InvalidParameter("h must be >= 1".into()));
    }
    if h == 1 {
        return Ok(n_nodes as u64);
    }
    let hf = h as f64;
    let n = n_nodes as f64;
    let value = const_c * const_c * (4.0 * n).powf(1.0 / hf) * eps.powf(-2.0 / hf) * n.log2();
    let mut lambda = 1u64;
    while (lambda as f64) < value {
        lambda *= 2;
    }
    let needed = lambda.saturating_mul(h as u64);
    if needed > n_nodes as u64 {
        return Err(Error::PhaseOverrun { h, needed, period: n_nodes });
    }
    Ok(lambda)
}

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    r
}

/// Smallest primitive root modulo a prime p.
pub fn primitive_root(p: u64) -> Result<u64> {
    if !is_prime(p) {
        return Err(Error::InvalidParameter(format!("N = {p} is not prime")));
    }
    if p == 2 {
        return Ok(1);
    }
    let mut factors = Vec::new();
    let mut r = p - 1;
    let mut d = 2;
    while d * d <= r {
        if r % d == 0 {
            factors.push(d);
            while r % d == 0 {
                r /= d;
            }
        }
        d += 1;
    }
    if r > 1 {
        factors.push(r);
    }
    (2..p)
        .find(|&g| factors.iter().all(|&q| pow_mod(g, (p - 1) / q, p) != 1))
        .ok_or_else(|| Error::InvalidParameter(format!("no primitive root mod {p}")))
}

/// s_k = g^k mod N for a primitive root g, period N − 1. Comes with no
/// universality guarantee.
pub fn gen_primitive_root(n_nodes: usize) -> Result<ShiftSchedule> {
    if n_nodes > u32::MAX as usize {
        return Err(Error::InvalidParameter("N too large".into()));
    }
    let p = n_nodes as u64;
    let g = primitive_root(p)?;
    let mut x = 1u64;
    let shifts = (0..p - 1)
        .map(|_| {
            let s = x as u32;
            x = x * g % p;
            s
        })
        .collect();
    ShiftSchedule::new(n_nodes, shifts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{convolve, dist_from_window, fourier_of, q_norm, two_norm, window_fourier};
    use crate::model::{Direction, GroupDistribution};
    use proptest::prelude::*;

    #[test]
    fn random_is_reproducible() {
        assert_eq!(gen_random(64, 500, 7).unwrap(), gen_random(64, 500, 7).unwrap());
        assert_ne!(gen_random(64, 500, 7).unwrap(), gen_random(64, 500, 8).unwrap());
    }

    #[test]
    fn random_frequencies_concentrate() {
        let (n, t) = (16usize, 1_000_000usize);
        let s = gen_random(n, t, 3).unwrap();
        let mut counts = vec![0u64; n];
        for &x in s.shifts() {
            counts[x as usize] += 1;
        }
        let band = 3.0 * 15f64.sqrt() / (16.0 * 1000.0);
        for c in counts {
            assert!((c as f64 / t as f64 - 1.0 / 16.0).abs() <= band);
        }
    }

    #[test]
    fn base_sampling() {
        let ok = gen_base_certified_with(64, 64, 3, 0.5, 1, 1, BaseSampler::Permutation).unwrap();
        assert_eq!(ok.retries, 0);
        assert!(ok.cert.norm < 1e-12);
        let e = gen_base_certified(16, 1, 2, 0.5, 1, 5).unwrap_err();
        assert_eq!(e, Error::RetriesExhausted(5));
    }

    #[test]
    fn mixed_radix_round_trip() {
        for t in 0..625 {
            let m = MixedRadixTime::from_time(t, 5, 4);
            assert!(m.digits.iter().all(|&d| d < 5));
            assert_eq!(m.to_time(), t);
        }
    }

    #[test]
    fn convolution_examples() {
        let z = ShiftSchedule::new(8, vec![0]).unwrap();
        assert_eq!(gen_convolution(&z, 5, DEFAULT_PERIOD_CAP).unwrap().shifts(), &[0]);
        let a = ShiftSchedule::new(8, vec![3]).unwrap();
        assert_eq!(gen_convolution(&a, 3, DEFAULT_PERIOD_CAP).unwrap().shifts(), &[1]);
        let b = ShiftSchedule::new(8, vec![1, 2]).unwrap();
        assert_eq!(gen_convolution(&b, 2, DEFAULT_PERIOD_CAP).unwrap().shifts(), &[2, 3, 3, 4]);
        let big = ShiftSchedule::new(8, vec![0; 100]).unwrap();
        assert!(matches!(gen_convolution(&big, 5, DEFAULT_PERIOD_CAP), Err(Error::PeriodOverflow(..))));
    }

    #[test]
    fn convolution_matches_digit_formula() {
        let base = gen_random(13, 5, 2).unwrap();
        let c = gen_convolution(&base, 3, DEFAULT_PERIOD_CAP).unwrap();
        for t in 0..125u64 {
            let d = MixedRadixTime::from_time(t, 5, 3);
            let s: u32 = d.digits.iter().map(|&k| base.shifts()[k]).sum::<u32>() % 13;
            assert_eq!(c.shift_at(t), s);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        /// Full-period window of the convolution = H-fold self-convolution of
        /// the base window, and the Hölder chain holds.
        #[test]
        fn convolution_window_is_self_convolution(n in 2usize..24, lambda in 1usize..6, big_h in 1usize..4, seed in any::<u64>()) {
            let base = gen_random(n, lambda, seed).unwrap();
            let c = gen_convolution(&base, big_h, DEFAULT_PERIOD_CAP).unwrap();
            let bd = dist_from_window(&base, 0, lambda, Direction::Forward);
            let mut acc = GroupDistribution::point_mass(n, 0);
            for _ in 0..big_h {
                acc = convolve(&acc, &bd);
            }
            let cd = dist_from_window(&c, 0, c.period(), Direction::Forward);
            for (x, y) in acc.mass().iter().zip(cd.mass()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let table = RootTable::new(n);
            let whole = two_norm(&fourier_of(&cd).star());
            let base_q = q_norm(&window_fourier(&table, &base, 0, lambda, Direction::Forward).star(), 2.0 * big_h as f64);
            prop_assert!(whole <= base_q.powi(big_h as i32) * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn derand_small_cases() {
        let (s, tree) = gen_derand(1, 0.5).unwrap();
        let mut v = s.shifts().to_vec();
        v.sort_unstable();
        assert_eq!(v, vec![0, 1]);
        assert_eq!(tree.levels.len(), 2);
        for k in 2..=8 {
            let (s, tree) = gen_derand(k, 0.5).unwrap();
            let n = 1usize << k;
            let mut v = s.shifts().to_vec();
            v.sort_unstable();
            assert_eq!(v, (0..n as u32).collect::<Vec<_>>());
            for (l, blocks) in tree.blocks.iter().enumerate() {
                assert_eq!(blocks.len(), 1 << l);
                assert!(blocks.iter().all(|b| b.len() == n >> l));
            }
            for st in &tree.levels[1..] {
                assert!(st.max_block_norm <= st.recursion_bound + 1e-9);
                assert!(st.max_block_norm <= st.closed_form_bound + 1e-9);
                assert!(st.max_disc <= st.disc_bound);
            }
        }
    }

    /// Recorded block norms agree with direct evaluation of ‖W*_A 1‖∞.
    #[test]
    fn derand_block_norms_are_exact() {
        let (_, tree) = gen_derand(6, 0.5).unwrap();
        let n = 64;
        let table = RootTable::new(n);
        for st in &tree.levels[1..] {
            let direct = tree.blocks[st.level]
                .iter()
                .map(|b| {
                    (1..n)
                        .map(|a| b.iter().map(|&s| table.root(a * s as usize % n)).sum::<num_complex::Complex64>().norm())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            assert!((direct - st.max_block_norm).abs() < 1e-9);
        }
    }

    #[test]
    fn derand_lambda() {
        assert_eq!(lambda_for_h_derand(0.5, 1, 1024, 3.0).unwrap(), 1024);
        // (4·2^20)^(1/2)·2·20 = 81920
        assert_eq!(lambda_for_h_derand(0.5, 2, 1 << 20, 1.0).unwrap(), 1 << 17);
        let mut prev = u64::MAX;
        for i in 1..20 {
            let l = lambda_for_h_derand(i as f64 / 20.0, 3, 1 << 20, 1.0).unwrap();
            assert!(l <= prev && l.is_power_of_two());
            prev = l;
        }
        assert!(matches!(lambda_for_h_derand(0.5, 2, 64, 10.0), Err(Error::PhaseOverrun { h: 2, .. })));
    }

    #[test]
    fn primitive_root_schedule() {
        let s = gen_primitive_root(11).unwrap();
        assert_eq!(primitive_root(11).unwrap(), 2);
        assert_eq!(s.shifts(), &[1, 2, 4, 8, 5, 10, 9, 7, 3, 6]);
        assert!(gen_primitive_root(12).is_err());
    }
}
