//! Universality tests.
//!
//! [`certify`] checks, for every hop count h and every start t in the start
//! set, that the starred Fourier vectors of the forward and backward spray
//! distributions have 2-norm at most ε/2. [`certify_base`] is the 2H-norm
//! test for a single base window, and [`markov_test`] handles arbitrary
//! permutation schedules through explicit transition matrices.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{self, half_weights, HalfSpectrum, RootTable};
use crate::model::{Direction, PermSchedule, ShiftSchedule, StartSet};

/// Default slack δ for flagging records near the ε/2 threshold.
pub const DEFAULT_SLACK: f64 = 1e-6;

/// Largest N for which [`markov_test`] builds dense N×N matrices.
pub const MARKOV_NODE_LIMIT: usize = 4096;

/// Windows per chunk of the residue sweep.
const SWEEP_CHUNK: usize = 32;

/// Largest N for which slides use precomputed root rows (8N² bytes).
const ROOT_ROWS_MAX_N: usize = 2048;

/// Smallest integer Λ with Λ ≥ 4 (ε/2)^(−2/h) N^(1/h) ln(h N³).
pub fn lambda_for_h(eps: f64, h: usize, n_nodes: usize) -> u64 {
    assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
    assert!(h >= 1 && n_nodes >= 2);
    let hf = h as f64;
    let n = n_nodes as f64;
    let value = 4.0 * (eps / 2.0).powf(-2.0 / hf) * n.powf(1.0 / hf) * (hf.ln() + 3.0 * n.ln());
    value.ceil() as u64
}

/// Whether T ≤ N² / (8 log₂ N), the period range covered by the
/// random-schedule analysis.
pub fn period_within_random_bound(n_nodes: usize, period: usize) -> bool {
    let n = n_nodes as f64;
    period as f64 <= n * n / (8.0 * n.log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertRecord {
    pub h: usize,
    pub lambda: usize,
    pub t: u64,
    pub norm_p: f64,
    pub norm_q: f64,
    pub pass: bool,
    pub marginal: bool,
}

/// Per-h aggregate of the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HSummary {
    pub h: usize,
    pub lambda: usize,
    pub start_set: StartSet,
    pub starts: usize,
    pub max_norm_p: f64,
    pub max_norm_q: f64,
    /// Start attaining the largest of the two norms.
    pub worst_t: u64,
    pub failures: usize,
    pub marginal: usize,
}

impl HSummary {
    pub fn passes(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub digest: String,
    pub eps: f64,
    pub slack: f64,
    pub h_range: Vec<usize>,
    pub summaries: Vec<HSummary>,
    /// Empty when produced by [`certify_summary`].
    pub records: Vec<CertRecord>,
    pub universal: bool,
    /// T ≤ N²/(8 log₂ N); informational only.
    pub period_within_random_bound: bool,
}

impl CertReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "h,lambda,t,norm_p,norm_q,pass,marginal")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{},{},{},{}", r.h, r.lambda, r.t, r.norm_p, r.norm_q, r.pass, r.marginal)?;
        }
        writeln!(w, "# universal={} eps={}", self.universal, self.eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertOptions {
    pub eps: f64,
    pub slack: f64,
    /// Worker threads for independent hop counts; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl CertOptions {
    pub fn new(eps: f64) -> Self {
        Self { eps, slack: DEFAULT_SLACK, threads: None }
    }
}

/// Forward starred-norm for every start of one hop count.
struct HNorms {
    h: usize,
    lambda: usize,
    start_set: StartSet,
    starts: Vec<u64>,
    norm_p: Vec<f64>,
}

impl HNorms {
    /// Backward norm at start t. The backward phases h+1..2h reuse the
    /// forward windows starting at t + hΛ with negated exponents, and
    /// negation conjugates every coefficient, so the norms coincide.
    fn norm_q(&self, idx: usize, period: usize) -> f64 {
        let span = (self.h * self.lambda) as u64;
        let t = (self.starts[idx] + span) % period as u64;
        let j = match self.start_set {
            StartSet::Aligned => (t / span) as usize,
            StartSet::All => t as usize,
        };
        self.norm_p[j]
    }
}

fn validate_plan(sched: &ShiftSchedule, eps: f64, plan: &[(usize, usize)]) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
    }
    for &(h, lambda) in plan {
        if h == 0 || lambda == 0 {
            return Err(Error::InvalidParameter(format!("h = {h}, lambda = {lambda} must be >= 1")));
        }
        let needed = h as u64 * lambda as u64;
        if needed > sched.period() as u64 {
            return Err(Error::PhaseOverrun { h, needed, period: sched.period() });
        }
    }
    Ok(())
}

fn canonical_plan(h_list: &[usize], lambda_map: &BTreeMap<usize, usize>) -> Result<Vec<(usize, usize)>> {
    let mut hs = h_list.to_vec();
    hs.sort_unstable();
    hs.dedup();
    hs.into_iter()
        .map(|h| {
            lambda_map
                .get(&h)
                .map(|&l| (h, l))
                .ok_or_else(|| Error::InvalidParameter(format!("no phase length given for h = {h}")))
        })
        .collect()
}

/// Full certification: one record per (h, t ∈ A).
pub fn certify(
    sched: &ShiftSchedule,
    eps: f64,
    h_list: &[usize],
    lambda_map: &BTreeMap<usize, usize>,
) -> Result<CertReport> {
    certify_with(sched, &CertOptions::new(eps), h_list, lambda_map, true)
}

/// Same decision as [`certify`], keeping only per-h summaries.
pub fn certify_summary(
    sched: &ShiftSchedule,
    opts: &CertOptions,
    h_list: &[usize],
    lambda_map: &BTreeMap<usize, usize>,
) -> Result<CertReport> {
    certify_with(sched, opts, h_list, lambda_map, false)
}

pub fn certify_with(
    sched: &ShiftSchedule,
    opts: &CertOptions,
    h_list: &[usize],
    lambda_map: &BTreeMap<usize, usize>,
    keep_records: bool,
) -> Result<CertReport> {
    let plan = canonical_plan(h_list, lambda_map)?;
    validate_plan(sched, opts.eps, &plan)?;
    let table = RootTable::new(sched.n_nodes());
    let rows = RootRows::new(&table);

    let per_h = |&(h, lambda): &(usize, usize)| {
        let norms = h_norms(&table, rows.as_ref(), sched, h, lambda);
        summarize(&norms, sched.period(), opts, keep_records)
    };
    let results: Vec<(HSummary, Vec<CertRecord>)> = match opts.threads {
        Some(1) => plan.iter().map(per_h).collect(),
        threads => {
            use rayon::prelude::*;
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(k) = threads {
                builder = builder.num_threads(k);
            }
            let pool = builder.build().map_err(|e| Error::InvalidParameter(e.to_string()))?;
            pool.install(|| plan.par_iter().map(per_h).collect())
        }
    };

    let mut summaries = Vec::with_capacity(results.len());
    let mut records = Vec::new();
    for (s, r) in results {
        summaries.push(s);
        records.extend(r);
    }
    let universal = summaries.iter().all(HSummary::passes);
    Ok(CertReport {
        digest: sched.digest(),
        eps: opts.eps,
        slack: opts.slack,
        h_range: plan.iter().map(|&(h, _)| h).collect(),
        summaries,
        records,
        universal,
        period_within_random_bound: period_within_random_bound(sched.n_nodes(), sched.period()),
    })
}

fn summarize(norms: &HNorms, period: usize, opts: &CertOptions, keep: bool) -> (HSummary, Vec<CertRecord>) {
    let thr = opts.eps / 2.0;
    let mut s = HSummary {
        h: norms.h,
        lambda: norms.lambda,
        start_set: norms.start_set,
        starts: norms.starts.len(),
        max_norm_p: 0.0,
        max_norm_q: 0.0,
        worst_t: norms.starts[0],
        failures: 0,
        marginal: 0,
    };
    let mut worst = -1.0;
    let mut records = Vec::with_capacity(if keep { norms.starts.len() } else { 0 });
    for (i, &t) in norms.starts.iter().enumerate() {
        let p = norms.norm_p[i];
        let q = norms.norm_q(i, period);
        let pass = p <= thr && q <= thr;
        let marginal = (p - thr).abs() <= opts.slack || (q - thr).abs() <= opts.slack;
        s.max_norm_p = s.max_norm_p.max(p);
        s.max_norm_q = s.max_norm_q.max(q);
        if p.max(q) > worst {
            worst = p.max(q);
            s.worst_t = t;
        }
        s.failures += usize::from(!pass);
        s.marginal += usize::from(marginal);
        if keep {
            records.push(CertRecord { h: norms.h, lambda: norms.lambda, t, norm_p: p, norm_q: q, pass, marginal });
        }
    }
    (s, records)
}

fn h_norms(table: &RootTable, rows: Option<&RootRows>, sched: &ShiftSchedule, h: usize, lambda: usize) -> HNorms {
    let period = sched.period();
    let start_set = StartSet::for_period(h, lambda, period);
    let starts = start_set.starts(h, lambda, period);
    let norm_p = match start_set {
        StartSet::Aligned => aligned_norms(table, sched, h, lambda, &starts),
        StartSet::All => residue_sweep_norms(table, rows, sched, h, lambda),
    };
    HNorms { h, lambda, start_set, starts, norm_p }
}

/// Σ_a w_a Π_j mags_j[a], summed in a fixed order.
#[inline]
fn product_norm(weights: &[f64], mags: &[&[f64]], scratch: &mut [f64]) -> f64 {
    scratch.copy_from_slice(weights);
    for m in mags {
        for (s, v) in scratch.iter_mut().zip(m.iter()) {
            *s *= v;
        }
    }
    fourier::pairwise_sum(scratch).sqrt()
}

/// Whether every shift occurs equally often in the window, in which case its
/// starred Fourier vector vanishes exactly.
fn uniform_window(sched: &ShiftSchedule, start: u64, len: usize) -> bool {
    if len % sched.n_nodes() != 0 {
        return false;
    }
    let counts = fourier::window_counts(sched, start, len, Direction::Forward);
    counts.iter().all(|&c| c == counts[0])
}

fn aligned_norms(table: &RootTable, sched: &ShiftSchedule, h: usize, lambda: usize, starts: &[u64]) -> Vec<f64> {
    let half = table.n() / 2;
    let weights = half_weights(table.n());
    let mut mags = vec![vec![0.0; half]; h];
    let mut scratch = vec![0.0; half];
    starts
        .iter()
        .map(|&t| {
            for (j, m) in mags.iter_mut().enumerate() {
                let start = t + (j * lambda) as u64;
                if uniform_window(sched, start, lambda) {
                    m.fill(0.0);
                } else {
                    HalfSpectrum::compute(table, sched, start, lambda).magnitudes(lambda, m);
                }
            }
            let refs: Vec<&[f64]> = mags.iter().map(Vec::as_slice).collect();
            product_norm(&weights, &refs, &mut scratch)
        })
        .collect()
}

/// ω^(a·s) for a = 1..=N/2, one contiguous row per shift s, so a window
/// slide is two vector updates.
struct RootRows {
    half: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl RootRows {
    fn new(table: &RootTable) -> Option<Self> {
        let n = table.n();
        if n > ROOT_ROWS_MAX_N {
            return None;
        }
        let half = n / 2;
        let (mut re, mut im) = (Vec::with_capacity(n * half), Vec::with_capacity(n * half));
        for s in 0..n {
            for a in 1..=half {
                let k = a * s % n;
                re.push(table.cos()[k]);
                im.push(table.sin()[k]);
            }
        }
        Some(Self { half, re, im })
    }

    /// Unnormalized coefficients of the window [start, start+len).
    fn window(&self, sched: &ShiftSchedule, start: u64, len: usize) -> HalfSpectrum {
        let n = sched.n_nodes();
        let (mut re, mut im) = (vec![0.0; self.half], vec![0.0; self.half]);
        let mut add = |s: usize, c: f64| {
            let row = s * self.half;
            for (x, v) in re.iter_mut().zip(&self.re[row..row + self.half]) {
                *x += c * v;
            }
            for (x, v) in im.iter_mut().zip(&self.im[row..row + self.half]) {
                *x += c * v;
            }
        };
        if len <= n {
            for k in start..start + len as u64 {
                add(sched.shift_at(k) as usize, 1.0);
            }
        } else {
            let counts = fourier::window_counts(sched, start, len, Direction::Forward);
            for (s, &c) in counts.iter().enumerate().filter(|(_, &c)| c > 0) {
                add(s, c as f64);
            }
        }
        HalfSpectrum { re, im }
    }

    #[inline]
    fn slide(&self, w: &mut HalfSpectrum, outgoing: u32, incoming: u32) {
        if outgoing == incoming {
            return;
        }
        let (o, i) = (outgoing as usize * self.half, incoming as usize * self.half);
        let (ro, ri) = (&self.re[o..o + self.half], &self.re[i..i + self.half]);
        for ((x, a), b) in w.re.iter_mut().zip(ri).zip(ro) {
            *x += a - b;
        }
        let (io, ii) = (&self.im[o..o + self.half], &self.im[i..i + self.half]);
        for ((x, a), b) in w.im.iter_mut().zip(ii).zip(io) {
            *x += a - b;
        }
    }
}

/// Every start t = r + kΛ. Window k covers [r + kΛ, r + (k+1)Λ); advancing
/// r by one slides every window one step, and the phases of start r + kΛ are
/// exactly windows k..k+h−1, so each timestep costs one window update. The
/// k axis is processed in chunks to keep the window state cache-resident.
fn residue_sweep_norms(table: &RootTable, rows: Option<&RootRows>, sched: &ShiftSchedule, h: usize, lambda: usize) -> Vec<f64> {
    let period = sched.period();
    let half = table.n() / 2;
    let mut out = vec![0.0; period];
    if half == 0 {
        return out;
    }
    let weights = half_weights(table.n());
    let l = lambda as u64;
    let k_count = (period - 1) / lambda + 1;
    let cap = (SWEEP_CHUNK + h - 1) * half;
    let mut mags = vec![0.0; cap];
    let (mut pre, mut suf) = (vec![0.0; cap], vec![0.0; cap]);

    for k0 in (0..k_count).step_by(SWEEP_CHUNK) {
        let k1 = (k0 + SWEEP_CHUNK).min(k_count);
        let mut windows: Vec<HalfSpectrum> = (k0..k1 + h - 1)
            .map(|k| match rows {
                Some(rr) => rr.window(sched, k as u64 * l, lambda),
                None => HalfSpectrum::compute(table, sched, k as u64 * l, lambda),
            })
            .collect();
        for r in 0..lambda {
            let k_max = (period - 1 - r) / lambda;
            if k_max < k0 {
                break;
            }
            let k_hi = k1.min(k_max + 1);
            let live = k_hi - k0 + h - 1;
            if r > 0 {
                for (i, w) in windows.iter_mut().enumerate().take(live) {
                    let pos = (r - 1) as u64 + (k0 + i) as u64 * l;
                    let (o, n) = (sched.shift_at(pos), sched.shift_at(pos + l));
                    match rows {
                        Some(rr) => rr.slide(w, o, n),
                        None => w.slide(table, o, n),
                    }
                }
            }
            for (i, w) in windows.iter().enumerate().take(live) {
                w.magnitudes(lambda, &mut mags[i * half..(i + 1) * half]);
            }
            if h > 1 {
                block_products(&mags, &mut pre, &mut suf, live, h, half);
            }
            for k in k0..k_hi {
                let i = k - k0;
                let sq = if h == 1 {
                    wdot(&weights, &mags[i * half..(i + 1) * half])
                } else if i % h == 0 {
                    wdot(&weights, &suf[i * half..(i + 1) * half])
                } else {
                    let e = i + h - 1;
                    wdot3(&weights, &suf[i * half..(i + 1) * half], &pre[e * half..(e + 1) * half])
                };
                out[r + k * lambda] = sq.sqrt();
            }
        }
    }
    out
}

/// Per-block prefix and suffix products over blocks of h consecutive
/// vectors; the product over [i, i+h−1] is suffix(i) ⊙ prefix(i+h−1).
fn block_products(mags: &[f64], pre: &mut [f64], suf: &mut [f64], live: usize, h: usize, half: usize) {
    for b0 in (0..live).step_by(h) {
        let b1 = (b0 + h).min(live);
        pre[b0 * half..(b0 + 1) * half].copy_from_slice(&mags[b0 * half..(b0 + 1) * half]);
        for k in b0 + 1..b1 {
            let (done, rest) = pre.split_at_mut(k * half);
            let prev = &done[(k - 1) * half..];
            for ((o, p), m) in rest[..half].iter_mut().zip(prev).zip(&mags[k * half..(k + 1) * half]) {
                *o = p * m;
            }
        }
        let last = b1 - 1;
        suf[last * half..(last + 1) * half].copy_from_slice(&mags[last * half..(last + 1) * half]);
        for k in (b0..last).rev() {
            let (head, tail) = suf.split_at_mut((k + 1) * half);
            for ((o, n), m) in head[k * half..].iter_mut().zip(&tail[..half]).zip(&mags[k * half..(k + 1) * half]) {
                *o = n * m;
            }
        }
    }
}

/// Σ w·x with four accumulators.
fn wdot(w: &[f64], x: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (wc, xc) = (w.chunks_exact(4), x.chunks_exact(4));
    let (wr, xr) = (wc.remainder(), xc.remainder());
    for (a, b) in wc.zip(xc) {
        for i in 0..4 {
            acc[i] += a[i] * b[i];
        }
    }
    let tail: f64 = wr.iter().zip(xr).map(|(a, b)| a * b).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Σ w·x·y with four accumulators.
fn wdot3(w: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (wc, xc, yc) = (w.chunks_exact(4), x.chunks_exact(4), y.chunks_exact(4));
    let (wr, xr, yr) = (wc.remainder(), xc.remainder(), yc.remainder());
    for ((a, b), c) in wc.zip(xc).zip(yc) {
        for i in 0..4 {
            acc[i] += a[i] * b[i] * c[i];
        }
    }
    let tail: f64 = wr.iter().zip(xr).zip(yr).map(|((a, b), c)| a * b * c).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// h windows slid together along t; an independent cross-check.
#[cfg(test)]
fn sliding_norms(table: &RootTable, sched: &ShiftSchedule, h: usize, lambda: usize) -> Vec<f64> {
    let period = sched.period();
    let half = table.n() / 2;
    let weights = half_weights(table.n());
    let l = lambda as u64;
    let mut mags = vec![vec![0.0; half]; h];
    let mut scratch = vec![0.0; half];
    let mut windows: Vec<HalfSpectrum> = Vec::new();
    let mut out = vec![0.0; period];
    for t in 0..period as u64 {
        if t % 4096 == 0 {
            windows = (0..h as u64).map(|j| HalfSpectrum::compute(table, sched, t + j * l, lambda)).collect();
        } else {
            for (j, w) in windows.iter_mut().enumerate() {
                let pos = t - 1 + j as u64 * l;
                w.slide(table, sched.shift_at(pos), sched.shift_at(pos + l));
            }
        }
        for (w, m) in windows.iter().zip(mags.iter_mut()) {
            w.magnitudes(lambda, m);
        }
        let refs: Vec<&[f64]> = mags.iter().map(Vec::as_slice).collect();
        out[t as usize] = product_norm(&weights, &refs, &mut scratch);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseCert {
    pub big_h: usize,
    pub norm: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// 2H-norm of the starred Fourier vector of the whole base window, against
/// (ε/2)^(1/H).
pub fn certify_base(base: &ShiftSchedule, eps: f64, big_h: usize) -> Result<BaseCert> {
    if big_h == 0 {
        return Err(Error::InvalidParameter("H must be >= 1".into()));
    }
    let table = RootTable::new(base.n_nodes());
    let v = fourier::window_fourier(&table, base, 0, base.period(), Direction::Forward).star();
    let norm = fourier::q_norm(&v, 2.0 * big_h as f64);
    let threshold = (eps / 2.0).powf(1.0 / big_h as f64);
    Ok(BaseCert { big_h, norm, threshold, pass: norm <= threshold })
}

/// Rows of the h-phase transition matrix product from start `t`:
/// `rows[i][j]` is the probability that a message starting at node i ends
/// at node j after one uniformly random hop in each phase.
pub fn transition_rows(sched: &PermSchedule, h: usize, lambda: usize, t: u64) -> Result<Vec<Vec<f64>>> {
    let n = sched.n_nodes();
    if n > MARKOV_NODE_LIMIT {
        return Err(Error::TooManyNodes { n, limit: MARKOV_NODE_LIMIT });
    }
    if h == 0 || lambda == 0 {
        return Err(Error::InvalidParameter("h and lambda must be >= 1".into()));
    }
    let needed = h as u64 * lambda as u64;
    if needed > sched.period() as u64 {
        return Err(Error::PhaseOverrun { h, needed, period: sched.period() });
    }
    let inv = 1.0 / lambda as f64;
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = vec![0.0; n];
            r[i] = 1.0;
            r
        })
        .collect();
    let mut next = vec![0.0; n];
    for j in 0..h as u64 {
        let phase = t + j * lambda as u64;
        for row in rows.iter_mut() {
            next.iter_mut().for_each(|x| *x = 0.0);
            for k in phase..phase + lambda as u64 {
                let perm = sched.perm_at(k);
                for (c, &m) in row.iter().enumerate() {
                    if m != 0.0 {
                        next[perm[c] as usize] += m * inv;
                    }
                }
            }
            row.copy_from_slice(&next);
        }
    }
    Ok(rows)
}

/// Maximum row 1-norm of M − U for the h-phase transition product.
pub fn markov_test(sched: &PermSchedule, h: usize, lambda: usize, t: u64) -> Result<f64> {
    let rows = transition_rows(sched, h, lambda, t)?;
    let u = 1.0 / sched.n_nodes() as f64;
    Ok(rows
        .iter()
        .map(|r| {
            let d: Vec<f64> = r.iter().map(|m| (m - u).abs()).collect();
            fourier::pairwise_sum(&d)
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{spray_distribution, spray_fourier_star, tv_to_uniform, two_norm};
    use crate::model::SprayConfig;
    use rand::{Rng, SeedableRng};

    fn lmap(pairs: &[(usize, usize)]) -> BTreeMap<usize, usize> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn lambda_formula_values() {
        // 4·16·1024·ln(2^30) and 4·4·32·ln(2^31)
        let l1 = 65536.0 * 30.0 * 2f64.ln();
        let l2 = 512.0 * 31.0 * 2f64.ln();
        assert_eq!(lambda_for_h(0.5, 1, 1024), l1.ceil() as u64);
        assert_eq!(lambda_for_h(0.5, 1, 1024), 1362783);
        assert_eq!(lambda_for_h(0.5, 2, 1024), l2.ceil() as u64);
        assert_eq!(lambda_for_h(0.5, 2, 1024), 11002);
        let mut prev = u64::MAX;
        for i in 1..99 {
            let l = lambda_for_h(i as f64 / 100.0, 3, 1024);
            assert!(l <= prev);
            prev = l;
        }
    }

    #[test]
    fn constant_schedule_fails_with_sqrt_n_minus_one() {
        let n = 12;
        let s = ShiftSchedule::new(n, vec![0; 6]).unwrap();
        let rep = certify(&s, 0.5, &[1, 2], &lmap(&[(1, 3), (2, 2)])).unwrap();
        assert!(!rep.universal);
        for r in &rep.records {
            assert!((r.norm_p - ((n - 1) as f64).sqrt()).abs() < 1e-9);
            assert!(!r.pass);
        }
    }

    #[test]
    fn permutation_schedule_passes_with_zero_norms() {
        let n = 32;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut p: Vec<u32> = (0..n as u32).collect();
        rand::seq::SliceRandom::shuffle(p.as_mut_slice(), &mut rng);
        let s = ShiftSchedule::new(n, p).unwrap();
        let rep = certify(&s, 0.5, &[1], &lmap(&[(1, n)])).unwrap();
        assert!(rep.universal);
        assert_eq!(rep.records.len(), 1);
        assert!(rep.records[0].norm_p < 1e-12 && rep.records[0].norm_q < 1e-12);
    }

    #[test]
    fn overrun_names_offending_h() {
        let s = ShiftSchedule::new(8, vec![1; 10]).unwrap();
        let e = certify(&s, 0.5, &[1, 3], &lmap(&[(1, 4), (3, 4)])).unwrap_err();
        assert!(matches!(e, Error::PhaseOverrun { h: 3, .. }));
    }

    /// Every engine agrees with the direct per-start Fourier computation.
    #[test]
    fn engines_match_direct_evaluation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for &(n, period, h, lambda) in &[(16usize, 37usize, 2usize, 5usize), (15, 40, 3, 4), (9, 12, 2, 3), (2, 7, 1, 3), (8, 701, 3, 2), (6, 455, 1, 3)] {
            let shifts: Vec<u32> = (0..period).map(|_| rng.gen_range(0..n as u32)).collect();
            let s = ShiftSchedule::new(n, shifts).unwrap();
            let table = RootTable::new(n);
            let fwd = SprayConfig { hop_count: h, phase_len: lambda, direction: Direction::Forward, start_set: StartSet::All };
            let bwd = SprayConfig { direction: Direction::Backward, ..fwd };
            let sweep = residue_sweep_norms(&table, None, &s, h, lambda);
            let rows = RootRows::new(&table).unwrap();
            let sweep_rows = residue_sweep_norms(&table, Some(&rows), &s, h, lambda);
            let slide = sliding_norms(&table, &s, h, lambda);
            let rep = certify(&s, 0.5, &[h], &lmap(&[(h, lambda)])).unwrap();
            for t in 0..period {
                let direct = two_norm(&spray_fourier_star(&s, &fwd, t as u64).unwrap());
                let direct_q = two_norm(&spray_fourier_star(&s, &bwd, t as u64).unwrap());
                assert!((sweep[t] - direct).abs() < 1e-9, "n={n} t={t}: {} vs {direct}", sweep[t]);
                assert!((slide[t] - direct).abs() < 1e-9);
                assert!((sweep_rows[t] - direct).abs() < 1e-9);
                if rep.summaries[0].start_set == StartSet::All {
                    assert!((rep.records[t].norm_q - direct_q).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn aligned_norms_match_direct() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (n, h, lambda) = (20, 2, 6);
        let period = 4 * h * lambda;
        let s = ShiftSchedule::new(n, (0..period).map(|_| rng.gen_range(0..n as u32)).collect()).unwrap();
        let rep = certify(&s, 0.5, &[h], &lmap(&[(h, lambda)])).unwrap();
        assert_eq!(rep.summaries[0].start_set, StartSet::Aligned);
        assert_eq!(rep.records.len(), 4);
        let bwd = SprayConfig { hop_count: h, phase_len: lambda, direction: Direction::Backward, start_set: StartSet::Aligned };
        for r in &rep.records {
            let fwd = SprayConfig { direction: Direction::Forward, ..bwd };
            assert!((r.norm_p - two_norm(&spray_fourier_star(&s, &fwd, r.t).unwrap())).abs() < 1e-9);
            assert!((r.norm_q - two_norm(&spray_fourier_star(&s, &bwd, r.t).unwrap())).abs() < 1e-9);
        }
    }

    #[test]
    fn h_list_order_and_threads_do_not_matter() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let s = ShiftSchedule::new(32, (0..300).map(|_| rng.gen_range(0..32)).collect()).unwrap();
        let m = lmap(&[(1, 100), (2, 40), (3, 20)]);
        let a = certify(&s, 0.9, &[1, 2, 3], &m).unwrap();
        let b = certify(&s, 0.9, &[3, 1, 2, 2], &m).unwrap();
        assert_eq!(a, b);
        let mut opts = CertOptions::new(0.9);
        opts.threads = Some(1);
        let c = certify_with(&s, &opts, &[2, 3, 1], &m, true).unwrap();
        opts.threads = Some(3);
        let d = certify_with(&s, &opts, &[2, 3, 1], &m, true).unwrap();
        assert_eq!(a, c);
        assert_eq!(c, d);
    }

    #[test]
    fn marginal_records_are_flagged() {
        // constant window: norm √(N−1) exactly at ε/2 when ε = 2√(N−1)
        let s = ShiftSchedule::new(5, vec![2, 2]).unwrap();
        let eps = 2.0 * 2.0; // √4 = 2
        let rep = certify(&s, eps, &[1], &lmap(&[(1, 2)])).unwrap();
        assert!(rep.records[0].marginal);
    }

    #[test]
    fn csv_layout() {
        let s = ShiftSchedule::new(4, vec![0, 1, 2, 3]).unwrap();
        let rep = certify(&s, 0.5, &[1], &lmap(&[(1, 4)])).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "h,lambda,t,norm_p,norm_q,pass,marginal");
        assert!(lines[1].starts_with("1,4,0,"));
        assert_eq!(lines.last().unwrap(), &"# universal=true eps=0.5");
    }

    #[test]
    fn base_certification() {
        let n = 16;
        let perm = ShiftSchedule::new(n, (0..n as u32).rev().collect()).unwrap();
        let c = certify_base(&perm, 0.5, 4).unwrap();
        assert!(c.norm < 1e-12 && c.pass);
        let constant = ShiftSchedule::new(n, vec![7; 5]).unwrap();
        let c = certify_base(&constant, 0.5, 3).unwrap();
        assert!((c.norm - 15f64.powf(1.0 / 6.0)).abs() < 1e-12);
        assert!(!c.pass);
    }

    #[test]
    fn markov_examples() {
        let n = 8;
        let id = PermSchedule::new(n, vec![(0..n as u32).collect(); 4]).unwrap();
        let v = markov_test(&id, 2, 2, 0).unwrap();
        assert!((v - 2.0 * (n - 1) as f64 / n as f64).abs() < 1e-12);
        let all = ShiftSchedule::new(n, vec![3, 0, 5, 1, 7, 2, 6, 4]).unwrap().to_perm_schedule();
        assert_eq!(markov_test(&all, 1, n, 0).unwrap(), 0.0);
        let big = PermSchedule::new(MARKOV_NODE_LIMIT + 1, vec![(0..MARKOV_NODE_LIMIT as u32 + 1).collect()]).unwrap();
        assert!(matches!(markov_test(&big, 1, 1, 0), Err(Error::TooManyNodes { .. })));
    }

    #[test]
    fn markov_matches_fourier_path_on_shift_schedules() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let n = rng.gen_range(4..40);
            let (h, lambda) = (rng.gen_range(1..4), rng.gen_range(1..6));
            let s = ShiftSchedule::new(n, (0..h * lambda + 3).map(|_| rng.gen_range(0..n as u32)).collect()).unwrap();
            let t = rng.gen_range(0..10);
            let cfg = SprayConfig { hop_count: h, phase_len: lambda, direction: Direction::Forward, start_set: StartSet::All };
            let tv = tv_to_uniform(&spray_distribution(&s, &cfg, t).unwrap());
            let m = markov_test(&s.to_perm_schedule(), h, lambda, t).unwrap();
            assert!((tv - m).abs() < 1e-8);
        }
    }
}
