//! Spray routing, VLB with leakage, and edge-load accounting.
//!
//! A message from source a released at start t takes one uniformly random
//! hop in each of the forward phases 1..h, reaching intermediate c with
//! probability d_t(c − a), then one hop in each backward phase h+1..2h.
//! `e_t` is the reflected backward spray distribution, so destination b
//! pulls from intermediate c with probability e_t(c − b).
//!
//! Production feasibility uses the dominating flow: forward spray loads plus
//! backward spray loads, scaled by 1/η. [`vlb_leak_tiny`] builds the actual
//! path-level flow with exact rationals on small instances.

use std::collections::BTreeMap;
use std::ops::Add;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{convolve, dist_from_window, pairwise_sum, spray_distribution};
use crate::model::{DemandSpec, Direction, GroupDistribution, ShiftSchedule, SprayConfig, StartSet};

/// Slack on the unit edge capacity.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Largest load map (timesteps × nodes) built explicitly.
pub const MAX_LOAD_CELLS: u64 = 1 << 25;

/// Largest accounting work (row updates) accepted by [`edge_loads`].
pub const MAX_LOAD_WORK: u64 = 4_000_000_000;

/// Forward and reflected backward distributions for one start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartDists {
    pub t: u64,
    pub forward: GroupDistribution,
    pub backward: GroupDistribution,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SprayProtocol {
    pub schedule: ShiftSchedule,
    pub h: usize,
    pub lambda: usize,
    pub start_set: StartSet,
    pub starts: Vec<StartDists>,
    /// Minimum over the stored starts.
    pub eta: f64,
}

fn start_dists(sched: &ShiftSchedule, h: usize, lambda: usize, start_set: StartSet, t: u64) -> Result<StartDists> {
    let fwd = SprayConfig { hop_count: h, phase_len: lambda, direction: Direction::Forward, start_set };
    let bwd = SprayConfig { direction: Direction::Backward, ..fwd };
    let forward = spray_distribution(sched, &fwd, t)?;
    let backward = spray_distribution(sched, &bwd, t)?;
    let eta = compute_eta(&forward, &backward);
    Ok(StartDists { t, forward, backward, eta })
}

/// Protocol over every start of the start set.
pub fn build_spray(sched: &ShiftSchedule, h: usize, lambda: usize) -> Result<SprayProtocol> {
    let cfg = SprayConfig::for_schedule(h, lambda, Direction::Forward, sched.period())?;
    let starts = cfg.start_set.starts(h, lambda, sched.period());
    let cost = starts.len() as u64 * (sched.n_nodes() as u64).pow(2);
    if cost > MAX_LOAD_WORK {
        return Err(Error::TooLarge(format!("{} starts at N = {}", starts.len(), sched.n_nodes())));
    }
    let starts = starts
        .into_iter()
        .map(|t| start_dists(sched, h, lambda, cfg.start_set, t))
        .collect::<Result<Vec<_>>>()?;
    let eta = starts.iter().map(|s| s.eta).fold(f64::INFINITY, f64::min);
    Ok(SprayProtocol { schedule: sched.clone(), h, lambda, start_set: cfg.start_set, starts, eta })
}

/// Protocol restricted to one start `t`, which must lie in the start set.
pub fn build_spray_at(sched: &ShiftSchedule, h: usize, lambda: usize, t: u64) -> Result<SprayProtocol> {
    let cfg = SprayConfig::for_schedule(h, lambda, Direction::Forward, sched.period())?;
    if cfg.start_set == StartSet::Aligned && t % (h * lambda) as u64 != 0 {
        return Err(Error::InvalidParameter(format!("start {t} is not a multiple of lambda*h")));
    }
    let s = start_dists(sched, h, lambda, cfg.start_set, t)?;
    let eta = s.eta;
    Ok(SprayProtocol { schedule: sched.clone(), h, lambda, start_set: cfg.start_set, starts: vec![s], eta })
}

/// Overlap Σ_c min(d(c), e(c − δ)) for every offset δ.
pub fn overlaps_generic<T>(d: &[T], e: &[T]) -> Vec<T>
where
    T: Clone + PartialOrd + Zero + Add<Output = T>,
{
    let n = d.len();
    assert_eq!(n, e.len());
    (0..n)
        .map(|delta| {
            (0..n).fold(T::zero(), |acc, c| {
                let ev = &e[(c + n - delta) % n];
                acc + if d[c] <= *ev { d[c].clone() } else { ev.clone() }
            })
        })
        .collect()
}

/// Minimum overlap over offsets, for any ordered additive scalar.
pub fn compute_eta_generic<T>(d: &[T], e: &[T]) -> T
where
    T: Clone + PartialOrd + Zero + Add<Output = T>,
{
    overlaps_generic(d, e)
        .into_iter()
        .reduce(|a, b| if b < a { b } else { a })
        .expect("nonempty distributions")
}

/// η = min_δ Σ_c min(d(c), e(c − δ)). Zero means some offset pair is
/// disjointly supported.
pub fn compute_eta(d: &GroupDistribution, e: &GroupDistribution) -> f64 {
    eta_by_offset(d, e).into_iter().fold(f64::INFINITY, f64::min)
}

/// Per-offset overlaps η_δ, summed pairwise.
pub fn eta_by_offset(d: &GroupDistribution, e: &GroupDistribution) -> Vec<f64> {
    let (d, e) = (d.mass(), e.mass());
    let n = d.len();
    assert_eq!(n, e.len(), "distributions over different groups");
    let mut buf = vec![0.0; n];
    (0..n)
        .map(|delta| {
            for (c, b) in buf.iter_mut().enumerate() {
                *b = d[c].min(e[(c + n - delta) % n]);
            }
            pairwise_sum(&buf)
        })
        .collect()
}

/// ‖d − e_δ‖₁ with e_δ(c) = e(c − δ).
pub fn l1_offset_distance(d: &GroupDistribution, e: &GroupDistribution, delta: usize) -> f64 {
    let (d, e) = (d.mass(), e.mass());
    let n = d.len();
    let diffs: Vec<f64> = (0..n).map(|c| (d[c] - e[(c + n - delta % n) % n]).abs()).collect();
    pairwise_sum(&diffs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadMode {
    ForwardHalf,
    BackwardHalf,
    CertifiedSum,
}

/// Load on physical edge (i, t) → (i + s_t, t + 1), indexed by
/// (t mod T, source node i).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLoadMap {
    period: usize,
    n_nodes: usize,
    load: Vec<f64>,
}

impl EdgeLoadMap {
    pub fn zeros(period: usize, n_nodes: usize) -> Self {
        Self { period, n_nodes, load: vec![0.0; period * n_nodes] }
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn get(&self, t: u64, node: usize) -> f64 {
        self.load[(t % self.period as u64) as usize * self.n_nodes + node]
    }

    pub fn loads(&self) -> &[f64] {
        &self.load
    }

    pub fn max_load(&self) -> f64 {
        self.load.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_feasible(&self) -> bool {
        self.max_load() <= 1.0 + FEASIBILITY_TOL
    }

    /// The k heaviest edges as (t, source, load), ties broken by (t, source).
    pub fn top_k(&self, k: usize) -> Vec<(u64, usize, f64)> {
        let mut idx: Vec<usize> = (0..self.load.len()).collect();
        let k = k.min(idx.len());
        let cmp = |a: &usize, b: &usize| self.load[*b].total_cmp(&self.load[*a]).then(a.cmp(b));
        if k < idx.len() && k > 0 {
            idx.select_nth_unstable_by(k - 1, cmp);
        }
        idx.truncate(k);
        idx.sort_by(cmp);
        idx.into_iter()
            .map(|j| ((j / self.n_nodes) as u64, j % self.n_nodes, self.load[j]))
            .collect()
    }

    fn scale(&mut self, f: f64) {
        self.load.iter_mut().for_each(|x| *x *= f);
    }

    fn add(&mut self, other: &EdgeLoadMap) {
        self.load.iter_mut().zip(&other.load).for_each(|(a, b)| *a += b);
    }
}

/// Cyclic range additions of per-node vectors, resolved by a prefix sum.
struct RangeAdder {
    period: usize,
    n: usize,
    diff: Vec<f64>,
}

impl RangeAdder {
    fn new(period: usize, n: usize) -> Self {
        Self { period, n, diff: vec![0.0; (period + 1) * n] }
    }

    fn add_row(&mut self, row: usize, v: &[f64], sign: f64) {
        let base = row * self.n;
        for (d, x) in self.diff[base..base + self.n].iter_mut().zip(v) {
            *d += sign * x;
        }
    }

    /// Adds `v` to every timestep in [start, start + len), cyclically.
    fn add(&mut self, start: u64, len: usize, v: &[f64]) {
        let t = self.period as u64;
        let a = (start % t) as usize;
        let b = a + len;
        if b <= self.period {
            self.add_row(a, v, 1.0);
            self.add_row(b, v, -1.0);
        } else {
            self.add_row(a, v, 1.0);
            self.add_row(self.period, v, -1.0);
            self.add_row(0, v, 1.0);
            self.add_row(b - self.period, v, -1.0);
        }
    }

    fn finish(self) -> EdgeLoadMap {
        let mut load = vec![0.0; self.period * self.n];
        let mut acc = vec![0.0; self.n];
        for row in 0..self.period {
            for i in 0..self.n {
                acc[i] += self.diff[row * self.n + i];
                load[row * self.n + i] = acc[i].max(0.0);
            }
        }
        EdgeLoadMap { period: self.period, n_nodes: self.n, load }
    }
}

/// Σ over the injection window of the per-source (or per-destination)
/// amounts released at start `t`.
fn batch_vectors(demand: &DemandSpec, start_set: StartSet, span: u64, period: u64, t: u64) -> (Vec<f64>, Vec<f64>) {
    let window: Vec<u64> = match start_set {
        StartSet::Aligned => (0..span).map(|k| (t + period * span - span + k) % period).collect(),
        StartSet::All => vec![t],
    };
    let n = demand.n_nodes();
    let (mut src, mut dst) = (vec![0.0; n], vec![0.0; n]);
    for tau in window {
        for (s, r) in src.iter_mut().zip(demand.source_rates(tau)) {
            *s += r;
        }
        for (d, r) in dst.iter_mut().zip(demand.destination_rates(tau)) {
            *d += r;
        }
    }
    (src, dst)
}

/// out(i) = Σ_a w(a)·x(i − a), with a constant-weight shortcut.
fn spread(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = w.len();
    if w.iter().all(|&v| v == w[0]) {
        let total = w[0] * pairwise_sum(x);
        out.iter_mut().for_each(|o| *o = total);
        return;
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    for (a, &wa) in w.iter().enumerate() {
        if wa == 0.0 {
            continue;
        }
        for (y, &xy) in x.iter().enumerate() {
            if xy != 0.0 {
                out[(a + y) % n] += wa * xy;
            }
        }
    }
}

/// out(i) = Σ_b w(b)·y(b − i).
fn gather(w: &[f64], y: &[f64], out: &mut [f64]) {
    let n = w.len();
    if w.iter().all(|&v| v == w[0]) {
        let total = w[0] * pairwise_sum(y);
        out.iter_mut().for_each(|o| *o = total);
        return;
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    for (b, &wb) in w.iter().enumerate() {
        if wb == 0.0 {
            continue;
        }
        for (z, &yz) in y.iter().enumerate() {
            if yz != 0.0 {
                out[(b + n - z) % n] += wb * yz;
            }
        }
    }
}

/// Rough row-update count for [`edge_loads`].
pub fn edge_load_work(protocol: &SprayProtocol) -> u64 {
    let n = protocol.schedule.n_nodes() as u64;
    let starts = protocol.start_set.starts(protocol.h, protocol.lambda, protocol.schedule.period()).len() as u64;
    let per_phase = n * (protocol.lambda as u64).min(n) + 4 * n;
    starts * 2 * protocol.h as u64 * per_phase + 2 * protocol.schedule.period() as u64 * n
}

/// Per-edge loads under `demand`, summed over every start of the start set.
///
/// Aligned starts release the demand injected during the preceding window
/// of hΛ timesteps; with every start in use each timestep's demand is
/// released immediately. In phase j the mass x_j(i) at node i is spread
/// evenly over the phase's Λ timesteps, so edge (i, k) carries x_j(i)/Λ.
pub fn edge_loads(protocol: &SprayProtocol, demand: &DemandSpec, mode: LoadMode) -> Result<EdgeLoadMap> {
    let sched = &protocol.schedule;
    let (n, period) = (sched.n_nodes(), sched.period());
    if demand.n_nodes() != n {
        return Err(Error::InvalidParameter("demand and schedule disagree on N".into()));
    }
    if mode == LoadMode::CertifiedSum && !(protocol.eta > 0.0) {
        return Err(Error::DisjointSupport);
    }
    let cells = period as u64 * n as u64;
    if cells > MAX_LOAD_CELLS || edge_load_work(protocol) > MAX_LOAD_WORK {
        return Err(Error::TooLarge(format!(
            "T = {period}, N = {n}, h = {}, lambda = {}",
            protocol.h, protocol.lambda
        )));
    }
    let fwd = matches!(mode, LoadMode::ForwardHalf | LoadMode::CertifiedSum);
    let bwd = matches!(mode, LoadMode::BackwardHalf | LoadMode::CertifiedSum);
    let (h, lambda) = (protocol.h, protocol.lambda);
    let span = (h * lambda) as u64;
    let l = lambda as u64;
    let inv = 1.0 / lambda as f64;
    let starts = protocol.start_set.starts(h, lambda, period);

    let mut adder = RangeAdder::new(period, n);
    let mut v = vec![0.0; n];
    for &t in &starts {
        let (src, dst) = batch_vectors(demand, protocol.start_set, span, period as u64, t);
        let windows: Vec<GroupDistribution> =
            (0..2 * h as u64).map(|j| dist_from_window(sched, t + j * l, lambda, Direction::Forward)).collect();
        if fwd {
            let mut x = GroupDistribution::point_mass(n, 0);
            for j in 0..h {
                spread(&src, x.mass(), &mut v);
                v.iter_mut().for_each(|a| *a *= inv);
                adder.add(t + j as u64 * l, lambda, &v);
                if j + 1 < h {
                    x = convolve(&x, &windows[j]);
                }
            }
        }
        if bwd {
            // rest: offset still to travel from the start of backward phase j
            let mut rest = GroupDistribution::point_mass(n, 0);
            for j in (h..2 * h).rev() {
                rest = convolve(&rest, &windows[j]);
                gather(&dst, rest.mass(), &mut v);
                v.iter_mut().for_each(|a| *a *= inv);
                adder.add(t + j as u64 * l, lambda, &v);
            }
        }
    }
    let mut map = adder.finish();
    if mode == LoadMode::CertifiedSum {
        map.scale(1.0 / protocol.eta);
    }
    Ok(map)
}

/// Forward plus backward spray loads, unscaled.
pub fn raw_sum_loads(protocol: &SprayProtocol, demand: &DemandSpec) -> Result<EdgeLoadMap> {
    let mut f = edge_loads(protocol, demand, LoadMode::ForwardHalf)?;
    f.add(&edge_loads(protocol, demand, LoadMode::BackwardHalf)?);
    Ok(f)
}

/// One concatenated forward+backward path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathRecord {
    /// Absolute timesteps of the 2h physical hops, strictly increasing.
    pub hops: Vec<u64>,
    /// Node occupied just before each hop.
    pub nodes: Vec<usize>,
    pub intermediate: usize,
    /// Edge count from the start to arrival, virtual edges included.
    pub latency: u64,
    pub flow: BigRational,
}

fn check_tiny(sched: &ShiftSchedule, h: usize, lambda: usize) -> Result<()> {
    if sched.n_nodes() > 16 || lambda > 4 || h > 2 || h == 0 || lambda == 0 {
        return Err(Error::InvalidParameter("tiny oracle needs N <= 16, 1 <= lambda <= 4, 1 <= h <= 2".into()));
    }
    let needed = (h * lambda) as u64;
    if needed > sched.period() as u64 {
        return Err(Error::PhaseOverrun { h, needed, period: sched.period() });
    }
    Ok(())
}

/// Hop-time tuples, lexicographic, for h phases starting at `first`.
fn hop_tuples(first: u64, h: usize, lambda: usize) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    for j in 0..h as u64 {
        let phase = first + j * lambda as u64;
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..lambda as u64).map(move |k| {
                    let mut q = p.clone();
                    q.push(phase + k);
                    q
                })
            })
            .collect();
    }
    out
}

fn offset(sched: &ShiftSchedule, hops: &[u64]) -> usize {
    let n = sched.n_nodes() as u64;
    (hops.iter().map(|&k| sched.shift_at(k) as u64).sum::<u64>() % n) as usize
}

fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact forward and reflected backward distributions at start `t`.
pub fn exact_spray_distributions(
    sched: &ShiftSchedule,
    h: usize,
    lambda: usize,
    t: u64,
) -> (Vec<BigRational>, Vec<BigRational>) {
    let n = sched.n_nodes();
    let unit = ratio(1, (lambda as u64).pow(h as u32));
    let mut d = vec![BigRational::zero(); n];
    let mut e = vec![BigRational::zero(); n];
    for p in hop_tuples(t, h, lambda) {
        d[offset(sched, &p)] += &unit;
    }
    for q in hop_tuples(t + (h * lambda) as u64, h, lambda) {
        e[(n - offset(sched, &q)) % n] += &unit;
    }
    (d, e)
}

/// Exact VLB-with-leakage path flows from a to b released at start `t`.
///
/// For each intermediate c, forward paths ending at c tile [0, D(c)] in
/// lexicographic order and backward paths leaving c tile [0, E(c)]; a pair
/// receives the length of the overlap of its two intervals, and everything
/// is divided by η′ = Σ_c min(D(c), E(c)).
pub fn vlb_leak_tiny(sched: &ShiftSchedule, h: usize, lambda: usize, a: usize, b: usize, t: u64) -> Result<Vec<PathRecord>> {
    check_tiny(sched, h, lambda)?;
    let n = sched.n_nodes();
    if a >= n || b >= n {
        return Err(Error::InvalidParameter("endpoint out of range".into()));
    }
    let unit = ratio(1, (lambda as u64).pow(h as u32));
    let mut fwd: BTreeMap<usize, Vec<Vec<u64>>> = BTreeMap::new();
    for p in hop_tuples(t, h, lambda) {
        fwd.entry((a + offset(sched, &p)) % n).or_default().push(p);
    }
    let mut bwd: BTreeMap<usize, Vec<Vec<u64>>> = BTreeMap::new();
    for q in hop_tuples(t + (h * lambda) as u64, h, lambda) {
        bwd.entry((b + n - offset(sched, &q)) % n).or_default().push(q);
    }

    let mut raw: Vec<(Vec<u64>, usize, BigRational)> = Vec::new();
    let mut eta = BigRational::zero();
    for (&c, ps) in &fwd {
        let Some(qs) = bwd.get(&c) else { continue };
        let dc = &unit * BigInt::from(ps.len());
        let ec = &unit * BigInt::from(qs.len());
        eta += if dc <= ec { dc } else { ec };
        // unit-length intervals on both sides: I(P_i) = [i, i+1)·unit, so
        // overlaps are whole units on the diagonal
        for (p, q) in ps.iter().zip(qs) {
            let mut hops = p.clone();
            hops.extend_from_slice(q);
            raw.push((hops, c, unit.clone()));
        }
    }
    if eta.is_zero() {
        return Err(Error::DisjointSupport);
    }
    Ok(raw
        .into_iter()
        .map(|(hops, c, m)| {
            let mut nodes = Vec::with_capacity(hops.len());
            let mut cur = a;
            for &k in &hops {
                nodes.push(cur);
                cur = (cur + sched.shift_at(k) as usize) % n;
            }
            debug_assert_eq!(cur, b);
            let latency = hops.last().expect("h >= 1") + 1 - t;
            PathRecord { hops, nodes, intermediate: c, latency, flow: m / &eta }
        })
        .collect())
}

/// η′ for the pair (a, b) at start t, from path marginals.
pub fn tiny_pair_eta(sched: &ShiftSchedule, h: usize, lambda: usize, a: usize, b: usize, t: u64) -> Result<BigRational> {
    check_tiny(sched, h, lambda)?;
    let n = sched.n_nodes();
    let (d, e) = exact_spray_distributions(sched, h, lambda, t);
    let mut s = BigRational::zero();
    for c in 0..n {
        let dc = &d[(c + n - a) % n];
        let ec = &e[(c + n - b) % n];
        s += if dc <= ec { dc.clone() } else { ec.clone() };
    }
    Ok(s)
}

/// Exact per-edge loads of the path-level protocol under the permutation
/// demand `perm` at `rate`, summed over every start of the start set.
pub fn tiny_edge_loads(
    sched: &ShiftSchedule,
    h: usize,
    lambda: usize,
    perm: &[u32],
    rate: &BigRational,
) -> Result<Vec<BigRational>> {
    check_tiny(sched, h, lambda)?;
    let (n, period) = (sched.n_nodes(), sched.period());
    let start_set = StartSet::for_period(h, lambda, period);
    let batch = match start_set {
        StartSet::Aligned => rate * BigInt::from(h * lambda),
        StartSet::All => rate.clone(),
    };
    let mut loads = vec![BigRational::zero(); period * n];
    for t in start_set.starts(h, lambda, period) {
        for (a, &b) in perm.iter().enumerate() {
            for p in vlb_leak_tiny(sched, h, lambda, a, b as usize, t)? {
                let f = &p.flow * &batch;
                for (&k, &node) in p.hops.iter().zip(&p.nodes) {
                    loads[(k % period as u64) as usize * n + node] += &f;
                }
            }
        }
    }
    Ok(loads)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// First hop to arrival: 2hΛ.
    pub in_flight: u64,
    /// Worst wait for the next start: hΛ − 1 with aligned starts, else 0.
    pub wait: u64,
    pub total: u64,
    /// 2(h+1)Λ.
    pub stated_bound: u64,
}

pub fn max_latency(protocol: &SprayProtocol) -> LatencyReport {
    latency_for(protocol.h, protocol.lambda, protocol.start_set)
}

pub fn latency_for(h: usize, lambda: usize, start_set: StartSet) -> LatencyReport {
    let span = (h * lambda) as u64;
    let in_flight = 2 * span;
    let wait = match start_set {
        StartSet::Aligned => span - 1,
        StartSet::All => 0,
    };
    LatencyReport { in_flight, wait, total: in_flight + wait, stated_bound: 2 * (h as u64 + 1) * lambda as u64 }
}

/// Longest positive-flow path among tiny-oracle records.
pub fn max_path_latency(paths: &[PathRecord]) -> u64 {
    paths.iter().filter(|p| !p.flow.is_zero()).map(|p| p.latency).max().unwrap_or(0)
}

/// Nearest f64 to an exact value.
pub fn to_f64(x: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::tv_to_uniform;
    use num_traits::One;
    use rand::{Rng, SeedableRng};

    fn sched(n: usize, s: Vec<u32>) -> ShiftSchedule {
        ShiftSchedule::new(n, s).unwrap()
    }

    #[test]
    fn uniform_spray_has_unit_eta() {
        let n = 8;
        let s = sched(n, vec![3, 0, 5, 1, 7, 2, 6, 4]);
        let p = build_spray(&s, 1, n).unwrap();
        assert_eq!(p.start_set, StartSet::Aligned);
        for st in &p.starts {
            assert!(st.forward.mass().iter().all(|&m| (m - 1.0 / n as f64).abs() < 1e-15));
        }
        assert!((p.eta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_shifts_give_point_masses() {
        let s = sched(6, vec![0; 4]);
        let p = build_spray(&s, 2, 1).unwrap();
        let st = &p.starts[0];
        assert_eq!(st.forward, GroupDistribution::point_mass(6, 0));
        // overlap of two point masses: 1 at δ = 0, 0 elsewhere
        assert_eq!(p.eta, 0.0);
        assert_eq!(eta_by_offset(&st.forward, &st.backward)[0], 1.0);
    }

    #[test]
    fn eta_examples_and_identity() {
        let u = GroupDistribution::uniform(7);
        assert!(eta_by_offset(&u, &u).iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let d = GroupDistribution::point_mass(5, 1);
        let e = GroupDistribution::point_mass(5, 3);
        assert_eq!(eta_by_offset(&d, &e)[0], 0.0);
        assert_eq!(compute_eta(&d, &e), 0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.gen_range(2..20);
            let rd: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let re: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let (sd, se) = (rd.iter().sum::<f64>(), re.iter().sum::<f64>());
            let d = GroupDistribution::new(rd.iter().map(|x| x / sd).collect()).unwrap();
            let e = GroupDistribution::new(re.iter().map(|x| x / se).collect()).unwrap();
            for (delta, eta) in eta_by_offset(&d, &e).into_iter().enumerate() {
                assert!((2.0 - 2.0 * eta - l1_offset_distance(&d, &e, delta)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eta_lower_bound_from_tv() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let n = rng.gen_range(4..30);
            let s = sched(n, (0..40).map(|_| rng.gen_range(0..n as u32)).collect());
            let p = build_spray_at(&s, 2, 7, 3).unwrap();
            let st = &p.starts[0];
            let eps = 2.0 * tv_to_uniform(&st.forward).max(tv_to_uniform(&st.backward));
            assert!(st.eta >= 1.0 - eps - 1e-12);
        }
    }

    #[test]
    fn uniform_loads_are_exactly_one() {
        let n = 16;
        let s = sched(n, (0..n as u32).map(|k| k * 5 % 16).collect());
        let p = build_spray(&s, 1, n).unwrap();
        let d = DemandSpec::random(n, 0.5, 4).unwrap();
        let m = edge_loads(&p, &d, LoadMode::CertifiedSum).unwrap();
        assert!(m.loads().iter().all(|&x| (x - 1.0).abs() < 1e-8));
        let f = edge_loads(&p, &d, LoadMode::ForwardHalf).unwrap();
        assert!(f.loads().iter().all(|&x| (x - 0.5).abs() < 1e-12));
        let z = edge_loads(&p, &DemandSpec::random(n, 0.0, 4).unwrap(), LoadMode::CertifiedSum).unwrap();
        assert_eq!(z.max_load(), 0.0);
    }

    /// Explicit per-source propagation agrees with the shift-symmetric
    /// accounting, including non-uniform source weights.
    #[test]
    fn loads_match_per_source_simulation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &(n, period, h, lambda) in &[(5usize, 12usize, 2usize, 3usize), (6, 10, 2, 2), (4, 9, 1, 4)] {
            let s = sched(n, (0..period).map(|_| rng.gen_range(0..n as u32)).collect());
            let p = build_spray(&s, h, lambda).unwrap();
            let d = DemandSpec::random(n, 0.1, 9).unwrap();
            let got = raw_sum_loads(&p, &d).unwrap();
            let mut want = vec![0.0; period * n];
            for t in p.start_set.starts(h, lambda, period) {
                let batch = match p.start_set {
                    StartSet::Aligned => 0.1 * (h * lambda) as f64,
                    StartSet::All => 0.1,
                };
                for a in 0..n {
                    let b = d.perm_at(0)[a] as usize;
                    let w = batch / (lambda as f64).powi(2 * h as i32);
                    for hops in hop_tuples(t, 2 * h, lambda) {
                        let (fw, bw) = hops.split_at(h);
                        let mut cur = a;
                        for &k in fw {
                            want[(k % period as u64) as usize * n + cur] += w;
                            cur = (cur + s.shift_at(k) as usize) % n;
                        }
                        // b pulls from b − offset
                        let mut cur = (b + n - offset(&s, bw)) % n;
                        for &k in bw {
                            want[(k % period as u64) as usize * n + cur] += w;
                            cur = (cur + s.shift_at(k) as usize) % n;
                        }
                        assert_eq!(cur, b);
                    }
                }
            }
            for (g, w) in got.loads().iter().zip(&want) {
                assert!((g - w).abs() < 1e-9, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn tiny_single_path() {
        let s = sched(5, vec![2, 4]);
        let paths = vlb_leak_tiny(&s, 1, 1, 0, 1, 0).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].flow, BigRational::one());
        assert_eq!(paths[0].hops, vec![0, 1]);
        assert_eq!(paths[0].intermediate, 2);
    }

    #[test]
    fn tiny_flows_sum_to_one_and_match_marginals() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.gen_range(2..=16);
            let (h, lambda) = (rng.gen_range(1..=2), rng.gen_range(1..=4));
            let s = sched(n, (0..2 * h * lambda + 1).map(|_| rng.gen_range(0..n as u32)).collect());
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let Ok(paths) = vlb_leak_tiny(&s, h, lambda, a, b, 0) else { continue };
            let total: BigRational = paths.iter().map(|p| p.flow.clone()).sum();
            assert_eq!(total, BigRational::one());
            let eta = tiny_pair_eta(&s, h, lambda, a, b, 0).unwrap();
            let (d, e) = exact_spray_distributions(&s, h, lambda, 0);
            for c in 0..n {
                let got: BigRational = paths.iter().filter(|p| p.intermediate == c).map(|p| p.flow.clone()).sum();
                let dc = &d[(c + n - a) % n];
                let ec = &e[(c + n - b) % n];
                let m = if dc <= ec { dc.clone() } else { ec.clone() };
                assert_eq!(got, m / &eta);
            }
            for p in &paths {
                assert!(p.hops.windows(2).all(|w| w[0] < w[1]));
                assert!(p.latency <= 2 * (h * lambda) as u64);
            }
        }
    }

    #[test]
    fn latency_reports() {
        let r = latency_for(1, 64, StartSet::Aligned);
        assert!(r.in_flight <= 128 && r.total <= 192);
        let r = latency_for(3, 1, StartSet::Aligned);
        assert_eq!(r.in_flight, 6);
        assert_eq!(r.total, 6 + 2);
    }

    #[test]
    fn top_k_order() {
        let mut m = EdgeLoadMap::zeros(3, 2);
        m.load = vec![0.1, 0.5, 0.5, 0.2, 0.0, 0.9];
        assert_eq!(m.top_k(3), vec![(2, 1, 0.9), (0, 1, 0.5), (1, 0, 0.5)]);
    }
}
