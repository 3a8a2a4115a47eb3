//! Domain types: schedules over the cyclic group Z/(N), probability vectors,
//! Fourier coefficient vectors, spray parameters and permutation demands.
//!
//! Also owns the `orns/v1` text format for schedules.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for "sums to one" checks.
pub const SUM_TOL: f64 = 1e-9;

/// A periodic shift connection schedule: at absolute time `t` node `j`
/// is connected to `j + shifts[t mod T]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSchedule {
    n_nodes: usize,
    shifts: Vec<u32>,
}

impl ShiftSchedule {
    /// Builds a schedule, rejecting shifts outside `0..n_nodes`.
    pub fn new(n_nodes: usize, shifts: Vec<u32>) -> Result<Self> {
        if n_nodes == 0 || n_nodes > u32::MAX as usize {
            return Err(Error::InvalidParameter(format!("n_nodes = {n_nodes}")));
        }
        if shifts.is_empty() {
            return Err(Error::InvalidParameter("period must be at least 1".into()));
        }
        if let Some((k, s)) = shifts.iter().enumerate().find(|(_, &s)| s as usize >= n_nodes) {
            return Err(Error::InvalidParameter(format!(
                "shift {s} at index {k} out of range for N = {n_nodes}"
            )));
        }
        Ok(Self { n_nodes, shifts })
    }

    /// Builds a schedule from arbitrary integers, reducing each modulo N.
    pub fn from_residues<I: IntoIterator<Item = i64>>(n_nodes: usize, shifts: I) -> Result<Self> {
        let n = n_nodes as i64;
        let shifts = shifts.into_iter().map(|s| s.rem_euclid(n.max(1)) as u32).collect();
        Self::new(n_nodes, shifts)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn period(&self) -> usize {
        self.shifts.len()
    }

    pub fn shifts(&self) -> &[u32] {
        &self.shifts
    }

    /// Shift in force at absolute time `t` (cyclic indexing).
    #[inline]
    pub fn shift_at(&self, t: u64) -> u32 {
        self.shifts[(t % self.shifts.len() as u64) as usize]
    }

    /// Destination of `node` across the physical edge at time `t`.
    #[inline]
    pub fn apply(&self, node: usize, t: u64) -> usize {
        (node + self.shift_at(t) as usize) % self.n_nodes
    }

    pub fn to_perm_schedule(&self) -> PermSchedule {
        let n = self.n_nodes;
        let perms = self
            .shifts
            .iter()
            .map(|&s| (0..n).map(|j| ((j + s as usize) % n) as u32).collect())
            .collect();
        PermSchedule { n_nodes: n, perms }
    }

    /// Short stable digest (FNV-1a over N, T and the shifts) used to tag reports.
    pub fn digest(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.n_nodes as u64);
        eat(self.shifts.len() as u64);
        for &s in &self.shifts {
            eat(s as u64);
        }
        format!("{h:016x}")
    }
}

/// A general periodic connection schedule given by explicit permutations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermSchedule {
    n_nodes: usize,
    perms: Vec<Vec<u32>>,
}

impl PermSchedule {
    pub fn new(n_nodes: usize, perms: Vec<Vec<u32>>) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidParameter("n_nodes must be positive".into()));
        }
        if perms.is_empty() {
            return Err(Error::InvalidParameter("period must be at least 1".into()));
        }
        for (k, p) in perms.iter().enumerate() {
            if let Err(msg) = check_bijection(p, n_nodes) {
                return Err(Error::InvalidParameter(format!("permutation {k}: {msg}")));
            }
        }
        Ok(Self { n_nodes, perms })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn period(&self) -> usize {
        self.perms.len()
    }

    pub fn perms(&self) -> &[Vec<u32>] {
        &self.perms
    }

    #[inline]
    pub fn perm_at(&self, t: u64) -> &[u32] {
        &self.perms[(t % self.perms.len() as u64) as usize]
    }
}

fn check_bijection(p: &[u32], n: usize) -> std::result::Result<(), String> {
    if p.len() != n {
        return Err(format!("expected {n} entries, found {}", p.len()));
    }
    let mut seen = vec![false; n];
    for &v in p {
        let v = v as usize;
        if v >= n {
            return Err(format!("entry {v} out of range"));
        }
        if seen[v] {
            return Err(format!("entry {v} repeated; not a bijection"));
        }
        seen[v] = true;
    }
    Ok(())
}

/// Either kind of schedule, as read from a schedule file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Schedule {
    Shift(ShiftSchedule),
    Perm(PermSchedule),
}

impl Schedule {
    pub fn n_nodes(&self) -> usize {
        match self {
            Schedule::Shift(s) => s.n_nodes(),
            Schedule::Perm(p) => p.n_nodes(),
        }
    }

    pub fn period(&self) -> usize {
        match self {
            Schedule::Shift(s) => s.period(),
            Schedule::Perm(p) => p.period(),
        }
    }
}

impl From<ShiftSchedule> for Schedule {
    fn from(s: ShiftSchedule) -> Self {
        Schedule::Shift(s)
    }
}

impl From<PermSchedule> for Schedule {
    fn from(p: PermSchedule) -> Self {
        Schedule::Perm(p)
    }
}

/// Probability vector over Z/(N); `mass[k] = Pr(X = k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDistribution {
    mass: Vec<f64>,
}

impl GroupDistribution {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidParameter("empty distribution".into()));
        }
        if let Some(&m) = mass.iter().find(|&&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParameter(format!("negative or non-finite mass {m}")));
        }
        let sum = crate::fourier::pairwise_sum(&mass);
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::NotNormalized(sum));
        }
        Ok(Self { mass })
    }

    /// Normalizes nonnegative counts into a distribution.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidParameter("all counts are zero".into()));
        }
        let t = total as f64;
        Self::new(counts.iter().map(|&c| c as f64 / t).collect())
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut mass = vec![0.0; n];
        mass[at % n] = 1.0;
        Self { mass }
    }

    pub fn uniform(n: usize) -> Self {
        Self { mass: vec![1.0 / n as f64; n] }
    }

    pub fn n_nodes(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// The distribution of `-X`.
    pub fn negated(&self) -> Self {
        let n = self.mass.len();
        let mass = (0..n).map(|g| self.mass[(n - g) % n]).collect();
        Self { mass }
    }

    /// The distribution of `X + offset`.
    pub fn shifted(&self, offset: usize) -> Self {
        let n = self.mass.len();
        let mass = (0..n).map(|g| self.mass[(g + n - offset % n) % n]).collect();
        Self { mass }
    }

    pub(crate) fn from_raw(mass: Vec<f64>) -> Self {
        Self { mass }
    }
}

/// Evaluations of a generating polynomial at the N-th roots of unity.
/// When `starred`, index 0 has been forced to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierVector {
    values: Vec<Complex64>,
    starred: bool,
}

impl FourierVector {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values, starred: false }
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn is_starred(&self) -> bool {
        self.starred
    }

    pub fn star(mut self) -> Self {
        if let Some(v) = self.values.first_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        self.starred = true;
        self
    }

    /// Coordinate-wise product.
    pub fn hadamard(&self, other: &FourierVector) -> FourierVector {
        assert_eq!(self.values.len(), other.values.len(), "length mismatch");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        FourierVector { values, starred: self.starred || other.starred }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

/// Which start times a spray protocol (and the certifier) uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartSet {
    /// Multiples of `lambda * h`; only when that divides T.
    Aligned,
    /// Every timestep of the period.
    All,
}

impl StartSet {
    /// Aligned starts when `lambda*h` divides T, every start otherwise.
    pub fn for_period(h: usize, lambda: usize, period: usize) -> Self {
        if period % (h * lambda) == 0 {
            StartSet::Aligned
        } else {
            StartSet::All
        }
    }

    pub fn starts(self, h: usize, lambda: usize, period: usize) -> Vec<u64> {
        match self {
            StartSet::Aligned => (0..period as u64).step_by(h * lambda).collect(),
            StartSet::All => (0..period as u64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SprayConfig {
    pub hop_count: usize,
    pub phase_len: usize,
    pub direction: Direction,
    pub start_set: StartSet,
}

impl SprayConfig {
    /// Config for `schedule`, picking the start set by divisibility.
    pub fn for_schedule(h: usize, lambda: usize, direction: Direction, period: usize) -> Result<Self> {
        let cfg = SprayConfig {
            hop_count: h,
            phase_len: lambda,
            direction,
            start_set: if h == 0 || lambda == 0 {
                StartSet::All
            } else {
                StartSet::for_period(h, lambda, period)
            },
        };
        cfg.validate(period)?;
        Ok(cfg)
    }

    pub fn validate(&self, period: usize) -> Result<()> {
        if self.hop_count == 0 || self.phase_len == 0 {
            return Err(Error::InvalidParameter("hop count and phase length must be >= 1".into()));
        }
        let needed = self.hop_count as u64 * self.phase_len as u64;
        if needed > period as u64 {
            return Err(Error::PhaseOverrun { h: self.hop_count, needed, period });
        }
        if self.start_set == StartSet::Aligned && period as u64 % needed != 0 {
            return Err(Error::InvalidParameter(format!(
                "aligned starts need lambda*h = {needed} to divide T = {period}"
            )));
        }
        Ok(())
    }
}

/// Permutation demand scaled by `rate`: at time t, node a sends `rate` to
/// `perms[t mod len][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSpec {
    rate: f64,
    perms: Vec<Vec<u32>>,
}

impl DemandSpec {
    pub fn new(rate: f64, perm: Vec<u32>) -> Result<Self> {
        Self::time_varying(rate, vec![perm])
    }

    pub fn time_varying(rate: f64, perms: Vec<Vec<u32>>) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!("rate {rate} must be >= 0")));
        }
        let n = perms.first().map(Vec::len).ok_or_else(|| Error::InvalidParameter("no permutation".into()))?;
        for p in &perms {
            check_bijection(p, n).map_err(Error::InvalidParameter)?;
        }
        Ok(Self { rate, perms })
    }

    /// Uniformly random permutation demand, reproducible from `seed`.
    pub fn random(n: usize, rate: f64, seed: u64) -> Result<Self> {
        let mut rng = crate::generators::stream_rng(seed, 0x6465_6d61_6e64);
        let mut perm: Vec<u32> = (0..n as u32).collect();
        perm.shuffle(&mut rng);
        Self::new(rate, perm)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn n_nodes(&self) -> usize {
        self.perms[0].len()
    }

    pub fn perm_at(&self, t: u64) -> &[u32] {
        &self.perms[(t % self.perms.len() as u64) as usize]
    }

    /// Per-source injected amount at time `t`.
    pub fn source_rates(&self, _t: u64) -> Vec<f64> {
        vec![self.rate; self.n_nodes()]
    }

    /// Per-destination received amount for demand released at time `t`.
    pub fn destination_rates(&self, t: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for &b in self.perm_at(t) {
            out[b as usize] += self.rate;
        }
        out
    }
}

/// Optimal latency scale h * N^(1/h).
pub fn lstar(h: u32, n_nodes: u64) -> f64 {
    assert!(h >= 1, "h must be >= 1");
    h as f64 * (n_nodes as f64).powf(1.0 / h as f64)
}

const MAGIC: &str = "orns/v1";

pub fn serialize_schedule(schedule: &Schedule) -> String {
    let mut out = String::new();
    match schedule {
        Schedule::Shift(s) => {
            let _ = writeln!(out, "{MAGIC} shift N={} T={}", s.n_nodes(), s.period());
            for &v in s.shifts() {
                let _ = writeln!(out, "{v}");
            }
        }
        Schedule::Perm(p) => {
            let _ = writeln!(out, "{MAGIC} perm N={} T={}", p.n_nodes(), p.period());
            for row in p.perms() {
                let mut first = true;
                for &v in row {
                    if !first {
                        out.push(' ');
                    }
                    first = false;
                    let _ = write!(out, "{v}");
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn parse_schedule(text: &str) -> Result<Schedule> {
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or_else(|| perr(1, "missing header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != MAGIC {
        return Err(perr(hline, format!("malformed header {header:?}")));
    }
    let kind = fields[1];
    let n = parse_kv(fields[2], "N").ok_or_else(|| perr(hline, format!("malformed header field {:?}", fields[2])))?;
    let t = parse_kv(fields[3], "T").ok_or_else(|| perr(hline, format!("malformed header field {:?}", fields[3])))?;
    if n == 0 || t == 0 {
        return Err(perr(hline, "N and T must be positive".into()));
    }

    let schedule = match kind {
        "shift" => {
            let mut shifts = Vec::with_capacity(t);
            for _ in 0..t {
                let (ln, l) = lines.next().ok_or_else(|| perr(hline, format!("expected {t} shift lines")))?;
                let v: u64 = l.parse().map_err(|_| perr(ln, format!("not a shift: {l:?}")))?;
                if v >= n as u64 {
                    return Err(perr(ln, format!("shift out of range: {v} >= N = {n}")));
                }
                shifts.push(v as u32);
            }
            Schedule::Shift(ShiftSchedule::new(n, shifts).map_err(|e| perr(hline, e.to_string()))?)
        }
        "perm" => {
            let mut perms = Vec::with_capacity(t);
            for _ in 0..t {
                let (ln, l) = lines.next().ok_or_else(|| perr(hline, format!("expected {t} permutation lines")))?;
                let row = l
                    .split_whitespace()
                    .map(|x| x.parse::<u32>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| perr(ln, "non-integer permutation entry".into()))?;
                check_bijection(&row, n).map_err(|m| perr(ln, m))?;
                perms.push(row);
            }
            Schedule::Perm(PermSchedule { n_nodes: n, perms })
        }
        other => return Err(perr(hline, format!("unknown schedule kind {other:?}"))),
    };
    if let Some((ln, _)) = lines.next() {
        return Err(perr(ln, "trailing content after schedule body".into()));
    }
    Ok(schedule)
}

fn parse_kv(field: &str, key: &str) -> Option<usize> {
    let (k, v) = field.split_once('=')?;
    (k == key).then(|| v.parse().ok()).flatten()
}
