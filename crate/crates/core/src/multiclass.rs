//! Feasibility arithmetic for several traffic classes sharing one schedule.
//!
//! Class h routes with h-hop spraying at phase length Λ_h. With fixed rates
//! the classes fit when Σ_h 2h·r_h/(1−ε) ≤ 1. With time-varying rates every
//! time t* must satisfy Σ_h Σ_{t ∈ (t* − 2hΛ_h, t*]} r_{h,t}/((1−ε)Λ_h) ≤ 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack on the unit bound.
pub const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedCheck {
    pub feasible: bool,
    pub sum: f64,
    /// 1 − sum.
    pub slack: f64,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps >= 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eps = {eps} must lie in [0, 1)")))
    }
}

pub fn check_fixed_rates(eps: f64, rates: &BTreeMap<usize, f64>) -> Result<FixedCheck> {
    check_eps(eps)?;
    let mut terms = Vec::with_capacity(rates.len());
    for (&h, &r) in rates {
        if h == 0 {
            return Err(Error::InvalidParameter("hop count 0".into()));
        }
        let cap = (1.0 - eps) / (2.0 * h as f64);
        if !(r >= 0.0 && r <= cap * (1.0 + TOL)) {
            return Err(Error::InvalidParameter(format!("rate {r} for h = {h} outside [0, {cap}]")));
        }
        terms.push(2.0 * h as f64 * r / (1.0 - eps));
    }
    let sum = crate::fourier::pairwise_sum(&terms);
    Ok(FixedCheck { feasible: sum <= 1.0 + TOL, sum, slack: 1.0 - sum })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeVaryingCheck {
    pub feasible: bool,
    /// First t* whose windowed sum exceeds 1.
    pub first_violation: Option<u64>,
    pub max_sum: f64,
    pub argmax: u64,
}

/// Running sum with Neumaier compensation, so long add/remove sequences do
/// not drift.
#[derive(Default, Clone, Copy)]
struct RunningSum {
    sum: f64,
    comp: f64,
}

impl RunningSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `rates[h][t]` is r_{h,t} for t in 0..horizon; entries beyond the vector
/// and times before 0 count as zero. Every t* in 0..horizon is checked.
pub fn check_time_varying(
    eps: f64,
    lambda_map: &BTreeMap<usize, usize>,
    rates: &BTreeMap<usize, Vec<f64>>,
    horizon: u64,
) -> Result<TimeVaryingCheck> {
    check_eps(eps)?;
    struct Class<'a> {
        window: u64,
        scale: f64,
        r: &'a [f64],
        acc: RunningSum,
    }
    let mut classes = Vec::new();
    for (&h, r) in rates {
        let lambda = *lambda_map
            .get(&h)
            .ok_or_else(|| Error::InvalidParameter(format!("no phase length for h = {h}")))?;
        if h == 0 || lambda == 0 {
            return Err(Error::InvalidParameter("h and lambda must be >= 1".into()));
        }
        if let Some(bad) = r.iter().find(|&&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate {bad} for h = {h} must be >= 0")));
        }
        classes.push(Class {
            window: 2 * (h * lambda) as u64,
            scale: 1.0 / ((1.0 - eps) * lambda as f64),
            r,
            acc: RunningSum::default(),
        });
    }
    let at = |r: &[f64], t: u64| r.get(t as usize).copied().unwrap_or(0.0);
    let mut out = TimeVaryingCheck { feasible: true, first_violation: None, max_sum: 0.0, argmax: 0 };
    for t in 0..horizon {
        let mut total = 0.0;
        for c in classes.iter_mut() {
            c.acc.add(at(c.r, t));
            if t >= c.window {
                c.acc.add(-at(c.r, t - c.window));
            }
            total += c.acc.value() * c.scale;
        }
        if total > out.max_sum {
            out.max_sum = total;
            out.argmax = t;
        }
        if total > 1.0 + TOL && out.first_violation.is_none() {
            out.first_violation = Some(t);
            out.feasible = false;
        }
    }
    Ok(out)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.split(',').map(str::trim).collect::<Vec<_>>()))
        // a header row is any row whose first field is not a number
        .filter(|(_, f)| f[0].parse::<f64>().is_ok())
}

fn field<T: std::str::FromStr>(line: usize, f: &str, what: &str) -> Result<T> {
    f.parse().map_err(|_| Error::Parse { line, msg: format!("bad {what} {f:?}") })
}

/// `h,rate` rows.
pub fn parse_fixed_rates(text: &str) -> Result<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    for (line, f) in data_lines(text) {
        if f.len() != 2 {
            return Err(Error::Parse { line, msg: "expected h,rate".into() });
        }
        let h: usize = field(line, f[0], "hop count")?;
        let r: f64 = field(line, f[1], "rate")?;
        if out.insert(h, r).is_some() {
            return Err(Error::Parse { line, msg: format!("duplicate h = {h}") });
        }
    }
    Ok(out)
}

/// `h,t,rate` rows, returned as dense per-class vectors covering 0..=max t,
/// together with that length.
pub fn parse_time_varying_rates(text: &str) -> Result<(BTreeMap<usize, Vec<f64>>, u64)> {
    let mut sparse: BTreeMap<usize, BTreeMap<u64, f64>> = BTreeMap::new();
    let mut len = 0u64;
    for (line, f) in data_lines(text) {
        if f.len() != 3 {
            return Err(Error::Parse { line, msg: "expected h,t,rate".into() });
        }
        let h: usize = field(line, f[0], "hop count")?;
        let t: u64 = field(line, f[1], "timestep")?;
        let r: f64 = field(line, f[2], "rate")?;
        if sparse.entry(h).or_default().insert(t, r).is_some() {
            return Err(Error::Parse { line, msg: format!("duplicate (h, t) = ({h}, {t})") });
        }
        len = len.max(t + 1);
    }
    let dense = sparse
        .into_iter()
        .map(|(h, m)| {
            let mut v = vec![0.0; len as usize];
            for (t, r) in m {
                v[t as usize] = r;
            }
            (h, v)
        })
        .collect();
    Ok((dense, len))
}

/// Two-class handoff: class 1 at (1−ε)/2 before `t_star`, then class 2
/// starting at (1−ε)Λ₂/(2Λ₁) and stepping up by that amount every 4Λ₂
/// timesteps until it reaches (1−ε)/4.
pub fn handoff_rates(eps: f64, lambda1: usize, lambda2: usize, t_star: u64, horizon: u64) -> BTreeMap<usize, Vec<f64>> {
    let inc = (1.0 - eps) * lambda2 as f64 / (2.0 * lambda1 as f64);
    let cap = (1.0 - eps) / 4.0;
    let step = 4 * lambda2 as u64;
    let class1 = (0..horizon).map(|t| if t < t_star { (1.0 - eps) / 2.0 } else { 0.0 }).collect();
    let class2 = (0..horizon)
        .map(|t| if t < t_star { 0.0 } else { (inc * ((t - t_star) / step + 1) as f64).min(cap) })
        .collect();
    BTreeMap::from([(1, class1), (2, class2)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn fixed_examples() {
        let c = check_fixed_rates(0.5, &BTreeMap::from([(3, 0.5 / 6.0)])).unwrap();
        assert!(c.feasible && c.slack.abs() < 1e-12);
        let z = check_fixed_rates(0.5, &BTreeMap::from([(1, 0.0), (4, 0.0)])).unwrap();
        assert!(z.feasible && z.sum == 0.0);
        let two = check_fixed_rates(0.5, &BTreeMap::from([(1, 0.125), (2, 0.0625)])).unwrap();
        assert_eq!(two.sum, 1.0);
        assert!(two.feasible);
        assert!(check_fixed_rates(0.5, &BTreeMap::from([(1, 0.3)])).is_err());
        assert!(check_fixed_rates(0.5, &BTreeMap::from([(1, -0.1)])).is_err());
    }

    #[test]
    fn constant_rates_reduce_to_fixed() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let eps = rng.gen_range(0.05..0.9);
            let mut fixed = BTreeMap::new();
            let mut lambdas = BTreeMap::new();
            for h in 1..=rng.gen_range(1..4) {
                fixed.insert(h, rng.gen_range(0.0..(1.0 - eps) / (2.0 * h as f64)));
                lambdas.insert(h, rng.gen_range(1..20));
            }
            let horizon = 200;
            let tv: BTreeMap<usize, Vec<f64>> = fixed.iter().map(|(&h, &r)| (h, vec![r; horizon])).collect();
            let a = check_fixed_rates(eps, &fixed).unwrap();
            let b = check_time_varying(eps, &lambdas, &tv, horizon as u64).unwrap();
            assert_eq!(a.feasible, b.feasible);
            assert!((a.sum - b.max_sum).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_and_violating_rates() {
        let l = BTreeMap::from([(1, 4)]);
        let ok = check_time_varying(0.5, &l, &BTreeMap::from([(1, vec![0.0; 50])]), 50).unwrap();
        assert!(ok.feasible);
        let mut r = vec![0.0; 50];
        r[10..18].iter_mut().for_each(|x| *x = 0.25);
        r[18] = 0.3;
        let bad = check_time_varying(0.5, &l, &BTreeMap::from([(1, r)]), 50).unwrap();
        assert_eq!(bad.first_violation, Some(18));
    }

    #[test]
    fn handoff_is_feasible() {
        let (l1, l2) = (64, 8);
        let t_star = 2 * l1 as u64;
        let horizon = t_star + 4 * l1 as u64;
        let rates = handoff_rates(0.5, l1, l2, t_star, horizon);
        let c = check_time_varying(0.5, &BTreeMap::from([(1, l1), (2, l2)]), &rates, horizon).unwrap();
        assert!(c.feasible, "{c:?}");
        assert!((rates[&2][(t_star + 2 * l1 as u64) as usize] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn csv_parsing() {
        let f = parse_fixed_rates("h,rate\n1,0.125\n# note\n2, 0.0625\n").unwrap();
        assert_eq!(f, BTreeMap::from([(1, 0.125), (2, 0.0625)]));
        assert!(matches!(parse_fixed_rates("1,0.1\n1,0.2\n"), Err(Error::Parse { line: 2, .. })));
        let (tv, len) = parse_time_varying_rates("h,t,rate\n1,0,0.1\n2,3,0.2\n").unwrap();
        assert_eq!(len, 4);
        assert_eq!(tv[&1], vec![0.1, 0.0, 0.0, 0.0]);
        assert_eq!(tv[&2], vec![0.0, 0.0, 0.0, 0.2]);
        assert!(parse_time_varying_rates("1,x,0.1\n").is_err());
    }
}
