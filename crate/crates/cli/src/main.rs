//! `orns`: generate, certify and simulate shift connection schedules.
//!
//! Exit codes: 0 on success, 1 on a negative verdict (certification failure,
//! infeasible load or rates), 2 on usage, parse or parameter errors.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::json;

use orns_core::certifier::{self, CertOptions};
use orns_core::discrepancy;
use orns_core::generators::{self, BaseSampler, GenMeta};
use orns_core::multiclass;
use orns_core::routing::{self, LoadMode};
use orns_core::{parse_schedule, serialize_schedule, DemandSpec, Error, Schedule, ShiftSchedule};

#[derive(Parser)]
#[command(name = "orns", version, about = "Oblivious reconfigurable network schedules")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// T i.i.d. uniform shifts.
    GenRandom(GenRandom),
    /// Convolution schedule built from a certified base window.
    GenConvolve(GenConvolve),
    /// Deterministic schedule from recursive discrepancy partitions.
    GenDerand(GenDerand),
    /// Powers of a primitive root modulo a prime N.
    GenPrimitiveRoot(GenPrimitiveRoot),
    /// Fourier 2-norm universality test; CSV on stdout.
    Certify(Certify),
    /// 2H-norm test of a base window.
    CertifyBase(CertifyBase),
    /// Total variation of the h-hop spray Markov matrix from uniform.
    MarkovTest(MarkovTest),
    /// Edge loads of VLB with leakage under a permutation demand.
    Simulate(Simulate),
    /// Feasibility of several traffic classes sharing one schedule.
    MulticlassCheck(MulticlassCheck),
}

#[derive(Args)]
struct Output {
    /// Schedule file to write.
    #[arg(long)]
    out: PathBuf,
    /// Metadata sidecar; defaults to `<out>.meta.jsonl`.
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Args)]
struct GenRandom {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    t: usize,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampler {
    Uniform,
    Permutation,
}

#[derive(Args)]
struct GenConvolve {
    #[arg(long)]
    n: usize,
    /// Base window length Λ.
    #[arg(long)]
    lambda: usize,
    /// Number of digits H; the period is Λ^H.
    #[arg(long = "big-h")]
    big_h: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    max_retries: usize,
    #[arg(long, value_enum, default_value_t = Sampler::Uniform)]
    sampler: Sampler,
    #[arg(long, default_value_t = generators::DEFAULT_PERIOD_CAP)]
    period_cap: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GenDerand {
    /// Number of nodes, a power of two.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    eps: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GenPrimitiveRoot {
    /// Prime number of nodes.
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Threads {
    /// Worker threads; falls back to ORNS_THREADS, then available parallelism.
    #[arg(long, env = "ORNS_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct Certify {
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    eps: f64,
    /// Hop counts: `3`, `1..10` or `1,2,4`.
    #[arg(long, value_parser = parse_h_list)]
    h: HList,
    /// `auto` or `h=value` pairs such as `1=1024,2=64`.
    #[arg(long, default_value = "auto")]
    lambda: String,
    #[arg(long, default_value_t = certifier::DEFAULT_SLACK)]
    slack: f64,
    /// Print one row per hop count instead of one per start.
    #[arg(long)]
    summary: bool,
    #[command(flatten)]
    threads: Threads,
}

#[derive(Args)]
struct CertifyBase {
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long = "big-h")]
    big_h: usize,
}

#[derive(Args)]
struct MarkovTest {
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    h: usize,
    /// `auto` (needs --eps) or an explicit phase length.
    #[arg(long, default_value = "auto")]
    lambda: String,
    /// When given, exit 1 if the distance exceeds ε/2.
    #[arg(long)]
    eps: Option<f64>,
    /// Start timestep.
    #[arg(long, default_value_t = 0)]
    t: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    CertifiedSum,
    ForwardHalf,
    BackwardHalf,
}

#[derive(Args)]
struct Simulate {
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    h: usize,
    #[arg(long)]
    eps: f64,
    /// `auto` or an explicit phase length.
    #[arg(long, default_value = "auto")]
    lambda: String,
    /// `auto` for (1−ε)/(2h), or a per-node rate.
    #[arg(long, default_value = "auto")]
    rate: String,
    /// `perm:seed=<n>` or `perm:identity`.
    #[arg(long)]
    demand: String,
    /// Only inject at this start instead of at every start.
    #[arg(long)]
    start: Option<u64>,
    #[arg(long, value_enum, default_value_t = Mode::CertifiedSum)]
    mode: Mode,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
}

#[derive(Args)]
struct MulticlassCheck {
    /// CSV with `h,rate` rows (fixed) or `h,t,rate` rows (time-varying).
    #[arg(long)]
    rates: PathBuf,
    #[arg(long)]
    eps: f64,
    /// Phase lengths for time-varying rates: `auto` (needs --n) or `h=value` pairs.
    #[arg(long, default_value = "auto")]
    lambda: String,
    #[arg(long)]
    n: Option<usize>,
    /// Last t* checked is horizon − 1; defaults to the rate table length.
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Clone, Debug)]
struct HList(Vec<usize>);

fn parse_h_list(s: &str) -> Result<HList, String> {
    let bad = || format!("bad hop list {s:?}");
    let mut out = Vec::new();
    for part in s.split(',') {
        if let Some((a, b)) = part.split_once("..") {
            let lo: usize = a.trim().parse().map_err(|_| bad())?;
            let hi: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            if lo > hi {
                return Err(bad());
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.trim().parse().map_err(|_| bad())?);
        }
    }
    if out.contains(&0) {
        return Err("hop counts start at 1".into());
    }
    Ok(HList(out))
}

/// Failure modes mapped to exit codes.
enum Fail {
    /// Exit 1.
    Negative(String),
    /// Exit 2; `usage` adds the usage line of the subcommand.
    Usage { msg: String, usage: bool },
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Usage { msg: e.to_string(), usage: false }
    }
}

impl From<io::Error> for Fail {
    fn from(e: io::Error) -> Self {
        Fail::Usage { msg: e.to_string(), usage: false }
    }
}

fn usage(msg: impl Into<String>) -> Fail {
    Fail::Usage { msg: msg.into(), usage: true }
}

type CmdResult = Result<bool, Fail>;

fn read_schedule(path: &Path) -> Result<Schedule, Fail> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    parse_schedule(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_shift(path: &Path) -> Result<ShiftSchedule, Fail> {
    match read_schedule(path)? {
        Schedule::Shift(s) => Ok(s),
        Schedule::Perm(_) => Err(usage(format!("{}: a shift schedule is required", path.display()))),
    }
}

fn lambda_map(spec: &str, hs: &[usize], eps: f64, n: Option<usize>) -> Result<BTreeMap<usize, usize>, Fail> {
    if spec == "auto" {
        let n = n.ok_or_else(|| usage("--lambda auto needs the node count"))?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(usage(format!("eps = {eps} must lie in (0, 1)")));
        }
        return Ok(hs.iter().map(|&h| (h, certifier::lambda_for_h(eps, h, n) as usize)).collect());
    }
    let mut out = BTreeMap::new();
    for pair in spec.split(',') {
        let (h, v) = pair.split_once('=').ok_or_else(|| usage(format!("bad lambda pair {pair:?}")))?;
        let h: usize = h.trim().parse().map_err(|_| usage(format!("bad hop count in {pair:?}")))?;
        let v: usize = v.trim().parse().map_err(|_| usage(format!("bad phase length in {pair:?}")))?;
        out.insert(h, v);
    }
    Ok(out)
}

fn single_lambda(spec: &str, h: usize, eps: Option<f64>, n: usize) -> Result<usize, Fail> {
    if spec == "auto" {
        let eps = eps.ok_or_else(|| usage("--lambda auto needs --eps"))?;
        return Ok(lambda_map(spec, &[h], eps, Some(n))?[&h]);
    }
    if let Ok(v) = spec.parse() {
        return Ok(v);
    }
    lambda_map(spec, &[h], 0.0, None)?
        .get(&h)
        .copied()
        .ok_or_else(|| usage(format!("no phase length for h = {h}")))
}

fn write_outputs(out: &Output, sched: &ShiftSchedule, meta: GenMeta) -> CmdResult {
    fs::write(&out.out, serialize_schedule(&Schedule::Shift(sched.clone())))?;
    let meta_path = out.meta.clone().unwrap_or_else(|| {
        let mut p = out.out.clone().into_os_string();
        p.push(".meta.jsonl");
        p.into()
    });
    fs::write(meta_path, meta.to_json_line())?;
    eprintln!("wrote {} (N = {}, T = {})", out.out.display(), sched.n_nodes(), sched.period());
    Ok(true)
}

fn gen_random(a: GenRandom) -> CmdResult {
    let s = generators::gen_random(a.n, a.t, a.seed)?;
    let meta = GenMeta {
        construction: "random".into(),
        params: json!({ "n": a.n, "t": a.t }),
        seed: Some(a.seed),
        retries: None,
        levels: None,
        discrepancy: None,
        digest: s.digest(),
    };
    write_outputs(&a.output, &s, meta)
}

fn gen_convolve(a: GenConvolve) -> CmdResult {
    let sampler = match a.sampler {
        Sampler::Uniform => BaseSampler::Uniform,
        Sampler::Permutation => BaseSampler::Permutation,
    };
    let base = match generators::gen_base_certified_with(a.n, a.lambda, a.big_h, a.eps, a.seed, a.max_retries, sampler) {
        Err(Error::RetriesExhausted(k)) => return Err(Fail::Negative(format!("no base window passed in {k} samples"))),
        r => r?,
    };
    let s = generators::gen_convolution(&base.schedule, a.big_h, a.period_cap)?;
    let sampler_name = match a.sampler {
        Sampler::Uniform => "uniform",
        Sampler::Permutation => "permutation",
    };
    let meta = GenMeta {
        construction: "convolution".into(),
        params: json!({
            "n": a.n,
            "lambda": a.lambda,
            "big_h": a.big_h,
            "eps": a.eps,
            "sampler": sampler_name,
            "base_norm": base.cert.norm,
            "base_threshold": base.cert.threshold,
        }),
        seed: Some(a.seed),
        retries: Some(base.retries),
        levels: None,
        discrepancy: None,
        digest: s.digest(),
    };
    write_outputs(&a.output, &s, meta)
}

fn gen_derand(a: GenDerand) -> CmdResult {
    if !a.n.is_power_of_two() || a.n < 2 {
        return Err(usage(format!("N = {} must be a power of two >= 2", a.n)));
    }
    let (s, tree) = match generators::gen_derand(a.n.trailing_zeros(), a.eps) {
        Err(e @ Error::BoundViolation { .. }) => return Err(Fail::Negative(e.to_string())),
        r => r?,
    };
    let meta = GenMeta {
        construction: "derand".into(),
        params: json!({ "n": a.n, "eps": a.eps }),
        seed: None,
        retries: None,
        levels: Some(tree.levels.clone()),
        discrepancy: Some(json!({
            "backend": discrepancy::BACKEND,
            "k_impl": tree.k_impl,
            "constant_c": tree.constant_c,
        })),
        digest: s.digest(),
    };
    write_outputs(&a.output, &s, meta)
}

fn gen_primitive_root(a: GenPrimitiveRoot) -> CmdResult {
    let s = generators::gen_primitive_root(a.n)?;
    let meta = GenMeta {
        construction: "primitive_root".into(),
        params: json!({ "n": a.n, "g": generators::primitive_root(a.n as u64)? }),
        seed: None,
        retries: None,
        levels: None,
        discrepancy: None,
        digest: s.digest(),
    };
    write_outputs(&a.output, &s, meta)
}

fn certify(a: Certify, out: &mut dyn Write) -> CmdResult {
    let s = read_shift(&a.schedule)?;
    let lambdas = lambda_map(&a.lambda, &a.h.0, a.eps, Some(s.n_nodes()))?;
    let opts = CertOptions { eps: a.eps, slack: a.slack, threads: a.threads.threads };
    if opts.threads == Some(0) {
        return Err(usage("--threads must be >= 1"));
    }
    let report = match certifier::certify_with(&s, &opts, &a.h.0, &lambdas, !a.summary) {
        Err(e @ Error::PhaseOverrun { .. }) => return Err(Fail::Negative(e.to_string())),
        r => r?,
    };
    if !report.period_within_random_bound {
        eprintln!("note: T = {} exceeds N^2/(8 log2 N) for N = {}", s.period(), s.n_nodes());
    }
    if a.summary {
        writeln!(out, "h,lambda,start_set,starts,max_norm_p,max_norm_q,worst_t,failures,marginal")?;
        for h in &report.summaries {
            let set = match h.start_set {
                orns_core::StartSet::Aligned => "aligned",
                orns_core::StartSet::All => "all",
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                h.h, h.lambda, set, h.starts, h.max_norm_p, h.max_norm_q, h.worst_t, h.failures, h.marginal
            )?;
        }
        writeln!(out, "# universal={} eps={}", report.universal, report.eps)?;
    } else {
        report.write_csv(&mut *out)?;
    }
    Ok(report.universal)
}

fn certify_base(a: CertifyBase, out: &mut dyn Write) -> CmdResult {
    let s = read_shift(&a.schedule)?;
    let c = certifier::certify_base(&s, a.eps, a.big_h)?;
    writeln!(out, "big_h,norm,threshold,pass")?;
    writeln!(out, "{},{},{},{}", c.big_h, c.norm, c.threshold, c.pass)?;
    Ok(c.pass)
}

fn markov_test(a: MarkovTest, out: &mut dyn Write) -> CmdResult {
    let p = match read_schedule(&a.schedule)? {
        Schedule::Shift(s) => s.to_perm_schedule(),
        Schedule::Perm(p) => p,
    };
    let lambda = single_lambda(&a.lambda, a.h, a.eps, p.n_nodes())?;
    let tv = certifier::markov_test(&p, a.h, lambda, a.t)?;
    writeln!(out, "h,lambda,t,tv")?;
    writeln!(out, "{},{},{},{}", a.h, lambda, a.t, tv)?;
    Ok(a.eps.map_or(true, |eps| tv <= eps / 2.0))
}

fn parse_demand(spec: &str, n: usize, rate: f64) -> Result<DemandSpec, Fail> {
    if spec == "perm:identity" {
        return Ok(DemandSpec::new(rate, (0..n as u32).collect())?);
    }
    let seed = spec
        .strip_prefix("perm:seed=")
        .and_then(|v| v.parse::<u64>().ok())
        .ok_or_else(|| usage(format!("bad demand {spec:?}; expected perm:seed=<n> or perm:identity")))?;
    Ok(DemandSpec::random(n, rate, seed)?)
}

fn simulate(a: Simulate, out: &mut dyn Write) -> CmdResult {
    let s = read_shift(&a.schedule)?;
    if a.h == 0 {
        return Err(usage("hop count must be >= 1"));
    }
    let lambda = single_lambda(&a.lambda, a.h, Some(a.eps), s.n_nodes())?;
    let rate = match a.rate.as_str() {
        "auto" => (1.0 - a.eps) / (2.0 * a.h as f64),
        r => r.parse().map_err(|_| usage(format!("bad rate {r:?}")))?,
    };
    let demand = parse_demand(&a.demand, s.n_nodes(), rate)?;
    let protocol = match a.start {
        Some(t) => routing::build_spray_at(&s, a.h, lambda, t)?,
        None => routing::build_spray(&s, a.h, lambda)?,
    };
    let mode = match a.mode {
        Mode::CertifiedSum => LoadMode::CertifiedSum,
        Mode::ForwardHalf => LoadMode::ForwardHalf,
        Mode::BackwardHalf => LoadMode::BackwardHalf,
    };
    let loads = routing::edge_loads(&protocol, &demand, mode)?;
    let lat = routing::max_latency(&protocol);
    writeln!(out, "t,edge_source,load")?;
    for (t, i, load) in loads.top_k(a.top_k) {
        writeln!(out, "{t},{i},{load}")?;
    }
    writeln!(
        out,
        "# max_load={} eta={} r={} in_flight_latency={} total_latency={}",
        loads.max_load(),
        protocol.eta,
        rate,
        lat.in_flight,
        lat.total
    )?;
    Ok(loads.is_feasible())
}

fn multiclass_check(a: MulticlassCheck, out: &mut dyn Write) -> CmdResult {
    let text = fs::read_to_string(&a.rates).map_err(|e| usage(format!("cannot read {}: {e}", a.rates.display())))?;
    let width = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| f[0].trim().parse::<f64>().is_ok())
        .map_or(2, |f| f.len());
    if width == 2 {
        let rates = multiclass::parse_fixed_rates(&text)?;
        let c = multiclass::check_fixed_rates(a.eps, &rates)?;
        writeln!(out, "sum,slack,feasible")?;
        writeln!(out, "{},{},{}", c.sum, c.slack, c.feasible)?;
        return Ok(c.feasible);
    }
    let (rates, len) = multiclass::parse_time_varying_rates(&text)?;
    let hs: Vec<usize> = rates.keys().copied().collect();
    let lambdas = lambda_map(&a.lambda, &hs, a.eps, a.n)?;
    let c = multiclass::check_time_varying(a.eps, &lambdas, &rates, a.horizon.unwrap_or(len))?;
    writeln!(out, "feasible,first_violation,max_sum,argmax")?;
    let first = c.first_violation.map_or(String::new(), |t| t.to_string());
    writeln!(out, "{},{},{},{}", c.feasible, first, c.max_sum, c.argmax)?;
    Ok(c.feasible)
}

fn subcommand_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::GenRandom(_) => "gen-random",
        Cmd::GenConvolve(_) => "gen-convolve",
        Cmd::GenDerand(_) => "gen-derand",
        Cmd::GenPrimitiveRoot(_) => "gen-primitive-root",
        Cmd::Certify(_) => "certify",
        Cmd::CertifyBase(_) => "certify-base",
        Cmd::MarkovTest(_) => "markov-test",
        Cmd::Simulate(_) => "simulate",
        Cmd::MulticlassCheck(_) => "multiclass-check",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let name = subcommand_name(&cli.cmd);
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = match cli.cmd {
        Cmd::GenRandom(a) => gen_random(a),
        Cmd::GenConvolve(a) => gen_convolve(a),
        Cmd::GenDerand(a) => gen_derand(a),
        Cmd::GenPrimitiveRoot(a) => gen_primitive_root(a),
        Cmd::Certify(a) => certify(a, &mut out),
        Cmd::CertifyBase(a) => certify_base(a, &mut out),
        Cmd::MarkovTest(a) => markov_test(a, &mut out),
        Cmd::Simulate(a) => simulate(a, &mut out),
        Cmd::MulticlassCheck(a) => multiclass_check(a, &mut out),
    };
    let flushed = out.flush();
    match (result, flushed) {
        (_, Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        (Ok(true), _) => ExitCode::SUCCESS,
        (Ok(false), _) => ExitCode::from(1),
        (Err(Fail::Negative(msg)), _) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        (Err(Fail::Usage { msg, usage }), _) => {
            eprintln!("error: {msg}");
            if usage {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!("\n{}", sub.render_usage());
                }
            }
            ExitCode::from(2)
        }
    }
}
