//! `sketchpost` command-line harness.

mod config;

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sketchpost::cardinality::{dp_cardinality, pyp_cardinality, PypCardinalityMode};
use sketchpost::eval::{evaluate, EvalEstimator};
use sketchpost::fitting::{fit_dp_theta, fit_pyp_prefix};
use sketchpost::hashing::{new_hash, sketch_stream, Sketch};
use sketchpost::simulate::{sample_ibp, sample_pyp_sequence, sample_zipf};
use sketchpost::specialfns::CrmSpec;
use sketchpost::species::{
    dp_freq_posterior, pyp_freq_posterior_exact, pyp_freq_posterior_mc, pyp_mean_asymptotic, DpParams, PypParams,
    SpeciesPrior,
};
use sketchpost::traits::{
    bernoulli_approx_posterior, bernoulli_tv_bound, fit_ibp_poisson_gamma, poisson_gamma_posterior,
    poisson_gg_posterior, IbpPoissonParams, TraitQuery,
};
use sketchpost::Error;

use config::{Config, UsageError};

#[derive(Parser)]
#[command(name = "sketchpost", version, about = "Posterior frequency, cardinality and trait estimates from count sketches")]
struct Cli {
    /// key=value settings file; command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Hash a whitespace-separated token stream into a single-row count sketch.
    Sketch(SketchArgs),
    /// Posterior of a token's frequency given its bucket count.
    Estimate(EstimateArgs),
    /// Expected number of distinct tokens, total and by frequency.
    Cardinality(CardinalityArgs),
    /// Posterior of a trait level from a trait-count sketch.
    Traits(TraitsArgs),
    /// Fit prior parameters.
    Fit(FitArgs),
    /// Generate synthetic data.
    Simulate(SimulateArgs),
    /// Frequency-stratified error of sketch estimates on a corpus.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SketchArgs {
    /// Token file ("-" for stdin).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Number of buckets J.
    #[arg(long, short = 'J')]
    width: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    format: Option<SketchFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SketchFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum PriorKind {
    Dp,
    Pyp,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Mode {
    Exact,
    Mc,
    Asymptotic,
}

#[derive(Args)]
struct PriorArgs {
    #[arg(long)]
    prior: Option<PriorKind>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Monte Carlo iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    sketch: PathBuf,
    /// File of query tokens, hashed with the sketch's own seed.
    #[arg(long, conflicts_with = "bucket")]
    query: Option<PathBuf>,
    /// Bucket index (repeatable).
    #[arg(long)]
    bucket: Vec<usize>,
    #[command(flatten)]
    prior: PriorArgs,
    /// Credible-interval level.
    #[arg(long)]
    ci: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CardinalityArgs {
    #[arg(long)]
    sketch: PathBuf,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum CrmKindArg {
    Gamma,
    Gg,
    StableBeta,
}

#[derive(Args)]
struct CrmArgs {
    #[arg(long)]
    crm: Option<CrmKindArg>,
    #[arg(long)]
    theta: Option<f64>,
    /// Generalized-gamma discount.
    #[arg(long)]
    alpha: Option<f64>,
    /// Generalized-gamma tilt.
    #[arg(long)]
    tau: Option<f64>,
    /// Stable-beta concentration.
    #[arg(long)]
    beta: Option<f64>,
    /// Poisson level rate λ.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct TraitsArgs {
    /// Bucket total C_j.
    #[arg(long)]
    c: u64,
    /// Increment of the new point to the same bucket.
    #[arg(long)]
    b: u64,
    /// Queried level of the new point.
    #[arg(long)]
    a: u64,
    /// Number of sketched points.
    #[arg(long)]
    n: u64,
    #[arg(long, short = 'J')]
    width: Option<usize>,
    #[command(flatten)]
    crm: CrmArgs,
    #[arg(long)]
    ci: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum FitModel {
    Dp,
    Pyp,
    Ibp,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    model: FitModel,
    /// Sketch file (dp, ibp).
    #[arg(long)]
    sketch: Option<PathBuf>,
    /// Token file (pyp).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Tokens of the corpus used for the fit (pyp).
    #[arg(long)]
    prefix: Option<usize>,
    #[arg(long, short = 'J')]
    width: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sketched points (ibp).
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SimModel {
    Dp,
    Pyp,
    Zipf,
    Ibp,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: SimModel,
    /// Number of draws (points for ibp).
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Zipf exponent.
    #[arg(long = "zipf-c")]
    zipf_c: Option<f64>,
    /// Finite Zipf support size.
    #[arg(long)]
    items: Option<u64>,
    #[command(flatten)]
    crm: CrmArgs,
    /// Largest number of CRM jumps kept (ibp).
    #[arg(long)]
    truncation: Option<usize>,
    /// Emit an ibp draw as a sketch of per-atom totals with this many buckets.
    #[arg(long, short = 'J')]
    width: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Comma-separated widths.
    #[arg(long, short = 'J', value_delimiter = ',')]
    widths: Vec<usize>,
    /// Comma-separated hash seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    prior: Option<PriorKind>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Fit the prior per sketch (dp) or on a corpus prefix (pyp).
    #[arg(long)]
    fit: bool,
    /// Prefix length for the pyp fit.
    #[arg(long)]
    prefix: Option<usize>,
    /// Comma-separated bin edges, e.g. 0,1,2,4,8 for (0,1],(1,2],(2,4],(4,8].
    #[arg(long, value_delimiter = ',')]
    bins: Vec<u64>,
    /// CSV report (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Per-symbol estimates as CSV.
    #[arg(long)]
    dump: Option<PathBuf>,
}

/// Lets config values use the same spellings as the flags.
macro_rules! from_str_via_value_enum {
    ($($t:ty),*) => {$(
        impl std::str::FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                <$t as ValueEnum>::from_str(s, true)
            }
        }
    )*};
}

from_str_via_value_enum!(SketchFormat, PriorKind, Mode, CrmKindArg);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 usage, 3 numeric gate, 4 I/O.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                e if e.is_numeric_gate() => 3,
                Error::Parse(_) => 4,
                _ => 2,
            };
        }
        if cause.is::<std::io::Error>() {
            return 4;
        }
        if cause.is::<UsageError>() {
            return 2;
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.cmd {
        Cmd::Sketch(a) => cmd_sketch(a, &cfg),
        Cmd::Estimate(a) => cmd_estimate(a, &cfg),
        Cmd::Cardinality(a) => cmd_cardinality(a, &cfg),
        Cmd::Traits(a) => cmd_traits(a, &cfg),
        Cmd::Fit(a) => cmd_fit(a, &cfg),
        Cmd::Simulate(a) => cmd_simulate(a, &cfg),
        Cmd::Evaluate(a) => cmd_evaluate(a, &cfg),
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).context("reading stdin")?;
        return Ok(s);
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_tokens(path: &Path) -> anyhow::Result<Vec<String>> {
    Ok(read_text(path)?.split_whitespace().map(str::to_owned).collect())
}

fn read_sketch(path: &Path) -> anyhow::Result<Sketch> {
    let text = read_text(path)?;
    let s = if text.trim_start().starts_with('{') { Sketch::from_json(&text) } else { Sketch::from_csv(&text) };
    s.with_context(|| format!("parsing sketch {}", path.display()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(out: &Option<PathBuf>, v: &Value) -> anyhow::Result<()> {
    emit(out, &format!("{}\n", serde_json::to_string_pretty(v)?))
}

fn cmd_sketch(a: SketchArgs, cfg: &Config) -> anyhow::Result<()> {
    let input = cfg.pick(a.input, "input")?.ok_or_else(|| UsageError::new("--input is required"))?;
    let width = cfg.or(a.width, "width", 1024)?;
    let seed = cfg.seed(a.seed)?;
    let h = new_hash(seed, width)?;
    let tokens = read_tokens(&input)?;
    let s = sketch_stream(&tokens, &h)?;
    let text = match cfg.or(a.format, "format", SketchFormat::Json)? {
        SketchFormat::Json => format!("{}\n", s.to_json()),
        SketchFormat::Csv => s.to_csv(),
    };
    emit(&a.out, &text)?;
    let occupied = s.counts.iter().filter(|&&c| c > 0).count();
    let max = s.counts.iter().max().copied().unwrap_or(0);
    eprintln!("n={} J={} occupied={} max_count={}", s.total_n, s.width, occupied, max);
    Ok(())
}

fn species_prior(p: &PriorArgs, cfg: &Config) -> anyhow::Result<SpeciesPrior> {
    Ok(match cfg.or(p.prior, "prior", PriorKind::Dp)? {
        PriorKind::Dp => {
            let theta = cfg.pick(p.theta, "theta")?.ok_or_else(|| UsageError::new("the dp prior needs --theta"))?;
            SpeciesPrior::Dp(DpParams::new(theta)?)
        }
        PriorKind::Pyp => {
            let alpha = cfg.pick(p.alpha, "alpha")?;
            let gamma = cfg.pick(p.gamma, "gamma")?;
            let (Some(alpha), Some(gamma)) = (alpha, gamma) else {
                bail!(UsageError::new("the pyp prior needs --alpha and --gamma"));
            };
            SpeciesPrior::Pyp(PypParams::new(alpha, gamma)?)
        }
    })
}

fn gate_hint(e: Error) -> anyhow::Error {
    if matches!(e, Error::TooLarge(_)) {
        anyhow::Error::new(e).context("exact evaluation is out of reach for this sketch; rerun with --mode mc")
    } else {
        e.into()
    }
}

fn cmd_estimate(a: EstimateArgs, cfg: &Config) -> anyhow::Result<()> {
    let sketch = read_sketch(&a.sketch)?;
    let prior = species_prior(&a.prior, cfg)?;
    let mode = cfg.or(a.prior.mode, "mode", Mode::Exact)?;
    let iters = cfg.or(a.prior.iters, "iters", 10_000)?;
    let seed = cfg.seed(a.prior.seed)?;
    let ci = cfg.or(a.ci, "ci", 0.95)?;

    let mut queries: Vec<(Option<String>, usize)> = Vec::new();
    if let Some(q) = &a.query {
        let h = new_hash(sketch.hash_seed, sketch.width)?;
        for t in read_tokens(q)? {
            let j = h.bucket(t.as_bytes())?;
            queries.push((Some(t), j));
        }
    }
    queries.extend(a.bucket.iter().map(|&j| (None, j)));
    if queries.is_empty() {
        bail!(UsageError::new("give --query FILE or at least one --bucket"));
    }

    let mut rows = Vec::new();
    for (token, j) in queries {
        sketch.check_bucket(j)?;
        let c_j = sketch.counts[j];
        let mut row = match (prior, mode) {
            (SpeciesPrior::Pyp(p), Mode::Asymptotic) => json!({
                "mean": pyp_mean_asymptotic(c_j, p, sketch.width)?,
                "median": null, "mode": null, "credible_interval": null,
                "method": "pyp-asymptotic",
            }),
            (SpeciesPrior::Dp(_), Mode::Asymptotic | Mode::Mc) => {
                bail!(UsageError::new("--mode applies to the pyp prior only"))
            }
            _ => {
                let pmf = match (prior, mode) {
                    (SpeciesPrior::Dp(p), _) => dp_freq_posterior(c_j, p, sketch.width)?,
                    (SpeciesPrior::Pyp(p), Mode::Exact) => pyp_freq_posterior_exact(&sketch, j, p).map_err(gate_hint)?,
                    (SpeciesPrior::Pyp(p), _) => pyp_freq_posterior_mc(&sketch, j, p, iters, seed)?,
                };
                let s = pmf.summarize(ci);
                let mut r = json!({
                    "mean": s.mean, "median": s.median, "mode": s.mode,
                    "credible_interval": [s.credible_interval.0, s.credible_interval.1],
                    "ci_level": ci,
                    "method": pmf.to_json(ci)["method"],
                });
                if let Some(se) = &pmf.stderr {
                    r["stderr"] = json!(se);
                }
                r
            }
        };
        row["bucket"] = json!(j);
        row["c_j"] = json!(c_j);
        if let Some(t) = token {
            row["query"] = json!(t);
        }
        rows.push(row);
    }
    emit_json(&a.out, &Value::Array(rows))
}

fn cmd_cardinality(a: CardinalityArgs, cfg: &Config) -> anyhow::Result<()> {
    let sketch = read_sketch(&a.sketch)?;
    let prior = species_prior(&a.prior, cfg)?;
    let mode = cfg.or(a.prior.mode, "mode", Mode::Exact)?;
    let v = match prior {
        SpeciesPrior::Dp(p) => dp_cardinality(&sketch, p)?.to_json(json!({ "theta": p.theta })),
        SpeciesPrior::Pyp(p) => {
            let m = match mode {
                Mode::Exact => PypCardinalityMode::Exact,
                Mode::Mc => PypCardinalityMode::MonteCarlo {
                    iters: cfg.or(a.prior.iters, "iters", 10_000)?,
                    seed: cfg.seed(a.prior.seed)?,
                },
                Mode::Asymptotic => bail!(UsageError::new("cardinality supports --mode exact or mc")),
            };
            pyp_cardinality(&sketch, p, m).map_err(gate_hint)?.to_json(json!({ "alpha": p.alpha, "gamma": p.gamma }))
        }
    };
    emit_json(&a.out, &v)
}

fn crm_spec(c: &CrmArgs, cfg: &Config) -> anyhow::Result<(CrmKindArg, CrmSpec)> {
    let theta = cfg.pick(c.theta, "theta")?.ok_or_else(|| UsageError::new("--theta is required"))?;
    let kind = cfg.or(c.crm, "crm", CrmKindArg::Gamma)?;
    let spec = match kind {
        CrmKindArg::Gamma => CrmSpec::gamma(theta)?,
        CrmKindArg::Gg => {
            let alpha = cfg.pick(c.alpha, "alpha")?.ok_or_else(|| UsageError::new("--crm gg needs --alpha"))?;
            CrmSpec::generalized_gamma(alpha, cfg.or(c.tau, "tau", 1.0)?, theta)?
        }
        CrmKindArg::StableBeta => CrmSpec::stable_beta(cfg.or(c.beta, "beta", 1.0)?, theta)?,
    };
    Ok((kind, spec))
}

fn cmd_traits(a: TraitsArgs, cfg: &Config) -> anyhow::Result<()> {
    let width = cfg.pick(a.width, "width")?.ok_or_else(|| UsageError::new("--width is required"))?;
    let (kind, spec) = crm_spec(&a.crm, cfg)?;
    let ci = cfg.or(a.ci, "ci", 0.95)?;
    let q = TraitQuery::new(a.c, a.b, a.a, a.n)?;
    let v = match kind {
        CrmKindArg::Gamma => poisson_gamma_posterior(&q, spec.theta, width)?.to_json(ci),
        CrmKindArg::Gg => {
            let lambda = cfg.or(a.crm.lambda, "lambda", 1.0)?;
            poisson_gg_posterior(&q, &IbpPoissonParams::new(spec, lambda)?, width)?.to_json(ci)
        }
        CrmKindArg::StableBeta => {
            let mut v = bernoulli_approx_posterior(&q, &spec, width)?.to_json(ci);
            v["tv_bound"] = json!(bernoulli_tv_bound(&spec, width)?);
            v
        }
    };
    emit_json(&a.out, &v)
}

fn cmd_fit(a: FitArgs, cfg: &Config) -> anyhow::Result<()> {
    let need_sketch = || -> anyhow::Result<Sketch> {
        let p = cfg.pick(a.sketch.clone(), "sketch")?.ok_or_else(|| UsageError::new("--sketch is required"))?;
        read_sketch(&p)
    };
    let report = match a.model {
        FitModel::Dp => fit_dp_theta(&need_sketch()?)?,
        FitModel::Ibp => {
            let n = cfg.pick(a.n, "n")?.ok_or_else(|| UsageError::new("--model ibp needs --n"))?;
            fit_ibp_poisson_gamma(&need_sketch()?, n)?
        }
        FitModel::Pyp => {
            let corpus =
                cfg.pick(a.corpus.clone(), "corpus")?.ok_or_else(|| UsageError::new("--model pyp needs --corpus"))?;
            let tokens = read_tokens(&corpus)?;
            let prefix = cfg.or(a.prefix, "prefix", tokens.len())?.min(tokens.len());
            let h = new_hash(cfg.seed(a.seed)?, cfg.or(a.width, "width", 1024)?)?;
            fit_pyp_prefix(&tokens[..prefix], &h, None)?
        }
    };
    emit_json(&a.out, &report.to_json())
}

fn cmd_simulate(a: SimulateArgs, cfg: &Config) -> anyhow::Result<()> {
    let seed = cfg.seed(a.seed)?;
    let lines = |v: Vec<String>| v.into_iter().map(|s| s + "\n").collect::<String>();
    match a.model {
        SimModel::Dp | SimModel::Pyp => {
            let prior = if a.model == SimModel::Dp {
                let theta = cfg.pick(a.crm.theta, "theta")?.ok_or_else(|| UsageError::new("--model dp needs --theta"))?;
                SpeciesPrior::Dp(DpParams::new(theta)?)
            } else {
                let alpha = cfg.pick(a.crm.alpha, "alpha")?;
                let gamma = cfg.pick(a.gamma, "gamma")?;
                let (Some(alpha), Some(gamma)) = (alpha, gamma) else {
                    bail!(UsageError::new("--model pyp needs --alpha and --gamma"));
                };
                SpeciesPrior::Pyp(PypParams::new(alpha, gamma)?)
            };
            let labels = sample_pyp_sequence(prior, a.n, seed);
            emit(&a.out, &lines(labels.iter().map(|l| format!("s{l}")).collect()))
        }
        SimModel::Zipf => {
            let c = cfg.pick(a.zipf_c, "zipf-c")?.ok_or_else(|| UsageError::new("--model zipf needs --zipf-c"))?;
            let items = cfg.pick(a.items, "items")?;
            let draws = sample_zipf(c, a.n, items, seed)?;
            emit(&a.out, &lines(draws.iter().map(|k| format!("z{k}")).collect()))
        }
        SimModel::Ibp => {
            let (_, spec) = crm_spec(&a.crm, cfg)?;
            let lambda = cfg.or(a.crm.lambda, "lambda", 1.0)?;
            let draw = sample_ibp(&spec, lambda, a.n, cfg.or(a.truncation, "truncation", 1_000)?, seed)?;
            if let Some(w) = &draw.warning {
                eprintln!("warning: {w}");
            }
            match cfg.pick(a.width, "width")? {
                Some(width) => {
                    // Atoms hashed by index; each bucket holds the summed levels of its atoms.
                    let h = new_hash(seed, width)?;
                    let mut s = Sketch::empty(width, seed)?;
                    for (k, t) in draw.atom_totals().iter().enumerate() {
                        let j = h.bucket(&(k as u64).to_le_bytes())?;
                        s.counts[j] += t;
                        s.total_n += t;
                    }
                    emit(&a.out, &format!("{}\n", s.to_json()))
                }
                None => emit_json(
                    &a.out,
                    &json!({
                        "jumps": draw.jumps,
                        "levels": draw.levels,
                        "atom_totals": draw.atom_totals(),
                        "truncated_mass": draw.truncated_mass,
                        "warning": draw.warning,
                    }),
                ),
            }
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s.to_owned() }
}

fn cmd_evaluate(a: EvaluateArgs, cfg: &Config) -> anyhow::Result<()> {
    let tokens = read_tokens(&a.corpus)?;
    let widths = if a.widths.is_empty() { cfg.list("widths")?.unwrap_or_else(|| vec![1024]) } else { a.widths };
    let seeds = if a.seeds.is_empty() {
        cfg.list("seeds")?.map_or_else(|| cfg.seed(None).map(|s| vec![s]), Ok)?
    } else {
        a.seeds
    };
    let fit = a.fit || cfg.or(None, "fit", false)?;
    let estimator = match (cfg.or(a.prior, "prior", PriorKind::Dp)?, fit) {
        (PriorKind::Dp, true) => EvalEstimator::DpFit,
        (PriorKind::Dp, false) => EvalEstimator::Dp {
            theta: cfg.pick(a.theta, "theta")?.ok_or_else(|| UsageError::new("give --theta or --fit"))?,
        },
        (PriorKind::Pyp, true) => EvalEstimator::PypFit { prefix: cfg.or(a.prefix, "prefix", tokens.len())? },
        (PriorKind::Pyp, false) => {
            let alpha = cfg.pick(a.alpha, "alpha")?;
            let gamma = cfg.pick(a.gamma, "gamma")?;
            let (Some(alpha), Some(gamma)) = (alpha, gamma) else {
                bail!(UsageError::new("give --alpha and --gamma, or --fit"));
            };
            EvalEstimator::Pyp { alpha, gamma }
        }
    };
    let edges = if a.bins.is_empty() { cfg.list("bins")?.unwrap_or_default() } else { a.bins };
    let bins = match edges.len() {
        0 => None,
        1 => bail!(UsageError::new("--bins needs at least two edges")),
        _ => {
            if edges.windows(2).any(|w| w[0] >= w[1]) {
                bail!(UsageError::new("--bins edges must increase"));
            }
            Some(edges.windows(2).map(|w| (w[0], w[1])).collect())
        }
    };
    let outcome = evaluate(&tokens, &widths, &seeds, estimator, bins)?;
    emit(&a.out, &outcome.to_csv())?;
    if let Some(p) = &a.json {
        let reports: Vec<Value> = outcome.reports.iter().map(|r| r.to_json()).collect();
        emit_json(&Some(p.clone()), &Value::Array(reports))?;
    }
    if let Some(p) = &a.dump {
        let mut out = String::from("J,seed,symbol,true_freq,bucket,bucket_count,estimate\n");
        for c in &outcome.cells {
            for s in &c.symbols {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    c.width,
                    c.seed,
                    csv_field(&s.symbol),
                    s.true_freq,
                    s.bucket,
                    s.bucket_count,
                    s.estimate
                ));
            }
        }
        emit(&Some(p.clone()), &out)?;
    }
    Ok(())
}
