//! Command-line front end.
//!
//! Every verb accepts `--config FILE` with flat `key = value` lines; flags win
//! over file values. Errors go to standard error as one line starting with
//! `error:<category>:`. Exit codes: 0 success, 1 failure or failed verdict,
//! 2 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analytic::{cluster_index_mc, limit_table, Induced};
use crate::blocks::BlockConfig;
use crate::cluster::ClusterFunctional;
use crate::error::{Error, Result};
use crate::expansion::{expansion_report, ReportOptions};
use crate::harness::{
    expected_map, parse_kv, parse_size, persist, run_experiment, summarize, ExperimentConfig, Format, VerdictRule,
};
use crate::models::{derive_seed, ModelSpec};
use crate::series_io::{read_series, write_series, SeriesFormat};
use crate::verify::run_verify;

#[derive(Debug, Parser)]
#[command(name = "clblk", version, about = "Disjoint and sliding blocks cluster statistics")]
struct Cli {
    /// Worker cap; results do not depend on it.
    #[arg(long, env = "CLBLK_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a series and write it to a file.
    Simulate(SimulateArgs),
    /// Decomposition of the sliding minus disjoint difference as JSON.
    Decompose(DecomposeArgs),
    /// Replicated rate experiment with verdicts against the limits.
    Rates(RatesArgs),
    /// Closed-form MMA(1) limits.
    Limits(LimitsArgs),
    /// Identity and property self-checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// e.g. `mma1:1,1,1`, `iid:2`, `piecewise(mma1:1,2,1):16`
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// `binary` or `text`; default follows the extension of --out.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// Series file (binary or text) used instead of generating one.
    #[arg(long)]
    series: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    r: Option<String>,
    /// Threshold; w is then the exact or empirical exceedance rate.
    #[arg(long)]
    u: Option<String>,
    /// Exceedance probability; needs a model to set the threshold.
    #[arg(long)]
    w: Option<String>,
    #[arg(long)]
    functional: Option<String>,
    /// Keep per-block and per-pair entries.
    #[arg(long)]
    per_block: bool,
    /// Also write the JSON here.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct RatesArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    functional: Option<String>,
    /// Comma-separated sample sizes, e.g. `1e4,1e5,1e6`.
    #[arg(long)]
    grid: Option<String>,
    /// Block size rule, e.g. `n^0.15` or `16`.
    #[arg(long)]
    r: Option<String>,
    /// Exceedance probability rule, e.g. `n^-0.6`.
    #[arg(long)]
    w: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Comma-separated targets, e.g. `ic_norm,bc_norm,clm_large(1)`.
    #[arg(long)]
    targets: Option<String>,
    /// Table path; the verdict goes next to it as `<stem>.verdict.json`.
    #[arg(long)]
    out: Option<String>,
    /// `csv` or `json`.
    #[arg(long)]
    format: Option<String>,
    /// Monte Carlo draws for limits that have no closed form.
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    memory_budget_mb: Option<String>,
}

#[derive(Debug, Args)]
struct LimitsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    c0: Option<String>,
    #[arg(long)]
    c1: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    functional: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    /// Adds `nu_bc_p`, the index of the power-p boundary functional.
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// `text`, `csv` or `json`.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Smaller sample sizes.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    seed: Option<String>,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<String>,
}

enum Failure {
    Usage(Error),
    Run(Error),
    Verdict(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

/// Settings gathered from `--config` and flags.
struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    fn new(config: Option<&Path>, allowed: &[&str], flags: &[(&str, &Option<String>)]) -> std::result::Result<Self, Failure> {
        let mut map = BTreeMap::new();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(Error::Io(e)))?;
            map = parse_kv(&text).map_err(Failure::Usage)?;
            if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(Failure::Usage(Error::InvalidConfig(format!("unknown config key `{k}`"))));
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                map.insert(k.to_string(), v.clone());
            }
        }
        Ok(Self { map })
    }

    fn get(&self, k: &str) -> Option<&str> {
        self.map.get(k).map(String::as_str)
    }

    fn require(&self, k: &str) -> std::result::Result<&str, Failure> {
        self.get(k)
            .ok_or_else(|| Failure::Usage(Error::InvalidConfig(format!("--{} is required", k.replace('_', "-")))))
    }

    fn parse<T: std::str::FromStr>(&self, k: &str) -> std::result::Result<Option<T>, Failure> {
        match self.get(k) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Failure::Usage(Error::InvalidConfig(format!("cannot parse --{k} value `{v}`")))),
        }
    }

    fn size(&self, k: &str) -> std::result::Result<Option<usize>, Failure> {
        self.get(k).map(parse_size).transpose().map_err(Failure::Usage)
    }
}

fn usage<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn write_out(path: &str, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> std::result::Result<(), Failure> {
    let s = Settings::new(
        a.config.as_deref(),
        &["model", "n", "seed", "out", "format"],
        &[("model", &a.model), ("n", &a.n), ("seed", &a.seed), ("out", &a.out), ("format", &a.format)],
    )?;
    let spec: ModelSpec = usage(s.require("model")?.parse())?;
    let n = s.size("n")?.ok_or_else(|| Failure::Usage(Error::InvalidConfig("--n is required".into())))?;
    let seed = s.size("seed")?.unwrap_or(0) as u64;
    let out = PathBuf::from(s.require("out")?);
    let format = match s.get("format") {
        None => SeriesFormat::from_path(&out),
        Some("binary") => SeriesFormat::Binary,
        Some("text") => SeriesFormat::Text,
        Some(f) => return Err(Failure::Usage(Error::InvalidConfig(format!("unknown series format `{f}`")))),
    };
    let series = spec.generate(n, seed)?;
    write_series(&series, &out, format)?;
    eprintln!("wrote {} values of {spec} (seed {seed}) to {}", series.len(), out.display());
    Ok(())
}

fn decompose(a: DecomposeArgs) -> std::result::Result<(), Failure> {
    let s = Settings::new(
        a.config.as_deref(),
        &["model", "series", "n", "seed", "r", "u", "w", "functional", "out"],
        &[
            ("model", &a.model),
            ("series", &a.series),
            ("n", &a.n),
            ("seed", &a.seed),
            ("r", &a.r),
            ("u", &a.u),
            ("w", &a.w),
            ("functional", &a.functional),
            ("out", &a.out),
        ],
    )?;
    let spec: Option<ModelSpec> = s.get("model").map(str::parse).transpose().map_err(Failure::Usage)?;
    let r = s.size("r")?.ok_or_else(|| Failure::Usage(Error::InvalidConfig("--r is required".into())))?;
    let h = usage(ClusterFunctional::parse(s.get("functional").unwrap_or("indicator")))?;
    let u: Option<f64> = s.parse("u")?;
    let w: Option<f64> = s.parse("w")?;
    let seed = s.size("seed")?.unwrap_or(0) as u64;
    if u.is_some() == w.is_some() {
        return Err(Failure::Usage(Error::InvalidConfig("give exactly one of --u and --w".into())));
    }

    let series = match (s.get("series"), &spec) {
        (Some(path), _) => read_series(Path::new(path))?,
        (None, Some(spec)) => {
            let n = s.size("n")?.ok_or_else(|| Failure::Usage(Error::InvalidConfig("--n is required with --model".into())))?;
            spec.generate(n, seed)?
        }
        (None, None) => return Err(Failure::Usage(Error::InvalidConfig("give --series or --model".into()))),
    };
    let cfg = match (&spec, u, w) {
        (Some(spec), _, Some(w)) => usage(BlockConfig::for_model_w(spec, r, w))?,
        (Some(spec), Some(u), None) => usage(BlockConfig::for_model_u(spec, r, u))?,
        (None, Some(u), None) => usage(BlockConfig::empirical(&series, r, u))?,
        (None, None, Some(_)) => {
            return Err(Failure::Usage(Error::InvalidConfig(
                "--w needs --model to set the threshold; use --u with a bare series".into(),
            )))
        }
        _ => unreachable!("exactly one of u and w"),
    };
    let opts = ReportOptions {
        per_block: a.per_block,
        ..ReportOptions::default()
    };
    let report = expansion_report(&series, &cfg, &h, opts)?;
    let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    if let Some(out) = s.get("out") {
        write_out(out, &format!("{json}\n"))?;
    }
    println!("{json}");
    Ok(())
}

fn rates(a: RatesArgs, threads: Option<usize>) -> std::result::Result<(), Failure> {
    let s = Settings::new(
        a.config.as_deref(),
        &[
            "model",
            "functional",
            "grid",
            "r",
            "w",
            "replicates",
            "seed",
            "targets",
            "threads",
            "memory_budget_mb",
            "out",
            "format",
            "samples",
        ],
        &[
            ("model", &a.model),
            ("functional", &a.functional),
            ("grid", &a.grid),
            ("r", &a.r),
            ("w", &a.w),
            ("replicates", &a.replicates),
            ("seed", &a.seed),
            ("targets", &a.targets),
            ("memory_budget_mb", &a.memory_budget_mb),
            ("out", &a.out),
            ("format", &a.format),
            ("samples", &a.samples),
        ],
    )?;
    let mut map = s.map.clone();
    for k in ["out", "format", "samples"] {
        map.remove(k);
    }
    if let Some(t) = threads {
        map.insert("threads".into(), t.to_string());
    }
    let cfg = usage(ExperimentConfig::from_map(&map))?;
    let out = s.get("out").map(PathBuf::from);
    let format: Format = match (s.get("format"), &out) {
        (Some(f), _) => usage(f.parse())?,
        (None, Some(p)) if p.extension().is_some_and(|e| e == "json") => Format::Json,
        _ => Format::Csv,
    };
    let samples = s.size("samples")?.unwrap_or(200_000);

    let mut table = run_experiment(&cfg)?;
    let wall = table.metadata.wall_time_s.take();
    match &out {
        Some(p) => persist(&table, p, format)?,
        None => {
            let text = match format {
                Format::Csv => table.to_csv()?,
                Format::Json => table.to_json()? + "\n",
            };
            print!("{text}");
        }
    }
    if let Some(t) = wall {
        eprintln!("wall time {t:.2}s");
    }

    let h = ClusterFunctional::parse(&cfg.functional)?;
    let limits = match limit_table(&cfg.spec, &h, 1.0, samples, derive_seed(cfg.seed, &[u64::MAX])) {
        Ok(l) => l,
        Err(e @ (Error::Unsupported(_) | Error::InvalidModel(_))) => {
            eprintln!("no limits for {}: {e}; verdicts skipped", cfg.spec);
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    let expected = expected_map(&cfg, &limits);
    let mut view = table.clone();
    view.rows.retain(|r| expected.contains_key(&r.target));
    if view.rows.is_empty() {
        eprintln!("no target with a known limit; verdicts skipped");
        return Ok(());
    }
    let report = summarize(&view, &expected, VerdictRule::default())?;
    for v in &report.verdicts {
        eprintln!(
            "{} {:<16} mean {:<12.6} expected {:<12.6} rel.err {:.4} within-3se {} monotone {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.target,
            v.final_mean,
            v.expected,
            v.rel_error,
            v.within_se,
            v.monotone
        );
    }
    if let Some(p) = &out {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
        let vp = p.with_file_name(format!("{stem}.verdict.json"));
        persist(&report, &vp, Format::Json)?;
    }
    if report.all_pass {
        Ok(())
    } else {
        Err(Failure::Verdict("at least one target failed its verdict".into()))
    }
}

fn limits(a: LimitsArgs) -> std::result::Result<(), Failure> {
    let s = Settings::new(
        a.config.as_deref(),
        &["c0", "c1", "alpha", "functional", "gamma", "p", "samples", "seed", "format", "out"],
        &[
            ("c0", &a.c0),
            ("c1", &a.c1),
            ("alpha", &a.alpha),
            ("functional", &a.functional),
            ("gamma", &a.gamma),
            ("p", &a.p),
            ("samples", &a.samples),
            ("seed", &a.seed),
            ("format", &a.format),
            ("out", &a.out),
        ],
    )?;
    let c0: f64 = s.parse("c0")?.unwrap_or(1.0);
    let c1: f64 = s.parse("c1")?.unwrap_or(1.0);
    let alpha: f64 = s.parse("alpha")?.unwrap_or(1.0);
    let gamma: f64 = s.parse("gamma")?.unwrap_or(1.0);
    let p: Option<f64> = s.parse("p")?;
    let samples = s.size("samples")?.unwrap_or(200_000);
    let seed = s.size("seed")?.unwrap_or(0) as u64;
    let spec = usage(ModelSpec::mma1(c0, c1, alpha))?;
    let h = usage(ClusterFunctional::parse(s.get("functional").unwrap_or("indicator")))?;
    let table = usage(limit_table(&spec, &h, gamma, samples, seed))?;

    let extra = match p {
        Some(p) => Some(cluster_index_mc(&h, Induced::BcP(p), &spec, samples, derive_seed(seed, &[3]))?),
        None => None,
    };
    let text = match s.get("format").unwrap_or("text") {
        "text" => {
            let mut t = table.to_text();
            if let Some(e) = &extra {
                t.push_str(&format!("{:<22} {}\n", "nu_bc_p", e.estimate));
            }
            t
        }
        "csv" => {
            let mut t = table.to_csv();
            if let Some(e) = &extra {
                t.push_str(&format!("nu_bc_p,{}\n", e.estimate));
            }
            t
        }
        "json" => {
            let mut v = serde_json::to_value(&table).map_err(Error::from)?;
            if let (Some(e), Some(obj)) = (&extra, v.as_object_mut()) {
                obj.insert("nu_bc_p".into(), serde_json::to_value(e).map_err(Error::from)?);
            }
            serde_json::to_string_pretty(&v).map_err(Error::from)? + "\n"
        }
        f => return Err(Failure::Usage(Error::InvalidConfig(format!("unknown format `{f}`")))),
    };
    if let Some(out) = s.get("out") {
        write_out(out, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn verify(a: VerifyArgs) -> std::result::Result<(), Failure> {
    let quick = a.quick.then(|| "true".to_string());
    let s = Settings::new(
        a.config.as_deref(),
        &["quick", "seed", "out"],
        &[("quick", &quick), ("seed", &a.seed), ("out", &a.out)],
    )?;
    let quick = s.parse::<bool>("quick")?.unwrap_or(false);
    let seed = s.size("seed")?.unwrap_or(0x5EED) as u64;
    let report = run_verify(quick, seed);
    for c in &report.checks {
        eprintln!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    if let Some(out) = s.get("out") {
        write_out(out, &format!("{json}\n"))?;
    }
    println!("{json}");
    if report.all_pass {
        Ok(())
    } else {
        Err(Failure::Verdict("verification failed".into()))
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `argv` (including the program name), runs the verb and returns the
/// exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    let msg = e.render().to_string();
                    let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
                    eprintln!("error:usage: {}", one_line(first));
                    2
                }
            };
        }
    };
    if cli.threads == Some(0) {
        eprintln!("error:usage: --threads must be positive");
        return 2;
    }
    if let Some(t) = cli.threads {
        // A pool that already exists is kept; only the cap is advisory here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Decompose(a) => decompose(a),
        Command::Rates(a) => rates(a, cli.threads),
        Command::Limits(a) => limits(a),
        Command::Verify(a) => verify(a),
    };
    let _ = std::io::stdout().flush();
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(e)) => {
            eprintln!("error:{}: {}", e.category(), one_line(&e.to_string()));
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error:{}: {}", e.category(), one_line(&e.to_string()));
            1
        }
        Err(Failure::Verdict(msg)) => {
            eprintln!("error:verdict: {msg}");
            1
        }
    }
}
