//! Replicated Monte Carlo rate experiments over `(n, r, w)` grids.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::{clusterlength_moment, joint_length_moment, LimitTable};
use crate::blocks::{disjoint_stat, empirical_cluster_measure, sliding_stat, BlockConfig};
use crate::cluster::ClusterFunctional;
use crate::error::{Error, Result};
use crate::expansion::{boundary_cluster_stat, internal_cluster_stat, BlockBookkeeping, IcMode};
use crate::models::{derive_seed, MagnitudeSeries, ModelSpec};

/// `c·n^p` or an absolute value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    Power { coef: f64, exp: f64 },
    Absolute(f64),
}

impl Rule {
    pub fn eval(&self, n: usize) -> f64 {
        match *self {
            Rule::Power { coef, exp } => coef * (n as f64).powf(exp),
            Rule::Absolute(v) => v,
        }
    }

    /// Block size: the ceiling of the rule, after snapping values within
    /// `1e-9` relative of an integer so that e.g. `(10⁵)^0.4 = 100` stays 100.
    pub fn block_size(&self, n: usize) -> usize {
        let v = self.eval(n);
        let nearest = v.round();
        if (v - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
            nearest as usize
        } else {
            v.ceil() as usize
        }
    }
}

impl FromStr for Rule {
    type Err = Error;

    /// Accepts `n^p`, `c*n^p` and plain numbers.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().replace(' ', "");
        let bad = || Error::InvalidConfig(format!("cannot parse grid rule `{s}`"));
        let num = |x: &str| x.parse::<f64>().map_err(|_| bad());
        if let Some(idx) = t.find("n^") {
            let exp = num(&t[idx + 2..])?;
            let coef = match &t[..idx] {
                "" => 1.0,
                c => num(c.strip_suffix('*').ok_or_else(bad)?)?,
            };
            Ok(Rule::Power { coef, exp })
        } else if t == "n" {
            Ok(Rule::Power { coef: 1.0, exp: 1.0 })
        } else {
            Ok(Rule::Absolute(num(&t)?))
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Rule::Power { coef, exp } if coef == 1.0 => write!(f, "n^{exp}"),
            Rule::Power { coef, exp } => write!(f, "{coef}*n^{exp}"),
            Rule::Absolute(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for Rule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub r: Rule,
    pub w: Rule,
}

impl GridPoint {
    /// `(n, r, w)` after applying the rules.
    pub fn resolve(&self) -> Result<(usize, usize, f64)> {
        let r = self.r.block_size(self.n);
        let w = self.w.eval(self.n);
        if r < 2 || r > self.n / 3 {
            return Err(Error::InvalidConfig(format!(
                "grid point n = {} gives block size r = {r}; need 2 <= r <= n/3",
                self.n
            )));
        }
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::InvalidConfig(format!("grid point n = {} gives w = {w} outside (0, 1)", self.n)));
        }
        Ok((self.n, r, w))
    }
}

/// A quantity recorded per replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    DisjointStat,
    SlidingStat,
    /// `IC / (n w)`; piecewise models use the piecewise indicator.
    IcNorm,
    /// `BC / (n w)`.
    BcNorm,
    /// `BC / (n w) / (r w)`.
    BcOverRw,
    /// `IC / (n r² w²)`.
    IcLargeNorm,
    /// `P̂(A₁ ∩ A₂) / w`.
    Pa1a2Small,
    /// `P̂(A₁ ∩ A₂) / (r² w²)`.
    Pa1a2Large,
    /// `Ê[L^γ 1_{A₁}] / (r^{γ+2} w²)`.
    ClmLarge(f64),
    /// `Ê[L_{1,2}^γ 1_{A₁∩A₂}] / (r^{γ+2} w²)`.
    JlLarge(f64),
    /// `Ê[((t₂(1) − t₁(N₁)) − r)₊ 1_{A₁∩A₂}] / (r³ w²)`.
    GapLarge,
    /// Empirical cluster measure.
    Ecm,
    /// `r (disjoint − sliding)`.
    ScaledGap,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::DisjointStat => write!(f, "disjoint_stat"),
            Target::SlidingStat => write!(f, "sliding_stat"),
            Target::IcNorm => write!(f, "ic_norm"),
            Target::BcNorm => write!(f, "bc_norm"),
            Target::BcOverRw => write!(f, "bc_over_rw"),
            Target::IcLargeNorm => write!(f, "ic_large_norm"),
            Target::Pa1a2Small => write!(f, "pa1a2_small"),
            Target::Pa1a2Large => write!(f, "pa1a2_large"),
            Target::ClmLarge(g) => write!(f, "clm_large({g})"),
            Target::JlLarge(g) => write!(f, "jl_large({g})"),
            Target::GapLarge => write!(f, "gap_large"),
            Target::Ecm => write!(f, "ecm"),
            Target::ScaledGap => write!(f, "scaled_gap"),
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let gamma_of = |prefix: &str| -> Option<Result<f64>> {
            let inner = s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
            Some(
                inner
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|g| *g >= 0.0 && g.is_finite())
                    .ok_or_else(|| Error::InvalidConfig(format!("bad exponent in target `{s}`"))),
            )
        };
        if let Some(g) = gamma_of("clm_large") {
            return Ok(Target::ClmLarge(g?));
        }
        if let Some(g) = gamma_of("jl_large") {
            return Ok(Target::JlLarge(g?));
        }
        Ok(match s {
            "disjoint_stat" => Target::DisjointStat,
            "sliding_stat" => Target::SlidingStat,
            "ic_norm" => Target::IcNorm,
            "bc_norm" => Target::BcNorm,
            "bc_over_rw" => Target::BcOverRw,
            "ic_large_norm" => Target::IcLargeNorm,
            "pa1a2_small" => Target::Pa1a2Small,
            "pa1a2_large" => Target::Pa1a2Large,
            "clm_large" => Target::ClmLarge(1.0),
            "jl_large" => Target::JlLarge(1.0),
            "gap_large" => Target::GapLarge,
            "ecm" => Target::Ecm,
            "scaled_gap" => Target::ScaledGap,
            other => return Err(Error::InvalidConfig(format!("unknown target `{other}`"))),
        })
    }
}

impl Serialize for Target {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Default memory budget for series in flight.
pub const DEFAULT_MEMORY_BUDGET: usize = 2 << 30;

/// A rate experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: ModelSpec,
    pub functional: String,
    pub grid: Vec<GridPoint>,
    pub replicates: usize,
    pub seed: u64,
    pub targets: Vec<Target>,
    /// Worker cap; does not affect results.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Bytes allowed for series held by concurrent workers.
    #[serde(default = "default_budget")]
    pub memory_budget: usize,
}

fn default_budget() -> usize {
    DEFAULT_MEMORY_BUDGET
}

/// Approximate bytes held per replicate of length `n`.
fn bytes_per_replicate(n: usize) -> usize {
    // values, scaled copy, next-exceedance index, window values
    n.saturating_mul(32)
}

impl ExperimentConfig {
    /// A grid over `ns` with common rules.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        spec: ModelSpec,
        functional: &str,
        ns: &[usize],
        r: Rule,
        w: Rule,
        replicates: usize,
        seed: u64,
        targets: Vec<Target>,
    ) -> Self {
        Self {
            spec,
            functional: functional.to_string(),
            grid: ns.iter().map(|&n| GridPoint { n, r, w }).collect(),
            replicates,
            seed,
            targets,
            threads: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        ClusterFunctional::parse(&self.functional)?;
        if self.replicates < 1 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("grid is empty".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidConfig("no targets requested".into()));
        }
        if self.grid.windows(2).any(|p| p[0].n > p[1].n) {
            return Err(Error::InvalidConfig("grid must be sorted by n".into()));
        }
        for g in &self.grid {
            g.resolve()?;
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of everything that affects results.
    pub fn config_hash(&self) -> String {
        let canonical = ExperimentConfig {
            threads: None,
            memory_budget: 0,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parses flat `key = value` lines; `#` starts a comment.
    ///
    /// Keys: `model`, `functional`, `grid` (comma-separated n), `r`, `w`,
    /// `replicates`, `seed`, `targets` (comma-separated), `threads`,
    /// `memory_budget_mb`.
    pub fn from_kv(text: &str) -> Result<Self> {
        let map = parse_kv(text)?;
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| map.get(k).ok_or_else(|| Error::InvalidConfig(format!("missing key `{k}`")));
        let spec: ModelSpec = get("model")?.parse()?;
        let functional = map.get("functional").cloned().unwrap_or_else(|| "indicator".into());
        let ns = parse_sizes(get("grid")?)?;
        let r: Rule = get("r")?.parse()?;
        let w: Rule = get("w")?.parse()?;
        let replicates = parse_int(map.get("replicates").map(String::as_str).unwrap_or("1"), "replicates")?;
        let seed = parse_int(map.get("seed").map(String::as_str).unwrap_or("0"), "seed")? as u64;
        let targets = map
            .get("targets")
            .map(|t| split_targets(t))
            .transpose()?
            .unwrap_or_else(|| vec![Target::IcNorm, Target::BcNorm]);
        let mut cfg = Self::new(spec, &functional, &ns, r, w, replicates, seed, targets);
        if let Some(t) = map.get("threads") {
            cfg.threads = Some(parse_int(t, "threads")?);
        }
        if let Some(mb) = map.get("memory_budget_mb") {
            cfg.memory_budget = parse_int(mb, "memory_budget_mb")?.saturating_mul(1 << 20);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `key = value` lines into a map.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", no + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_int(s: &str, what: &str) -> Result<usize> {
    parse_size(s).map_err(|_| Error::InvalidConfig(format!("`{what}` must be a nonnegative integer, got `{s}`")))
}

/// Integer that may be written in scientific notation, e.g. `1e5`.
pub fn parse_size(s: &str) -> Result<usize> {
    let s = s.trim();
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| Error::InvalidConfig(format!("not a number: `{s}`")))?;
    if v >= 0.0 && v.fract() == 0.0 && v < 9.0e15 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidConfig(format!("not a nonnegative integer: `{s}`")))
    }
}

pub fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(parse_size).collect()
}

pub fn split_targets(s: &str) -> Result<Vec<Target>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect()
}

/// Metadata attached to a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub config_hash: String,
    pub code_version: String,
    /// Seconds spent; `None` when the table is meant to be byte-reproducible.
    pub wall_time_s: Option<f64>,
}

/// One row: a grid point and a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub model: String,
    pub alpha: f64,
    pub c0: f64,
    pub c1: f64,
    pub n: usize,
    pub r: usize,
    pub w: f64,
    pub replicates: usize,
    pub target: String,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

/// Replicate summaries for every `(grid point, target)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub metadata: TableMetadata,
    pub rows: Vec<Row>,
}

pub const CSV_HEADER: &str = "model,alpha,c0,c1,n,r,w,replicates,target,mean,sd,se";

/// Output format of [`persist`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidConfig(format!("unknown format `{other}`"))),
        }
    }
}

impl ConvergenceTable {
    /// Rows for one target, in grid order.
    pub fn series(&self, target: &str) -> Vec<&Row> {
        self.rows.iter().filter(|r| r.target == target).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(CSV_HEADER.split(','))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Reads the CSV form. Metadata is not part of the CSV and comes back empty.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        for col in CSV_HEADER.split(',') {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::MissingColumn(col.to_string()));
            }
        }
        let mut rows = Vec::new();
        for rec in reader.deserialize() {
            rows.push(rec?);
        }
        Ok(Self {
            metadata: TableMetadata {
                config_hash: String::new(),
                code_version: String::new(),
                wall_time_s: None,
            },
            rows,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Writes a table or verdict report.
pub fn persist<T: Persist>(value: &T, path: &Path, format: Format) -> Result<()> {
    std::fs::write(path, value.render(format)?)?;
    Ok(())
}

/// Reads a table or verdict report; the format follows the file extension.
pub fn load<T: Persist>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Format::Csv,
        _ => Format::Json,
    };
    T::parse(&text, format)
}

/// Values that [`persist`] and [`load`] handle.
pub trait Persist: Sized {
    fn render(&self, format: Format) -> Result<String>;
    fn parse(text: &str, format: Format) -> Result<Self>;
}

impl Persist for ConvergenceTable {
    fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    fn parse(text: &str, format: Format) -> Result<Self> {
        match format {
            Format::Csv => Self::from_csv(text),
            Format::Json => Self::from_json(text),
        }
    }
}

/// Per-grid-point series generation with the piecewise block size tied to `r`.
fn replicate_series(spec: &ModelSpec, n: usize, r: usize, seed: u64) -> Result<MagnitudeSeries> {
    match spec {
        ModelSpec::Piecewise { inner, .. } => {
            let pw = ModelSpec::piecewise((**inner).clone(), r)?;
            pw.generate(n / r * r, seed)
        }
        _ => spec.generate(n, seed),
    }
}

/// Values of the requested targets on one series.
pub fn replicate_targets(
    series: &MagnitudeSeries,
    spec: &ModelSpec,
    cfg: &BlockConfig,
    h: &ClusterFunctional,
    targets: &[Target],
) -> Result<Vec<f64>> {
    let n = series.len() as f64;
    let (r, w) = (cfg.r, cfg.w);
    let rf = r as f64;
    let nw = n * w;
    let needs_book = targets.iter().any(|t| {
        !matches!(
            t,
            Target::DisjointStat | Target::SlidingStat | Target::Ecm | Target::ScaledGap
        )
    });
    let book = if needs_book { Some(BlockBookkeeping::new(series, cfg)?) } else { None };
    let mode = if spec.is_piecewise() { IcMode::Piecewise } else { IcMode::Standard };

    let mut ic: Option<f64> = None;
    let mut bc: Option<f64> = None;
    let mut full: Option<(f64, f64)> = None;
    let book_ref = || book.as_ref().expect("bookkeeping built");

    let ic_total = |ic: &mut Option<f64>| -> f64 {
        *ic.get_or_insert_with(|| internal_cluster_stat(book_ref(), h, mode, false).total)
    };
    let mut out = Vec::with_capacity(targets.len());
    for t in targets {
        let value = match *t {
            Target::DisjointStat | Target::SlidingStat | Target::ScaledGap => {
                let (d, s) = match full {
                    Some(v) => v,
                    None => {
                        let d = disjoint_stat(series, cfg, h)?.value;
                        let s = sliding_stat(series, cfg, h)?.value;
                        full = Some((d, s));
                        (d, s)
                    }
                };
                match t {
                    Target::DisjointStat => d,
                    Target::SlidingStat => s,
                    _ => rf * (d - s),
                }
            }
            Target::Ecm => empirical_cluster_measure(series, cfg, h)?,
            Target::IcNorm => ic_total(&mut ic) / nw,
            Target::IcLargeNorm => ic_total(&mut ic) / (n * rf * rf * w * w),
            Target::BcNorm | Target::BcOverRw => {
                let b = *bc.get_or_insert_with(|| boundary_cluster_stat(book_ref(), h, false).total());
                if matches!(t, Target::BcNorm) {
                    b / nw
                } else {
                    b / nw / (rf * w)
                }
            }
            Target::Pa1a2Small | Target::Pa1a2Large | Target::JlLarge(_) | Target::GapLarge => {
                let b = book_ref();
                let pairs = b.m / 2;
                let mut acc = 0.0;
                for k in 0..pairs {
                    let j = 2 * k + 1;
                    if !(b.a(j) && b.a(j + 1)) {
                        continue;
                    }
                    acc += match *t {
                        Target::JlLarge(g) => (b.joint_length(j) as f64).powf(g),
                        Target::GapLarge => {
                            let gap = b.times(j + 1)[0] - b.times(j)[b.count(j) - 1];
                            gap.saturating_sub(r) as f64
                        }
                        _ => 1.0,
                    };
                }
                let mean = acc / pairs as f64;
                match *t {
                    Target::Pa1a2Small => mean / w,
                    Target::Pa1a2Large => mean / (rf * rf * w * w),
                    Target::JlLarge(g) => mean / (rf.powf(g + 2.0) * w * w),
                    _ => mean / (rf.powi(3) * w * w),
                }
            }
            Target::ClmLarge(g) => {
                let b = book_ref();
                let acc: f64 = (1..=b.m)
                    .filter(|&j| b.a(j))
                    .map(|j| (b.cluster_length(j) as f64).powf(g))
                    .sum();
                acc / b.m as f64 / (rf.powf(g + 2.0) * w * w)
            }
        };
        out.push(value);
    }
    Ok(out)
}

/// Runs every `(grid point, replicate)` unit and aggregates in a fixed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let start = Instant::now();
    let h = ClusterFunctional::parse(&cfg.functional)?;
    let threads = cfg.threads.unwrap_or_else(rayon::current_num_threads).max(1);

    let max_n = cfg.grid.iter().map(|g| g.n).max().unwrap_or(0);
    let in_flight = bytes_per_replicate(max_n).saturating_mul(threads);
    if in_flight > cfg.memory_budget {
        return Err(Error::Budget(format!(
            "n = {max_n} with {threads} workers needs about {in_flight} bytes, budget is {}",
            cfg.memory_budget
        )));
    }

    let mut seeds = HashSet::new();
    let mut units = Vec::with_capacity(cfg.grid.len() * cfg.replicates);
    for (g, _) in cfg.grid.iter().enumerate() {
        for rep in 0..cfg.replicates {
            let s = derive_seed(cfg.seed, &[g as u64, rep as u64]);
            if !seeds.insert(s) {
                return Err(Error::InvalidConfig(format!(
                    "derived seed collision at grid {g}, replicate {rep}"
                )));
            }
            units.push((g, s));
        }
    }

    let resolved: Vec<(usize, usize, f64, f64)> = cfg
        .grid
        .iter()
        .map(|g| {
            let (n, r, w) = g.resolve()?;
            let u = cfg.spec.threshold_for_w(w)?;
            Ok((n, r, w, u))
        })
        .collect::<Result<_>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<f64>>> = pool.install(|| {
        units
            .par_iter()
            .map(|&(g, seed)| {
                let (n, r, w, u) = resolved[g];
                let series = replicate_series(&cfg.spec, n, r, seed)?;
                let bc = BlockConfig {
                    r,
                    u,
                    w,
                    w_source: crate::blocks::WSource::Exact,
                    interior_only: false,
                };
                replicate_targets(&series, &cfg.spec, &bc, &h, &cfg.targets)
            })
            .collect()
    });
    let results: Vec<Vec<f64>> = results.into_iter().collect::<Result<_>>()?;

    let coeffs = cfg.spec.coeffs();
    let (c0, c1) = (coeffs[0], coeffs.get(1).copied().unwrap_or(0.0));
    let model = cfg.spec.to_string();
    let mut rows = Vec::new();
    for (g, &(n, r, w, _)) in resolved.iter().enumerate() {
        let block = &results[g * cfg.replicates..(g + 1) * cfg.replicates];
        for (k, t) in cfg.targets.iter().enumerate() {
            let values: Vec<f64> = block.iter().map(|v| v[k]).collect();
            let (mean, sd) = mean_sd(&values);
            rows.push(Row {
                model: model.clone(),
                alpha: cfg.spec.alpha(),
                c0,
                c1,
                n,
                r,
                w,
                replicates: cfg.replicates,
                target: t.to_string(),
                mean,
                sd,
                se: sd / (cfg.replicates as f64).sqrt(),
            });
        }
    }
    Ok(ConvergenceTable {
        metadata: TableMetadata {
            config_hash: cfg.config_hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: Some(start.elapsed().as_secs_f64()),
        },
        rows,
    })
}

/// Sample mean and standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Limit expected for a target, or `None` when the target has no limit.
pub fn expected_value(target: &Target, table: &LimitTable, piecewise: bool) -> Option<f64> {
    let theta = table.theta;
    Some(match *target {
        Target::DisjointStat | Target::SlidingStat | Target::Ecm => table.nu_h,
        Target::IcNorm => table.nu_ic,
        Target::BcNorm => {
            if piecewise {
                0.0
            } else {
                table.nu_bc
            }
        }
        Target::ScaledGap => table.nu_ic + table.nu_bc,
        Target::IcLargeNorm => table.ic_large_constant,
        Target::Pa1a2Small => table.small_block_pa1a2,
        Target::Pa1a2Large => table.large_block_pa1a2,
        Target::ClmLarge(g) => clusterlength_moment(theta, g),
        Target::JlLarge(g) => joint_length_moment(theta, g),
        Target::GapLarge => table.gap_constant,
        Target::BcOverRw => return None,
    })
}

/// Thresholds of the verdict rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictRule {
    pub n_se: f64,
    pub rel_tol: f64,
}

impl Default for VerdictRule {
    fn default() -> Self {
        Self { n_se: 3.0, rel_tol: 0.15 }
    }
}

/// Verdict for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetVerdict {
    pub target: String,
    pub expected: f64,
    pub means: Vec<f64>,
    pub final_mean: f64,
    pub final_se: f64,
    /// `|mean − expected| / |expected|`; absolute error when expected is 0.
    pub rel_error: f64,
    pub within_se: bool,
    /// `|mean − expected|` is nonincreasing along the grid.
    pub monotone: bool,
    pub pass: bool,
}

/// Verdicts for every target of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub rule: VerdictRule,
    pub verdicts: Vec<TargetVerdict>,
    pub all_pass: bool,
}

impl Persist for VerdictReport {
    fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => Ok(serde_json::to_string_pretty(self)?),
            Format::Csv => {
                let mut out = String::from("target,expected,final_mean,final_se,rel_error,within_se,monotone,pass\n");
                for v in &self.verdicts {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        v.target, v.expected, v.final_mean, v.final_se, v.rel_error, v.within_se, v.monotone, v.pass
                    ));
                }
                Ok(out)
            }
        }
    }

    fn parse(text: &str, format: Format) -> Result<Self> {
        match format {
            Format::Json => Ok(serde_json::from_str(text)?),
            Format::Csv => Err(Error::Unsupported("verdict reports load from JSON only".into())),
        }
    }
}

/// Applies the verdict rule per target against the expected values.
///
/// A target passes when the final mean is within `n_se` standard errors of
/// the expected value, or when its relative error is at most `rel_tol` and the
/// distance to the limit shrinks monotonically along the grid. An expected
/// value of 0 uses the absolute band only.
pub fn summarize(
    table: &ConvergenceTable,
    expected: &BTreeMap<String, f64>,
    rule: VerdictRule,
) -> Result<VerdictReport> {
    if table.rows.is_empty() {
        return Err(Error::InvalidConfig("empty convergence table".into()));
    }
    let mut targets: Vec<String> = Vec::new();
    for row in &table.rows {
        if !targets.contains(&row.target) {
            targets.push(row.target.clone());
        }
    }
    let mut verdicts = Vec::new();
    for t in targets {
        let exp = *expected
            .get(&t)
            .ok_or_else(|| Error::InvalidConfig(format!("no expected value for target `{t}`")))?;
        let rows = table.series(&t);
        let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
        let last = rows[rows.len() - 1];
        let err = (last.mean - exp).abs();
        let within_se = err <= rule.n_se * last.se;
        let errs: Vec<f64> = means.iter().map(|m| (m - exp).abs()).collect();
        let monotone = errs.windows(2).all(|p| p[1] <= p[0]);
        let (rel_error, pass) = if exp == 0.0 {
            (err, within_se)
        } else {
            let rel = err / exp.abs();
            (rel, within_se || (rel <= rule.rel_tol && monotone))
        };
        verdicts.push(TargetVerdict {
            target: t,
            expected: exp,
            means,
            final_mean: last.mean,
            final_se: last.se,
            rel_error,
            within_se,
            monotone,
            pass,
        });
    }
    let all_pass = verdicts.iter().all(|v| v.pass);
    Ok(VerdictReport { rule, verdicts, all_pass })
}

/// Expected values for every target of `cfg` that has a limit.
pub fn expected_map(cfg: &ExperimentConfig, table: &LimitTable) -> BTreeMap<String, f64> {
    cfg.targets
        .iter()
        .filter_map(|t| expected_value(t, table, cfg.spec.is_piecewise()).map(|v| (t.to_string(), v)))
        .collect()
}
