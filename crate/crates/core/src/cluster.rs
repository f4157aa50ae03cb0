//! Exceedance times, cluster functionals and the induced functionals.
//!
//! Windows are always pre-scaled by the threshold, so an entry is an
//! exceedance when it is strictly greater than 1.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exceedance times and derived quantities of one window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExceedancePattern {
    pub count: usize,
    /// 1-based positions of exceedances, strictly increasing.
    pub times: Vec<usize>,
    pub t_min: Option<usize>,
    pub t_max: Option<usize>,
    pub gaps: Vec<usize>,
    /// Cluster length `t_max - t_min + 1`, or 0 without exceedances.
    pub length: usize,
}

impl ExceedancePattern {
    /// Scans `window` for entries strictly above `threshold`.
    pub fn of(window: &[f64], threshold: f64) -> Self {
        let times: Vec<usize> = window
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > threshold)
            .map(|(i, _)| i + 1)
            .collect();
        let gaps: Vec<usize> = times.windows(2).map(|p| p[1] - p[0]).collect();
        let t_min = times.first().copied();
        let t_max = times.last().copied();
        let length = match (t_min, t_max) {
            (Some(a), Some(b)) => b - a + 1,
            _ => 0,
        };
        Self {
            count: times.len(),
            times,
            t_min,
            t_max,
            gaps,
            length,
        }
    }

    /// The 0-based inclusive range `[t_min, t_max]`, if any exceedance exists.
    pub fn core_range(&self) -> Option<std::ops::RangeInclusive<usize>> {
        Some(self.t_min? - 1..=self.t_max? - 1)
    }
}

/// Exceedance pattern relative to `threshold`.
pub fn exceedance_pattern(window: &[f64], threshold: f64) -> ExceedancePattern {
    ExceedancePattern::of(window, threshold)
}

/// Index range `[first, last]` (0-based) of entries above 1.
fn core_bounds(window: &[f64]) -> Option<(usize, usize)> {
    let first = window.iter().position(|&x| x > 1.0)?;
    let last = window.iter().rposition(|&x| x > 1.0)?;
    Some((first, last))
}

/// User evaluator on scaled windows.
pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Indicator,
    Length,
    Count,
    LengthPow(f64),
    Custom(Evaluator),
}

/// A cluster functional `H` of growth class `γ` with constant `C_H`.
#[derive(Clone)]
pub struct ClusterFunctional {
    name: String,
    gamma: f64,
    growth_constant: f64,
    kind: Kind,
}

impl fmt::Debug for ClusterFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClusterFunctional")
            .field("name", &self.name)
            .field("gamma", &self.gamma)
            .field("growth_constant", &self.growth_constant)
            .finish()
    }
}

impl ClusterFunctional {
    /// `1{x* > 1}`.
    pub fn indicator() -> Self {
        Self::builtin("indicator", 0.0, Kind::Indicator)
    }

    /// Cluster length `L`.
    pub fn length() -> Self {
        Self::builtin("length", 1.0, Kind::Length)
    }

    /// Number of exceedances `E`.
    pub fn count() -> Self {
        Self::builtin("count", 1.0, Kind::Count)
    }

    /// `L^γ`, with `γ = 0` giving the indicator.
    pub fn length_pow(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Functional {
                name: format!("length^{gamma}"),
                reason: "exponent must be finite and nonnegative".into(),
            });
        }
        Ok(Self::builtin(&format!("length^{gamma}"), gamma, Kind::LengthPow(gamma)))
    }

    fn builtin(name: &str, gamma: f64, kind: Kind) -> Self {
        Self {
            name: name.to_string(),
            gamma,
            growth_constant: 1.0,
            kind,
        }
    }

    /// Parses a built-in name: `indicator`, `length`, `count` or `length^<γ>`.
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim() {
            "indicator" => Ok(Self::indicator()),
            "length" => Ok(Self::length()),
            "count" => Ok(Self::count()),
            other => match other.strip_prefix("length^") {
                Some(g) => {
                    let gamma = g.trim().parse::<f64>().map_err(|_| Error::Functional {
                        name: other.into(),
                        reason: "cannot parse exponent".into(),
                    })?;
                    Self::length_pow(gamma)
                }
                None => Err(Error::Functional {
                    name: other.into(),
                    reason: "unknown functional".into(),
                }),
            },
        }
    }

    /// Registers a user evaluator after probing it on 64 seeded windows.
    ///
    /// The probes check that `H` vanishes without exceedances, depends only on
    /// the stretch between the first and last exceedance, is nonnegative and
    /// obeys `H ≤ C_H L^γ`. Continuity cannot be checked and is assumed.
    pub fn custom<F>(name: &str, gamma: f64, growth_constant: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let reject = |reason: String| Error::Functional {
            name: name.to_string(),
            reason,
        };
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(reject("gamma must be finite and nonnegative".into()));
        }
        if !(growth_constant > 0.0 && growth_constant.is_finite()) {
            return Err(reject("growth constant must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_F00D);
        for probe in 0..64 {
            let len = rng.random_range(1..=24);
            let quiet: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..=1.0)).collect();
            let v = f(&quiet);
            if v != 0.0 {
                return Err(reject(format!(
                    "probe {probe}: nonzero value {v} on a window without exceedances"
                )));
            }

            let mut window = quiet;
            let hits = rng.random_range(1..=len.min(4));
            for _ in 0..hits {
                let at = rng.random_range(0..len);
                window[at] = 1.0 + rng.random_range(0.0..10.0f64).powi(2) + f64::EPSILON;
            }
            let (a, b) = core_bounds(&window).expect("probe has an exceedance");
            let full = f(&window);
            let core = f(&window[a..=b]);
            if full != core {
                return Err(reject(format!(
                    "probe {probe}: value depends on entries outside the exceedance range ({full} vs {core})"
                )));
            }
            if !(full >= 0.0 && full.is_finite()) {
                return Err(reject(format!("probe {probe}: value {full} is not finite and nonnegative")));
            }
            let bound = growth_constant * ((b - a + 1) as f64).powf(gamma);
            if full > bound * (1.0 + 1e-12) {
                return Err(reject(format!(
                    "probe {probe}: value {full} exceeds growth bound {bound}"
                )));
            }
        }
        Ok(Self {
            name: name.to_string(),
            gamma,
            growth_constant,
            kind: Kind::Custom(Arc::new(f)),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }

    /// True when every value is an integer, so sums of values are exact in f64.
    pub fn is_integer_valued(&self) -> bool {
        match self.kind {
            Kind::Indicator | Kind::Length | Kind::Count => true,
            Kind::LengthPow(g) => g.fract() == 0.0,
            Kind::Custom(_) => false,
        }
    }

    /// True when the value is a function of the exceedance times alone.
    pub fn is_pattern_only(&self) -> bool {
        !matches!(self.kind, Kind::Custom(_))
    }

    /// `H(window)` on a scaled window; 0 when nothing exceeds 1.
    pub fn eval(&self, window: &[f64]) -> f64 {
        match &self.kind {
            Kind::Custom(f) => {
                if core_bounds(window).is_none() {
                    0.0
                } else {
                    f(window)
                }
            }
            Kind::Count => window.iter().filter(|&&x| x > 1.0).count() as f64,
            kind => match core_bounds(window) {
                None => 0.0,
                Some((a, b)) => {
                    let len = (b - a + 1) as f64;
                    match kind {
                        Kind::Indicator => 1.0,
                        Kind::Length => len,
                        Kind::LengthPow(g) => len.powf(*g),
                        _ => unreachable!(),
                    }
                }
            },
        }
    }

    /// Serializable description.
    pub fn describe(&self) -> FunctionalInfo {
        FunctionalInfo {
            name: self.name.clone(),
            gamma: self.gamma,
            growth_constant: self.growth_constant,
        }
    }
}

/// Serializable description of a functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalInfo {
    pub name: String,
    pub gamma: f64,
    pub growth_constant: f64,
}

/// `H(window)`.
pub fn eval_functional(h: &ClusterFunctional, window: &[f64]) -> f64 {
    h.eval(window)
}

/// `Σ_{i=1}^{N-1} ΔT_i { H(x up to T_i) + H(x from T_{i+1}) − H(x) }`.
pub fn induced_ic(h: &ClusterFunctional, window: &[f64]) -> f64 {
    let times: Vec<usize> = window
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 1.0)
        .map(|(i, _)| i)
        .collect();
    if times.len() < 2 {
        return 0.0;
    }
    let (first, last) = (times[0], times[times.len() - 1]);
    let whole = h.eval(&window[first..=last]);
    let mut total = 0.0;
    for pair in times.windows(2) {
        let (ti, next) = (pair[0], pair[1]);
        let term = h.eval(&window[first..=ti]) + h.eval(&window[next..=last]) - whole;
        total += (next - ti) as f64 * term;
    }
    total
}

/// How the boundary-cluster summands are combined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BcMode {
    Signed,
    Power(f64),
}

impl BcMode {
    pub fn new(p: Option<f64>) -> Result<Self> {
        match p {
            None => Ok(BcMode::Signed),
            Some(p) if p > 0.0 && p.is_finite() => Ok(BcMode::Power(p)),
            Some(p) => Err(Error::InvalidConfig(format!("p must be positive, got {p}"))),
        }
    }
}

/// `Σ_{i=1}^{L-1} { H(x) − H(left_i) − H(right_i) }` with cuts anchored at `T_min`.
///
/// Cut `i` splits the window after position `T_min + i − 1`. With
/// [`BcMode::Power`] each summand enters as `|·|^p`.
pub fn induced_bc(h: &ClusterFunctional, window: &[f64], mode: BcMode) -> Result<f64> {
    if let BcMode::Power(p) = mode {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidConfig(format!("p must be positive, got {p}")));
        }
    }
    let Some((first, last)) = core_bounds(window) else {
        return Ok(0.0);
    };
    let core = &window[first..=last];
    let whole = h.eval(core);
    let mut total = 0.0;
    for cut in 1..core.len() {
        let term = whole - h.eval(&core[..cut]) - h.eval(&core[cut..]);
        total += match mode {
            BcMode::Signed => term,
            BcMode::Power(p) => term.abs().powf(p),
        };
    }
    Ok(total)
}

/// Named functionals available to the CLI and harness.
#[derive(Debug, Clone, Default)]
pub struct FunctionalRegistry {
    custom: BTreeMap<String, ClusterFunctional>,
}

impl FunctionalRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an already validated custom functional. Built-in names are reserved.
    pub fn register(&mut self, h: ClusterFunctional) -> Result<()> {
        if ClusterFunctional::parse(h.name()).is_ok() {
            return Err(Error::Functional {
                name: h.name().into(),
                reason: "name collides with a built-in".into(),
            });
        }
        self.custom.insert(h.name().to_string(), h);
        Ok(())
    }

    /// Looks up a custom name first, then the built-ins.
    pub fn get(&self, name: &str) -> Result<ClusterFunctional> {
        match self.custom.get(name.trim()) {
            Some(h) => Ok(h.clone()),
            None => ClusterFunctional::parse(name),
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["indicator", "length", "count", "length^<gamma>"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        names.extend(self.custom.keys().cloned());
        names
    }
}
