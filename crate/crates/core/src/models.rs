//! Regularly varying magnitude series and the MMA(1) tail process.
//!
//! Innovations are standard Pareto(α) on `[1, ∞)`, so every marginal tail of a
//! moving-maxima model has a closed form: `P(X₀ ≤ x) = Π_k P(ξ ≤ x / c_k)`.
//! Moving maxima of order q are `X_j = max_k c_k ξ_{j+k}`; the MMA(1) case is
//! `X_j = c₀ξ_j ∨ c₁ξ_{j+1}`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model of a nonnegative regularly varying series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// I.i.d. standard Pareto(α).
    IidPareto { alpha: f64 },
    /// `X_j = c₀ξ_j ∨ c₁ξ_{j+1}`.
    Mma1 { c0: f64, c1: f64, alpha: f64 },
    /// `X_j = max_{k=0..q} c_k ξ_{j+k}`.
    Mmaq { coeffs: Vec<f64>, alpha: f64 },
    /// Independent copies of `inner`, one per block of `block_size`.
    Piecewise { inner: Box<ModelSpec>, block_size: usize },
}

impl ModelSpec {
    pub fn iid(alpha: f64) -> Result<Self> {
        let spec = ModelSpec::IidPareto { alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mma1(c0: f64, c1: f64, alpha: f64) -> Result<Self> {
        let spec = ModelSpec::Mma1 { c0, c1, alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mmaq(coeffs: Vec<f64>, alpha: f64) -> Result<Self> {
        let spec = ModelSpec::Mmaq { coeffs, alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn piecewise(inner: ModelSpec, block_size: usize) -> Result<Self> {
        let spec = ModelSpec::Piecewise {
            inner: Box::new(inner),
            block_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the model invariants.
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Piecewise { inner, block_size } => {
                if matches!(**inner, ModelSpec::Piecewise { .. }) {
                    return Err(Error::InvalidModel(
                        "piecewise models cannot be nested".into(),
                    ));
                }
                if *block_size == 0 {
                    return Err(Error::InvalidModel("block_size must be positive".into()));
                }
                inner.validate()
            }
            _ => {
                let alpha = self.alpha();
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::InvalidModel(format!("alpha must be > 0, got {alpha}")));
                }
                let coeffs = self.coeffs();
                if coeffs.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
                    return Err(Error::InvalidModel(
                        "coefficients must be finite and nonnegative".into(),
                    ));
                }
                if !coeffs.iter().any(|&c| c > 0.0) {
                    return Err(Error::InvalidModel(
                        "at least one coefficient must be positive".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Tail index of the innovations.
    pub fn alpha(&self) -> f64 {
        match self {
            ModelSpec::IidPareto { alpha }
            | ModelSpec::Mma1 { alpha, .. }
            | ModelSpec::Mmaq { alpha, .. } => *alpha,
            ModelSpec::Piecewise { inner, .. } => inner.alpha(),
        }
    }

    /// Moving-maxima coefficients `c_0..c_q` (i.i.d. is `[1]`).
    pub fn coeffs(&self) -> Vec<f64> {
        match self {
            ModelSpec::IidPareto { .. } => vec![1.0],
            ModelSpec::Mma1 { c0, c1, .. } => vec![*c0, *c1],
            ModelSpec::Mmaq { coeffs, .. } => coeffs.clone(),
            ModelSpec::Piecewise { inner, .. } => inner.coeffs(),
        }
    }

    /// The stationary model underneath a piecewise wrapper.
    pub fn base(&self) -> &ModelSpec {
        match self {
            ModelSpec::Piecewise { inner, .. } => inner,
            other => other,
        }
    }

    pub fn is_piecewise(&self) -> bool {
        matches!(self, ModelSpec::Piecewise { .. })
    }

    /// `(c0, c1)` of the MMA(1) view of this model, if it has one.
    pub fn mma1_coeffs(&self) -> Option<(f64, f64)> {
        match self.base() {
            ModelSpec::Mma1 { c0, c1, .. } => Some((*c0, *c1)),
            ModelSpec::IidPareto { .. } => Some((1.0, 0.0)),
            ModelSpec::Mmaq { coeffs, .. } if coeffs.len() <= 2 => {
                Some((coeffs[0], coeffs.get(1).copied().unwrap_or(0.0)))
            }
            _ => None,
        }
    }

    /// Short family label used in tables.
    pub fn family(&self) -> String {
        match self {
            ModelSpec::IidPareto { .. } => "iid".into(),
            ModelSpec::Mma1 { .. } => "mma1".into(),
            ModelSpec::Mmaq { .. } => "mmaq".into(),
            ModelSpec::Piecewise { inner, .. } => format!("piecewise({})", inner.family()),
        }
    }

    /// Exact marginal tail `P(X₀ > x)`.
    pub fn marginal_tail(&self, x: f64) -> Result<f64> {
        let coeffs = self.coeffs();
        let alpha = self.alpha();
        let min = coeffs.iter().copied().fold(0.0, f64::max);
        if !(x >= min) {
            return Err(Error::BelowSupport { x, min });
        }
        Ok(-log_cdf_product(&coeffs, alpha, x).exp_m1())
    }

    /// Threshold `u` with `P(X₀ > u) = w`, by monotone bisection.
    pub fn threshold_for_w(&self, w: f64) -> Result<f64> {
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::ProbabilityOutOfRange(w));
        }
        let coeffs = self.coeffs();
        let alpha = self.alpha();
        let tail = |x: f64| -log_cdf_product(&coeffs, alpha, x).exp_m1();

        let mut lo = coeffs.iter().copied().fold(0.0, f64::max);
        let mut hi = lo.max(1.0) * 2.0;
        while tail(hi) > w {
            lo = hi;
            hi *= 2.0;
        }
        // tail(lo) >= w > tail(hi) holds from here on.
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if tail(mid) > w {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (dl, dh) = ((tail(lo) - w).abs(), (tail(hi) - w).abs());
        Ok(if dl < dh { lo } else { hi })
    }

    /// Draws a series of length `n`. Deterministic in `(self, n, seed)`.
    pub fn generate(&self, n: usize, seed: u64) -> Result<MagnitudeSeries> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidConfig("series length must be positive".into()));
        }
        let values = match self {
            ModelSpec::Piecewise { inner, block_size } => {
                if n % block_size != 0 {
                    return Err(Error::InvalidConfig(format!(
                        "n = {n} is not a multiple of block_size = {block_size}"
                    )));
                }
                let mut values = Vec::with_capacity(n);
                for block in 0..n / block_size {
                    let block_seed = derive_seed(seed, &[block as u64]);
                    values.extend(moving_maxima(&inner.coeffs(), inner.alpha(), *block_size, block_seed));
                }
                values
            }
            _ => moving_maxima(&self.coeffs(), self.alpha(), n, seed),
        };
        Ok(MagnitudeSeries {
            values,
            model: Some(self.clone()),
            seed: Some(seed),
        })
    }
}

/// `Σ_k ln P(ξ ≤ x / c_k)`; `-inf` if some factor vanishes.
fn log_cdf_product(coeffs: &[f64], alpha: f64, x: f64) -> f64 {
    coeffs
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| log_pareto_cdf(x / c, alpha))
        .sum()
}

/// `ln P(ξ ≤ t)` for standard Pareto(α).
pub(crate) fn log_pareto_cdf(t: f64, alpha: f64) -> f64 {
    if t <= 1.0 {
        f64::NEG_INFINITY
    } else {
        (-t.powf(-alpha)).ln_1p()
    }
}

fn moving_maxima(coeffs: &[f64], alpha: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pareto = Pareto::new(1.0, alpha).expect("alpha validated");
    let q = coeffs.len() - 1;
    let xi: Vec<f64> = (0..n + q).map(|_| pareto.sample(&mut rng)).collect();
    match coeffs {
        [c0] => xi.iter().map(|x| c0 * x).collect(),
        [c0, c1] => xi.windows(2).map(|p| (c0 * p[0]).max(c1 * p[1])).collect(),
        _ => xi
            .windows(q + 1)
            .map(|win| {
                win.iter()
                    .zip(coeffs)
                    .map(|(x, c)| c * x)
                    .fold(0.0, f64::max)
            })
            .collect(),
    }
}

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a root seed and a path of indices.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(root), |acc, &i| splitmix(acc ^ splitmix(i.wrapping_add(0xA076_1D64_78BD_642F))))
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::IidPareto { alpha } => write!(f, "iid:{alpha}"),
            ModelSpec::Mma1 { c0, c1, alpha } => write!(f, "mma1:{c0},{c1},{alpha}"),
            ModelSpec::Mmaq { coeffs, alpha } => {
                let cs: Vec<String> = coeffs.iter().map(|c| c.to_string()).collect();
                write!(f, "mmaq:{alpha}:{}", cs.join(","))
            }
            ModelSpec::Piecewise { inner, block_size } => write!(f, "piecewise({inner}):{block_size}"),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// Parses `iid:α`, `mma1:c0,c1,α`, `mmaq:α:c0,…,cq` and `piecewise(<model>):r`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidModel(format!("cannot parse model `{s}`"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());

        if let Some(rest) = s.strip_prefix("piecewise(") {
            let close = rest.rfind(')').ok_or_else(bad)?;
            let inner: ModelSpec = rest[..close].parse()?;
            let r = rest[close + 1..]
                .strip_prefix(':')
                .ok_or_else(bad)?
                .trim()
                .parse::<usize>()
                .map_err(|_| bad())?;
            return ModelSpec::piecewise(inner, r);
        }
        let (family, args) = s.split_once(':').ok_or_else(bad)?;
        match family {
            "iid" => ModelSpec::iid(num(args)?),
            "mma1" => {
                let parts: Vec<&str> = args.split(',').collect();
                if parts.len() != 3 {
                    return Err(bad());
                }
                ModelSpec::mma1(num(parts[0])?, num(parts[1])?, num(parts[2])?)
            }
            "mmaq" => {
                let (alpha, cs) = args.split_once(':').ok_or_else(bad)?;
                let coeffs = cs.split(',').map(num).collect::<Result<Vec<_>>>()?;
                ModelSpec::mmaq(coeffs, num(alpha)?)
            }
            _ => Err(bad()),
        }
    }
}

/// Nonnegative magnitudes `‖X_1‖, …, ‖X_n‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeSeries {
    values: Vec<f64>,
    /// Generating model, when known.
    pub model: Option<ModelSpec>,
    pub seed: Option<u64>,
}

impl MagnitudeSeries {
    /// Wraps raw magnitudes; rejects empty input and negative or non-finite entries.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("series must be nonempty".into()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "entry {i} = {v} is not a finite nonnegative magnitude"
            )));
        }
        Ok(Self {
            values,
            model: None,
            seed: None,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for MagnitudeSeries {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Tail-process path on lags −1, 0, 1 (all other lags vanish for MMA(1)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPath {
    pub y_minus1: f64,
    pub y_0: f64,
    pub y_1: f64,
}

impl TailPath {
    /// Lags 0 and 1 as a window; the `Z` process has no exceedance before 0.
    pub fn forward_window(&self) -> [f64; 2] {
        [self.y_0, self.y_1]
    }

    /// Spectral tail process `Θ_j = Y_j / |Y_0|` on lags −1, 0, 1.
    pub fn spectral(&self) -> [f64; 3] {
        [self.y_minus1 / self.y_0, 1.0, self.y_1 / self.y_0]
    }
}

/// Running acceptance counts of the rejection sampler for `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl AcceptanceStats {
    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// Exact sampler of the MMA(1) tail process `Y` and of `Z = Y | Y*_{-∞,-1} ≤ 1`.
#[derive(Debug, Clone)]
pub struct TailSampler {
    ratio_forward: f64,
    ratio_backward: f64,
    p_forward: f64,
    pareto: Pareto<f64>,
    rng: ChaCha8Rng,
    stats: AcceptanceStats,
}

impl TailSampler {
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let (c0, c1) = match spec {
            ModelSpec::Mma1 { c0, c1, .. } => (*c0, *c1),
            other => {
                return Err(Error::Unsupported(format!(
                    "tail-process sampling needs an MMA(1) model, got {}",
                    other.family()
                )))
            }
        };
        spec.validate()?;
        let alpha = spec.alpha();
        let (a0, a1) = (c0.powf(alpha), c1.powf(alpha));
        Ok(Self {
            ratio_forward: if c0 > 0.0 { c1 / c0 } else { 0.0 },
            ratio_backward: if c1 > 0.0 { c0 / c1 } else { 0.0 },
            p_forward: a0 / (a0 + a1),
            pareto: Pareto::new(1.0, alpha).expect("alpha validated"),
            rng: ChaCha8Rng::seed_from_u64(seed),
            stats: AcceptanceStats::default(),
        })
    }

    /// One draw of `(Y_{-1}, Y_0, Y_1)`.
    pub fn sample_y(&mut self) -> TailPath {
        let y_0 = self.pareto.sample(&mut self.rng);
        let forward = self.rng.random_bool(self.p_forward);
        if forward {
            TailPath {
                y_minus1: 0.0,
                y_0,
                y_1: self.ratio_forward * y_0,
            }
        } else {
            TailPath {
                y_minus1: self.ratio_backward * y_0,
                y_0,
                y_1: 0.0,
            }
        }
    }

    /// One draw of `Z` by rejection from `Y`.
    pub fn sample_z(&mut self) -> TailPath {
        loop {
            let y = self.sample_y();
            self.stats.proposals += 1;
            if y.y_minus1 <= 1.0 {
                self.stats.accepted += 1;
                return y;
            }
        }
    }

    pub fn stats(&self) -> AcceptanceStats {
        self.stats
    }
}

/// One `Y` draw and one `Z` draw from a fresh sampler.
pub fn sample_tail_and_z(spec: &ModelSpec, seed: u64) -> Result<(TailPath, TailPath, AcceptanceStats)> {
    let mut sampler = TailSampler::new(spec, seed)?;
    let y = sampler.sample_y();
    let z = sampler.sample_z();
    Ok((y, z, sampler.stats()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iid_values_exceed_one() {
        let s = ModelSpec::iid(1.0).unwrap().generate(3, 7).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.values().iter().all(|&v| v > 1.0));
    }

    #[test]
    fn degenerate_mma1_is_the_innovation_path() {
        let a = ModelSpec::mma1(1.0, 0.0, 2.0).unwrap().generate(50, 3).unwrap();
        let b = ModelSpec::iid(2.0).unwrap().generate(51, 3).unwrap();
        // MMA(1) draws n + 1 innovations from the same stream.
        assert_eq!(a.values(), &b.values()[..50]);
    }

    #[test]
    fn all_zero_coefficients_rejected() {
        assert!(ModelSpec::mma1(0.0, 0.0, 1.0).is_err());
        assert!(ModelSpec::mmaq(vec![0.0, 0.0, 0.0], 1.0).is_err());
        assert!(ModelSpec::iid(0.0).is_err());
    }

    #[test]
    fn piecewise_requires_divisible_length() {
        let spec = ModelSpec::piecewise(ModelSpec::mma1(1.0, 1.0, 1.0).unwrap(), 4).unwrap();
        assert!(spec.generate(10, 1).is_err());
        assert_eq!(spec.generate(12, 1).unwrap().len(), 12);
    }

    #[test]
    fn piecewise_cannot_nest() {
        let inner = ModelSpec::piecewise(ModelSpec::iid(1.0).unwrap(), 4).unwrap();
        assert!(ModelSpec::piecewise(inner, 2).is_err());
    }

    #[test]
    fn piecewise_blocks_are_individually_reproducible() {
        let inner = ModelSpec::mma1(1.0, 1.0, 1.0).unwrap();
        let spec = ModelSpec::piecewise(inner.clone(), 5).unwrap();
        let s = spec.generate(20, 11).unwrap();
        let block2 = inner.generate(5, derive_seed(11, &[2])).unwrap();
        assert_eq!(&s.values()[10..15], block2.values());
    }

    #[test]
    fn marginal_closed_form() {
        let spec = ModelSpec::mma1(1.0, 1.0, 1.0).unwrap();
        let w = spec.marginal_tail(20.0).unwrap();
        assert!((w - 0.0975).abs() < 1e-15);
        let single = ModelSpec::mma1(1.0, 0.0, 2.5).unwrap();
        assert!((single.marginal_tail(3.0).unwrap() - 3f64.powf(-2.5)).abs() < 1e-15);
    }

    #[test]
    fn marginal_scaling_limit() {
        let spec = ModelSpec::mma1(1.0, 2.0, 1.5).unwrap();
        let x = 1e6;
        let ratio = spec.marginal_tail(x).unwrap() * x.powf(1.5);
        let limit = 1.0 + 2f64.powf(1.5);
        assert!((ratio / limit - 1.0).abs() < 0.01);
    }

    #[test]
    fn marginal_below_support_is_an_error() {
        let spec = ModelSpec::mma1(1.0, 2.0, 1.0).unwrap();
        assert!(matches!(spec.marginal_tail(1.5), Err(Error::BelowSupport { .. })));
    }

    #[test]
    fn threshold_known_roots() {
        let spec = ModelSpec::mma1(1.0, 1.0, 1.0).unwrap();
        let u = spec.threshold_for_w(0.1).unwrap();
        // 0.1 u² − 2u + 1 = 0
        let exact = (2.0 + (4.0f64 - 0.4).sqrt()) / 0.2;
        assert!((u - exact).abs() < 1e-9, "{u} vs {exact}");
        let iid = ModelSpec::iid(1.0).unwrap();
        assert!((iid.threshold_for_w(0.01).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn threshold_rejects_bad_probability() {
        let spec = ModelSpec::iid(1.0).unwrap();
        for w in [0.0, 1.0, -0.5, 2.0, f64::NAN] {
            assert!(spec.threshold_for_w(w).is_err());
        }
    }

    #[test]
    fn threshold_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let specs = [
            ModelSpec::mma1(1.0, 1.0, 1.0).unwrap(),
            ModelSpec::mma1(0.5, 2.0, 3.0).unwrap(),
            ModelSpec::mmaq(vec![1.0, 0.3, 0.7], 0.8).unwrap(),
        ];
        for spec in &specs {
            for _ in 0..100 {
                let w = 10f64.powf(-rng.random_range(0.01..8.0));
                let u = spec.threshold_for_w(w).unwrap();
                let back = spec.marginal_tail(u).unwrap();
                assert!((back - w).abs() <= 1e-12 * w, "{spec}: w={w} back={back}");
            }
        }
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let spec = ModelSpec::mmaq(vec![1.0, 0.5, 0.25], 1.3).unwrap();
        let a = spec.generate(1000, 99).unwrap();
        let b = spec.generate(1000, 99).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.values(), spec.generate(1000, 100).unwrap().values());
    }

    #[test]
    fn parse_display_round_trip() {
        for s in ["iid:1.5", "mma1:1,2,1", "mmaq:2:1,0.5,0.25", "piecewise(mma1:1,1,1):16"] {
            let spec: ModelSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
            assert_eq!(spec.to_string().parse::<ModelSpec>().unwrap(), spec);
        }
        assert!("mma1:1,1".parse::<ModelSpec>().is_err());
        assert!("ar1:0.5".parse::<ModelSpec>().is_err());
        assert!("piecewise(piecewise(iid:1):2):4".parse::<ModelSpec>().is_err());
    }

    #[test]
    fn tail_path_structure() {
        let spec = ModelSpec::mma1(1.0, 2.0, 1.0).unwrap();
        let mut sampler = TailSampler::new(&spec, 1).unwrap();
        for _ in 0..1000 {
            let y = sampler.sample_y();
            assert!(y.y_0 > 1.0);
            assert!(y.y_minus1 == 0.0 || y.y_1 == 0.0);
            let z = sampler.sample_z();
            assert!(z.y_minus1 <= 1.0);
        }
    }

    #[test]
    fn extremally_independent_sampler_always_accepts() {
        let spec = ModelSpec::mma1(1.0, 0.0, 1.0).unwrap();
        let mut sampler = TailSampler::new(&spec, 2).unwrap();
        for _ in 0..500 {
            let z = sampler.sample_z();
            assert_eq!((z.y_minus1, z.y_1), (0.0, 0.0));
        }
        assert_eq!(sampler.stats().rate(), 1.0);
    }

    #[test]
    fn sampler_rejects_non_mma1() {
        assert!(TailSampler::new(&ModelSpec::iid(1.0).unwrap(), 0).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let mut seen = std::collections::HashSet::new();
        for g in 0..10u64 {
            for r in 0..1000u64 {
                assert!(seen.insert(derive_seed(42, &[g, r])));
            }
        }
    }
}
