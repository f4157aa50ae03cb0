//! Closed-form MMA(1) constants, Monte Carlo cluster indices via `Z`, and the
//! anticlustering sum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{induced_bc, induced_ic, BcMode, ClusterFunctional};
use crate::error::{Error, Result};
use crate::models::{derive_seed, log_pareto_cdf, ModelSpec, TailSampler};

/// `(θ, P(Y₁ > 1))` for `X_j = c₀ξ_j ∨ c₁ξ_{j+1}`.
pub fn mma1_constants(c0: f64, c1: f64, alpha: f64) -> Result<(f64, f64)> {
    ModelSpec::mma1(c0, c1, alpha)?;
    let (a0, a1) = (c0.powf(alpha), c1.powf(alpha));
    let (hi, lo) = (a0.max(a1), a0.min(a1));
    let total = a0 + a1;
    Ok((hi / total, lo / total))
}

/// Constants of a model with an MMA(1) view (i.i.d. is `c₁ = 0`).
fn constants_of(spec: &ModelSpec) -> Result<(f64, f64)> {
    let (c0, c1) = spec.mma1_coeffs().ok_or_else(|| {
        Error::Unsupported(format!("closed-form constants need an MMA(1) model, got {}", spec.family()))
    })?;
    mma1_constants(c0, c1, spec.alpha())
}

/// Which functional of `Z` is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Induced {
    /// `H` itself.
    Plain,
    /// `H̃_IC`.
    Ic,
    /// `H̃_BC`.
    Bc,
    /// `H̃_BC,p`.
    BcP(f64),
}

impl Induced {
    pub fn apply(&self, h: &ClusterFunctional, window: &[f64]) -> Result<f64> {
        match *self {
            Induced::Plain => Ok(h.eval(window)),
            Induced::Ic => Ok(induced_ic(h, window)),
            Induced::Bc => induced_bc(h, window, BcMode::Signed),
            Induced::BcP(p) => induced_bc(h, window, BcMode::Power(p)),
        }
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub samples: usize,
    /// Fraction of `Y` proposals accepted as `Z`.
    pub acceptance_rate: f64,
}

const MC_CHUNK: usize = 4096;

/// `ν*(G) = θ E[G(Z)]` by sampling `Z = (Z₀, Z₁)`.
///
/// Draws are split into fixed chunks, each with its own derived seed, so the
/// result does not depend on the number of threads.
pub fn cluster_index_mc(
    h: &ClusterFunctional,
    variant: Induced,
    spec: &ModelSpec,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 1000 {
        return Err(Error::InvalidConfig(format!("need at least 1000 samples, got {samples}")));
    }
    if !matches!(spec, ModelSpec::Mma1 { .. }) {
        return Err(Error::Unsupported(format!(
            "Z sampling is only available for MMA(1), got {}",
            spec.family()
        )));
    }
    let (theta, _) = constants_of(spec)?;
    let chunks = samples.div_ceil(MC_CHUNK);
    let partial: Vec<Result<(f64, f64, u64, u64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut sampler = TailSampler::new(spec, derive_seed(seed, &[c as u64]))?;
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let z = sampler.sample_z();
                let g = variant.apply(h, &z.forward_window())?;
                s1 += g;
                s2 += g * g;
            }
            let st = sampler.stats();
            Ok((s1, s2, st.proposals, st.accepted))
        })
        .collect();
    let (mut s1, mut s2, mut prop, mut acc) = (0.0, 0.0, 0u64, 0u64);
    for p in partial {
        let (a, b, c, d) = p?;
        s1 += a;
        s2 += b;
        prop += c;
        acc += d;
    }
    let n = samples as f64;
    let mean = s1 / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        estimate: theta * mean,
        standard_error: theta * (var / n).sqrt(),
        samples,
        acceptance_rate: acc as f64 / prop as f64,
    })
}

/// How the cluster indices of a table were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexSource {
    ClosedForm,
    MonteCarlo,
}

/// Limit constants for an MMA(1) model, a functional and a growth exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitTable {
    pub c0: f64,
    pub c1: f64,
    pub alpha: f64,
    pub functional: String,
    pub gamma: f64,
    pub theta: f64,
    pub p_y1: f64,
    /// `ν*(H)`.
    pub nu_h: f64,
    pub nu_ic: f64,
    pub nu_bc: f64,
    pub index_source: IndexSource,
    /// Standard errors of the Monte Carlo indices, when used.
    pub nu_se: Option<[f64; 3]>,
    /// `θ E[L(Z) − 1]`.
    pub small_block_pa1a2: f64,
    /// `θ²`.
    pub large_block_pa1a2: f64,
    /// `θ² / ((γ+1)(γ+2))`.
    pub clusterlength_moment: f64,
    /// `(2^{γ+2} − 1) θ² / ((γ+1)(γ+2))`.
    pub joint_length_moment: f64,
    /// `θ² / 6`.
    pub gap_constant: f64,
    /// `θ² / 6`.
    pub ic_large_constant: f64,
}

/// `θ² / ((γ+1)(γ+2))`.
pub fn clusterlength_moment(theta: f64, gamma: f64) -> f64 {
    theta * theta / ((gamma + 1.0) * (gamma + 2.0))
}

/// `(2^{γ+2} − 1) θ² / ((γ+1)(γ+2))`.
pub fn joint_length_moment(theta: f64, gamma: f64) -> f64 {
    (2f64.powf(gamma + 2.0) - 1.0) * clusterlength_moment(theta, gamma)
}

/// Builds the table. Pattern-only functionals get exact indices from the
/// two-atom law of the exceedance pattern of `Z`; others are estimated with
/// `mc_samples` draws.
pub fn limit_table(
    spec: &ModelSpec,
    h: &ClusterFunctional,
    gamma: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<LimitTable> {
    let (c0, c1) = spec
        .mma1_coeffs()
        .ok_or_else(|| Error::Unsupported(format!("limit tables need an MMA(1) model, got {}", spec.family())))?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!("gamma must be nonnegative, got {gamma}")));
    }
    let alpha = spec.alpha();
    let (theta, p_y1) = mma1_constants(c0, c1, alpha)?;

    let (nu_h, nu_ic, nu_bc, index_source, nu_se) = if h.is_pattern_only() {
        // Z has one exceedance with mass θ − P(Y₁>1) and two adjacent ones
        // with mass P(Y₁>1).
        let one = [2.0];
        let two = [2.0, 2.0];
        let single = theta - p_y1;
        let nu_h = single * h.eval(&one) + p_y1 * h.eval(&two);
        let nu_ic = p_y1 * induced_ic(h, &two);
        let nu_bc = p_y1 * induced_bc(h, &two, BcMode::Signed)?;
        (nu_h, nu_ic, nu_bc, IndexSource::ClosedForm, None)
    } else {
        let mma = ModelSpec::mma1(c0, c1, alpha)?;
        let a = cluster_index_mc(h, Induced::Plain, &mma, mc_samples, derive_seed(seed, &[0]))?;
        let b = cluster_index_mc(h, Induced::Ic, &mma, mc_samples, derive_seed(seed, &[1]))?;
        let c = cluster_index_mc(h, Induced::Bc, &mma, mc_samples, derive_seed(seed, &[2]))?;
        (
            a.estimate,
            b.estimate,
            c.estimate,
            IndexSource::MonteCarlo,
            Some([a.standard_error, b.standard_error, c.standard_error]),
        )
    };

    Ok(LimitTable {
        c0,
        c1,
        alpha,
        functional: h.name().to_string(),
        gamma,
        theta,
        p_y1,
        nu_h,
        nu_ic,
        nu_bc,
        index_source,
        nu_se,
        small_block_pa1a2: p_y1,
        large_block_pa1a2: theta * theta,
        clusterlength_moment: clusterlength_moment(theta, gamma),
        joint_length_moment: joint_length_moment(theta, gamma),
        gap_constant: theta * theta / 6.0,
        ic_large_constant: theta * theta / 6.0,
    })
}

impl LimitTable {
    /// `(name, value)` rows in display order.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("theta", self.theta),
            ("p_y1", self.p_y1),
            ("nu_h", self.nu_h),
            ("nu_ic", self.nu_ic),
            ("nu_bc", self.nu_bc),
            ("small_block_pa1a2", self.small_block_pa1a2),
            ("large_block_pa1a2", self.large_block_pa1a2),
            ("clusterlength_moment", self.clusterlength_moment),
            ("joint_length_moment", self.joint_length_moment),
            ("gap_constant", self.gap_constant),
            ("ic_large_constant", self.ic_large_constant),
        ]
    }

    /// Aligned two-column text table.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "model mma1:{},{},{}  functional {}  gamma {}\n",
            self.c0, self.c1, self.alpha, self.functional, self.gamma
        );
        for (k, v) in self.rows() {
            out.push_str(&format!("{k:<22} {v}\n"));
        }
        out
    }

    /// `name,value` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,value\n");
        for (k, v) in self.rows() {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }
}

/// `P(X₀ > u, X_i > u)` for a moving-maxima model.
pub fn joint_exceedance(spec: &ModelSpec, u: f64, lag: usize) -> Result<f64> {
    if spec.is_piecewise() {
        return Err(Error::Unsupported(
            "piecewise models are not stationary; no joint exceedance law".into(),
        ));
    }
    let coeffs = spec.coeffs();
    let alpha = spec.alpha();
    let w = spec.marginal_tail(u)?;
    let q = coeffs.len() - 1;
    if lag > q {
        return Ok(w * w);
    }
    // Innovation t enters X₀ with c_t and X_lag with c_{t−lag}.
    let mut log_both = 0.0;
    for t in 0..=q + lag {
        let a = if t <= q { coeffs[t] } else { 0.0 };
        let b = if t >= lag && t - lag <= q { coeffs[t - lag] } else { 0.0 };
        let c = a.max(b);
        if c > 0.0 {
            log_both += log_pareto_cdf(u / c, alpha);
        }
    }
    let p_any = -log_both.exp_m1();
    Ok((2.0 * w - p_any).max(0.0))
}

/// `(1/w) Σ_{i=ℓ}^{r} i^γ P(X₀ > u, X_i > u)`.
pub fn anticlustering_sum(spec: &ModelSpec, r: usize, u: f64, gamma: f64, ell: usize) -> Result<f64> {
    if ell < 1 || ell > r {
        return Err(Error::InvalidConfig(format!("need 1 <= ell <= r, got ell = {ell}, r = {r}")));
    }
    let w = spec.marginal_tail(u)?;
    let mut total = 0.0;
    for i in ell..=r {
        total += (i as f64).powf(gamma) * joint_exceedance(spec, u, i)?;
    }
    Ok(total / w)
}
