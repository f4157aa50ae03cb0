//! Disjoint and sliding blocks statistics and the empirical cluster measure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterFunctional;
use crate::error::{Error, Result};
use crate::models::{MagnitudeSeries, ModelSpec};
use crate::reduce::tree_sum;

/// Where the exceedance probability `w` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WSource {
    /// Closed-form marginal of the generating model.
    Exact,
    /// Fraction of the sample above `u`.
    Empirical,
    /// Given by the caller.
    Supplied,
}

/// Block size, threshold and exceedance probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub r: usize,
    pub u: f64,
    pub w: f64,
    pub w_source: WSource,
    /// Restrict sums to blocks `2..=m-1`.
    pub interior_only: bool,
}

impl BlockConfig {
    /// A configuration with caller-supplied `w`.
    pub fn new(r: usize, u: f64, w: f64) -> Result<Self> {
        let cfg = Self {
            r,
            u,
            w,
            w_source: WSource::Supplied,
            interior_only: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Threshold calibrated to `w` from the model marginal.
    pub fn for_model_w(spec: &ModelSpec, r: usize, w: f64) -> Result<Self> {
        let u = spec.threshold_for_w(w)?;
        Self::new(r, u, w).map(|c| c.with_source(WSource::Exact))
    }

    /// `w` computed exactly from the model marginal at `u`.
    pub fn for_model_u(spec: &ModelSpec, r: usize, u: f64) -> Result<Self> {
        let w = spec.marginal_tail(u)?;
        Self::new(r, u, w).map(|c| c.with_source(WSource::Exact))
    }

    /// `w` estimated as the sample exceedance frequency at `u`.
    pub fn empirical(series: &MagnitudeSeries, r: usize, u: f64) -> Result<Self> {
        let hits = series.values().iter().filter(|&&x| x > u).count();
        let w = hits as f64 / series.len() as f64;
        Self::new(r, u, w).map(|c| c.with_source(WSource::Empirical))
    }

    pub fn with_source(mut self, source: WSource) -> Self {
        self.w_source = source;
        self
    }

    pub fn interior(mut self, interior_only: bool) -> Self {
        self.interior_only = interior_only;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 2 {
            return Err(Error::InvalidConfig(format!("block size r = {} must be at least 2", self.r)));
        }
        if !(self.u > 0.0 && self.u.is_finite()) {
            return Err(Error::InvalidConfig(format!("threshold u = {} must be positive", self.u)));
        }
        if !(self.w > 0.0 && self.w < 1.0) {
            return Err(Error::ProbabilityOutOfRange(self.w));
        }
        Ok(())
    }

    /// Checks the configuration against a series length and returns `m = ⌊n/r⌋`.
    pub fn blocks_for(&self, n: usize) -> Result<usize> {
        self.validate()?;
        if self.r > n {
            return Err(Error::InvalidConfig(format!("block size r = {} exceeds n = {n}", self.r)));
        }
        let m = n / self.r;
        if self.interior_only && m < 3 {
            return Err(Error::InvalidConfig(format!(
                "interior sums need at least 3 blocks, got m = {m}"
            )));
        }
        Ok(m)
    }
}

/// A normalized statistic with its summands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStatistic {
    pub value: f64,
    /// Unnormalized sum of the summands.
    pub raw_sum: f64,
    /// Per-block values `H(block)` or per-start-index window values `H(window)`.
    pub values: Vec<f64>,
    /// 1-based index of the first summand in `values`.
    pub first_index: usize,
    pub m: usize,
    /// Entries beyond `m·r` ignored by block sums.
    pub discarded_tail: usize,
}

/// Series divided by `u`.
pub fn scale(values: &[f64], u: f64) -> Vec<f64> {
    values.iter().map(|&x| x / u).collect()
}

/// For each position, the index of the next entry above 1 at or after it.
pub(crate) fn next_exceedance(scaled: &[f64]) -> Vec<usize> {
    let mut next = vec![scaled.len(); scaled.len() + 1];
    for i in (0..scaled.len()).rev() {
        next[i] = if scaled[i] > 1.0 { i } else { next[i + 1] };
    }
    next
}

/// `H` over consecutive length-`r` windows starting at 0-based `starts`.
pub(crate) fn window_values(
    h: &ClusterFunctional,
    scaled: &[f64],
    next: &[usize],
    r: usize,
    starts: std::ops::Range<usize>,
) -> Vec<f64> {
    starts
        .into_par_iter()
        .map(|s| {
            if next[s] >= s + r {
                0.0
            } else {
                h.eval(&scaled[s..s + r])
            }
        })
        .collect()
}

/// Disjoint blocks statistic.
///
/// Full form: `Σ_{j=1}^{m} H(block_j) / (n w)`. Interior form: `DB / (n r w)`
/// with `DB = Σ_{j=2}^{m-1} r H(block_j)`.
pub fn disjoint_stat(series: &MagnitudeSeries, cfg: &BlockConfig, h: &ClusterFunctional) -> Result<BlockStatistic> {
    let n = series.len();
    let m = cfg.blocks_for(n)?;
    let r = cfg.r;
    let scaled = scale(&series.values()[..m * r], cfg.u);
    let per_block: Vec<f64> = scaled.par_chunks(r).map(|b| h.eval(b)).collect();
    let (values, first_index) = if cfg.interior_only {
        (per_block[1..m - 1].to_vec(), 2)
    } else {
        (per_block, 1)
    };
    let raw_sum = tree_sum(&values);
    Ok(BlockStatistic {
        value: raw_sum / (n as f64 * cfg.w),
        raw_sum,
        values,
        first_index,
        m,
        discarded_tail: n - m * r,
    })
}

/// Sliding blocks statistic.
///
/// Full form: `Σ_{i=1}^{n-r+1} H(X_{i..i+r-1}) / (n r w)`. Interior form
/// keeps only windows starting in blocks `2..=m-1`.
pub fn sliding_stat(series: &MagnitudeSeries, cfg: &BlockConfig, h: &ClusterFunctional) -> Result<BlockStatistic> {
    let n = series.len();
    let m = cfg.blocks_for(n)?;
    let r = cfg.r;
    let scaled = scale(series.values(), cfg.u);
    let next = next_exceedance(&scaled);
    let starts = if cfg.interior_only { r..(m - 1) * r } else { 0..n - r + 1 };
    let first_index = starts.start + 1;
    let values = window_values(h, &scaled, &next, r, starts);
    let raw_sum = tree_sum(&values);
    Ok(BlockStatistic {
        value: raw_sum / (n as f64 * r as f64 * cfg.w),
        raw_sum,
        values,
        first_index,
        m,
        discarded_tail: if cfg.interior_only { n - m * r } else { 0 },
    })
}

/// `Σ_{j=1}^{m} H(block_j) / (m r w)`, the block estimate of `E[H(X_{1,r}/u)]/(r w)`.
pub fn empirical_cluster_measure(series: &MagnitudeSeries, cfg: &BlockConfig, h: &ClusterFunctional) -> Result<f64> {
    let full = BlockConfig {
        interior_only: false,
        ..*cfg
    };
    let stat = disjoint_stat(series, &full, h)?;
    Ok(stat.raw_sum / (stat.m as f64 * cfg.r as f64 * cfg.w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked() -> MagnitudeSeries {
        MagnitudeSeries::from_values(vec![0.5, 2.0, 0.3, 0.4, 1.5, 0.2]).unwrap()
    }

    #[test]
    fn disjoint_worked_example() {
        let cfg = BlockConfig::new(2, 1.0, 0.1).unwrap();
        let s = disjoint_stat(&worked(), &cfg, &ClusterFunctional::indicator()).unwrap();
        assert_eq!(s.values, vec![1.0, 0.0, 1.0]);
        assert!((s.value - 2.0 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn sliding_worked_example() {
        let cfg = BlockConfig::new(2, 1.0, 0.1).unwrap();
        let s = sliding_stat(&worked(), &cfg, &ClusterFunctional::indicator()).unwrap();
        assert_eq!(s.values, vec![1.0, 1.0, 0.0, 1.0, 1.0]);
        assert!((s.value - 4.0 / 1.2).abs() < 1e-12);
    }

    #[test]
    fn subthreshold_series_gives_zero() {
        let s = MagnitudeSeries::from_values(vec![0.5; 20]).unwrap();
        let cfg = BlockConfig::new(4, 1.0, 0.1).unwrap();
        let h = ClusterFunctional::length();
        assert_eq!(disjoint_stat(&s, &cfg, &h).unwrap().value, 0.0);
        assert_eq!(sliding_stat(&s, &cfg, &h).unwrap().value, 0.0);
        assert_eq!(empirical_cluster_measure(&s, &cfg, &h).unwrap(), 0.0);
    }

    #[test]
    fn constant_series_above_threshold() {
        let (n, r, w) = (30usize, 4usize, 0.2);
        let s = MagnitudeSeries::from_values(vec![3.0; n]).unwrap();
        let cfg = BlockConfig::new(r, 1.0, w).unwrap();
        let v = sliding_stat(&s, &cfg, &ClusterFunctional::indicator()).unwrap().value;
        let expected = (n - r + 1) as f64 / (n as f64 * r as f64 * w);
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn single_exceedance_cluster_measure() {
        let mut v = vec![0.1; 40];
        v[17] = 9.0;
        let s = MagnitudeSeries::from_values(v).unwrap();
        let cfg = BlockConfig::new(5, 1.0, 0.01).unwrap();
        let ecm = empirical_cluster_measure(&s, &cfg, &ClusterFunctional::indicator()).unwrap();
        assert!((ecm - 1.0 / (8.0 * 5.0 * 0.01)).abs() < 1e-12);
    }

    #[test]
    fn tail_is_discarded_and_reported() {
        let s = MagnitudeSeries::from_values(vec![2.0; 11]).unwrap();
        let cfg = BlockConfig::new(3, 1.0, 0.5).unwrap();
        let d = disjoint_stat(&s, &cfg, &ClusterFunctional::indicator()).unwrap();
        assert_eq!((d.m, d.discarded_tail), (3, 2));
    }

    #[test]
    fn config_errors() {
        assert!(BlockConfig::new(1, 1.0, 0.1).is_err());
        assert!(BlockConfig::new(2, 1.0, 1.0).is_err());
        assert!(BlockConfig::new(2, 0.0, 0.1).is_err());
        let cfg = BlockConfig::new(4, 1.0, 0.1).unwrap();
        let s = MagnitudeSeries::from_values(vec![1.0; 3]).unwrap();
        assert!(disjoint_stat(&s, &cfg, &ClusterFunctional::indicator()).is_err());
        let s = MagnitudeSeries::from_values(vec![1.0; 8]).unwrap();
        assert!(sliding_stat(&s, &cfg.interior(true), &ClusterFunctional::indicator()).is_err());
    }

    #[test]
    fn interior_sums_skip_edge_blocks() {
        let v = vec![2.0, 0.1, 0.1, 0.1, 3.0, 0.1, 0.1, 4.0];
        let s = MagnitudeSeries::from_values(v).unwrap();
        let cfg = BlockConfig::new(2, 1.0, 0.25).unwrap().interior(true);
        let h = ClusterFunctional::indicator();
        let d = disjoint_stat(&s, &cfg, &h).unwrap();
        assert_eq!((d.first_index, d.values.clone()), (2, vec![0.0, 1.0]));
        let sl = sliding_stat(&s, &cfg, &h).unwrap();
        // starts 3..=6 (1-based)
        assert_eq!((sl.first_index, sl.values), (3, vec![0.0, 1.0, 1.0, 0.0]));
    }
}
