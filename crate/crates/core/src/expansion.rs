//! Block bookkeeping and the decomposition `SB − DB = IC + BC + R`.
//!
//! Every cluster quantity is available along two paths: direct summation over
//! sliding windows (true by definition) and exceedance-time formulas. The
//! report cross-checks one against the other.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::{disjoint_stat, next_exceedance, scale, sliding_stat, BlockConfig, WSource};
use crate::cluster::{induced_ic, ClusterFunctional};
use crate::error::{Error, Result};
use crate::models::MagnitudeSeries;
use crate::reduce::tree_sum;

/// Per-block exceedance data for a series cut into `m` blocks of size `r`.
///
/// Blocks are numbered `1..=m` and times are absolute 1-based indices, as in
/// the formulas; the accessors take care of the offsets.
#[derive(Debug, Clone)]
pub struct BlockBookkeeping {
    pub r: usize,
    pub m: usize,
    pub u: f64,
    scaled: Vec<f64>,
    next: Vec<usize>,
    offsets: Vec<usize>,
    times: Vec<usize>,
}

impl BlockBookkeeping {
    /// One pass over the first `m·r` entries. Needs `m ≥ 3`.
    pub fn new(series: &MagnitudeSeries, cfg: &BlockConfig) -> Result<Self> {
        Self::from_values(series.values(), cfg.r, cfg.u)
    }

    pub fn from_values(values: &[f64], r: usize, u: f64) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidConfig(format!("block size r = {r} must be at least 2")));
        }
        if !(u > 0.0 && u.is_finite()) {
            return Err(Error::InvalidConfig(format!("threshold u = {u} must be positive")));
        }
        let m = values.len() / r;
        if m < 3 {
            return Err(Error::InvalidConfig(format!(
                "the decomposition needs at least 3 blocks, got m = {m}"
            )));
        }
        let scaled = scale(&values[..m * r], u);
        let mut offsets = Vec::with_capacity(m + 1);
        let mut times = Vec::new();
        offsets.push(0);
        for (k, block) in scaled.chunks(r).enumerate() {
            for (i, &x) in block.iter().enumerate() {
                if x > 1.0 {
                    times.push(k * r + i + 1);
                }
            }
            offsets.push(times.len());
        }
        let next = next_exceedance(&scaled);
        Ok(Self {
            r,
            m,
            u,
            scaled,
            next,
            offsets,
            times,
        })
    }

    /// Scaled values `X_1/u, …, X_{mr}/u`.
    pub fn scaled(&self) -> &[f64] {
        &self.scaled
    }

    /// `N_j`.
    pub fn count(&self, j: usize) -> usize {
        self.offsets[j] - self.offsets[j - 1]
    }

    /// `A_j`. Blocks outside `1..=m` never fire.
    pub fn a(&self, j: usize) -> bool {
        j >= 1 && j <= self.m && self.count(j) > 0
    }

    /// `t_j(1), …, t_j(N_j)`.
    pub fn times(&self, j: usize) -> &[usize] {
        &self.times[self.offsets[j - 1]..self.offsets[j]]
    }

    /// All exceedance times in increasing order.
    pub fn all_times(&self) -> &[usize] {
        &self.times
    }

    /// `t_j(i)` for `0 ≤ i ≤ N_j + 1`, with `t_j(0) = (j−1)r` and `t_j(N_j+1) = jr`.
    pub fn t(&self, j: usize, i: usize) -> usize {
        let n = self.count(j);
        if i == 0 {
            (j - 1) * self.r
        } else if i == n + 1 {
            j * self.r
        } else {
            self.times(j)[i - 1]
        }
    }

    /// `Δt_j(i) = t_j(i+1) − t_j(i)` for `0 ≤ i ≤ N_j`.
    pub fn delta_t(&self, j: usize, i: usize) -> usize {
        self.t(j, i + 1) - self.t(j, i)
    }

    /// `L_j`.
    pub fn cluster_length(&self, j: usize) -> usize {
        match self.times(j) {
            [] => 0,
            t => t[t.len() - 1] - t[0] + 1,
        }
    }

    /// Merged times of blocks `j, j+1` with both conventions appended.
    pub fn merged_times(&self, j: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.count(j) + self.count(j + 1) + 2);
        out.push((j - 1) * self.r);
        out.extend_from_slice(&self.times[self.offsets[j - 1]..self.offsets[j + 1]]);
        out.push((j + 1) * self.r);
        out
    }

    /// `L_{j,j+1} = t_{j+1}(N_{j+1}) − t_j(1) + 1`; meaningful on `A_j ∩ A_{j+1}`.
    pub fn joint_length(&self, j: usize) -> usize {
        let (a, b) = (self.times(j), self.times(j + 1));
        match (a.first(), b.last()) {
            (Some(first), Some(last)) => last - first + 1,
            _ => 0,
        }
    }

    /// Scaled values at absolute 1-based positions `from..=to`.
    pub fn span(&self, from: usize, to: usize) -> &[f64] {
        &self.scaled[from - 1..to]
    }

    /// The whole scaled block `𝕏_j`.
    pub fn block(&self, j: usize) -> &[f64] {
        &self.scaled[(j - 1) * self.r..j * self.r]
    }

    /// `𝕏_j(k1:k2)`, empty when `k1 > k2`.
    pub fn sub_window(&self, j: usize, k1: usize, k2: usize) -> &[f64] {
        if k1 > k2 {
            return &[];
        }
        self.span(self.t(j, k1), self.t(j, k2))
    }

    /// Exceedance core `𝕏_j(1:N_j)`.
    pub fn core(&self, j: usize) -> &[f64] {
        let n = self.count(j);
        self.sub_window(j, 1, n)
    }

    /// Exceedance core of blocks `j, j+1` taken together.
    pub fn merged_core(&self, j: usize) -> &[f64] {
        match (self.times(j).first(), self.times(j + 1).last()) {
            (Some(&a), Some(&b)) => self.span(a, b),
            _ => &[],
        }
    }

    /// Direct `DB_j = r H(𝕏_j)` on the raw block.
    pub fn db_direct(&self, h: &ClusterFunctional, j: usize) -> f64 {
        self.r as f64 * h.eval(self.block(j))
    }

    /// Direct `DB_{j,j+1} = r H(X_{(j−1)r+1 .. (j+1)r} / u)`.
    pub fn db_pair_direct(&self, h: &ClusterFunctional, j: usize) -> f64 {
        self.r as f64 * h.eval(&self.scaled[(j - 1) * self.r..(j + 1) * self.r])
    }

    /// Direct `SB_j = Σ_{i∈I_j} H(X_{i..i+r−1}/u)` for `1 ≤ j ≤ m − 1`.
    pub fn sb_direct(&self, h: &ClusterFunctional, j: usize) -> f64 {
        assert!(j >= 1 && j < self.m, "SB_j needs blocks j and j+1 inside the sample");
        if !self.a(j) && !self.a(j + 1) {
            return 0.0;
        }
        let r = self.r;
        let mut total = 0.0;
        for s in (j - 1) * r..j * r {
            if self.next[s] < s + r {
                total += h.eval(&self.scaled[s..s + r]);
            }
        }
        total
    }

    /// `Σ_{i=1}^{N_j} Δt_j(i) H(𝕏_j(1:i))`, equal to `SB_{j−1}` on `A_{j−1}^c ∩ A_j`.
    pub fn sb_prev_formula(&self, h: &ClusterFunctional, j: usize) -> f64 {
        (1..=self.count(j))
            .map(|i| self.delta_t(j, i) as f64 * h.eval(self.sub_window(j, 1, i)))
            .sum()
    }

    /// `Σ_{i=0}^{N_j−1} Δt_j(i) H(𝕏_j(i+1:N_j))`, equal to `SB_j` on `A_j ∩ A_{j+1}^c`.
    pub fn sb_next_formula(&self, h: &ClusterFunctional, j: usize) -> f64 {
        let n = self.count(j);
        (0..n)
            .map(|i| self.delta_t(j, i) as f64 * h.eval(self.sub_window(j, i + 1, n)))
            .sum()
    }

    /// Indicator of `A_{j−1}^c ∩ A_j ∩ A_{j+1}^c`.
    pub fn internal_event(&self, j: usize) -> bool {
        !self.a(j - 1) && self.a(j) && !self.a(j + 1)
    }

    /// Indicator of `A_{j−1}^c ∩ A_j ∩ A_{j+1} ∩ A_{j+2}^c`.
    pub fn boundary_event(&self, j: usize) -> bool {
        !self.a(j - 1) && self.a(j) && self.a(j + 1) && !self.a(j + 2)
    }

    /// Blocks with at least one exceedance.
    pub fn active_blocks(&self) -> Vec<usize> {
        (1..=self.m).filter(|&j| self.a(j)).collect()
    }
}

/// Convenience constructor matching the other operations.
pub fn block_bookkeeping(series: &MagnitudeSeries, cfg: &BlockConfig) -> Result<BlockBookkeeping> {
    BlockBookkeeping::new(series, cfg)
}

/// Which indicator the internal cluster carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcMode {
    /// `1{A_{j−1}^c ∩ A_j ∩ A_{j+1}^c}`.
    Standard,
    /// `1{A_j}` only, for independent blocks.
    Piecewise,
}

/// One internal cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternalCluster {
    pub j: usize,
    pub value: f64,
    /// `SB_{j−1} + SB_j − DB_j` by direct sums; present on the standard event.
    pub reference: Option<f64>,
}

/// Internal clusters statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternalClusters {
    pub total: f64,
    pub per_block: Vec<InternalCluster>,
    pub max_abs_diff: f64,
}

/// `IC = Σ_{j=2}^{m−1} H̃_IC(𝕏_j)` times the event indicator of `mode`.
///
/// With `reference`, each block on the standard event is also recomputed as
/// `SB_{j−1} + SB_j − DB_j` from direct window sums.
pub fn internal_cluster_stat(
    book: &BlockBookkeeping,
    h: &ClusterFunctional,
    mode: IcMode,
    reference: bool,
) -> InternalClusters {
    let per_block: Vec<InternalCluster> = (2..book.m)
        .into_par_iter()
        .filter(|&j| match mode {
            IcMode::Standard => book.internal_event(j),
            IcMode::Piecewise => book.a(j),
        })
        .map(|j| {
            let value = induced_ic(h, book.core(j));
            let reference = (reference && book.internal_event(j))
                .then(|| book.sb_direct(h, j - 1) + book.sb_direct(h, j) - book.db_direct(h, j));
            InternalCluster { j, value, reference }
        })
        .collect();
    let values: Vec<f64> = per_block.iter().map(|c| c.value).collect();
    let max_abs_diff = per_block
        .iter()
        .filter_map(|c| c.reference.map(|r| (r - c.value).abs()))
        .fold(0.0, f64::max);
    InternalClusters {
        total: tree_sum(&values),
        per_block,
        max_abs_diff,
    }
}

/// One boundary cluster between blocks `j` and `j+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPair {
    pub j: usize,
    pub joint_length: usize,
    /// `r (H(𝕏_{j,j+1}) − H(𝕏_j) − H(𝕏_{j+1}))` on exceedance cores.
    pub bc1: f64,
    /// `DB_{j,j+1} − DB_j − DB_{j+1}` on raw blocks.
    pub bc1_reference: f64,
    /// `SB_{j−1} + SB_j + SB_{j+1} − DB_{j,j+1}` by direct sums.
    pub bc2: f64,
    /// `H̃_IC(𝕏_{j,j+1})`, only when `L_{j,j+1} < r`.
    pub bc2_fast: Option<f64>,
}

/// Boundary clusters statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryClusters {
    pub bc1: f64,
    pub bc2_tilde: f64,
    pub bc2_overline: f64,
    pub per_pair: Vec<BoundaryPair>,
    pub bc1_max_abs_diff: f64,
    pub bc2_max_abs_diff: f64,
}

impl BoundaryClusters {
    pub fn bc2(&self) -> f64 {
        self.bc2_tilde + self.bc2_overline
    }

    pub fn total(&self) -> f64 {
        self.bc1 + self.bc2()
    }
}

/// `BC = BC(·;1) + BC(·;2)` over `j = 2..=m−2`.
///
/// With `reference = false` the direct window sums are skipped whenever
/// `L_{j,j+1} < r` and the merged-time formula is used instead; the rare pairs
/// with `L_{j,j+1} ≥ r` always go through direct sums.
pub fn boundary_cluster_stat(book: &BlockBookkeeping, h: &ClusterFunctional, reference: bool) -> BoundaryClusters {
    let r = book.r as f64;
    let per_pair: Vec<BoundaryPair> = (2..book.m.saturating_sub(1))
        .into_par_iter()
        .filter(|&j| book.boundary_event(j))
        .map(|j| {
            let joint_length = book.joint_length(j);
            let bc1 = r * (h.eval(book.merged_core(j)) - h.eval(book.core(j)) - h.eval(book.core(j + 1)));
            let bc2_fast = (joint_length < book.r).then(|| induced_ic(h, book.merged_core(j)));
            let (bc1_reference, bc2) = if reference || bc2_fast.is_none() {
                let pair = book.db_pair_direct(h, j);
                let sbs = book.sb_direct(h, j - 1) + book.sb_direct(h, j) + book.sb_direct(h, j + 1);
                (pair - book.db_direct(h, j) - book.db_direct(h, j + 1), sbs - pair)
            } else {
                (bc1, bc2_fast.expect("fast path present"))
            };
            BoundaryPair {
                j,
                joint_length,
                bc1,
                bc1_reference,
                bc2,
                bc2_fast,
            }
        })
        .collect();
    let bc1: Vec<f64> = per_pair.iter().map(|p| p.bc1).collect();
    let tilde: Vec<f64> = per_pair.iter().filter(|p| p.joint_length < book.r).map(|p| p.bc2).collect();
    let overline: Vec<f64> = per_pair.iter().filter(|p| p.joint_length >= book.r).map(|p| p.bc2).collect();
    let bc1_max_abs_diff = per_pair.iter().map(|p| (p.bc1 - p.bc1_reference).abs()).fold(0.0, f64::max);
    let bc2_max_abs_diff = per_pair
        .iter()
        .filter_map(|p| p.bc2_fast.map(|f| (f - p.bc2).abs()))
        .fold(0.0, f64::max);
    BoundaryClusters {
        bc1: tree_sum(&bc1),
        bc2_tilde: tree_sum(&tilde),
        bc2_overline: tree_sum(&overline),
        per_pair,
        bc1_max_abs_diff,
        bc2_max_abs_diff,
    }
}

/// Operational and event-formula remainders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Remainder {
    pub r_op: f64,
    pub r_ic: f64,
    pub r_bc: f64,
    pub r_nc: f64,
}

/// `r_op = (sb − db) − ic − bc`, and the sample-boundary (`R^IC`, `R^BC`) and
/// three-block (`R^NC`) event terms, each from direct window sums.
pub fn remainder_stat(book: &BlockBookkeeping, h: &ClusterFunctional, sb: f64, db: f64, ic: f64, bc: f64) -> Remainder {
    let m = book.m;
    let a = |j: usize| book.a(j);
    let sb_j = |j: usize| book.sb_direct(h, j);
    let db_j = |j: usize| book.db_direct(h, j);
    let on = |event: bool, value: &dyn Fn() -> f64| if event { value() } else { 0.0 };

    let r_ic = on(a(1) && !a(2), &|| sb_j(1) - db_j(1)) + on(!a(m - 1) && a(m), &|| sb_j(m - 1));

    let r_bc = on(a(1) && a(2), &|| sb_j(1) - db_j(1))
        + on(a(1) && a(2) && !a(3), &|| sb_j(2) - db_j(2))
        + on(!a(m - 2) && a(m - 1) && a(m), &|| sb_j(m - 2))
        + on(a(m - 1) && a(m), &|| sb_j(m - 1) - db_j(m - 1));

    let nc: Vec<f64> = (2..m.saturating_sub(1))
        .into_par_iter()
        .map(|j| {
            let (p, c, n1, n2) = (a(j - 1), a(j), a(j + 1), a(j + 2));
            on(!p && c && n1 && n2, &|| sb_j(j - 1) + sb_j(j) - db_j(j))
                + on(p && c && n1 && !n2, &|| sb_j(j) - db_j(j) + sb_j(j + 1) - db_j(j + 1))
                + on(p && c && n1 && n2, &|| sb_j(j) - db_j(j))
        })
        .collect();

    Remainder {
        r_op: ((sb - db) - ic) - bc,
        r_ic,
        r_bc,
        r_nc: tree_sum(&nc),
    }
}

/// Normalized quantities of a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalized {
    /// `IC / (n w)`.
    pub ic: f64,
    /// `IC^PS / (n w)`.
    pub ic_piecewise: f64,
    /// `BC / (n w)`.
    pub bc: f64,
    /// `r (disjoint − sliding)` with the full statistics.
    pub scaled_gap: f64,
    /// `(DB − SB) / (n w)`, the same gap with interior sums.
    pub scaled_gap_interior: f64,
}

/// Cross-check summary between fast and reference paths.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PathChecks {
    pub ic_events: usize,
    pub ic_max_abs_diff: f64,
    pub bc_events: usize,
    pub bc1_max_abs_diff: f64,
    pub bc2_fast_events: usize,
    pub bc2_max_abs_diff: f64,
    pub sb_prev_events: usize,
    pub sb_prev_max_abs_diff: f64,
    pub sb_next_events: usize,
    pub sb_next_max_abs_diff: f64,
}

impl PathChecks {
    /// Largest discrepancy over all checked identities.
    pub fn max_abs_diff(&self) -> f64 {
        [
            self.ic_max_abs_diff,
            self.bc1_max_abs_diff,
            self.bc2_max_abs_diff,
            self.sb_prev_max_abs_diff,
            self.sb_next_max_abs_diff,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Instance data recorded when the event-formula remainder does not close.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub u: f64,
    pub w: f64,
    pub functional: String,
    pub residual_paper: f64,
    pub boundary_term: f64,
    /// `residual_paper + boundary_term` vanishes up to rounding.
    pub explained_by_boundary_term: bool,
    pub active_blocks: Vec<usize>,
}

/// The full decomposition for one (series, r, u, H) instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub u: f64,
    pub w: f64,
    pub w_source: WSource,
    pub functional: String,
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub discarded_tail: usize,
    pub disjoint_stat: f64,
    pub sliding_stat: f64,
    pub db: f64,
    pub sb: f64,
    pub ic: f64,
    pub ic_piecewise: f64,
    pub bc1: f64,
    pub bc2: f64,
    pub bc2_tilde: f64,
    pub bc2_overline: f64,
    pub r_op: f64,
    pub r_ic: f64,
    pub r_bc: f64,
    pub r_nc: f64,
    pub normalized: Normalized,
    pub residual_identity: f64,
    pub residual_paper: f64,
    /// `SB_1 − DB_1`: the first block's term, which the event formulas
    /// include while the interior sums do not.
    pub boundary_term: f64,
    pub checks: PathChecks,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counterexample: Option<Counterexample>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ic_j: Option<Vec<InternalCluster>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_pair: Option<Vec<BoundaryPair>>,
}

impl DecompositionReport {
    /// Magnitude used for relative tolerances.
    pub fn scale(&self) -> f64 {
        [self.sb, self.db, self.ic, self.bc1, self.bc2, self.r_op]
            .into_iter()
            .fold(1.0, |acc, v| acc.max(v.abs()))
    }

    /// Appends the counterexample, if any, as one JSON line.
    pub fn emit_counterexample(&self, path: &Path) -> Result<bool> {
        let Some(cx) = &self.counterexample else {
            return Ok(false);
        };
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        serde_json::to_writer(&mut f, cx)?;
        writeln!(f)?;
        Ok(true)
    }
}

/// Options for [`expansion_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    /// Keep per-block and per-pair arrays in the report.
    pub per_block: bool,
    /// Tolerance relative to [`DecompositionReport::scale`] for calling the
    /// event-formula residual nonzero; 0 demands exact closure.
    pub tolerance: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            per_block: false,
            tolerance: 1e-9,
        }
    }
}

/// Builds the complete decomposition with both computation paths.
pub fn expansion_report(
    series: &MagnitudeSeries,
    cfg: &BlockConfig,
    h: &ClusterFunctional,
    opts: ReportOptions,
) -> Result<DecompositionReport> {
    cfg.validate()?;
    let book = BlockBookkeeping::new(series, cfg)?;
    let (n, r, m) = (series.len(), book.r, book.m);

    let sb_all: Vec<f64> = (1..m).into_par_iter().map(|j| book.sb_direct(h, j)).collect();
    let db_all: Vec<f64> = (1..=m).into_par_iter().map(|j| book.db_direct(h, j)).collect();
    let sb = tree_sum(&sb_all[1..m - 1]);
    let db = tree_sum(&db_all[1..m - 1]);

    let ic = internal_cluster_stat(&book, h, IcMode::Standard, true);
    let ic_ps = internal_cluster_stat(&book, h, IcMode::Piecewise, false);
    let bc = boundary_cluster_stat(&book, h, true);
    let rem = remainder_stat(&book, h, sb, db, ic.total, bc.total());

    let mut checks = PathChecks {
        ic_events: ic.per_block.len(),
        ic_max_abs_diff: ic.max_abs_diff,
        bc_events: bc.per_pair.len(),
        bc1_max_abs_diff: bc.bc1_max_abs_diff,
        bc2_fast_events: bc.per_pair.iter().filter(|p| p.bc2_fast.is_some()).count(),
        bc2_max_abs_diff: bc.bc2_max_abs_diff,
        ..PathChecks::default()
    };
    for j in 2..m {
        if !book.a(j - 1) && book.a(j) {
            checks.sb_prev_events += 1;
            let d = (book.sb_prev_formula(h, j) - sb_all[j - 2]).abs();
            checks.sb_prev_max_abs_diff = checks.sb_prev_max_abs_diff.max(d);
        }
        if book.a(j) && !book.a(j + 1) {
            checks.sb_next_events += 1;
            let d = (book.sb_next_formula(h, j) - sb_all[j - 1]).abs();
            checks.sb_next_max_abs_diff = checks.sb_next_max_abs_diff.max(d);
        }
    }

    let full = BlockConfig {
        interior_only: false,
        ..*cfg
    };
    let disjoint = disjoint_stat(series, &full, h)?.value;
    let sliding = sliding_stat(series, &full, h)?.value;
    let nw = n as f64 * cfg.w;

    let residual_identity = (((sb - db) - ic.total) - bc.total()) - rem.r_op;
    let residual_paper = rem.r_op - (rem.r_ic + rem.r_bc + rem.r_nc);
    let boundary_term = sb_all[0] - db_all[0];

    let mut report = DecompositionReport {
        n,
        r,
        m,
        u: cfg.u,
        w: cfg.w,
        w_source: cfg.w_source,
        functional: h.name().to_string(),
        model: series.model.as_ref().map(|s| s.to_string()),
        seed: series.seed,
        discarded_tail: n - m * r,
        disjoint_stat: disjoint,
        sliding_stat: sliding,
        db,
        sb,
        ic: ic.total,
        ic_piecewise: ic_ps.total,
        bc1: bc.bc1,
        bc2: bc.bc2(),
        bc2_tilde: bc.bc2_tilde,
        bc2_overline: bc.bc2_overline,
        r_op: rem.r_op,
        r_ic: rem.r_ic,
        r_bc: rem.r_bc,
        r_nc: rem.r_nc,
        normalized: Normalized {
            ic: ic.total / nw,
            ic_piecewise: ic_ps.total / nw,
            bc: bc.total() / nw,
            scaled_gap: r as f64 * (disjoint - sliding),
            scaled_gap_interior: (db - sb) / nw,
        },
        residual_identity,
        residual_paper,
        boundary_term,
        checks,
        counterexample: None,
        ic_j: opts.per_block.then(|| ic.per_block.clone()),
        per_pair: opts.per_block.then(|| bc.per_pair.clone()),
    };
    let tol = opts.tolerance * report.scale();
    if residual_paper.abs() > tol {
        report.counterexample = Some(Counterexample {
            model: report.model.clone(),
            seed: report.seed,
            n,
            r,
            m,
            u: cfg.u,
            w: cfg.w,
            functional: report.functional.clone(),
            residual_paper,
            boundary_term,
            explained_by_boundary_term: (residual_paper + boundary_term).abs() <= tol,
            active_blocks: book.active_blocks(),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: Vec<f64>) -> MagnitudeSeries {
        MagnitudeSeries::from_values(v).unwrap()
    }

    fn with_hits(n: usize, hits: &[(usize, f64)]) -> MagnitudeSeries {
        let mut v = vec![0.2; n];
        for &(i, x) in hits {
            v[i - 1] = x;
        }
        series(v)
    }

    #[test]
    fn worked_bookkeeping() {
        let s = series(vec![0.5, 2.0, 0.3, 0.4, 1.5, 0.2]);
        let book = BlockBookkeeping::from_values(s.values(), 2, 1.0).unwrap();
        assert_eq!((book.count(1), book.count(2), book.count(3)), (1, 0, 1));
        assert_eq!((book.a(1), book.a(2), book.a(3)), (true, false, true));
        assert_eq!((book.t(1, 1), book.t(3, 1)), (2, 5));
        for j in 1..=3 {
            let total: usize = (0..=book.count(j)).map(|i| book.delta_t(j, i)).sum();
            assert_eq!(total, 2);
        }
    }

    #[test]
    fn saturated_and_empty_blocks() {
        let book = BlockBookkeeping::from_values(&[5.0; 12], 4, 1.0).unwrap();
        for j in 1..=3 {
            assert_eq!((book.count(j), book.cluster_length(j)), (4, 4));
        }
        let book = BlockBookkeeping::from_values(&[0.5; 12], 4, 1.0).unwrap();
        assert!((1..=3).all(|j| !book.a(j)));
    }

    #[test]
    fn too_few_blocks() {
        assert!(BlockBookkeeping::from_values(&[1.0; 5], 2, 1.0).is_err());
    }

    #[test]
    fn internal_indicator_length_minus_one() {
        let s = with_hits(60, &[(25, 3.0), (29, 2.0)]);
        let book = BlockBookkeeping::from_values(s.values(), 10, 1.0).unwrap();
        let ic = internal_cluster_stat(&book, &ClusterFunctional::indicator(), IcMode::Standard, true);
        assert_eq!(ic.per_block.len(), 1);
        assert_eq!(ic.per_block[0].value, 4.0);
        assert_eq!(ic.per_block[0].reference, Some(4.0));
    }

    #[test]
    fn single_jump_and_linear_functional() {
        let s = with_hits(60, &[(25, 3.0)]);
        let book = BlockBookkeeping::from_values(s.values(), 10, 1.0).unwrap();
        let ic = internal_cluster_stat(&book, &ClusterFunctional::indicator(), IcMode::Standard, true);
        assert_eq!(ic.total, 0.0);
        let s = with_hits(60, &[(22, 3.0), (25, 1.5), (29, 2.0)]);
        let book = BlockBookkeeping::from_values(s.values(), 10, 1.0).unwrap();
        let ic = internal_cluster_stat(&book, &ClusterFunctional::count(), IcMode::Standard, true);
        assert_eq!((ic.total, ic.per_block[0].reference), (0.0, Some(0.0)));
    }

    #[test]
    fn boundary_indicator_example() {
        let r = 10;
        let s = with_hits(60, &[(27, 3.0), (33, 2.0)]);
        let book = BlockBookkeeping::from_values(s.values(), r, 1.0).unwrap();
        let bc = boundary_cluster_stat(&book, &ClusterFunctional::indicator(), true);
        assert_eq!(bc.per_pair.len(), 1);
        let p = &bc.per_pair[0];
        assert_eq!((p.j, p.joint_length), (3, 7));
        assert_eq!((p.bc1, p.bc1_reference), (-(r as f64), -(r as f64)));
        assert_eq!(p.bc2, 6.0);
        assert_eq!(p.bc2_fast, Some(6.0));
    }

    #[test]
    fn boundary_count_vanishes() {
        let s = with_hits(60, &[(24, 3.0), (27, 3.0), (33, 2.0), (36, 4.0)]);
        let book = BlockBookkeeping::from_values(s.values(), 10, 1.0).unwrap();
        let bc = boundary_cluster_stat(&book, &ClusterFunctional::count(), true);
        assert_eq!(bc.per_pair.len(), 1);
        assert_eq!((bc.bc1, bc.bc2()), (0.0, 0.0));
    }

    #[test]
    fn long_boundary_pair_uses_direct_sums() {
        let r = 5;
        let s = with_hits(30, &[(11, 3.0), (20, 2.0)]);
        let book = BlockBookkeeping::from_values(s.values(), r, 1.0).unwrap();
        let bc = boundary_cluster_stat(&book, &ClusterFunctional::indicator(), false);
        let p = &bc.per_pair[0];
        assert!(p.joint_length >= r);
        assert_eq!(p.bc2_fast, None);
        assert_eq!(bc.bc2_overline, p.bc2);
        assert_eq!(bc.bc2_tilde, 0.0);
    }

    #[test]
    fn interior_cluster_has_no_remainder() {
        let s = with_hits(60, &[(23, 3.0), (26, 2.0)]);
        let cfg = BlockConfig::new(10, 1.0, 0.05).unwrap();
        let rep = expansion_report(&s, &cfg, &ClusterFunctional::indicator(), ReportOptions::default()).unwrap();
        assert_eq!(rep.residual_identity, 0.0);
        assert_eq!((rep.r_op, rep.r_ic, rep.r_bc, rep.r_nc), (0.0, 0.0, 0.0, 0.0));
        assert!(rep.counterexample.is_none());
    }

    #[test]
    fn three_consecutive_blocks_feed_nc() {
        let s = with_hits(60, &[(28, 3.0), (31, 2.0), (39, 4.0), (42, 2.5)]);
        let cfg = BlockConfig::new(10, 1.0, 0.05).unwrap();
        for h in [ClusterFunctional::indicator(), ClusterFunctional::length()] {
            let rep = expansion_report(&s, &cfg, &h, ReportOptions::default()).unwrap();
            assert_ne!(rep.r_nc, 0.0);
            assert_eq!(rep.r_op, rep.r_ic + rep.r_bc + rep.r_nc);
            assert_eq!(rep.residual_paper, 0.0);
        }
    }

    #[test]
    fn first_block_exceedance_is_the_boundary_term() {
        let s = with_hits(60, &[(4, 3.0), (7, 2.0)]);
        let cfg = BlockConfig::new(10, 1.0, 0.05).unwrap();
        let rep = expansion_report(&s, &cfg, &ClusterFunctional::indicator(), ReportOptions::default()).unwrap();
        // Interior sums never see block 1, so the operational remainder is 0
        // while the event formulas carry SB_1 − DB_1.
        assert_eq!(rep.r_op, 0.0);
        assert_eq!(rep.r_ic, rep.boundary_term);
        assert_eq!(rep.boundary_term, 7.0 - 10.0);
        let cx = rep.counterexample.expect("residual is nonzero");
        assert!(cx.explained_by_boundary_term);
    }

    #[test]
    fn subthreshold_report_is_all_zero() {
        let s = series(vec![0.3; 40]);
        let cfg = BlockConfig::new(5, 1.0, 0.05).unwrap();
        let rep = expansion_report(&s, &cfg, &ClusterFunctional::length(), ReportOptions::default()).unwrap();
        for v in [rep.db, rep.sb, rep.ic, rep.bc1, rep.bc2, rep.r_op, rep.r_ic, rep.r_bc, rep.r_nc] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn sb_formulas_on_their_events() {
        let s = with_hits(40, &[(13, 2.0), (15, 1.5), (20, 3.0)]);
        let book = BlockBookkeeping::from_values(s.values(), 10, 1.0).unwrap();
        for h in [ClusterFunctional::indicator(), ClusterFunctional::length(), ClusterFunctional::count()] {
            assert_eq!(book.sb_prev_formula(&h, 2), book.sb_direct(&h, 1));
            assert_eq!(book.sb_next_formula(&h, 2), book.sb_direct(&h, 2));
        }
    }
}
