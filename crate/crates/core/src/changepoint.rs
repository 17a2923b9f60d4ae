//! Single change-point baselines with the empirical-mean (L2) cost.
//!
//! Segment `(a, b]` in the 1-based notation of the cost sum is the half-open
//! slice `x[a..b]` here: `c(a, b) = sum_{t in a..b} (x[t] - mean(x[a..b]))^2`.
//! All three searches evaluate costs in O(1) from prefix sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which search produced a change point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangePointMethod {
    Binseg,
    Window,
    Bottomup,
}

/// Location of the single change point found in a range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangePointResult {
    /// Split index into the analysed series; the right segment starts here.
    pub index: usize,
    /// `index` converted to milliseconds by the caller's clock; 0 until set.
    pub t_cp_ms: f64,
    /// Method-specific objective at the split: total cost for binseg and
    /// bottom-up, window gain for the sliding window.
    pub cost_at_split: f64,
    pub method: ChangePointMethod,
    /// The range is flat (zero total cost) and the split is arbitrary.
    pub no_signal: bool,
}

impl ChangePointResult {
    fn new(index: usize, cost: f64, method: ChangePointMethod, no_signal: bool) -> Self {
        Self {
            index,
            t_cp_ms: 0.0,
            cost_at_split: cost,
            method,
            no_signal,
        }
    }

    /// Stamps the time of `index` on a clock with the given rate and offset.
    pub fn with_clock(mut self, sampling_rate_hz: f64, t0_offset_ms: f64) -> Self {
        self.t_cp_ms = crate::dsp::index_to_ms(self.index, t0_offset_ms, sampling_rate_hz);
        self
    }
}

/// Prefix sums of `x - shift` and `(x - shift)^2` over a slice of a series.
///
/// The shift (the first value of the slice) keeps the squared sums small on
/// offset data; costs are shift-invariant.
#[derive(Debug, Clone)]
pub struct CostL2Cache {
    base: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl CostL2Cache {
    /// Cache for `series[lo..hi]`; costs are then queried with absolute
    /// indices in `lo..=hi`.
    pub fn new(series: &[f64], lo: usize, hi: usize) -> Self {
        let part = &series[lo..hi];
        let shift = part.first().copied().unwrap_or(0.0);
        let mut sum = Vec::with_capacity(part.len() + 1);
        let mut sum_sq = Vec::with_capacity(part.len() + 1);
        let (mut s, mut q) = (0.0, 0.0);
        sum.push(0.0);
        sum_sq.push(0.0);
        for v in part {
            let d = v - shift;
            s += d;
            q += d * d;
            sum.push(s);
            sum_sq.push(q);
        }
        Self { base: lo, sum, sum_sq }
    }

    pub fn full(series: &[f64]) -> Self {
        Self::new(series, 0, series.len())
    }

    pub fn prefix_sum_sq(&self) -> &[f64] {
        &self.sum_sq
    }

    /// L2 cost of `x[a..b]`; callers guarantee `lo <= a < b <= hi`.
    pub fn cost(&self, a: usize, b: usize) -> f64 {
        let (i, j) = (a - self.base, b - self.base);
        let n = (j - i) as f64;
        let s = self.sum[j] - self.sum[i];
        let q = self.sum_sq[j] - self.sum_sq[i];
        (q - s * s / n).max(0.0)
    }
}

/// L2 cost of the segment `series[a..b]`.
pub fn cost_l2(series: &[f64], a: usize, b: usize) -> Result<f64> {
    if !(a < b && b <= series.len()) {
        return Err(Error::Domain(format!(
            "segment [{a}, {b}) is empty or exceeds series length {}",
            series.len()
        )));
    }
    Ok(CostL2Cache::new(series, a, b).cost(a, b))
}

fn check_range(series: &[f64], lo: usize, hi: usize) -> Result<()> {
    if lo >= hi || hi > series.len() {
        return Err(Error::config(format!(
            "change-point range [{lo}, {hi}) invalid for series of length {}",
            series.len()
        )));
    }
    Ok(())
}

/// Flat-range test: total cost zero up to rounding.
fn is_flat(cache: &CostL2Cache, lo: usize, hi: usize) -> bool {
    let total = cache.cost(lo, hi);
    let energy = cache.sum_sq[hi - cache.base] - cache.sum_sq[lo - cache.base];
    total <= 1e-12 * energy.max(f64::MIN_POSITIVE)
}

/// Binary segmentation for one change point in `series[lo..hi]`.
///
/// Minimises `c(lo, t) + c(t, hi)` over `lo + 1 <= t <= hi - 2` (the right
/// segment keeps at least two samples); ties go to the smallest `t`.
pub fn binseg_single(series: &[f64], lo: usize, hi: usize) -> Result<ChangePointResult> {
    check_range(series, lo, hi)?;
    if hi - lo < 3 {
        return Err(Error::config(format!(
            "binseg range [{lo}, {hi}) holds no admissible split"
        )));
    }
    let cache = CostL2Cache::new(series, lo, hi);
    let mut best = (lo + 1, f64::INFINITY);
    for t in lo + 1..=hi - 2 {
        let total = cache.cost(lo, t) + cache.cost(t, hi);
        if total < best.1 {
            best = (t, total);
        }
    }
    Ok(ChangePointResult::new(
        best.0,
        best.1,
        ChangePointMethod::Binseg,
        is_flat(&cache, lo, hi),
    ))
}

/// Sliding-window discrepancy with half width `w`.
///
/// Maximises `c(t-w, t+w) - c(t-w, t) - c(t, t+w)` over
/// `lo + w <= t <= hi - w`; ties go to the smallest `t`.
pub fn window_single(series: &[f64], lo: usize, hi: usize, half_width: usize) -> Result<ChangePointResult> {
    check_range(series, lo, hi)?;
    if half_width == 0 || hi - lo < 2 * half_width {
        return Err(Error::config(format!(
            "range [{lo}, {hi}) too narrow for two windows of {half_width} samples"
        )));
    }
    let cache = CostL2Cache::new(series, lo, hi);
    let w = half_width;
    let mut best = (lo + w, f64::NEG_INFINITY);
    for t in lo + w..=hi - w {
        let gain = cache.cost(t - w, t + w) - cache.cost(t - w, t) - cache.cost(t, t + w);
        if gain > best.1 {
            best = (t, gain);
        }
    }
    Ok(ChangePointResult::new(
        best.0,
        best.1,
        ChangePointMethod::Window,
        is_flat(&cache, lo, hi),
    ))
}

/// Bottom-up merging from a regular grid of candidate boundaries.
///
/// Boundaries start at `lo + k * grid_step` strictly inside the range. The
/// boundary whose removal raises the total cost least is dropped, ties to
/// the smallest index, until one boundary is left.
pub fn bottomup_single(series: &[f64], lo: usize, hi: usize, grid_step: usize) -> Result<ChangePointResult> {
    check_range(series, lo, hi)?;
    if grid_step == 0 || lo + grid_step >= hi {
        return Err(Error::config(format!(
            "range [{lo}, {hi}) holds fewer than 3 grid boundaries at step {grid_step}"
        )));
    }
    let cache = CostL2Cache::new(series, lo, hi);
    let mut bounds: Vec<usize> = (lo..=hi).step_by(grid_step).collect();
    if *bounds.last().unwrap() != hi {
        bounds.push(hi);
    }
    // increase in total cost when interior boundary i is removed
    let merge_cost = |b: &[usize], i: usize| {
        cache.cost(b[i - 1], b[i + 1]) - cache.cost(b[i - 1], b[i]) - cache.cost(b[i], b[i + 1])
    };
    let mut costs: Vec<f64> = (1..bounds.len() - 1).map(|i| merge_cost(&bounds, i)).collect();
    while costs.len() > 1 {
        let (pos, _) = costs.iter().enumerate().fold(
            (0, f64::INFINITY),
            |best, (i, &c)| if c < best.1 { (i, c) } else { best },
        );
        let i = pos + 1;
        bounds.remove(i);
        costs.remove(pos);
        // neighbours of the removed boundary now span a new segment
        if i > 1 {
            costs[pos - 1] = merge_cost(&bounds, i - 1);
        }
        if i < bounds.len() - 1 {
            costs[pos] = merge_cost(&bounds, i);
        }
    }
    let split = bounds[1];
    Ok(ChangePointResult::new(
        split,
        cache.cost(lo, split) + cache.cost(split, hi),
        ChangePointMethod::Bottomup,
        is_flat(&cache, lo, hi),
    ))
}
