//! Uniform sampling of the motif dissimilarity space.
//!
//! Candidate pairs `(i, j)` have 1-based starts in `[1, N - w]` and satisfy
//! `|i - j| > w`, which excludes trivial matches. Pairs are unordered and
//! drawn with replacement.

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dissim::{Measure, MeasureKind};
use crate::error::{Error, Result};
use crate::seed;
use crate::series::{znorm_into, Series};

/// Sorted dissimilarities drawn for one length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSample {
    pub w: usize,
    pub kind: MeasureKind,
    pub seed: u64,
    values: Vec<f64>,
}

impl EmpiricalSample {
    /// Sorts `values`; rejects empty, negative or non-finite input.
    pub fn new(w: usize, kind: MeasureKind, seed: u64, mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty sample"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "sample values must be finite and non-negative",
            ));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self {
            w,
            kind,
            seed,
            values,
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

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// The `k` smallest values.
    pub fn lowest(&self, k: usize) -> &[f64] {
        &self.values[..k.min(self.values.len())]
    }
}

fn check_feasible(series_len: usize, w: usize) -> Result<()> {
    if w < 2 {
        return Err(Error::precondition("segment length must be at least 2"));
    }
    if series_len < 2 * w + 2 {
        return Err(Error::precondition(format!(
            "series of length {series_len} admits no non-trivial pair at w = {w} (needs {})",
            2 * w + 2
        )));
    }
    Ok(())
}

/// Draw `n` admissible pairs by rejection: `i, j` independent and uniform on
/// `[1, N - w]`, rejected when `|i - j| <= w`. Returned as `(min, max)`.
pub fn sample_pairs(series_len: usize, w: usize, n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    check_feasible(series_len, w)?;
    if n == 0 {
        return Err(Error::invalid("pair count must be positive"));
    }
    let hi = series_len - w;
    let mut rng = seed::rng(seed);
    let mut pairs = Vec::with_capacity(n);
    while pairs.len() < n {
        let i = rng.random_range(1..=hi);
        let j = rng.random_range(1..=hi);
        if i.abs_diff(j) > w {
            pairs.push((i.min(j), i.max(j)));
        }
    }
    Ok(pairs)
}

/// Every admissible unordered pair, in lexicographic order.
pub fn admissible_pairs(series_len: usize, w: usize) -> Result<Vec<(usize, usize)>> {
    check_feasible(series_len, w)?;
    let hi = series_len - w;
    Ok((1..=hi)
        .flat_map(|i| (i + w + 1..=hi).map(move |j| (i, j)))
        .collect())
}

/// Dissimilarity of the z-normalized segments starting at `i` and `j`.
pub(crate) struct PairScorer<'a> {
    series: &'a Series,
    measure: &'a Measure,
    w: usize,
    za: Vec<f64>,
    zb: Vec<f64>,
}

impl<'a> PairScorer<'a> {
    pub(crate) fn new(series: &'a Series, measure: &'a Measure, w: usize) -> Self {
        Self {
            series,
            measure,
            w,
            za: Vec::with_capacity(w),
            zb: Vec::with_capacity(w),
        }
    }

    pub(crate) fn score(&mut self, i: usize, j: usize) -> f64 {
        let x = self.series.values();
        znorm_into(&x[i - 1..i - 1 + self.w], &mut self.za);
        znorm_into(&x[j - 1..j - 1 + self.w], &mut self.zb);
        self.measure.eval(&self.za, &self.zb)
    }
}

/// Seed of the sampling job for one `(w, measure)` cell.
pub fn job_seed(seed: u64, w: usize, kind: MeasureKind) -> u64 {
    seed::derive_seed(seed, &[w as u64, kind.tag()])
}

/// Sample `n` dissimilarities at length `w`, along with the pairs drawn.
pub fn sample_dissims_with_pairs(
    series: &Series,
    w: usize,
    n: usize,
    measure: &Measure,
    seed: u64,
) -> Result<(EmpiricalSample, Vec<(usize, usize)>)> {
    measure.params.validate()?;
    let pairs = sample_pairs(series.len(), w, n, job_seed(seed, w, measure.kind))?;
    let mut scorer = PairScorer::new(series, measure, w);
    let values: Vec<f64> = pairs.iter().map(|&(i, j)| scorer.score(i, j)).collect();
    let sample = EmpiricalSample::new(w, measure.kind, seed, values)?;
    Ok((sample, pairs))
}

pub fn sample_dissims(
    series: &Series,
    w: usize,
    n: usize,
    measure: &Measure,
    seed: u64,
) -> Result<EmpiricalSample> {
    sample_dissims_with_pairs(series, w, n, measure, seed).map(|(s, _)| s)
}

/// Samples for every length of `grid`, computed in parallel.
pub fn sample_grid(
    series: &Series,
    grid: &[usize],
    n: usize,
    measure: &Measure,
    seed: u64,
) -> Result<Vec<EmpiricalSample>> {
    grid.par_iter()
        .map(|&w| sample_dissims(series, w, n, measure, seed))
        .collect()
}

/// The `k` lowest sampled dissimilarities for each length.
pub fn lowest_k(
    series: &Series,
    grid: &[usize],
    k: usize,
    n: usize,
    measure: &Measure,
    seed: u64,
) -> Result<Vec<(usize, Vec<f64>)>> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in [1, n = {n}]")));
    }
    Ok(sample_grid(series, grid, n, measure, seed)?
        .into_iter()
        .map(|s| (s.w, s.lowest(k).to_vec()))
        .collect())
}

/// `lo, lo + step, ...` up to `hi`, with `hi` always included.
pub fn length_grid(lo: usize, hi: usize, step: usize) -> Result<Vec<usize>> {
    if step == 0 || lo > hi {
        return Err(Error::invalid(format!(
            "invalid length grid [{lo}, {hi}] step {step}"
        )));
    }
    let mut grid: Vec<usize> = (lo..=hi).step_by(step).collect();
    if *grid.last().unwrap() != hi {
        grid.push(hi);
    }
    Ok(grid)
}
