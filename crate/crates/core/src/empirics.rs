//! Empirical distribution statistics used to compare dissimilarity samples
//! across lengths: ECDFs, the ε disagreement score, first-quartile
//! two-sample KS tests, pairwise comparison matrices and quantile trends.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::sampling::EmpiricalSample;

/// Default number of evaluation points for ε.
pub const EPSILON_BINS: usize = 100;

/// Right-continuous step ECDF over borrowed sorted values.
#[derive(Debug, Clone, Copy)]
pub struct Ecdf<'a> {
    sorted: &'a [f64],
}

impl<'a> Ecdf<'a> {
    pub fn new(sorted: &'a [f64]) -> Result<Self> {
        if sorted.is_empty() {
            return Err(Error::invalid("ECDF of an empty sample"));
        }
        debug_assert!(sorted.windows(2).all(|p| p[0] <= p[1]));
        Ok(Self { sorted })
    }

    /// Fraction of values `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }
}

/// `k` equally spaced points spanning `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..k)
            .map(|i| {
                if i == k - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (k - 1) as f64
                }
            })
            .collect(),
    }
}

/// Mean absolute ECDF difference on `bins` points spanning the union range.
pub fn epsilon(a: &[f64], b: &[f64], bins: usize) -> Result<f64> {
    let (fa, fb) = (Ecdf::new(a)?, Ecdf::new(b)?);
    if bins == 0 {
        return Err(Error::invalid("epsilon needs at least one bin"));
    }
    let lo = fa.min().min(fb.min());
    let hi = fa.max().max(fb.max());
    let total: f64 = grid(lo, hi, bins)
        .into_iter()
        .map(|x| (fa.eval(x) - fb.eval(x)).abs())
        .sum();
    Ok(total / bins as f64)
}

/// ε between an ECDF and a reference CDF on `bins` points over the sample range.
pub fn epsilon_vs_cdf(sample: &[f64], cdf: impl Fn(f64) -> f64, bins: usize) -> Result<f64> {
    let f = Ecdf::new(sample)?;
    if bins == 0 {
        return Err(Error::invalid("epsilon needs at least one bin"));
    }
    let total: f64 = grid(f.min(), f.max(), bins)
        .into_iter()
        .map(|x| (f.eval(x) - cdf(x)).abs())
        .sum();
    Ok(total / bins as f64)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form converges fast for small arguments.
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda
            * (y + y.powi(9) + y.powi(25) + y.powi(49));
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let x = (-2.0 * lambda * lambda).exp();
        (2.0 * (x - x.powi(4) + x.powi(9) - x.powi(16))).clamp(0.0, 1.0)
    }
}

/// Two-sample KS statistic between sorted samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample KS test with the asymptotic p-value (Stephens' small-sample
/// correction to the effective size).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS test on an empty sample"));
    }
    let statistic = ks_statistic(a, b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let en = (n * m / (n + m)).sqrt();
    let p_value = kolmogorov_sf((en + 0.12 + 0.11 / en) * statistic);
    Ok(KsResult { statistic, p_value })
}

/// Minimum sample size accepted by [`ks_first_quartile`].
pub const KS_QUARTILE_MIN: usize = 40;

/// `P(sup_{0<=s<=tau} |B(s)| > lambda)` for a standard Brownian bridge `B`.
///
/// Conditional on `B(tau) = x` the bridge on `[0, tau]` is Brownian motion
/// pinned at time `tau`, so the non-exit probability is the method-of-images
/// strip density divided by the free density, integrated against the law
/// `N(0, tau (1 - tau))` of `B(tau)`.
pub fn bridge_sup_sf(lambda: f64, tau: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if tau >= 1.0 {
        return kolmogorov_sf(lambda);
    }
    if !(tau > 0.0) {
        return 0.0;
    }
    let sd = tau.sqrt();
    let free = |x: f64| (-x * x / (2.0 * tau)).exp();
    // images until they are more than 10 sd away from the strip
    let reach = ((lambda + 10.0 * sd) / (4.0 * lambda)).ceil() as i64 + 1;
    let strip = |x: f64| {
        let mut q = 0.0;
        for k in -reach..=reach {
            let shift = 4.0 * k as f64 * lambda;
            q += free(x - shift) - free(x - 2.0 * lambda - shift);
        }
        q
    };
    let rest = 1.0 - tau;
    let weight = |x: f64| strip(x) * (-x * x / (2.0 * rest)).exp() / (rest * tau).sqrt();
    let width = sd.min(rest.sqrt()).min(lambda);
    let intervals = (((2.0 * lambda) / (0.02 * width)).ceil() as usize).clamp(200, 200_000);
    let intervals = intervals + intervals % 2;
    let h = 2.0 * lambda / intervals as f64;
    let mut acc = weight(-lambda) + weight(lambda);
    for i in 1..intervals {
        let x = -lambda + h * i as f64;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * weight(x);
    }
    let inside = acc * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt();
    (1.0 - inside).clamp(0.0, 1.0)
}

/// Two-sample KS test on the lower tail: the supremum of the ECDF difference
/// is taken over `d <= t`, where `t` is the first quartile of the pooled
/// sample, and the p-value comes from the sup of a Brownian bridge over the
/// realized pooled fraction at or below `t`.
pub fn ks_first_quartile(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < KS_QUARTILE_MIN || b.len() < KS_QUARTILE_MIN {
        return Err(Error::precondition(format!(
            "first-quartile KS needs at least {KS_QUARTILE_MIN} values per sample (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let (n, m) = (a.len(), b.len());
    let pooled_rank = (n + m) / 4;
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m && i + j < pooled_rank {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    // one sample exhausted before the pooled quartile: the other keeps climbing
    if i + j < pooled_rank {
        if i == n {
            j = pooled_rank - n;
        } else {
            i = pooled_rank - m;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let tau = (i + j) as f64 / (n + m) as f64;
    let (nf, mf) = (n as f64, m as f64);
    let en = (nf * mf / (nf + mf)).sqrt();
    let p_value = bridge_sup_sf((en + 0.12 + 0.11 / en) * d, tau);
    Ok(KsResult {
        statistic: d,
        p_value,
    })
}

/// One-sample lower-tail KS statistic: the supremum of `|ECDF(d) - cdf(d)|`
/// over `d` up to the sample's first quartile. The ECDF is over the full
/// sorted sample.
pub fn ks_first_quartile_vs_cdf(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    let n = sorted.len() as f64;
    let cut = quantile(sorted, 0.25);
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() && sorted[i] <= cut {
        let x = sorted[i];
        let f = cdf(x);
        let below = i as f64 / n;
        while i < sorted.len() && sorted[i] == x {
            i += 1;
        }
        d = d.max((f - below).abs()).max((i as f64 / n - f).abs());
    }
    // the model CDF keeps rising between the last point and the cut
    d = d.max((cdf(cut) - i as f64 / n).abs());
    Ok(d)
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Median absolute deviation around the median (unscaled).
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

/// Pairwise ε and first-quartile KS p-values over a length grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMatrices {
    pub w: Vec<usize>,
    pub eps: Vec<Vec<f64>>,
    pub pks: Vec<Vec<f64>>,
}

pub fn pairwise_compare(samples: &[EmpiricalSample], bins: usize) -> Result<ComparisonMatrices> {
    if samples.len() < 2 {
        return Err(Error::precondition("pairwise comparison needs at least 2 lengths"));
    }
    let k = samples.len();
    let cells: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect();
    let results: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (samples[i].values(), samples[j].values());
            Ok((epsilon(a, b, bins)?, ks_first_quartile(a, b)?.p_value))
        })
        .collect::<Result<_>>()?;
    let mut eps = vec![vec![0.0; k]; k];
    let mut pks = vec![vec![1.0; k]; k];
    for (&(i, j), &(e, p)) in cells.iter().zip(&results) {
        eps[i][j] = e;
        eps[j][i] = e;
        pks[i][j] = p;
        pks[j][i] = p;
    }
    Ok(ComparisonMatrices {
        w: samples.iter().map(|s| s.w).collect(),
        eps,
        pks,
    })
}

/// Median and MAD of ε and p_KS at one length difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WDeltaRow {
    pub w_delta: usize,
    pub count: usize,
    pub eps_median: f64,
    pub eps_mad: f64,
    pub pks_median: f64,
    pub pks_mad: f64,
}

type Buckets = BTreeMap<usize, (Vec<f64>, Vec<f64>)>;

fn bucket_entries(m: &ComparisonMatrices, into: &mut Buckets) {
    let k = m.w.len();
    for i in 0..k {
        for j in i + 1..k {
            let delta = m.w[i].abs_diff(m.w[j]);
            if delta == 0 {
                continue;
            }
            let slot = into.entry(delta).or_default();
            slot.0.push(m.eps[i][j]);
            slot.1.push(m.pks[i][j]);
        }
    }
}

fn summarize(buckets: Buckets) -> Vec<WDeltaRow> {
    buckets
        .into_iter()
        .map(|(w_delta, (e, p))| WDeltaRow {
            w_delta,
            count: e.len(),
            eps_median: median(&e),
            eps_mad: mad(&e),
            pks_median: median(&p),
            pks_mad: mad(&p),
        })
        .collect()
}

/// Statistics of the off-diagonal entries grouped by `|w_i - w_j|`.
pub fn aggregate_by_wdelta(m: &ComparisonMatrices) -> Vec<WDeltaRow> {
    let mut buckets = Buckets::new();
    bucket_entries(m, &mut buckets);
    summarize(buckets)
}

/// Pool the entries of several matrices before taking medians.
pub fn aggregate_pooled(ms: &[ComparisonMatrices]) -> Vec<WDeltaRow> {
    let mut buckets = Buckets::new();
    for m in ms {
        bucket_entries(m, &mut buckets);
    }
    summarize(buckets)
}

/// Median and MAD, across matrices, of each matrix's per-`w_Δ` medians.
pub fn aggregate_median_of_medians(ms: &[ComparisonMatrices]) -> Vec<WDeltaRow> {
    let mut buckets = Buckets::new();
    for m in ms {
        for row in aggregate_by_wdelta(m) {
            let slot = buckets.entry(row.w_delta).or_default();
            slot.0.push(row.eps_median);
            slot.1.push(row.pks_median);
        }
    }
    summarize(buckets)
}

/// OLS fit of a quantile level against length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub q: f64,
    pub w_lo: usize,
    pub w_hi: usize,
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    pub p_value: f64,
}

/// OLS regression of `y` on `x` with the two-sided t-test for zero slope.
/// Returns `(slope, intercept, p_value)`.
pub fn ols_slope_test(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len();
    if n < 3 || n != y.len() {
        return Err(Error::precondition("trend regression needs at least 3 points"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::precondition("trend regression over a single length"));
    }
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let scale = y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    if syy <= 1e-26 * scale {
        return Ok((0.0, my, 1.0));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let df = nf - 2.0;
    let se = (rss / df / sxx).sqrt();
    let p_value = if rss <= 1e-26 * scale || se == 0.0 {
        0.0
    } else {
        let t = (slope / se).abs();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::numeric(e.to_string()))?;
        (2.0 * dist.sf(t)).clamp(0.0, 1.0)
    };
    Ok((slope, intercept, p_value))
}

/// Significance of the per-length `q`-quantile's linear trend over the
/// samples whose length falls in `[w_lo, w_hi]`.
pub fn quantile_trend(samples: &[EmpiricalSample], q: f64, w_lo: usize, w_hi: usize) -> Result<Trend> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid("quantile level must lie in (0, 1)"));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|s| (w_lo..=w_hi).contains(&s.w))
        .map(|s| (s.w as f64, quantile(s.values(), q)))
        .unzip();
    let (slope, intercept, p_value) = ols_slope_test(&x, &y)?;
    Ok(Trend {
        q,
        w_lo,
        w_hi,
        points: x.len(),
        slope,
        intercept,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width histogram over the sample range.
pub fn histogram(sorted: &[f64], bins: usize) -> Result<Vec<HistBin>> {
    if sorted.is_empty() || bins == 0 {
        return Err(Error::invalid("histogram needs data and at least one bin"));
    }
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if hi == lo {
        return Ok(vec![HistBin {
            lo,
            hi,
            count: sorted.len(),
        }]);
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in sorted {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistBin {
            lo: lo + width * i as f64,
            hi: if i == bins - 1 { hi } else { lo + width * (i + 1) as f64 },
            count,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissim::MeasureKind;
    use proptest::prelude::*;
    use rand::RngExt;
    use rand_distr::StandardNormal;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v
    }

    fn sample_at(w: usize, values: Vec<f64>) -> EmpiricalSample {
        EmpiricalSample::new(w, MeasureKind::Euc, 0, values).unwrap()
    }

    #[test]
    fn ecdf_steps() {
        let v = [1.0, 2.0, 2.0, 3.0];
        let f = Ecdf::new(&v).unwrap();
        assert_eq!(f.eval(0.5), 0.0);
        assert_eq!(f.eval(2.0), 0.75);
        assert_eq!(f.eval(10.0), 1.0);
        assert!(Ecdf::new(&[]).is_err());
    }

    #[test]
    fn epsilon_point_masses() {
        let e = epsilon(&[0.0], &[1.0], 100).unwrap();
        assert!((e - 0.99).abs() < 1e-15);
        assert_eq!(epsilon(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0], 100).unwrap(), 0.0);
        assert!(epsilon(&[], &[1.0], 100).is_err());
    }

    #[test]
    fn epsilon_same_distribution_is_small() {
        let mut rng = crate::seed::rng(17);
        let mut eps = Vec::new();
        for _ in 0..200 {
            let a = sorted((0..2000).map(|_| rng.sample(StandardNormal)).collect());
            let b = sorted((0..2000).map(|_| rng.sample(StandardNormal)).collect());
            eps.push(epsilon(&a, &b, 100).unwrap());
        }
        assert!(median(&eps) < 0.02, "median eps {}", median(&eps));
    }

    #[test]
    fn kolmogorov_reference_values() {
        // P(K > 1.36) ~= 0.0494, P(K > 1.0) ~= 0.2700, P(K > 0.5) ~= 0.9639
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_sf(1.0) - 0.2700).abs() < 5e-4);
        assert!((kolmogorov_sf(0.5) - 0.9639).abs() < 5e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        // the two branches agree where they meet
        assert!((kolmogorov_sf(1.18 - 1e-12) - kolmogorov_sf(1.18)).abs() < 1e-9);
    }

    #[test]
    fn bridge_sup_matches_kolmogorov_near_full_range() {
        for lambda in [0.6, 1.0, 1.36, 2.0] {
            let full = kolmogorov_sf(lambda);
            let near = bridge_sup_sf(lambda, 1.0 - 1e-6);
            assert!((full - near).abs() < 1e-4, "lambda {lambda}: {full} vs {near}");
        }
        assert_eq!(bridge_sup_sf(0.0, 0.25), 1.0);
        assert!(bridge_sup_sf(5.0, 0.25) < 1e-12);
    }

    #[test]
    fn bridge_sup_matches_simulation() {
        // discretized Brownian bridges, sup over the first quarter
        let mut rng = crate::seed::rng(21);
        let (paths, steps) = (20_000, 2000);
        let tau = 0.25;
        let lambdas = [0.4, 0.6, 0.9];
        let mut exceed = [0usize; 3];
        let mut walk = vec![0.0; steps + 1];
        for _ in 0..paths {
            for t in 1..=steps {
                walk[t] = walk[t - 1] + rng.sample::<f64, _>(StandardNormal) / (steps as f64).sqrt();
            }
            let end = walk[steps];
            let mut sup: f64 = 0.0;
            for t in 0..=(steps as f64 * tau) as usize {
                let s = t as f64 / steps as f64;
                sup = sup.max((walk[t] - s * end).abs());
            }
            for (k, l) in lambdas.iter().enumerate() {
                if sup > *l {
                    exceed[k] += 1;
                }
            }
        }
        for (k, l) in lambdas.iter().enumerate() {
            let mc = exceed[k] as f64 / paths as f64;
            // discrete monitoring behaves like a barrier shifted by
            // 0.5826 * sqrt(dt) (Broadie-Glasserman-Kou continuity correction)
            let exact = bridge_sup_sf(l + 0.5826 / (steps as f64).sqrt(), tau);
            assert!((mc - exact).abs() < 0.01, "lambda {l}: mc {mc} vs {exact}");
        }
    }

    #[test]
    fn ks_identical_and_shifted() {
        let mut rng = crate::seed::rng(3);
        let a = sorted((0..2000).map(|_| rng.random::<f64>()).collect());
        let r = ks_first_quartile(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let b: Vec<f64> = a.iter().map(|v| v + 0.5).collect();
        assert!(ks_first_quartile(&a, &b).unwrap().p_value < 1e-6);
        assert!(matches!(
            ks_first_quartile(&a[..39], &a),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn ks_statistic_handles_ties() {
        assert_eq!(ks_statistic(&[1.0, 1.0, 2.0], &[1.0, 1.0, 2.0]), 0.0);
        assert!((ks_statistic(&[1.0, 2.0], &[1.0, 1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ks_first_quartile_size() {
        let mut rng = crate::seed::rng(99);
        let trials = 500;
        let mut rejections = 0;
        for _ in 0..trials {
            let a = sorted((0..2000).map(|_| rng.random::<f64>()).collect());
            let b = sorted((0..2000).map(|_| rng.random::<f64>()).collect());
            if ks_first_quartile(&a, &b).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let frac = rejections as f64 / trials as f64;
        assert!((0.01..=0.12).contains(&frac), "size {frac}");
    }

    #[test]
    fn quantile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(mad(&[1.0, 2.0, 3.0, 4.0, 100.0]), 1.0);
    }

    #[test]
    fn pairwise_two_lengths() {
        let a = sample_at(10, (0..100).map(|i| i as f64 / 100.0).collect());
        let b = sample_at(20, (0..100).map(|i| 0.1 + i as f64 / 100.0).collect());
        let m = pairwise_compare(&[a.clone(), b], 100).unwrap();
        assert_eq!(m.w, vec![10, 20]);
        assert_eq!(m.eps[0][0], 0.0);
        assert_eq!(m.pks[1][1], 1.0);
        assert_eq!(m.eps[0][1], m.eps[1][0]);
        let rows = aggregate_by_wdelta(&m);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].w_delta, 10);
        assert_eq!(rows[0].eps_mad, 0.0);
        assert!(pairwise_compare(&[a], 100).is_err());
    }

    #[test]
    fn identical_samples_give_zero_eps() {
        let v: Vec<f64> = (0..80).map(|i| (i as f64).sqrt()).collect();
        let s: Vec<_> = [5, 10, 15].iter().map(|&w| sample_at(w, v.clone())).collect();
        let m = pairwise_compare(&s, 100).unwrap();
        assert!(m.eps.iter().flatten().all(|&e| e == 0.0));
        assert!(m.pks.iter().flatten().all(|&p| p == 1.0));
    }

    #[test]
    fn wdelta_medians_by_hand() {
        let m = ComparisonMatrices {
            w: vec![10, 20, 30],
            eps: vec![
                vec![0.0, 0.1, 0.5],
                vec![0.1, 0.0, 0.3],
                vec![0.5, 0.3, 0.0],
            ],
            pks: vec![
                vec![1.0, 0.8, 0.01],
                vec![0.8, 1.0, 0.4],
                vec![0.01, 0.4, 1.0],
            ],
        };
        let rows = aggregate_by_wdelta(&m);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].w_delta, 10);
        assert!((rows[0].eps_median - 0.2).abs() < 1e-15);
        assert!((rows[0].eps_mad - 0.1).abs() < 1e-15);
        assert!((rows[0].pks_median - 0.6).abs() < 1e-15);
        assert_eq!(rows[1].w_delta, 20);
        assert_eq!(rows[1].eps_median, 0.5);
        assert_eq!(rows[1].pks_mad, 0.0);

        let pooled = aggregate_pooled(&[m.clone(), m.clone()]);
        assert_eq!(pooled[0].count, 4);
        assert!((pooled[0].eps_median - 0.2).abs() < 1e-15);
        let mm = aggregate_median_of_medians(&[m.clone(), m]);
        assert_eq!(mm[0].count, 2);
        assert_eq!(mm[0].eps_mad, 0.0);
    }

    #[test]
    fn constant_matrices_aggregate_to_constant() {
        let k = 5;
        let m = ComparisonMatrices {
            w: (1..=k).map(|i| i * 10).collect(),
            eps: vec![vec![0.3; k]; k],
            pks: vec![vec![0.7; k]; k],
        };
        let rows = aggregate_by_wdelta(&m);
        assert_eq!(rows.len(), k - 1);
        for r in rows {
            assert_eq!((r.eps_median, r.eps_mad, r.pks_median, r.pks_mad), (0.3, 0.0, 0.7, 0.0));
        }
    }

    /// Textbook OLS from the normal equations in raw sums.
    fn ols_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn trend_degenerate_cases() {
        let x: Vec<f64> = (300..=500).step_by(10).map(|v| v as f64).collect();
        let flat = vec![0.37; x.len()];
        let (slope, _, p) = ols_slope_test(&x, &flat).unwrap();
        assert_eq!(slope, 0.0);
        assert!(p > 0.99);
        let line: Vec<f64> = x.iter().map(|w| 0.2 + 0.001 * w).collect();
        let (slope, _, p) = ols_slope_test(&x, &line).unwrap();
        assert!((slope - 0.001).abs() < 1e-12);
        assert!(p < 1e-12);
        assert!(ols_slope_test(&x[..2], &line[..2]).is_err());
        assert!(ols_slope_test(&[5.0; 4], &[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn trend_detects_noisy_slope() {
        let mut rng = crate::seed::rng(8);
        let x: Vec<f64> = (300..=500).map(|v| v as f64).collect();
        let mut good = 0;
        for _ in 0..100 {
            let y: Vec<f64> = x
                .iter()
                .map(|w| 0.2 + 0.001 * w + 0.005 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let (slope, _, p) = ols_slope_test(&x, &y).unwrap();
            assert!((slope - ols_oracle(&x, &y)).abs() < 1e-9);
            if (0.0008..=0.0012).contains(&slope) && p < 0.01 {
                good += 1;
            }
        }
        assert!(good >= 95, "{good} of 100");
    }

    #[test]
    fn quantile_trend_uses_window() {
        let samples: Vec<EmpiricalSample> = (1..=10)
            .map(|i| sample_at(i * 10, (0..50).map(|k| k as f64 * i as f64).collect()))
            .collect();
        let t = quantile_trend(&samples, 0.5, 30, 70).unwrap();
        assert_eq!(t.points, 5);
        assert!(t.slope > 0.0);
        assert!(quantile_trend(&samples, 0.5, 30, 40).is_err());
        assert!(quantile_trend(&samples, 1.0, 10, 100).is_err());
    }

    #[test]
    fn histogram_counts() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let h = histogram(&v, 10).unwrap();
        assert_eq!(h.len(), 10);
        assert!(h.iter().all(|b| b.count == 10));
        assert_eq!(h[9].hi, 99.0);
        assert_eq!(histogram(&[2.0, 2.0], 5).unwrap()[0].count, 2);
    }

    #[test]
    fn one_sample_quartile_statistic() {
        // uniform cdf, sample 1..=8 / 8: ECDF(k/8) = k/8, cut at 2.75/8
        let s: Vec<f64> = (1..=8).map(|k| k as f64 / 8.0).collect();
        let d = ks_first_quartile_vs_cdf(&s, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - 0.125).abs() < 1e-15);
        // brute force over a fine grid up to the cut
        let mut rng = crate::seed::rng(3);
        let mut v: Vec<f64> = (0..200).map(|_| rand::RngExt::random::<f64>(&mut rng).powi(2)).collect();
        v.sort_by(f64::total_cmp);
        let cdf = |x: f64| x.clamp(0.0, 1.0);
        let cut = quantile(&v, 0.25);
        let ecdf = Ecdf::new(&v).unwrap();
        let mut brute: f64 = 0.0;
        for k in 0..=200_000 {
            let x = cut * k as f64 / 200_000.0;
            brute = brute.max((ecdf.eval(x) - cdf(x)).abs());
        }
        let got = ks_first_quartile_vs_cdf(&v, cdf).unwrap();
        assert!(got >= brute - 1e-12 && got - brute < 1e-4, "{got} {brute}");
    }

    proptest! {
        #[test]
        fn epsilon_properties(
            a in prop::collection::vec(0.0f64..10.0, 1..60),
            b in prop::collection::vec(0.0f64..10.0, 1..60),
        ) {
            let (a, b) = (sorted(a), sorted(b));
            let ab = epsilon(&a, &b, 100).unwrap();
            let ba = epsilon(&b, &a, 100).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(epsilon(&a, &a, 100).unwrap(), 0.0);
        }

        #[test]
        fn ks_quartile_transform_invariant(
            a in prop::collection::vec(0.01f64..10.0, 40..120),
            b in prop::collection::vec(0.01f64..10.0, 40..120),
        ) {
            let (a, b) = (sorted(a), sorted(b));
            let r = ks_first_quartile(&a, &b).unwrap();
            let ta: Vec<f64> = a.iter().map(|v| v.ln() * 3.0 + 1.0).collect();
            let tb: Vec<f64> = b.iter().map(|v| v.ln() * 3.0 + 1.0).collect();
            let t = ks_first_quartile(&ta, &tb).unwrap();
            prop_assert_eq!(r.statistic, t.statistic);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }

        #[test]
        fn wdelta_row_count(ws in prop::collection::btree_set(2usize..300, 2..12)) {
            let w: Vec<usize> = ws.into_iter().collect();
            let k = w.len();
            let m = ComparisonMatrices { w: w.clone(), eps: vec![vec![0.1; k]; k], pks: vec![vec![0.5; k]; k] };
            let mut deltas = std::collections::BTreeSet::new();
            for i in 0..k { for j in i + 1..k { deltas.insert(w[i].abs_diff(w[j])); } }
            prop_assert_eq!(aggregate_by_wdelta(&m).len(), deltas.len());
        }
    }
}
