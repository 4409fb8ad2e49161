//! Length-aware model of a dissimilarity space.
//!
//! Beta distributions fitted at a grid of lengths are smoothed into rational
//! curves `α(w)`, `β(w)`, `m(w)`; the normalized score of a dissimilarity `d`
//! at length `w` is the model CDF `P_w(D <= d)`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta::{fit_beta_values, sample_beta, BetaParams, PsoConfig};
use crate::dissim::{Measure, MeasureKind, MeasureParams};
use crate::empirics::{epsilon_vs_cdf, ks_first_quartile_vs_cdf, mad, median, EPSILON_BINS};
use crate::error::{Error, Result};
use crate::rational::{select_positive_rational, Candidate, FitReport, RationalFn, Selection};
use crate::sampling::{length_grid, sample_dissims, EmpiricalSample};
use crate::seed;
use crate::series::Series;

pub const FORMAT_VERSION: u32 = 1;

const TAG_FIT: u64 = 0xF17;
const TAG_CURVE: u64 = 0xC0;
const TAG_VALIDATE: u64 = 0x7A1;
const TAG_BOOT: u64 = 0xB007;

/// Raw maximum-likelihood fit at one grid length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthFit {
    pub w: usize,
    pub params: BetaParams,
    pub loglik: f64,
    pub sample_size: usize,
    pub sample_max: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub boundary_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub u: usize,
    pub v: usize,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub report: FitReport,
    pub candidates: Vec<Candidate>,
}

impl Curve {
    fn from_selection(s: Selection) -> Self {
        Self {
            u: s.curve.u(),
            v: s.curve.v(),
            q: s.curve.q,
            r: s.curve.r,
            report: s.report,
            candidates: s.candidates,
        }
    }

    pub fn function(&self) -> RationalFn {
        RationalFn {
            q: self.q.clone(),
            r: self.r.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub alpha: Curve,
    pub beta: Curve,
    pub m: Curve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub series_len: usize,
    /// Dissimilarities sampled per length.
    pub n: usize,
    pub seed: u64,
    pub pso: PsoConfig,
    /// Seconds since the epoch, only when supplied by the caller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<u64>,
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimModel {
    pub format_version: u32,
    pub measure: MeasureKind,
    pub measure_params: MeasureParams,
    pub w_min: usize,
    pub w_max: usize,
    pub w_step: usize,
    pub curves: Curves,
    pub diagnostics: Vec<LengthFit>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub w_min: usize,
    pub w_max: usize,
    pub w_step: usize,
    pub n: usize,
    pub pso: PsoConfig,
}

impl BuildConfig {
    pub fn grid(&self) -> Result<Vec<usize>> {
        if self.w_min < 2 {
            return Err(Error::precondition("w_min must be at least 2"));
        }
        length_grid(self.w_min, self.w_max, self.w_step)
    }
}

/// Fit a beta distribution to every sample.
pub fn fit_lengths(samples: &[EmpiricalSample], pso: &PsoConfig, seed: u64) -> Result<Vec<LengthFit>> {
    samples
        .par_iter()
        .map(|s| {
            let cfg = pso.with_seed(seed::derive_seed(seed, &[s.w as u64, s.kind.tag(), TAG_FIT]));
            let fit = fit_beta_values(s.values(), &cfg)?;
            Ok(LengthFit {
                w: s.w,
                params: fit.params,
                loglik: fit.loglik,
                sample_size: s.len(),
                sample_max: s.max(),
                iterations: fit.iterations,
                evaluations: fit.evaluations,
                boundary_hits: fit.boundary_hits,
            })
        })
        .collect()
}

/// Smooth per-length fits into a model covering `[w_min, w_max]`.
pub fn assemble_model(
    measure: &Measure,
    w_min: usize,
    w_max: usize,
    w_step: usize,
    mut fits: Vec<LengthFit>,
    provenance: Provenance,
) -> Result<DissimModel> {
    fits.sort_by_key(|f| f.w);
    let curve = |k: u64, get: fn(&BetaParams) -> f64| -> Result<Curve> {
        let pts: Vec<(f64, f64)> = fits.iter().map(|f| (f.w as f64, get(&f.params))).collect();
        let seed = seed::derive_seed(provenance.seed, &[TAG_CURVE, k]);
        select_positive_rational(&pts, w_min, w_max, seed).map(Curve::from_selection)
    };
    let curves = Curves {
        alpha: curve(0, |p| p.alpha)?,
        beta: curve(1, |p| p.beta)?,
        m: curve(2, |p| p.m)?,
    };
    Ok(DissimModel {
        format_version: FORMAT_VERSION,
        measure: measure.kind,
        measure_params: measure.params,
        w_min,
        w_max,
        w_step,
        curves,
        diagnostics: fits,
        provenance,
    })
}

/// Sample, fit and smooth over the grid `w_min, w_min + w_step, ..., w_max`.
pub fn build_model(
    series: &Series,
    measure: &Measure,
    cfg: &BuildConfig,
    seed: u64,
    created: Option<u64>,
) -> Result<DissimModel> {
    let grid = cfg.grid()?;
    if grid.len() < crate::rational::SELECT_MIN_POINTS {
        return Err(Error::precondition(format!(
            "grid has {} lengths; rational smoothing needs at least {}",
            grid.len(),
            crate::rational::SELECT_MIN_POINTS
        )));
    }
    if series.len() < 2 * cfg.w_max + 2 {
        return Err(Error::precondition(format!(
            "series of length {} is too short for w_max = {}",
            series.len(),
            cfg.w_max
        )));
    }
    let samples: Vec<EmpiricalSample> = grid
        .par_iter()
        .map(|&w| sample_dissims(series, w, cfg.n, measure, seed))
        .collect::<Result<_>>()?;
    let fits = fit_lengths(&samples, &cfg.pso, seed)?;
    let provenance = Provenance {
        source: series.source().to_string(),
        series_len: series.len(),
        n: cfg.n,
        seed,
        pso: cfg.pso,
        created,
        generator: concat!("mdspace ", env!("CARGO_PKG_VERSION")).to_string(),
    };
    assemble_model(measure, cfg.w_min, cfg.w_max, cfg.w_step, fits, provenance)
}

impl DissimModel {
    pub fn measure(&self) -> Measure {
        Measure {
            kind: self.measure,
            params: self.measure_params,
        }
    }

    pub fn contains(&self, w: usize) -> bool {
        (self.w_min..=self.w_max).contains(&w)
    }

    /// Curve values at `w`. Outside `[w_min, w_max]` this errors unless
    /// `extrapolate` is set.
    pub fn params_at_ext(&self, w: usize, extrapolate: bool) -> Result<BetaParams> {
        if !extrapolate && !self.contains(w) {
            return Err(Error::invalid(format!(
                "w = {w} outside model range [{}, {}]",
                self.w_min, self.w_max
            )));
        }
        let x = w as f64;
        let c = &self.curves;
        let (alpha, beta, m) = (
            c.alpha.function().eval(x)?,
            c.beta.function().eval(x)?,
            c.m.function().eval(x)?,
        );
        BetaParams::new(alpha, beta, m)
            .map_err(|_| Error::numeric(format!("model parameters at w = {w} are not positive")))
    }

    pub fn params_at(&self, w: usize) -> Result<BetaParams> {
        self.params_at_ext(w, false)
    }

    /// `P_w(D <= d)`: 0 below zero, 1 above `m_w`.
    pub fn dprime(&self, w: usize, d: f64) -> Result<f64> {
        self.dprime_ext(w, d, false)
    }

    pub fn dprime_ext(&self, w: usize, d: f64, extrapolate: bool) -> Result<f64> {
        if d.is_nan() {
            return Err(Error::invalid("dissimilarity is NaN"));
        }
        Ok(self.params_at_ext(w, extrapolate)?.cdf(d))
    }

    /// Check the stored curves against the model invariants.
    pub fn check(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "model format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.w_min < 2 || self.w_min > self.w_max || self.w_step == 0 {
            return Err(Error::Schema(format!(
                "invalid length range [{}, {}] step {}",
                self.w_min, self.w_max, self.w_step
            )));
        }
        self.measure_params.validate()?;
        for c in [&self.curves.alpha, &self.curves.beta, &self.curves.m] {
            if c.q.len() != c.u + 1 || c.r.len() != c.v {
                return Err(Error::Schema("curve degrees do not match coefficients".into()));
            }
        }
        for w in self.w_min..=self.w_max {
            self.params_at(w)
                .map_err(|e| Error::Schema(format!("model not usable at w = {w}: {e}")))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Schema(format!("cannot serialize model: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("malformed model file: {e}")))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Schema(format!(
                    "model format version {v} (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Schema("model file lacks format_version".into())),
        }
        let model: Self =
            serde_json::from_value(value).map_err(|e| Error::Schema(format!("invalid model file: {e}")))?;
        model.check()?;
        Ok(model)
    }
}

pub fn save_model(model: &DissimModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_json()?).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DissimModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    DissimModel::from_json(&text)
}

/// Where validation samples come from.
pub trait SampleSource: Sync {
    /// `n` dissimilarities at length `w`, sorted ascending.
    fn draw(&self, w: usize, n: usize, seed: u64) -> Result<Vec<f64>>;
}

/// Uniformly sampled segment pairs of a series.
pub struct SeriesSource<'a> {
    pub series: &'a Series,
    pub measure: Measure,
}

impl SampleSource for SeriesSource<'_> {
    fn draw(&self, w: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
        Ok(sample_dissims(self.series, w, n, &self.measure, seed)?.values().to_vec())
    }
}

/// Inverse-CDF draws from per-length beta parameters.
pub struct BetaSource<F: Fn(usize) -> Result<BetaParams> + Sync> {
    pub params: F,
}

impl<F: Fn(usize) -> Result<BetaParams> + Sync> SampleSource for BetaSource<F> {
    fn draw(&self, w: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
        let p = (self.params)(w)?;
        let mut rng = seed::rng(seed::derive_seed(seed, &[w as u64]));
        let mut v = sample_beta(&p, n, &mut rng);
        v.sort_by(f64::total_cmp);
        Ok(v)
    }
}

/// What the observed lower-quartile KS distance is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KsReference {
    /// A maximum-likelihood refit of the validation sample, matching how
    /// each synthetic replicate is scored.
    Refit,
    /// The deployed model at `w`.
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidateConfig {
    pub w_min: usize,
    pub w_max: usize,
    pub w_step: usize,
    pub n: usize,
    /// Bootstrap replicates; 0 skips the goodness-of-fit p-value.
    pub replicates: usize,
    pub pso: PsoConfig,
    /// Draw with the seed the model was built with instead of a fresh one.
    pub reuse_build_samples: bool,
    pub ks_reference: KsReference,
}

impl ValidateConfig {
    /// The model's own grid and sample size, 100 replicates.
    pub fn for_model(model: &DissimModel) -> Self {
        Self {
            w_min: model.w_min,
            w_max: model.w_max,
            w_step: model.w_step,
            n: model.provenance.n,
            replicates: 100,
            pso: model.provenance.pso,
            reuse_build_samples: false,
            ks_reference: KsReference::Refit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub w: usize,
    pub n: usize,
    pub eps: f64,
    /// Lower-quartile KS distance of the sample to the deployed model.
    pub ks_model: f64,
    /// Observed statistic entering the bootstrap (see [`KsReference`]).
    pub ks_stat: f64,
    pub p_ks: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub eps_median: f64,
    pub eps_mad: f64,
    pub p_ks_median: Option<f64>,
    pub p_ks_mad: Option<f64>,
    /// Fraction of lengths with `p_KS < 0.05`.
    pub p_ks_below_005: Option<f64>,
}

impl ValidationReport {
    fn from_rows(rows: Vec<ValidationRow>) -> Self {
        let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
        let p: Option<Vec<f64>> = rows.iter().map(|r| r.p_ks).collect();
        let p = p.filter(|p| !p.is_empty());
        Self {
            eps_median: median(&eps),
            eps_mad: mad(&eps),
            p_ks_median: p.as_ref().map(|p| median(p)),
            p_ks_mad: p.as_ref().map(|p| mad(p)),
            p_ks_below_005: p
                .as_ref()
                .map(|p| p.iter().filter(|&&x| x < 0.05).count() as f64 / p.len() as f64),
            rows,
        }
    }
}

/// Compare fresh samples against the model. Per length: `ε` between the
/// sample ECDF and the model CDF over the sample range, and a bootstrap
/// p-value for the lower-quartile KS distance. Each replicate draws `n`
/// values from the model at `w`, refits, and measures the distance of the
/// synthetic sample to its own refit; by default the observed sample is
/// scored the same way against its own refit.
pub fn validate_model(
    model: &DissimModel,
    source: &dyn SampleSource,
    cfg: &ValidateConfig,
    seed: u64,
) -> Result<ValidationReport> {
    let grid = length_grid(cfg.w_min, cfg.w_max, cfg.w_step)?;
    if let Some(w) = grid.iter().find(|w| !model.contains(**w)) {
        return Err(Error::invalid(format!("validation length {w} outside the model range")));
    }
    let sample_seed = if cfg.reuse_build_samples {
        model.provenance.seed
    } else {
        seed::derive_seed(seed, &[TAG_VALIDATE])
    };
    let rows = grid
        .par_iter()
        .map(|&w| {
            let params = model.params_at(w)?;
            let sample = source.draw(w, cfg.n, sample_seed)?;
            let eps = epsilon_vs_cdf(&sample, |d| params.cdf(d), EPSILON_BINS)?;
            let ks_model = ks_first_quartile_vs_cdf(&sample, |d| params.cdf(d))?;
            let boot = seed::derive_seed(seed, &[TAG_BOOT, w as u64]);
            let ks_stat = match cfg.ks_reference {
                KsReference::Model => ks_model,
                KsReference::Refit => {
                    let fit = fit_beta_values(&sample, &cfg.pso.with_seed(boot))?;
                    ks_first_quartile_vs_cdf(&sample, |d| fit.params.cdf(d))?
                }
            };
            let p_ks = if cfg.replicates == 0 {
                None
            } else {
                Some(bootstrap_p(&params, sample.len(), ks_stat, cfg.replicates, &cfg.pso, boot)?)
            };
            Ok(ValidationRow {
                w,
                n: sample.len(),
                eps,
                ks_model,
                ks_stat,
                p_ks,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationReport::from_rows(rows))
}

/// Fraction of synthetic samples whose distance to their own refit is at
/// least `observed`.
pub fn bootstrap_p(
    params: &BetaParams,
    n: usize,
    observed: f64,
    replicates: usize,
    pso: &PsoConfig,
    seed: u64,
) -> Result<f64> {
    let stats = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rseed = seed::derive_seed(seed, &[r as u64 + 1]);
            let mut rng = seed::rng(rseed);
            let mut draws = sample_beta(params, n, &mut rng);
            draws.sort_by(f64::total_cmp);
            let fit = fit_beta_values(&draws, &pso.with_seed(rseed))?;
            ks_first_quartile_vs_cdf(&draws, |d| fit.params.cdf(d))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(stats.iter().filter(|&&s| s >= observed).count() as f64 / replicates as f64)
}
