use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mdspace::beta::PsoConfig;
use mdspace::dissim::{Measure, MeasureKind, MeasureParams};

#[derive(Debug, Parser)]
#[command(
    name = "mdspace",
    version,
    about = "Sample, model and normalize motif dissimilarities across segment lengths",
    after_help = "Settings can also come from a file of `key = value` lines passed with \
--config; keys are long option names, and options given on the command line win."
)]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "MDSPACE_OUT", default_value = ".")]
    pub out: PathBuf,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic series (one value per line).
    Gen(GenArgs),
    /// Sample dissimilarities over a length grid.
    ///
    /// Writes samples_<measure>.csv with columns w, rank_index, d (sorted
    /// ascending within each w) and, with --lowest-k, lowest_k_<measure>.csv
    /// with columns w, rank, d.
    Sample(SampleArgs),
    /// Compare dissimilarity distributions across lengths.
    ///
    /// Tables (long format, one row per observation):
    ///   lowest_k.csv     measure, w, rank, d
    ///   histograms.csv   measure, w, bin_lo, bin_hi, count, density
    ///   quantiles.csv    measure, w, q, value
    ///   trends.csv       measure, q, w_lo, w_hi, points, slope, intercept, p_value
    ///   matrices.csv     measure, w_i, w_j, eps, p_ks
    ///   wdelta.csv       group, w_delta, count, eps_median, eps_mad, pks_median, pks_mad
    ///   wdelta_at.csv    measure, w_delta, count, eps_median, pks_median
    /// In wdelta.csv, group is a measure name, `pooled`, or `median_of_medians`.
    Study(StudyArgs),
    /// Build a model and write it as JSON.
    Fit(FitArgs),
    /// Validate a model against fresh samples.
    ///
    /// Writes validation.csv (w, n, eps, ks_model, ks_stat, p_ks) and
    /// validation_summary.json.
    Validate(ValidateArgs),
    /// Rank motif pairs by normalized dissimilarity.
    ///
    /// Reads a pairs CSV with header i, j, w and an optional d column (when
    /// d is missing it is computed from --input), or discovers candidates
    /// with --discover. Writes ranked.csv: rank, i, j, w, d, d_prime.
    Rank(RankArgs),
    /// Dump model curves and densities as tables.
    ///
    /// Writes curves.csv (w, alpha, beta, m for every integer w),
    /// raw_fits.csv (w, alpha, beta, m, alpha_curve, beta_curve, m_curve,
    /// loglik, boundary_hits) and pdf_cdf.csv (w, d, pdf, cdf).
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenKind {
    RandomWalk,
    RegimeSwitching,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "random-walk")]
    pub kind: GenKind,
    /// Number of samples.
    #[arg(long, default_value_t = 100_000)]
    pub length: usize,
    /// Regime block length.
    #[arg(long, default_value_t = 5000)]
    pub block: usize,
    /// AR(1) coefficient of the autoregressive regime.
    #[arg(long, default_value_t = 0.99)]
    pub phi: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// File name inside the output directory.
    #[arg(long, default_value = "series.txt")]
    pub output: String,
}

#[derive(Debug, Args, Serialize)]
pub struct SeriesArgs {
    /// Series file: one column of numbers, or a delimited table.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Zero-based column to read.
    #[arg(long, default_value_t = 0)]
    pub column: usize,
    /// Field delimiter (auto-detected when absent).
    #[arg(long)]
    pub delimiter: Option<char>,
}

#[derive(Debug, Args, Serialize)]
pub struct MeasureArgs {
    #[arg(long, default_value = "euc")]
    pub measure: MeasureKind,
    /// DTW band half-width as a fraction of w.
    #[arg(long, default_value_t = MeasureParams::default().dtw_band)]
    pub dtw_band: f64,
    #[arg(long, default_value_t = MeasureParams::default().twed_nu)]
    pub twed_nu: f64,
    #[arg(long, default_value_t = MeasureParams::default().twed_lambda)]
    pub twed_lambda: f64,
    #[arg(long, default_value_t = MeasureParams::default().edr_gap)]
    pub edr_gap: f64,
    #[arg(long, default_value_t = MeasureParams::default().mdl_bits)]
    pub mdl_bits: u32,
    #[arg(long, default_value_t = MeasureParams::default().mdl_range)]
    pub mdl_range: f64,
    #[arg(long, default_value_t = MeasureParams::default().mdl_offset)]
    pub mdl_offset: f64,
}

impl MeasureArgs {
    pub fn params(&self) -> MeasureParams {
        MeasureParams {
            dtw_band: self.dtw_band,
            twed_nu: self.twed_nu,
            twed_lambda: self.twed_lambda,
            edr_gap: self.edr_gap,
            mdl_bits: self.mdl_bits,
            mdl_range: self.mdl_range,
            mdl_offset: self.mdl_offset,
        }
    }

    pub fn measure(&self, kind: MeasureKind) -> mdspace::Result<Measure> {
        Measure::with_params(kind, self.params())
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GridArgs {
    #[arg(long, default_value_t = 5)]
    pub w_min: usize,
    #[arg(long, default_value_t = 500)]
    pub w_max: usize,
    #[arg(long, default_value_t = 15)]
    pub w_step: usize,
    /// Dissimilarities sampled per length.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PsoArgs {
    #[arg(long, default_value_t = PsoConfig::default().particles)]
    pub particles: usize,
    #[arg(long, default_value_t = PsoConfig::default().iterations)]
    pub iterations: usize,
    /// Simplex evaluations refining the swarm optimum (0 disables).
    #[arg(long, default_value_t = PsoConfig::default().polish_evals)]
    pub polish: usize,
}

impl PsoArgs {
    pub fn config(&self) -> PsoConfig {
        PsoConfig {
            particles: self.particles,
            iterations: self.iterations,
            polish_evals: self.polish,
            ..PsoConfig::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the k lowest dissimilarities per length.
    #[arg(long)]
    pub lowest_k: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct StudyArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Comma-separated measures.
    #[arg(long, value_delimiter = ',', default_value = "euc")]
    pub measures: Vec<MeasureKind>,
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub lowest_k: usize,
    #[arg(long, default_value_t = 100)]
    pub hist_bins: usize,
    /// Bins of the CDF difference.
    #[arg(long, default_value_t = mdspace::empirics::EPSILON_BINS)]
    pub eps_bins: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.25,0.1,0.05,0.01")]
    pub quantiles: Vec<f64>,
    #[arg(long, default_value_t = 300)]
    pub trend_lo: usize,
    #[arg(long, default_value_t = 500)]
    pub trend_hi: usize,
    /// Length difference for wdelta_at.csv.
    #[arg(long, default_value_t = 100)]
    pub wdelta: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub pso: PsoArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model file name inside the output directory.
    #[arg(long, default_value = "model.json")]
    pub model_out: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KsRef {
    Refit,
    Model,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Draw validation samples from the model's own distributions instead
    /// of a series.
    #[arg(long)]
    pub synthetic: bool,
    /// Samples per length (defaults to the model's).
    #[arg(long)]
    pub n: Option<usize>,
    /// Bootstrap replicates per length (default 100; 0 skips p_KS).
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Validation grid step (defaults to the model's).
    #[arg(long)]
    pub w_step: Option<usize>,
    /// Shorthand for --w-step 45 --replicates 25.
    #[arg(long)]
    pub quick: bool,
    /// Reference of the observed lower-quartile KS distance.
    #[arg(long, value_enum, default_value = "refit")]
    pub ks_reference: KsRef,
    /// Reuse the samples the model was built from.
    #[arg(long)]
    pub reuse_samples: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    None,
    Cover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sampled,
    Exhaustive,
}

#[derive(Debug, Args, Serialize)]
pub struct RankArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Pairs CSV with header i, j, w[, d].
    #[arg(long, value_name = "FILE")]
    pub pairs: Option<PathBuf>,
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Generate candidates from --input instead of reading pairs.
    #[arg(long)]
    pub discover: bool,
    #[arg(long)]
    pub w_min: Option<usize>,
    #[arg(long)]
    pub w_max: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub w_step: usize,
    /// Candidates per length in discovery.
    #[arg(long, default_value_t = 1000)]
    pub per_w: usize,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long, value_enum, default_value = "sampled")]
    pub mode: Mode,
    #[arg(long, value_enum, default_value = "cover")]
    pub policy: Policy,
    #[arg(long, default_value_t = 0.5)]
    pub cover_threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Lengths for pdf_cdf.csv (defaults to the model grid).
    #[arg(long, value_delimiter = ',')]
    pub ws: Vec<usize>,
    /// Evaluation points per length in pdf_cdf.csv.
    #[arg(long, default_value_t = 200)]
    pub points: usize,
}
