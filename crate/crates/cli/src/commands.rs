use std::path::{Path, PathBuf};

use serde::Serialize;

use mdspace::dissim::MeasureKind;
use mdspace::empirics::{self, ComparisonMatrices, WDeltaRow};
use mdspace::model::{
    self, BetaSource, BuildConfig, DissimModel, KsReference, SampleSource, SeriesSource, ValidateConfig,
};
use mdspace::ranking::{self, CandidateMode, DiscoverConfig, MotifPair, OverlapPolicy, PairScore};
use mdspace::sampling::{length_grid, sample_grid, EmpiricalSample};
use mdspace::series::{self, Series};

use crate::args::*;
use crate::output::{finish, source_date_epoch, Outputs};
use crate::{CliResult, Failure};

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Gen(a) => gen(a, out),
        Command::Sample(a) => sample(a, out),
        Command::Study(a) => study(a, out),
        Command::Fit(a) => fit(a, out),
        Command::Validate(a) => validate(a, out),
        Command::Rank(a) => rank(a, out),
        Command::Report(a) => report(a, out),
    }
}

fn load_input(s: &SeriesArgs) -> CliResult<Series> {
    let Some(path) = &s.input else {
        return Err(Failure::usage("this command needs --input"));
    };
    Ok(series::load_series(path, Some(s.column), s.delimiter)?)
}

fn grid_of(g: &GridArgs) -> CliResult<Vec<usize>> {
    Ok(length_grid(g.w_min, g.w_max, g.w_step)?)
}

fn gen(a: &GenArgs, out: &Path) -> CliResult<()> {
    let s = match a.kind {
        GenKind::RandomWalk => series::gen_random_walk(a.length, a.seed)?,
        GenKind::RegimeSwitching => series::gen_regime_switching(a.length, a.block, a.phi, a.seed)?,
    };
    let mut o = Outputs::new(out)?;
    let path = o.path(&a.output);
    s.save(&path)?;
    o.manifest("gen", a, out)
}

fn sample(a: &SampleArgs, out: &Path) -> CliResult<()> {
    let s = load_input(&a.series)?;
    let measure = a.measure.measure(a.measure.measure)?;
    let grid = grid_of(&a.grid)?;
    if let Some(k) = a.lowest_k {
        if k == 0 || k > a.grid.n {
            return Err(Failure::usage(format!("--lowest-k {k} must lie in [1, n = {}]", a.grid.n)));
        }
    }
    let samples = sample_grid(&s, &grid, a.grid.n, &measure, a.seed)?;
    let name = measure.kind.name();
    let mut o = Outputs::new(out)?;
    let mut w = o.csv(&format!("samples_{name}.csv"), &["w", "rank_index", "d"])?;
    for smp in &samples {
        for (r, d) in smp.values().iter().enumerate() {
            w.serialize((smp.w, r + 1, d))?;
        }
    }
    finish(w)?;
    if let Some(k) = a.lowest_k {
        let mut w = o.csv(&format!("lowest_k_{name}.csv"), &["w", "rank", "d"])?;
        for smp in &samples {
            for (r, d) in smp.lowest(k).iter().enumerate() {
                w.serialize((smp.w, r + 1, d))?;
            }
        }
        finish(w)?;
    }
    o.manifest("sample", a, out)
}

fn matrix_rows(kind: MeasureKind, m: &ComparisonMatrices, w: &mut crate::output::CsvWriter) -> CliResult<()> {
    for (i, wi) in m.w.iter().enumerate() {
        for (j, wj) in m.w.iter().enumerate() {
            w.serialize((kind.name(), wi, wj, m.eps[i][j], m.pks[i][j]))?;
        }
    }
    Ok(())
}

fn wdelta_rows(group: &str, rows: &[WDeltaRow], w: &mut crate::output::CsvWriter) -> CliResult<()> {
    for r in rows {
        w.serialize((group, r.w_delta, r.count, r.eps_median, r.eps_mad, r.pks_median, r.pks_mad))?;
    }
    Ok(())
}

fn study(a: &StudyArgs, out: &Path) -> CliResult<()> {
    let s = load_input(&a.series)?;
    let grid = grid_of(&a.grid)?;
    if a.lowest_k == 0 || a.lowest_k > a.grid.n {
        return Err(Failure::usage(format!("--lowest-k {} must lie in [1, n = {}]", a.lowest_k, a.grid.n)));
    }
    if let Some(q) = a.quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(Failure::usage(format!("quantile level {q} must lie in (0, 1)")));
    }
    let mut kinds: Vec<MeasureKind> = Vec::new();
    for k in &a.measures {
        if !kinds.contains(k) {
            kinds.push(*k);
        }
    }
    let mut per_measure: Vec<(MeasureKind, Vec<EmpiricalSample>, ComparisonMatrices)> = Vec::new();
    for &kind in &kinds {
        let measure = a.measure.measure(kind)?;
        let samples = sample_grid(&s, &grid, a.grid.n, &measure, a.seed)?;
        let m = empirics::pairwise_compare(&samples, a.eps_bins)?;
        per_measure.push((kind, samples, m));
    }

    let mut o = Outputs::new(out)?;
    let mut lk = o.csv("lowest_k.csv", &["measure", "w", "rank", "d"])?;
    let mut hist = o.csv("histograms.csv", &["measure", "w", "bin_lo", "bin_hi", "count", "density"])?;
    let mut quant = o.csv("quantiles.csv", &["measure", "w", "q", "value"])?;
    let mut trend = o.csv(
        "trends.csv",
        &["measure", "q", "w_lo", "w_hi", "points", "slope", "intercept", "p_value"],
    )?;
    let mut mats = o.csv("matrices.csv", &["measure", "w_i", "w_j", "eps", "p_ks"])?;
    let in_window = grid.iter().filter(|w| (a.trend_lo..=a.trend_hi).contains(*w)).count();
    if in_window < 3 {
        eprintln!(
            "note: {in_window} grid lengths in [{}, {}]; trends.csv has no rows",
            a.trend_lo, a.trend_hi
        );
    }
    for (kind, samples, m) in &per_measure {
        let name = kind.name();
        for smp in samples {
            for (r, d) in smp.lowest(a.lowest_k).iter().enumerate() {
                lk.serialize((name, smp.w, r + 1, d))?;
            }
            let n = smp.len() as f64;
            for b in empirics::histogram(smp.values(), a.hist_bins)? {
                let width = b.hi - b.lo;
                let density = if width > 0.0 { b.count as f64 / (n * width) } else { f64::NAN };
                hist.serialize((name, smp.w, b.lo, b.hi, b.count, density))?;
            }
            for &q in &a.quantiles {
                quant.serialize((name, smp.w, q, empirics::quantile(smp.values(), q)))?;
            }
        }
        if in_window >= 3 {
            for &q in &a.quantiles {
                let t = empirics::quantile_trend(samples, q, a.trend_lo, a.trend_hi)?;
                trend.serialize((name, t.q, t.w_lo, t.w_hi, t.points, t.slope, t.intercept, t.p_value))?;
            }
        }
        matrix_rows(*kind, m, &mut mats)?;
    }
    for w in [lk, hist, quant, trend, mats] {
        finish(w)?;
    }

    let mut wd = o.csv(
        "wdelta.csv",
        &["group", "w_delta", "count", "eps_median", "eps_mad", "pks_median", "pks_mad"],
    )?;
    let mut at = o.csv("wdelta_at.csv", &["measure", "w_delta", "count", "eps_median", "pks_median"])?;
    for (kind, _, m) in &per_measure {
        let rows = empirics::aggregate_by_wdelta(m);
        wdelta_rows(kind.name(), &rows, &mut wd)?;
        match rows.iter().find(|r| r.w_delta == a.wdelta) {
            Some(r) => at.serialize((kind.name(), r.w_delta, r.count, r.eps_median, r.pks_median))?,
            None => eprintln!("note: no pair of grid lengths differs by {} for {}", a.wdelta, kind),
        }
    }
    if per_measure.len() > 1 {
        let ms: Vec<ComparisonMatrices> = per_measure.iter().map(|(_, _, m)| m.clone()).collect();
        wdelta_rows("pooled", &empirics::aggregate_pooled(&ms), &mut wd)?;
        wdelta_rows("median_of_medians", &empirics::aggregate_median_of_medians(&ms), &mut wd)?;
    }
    finish(wd)?;
    finish(at)?;
    o.manifest("study", a, out)
}

fn fit(a: &FitArgs, out: &Path) -> CliResult<()> {
    let s = load_input(&a.series)?;
    let measure = a.measure.measure(a.measure.measure)?;
    let cfg = BuildConfig {
        w_min: a.grid.w_min,
        w_max: a.grid.w_max,
        w_step: a.grid.w_step,
        n: a.grid.n,
        pso: a.pso.config(),
    };
    let created = source_date_epoch()?;
    let model = model::build_model(&s, &measure, &cfg, a.seed, created)?;
    let mut o = Outputs::new(out)?;
    model::save_model(&model, o.path(&a.model_out))?;
    o.manifest("fit", a, out)
}

#[derive(Serialize)]
struct ValidationSummary<'a> {
    model: &'a Path,
    source: &'a str,
    measure: MeasureKind,
    config: &'a ValidateConfig,
    seed: u64,
    lengths: usize,
    eps_median: f64,
    eps_mad: f64,
    p_ks_median: Option<f64>,
    p_ks_mad: Option<f64>,
    p_ks_below_005: Option<f64>,
}

fn validate(a: &ValidateArgs, out: &Path) -> CliResult<()> {
    let model = model::load_model(&a.model)?;
    let mut cfg = ValidateConfig::for_model(&model);
    if a.quick {
        cfg.w_step = 45;
        cfg.replicates = 25;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(step) = a.w_step {
        cfg.w_step = step;
    }
    cfg.reuse_build_samples = a.reuse_samples;
    cfg.ks_reference = match a.ks_reference {
        KsRef::Refit => KsReference::Refit,
        KsRef::Model => KsReference::Model,
    };

    let (report, source) = if a.synthetic {
        if a.series.input.is_some() {
            return Err(Failure::usage("--synthetic and --input are mutually exclusive"));
        }
        let src = BetaSource {
            params: |w: usize| model.params_at(w),
        };
        (model::validate_model(&model, &src, &cfg, a.seed)?, "synthetic".to_string())
    } else {
        let s = load_input(&a.series)?;
        let src = SeriesSource {
            series: &s,
            measure: model.measure(),
        };
        let src: &dyn SampleSource = &src;
        (model::validate_model(&model, src, &cfg, a.seed)?, s.source().to_string())
    };

    let mut o = Outputs::new(out)?;
    let mut w = o.csv("validation.csv", &["w", "n", "eps", "ks_model", "ks_stat", "p_ks"])?;
    for r in &report.rows {
        w.serialize((r.w, r.n, r.eps, r.ks_model, r.ks_stat, r.p_ks))?;
    }
    finish(w)?;
    o.json(
        "validation_summary.json",
        &ValidationSummary {
            model: &a.model,
            source: &source,
            measure: model.measure,
            config: &cfg,
            seed: a.seed,
            lengths: report.rows.len(),
            eps_median: report.eps_median,
            eps_mad: report.eps_mad,
            p_ks_median: report.p_ks_median,
            p_ks_mad: report.p_ks_mad,
            p_ks_below_005: report.p_ks_below_005,
        },
    )?;
    o.manifest("validate", a, out)
}

/// Pairs from CSV. Rows are numbered from 1 after the header; a missing or
/// empty `d` is computed from `series`.
fn read_pairs(path: &PathBuf, model: &DissimModel, series: Option<&Series>) -> CliResult<Vec<PairScore>> {
    let origin = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::data(format!("{origin}: {e}")))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(ci), Some(cj), Some(cw)) = (col("i"), col("j"), col("w")) else {
        return Err(Failure::data(format!("{origin}: header must name columns i, j and w")));
    };
    let cd = col("d");
    let mut pairs = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let ctx = || format!("{origin}: row {row}");
        let rec = rec.map_err(|e| Failure::data(e.to_string()).context(ctx()))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let int = |c: usize, name: &str| -> CliResult<usize> {
            field(c)
                .parse()
                .map_err(|_| Failure::data(format!("{name} = {:?} is not a non-negative integer", field(c))).context(ctx()))
        };
        let (i, j, w) = (int(ci, "i")?, int(cj, "j")?, int(cw, "w")?);
        let d = match cd.map(field).filter(|s| !s.is_empty()) {
            Some(text) => text
                .parse::<f64>()
                .map_err(|_| Failure::data(format!("d = {text:?} is not a number")).context(ctx()))?,
            None => {
                let Some(s) = series else {
                    return Err(Failure::usage(format!("{}: no d given; pass --input to compute it", ctx())));
                };
                if !model.contains(w) {
                    return Err(Failure::data(format!(
                        "w = {w} outside model range [{}, {}]",
                        model.w_min, model.w_max
                    ))
                    .context(ctx()));
                }
                ranking::score_pair(s, model, i, j, w).map_err(|e| Failure::from(e).context(ctx()))?
            }
        };
        let p = PairScore {
            i,
            j,
            w,
            d,
            measure: model.measure,
        };
        // Validate row by row so that errors point at the file.
        ranking::rank_pairs(std::slice::from_ref(&p), model).map_err(|e| Failure::from(e).context(ctx()))?;
        pairs.push(p);
    }
    Ok(pairs)
}

fn rank(a: &RankArgs, out: &Path) -> CliResult<()> {
    let model = model::load_model(&a.model)?;
    let ranked: Vec<MotifPair> = if a.discover {
        if a.pairs.is_some() {
            return Err(Failure::usage("--discover and --pairs are mutually exclusive"));
        }
        let s = load_input(&a.series)?;
        let mut cfg = DiscoverConfig::for_model(&model);
        cfg.w_min = a.w_min.unwrap_or(model.w_min);
        cfg.w_max = a.w_max.unwrap_or(model.w_max);
        cfg.w_step = a.w_step;
        cfg.per_w = a.per_w;
        cfg.top_k = a.top_k;
        cfg.cover_threshold = a.cover_threshold;
        cfg.mode = match a.mode {
            Mode::Sampled => CandidateMode::Sampled,
            Mode::Exhaustive => CandidateMode::Exhaustive,
        };
        cfg.policy = match a.policy {
            Policy::None => OverlapPolicy::None,
            Policy::Cover => OverlapPolicy::Cover,
        };
        ranking::discover(&s, &model, &cfg, a.seed)?
    } else {
        let Some(path) = &a.pairs else {
            return Err(Failure::usage("rank needs --pairs or --discover"));
        };
        let s = match &a.series.input {
            Some(_) => Some(load_input(&a.series)?),
            None => None,
        };
        let pairs = read_pairs(path, &model, s.as_ref())?;
        ranking::rank_pairs(&pairs, &model)?
    };
    let mut o = Outputs::new(out)?;
    let mut w = o.csv("ranked.csv", &["rank", "i", "j", "w", "d", "d_prime"])?;
    for (r, p) in ranked.iter().enumerate() {
        w.serialize((r + 1, p.i, p.j, p.w, p.d, p.d_prime))?;
    }
    finish(w)?;
    o.manifest("rank", a, out)
}

fn report(a: &ReportArgs, out: &Path) -> CliResult<()> {
    let model = model::load_model(&a.model)?;
    if a.points == 0 {
        return Err(Failure::usage("--points must be positive"));
    }
    let (fa, fb, fm) = (
        model.curves.alpha.function(),
        model.curves.beta.function(),
        model.curves.m.function(),
    );
    let mut o = Outputs::new(out)?;
    let mut w = o.csv("curves.csv", &["w", "alpha", "beta", "m"])?;
    for len in model.w_min..=model.w_max {
        let x = len as f64;
        w.serialize((len, fa.eval(x)?, fb.eval(x)?, fm.eval(x)?))?;
    }
    finish(w)?;

    let mut w = o.csv(
        "raw_fits.csv",
        &["w", "alpha", "beta", "m", "alpha_curve", "beta_curve", "m_curve", "loglik", "boundary_hits"],
    )?;
    for f in &model.diagnostics {
        let x = f.w as f64;
        let p = &f.params;
        w.serialize((f.w, p.alpha, p.beta, p.m, fa.eval(x)?, fb.eval(x)?, fm.eval(x)?, f.loglik, f.boundary_hits))?;
    }
    finish(w)?;

    let ws: Vec<usize> = if a.ws.is_empty() {
        model.diagnostics.iter().map(|f| f.w).collect()
    } else {
        a.ws.clone()
    };
    let mut w = o.csv("pdf_cdf.csv", &["w", "d", "pdf", "cdf"])?;
    for &len in &ws {
        let p = model.params_at(len)?;
        // Midpoints avoid the endpoint singularities of shapes below one.
        for k in 0..a.points {
            let d = p.m * (k as f64 + 0.5) / a.points as f64;
            w.serialize((len, d, p.pdf(d), p.cdf(d)))?;
        }
    }
    finish(w)?;
    o.manifest("report", a, out)
}

