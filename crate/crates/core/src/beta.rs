//! Three-parameter beta distribution on `[0, m]` and its maximum-likelihood
//! fit by particle swarm optimization.
//!
//! The density is `(d/m)^(α-1) (1 - d/m)^(β-1) / (m B(α, β))` on `[0, m]`
//! and zero elsewhere.

use rand::RngExt;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::sampling::EmpiricalSample;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
    pub m: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64, m: f64) -> Result<Self> {
        let p = Self { alpha, beta, m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.alpha) && ok(self.beta) && ok(self.m) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "beta parameters must be positive and finite, got {self:?}"
            )))
        }
    }

    pub fn ln_beta_fn(&self) -> f64 {
        ln_beta(self.alpha, self.beta)
    }

    /// Density at `d`; infinite at an endpoint where the shape is below 1.
    pub fn pdf(&self, d: f64) -> f64 {
        if !(0.0..=self.m).contains(&d) {
            return 0.0;
        }
        self.ln_pdf(d).exp()
    }

    pub fn ln_pdf(&self, d: f64) -> f64 {
        if !(0.0..=self.m).contains(&d) {
            return f64::NEG_INFINITY;
        }
        let x = d / self.m;
        let left = if self.alpha == 1.0 { 0.0 } else { (self.alpha - 1.0) * x.ln() };
        let right = if self.beta == 1.0 { 0.0 } else { (self.beta - 1.0) * (1.0 - x).ln() };
        left + right - self.ln_beta_fn() - self.m.ln()
    }

    /// `P(D <= d)`, clamped to 0 below the support and 1 above it.
    pub fn cdf(&self, d: f64) -> f64 {
        if d <= 0.0 {
            0.0
        } else if d >= self.m {
            1.0
        } else {
            reg_inc_beta(d / self.m, self.alpha, self.beta)
        }
    }

    /// Inverse CDF for `u` in `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        self.m * inv_reg_inc_beta(u, self.alpha, self.beta)
    }

    /// Mean `m α / (α + β)`.
    pub fn mean(&self) -> f64 {
        self.m * self.alpha / (self.alpha + self.beta)
    }
}

/// Log-likelihood of `values` in log-space. Any value outside `(0, m)`
/// yields negative infinity.
pub fn beta_loglik(values: &[f64], p: &BetaParams) -> f64 {
    if values.iter().any(|&d| !(d > 0.0 && d < p.m)) {
        return f64::NEG_INFINITY;
    }
    let n = values.len() as f64;
    let sum_ln_d: f64 = values.iter().map(|d| d.ln()).sum();
    let sum_ln_rest: f64 = values.iter().map(|d| (p.m - d).ln()).sum();
    (p.alpha - 1.0) * sum_ln_d + (p.beta - 1.0) * sum_ln_rest
        - n * p.ln_beta_fn()
        - n * (p.alpha + p.beta - 1.0) * p.m.ln()
}

const CF_MAX_ITER: usize = 10_000;
const CF_EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let guard = |v: f64| if v.abs() < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_cf(x, a, b) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b).clamp(0.0, 1.0)
    }
}

/// Inverse of [`reg_inc_beta`] in `x`: bracketed Halley iteration.
pub fn inv_reg_inc_beta(p: f64, a: f64, b: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let mut x = initial_inverse_guess(p, a, b);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let ln_b = ln_beta(a, b);
    for _ in 0..200 {
        let f = reg_inc_beta(x, a, b) - p;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_b).exp();
        let mut next = f64::NAN;
        if dens.is_finite() && dens > 0.0 {
            let u = f / dens;
            let curv = (a - 1.0) / x - (b - 1.0) / (1.0 - x);
            next = x - u / (1.0 - 0.5 * (u * curv).min(1.0));
        }
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) || hi - lo <= 1e-16 * hi {
            return next;
        }
        x = next;
    }
    x
}

fn initial_inverse_guess(p: f64, a: f64, b: f64) -> f64 {
    let x = if a >= 1.0 && b >= 1.0 {
        let pp = if p < 0.5 { p } else { 1.0 - p };
        let t = (-2.0 * pp.ln()).sqrt();
        let mut z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p < 0.5 {
            z = -z;
        }
        let al = (z * z - 3.0) / 6.0;
        let h = 2.0 / (1.0 / (2.0 * a - 1.0) + 1.0 / (2.0 * b - 1.0));
        let w = z * (al + h).sqrt() / h
            - (1.0 / (2.0 * b - 1.0) - 1.0 / (2.0 * a - 1.0)) * (al + 5.0 / 6.0 - 2.0 / (3.0 * h));
        a / (a + b * (2.0 * w).exp())
    } else {
        let lna = (a / (a + b)).ln();
        let lnb = (b / (a + b)).ln();
        let t = (a * lna).exp() / a;
        let u = (b * lnb).exp() / b;
        let w = t + u;
        if p < t / w {
            (a * w * p).powf(1.0 / a)
        } else {
            1.0 - (b * w * (1.0 - p)).powf(1.0 / b)
        }
    };
    if x.is_finite() {
        x.clamp(1e-300, 1.0 - 1e-16)
    } else {
        0.5
    }
}

/// Particle swarm settings for [`fit_beta_mle`]. Defaults are the constricted
/// canonical swarm with a ring (local best) topology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    /// Constriction coefficient.
    pub chi: f64,
    pub c1: f64,
    pub c2: f64,
    /// Neighbours on each side of a particle in the ring.
    pub ring_radius: usize,
    /// Nelder-Mead evaluations spent refining the swarm optimum; 0 disables.
    pub polish_evals: usize,
    pub alpha_max: f64,
    pub beta_max: f64,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: 25,
            iterations: 300,
            chi: 0.7298,
            c1: 2.05,
            c2: 2.05,
            ring_radius: 1,
            polish_evals: 2000,
            alpha_max: 500.0,
            beta_max: 500.0,
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 || self.iterations < 1 {
            return Err(Error::invalid("swarm needs >= 2 particles and >= 1 iteration"));
        }
        if !(self.alpha_max > SHAPE_MIN && self.beta_max > SHAPE_MIN) {
            return Err(Error::invalid("shape upper bounds must be positive"));
        }
        if !(self.chi > 0.0 && self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::invalid("swarm coefficients must be positive"));
        }
        Ok(())
    }
}

/// Smallest shape value in the search box.
pub const SHAPE_MIN: f64 = 1e-6;
/// Scale search lies in `(max(d) (1 + M_MARGIN), M_FACTOR max(d))`.
pub const M_MARGIN: f64 = 1e-9;
pub const M_FACTOR: f64 = 2.1;
/// Minimum sample size for fitting.
pub const FIT_MIN_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub params: BetaParams,
    pub loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Number of position components clamped back into the box.
    pub boundary_hits: usize,
}

/// Sample prepared for repeated likelihood evaluation.
struct Prepared {
    values: Vec<f64>,
    sum_ln: f64,
    max: f64,
}

impl Prepared {
    fn new(raw: &[f64]) -> Result<Self> {
        if raw.len() < FIT_MIN_SAMPLES {
            return Err(Error::precondition(format!(
                "beta fit needs at least {FIT_MIN_SAMPLES} values, got {}",
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("beta fit needs finite non-negative values"));
        }
        let min_pos = raw.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
        if !min_pos.is_finite() {
            return Err(Error::precondition("degenerate sample: all values are zero"));
        }
        let values: Vec<f64> = raw
            .iter()
            .map(|&v| if v == 0.0 { 0.5 * min_pos } else { v })
            .collect();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if !(max > min) {
            return Err(Error::precondition("degenerate sample: all values are equal"));
        }
        let sum_ln = values.iter().map(|v| v.ln()).sum();
        Ok(Self {
            values,
            sum_ln,
            max,
        })
    }

    fn loglik(&self, alpha: f64, beta: f64, m: f64) -> f64 {
        if !(m > self.max) {
            return f64::NEG_INFINITY;
        }
        let n = self.values.len() as f64;
        let sum_rest: f64 = self.values.iter().map(|d| (m - d).ln()).sum();
        let ll = (alpha - 1.0) * self.sum_ln + (beta - 1.0) * sum_rest
            - n * ln_beta(alpha, beta)
            - n * (alpha + beta - 1.0) * m.ln();
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            ll
        }
    }

    /// Method-of-moments start with the scale at 1.05 max(d).
    fn moments_guess(&self) -> Option<[f64; 3]> {
        let m = 1.05 * self.max;
        let n = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / n / m;
        let var = self
            .values
            .iter()
            .map(|v| (v / m - mean).powi(2))
            .sum::<f64>()
            / n;
        let common = mean * (1.0 - mean) / var - 1.0;
        (common > 0.0 && common.is_finite()).then_some([mean * common, (1.0 - mean) * common, m])
    }
}

pub fn fit_beta_mle(sample: &EmpiricalSample, cfg: &PsoConfig) -> Result<BetaFit> {
    fit_beta_values(sample.values(), cfg)
}

/// Maximize the likelihood over `α ∈ [SHAPE_MIN, α_max]`,
/// `β ∈ [SHAPE_MIN, β_max]`, `m ∈ (max(d), 2.1 max(d))`. Zeros are nudged
/// to half the smallest positive value first.
pub fn fit_beta_values(values: &[f64], cfg: &PsoConfig) -> Result<BetaFit> {
    cfg.validate()?;
    let data = Prepared::new(values)?;
    let lo = [SHAPE_MIN, SHAPE_MIN, data.max * (1.0 + M_MARGIN)];
    let hi = [cfg.alpha_max, cfg.beta_max, data.max * M_FACTOR];
    let vmax: [f64; 3] = std::array::from_fn(|d| 0.5 * (hi[d] - lo[d]));
    let objective = |x: &[f64; 3]| data.loglik(x[0], x[1], x[2]);

    let mut rng = seed::rng(cfg.seed);
    let k = cfg.particles;
    let mut pos: Vec<[f64; 3]> = (0..k)
        .map(|_| std::array::from_fn(|d| rng.random_range(lo[d]..=hi[d])))
        .collect();
    if let Some(guess) = data.moments_guess() {
        pos[0] = std::array::from_fn(|d| guess[d].clamp(lo[d], hi[d]));
    }
    let mut vel: Vec<[f64; 3]> = pos
        .iter()
        .map(|x| std::array::from_fn(|d| 0.5 * (rng.random_range(lo[d]..=hi[d]) - x[d])))
        .collect();
    let mut best_pos = pos.clone();
    let mut best_val: Vec<f64> = pos.iter().map(objective).collect();
    let mut evaluations = k;
    let mut boundary_hits = 0;
    let radius = cfg.ring_radius.min(k / 2);

    for _ in 0..cfg.iterations {
        let leaders: Vec<usize> = (0..k)
            .map(|i| {
                (0..=2 * radius)
                    .map(|o| (i + k + o - radius) % k)
                    .fold(i, |b, j| if best_val[j] > best_val[b] { j } else { b })
            })
            .collect();
        for i in 0..k {
            let leader = best_pos[leaders[i]];
            for d in 0..3 {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = cfg.chi
                    * (vel[i][d]
                        + cfg.c1 * r1 * (best_pos[i][d] - pos[i][d])
                        + cfg.c2 * r2 * (leader[d] - pos[i][d]));
                vel[i][d] = v.clamp(-vmax[d], vmax[d]);
                let x = pos[i][d] + vel[i][d];
                if x < lo[d] || x > hi[d] {
                    boundary_hits += 1;
                    pos[i][d] = x.clamp(lo[d], hi[d]);
                    vel[i][d] = 0.0;
                } else {
                    pos[i][d] = x;
                }
            }
            let f = objective(&pos[i]);
            evaluations += 1;
            if f > best_val[i] {
                best_val[i] = f;
                best_pos[i] = pos[i];
            }
        }
    }

    let winner = (0..k).fold(0, |b, j| if best_val[j] > best_val[b] { j } else { b });
    let (mut best, mut loglik) = (best_pos[winner], best_val[winner]);
    if cfg.polish_evals > 0 && loglik.is_finite() {
        let (x, f, used) = nelder_mead(&objective, best, &lo, &hi, cfg.polish_evals);
        evaluations += used;
        if f > loglik {
            best = x;
            loglik = f;
        }
    }
    let [alpha, beta, m] = best;
    if !loglik.is_finite() {
        return Err(Error::numeric("beta fit found no finite likelihood"));
    }
    Ok(BetaFit {
        params: BetaParams { alpha, beta, m },
        loglik,
        iterations: cfg.iterations,
        evaluations,
        boundary_hits,
    })
}

/// Maximize `f` inside the box with a Nelder-Mead simplex started around
/// `start`. Returns the best point, its value and the evaluations used.
fn nelder_mead(
    f: &impl Fn(&[f64; 3]) -> f64,
    start: [f64; 3],
    lo: &[f64; 3],
    hi: &[f64; 3],
    max_evals: usize,
) -> ([f64; 3], f64, usize) {
    let clamp = |x: [f64; 3]| -> [f64; 3] { std::array::from_fn(|d| x[d].clamp(lo[d], hi[d])) };
    let evals = std::cell::Cell::new(0);
    let eval = |x: &[f64; 3]| {
        evals.set(evals.get() + 1);
        f(x)
    };
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((start, eval(&start)));
    for d in 0..3 {
        let mut x = start;
        let step = 0.02 * (hi[d] - lo[d]).min(x[d].abs().max(1e-3));
        x[d] = if x[d] + step <= hi[d] { x[d] + step } else { x[d] - step };
        let x = clamp(x);
        simplex.push((x, eval(&x)));
    }
    let lerp = |a: &[f64; 3], b: &[f64; 3], t: f64| clamp(std::array::from_fn(|d| a[d] + t * (b[d] - a[d])));
    while evals.get() + 4 < max_evals {
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (best, worst) = (simplex[0].1, simplex[3].1);
        if (best - worst).abs() <= 1e-12 * best.abs().max(1.0) {
            break;
        }
        let centroid: [f64; 3] = std::array::from_fn(|d| simplex[..3].iter().map(|p| p.0[d]).sum::<f64>() / 3.0);
        let w = simplex[3].0;
        let refl = lerp(&centroid, &w, -1.0);
        let fr = eval(&refl);
        if fr > best {
            let exp = lerp(&centroid, &w, -2.0);
            let fe = eval(&exp);
            simplex[3] = if fe > fr { (exp, fe) } else { (refl, fr) };
        } else if fr > simplex[2].1 {
            simplex[3] = (refl, fr);
        } else {
            let (con, fc) = if fr > worst {
                let c = lerp(&centroid, &refl, 0.5);
                (c, eval(&c))
            } else {
                let c = lerp(&centroid, &w, 0.5);
                (c, eval(&c))
            };
            if fc > worst.max(fr) {
                simplex[3] = (con, fc);
            } else {
                let top = simplex[0].0;
                for p in simplex.iter_mut().skip(1) {
                    let x = lerp(&top, &p.0, 0.5);
                    *p = (x, eval(&x));
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    (simplex[0].0, simplex[0].1, evals.get())
}

/// `n` inverse-CDF draws.
pub fn sample_beta(p: &BetaParams, n: usize, rng: &mut seed::JobRng) -> Vec<f64> {
    (0..n).map(|_| p.quantile(rng.random::<f64>())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(a: f64, b: f64, m: f64) -> BetaParams {
        BetaParams::new(a, b, m).unwrap()
    }

    #[test]
    fn pdf_examples() {
        let u = p(1.0, 1.0, 1.0);
        for d in [0.0, 0.3, 1.0] {
            assert!((u.pdf(d) - 1.0).abs() < 1e-14);
        }
        assert_eq!(u.pdf(-0.1), 0.0);
        assert_eq!(u.pdf(1.1), 0.0);
        assert!((p(2.0, 2.0, 1.0).pdf(0.5) - 1.5).abs() < 1e-12);
        assert!((p(2.0, 2.0, 2.0).pdf(1.0) - 0.75).abs() < 1e-12);
        assert_eq!(p(0.5, 2.0, 1.0).pdf(0.0), f64::INFINITY);
        assert_eq!(p(2.0, 0.5, 1.0).pdf(1.0), f64::INFINITY);
        assert!(BetaParams::new(0.0, 1.0, 1.0).is_err());
        assert!(BetaParams::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn loglik_examples() {
        let v = [0.1, 0.5, 0.9];
        assert!(beta_loglik(&v, &p(1.0, 1.0, 1.0)).abs() < 1e-12);
        assert!((beta_loglik(&[0.5], &p(2.0, 2.0, 1.0)) - 1.5f64.ln()).abs() < 1e-12);
        assert_eq!(beta_loglik(&[0.5, 1.0], &p(2.0, 2.0, 1.0)), f64::NEG_INFINITY);
        assert_eq!(beta_loglik(&[0.0, 0.5], &p(2.0, 2.0, 1.0)), f64::NEG_INFINITY);
    }

    #[test]
    fn cdf_examples() {
        let u = p(1.0, 1.0, 1.0);
        assert_eq!(u.cdf(0.0), 0.0);
        assert_eq!(u.cdf(1.0), 1.0);
        for d in [0.1, 0.25, 0.77] {
            assert!((u.cdf(d) - d).abs() < 1e-12);
        }
        assert!((p(2.0, 2.0, 1.0).cdf(0.5) - 0.5).abs() < 1e-12);
        // I_x(2, 3) = 6x^2 - 8x^3 + 3x^4
        let x: f64 = 0.3;
        let want = 6.0 * x.powi(2) - 8.0 * x.powi(3) + 3.0 * x.powi(4);
        assert!((p(2.0, 3.0, 1.0).cdf(x) - want).abs() < 1e-13);
    }

    #[test]
    fn large_shapes_converge() {
        let q = p(400.0, 450.0, 1.0);
        let median = q.quantile(0.5);
        assert!((q.cdf(median) - 0.5).abs() < 1e-10);
        assert!((median - 400.0 / 850.0).abs() < 0.01);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for params in [p(9.37, 3.03, 1.93), p(0.5, 0.7, 1.0), p(1.0, 1.0, 2.0), p(50.0, 2.0, 3.0)] {
            for u in [1e-9, 0.001, 0.2, 0.5, 0.8, 0.999, 1.0 - 1e-9] {
                let d = params.quantile(u);
                assert!((params.cdf(d) - u).abs() < 1e-10, "{params:?} u={u}");
            }
        }
    }

    #[test]
    fn inverse_cdf_draws_match_cdf() {
        let params = p(9.37, 3.03, 1.93);
        let mut rng = seed::rng(5);
        let mut draws = sample_beta(&params, 100_000, &mut rng);
        draws.sort_by(f64::total_cmp);
        let eps = crate::empirics::epsilon_vs_cdf(&draws, |d| params.cdf(d), 100).unwrap();
        assert!(eps < 0.005, "eps {eps}");
    }

    #[test]
    fn fit_rejects_degenerate_samples() {
        let cfg = PsoConfig::default();
        assert!(matches!(fit_beta_values(&[0.5; 40], &cfg), Err(Error::Precondition(_))));
        assert!(matches!(fit_beta_values(&[0.0; 40], &cfg), Err(Error::Precondition(_))));
        assert!(fit_beta_values(&[0.5; 10], &cfg).is_err());
        let mut v = vec![0.5; 40];
        v[3] = -1.0;
        assert!(fit_beta_values(&v, &cfg).is_err());
    }

    #[test]
    fn fit_handles_zeros() {
        let params = p(2.0, 5.0, 1.0);
        let mut rng = seed::rng(2);
        let mut draws = sample_beta(&params, 500, &mut rng);
        draws[0] = 0.0;
        let fit = fit_beta_values(&draws, &PsoConfig::default()).unwrap();
        assert!(fit.loglik.is_finite());
        assert!(fit.params.alpha > 0.0);
    }

    #[test]
    fn fit_recovers_uniform() {
        let mut rng = seed::rng(11);
        let u = p(1.0, 1.0, 1.0);
        let draws = sample_beta(&u, 2000, &mut rng);
        let fit = fit_beta_values(&draws, &PsoConfig::default().with_seed(1)).unwrap();
        assert!((0.9..=1.1).contains(&fit.params.alpha), "{:?}", fit.params);
        assert!((0.9..=1.1).contains(&fit.params.beta), "{:?}", fit.params);
    }

    #[test]
    fn fit_is_reproducible_and_in_box() {
        let mut rng = seed::rng(4);
        let draws = sample_beta(&p(9.37, 3.03, 1.93), 500, &mut rng);
        let cfg = PsoConfig::default().with_seed(9);
        let a = fit_beta_values(&draws, &cfg).unwrap();
        let b = fit_beta_values(&draws, &cfg).unwrap();
        assert_eq!(a, b);
        let max = draws.iter().copied().fold(0.0, f64::max);
        assert!(a.params.m > max && a.params.m < 2.1 * max);
        assert!(a.evaluations >= 25 * 301);
        let data = Prepared::new(&draws).unwrap();
        let [ma, mb, mm] = data.moments_guess().unwrap();
        assert!(a.loglik >= data.loglik(ma, mb, mm));
        // no random in-box point beats the fit
        let mut probe = seed::rng(77);
        for _ in 0..100 {
            let ll = data.loglik(
                probe.random_range(SHAPE_MIN..500.0),
                probe.random_range(SHAPE_MIN..500.0),
                probe.random_range(max * (1.0 + M_MARGIN)..2.1 * max),
            );
            assert!(a.loglik >= ll);
        }
    }

    proptest! {
        #[test]
        fn cdf_is_monotone(a in 0.2f64..60.0, b in 0.2f64..60.0, m in 0.1f64..5.0) {
            let q = p(a, b, m);
            let mut last = 0.0;
            for i in 0..=1000 {
                let c = q.cdf(m * i as f64 / 1000.0);
                prop_assert!((0.0..=1.0).contains(&c));
                prop_assert!(c >= last - 1e-15);
                last = c;
            }
        }

        #[test]
        fn loglik_is_sum_of_log_pdf(
            a in 0.3f64..30.0, b in 0.3f64..30.0, m in 0.5f64..3.0,
            xs in prop::collection::vec(0.001f64..0.999, 1..50),
        ) {
            let q = p(a, b, m);
            let v: Vec<f64> = xs.iter().map(|x| x * m).collect();
            let direct = beta_loglik(&v, &q);
            let summed: f64 = v.iter().map(|d| q.ln_pdf(*d)).sum();
            prop_assert!((direct - summed).abs() <= 1e-9 * summed.abs().max(1.0));
        }
    }
}
