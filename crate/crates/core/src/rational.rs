//! Rational-function smoothing of parameter series over segment length.
//!
//! A curve is `Q(w) / R(w)` with `Q(w) = q_0 + ... + q_u w^u` and
//! `R(w) = 1 + r_1 w + ... + r_v w^v`. Coefficients are fitted by
//! Levenberg-Marquardt and the degrees chosen by AIC.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const MAX_DEGREE: usize = 3;
/// `|R(w)|` at or below this is treated as a pole.
pub const POLE_TOL: f64 = 1e-12;
pub const LM_MAX_ITER: usize = 500;
pub const LM_REL_TOL: f64 = 1e-10;
/// Residual sums below this fraction of `Σy²` count as zero in the AIC.
pub const RSS_FLOOR_REL: f64 = 1e-20;
/// Minimum number of points for [`select_rational`].
pub const SELECT_MIN_POINTS: usize = 8;
const RESTARTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalFn {
    /// `q_0 ..= q_u`.
    pub q: Vec<f64>,
    /// `r_1 ..= r_v`; the constant term 1 is implicit.
    pub r: Vec<f64>,
}

impl RationalFn {
    pub fn new(q: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::invalid("numerator needs at least one coefficient"));
        }
        if q.iter().chain(&r).any(|c| !c.is_finite()) {
            return Err(Error::invalid("rational coefficients must be finite"));
        }
        Ok(Self { q, r })
    }

    pub fn constant(c: f64) -> Self {
        Self { q: vec![c], r: Vec::new() }
    }

    pub fn u(&self) -> usize {
        self.q.len() - 1
    }

    pub fn v(&self) -> usize {
        self.r.len()
    }

    pub fn n_params(&self) -> usize {
        self.q.len() + self.r.len()
    }

    pub fn numer(&self, w: f64) -> f64 {
        self.q.iter().rev().fold(0.0, |acc, c| acc * w + c)
    }

    pub fn denom(&self, w: f64) -> f64 {
        1.0 + w * self.r.iter().rev().fold(0.0, |acc, c| acc * w + c)
    }

    pub fn eval(&self, w: f64) -> Result<f64> {
        let den = self.denom(w);
        if den.abs() <= POLE_TOL {
            return Err(Error::numeric(format!("rational denominator vanishes at w = {w}")));
        }
        Ok(self.numer(w) / den)
    }

    /// Whether `R` stays away from zero on `[lo, hi]`. Exact for `v <= 3`:
    /// the extremes of `R` lie at the endpoints or at roots of `R'`.
    pub fn pole_free(&self, lo: f64, hi: f64) -> bool {
        let mut probes = vec![lo, hi];
        match self.r.as_slice() {
            [_, r2] => probes.push(-self.r[0] / (2.0 * r2)),
            [r1, r2, r3] => {
                let (a, b, c) = (3.0 * r3, 2.0 * r2, *r1);
                if a == 0.0 {
                    if b != 0.0 {
                        probes.push(-c / b);
                    }
                } else {
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let s = -0.5 * (b + b.signum() * disc.sqrt());
                        if s != 0.0 {
                            probes.push(s / a);
                            probes.push(c / s);
                        } else {
                            probes.push(0.0);
                        }
                    }
                }
            }
            _ => {}
        }
        let vals: Vec<f64> = probes
            .into_iter()
            .filter(|x| x.is_finite() && *x >= lo && *x <= hi)
            .map(|x| self.denom(x))
            .collect();
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        min.is_finite() && max.is_finite() && (min > POLE_TOL || max < -POLE_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub u: usize,
    pub v: usize,
    pub rss: f64,
    /// Residual sum of squares at the start the final fit was refined from.
    pub init_rss: f64,
    pub n: usize,
    pub p: usize,
    pub aic: f64,
    pub converged: bool,
    pub pole_free: bool,
    pub iterations: usize,
}

impl FitReport {
    pub fn is_valid(&self) -> bool {
        self.converged && self.pole_free
    }
}

/// `n ln(rss / n) + 2p`.
pub fn aic(rss: f64, n: usize, p: usize) -> f64 {
    let n = n as f64;
    n * (rss / n).ln() + 2.0 * p as f64
}

fn check_points(points: &[(f64, f64)], p: usize) -> Result<()> {
    if points.len() <= p {
        return Err(Error::precondition(format!(
            "underdetermined rational fit: {} points for {p} parameters",
            points.len()
        )));
    }
    if points.iter().any(|(w, y)| !w.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("rational fit points must be finite"));
    }
    let w0 = points[0].0;
    if points.iter().all(|(w, _)| *w == w0) {
        return Err(Error::precondition("all w values are identical"));
    }
    Ok(())
}

/// Problem in scaled coordinates `t = w / ws`, `z = y / ys`.
struct Scaled {
    t: Vec<f64>,
    z: Vec<f64>,
    ws: f64,
    ys: f64,
    u: usize,
    v: usize,
}

impl Scaled {
    fn new(points: &[(f64, f64)], u: usize, v: usize) -> Self {
        let ws = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
        let ys = points.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        let ws = if ws > 0.0 { ws } else { 1.0 };
        let ys = if ys > 0.0 { ys } else { 1.0 };
        Self {
            t: points.iter().map(|p| p.0 / ws).collect(),
            z: points.iter().map(|p| p.1 / ys).collect(),
            ws,
            ys,
            u,
            v,
        }
    }

    fn p(&self) -> usize {
        self.u + 1 + self.v
    }

    fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        theta.split_at(self.u + 1)
    }

    fn model(&self, theta: &[f64], t: f64) -> (f64, f64) {
        let (a, b) = self.split(theta);
        let num = a.iter().rev().fold(0.0, |acc, c| acc * t + c);
        let den = 1.0 + t * b.iter().rev().fold(0.0, |acc, c| acc * t + c);
        (num / den, den)
    }

    fn rss(&self, theta: &[f64]) -> f64 {
        let s: f64 = self
            .t
            .iter()
            .zip(&self.z)
            .map(|(&t, &z)| (z - self.model(theta, t).0).powi(2))
            .sum();
        if s.is_nan() {
            f64::INFINITY
        } else {
            s
        }
    }

    /// Least squares on `z R(t) ≈ Q(t)`, linear in all coefficients.
    fn linearized(&self) -> Option<Vec<f64>> {
        let n = self.t.len();
        let m = DMatrix::from_fn(n, self.p(), |i, k| {
            let t = self.t[i];
            if k <= self.u {
                t.powi(k as i32)
            } else {
                -self.z[i] * t.powi((k - self.u) as i32)
            }
        });
        solve_lstsq(m, DVector::from_column_slice(&self.z))
    }

    /// Numerator coefficients for a fixed denominator by weighted least squares.
    fn numerator_for(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.t.len();
        let den: Vec<f64> = self
            .t
            .iter()
            .map(|&t| 1.0 + t * b.iter().rev().fold(0.0, |acc, c| acc * t + c))
            .collect();
        let m = DMatrix::from_fn(n, self.u + 1, |i, k| self.t[i].powi(k as i32) / den[i]);
        let mut theta = solve_lstsq(m, DVector::from_column_slice(&self.z))?;
        theta.extend_from_slice(b);
        Some(theta)
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.t.len(), self.p(), |i, k| {
            let t = self.t[i];
            let (f, den) = self.model(theta, t);
            if k <= self.u {
                t.powi(k as i32) / den
            } else {
                -f * t.powi((k - self.u) as i32) / den
            }
        })
    }

    /// Returns (theta, rss, iterations, converged).
    fn levenberg_marquardt(&self, mut theta: Vec<f64>) -> (Vec<f64>, f64, usize, bool) {
        let sum_z2: f64 = self.z.iter().map(|z| z * z).sum();
        let mut rss = self.rss(&theta);
        if !rss.is_finite() {
            return (theta, rss, 0, false);
        }
        let mut lambda = 1e-3;
        for iter in 1..=LM_MAX_ITER {
            if rss <= 1e-30 * sum_z2.max(f64::MIN_POSITIVE) {
                return (theta, rss, iter - 1, true);
            }
            let j = self.jacobian(&theta);
            let resid = DVector::from_iterator(
                self.t.len(),
                self.t.iter().zip(&self.z).map(|(&t, &z)| z - self.model(&theta, t).0),
            );
            let jtj = j.transpose() * &j;
            let jtr = j.transpose() * resid;
            loop {
                let mut a = jtj.clone();
                for k in 0..a.nrows() {
                    a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
                }
                let step = a.cholesky().map(|c| c.solve(&jtr));
                if let Some(step) = step {
                    let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
                    let trial_rss = self.rss(&trial);
                    if trial_rss < rss {
                        let rel = (rss - trial_rss) / rss;
                        theta = trial;
                        rss = trial_rss;
                        lambda = (lambda / 10.0).max(1e-15);
                        if rel < LM_REL_TOL {
                            return (theta, rss, iter, true);
                        }
                        break;
                    }
                }
                lambda *= 10.0;
                if lambda > 1e15 {
                    // No descent direction left at working precision.
                    return (theta, rss, iter, true);
                }
            }
        }
        (theta, rss, LM_MAX_ITER, false)
    }

    fn unscale(&self, theta: &[f64]) -> Option<RationalFn> {
        let (a, b) = self.split(theta);
        let q = a
            .iter()
            .enumerate()
            .map(|(k, c)| self.ys * c / self.ws.powi(k as i32))
            .collect();
        let r = b
            .iter()
            .enumerate()
            .map(|(k, c)| c / self.ws.powi(k as i32 + 1))
            .collect();
        RationalFn::new(q, r).ok()
    }
}

fn solve_lstsq(m: DMatrix<f64>, rhs: DVector<f64>) -> Option<Vec<f64>> {
    let sol = m.svd(true, true).solve(&rhs, 1e-14).ok()?;
    sol.iter().all(|x| x.is_finite()).then(|| sol.iter().copied().collect())
}

/// Least-squares rational fit of degrees `(u, v)`. Starts from the
/// linearized problem; if that fit is invalid, seeded restarts from
/// perturbed denominators are tried and the best valid one is kept.
pub fn fit_rational(points: &[(f64, f64)], u: usize, v: usize, seed: u64) -> Result<(RationalFn, FitReport)> {
    if u > MAX_DEGREE || v > MAX_DEGREE {
        return Err(Error::invalid(format!("degrees ({u}, {v}) exceed {MAX_DEGREE}")));
    }
    let p = u + 1 + v;
    check_points(points, p)?;
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let sum_y2: f64 = points.iter().map(|p| p.1 * p.1).sum();
    let prob = Scaled::new(points, u, v);

    let attempt = |start: Vec<f64>| -> Option<(RationalFn, FitReport)> {
        let init_rss = prob.rss(&start);
        if !init_rss.is_finite() {
            return None;
        }
        let (theta, rss, iterations, converged) = prob.levenberg_marquardt(start);
        let f = prob.unscale(&theta)?;
        let ys2 = prob.ys * prob.ys;
        let rss = rss * ys2;
        if !rss.is_finite() {
            return None;
        }
        let floor = RSS_FLOOR_REL * sum_y2 + f64::MIN_POSITIVE;
        let report = FitReport {
            u,
            v,
            rss,
            init_rss: init_rss * ys2,
            n: points.len(),
            p,
            aic: aic(rss.max(floor), points.len(), p),
            converged,
            pole_free: f.pole_free(lo, hi),
            iterations,
        };
        Some((f, report))
    };

    let mut best = prob.linearized().and_then(|s| attempt(s));
    if best.as_ref().is_some_and(|(_, r)| r.is_valid()) {
        return Ok(best.unwrap());
    }
    let mut rng = seed::rng(seed::derive_seed(seed, &[u as u64, v as u64]));
    let normal = Normal::new(0.0, 0.5).expect("valid normal");
    for k in 0..RESTARTS {
        let b: Vec<f64> = if k == 0 {
            vec![0.0; v]
        } else {
            (0..v).map(|_| normal.sample(&mut rng)).collect()
        };
        let Some(cand) = prob.numerator_for(&b).and_then(|s| attempt(s)) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((_, r)) => {
                (cand.1.is_valid(), -cand.1.rss) > (r.is_valid(), -r.rss)
            }
        };
        if better {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| Error::numeric(format!("rational fit ({u}, {v}) diverged")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Selected,
    Valid,
    /// Valid fit that dips to zero or below on the integer grid.
    NonPositive,
    NotConverged,
    Pole,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub u: usize,
    pub v: usize,
    pub status: CandidateStatus,
    pub curve: Option<RationalFn>,
    pub report: Option<FitReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub curve: RationalFn,
    pub report: FitReport,
    pub candidates: Vec<Candidate>,
}

/// Fit all `u ∈ 1..=3`, `v ∈ 0..=3` and keep the valid fit with lowest AIC,
/// ties going to fewer parameters, then lower `v`.
pub fn select_rational(points: &[(f64, f64)], seed: u64) -> Result<Selection> {
    select_inner(points, None, seed)
}

/// As [`select_rational`], additionally requiring the curve to be positive at
/// every integer in `[w_lo, w_hi]`; otherwise the next-best candidate is used.
pub fn select_positive_rational(points: &[(f64, f64)], w_lo: usize, w_hi: usize, seed: u64) -> Result<Selection> {
    if w_lo > w_hi {
        return Err(Error::invalid(format!("empty positivity range [{w_lo}, {w_hi}]")));
    }
    select_inner(points, Some((w_lo, w_hi)), seed)
}

fn positive_on(f: &RationalFn, lo: usize, hi: usize) -> bool {
    f.pole_free(lo as f64, hi as f64)
        && (lo..=hi).all(|w| f.eval(w as f64).is_ok_and(|y| y > 0.0 && y.is_finite()))
}

fn select_inner(points: &[(f64, f64)], positive: Option<(usize, usize)>, seed: u64) -> Result<Selection> {
    if points.len() < SELECT_MIN_POINTS {
        return Err(Error::precondition(format!(
            "rational selection needs at least {SELECT_MIN_POINTS} points, got {}",
            points.len()
        )));
    }
    check_points(points, 1)?;
    let mut candidates = Vec::with_capacity(12);
    for u in 1..=MAX_DEGREE {
        for v in 0..=MAX_DEGREE {
            let c = match fit_rational(points, u, v, seed) {
                Ok((curve, report)) => {
                    let status = if !report.pole_free {
                        CandidateStatus::Pole
                    } else if !report.converged {
                        CandidateStatus::NotConverged
                    } else if positive.is_some_and(|(lo, hi)| !positive_on(&curve, lo, hi)) {
                        CandidateStatus::NonPositive
                    } else {
                        CandidateStatus::Valid
                    };
                    Candidate { u, v, status, curve: Some(curve), report: Some(report) }
                }
                Err(_) => Candidate { u, v, status: CandidateStatus::Failed, curve: None, report: None },
            };
            candidates.push(c);
        }
    }
    let best = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.status == CandidateStatus::Valid)
        .min_by(|(_, a), (_, b)| {
            let (ra, rb) = (a.report.unwrap(), b.report.unwrap());
            ra.aic.total_cmp(&rb.aic).then(ra.p.cmp(&rb.p)).then(ra.v.cmp(&rb.v))
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::numeric("no valid rational fit among the 12 candidates"))?;
    candidates[best].status = CandidateStatus::Selected;
    let c = &candidates[best];
    Ok(Selection {
        curve: c.curve.clone().unwrap(),
        report: c.report.unwrap(),
        candidates,
    })
}
