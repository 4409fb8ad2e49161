//! Reference implementations shared by the integration tests. They are
//! written from the textbook definitions and share no code with the library
//! beyond `ln_beta`.

#![allow(dead_code)]

use mdspace::beta::{BetaParams, PsoConfig};
use mdspace::dissim::{Measure, COST_TIE_REL};
use mdspace::model::{assemble_model, DissimModel, LengthFit, Provenance};

/// Best (cost, steps) over all paths, preferring fewer steps on equal cost.
#[derive(Debug, Clone, Copy)]
struct Best {
    cost: f64,
    steps: u32,
}

impl Best {
    fn new() -> Self {
        Self {
            cost: f64::INFINITY,
            steps: u32::MAX,
        }
    }

    /// Lexicographic on (cost, steps), with costs within
    /// `COST_TIE_REL` relative treated as equal.
    fn offer(&mut self, cost: f64, steps: u32) {
        let take = if !self.cost.is_finite() {
            true
        } else {
            let tol = COST_TIE_REL * cost.abs().max(self.cost.abs());
            if (cost - self.cost).abs() <= tol {
                steps < self.steps || (steps == self.steps && cost < self.cost)
            } else {
                cost < self.cost
            }
        };
        if take {
            self.cost = cost;
            self.steps = steps;
        }
    }
}

/// DTW by enumerating every monotone path from (0,0) to (w-1,w-1) with
/// |i - j| <= radius. Cost is the sum of |a_i - b_j| over visited cells,
/// divided by the number of cells.
pub fn dtw_paths(a: &[f64], b: &[f64], radius: usize) -> f64 {
    fn walk(a: &[f64], b: &[f64], r: usize, i: usize, j: usize, cost: f64, cells: u32, best: &mut Best) {
        let w = a.len();
        if i.abs_diff(j) > r {
            return;
        }
        let cost = cost + (a[i] - b[j]).abs();
        let cells = cells + 1;
        if i == w - 1 && j == w - 1 {
            best.offer(cost, cells);
            return;
        }
        if i + 1 < w {
            walk(a, b, r, i + 1, j, cost, cells, best);
        }
        if j + 1 < w {
            walk(a, b, r, i, j + 1, cost, cells, best);
        }
        if i + 1 < w && j + 1 < w {
            walk(a, b, r, i + 1, j + 1, cost, cells, best);
        }
    }
    let mut best = Best::new();
    walk(a, b, radius, 0, 0, 0.0, 0, &mut best);
    best.cost / best.steps as f64
}

/// Edit distance over all edit scripts: substituting x for y costs |x - y|,
/// inserting or deleting x costs |x - gap|. Normalized by script length.
pub fn edr_paths(a: &[f64], b: &[f64], gap: f64) -> f64 {
    fn walk(a: &[f64], b: &[f64], g: f64, i: usize, j: usize, cost: f64, ops: u32, best: &mut Best) {
        let w = a.len();
        if i == w && j == w {
            best.offer(cost, ops);
            return;
        }
        if i < w && j < w {
            walk(a, b, g, i + 1, j + 1, cost + (a[i] - b[j]).abs(), ops + 1, best);
        }
        if i < w {
            walk(a, b, g, i + 1, j, cost + (a[i] - g).abs(), ops + 1, best);
        }
        if j < w {
            walk(a, b, g, i, j + 1, cost + (b[j] - g).abs(), ops + 1, best);
        }
    }
    let mut best = Best::new();
    walk(a, b, gap, 0, 0, 0.0, 0, &mut best);
    best.cost / best.steps as f64
}

/// TWED over all alignments of the series padded with a zero sample at
/// time 0, unit time stamps. The first operation must be a match.
pub fn twed_paths(a: &[f64], b: &[f64], nu: f64, lambda: f64) -> f64 {
    let pa: Vec<f64> = std::iter::once(0.0).chain(a.iter().copied()).collect();
    let pb: Vec<f64> = std::iter::once(0.0).chain(b.iter().copied()).collect();
    #[allow(clippy::too_many_arguments)]
    fn walk(a: &[f64], b: &[f64], nu: f64, lam: f64, i: usize, j: usize, cost: f64, ops: u32, best: &mut Best) {
        let w = a.len() - 1;
        if i == w && j == w {
            best.offer(cost, ops);
            return;
        }
        if i < w && j < w {
            let (ti, tj) = ((i + 1) as f64, (j + 1) as f64);
            let c = ((a[i + 1] - b[j + 1]).abs() + (a[i] - b[j]).abs())
                + nu * ((ti - tj).abs() + ((ti - 1.0) - (tj - 1.0)).abs());
            walk(a, b, nu, lam, i + 1, j + 1, cost + c, ops + 1, best);
        }
        // deletions are only reachable once both series have started
        if i < w && j > 0 {
            let c = ((a[i + 1] - a[i]).abs() + nu) + lam;
            walk(a, b, nu, lam, i + 1, j, cost + c, ops + 1, best);
        }
        if j < w && i > 0 {
            let c = ((b[j + 1] - b[j]).abs() + nu) + lam;
            walk(a, b, nu, lam, i, j + 1, cost + c, ops + 1, best);
        }
    }
    let mut best = Best::new();
    walk(&pa, &pb, nu, lambda, 0, 0, 0.0, 0, &mut best);
    best.cost / best.steps as f64
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for k in 1..n {
        let x = lo + k as f64 * h;
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// CDF of the beta on `[0, m]` by composite Simpson integration of its
/// density. Each half is integrated from its own endpoint after the change
/// `t = s^p` (lower) or `1 - t = s^q` (upper) with integer powers chosen so
/// that the integrand vanishes smoothly there; this removes the endpoint
/// singularities of shapes below one.
pub fn beta_cdf_simpson(alpha: f64, beta: f64, m: f64, d: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    if d >= m {
        return 1.0;
    }
    let x = d / m;
    let norm = (-statrs::function::beta::ln_beta(alpha, beta)).exp();
    let intervals = 20_000;
    let power = |shape: f64| (3.0 / shape).ceil().max(1.0);
    // integral over t in [0, x] of t^(a-1) (1-t)^(b-1)
    let tail = |a: f64, b: f64, x: f64| {
        let p = power(a);
        // t = s^p, dt = p s^(p-1) ds
        let g = |s: f64| {
            if s == 0.0 {
                return 0.0;
            }
            p * s.powf(p * a - 1.0) * (1.0 - s.powf(p)).powf(b - 1.0)
        };
        simpson(g, 0.0, x.powf(1.0 / p), intervals)
    };
    if x <= 0.5 {
        tail(alpha, beta, x) * norm
    } else {
        1.0 - tail(beta, alpha, 1.0 - x) * norm
    }
}

/// A model whose curves reproduce `f(w)` exactly at every grid length.
pub fn fixture_model(
    measure: Measure,
    w_min: usize,
    w_max: usize,
    w_step: usize,
    n: usize,
    f: impl Fn(usize) -> (f64, f64, f64),
) -> DissimModel {
    let fits: Vec<LengthFit> = mdspace::sampling::length_grid(w_min, w_max, w_step)
        .unwrap()
        .into_iter()
        .map(|w| {
            let (alpha, beta, m) = f(w);
            LengthFit {
                w,
                params: BetaParams::new(alpha, beta, m).unwrap(),
                loglik: 0.0,
                sample_size: n,
                sample_max: m,
                iterations: 0,
                evaluations: 0,
                boundary_hits: 0,
            }
        })
        .collect();
    let provenance = Provenance {
        source: "fixture".into(),
        series_len: 0,
        n,
        seed: 0,
        pso: PsoConfig::default(),
        created: None,
        generator: "fixture".into(),
    };
    assemble_model(&measure, w_min, w_max, w_step, fits, provenance).unwrap()
}
