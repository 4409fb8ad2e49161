//! Ranking motif pairs of different lengths by their normalized score.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dissim::MeasureKind;
use crate::error::{Error, Result};
use crate::model::DissimModel;
use crate::sampling::{length_grid, sample_pairs, PairScorer};
use crate::seed;
use crate::series::{znorm_into, Segment, Series};

const TAG_DISCOVER: u64 = 0xD15C;

/// A scored pair before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub i: usize,
    pub j: usize,
    pub w: usize,
    pub d: f64,
    pub measure: MeasureKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotifPair {
    pub i: usize,
    pub j: usize,
    pub w: usize,
    pub d: f64,
    pub d_prime: f64,
    pub measure: MeasureKind,
}

impl MotifPair {
    pub fn segments(&self) -> (Segment, Segment) {
        (
            Segment { start: self.i, len: self.w },
            Segment { start: self.j, len: self.w },
        )
    }
}

/// Ascending `d'`, then `w`, `d`, `i`, `j`. Raw `d` precedes the starts so
/// that equal-length pairs saturating at `d' = 1` keep their raw order.
fn rank_order(a: &MotifPair, b: &MotifPair) -> Ordering {
    a.d_prime
        .total_cmp(&b.d_prime)
        .then(a.w.cmp(&b.w))
        .then(a.d.total_cmp(&b.d))
        .then(a.i.cmp(&b.i))
        .then(a.j.cmp(&b.j))
}

/// Normalize and sort. Errors name the offending pair by its 0-based index.
pub fn rank_pairs(pairs: &[PairScore], model: &DissimModel) -> Result<Vec<MotifPair>> {
    let mut out = pairs
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if p.measure != model.measure {
                return Err(Error::invalid(format!(
                    "pair {k}: measure {} does not match model measure {}",
                    p.measure, model.measure
                )));
            }
            if p.i == 0 || p.j == 0 || p.i.abs_diff(p.j) <= p.w {
                return Err(Error::invalid(format!(
                    "pair {k}: starts ({}, {}) are not a non-trivial pair at w = {}",
                    p.i, p.j, p.w
                )));
            }
            if !model.contains(p.w) {
                return Err(Error::invalid(format!(
                    "pair {k}: w = {} outside model range [{}, {}]",
                    p.w, model.w_min, model.w_max
                )));
            }
            if !(p.d.is_finite() && p.d >= 0.0) {
                return Err(Error::invalid(format!("pair {k}: dissimilarity {} is not valid", p.d)));
            }
            let d_prime = model.dprime(p.w, p.d)?;
            Ok(MotifPair {
                i: p.i.min(p.j),
                j: p.i.max(p.j),
                w: p.w,
                d: p.d,
                d_prime,
                measure: p.measure,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(rank_order);
    Ok(out)
}

/// Dissimilarity of the pair under the model's measure.
pub fn score_pair(series: &Series, model: &DissimModel, i: usize, j: usize, w: usize) -> Result<f64> {
    let a = series.segment(Segment::new(i, w, series.len())?);
    let b = series.segment(Segment::new(j, w, series.len())?);
    let (mut za, mut zb) = (Vec::new(), Vec::new());
    znorm_into(a, &mut za);
    znorm_into(b, &mut zb);
    Ok(model.measure().eval(&za, &zb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapPolicy {
    None,
    Cover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateMode {
    /// Uniformly sampled admissible pairs.
    Sampled,
    /// Every admissible pair, keeping the lowest `per_w` per length.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscoverConfig {
    pub w_min: usize,
    pub w_max: usize,
    pub w_step: usize,
    /// Candidates drawn (sampled) or retained (exhaustive) per length.
    pub per_w: usize,
    pub top_k: usize,
    pub mode: CandidateMode,
    pub policy: OverlapPolicy,
    /// Fraction of a segment that must be shared to count as covered.
    pub cover_threshold: f64,
}

impl DiscoverConfig {
    pub fn for_model(model: &DissimModel) -> Self {
        Self {
            w_min: model.w_min,
            w_max: model.w_max,
            w_step: 1,
            per_w: 1000,
            top_k: 10,
            mode: CandidateMode::Sampled,
            policy: OverlapPolicy::Cover,
            cover_threshold: 0.5,
        }
    }
}

fn overlap_fraction(a: &Segment, b: &Segment) -> f64 {
    a.overlap(b) as f64 / a.len.min(b.len) as f64
}

/// Whether `p` is covered by `kept`: both of its segments overlap the two
/// segments of `kept` (in either pairing) by at least `threshold`.
pub fn covers(kept: &MotifPair, p: &MotifPair, threshold: f64) -> bool {
    let (k1, k2) = kept.segments();
    let (a, b) = p.segments();
    let hit = |x: &Segment, y: &Segment| overlap_fraction(x, y) >= threshold;
    (hit(&a, &k1) && hit(&b, &k2)) || (hit(&a, &k2) && hit(&b, &k1))
}

/// Greedy cover filter over a ranked list, stopping once `top_k` are kept.
pub fn apply_policy(ranked: Vec<MotifPair>, policy: OverlapPolicy, threshold: f64, top_k: usize) -> Vec<MotifPair> {
    match policy {
        OverlapPolicy::None => ranked.into_iter().take(top_k).collect(),
        OverlapPolicy::Cover => {
            let mut kept: Vec<MotifPair> = Vec::with_capacity(top_k);
            for p in ranked {
                if kept.len() == top_k {
                    break;
                }
                if !kept.iter().any(|k| covers(k, &p, threshold)) {
                    kept.push(p);
                }
            }
            kept
        }
    }
}

/// Heap entry ordered by `(d, i, j)`, largest first.
#[derive(PartialEq)]
struct Scored(f64, usize, usize);

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then(self.1.cmp(&other.1))
            .then(self.2.cmp(&other.2))
    }
}

fn exhaustive_lowest(series: &Series, model: &DissimModel, w: usize, keep: usize) -> Result<Vec<PairScore>> {
    let n = series.len();
    if n < 2 * w + 2 {
        return Err(Error::precondition(format!("series too short for w = {w}")));
    }
    let starts = n - w;
    let x = series.values();
    let mut normed = vec![0.0; starts * w];
    let mut buf = Vec::with_capacity(w);
    for s in 0..starts {
        znorm_into(&x[s..s + w], &mut buf);
        normed[s * w..(s + 1) * w].copy_from_slice(&buf);
    }
    let measure = model.measure();
    let mut heap: BinaryHeap<Scored> = BinaryHeap::with_capacity(keep + 1);
    for i in 1..=starts {
        let za = &normed[(i - 1) * w..i * w];
        for j in i + w + 1..=starts {
            let d = measure.eval(za, &normed[(j - 1) * w..j * w]);
            let item = Scored(d, i, j);
            if heap.len() < keep {
                heap.push(item);
            } else if item < *heap.peek().unwrap() {
                heap.pop();
                heap.push(item);
            }
        }
    }
    Ok(heap
        .into_sorted_vec()
        .into_iter()
        .map(|Scored(d, i, j)| PairScore {
            i,
            j,
            w,
            d,
            measure: model.measure,
        })
        .collect())
}

fn sampled(series: &Series, model: &DissimModel, w: usize, n: usize, seed: u64) -> Result<Vec<PairScore>> {
    let job = seed::derive_seed(seed, &[TAG_DISCOVER, w as u64, model.measure.tag()]);
    let mut pairs = sample_pairs(series.len(), w, n, job)?;
    pairs.sort_unstable();
    pairs.dedup();
    let measure = model.measure();
    let mut scorer = PairScorer::new(series, &measure, w);
    Ok(pairs
        .into_iter()
        .map(|(i, j)| PairScore {
            i,
            j,
            w,
            d: scorer.score(i, j),
            measure: model.measure,
        })
        .collect())
}

/// Generate candidates per length, rank them by `d'` and filter overlaps.
pub fn discover(series: &Series, model: &DissimModel, cfg: &DiscoverConfig, seed: u64) -> Result<Vec<MotifPair>> {
    if cfg.per_w == 0 || cfg.top_k == 0 {
        return Err(Error::invalid("per_w and top_k must be positive"));
    }
    if !(cfg.cover_threshold > 0.0 && cfg.cover_threshold <= 1.0) {
        return Err(Error::invalid("cover threshold must lie in (0, 1]"));
    }
    let grid = length_grid(cfg.w_min, cfg.w_max, cfg.w_step)?;
    if let Some(w) = grid.iter().find(|w| !model.contains(**w)) {
        return Err(Error::invalid(format!("discovery length {w} outside the model range")));
    }
    let scored: Vec<Vec<PairScore>> = grid
        .par_iter()
        .map(|&w| match cfg.mode {
            CandidateMode::Sampled => sampled(series, model, w, cfg.per_w, seed),
            CandidateMode::Exhaustive => exhaustive_lowest(series, model, w, cfg.per_w),
        })
        .collect::<Result<_>>()?;
    let all: Vec<PairScore> = scored.into_iter().flatten().collect();
    let ranked = rank_pairs(&all, model)?;
    Ok(apply_policy(ranked, cfg.policy, cfg.cover_threshold, cfg.top_k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::fixture;
    use crate::sampling::admissible_pairs;
    use crate::series::gen_random_walk;
    use proptest::prelude::*;

    fn ps(i: usize, j: usize, w: usize, d: f64) -> PairScore {
        PairScore { i, j, w, d, measure: MeasureKind::Euc }
    }

    #[test]
    fn uniform_fixture_orders_by_d() {
        let m = fixture(1.0, 1.0, 1.0);
        let r = rank_pairs(&[ps(100, 150, 20, 0.4), ps(1, 30, 10, 0.3)], &m).unwrap();
        assert_eq!(r[0].w, 10);
        assert!((r[0].d_prime - 0.3).abs() < 1e-12);
        assert!((r[1].d_prime - 0.4).abs() < 1e-12);
    }

    #[test]
    fn ties_and_overflow_sort_deterministically() {
        let m = fixture(2.0, 2.0, 1.0);
        let pairs = [ps(200, 300, 40, 5.0), ps(50, 100, 20, 2.0), ps(1, 40, 20, 2.0), ps(9, 30, 15, 0.2)];
        let r = rank_pairs(&pairs, &m).unwrap();
        assert_eq!(r[0].w, 15);
        assert!(r[1..].iter().all(|p| p.d_prime == 1.0));
        assert_eq!(r.iter().map(|p| (p.w, p.i)).collect::<Vec<_>>(), vec![(15, 9), (20, 1), (20, 50), (40, 200)]);
        let mut rev = pairs;
        rev.reverse();
        assert_eq!(rank_pairs(&rev, &m).unwrap(), r);
    }

    #[test]
    fn rank_errors_name_the_pair() {
        let m = fixture(2.0, 2.0, 1.0);
        let e = rank_pairs(&[ps(1, 40, 20, 0.1), ps(1, 600, 500, 0.1)], &m).unwrap_err();
        assert!(e.to_string().contains("pair 1"), "{e}");
        assert!(rank_pairs(&[ps(1, 15, 20, 0.1)], &m).is_err());
        let mut other = ps(1, 40, 20, 0.1);
        other.measure = MeasureKind::Dtw;
        assert!(rank_pairs(&[other], &m).is_err());
    }

    #[test]
    fn cover_policy_drops_shifted_duplicates() {
        let mk = |i, j| MotifPair { i, j, w: 20, d: 0.0, d_prime: 0.0, measure: MeasureKind::Euc };
        let ranked = vec![mk(1, 100), mk(5, 104), mk(101, 3), mk(1, 300), mk(40, 100)];
        let kept = apply_policy(ranked.clone(), OverlapPolicy::Cover, 0.5, 10);
        assert_eq!(kept, vec![mk(1, 100), mk(1, 300), mk(40, 100)]);
        assert_eq!(apply_policy(ranked.clone(), OverlapPolicy::None, 0.5, 10), ranked);
        assert_eq!(apply_policy(ranked, OverlapPolicy::Cover, 0.5, 1).len(), 1);
    }

    #[test]
    fn exhaustive_matches_brute_force() {
        let s = gen_random_walk(200, 6).unwrap();
        let m = fixture(2.0, 5.0, 3.0);
        let mut all: Vec<(f64, usize, usize)> = admissible_pairs(200, 12)
            .unwrap()
            .into_iter()
            .map(|(i, j)| (score_pair(&s, &m, i, j, 12).unwrap(), i, j))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let got = exhaustive_lowest(&s, &m, 12, 25).unwrap();
        let want: Vec<(usize, usize)> = all[..25].iter().map(|t| (t.1, t.2)).collect();
        assert_eq!(got.iter().map(|p| (p.i, p.j)).collect::<Vec<_>>(), want);
    }

    #[test]
    fn discovery_top_one_is_global_minimum() {
        let s = gen_random_walk(1500, 2).unwrap();
        let m = fixture(3.0, 2.0, 4.0);
        let cfg = DiscoverConfig {
            w_min: 20,
            w_max: 40,
            w_step: 10,
            per_w: 300,
            top_k: 1,
            mode: CandidateMode::Sampled,
            policy: OverlapPolicy::None,
            cover_threshold: 0.5,
        };
        let top = discover(&s, &m, &cfg, 4).unwrap();
        let all = discover(&s, &m, &DiscoverConfig { top_k: usize::MAX, ..cfg }, 4).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0], all[0]);
        assert!(all.windows(2).all(|p| rank_order(&p[0], &p[1]) != Ordering::Greater));
        let cover = discover(&s, &m, &DiscoverConfig { top_k: 50, policy: OverlapPolicy::Cover, ..cfg }, 4).unwrap();
        for (a, kept) in cover.iter().enumerate() {
            for p in &cover[a + 1..] {
                assert!(!covers(kept, p, 0.5));
            }
        }
    }

    proptest! {
        #[test]
        fn equal_length_ranking_follows_d(ds in prop::collection::vec(0.0f64..2.0, 1..40)) {
            let m = fixture(2.5, 4.0, 1.5);
            let pairs: Vec<PairScore> = ds.iter().enumerate().map(|(k, &d)| ps(k + 1, k + 100, 30, d)).collect();
            let r = rank_pairs(&pairs, &m).unwrap();
            prop_assert!(r.windows(2).all(|p| p[0].d <= p[1].d));
            for p in &r {
                prop_assert_eq!(p.d_prime, m.dprime(p.w, p.d).unwrap());
            }
        }
    }
}
