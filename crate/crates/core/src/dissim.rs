//! Length-normalized dissimilarities between two equal-length segments.
//!
//! All measures assume z-normalized input. The elastic measures (DTW, EDR,
//! TWED) choose the alignment with the lowest accumulated cost, breaking
//! exact cost ties toward the shorter alignment, and report the accumulated
//! cost divided by the number of alignment steps.
//!
//! EDR here uses gap-reference ("real penalty") semantics: a gap costs the
//! distance of the unmatched sample to a fixed reference value. MDL is a
//! description-length surrogate: quantized residual bit counts per sample.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Euc,
    SqEuc,
    Corr,
    Cos,
    Dtw,
    Edr,
    Twed,
    Mdl,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 8] = [
        MeasureKind::Euc,
        MeasureKind::SqEuc,
        MeasureKind::Corr,
        MeasureKind::Cos,
        MeasureKind::Dtw,
        MeasureKind::Edr,
        MeasureKind::Twed,
        MeasureKind::Mdl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Euc => "euc",
            MeasureKind::SqEuc => "sqeuc",
            MeasureKind::Corr => "corr",
            MeasureKind::Cos => "cos",
            MeasureKind::Dtw => "dtw",
            MeasureKind::Edr => "edr",
            MeasureKind::Twed => "twed",
            MeasureKind::Mdl => "mdl",
        }
    }

    /// Stable small integer used when deriving per-job seeds.
    pub fn tag(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        MeasureKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::invalid(format!("unknown measure {s:?}")))
    }
}

/// Tunable settings of the measures that have any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureParams {
    /// Sakoe-Chiba half-width as a fraction of the segment length.
    pub dtw_band: f64,
    pub twed_nu: f64,
    pub twed_lambda: f64,
    /// Gap reference value for EDR.
    pub edr_gap: f64,
    pub mdl_bits: u32,
    /// Quantization covers `[-mdl_range, mdl_range]`.
    pub mdl_range: f64,
    pub mdl_offset: f64,
}

impl Default for MeasureParams {
    fn default() -> Self {
        Self {
            dtw_band: 0.05,
            twed_nu: 0.001,
            twed_lambda: 1.0,
            edr_gap: 0.0,
            mdl_bits: 6,
            mdl_range: 3.0,
            mdl_offset: 0.0,
        }
    }
}

impl MeasureParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dtw_band > 0.0 && self.dtw_band <= 1.0) {
            return Err(Error::invalid("DTW band fraction must lie in (0, 1]"));
        }
        if !(self.twed_nu > 0.0) || !(self.twed_lambda >= 0.0) {
            return Err(Error::invalid("TWED needs nu > 0 and lambda >= 0"));
        }
        if !(2..=16).contains(&self.mdl_bits) {
            return Err(Error::invalid("MDL bit depth must lie in [2, 16]"));
        }
        if !(self.mdl_range > 0.0) || !self.mdl_offset.is_finite() || !self.edr_gap.is_finite() {
            return Err(Error::invalid("MDL range must be positive, offsets finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub kind: MeasureKind,
    pub params: MeasureParams,
}

/// One evaluated dissimilarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissim {
    pub value: f64,
    pub kind: MeasureKind,
    pub w: usize,
}

impl Measure {
    pub fn new(kind: MeasureKind) -> Self {
        Self {
            kind,
            params: MeasureParams::default(),
        }
    }

    pub fn with_params(kind: MeasureKind, params: MeasureParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { kind, params })
    }

    /// Checked evaluation.
    pub fn dissim(&self, a: &[f64], b: &[f64]) -> Result<Dissim> {
        if a.len() != b.len() {
            return Err(Error::invalid(format!(
                "segment lengths differ ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        if a.len() < 2 {
            return Err(Error::invalid("segments need at least 2 samples"));
        }
        if a.iter().chain(b).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite sample in segment"));
        }
        self.params.validate()?;
        Ok(Dissim {
            value: self.eval(a, b),
            kind: self.kind,
            w: a.len(),
        })
    }

    /// Unchecked evaluation for pre-validated, equal-length input.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let p = &self.params;
        match self.kind {
            MeasureKind::Euc => sq_euclidean(a, b).sqrt() / (a.len() as f64).sqrt(),
            MeasureKind::SqEuc => sq_euclidean(a, b) / a.len() as f64,
            MeasureKind::Corr => correlation_dissim(a, b),
            MeasureKind::Cos => cosine_dissim(a, b),
            MeasureKind::Dtw => dtw(a, b, band_radius(a.len(), p.dtw_band)),
            MeasureKind::Edr => edr(a, b, p.edr_gap),
            MeasureKind::Twed => twed(a, b, p.twed_nu, p.twed_lambda),
            MeasureKind::Mdl => mdl(a, b, p.mdl_bits, p.mdl_range) + p.mdl_offset,
        }
    }
}

/// Half-width `ceil(fraction * w)` of the warping corridor.
pub fn band_radius(w: usize, fraction: f64) -> usize {
    ((fraction * w as f64).ceil() as usize).min(w)
}

fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn correlation_dissim(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 1.0;
    }
    (1.0 - sab / (saa * sbb).sqrt()).clamp(0.0, 2.0)
}

fn cosine_dissim(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 1.0;
    }
    (1.0 - ab / (aa * bb).sqrt()).clamp(0.0, 2.0)
}

/// Relative cost difference below which two alignments count as tied.
pub const COST_TIE_REL: f64 = 1e-12;

/// Accumulated cost and step count of a partial alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Acc {
    cost: f64,
    steps: u32,
}

impl Acc {
    const INF: Acc = Acc {
        cost: f64::INFINITY,
        steps: u32::MAX,
    };

    fn then(self, c: f64) -> Acc {
        Acc {
            cost: self.cost + c,
            steps: self.steps.saturating_add(1),
        }
    }

    /// Lower cost wins; costs equal up to rounding go to the shorter path.
    /// Gap-reference edits make such ties structural (a match across the
    /// reference costs exactly what the two gaps cost), so an exact
    /// comparison would let rounding pick the path length.
    fn better(self, other: Acc) -> Acc {
        if !other.cost.is_finite() {
            return self;
        }
        if !self.cost.is_finite() {
            return other;
        }
        let tol = COST_TIE_REL * self.cost.abs().max(other.cost.abs());
        let tied = (other.cost - self.cost).abs() <= tol;
        let wins = if tied {
            other.steps < self.steps || (other.steps == self.steps && other.cost < self.cost)
        } else {
            other.cost < self.cost
        };
        if wins {
            other
        } else {
            self
        }
    }

    fn normalized(self) -> f64 {
        self.cost / self.steps as f64
    }
}

/// Banded DTW with steps {(1,0), (0,1), (1,1)} and absolute cell cost.
pub fn dtw(a: &[f64], b: &[f64], radius: usize) -> f64 {
    let w = a.len();
    let mut prev = vec![Acc::INF; w];
    let mut cur = vec![Acc::INF; w];
    for i in 0..w {
        cur.iter_mut().for_each(|c| *c = Acc::INF);
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(w - 1);
        for j in lo..=hi {
            let c = (a[i] - b[j]).abs();
            cur[j] = if i == 0 && j == 0 {
                Acc { cost: c, steps: 1 }
            } else {
                let mut best = Acc::INF;
                if i > 0 {
                    best = best.better(prev[j]);
                    if j > 0 {
                        best = best.better(prev[j - 1]);
                    }
                }
                if j > 0 {
                    best = best.better(cur[j - 1]);
                }
                best.then(c)
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[w - 1].normalized()
}

/// Edit distance with a real-valued gap penalty `|x - gap|`.
pub fn edr(a: &[f64], b: &[f64], gap: f64) -> f64 {
    let w = a.len();
    let mut prev: Vec<Acc> = Vec::with_capacity(w + 1);
    prev.push(Acc { cost: 0.0, steps: 0 });
    for j in 1..=w {
        let p = prev[j - 1];
        prev.push(p.then((b[j - 1] - gap).abs()));
    }
    let mut cur = vec![Acc::INF; w + 1];
    for i in 1..=w {
        let ga = (a[i - 1] - gap).abs();
        cur[0] = prev[0].then(ga);
        for j in 1..=w {
            let matched = prev[j - 1].then((a[i - 1] - b[j - 1]).abs());
            let gap_a = prev[j].then(ga);
            let gap_b = cur[j - 1].then((b[j - 1] - gap).abs());
            cur[j] = matched.better(gap_a).better(gap_b);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[w].normalized()
}

/// Time-warped edit distance with unit time stamps.
pub fn twed(a: &[f64], b: &[f64], nu: f64, lambda: f64) -> f64 {
    let w = a.len();
    // index 0 is the conventional zero-valued sample at time 0
    let at = |i: usize| if i == 0 { 0.0 } else { a[i - 1] };
    let bt = |j: usize| if j == 0 { 0.0 } else { b[j - 1] };
    let mut prev = vec![Acc::INF; w + 1];
    prev[0] = Acc { cost: 0.0, steps: 0 };
    let mut cur = vec![Acc::INF; w + 1];
    for i in 1..=w {
        cur[0] = Acc::INF;
        let del_a = ((at(i) - at(i - 1)).abs() + nu) + lambda;
        for j in 1..=w {
            let del_b = ((bt(j) - bt(j - 1)).abs() + nu) + lambda;
            let skew = (i as f64 - j as f64).abs();
            let matched = ((at(i) - bt(j)).abs() + (at(i - 1) - bt(j - 1)).abs()) + nu * (skew + skew);
            let m = prev[j - 1].then(matched);
            let da = prev[j].then(del_a);
            let db = cur[j - 1].then(del_b);
            cur[j] = m.better(da).better(db);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[w].normalized()
}

/// Quantization level of `x` among `2^bits` uniform levels on `[-range, range]`.
pub fn quantize(x: f64, bits: u32, range: f64) -> u32 {
    let levels = (1u32 << bits) - 1;
    let unit = (x.clamp(-range, range) + range) / (2.0 * range);
    (unit * levels as f64).round() as u32
}

fn bit_length(v: u32) -> u32 {
    32 - v.leading_zeros()
}

/// Mean residual bit cost per sample, before any offset.
pub fn mdl(a: &[f64], b: &[f64], bits: u32, range: f64) -> f64 {
    let total: u32 = a
        .iter()
        .zip(b)
        .map(|(x, y)| bit_length(quantize(*x, bits, range).abs_diff(quantize(*y, bits, range))))
        .sum();
    total as f64 / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::znorm;
    use proptest::prelude::*;

    fn all_measures() -> Vec<Measure> {
        MeasureKind::ALL.into_iter().map(Measure::new).collect()
    }

    #[test]
    fn names_round_trip_case_insensitively() {
        for k in MeasureKind::ALL {
            assert_eq!(k.name().to_uppercase().parse::<MeasureKind>().unwrap(), k);
        }
        assert!("manhattan".parse::<MeasureKind>().is_err());
    }

    #[test]
    fn closed_forms_on_reversed_ramp() {
        let a = znorm(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = znorm(&[4.0, 3.0, 2.0, 1.0]).unwrap();
        let d = |k| Measure::new(k).dissim(&a, &b).unwrap().value;
        assert!((d(MeasureKind::Euc) - 2.0).abs() < 1e-9);
        assert!((d(MeasureKind::SqEuc) - 4.0).abs() < 1e-9);
        assert!((d(MeasureKind::Corr) - 2.0).abs() < 1e-9);
        assert!((d(MeasureKind::Cos) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn identity_is_zero() {
        let a = znorm(&[0.3, -1.0, 2.0, 0.5, 0.1, -0.7]).unwrap();
        for m in all_measures() {
            let d = m.dissim(&a, &a).unwrap().value;
            assert!(d.abs() < 1e-12, "{} gives {d}", m.kind);
        }
        let mut m = Measure::new(MeasureKind::Mdl);
        m.params.mdl_offset = 0.25;
        assert_eq!(m.dissim(&a, &a).unwrap().value, 0.25);
    }

    #[test]
    fn zero_operand_cosine_is_one() {
        let z = [0.0; 4];
        let a = znorm(&[1.0, 2.0, 3.0, 5.0]).unwrap();
        assert_eq!(Measure::new(MeasureKind::Cos).eval(&z, &a), 1.0);
        assert_eq!(Measure::new(MeasureKind::Corr).eval(&z, &a), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        let m = Measure::new(MeasureKind::Euc);
        assert!(m.dissim(&[0.0, 1.0], &[0.0, 1.0, 2.0]).is_err());
        assert!(m.dissim(&[0.0], &[0.0]).is_err());
        assert!(m.dissim(&[0.0, f64::NAN], &[0.0, 1.0]).is_err());
        let p = MeasureParams { mdl_bits: 1, ..Default::default() };
        assert!(Measure::with_params(MeasureKind::Mdl, p).is_err());
        let p = MeasureParams { dtw_band: 0.0, ..Default::default() };
        assert!(Measure::with_params(MeasureKind::Dtw, p).is_err());
    }

    #[test]
    fn band_radius_rounds_up() {
        assert_eq!(band_radius(4, 0.05), 1);
        assert_eq!(band_radius(20, 0.05), 1);
        assert_eq!(band_radius(21, 0.05), 2);
        assert_eq!(band_radius(100, 0.05), 5);
    }

    #[test]
    fn dtw_shifted_ramp() {
        let a = znorm(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let b: Vec<f64> = a.iter().map(|v| v + a[1] - a[0]).collect();
        // shifting by one step: warping absorbs the offset at the ends only
        let d = dtw(&a, &b, 1);
        let diag = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 4.0;
        assert!(d > 0.0 && d <= diag + 1e-15);
    }

    #[test]
    fn mdl_quantization() {
        assert_eq!(quantize(-3.0, 6, 3.0), 0);
        assert_eq!(quantize(3.0, 6, 3.0), 63);
        assert_eq!(quantize(10.0, 6, 3.0), 63);
        assert_eq!(bit_length(0), 0);
        assert_eq!(bit_length(1), 1);
        assert_eq!(bit_length(4), 3);
        // 63 level difference costs 6 bits per sample
        assert_eq!(mdl(&[-3.0, -3.0], &[3.0, 3.0], 6, 3.0), 6.0);
    }

    proptest! {
        #[test]
        fn all_measures_symmetric(
            raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40)
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = raw.into_iter().unzip();
            let a = znorm(&x).unwrap();
            let b = znorm(&y).unwrap();
            for m in all_measures() {
                let ab = m.eval(&a, &b);
                let ba = m.eval(&b, &a);
                prop_assert!(ab >= 0.0 && ab.is_finite());
                prop_assert!((ab - ba).abs() <= 1e-9, "{} {ab} {ba}", m.kind);
            }
        }

        #[test]
        fn dtw_bounded_by_diagonal(
            raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..60)
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = raw.into_iter().unzip();
            let a = znorm(&x).unwrap();
            let b = znorm(&y).unwrap();
            let w = a.len();
            let banded = dtw(&a, &b, band_radius(w, 0.05));
            let diag = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>() / w as f64;
            prop_assert!(banded >= 0.0);
            prop_assert!(banded <= diag + 1e-12);
        }
    }
}
