//! Univariate series: loading, generation and z-normalization.
//!
//! Segment starts are 1-based throughout the crate, so a segment `(i, w)`
//! covers samples `i..=i + w - 1`.

use std::fmt::Write as _;
use std::path::Path;

use rand::RngExt;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed;

/// An immutable sequence of finite samples with a provenance label.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    values: Vec<f64>,
    source: String,
}

impl Series {
    pub fn new(values: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("series must contain at least one value"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at index {}",
                pos + 1
            )));
        }
        Ok(Self {
            values,
            source: source.into(),
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

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Raw samples of `seg`.
    pub fn segment(&self, seg: Segment) -> &[f64] {
        &self.values[seg.start - 1..seg.start - 1 + seg.len]
    }

    /// One value per line, shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 20);
        for v in &self.values {
            writeln!(out, "{v}").unwrap();
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Start (1-based) and length of a contiguous window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

impl Segment {
    pub fn new(start: usize, len: usize, series_len: usize) -> Result<Self> {
        if start == 0 || len == 0 || start + len - 1 > series_len {
            return Err(Error::invalid(format!(
                "segment (start {start}, length {len}) does not fit a series of length {series_len}"
            )));
        }
        Ok(Self { start, len })
    }

    pub fn end(&self) -> usize {
        self.start + self.len - 1
    }

    /// Number of shared samples.
    pub fn overlap(&self, other: &Segment) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end().min(other.end());
        if hi >= lo {
            hi - lo + 1
        } else {
            0
        }
    }
}

fn split_fields(line: &str, delimiter: Option<char>) -> Vec<&str> {
    match delimiter {
        Some(c) if c.is_whitespace() => line.split_whitespace().collect(),
        Some(c) => line.split(c).map(str::trim).collect(),
        None if line.contains(',') => line.split(',').map(str::trim).collect(),
        None if line.contains(';') => line.split(';').map(str::trim).collect(),
        None => line.split_whitespace().collect(),
    }
}

/// Parse delimited text. Leading lines whose selected field is not numeric
/// are treated as headers; once a numeric row was seen every further
/// non-blank row must parse.
pub fn parse_series(
    text: &str,
    column: Option<usize>,
    delimiter: Option<char>,
    origin: &str,
) -> Result<Series> {
    let column = column.unwrap_or(0);
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = split_fields(line, delimiter);
        let field = fields.get(column).copied();
        let parsed = field.and_then(|f| f.parse::<f64>().ok());
        match parsed {
            Some(v) if v.is_finite() => values.push(v),
            Some(_) => {
                return Err(Error::Parse {
                    origin: origin.to_string(),
                    row,
                    msg: format!("non-finite value {:?}", field.unwrap_or("")),
                })
            }
            None if values.is_empty() => continue,
            None => {
                return Err(Error::Parse {
                    origin: origin.to_string(),
                    row,
                    msg: match field {
                        Some(f) => format!("cannot parse {f:?} as a number"),
                        None => format!("missing column {column}"),
                    },
                })
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Parse {
            origin: origin.to_string(),
            row: 0,
            msg: "no numeric rows".into(),
        });
    }
    Series::new(values, origin)
}

pub fn load_series(
    path: impl AsRef<Path>,
    column: Option<usize>,
    delimiter: Option<char>,
) -> Result<Series> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let origin = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_series(&text, column, delimiter, &origin)
}

/// Gaussian random walk starting at 0 with unit-variance increments.
pub fn gen_random_walk(n: usize, seed: u64) -> Result<Series> {
    if n == 0 {
        return Err(Error::invalid("random walk length must be positive"));
    }
    let mut rng = seed::rng(seed);
    let mut values = Vec::with_capacity(n);
    let mut z = 0.0;
    values.push(z);
    for _ in 1..n {
        let eta: f64 = rng.sample(StandardNormal);
        z += eta;
        values.push(z);
    }
    Series::new(values, format!("random-walk(n={n},seed={seed})"))
}

/// Regime-switching series: alternating blocks of a unit-innovation AR(1)
/// process with coefficient `phi` and of standard white noise, starting
/// with an AR block. The AR state carries over between its blocks.
pub fn gen_regime_switching(n: usize, block: usize, phi: f64, seed: u64) -> Result<Series> {
    if n == 0 || block == 0 {
        return Err(Error::invalid("length and block size must be positive"));
    }
    if !(phi.abs() < 1.0) {
        return Err(Error::invalid("AR coefficient must lie in (-1, 1)"));
    }
    let mut rng = seed::rng(seed);
    let mut values = Vec::with_capacity(n);
    let mut ar = 0.0;
    for t in 0..n {
        let eta: f64 = rng.sample(StandardNormal);
        if (t / block).is_multiple_of(2) {
            ar = phi * ar + eta;
            values.push(ar);
        } else {
            values.push(eta);
        }
    }
    Series::new(
        values,
        format!("regime-switching(n={n},block={block},phi={phi},seed={seed})"),
    )
}

/// Z-normalize into `out` (population standard deviation). Constant input
/// maps to zeros.
pub fn znorm_into(x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() || sd <= f64::EPSILON * mean.abs() {
        out.resize(x.len(), 0.0);
    } else {
        out.extend(x.iter().map(|v| (v - mean) / sd));
    }
}

pub fn znorm(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::invalid("z-normalization needs at least 2 values"));
    }
    let mut out = Vec::with_capacity(x.len());
    znorm_into(x, &mut out);
    Ok(out)
}
