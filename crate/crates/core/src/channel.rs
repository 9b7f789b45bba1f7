//! Normalized channel-power laws.
//!
//! Every law here describes `h = |g|^2 / E[|g|^2]`, so the mean is one.
//! The built-in laws are the uniform law on `[0, 2]` and the unit-mean
//! exponential (Rayleigh fading on the power). User-supplied laws come in as
//! a tabulated pdf and are held as a monotone piecewise-linear cdf.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("quantile at p = {0} is unbounded for a law with infinite support")]
    InfiniteQuantile(f64),
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid tabulated law: {0}")]
    InvalidTable(String),
    #[error("failed to read tabulated law: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistributionKind {
    UniformPower,
    RayleighPower,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq)]
enum Law {
    Uniform,
    Rayleigh,
    Tabulated(Table),
}

/// Grid with cdf values at the knots; the pdf is the slope on each segment.
#[derive(Debug, Clone, PartialEq)]
struct Table {
    h: Vec<f64>,
    cdf: Vec<f64>,
    slope: Vec<f64>,
}

impl Table {
    fn segment(&self, h: f64) -> Option<usize> {
        if h < self.h[0] || h >= self.h[self.h.len() - 1] {
            return None;
        }
        Some(self.h.partition_point(|&x| x <= h) - 1)
    }
}

/// A unit-mean channel-power distribution. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDistribution {
    law: Law,
}

impl ChannelDistribution {
    /// Uniform power on `[0, 2]`.
    pub fn uniform() -> Self {
        Self { law: Law::Uniform }
    }

    /// Unit-mean exponential power, `f(h) = e^{-h}`.
    pub fn rayleigh() -> Self {
        Self { law: Law::Rayleigh }
    }

    /// Builds a law from `(h, pdf)` samples.
    ///
    /// The pdf is integrated with the trapezoid rule into a cdf at the knots and
    /// normalized to total mass one. The `h` axis is then rescaled so the mean of
    /// the piecewise-linear-cdf law is exactly one, which is what "normalized
    /// power" means; the shape of the law is preserved.
    pub fn tabulated(h: &[f64], pdf: &[f64]) -> Result<Self, ChannelError> {
        if h.len() != pdf.len() {
            return Err(ChannelError::InvalidTable(format!(
                "{} abscissae but {} pdf values",
                h.len(),
                pdf.len()
            )));
        }
        if h.len() < 2 {
            return Err(ChannelError::InvalidTable("need at least two rows".into()));
        }
        if h.iter().chain(pdf).any(|v| !v.is_finite()) {
            return Err(ChannelError::InvalidTable("non-finite entry".into()));
        }
        if h[0] < 0.0 {
            return Err(ChannelError::InvalidTable("h must be nonnegative".into()));
        }
        if h.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ChannelError::InvalidTable(
                "h must be strictly increasing".into(),
            ));
        }
        if pdf.iter().any(|&p| p < 0.0) {
            return Err(ChannelError::InvalidTable("pdf must be nonnegative".into()));
        }

        let mut cdf = Vec::with_capacity(h.len());
        cdf.push(0.0);
        for j in 1..h.len() {
            let mass = 0.5 * (pdf[j - 1] + pdf[j]) * (h[j] - h[j - 1]);
            cdf.push(cdf[j - 1] + mass);
        }
        let total = cdf[cdf.len() - 1];
        if total <= 0.0 {
            return Err(ChannelError::InvalidTable("pdf integrates to zero".into()));
        }
        for c in cdf.iter_mut() {
            *c /= total;
        }
        let last = cdf.len() - 1;
        cdf[last] = 1.0;

        let mean: f64 = (1..h.len())
            .map(|j| (cdf[j] - cdf[j - 1]) * 0.5 * (h[j] + h[j - 1]))
            .sum();
        if mean <= 0.0 {
            return Err(ChannelError::InvalidTable("law has zero mean".into()));
        }
        let h: Vec<f64> = h.iter().map(|x| x / mean).collect();
        let slope = (1..h.len())
            .map(|j| (cdf[j] - cdf[j - 1]) / (h[j] - h[j - 1]))
            .collect();
        Ok(Self {
            law: Law::Tabulated(Table { h, cdf, slope }),
        })
    }

    /// Reads a two-column `h,pdf` CSV with a header row.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, ChannelError> {
        let reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        Self::from_csv_reader(reader)
    }

    pub fn from_csv_str(text: &str) -> Result<Self, ChannelError> {
        let reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        Self::from_csv_reader(reader)
    }

    fn from_csv_reader<R: std::io::Read>(mut reader: csv::Reader<R>) -> Result<Self, ChannelError> {
        let headers = reader.headers()?.clone();
        if headers.len() != 2 {
            return Err(ChannelError::InvalidTable(format!(
                "expected 2 columns, found {}",
                headers.len()
            )));
        }
        if headers.iter().all(|f| f.parse::<f64>().is_ok()) {
            return Err(ChannelError::InvalidTable("header row required".into()));
        }
        let mut h = Vec::new();
        let mut pdf = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |i: usize| -> Result<f64, ChannelError> {
                record
                    .get(i)
                    .and_then(|f| f.parse::<f64>().ok())
                    .ok_or_else(|| {
                        ChannelError::InvalidTable(format!("bad number on data row {}", line + 1))
                    })
            };
            h.push(parse(0)?);
            pdf.push(parse(1)?);
        }
        Self::tabulated(&h, &pdf)
    }

    pub fn kind(&self) -> DistributionKind {
        match self.law {
            Law::Uniform => DistributionKind::UniformPower,
            Law::Rayleigh => DistributionKind::RayleighPower,
            Law::Tabulated(_) => DistributionKind::Tabulated,
        }
    }

    /// `inf { h >= 0 : F(h) = 1 }`; `f64::INFINITY` for unbounded laws.
    pub fn support_max(&self) -> f64 {
        match &self.law {
            Law::Uniform => 2.0,
            Law::Rayleigh => f64::INFINITY,
            Law::Tabulated(t) => t.h[t.cdf.partition_point(|&c| c < 1.0)],
        }
    }

    pub fn has_finite_support(&self) -> bool {
        self.support_max().is_finite()
    }

    pub fn pdf(&self, h: f64) -> f64 {
        if h < 0.0 {
            return 0.0;
        }
        match &self.law {
            Law::Uniform => {
                if h <= 2.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Law::Rayleigh => (-h).exp(),
            Law::Tabulated(t) => t.segment(h).map_or(0.0, |j| t.slope[j]),
        }
    }

    /// Derivative of the pdf where it exists (zero on piecewise-constant pieces).
    pub fn pdf_derivative(&self, h: f64) -> f64 {
        match &self.law {
            Law::Rayleigh if h >= 0.0 => -(-h).exp(),
            _ => 0.0,
        }
    }

    /// Points strictly inside `(lo, hi)` where the pdf is not smooth.
    pub fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        match &self.law {
            Law::Tabulated(t) => t.h.iter().copied().filter(|&x| x > lo && x < hi).collect(),
            _ => Vec::new(),
        }
    }

    /// Upper bound of the pdf over the support.
    pub fn pdf_max(&self) -> f64 {
        match &self.law {
            Law::Uniform => 0.5,
            Law::Rayleigh => 1.0,
            Law::Tabulated(t) => t.slope.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn cdf(&self, h: f64) -> f64 {
        if h <= 0.0 {
            return 0.0;
        }
        match &self.law {
            Law::Uniform => (h / 2.0).min(1.0),
            Law::Rayleigh => -(-h).exp_m1(),
            Law::Tabulated(t) => {
                if h <= t.h[0] {
                    0.0
                } else if h >= t.h[t.h.len() - 1] {
                    1.0
                } else {
                    let j = t.h.partition_point(|&x| x <= h) - 1;
                    (t.cdf[j] + t.slope[j] * (h - t.h[j])).min(1.0)
                }
            }
        }
    }

    /// `1 - F(h)`, evaluated without cancellation for the exponential tail.
    pub fn survival(&self, h: f64) -> f64 {
        match &self.law {
            Law::Rayleigh => {
                if h <= 0.0 {
                    1.0
                } else {
                    (-h).exp()
                }
            }
            _ => 1.0 - self.cdf(h),
        }
    }

    /// `F(hi) - F(lo)` for `lo <= hi`; `hi` may be infinite.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        match &self.law {
            Law::Rayleigh => self.survival(lo) - self.survival(hi),
            _ => self.cdf(hi) - self.cdf(lo),
        }
    }

    /// Stop-loss transform `E[(H - t)^+]`.
    pub fn stop_loss(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match &self.law {
            Law::Uniform => {
                if t >= 2.0 {
                    0.0
                } else {
                    (2.0 - t) * (2.0 - t) / 4.0
                }
            }
            Law::Rayleigh => (-t).exp(),
            Law::Tabulated(tab) => {
                // E[(H-t)^+] = integral of the survival function over [t, inf).
                let mut acc = 0.0;
                for j in 0..tab.slope.len() {
                    let (a, b) = (tab.h[j].max(t), tab.h[j + 1]);
                    if b <= a {
                        continue;
                    }
                    let (sa, sb) = (1.0 - self.cdf(a), 1.0 - self.cdf(b));
                    acc += 0.5 * (sa + sb) * (b - a);
                }
                acc
            }
        }
    }

    /// Smallest `h` with `F(h) >= p`.
    pub fn quantile(&self, p: f64) -> Result<f64, ChannelError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ChannelError::InvalidProbability(p));
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        match &self.law {
            Law::Uniform => Ok(2.0 * p),
            Law::Rayleigh => {
                if p >= 1.0 {
                    Err(ChannelError::InfiniteQuantile(p))
                } else {
                    Ok(-(-p).ln_1p())
                }
            }
            Law::Tabulated(t) => {
                let k = t.cdf.partition_point(|&c| c < p);
                let j = k - 1;
                Ok(t.h[j] + (p - t.cdf[j]) / t.slope[j])
            }
        }
    }

    /// One inverse-cdf draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match &self.law {
            Law::Uniform => 2.0 * u,
            Law::Rayleigh => -(-u).ln_1p(),
            // u < 1, so the quantile exists.
            Law::Tabulated(_) => self.quantile(u).unwrap_or(0.0),
        }
    }

    /// `count` i.i.d. draws from the given stream.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.draw(rng)).collect()
    }

    pub fn name(&self) -> &'static str {
        match self.law {
            Law::Uniform => "uniform",
            Law::Rayleigh => "rayleigh",
            Law::Tabulated(_) => "tabulated",
        }
    }
}
