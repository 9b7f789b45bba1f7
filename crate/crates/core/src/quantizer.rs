//! Quantizer design for normalized channel power.
//!
//! A quantizer is a vector of `N` increasing nonzero levels. A channel value
//! in `[q_{n-1}, q_n)` is reported as index `n` and reconstructed as the lower
//! boundary `q_{n-1}` (with `q_{-1} = 0`), so the reconstruction never
//! overstates the channel.
//!
//! The SNR-adaptive designers build the levels from the iterated-logarithm
//! ratio sequence `r_i = 1 + ln r_{i-1}`, with
//! `q_n = (prod_{i<=n} r_i - 1) / gamma` and `r_0` pinned by
//! `prod_{i<=N} r_i = kappa * gamma + 1`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::channel::{ChannelDistribution, ChannelError};

#[derive(Debug, Error)]
pub enum QuantizerError {
    #[error("ratio r0 = {0} must exceed 1")]
    InvalidRatio(f64),
    #[error("need at least one quantization level")]
    NoLevels,
    #[error("the consistency-corrected design needs at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("top-of-range constant kappa = {0} must be positive")]
    DegenerateKappa(f64),
    #[error("average SNR {0} must be positive and finite")]
    InvalidGamma(f64),
    #[error("no root of the product equation in the bracket (target {target})")]
    DesignInfeasible { target: f64 },
    #[error("fixed-point sweeps did not converge; last relative residual {residual:e}")]
    NoConvergence { residual: f64 },
    #[error("invalid quantization vector: {0}")]
    InvalidVector(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// `r_0..r_N` with `r_i = 1 + ln r_{i-1}`.
///
/// Stored as excesses `e_i = r_i - 1` so that ratios close to one keep their
/// precision (`e_i = ln_1p(e_{i-1})`).
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSequence {
    excess: Vec<f64>,
}

impl RatioSequence {
    /// Sequence of length `n + 1` starting from `r0`.
    pub fn iterate(r0: f64, n: usize) -> Result<Self, QuantizerError> {
        if !r0.is_finite() || r0 <= 1.0 {
            return Err(QuantizerError::InvalidRatio(r0));
        }
        Ok(Self::from_excess(r0 - 1.0, n))
    }

    fn from_excess(e0: f64, n: usize) -> Self {
        let mut excess = Vec::with_capacity(n + 1);
        excess.push(e0);
        for i in 0..n {
            excess.push(excess[i].ln_1p());
        }
        Self { excess }
    }

    pub fn len(&self) -> usize {
        self.excess.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excess.is_empty()
    }

    pub fn ratio(&self, i: usize) -> f64 {
        1.0 + self.excess[i]
    }

    pub fn excess(&self, i: usize) -> f64 {
        self.excess[i]
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.excess.iter().map(|e| 1.0 + e).collect()
    }

    /// `ln prod_{i<=n} r_i`.
    pub fn log_prefix_product(&self, n: usize) -> f64 {
        self.excess[..=n].iter().map(|e| e.ln_1p()).sum()
    }

    /// `ln prod r_i` over the whole sequence.
    pub fn log_product(&self) -> f64 {
        self.log_prefix_product(self.excess.len() - 1)
    }
}

/// Solves `prod_{i=0}^{n_levels} r_i(r0) = kappa * gamma + 1` for `r0` by bisection.
///
/// The left side is strictly increasing in `r0`, equals 1 in the limit
/// `r0 -> 1` and is at least `r0` itself, so `(1, kappa*gamma + 1]` brackets
/// the root.
pub fn solve_ratios(
    n_levels: usize,
    gamma: f64,
    kappa: f64,
) -> Result<RatioSequence, QuantizerError> {
    check_gamma(gamma)?;
    if n_levels == 0 {
        return Err(QuantizerError::NoLevels);
    }
    if !kappa.is_finite() || kappa <= 0.0 {
        return Err(QuantizerError::DegenerateKappa(kappa));
    }
    let target_excess = kappa * gamma;
    let log_target = target_excess.ln_1p();
    let excess_at = |e0: f64| RatioSequence::from_excess(e0, n_levels);
    let f = |e0: f64| excess_at(e0).log_product() - log_target;

    let (mut lo, mut hi) = (1e-12_f64.min(0.5 * target_excess), target_excess);
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(QuantizerError::DesignInfeasible {
            target: target_excess + 1.0,
        });
    }
    // Bisect down to adjacent floats; ~60 steps for any realistic bracket.
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let e0 = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    Ok(excess_at(e0))
}

fn check_gamma(gamma: f64) -> Result<(), QuantizerError> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(QuantizerError::InvalidGamma(gamma))
    }
}

/// Levels `q_0 < ... < q_{N-1}` plus the SNR they were designed for.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationVector {
    levels: Vec<f64>,
    gamma_design: f64,
    support_max: f64,
}

impl QuantizationVector {
    pub fn new(
        levels: Vec<f64>,
        gamma_design: f64,
        support_max: f64,
    ) -> Result<Self, QuantizerError> {
        if levels.is_empty() {
            return Err(QuantizerError::NoLevels);
        }
        check_gamma(gamma_design)?;
        if support_max.is_nan() || support_max <= 0.0 {
            return Err(QuantizerError::InvalidVector(format!(
                "support_max {support_max}"
            )));
        }
        if !levels.iter().all(|q| q.is_finite()) || levels[0] <= 0.0 {
            return Err(QuantizerError::InvalidVector(
                "levels must be finite and positive".into(),
            ));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QuantizerError::InvalidVector(
                "levels must be strictly increasing".into(),
            ));
        }
        if levels[levels.len() - 1] >= support_max {
            return Err(QuantizerError::InvalidVector(format!(
                "top level {} is not below the support end {}",
                levels[levels.len() - 1],
                support_max
            )));
        }
        Ok(Self {
            levels,
            gamma_design,
            support_max,
        })
    }

    fn from_ratios(
        seq: &RatioSequence,
        n_levels: usize,
        gamma: f64,
        support_max: f64,
    ) -> Result<Self, QuantizerError> {
        let levels = (0..n_levels)
            .map(|n| seq.log_prefix_product(n).exp_m1() / gamma)
            .collect();
        Self::new(levels, gamma, support_max)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn gamma_design(&self) -> f64 {
        self.gamma_design
    }

    pub fn support_max(&self) -> f64 {
        self.support_max
    }

    /// Lower boundary of interval `n` (`q_{n-1}`, with `q_{-1} = 0`).
    pub fn lower_boundary(&self, index: usize) -> f64 {
        if index == 0 {
            0.0
        } else {
            self.levels[index - 1]
        }
    }

    /// Index `n` with `h` in `[q_{n-1}, q_n)` and the reconstruction `q_{n-1}`.
    pub fn quantize(&self, h: f64) -> (usize, f64) {
        let index = self.levels.partition_point(|&q| q <= h);
        (index, self.lower_boundary(index))
    }

    /// Consecutive shifted ratios `(q_n + 1/gamma) / (q_{n-1} + 1/gamma)` for
    /// `n = 0..N-1` at the design SNR.
    pub fn shifted_ratios(&self) -> Vec<f64> {
        let c = 1.0 / self.gamma_design;
        (0..self.levels.len())
            .map(|n| (self.levels[n] + c) / (self.lower_boundary(n) + c))
            .collect()
    }

    /// Same levels, relabelled for a different design SNR.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self, QuantizerError> {
        Self::new(self.levels.clone(), gamma, self.support_max)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VectorJson {
    gamma: f64,
    levels: Vec<f64>,
    support_max: SupportJson,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SupportJson {
    Finite(f64),
    Named(String),
}

impl Serialize for QuantizationVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let support_max = if self.support_max.is_finite() {
            SupportJson::Finite(self.support_max)
        } else {
            SupportJson::Named("inf".into())
        };
        VectorJson {
            gamma: self.gamma_design,
            levels: self.levels.clone(),
            support_max,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for QuantizationVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = VectorJson::deserialize(deserializer)?;
        let support_max = match raw.support_max {
            SupportJson::Finite(v) => v,
            SupportJson::Named(s) if s == "inf" => f64::INFINITY,
            SupportJson::Named(s) => {
                return Err(serde::de::Error::custom(format!(
                    "support_max must be a number or \"inf\", got {s:?}"
                )))
            }
        };
        QuantizationVector::new(raw.levels, raw.gamma, support_max)
            .map_err(serde::de::Error::custom)
    }
}

/// Optimal quantizer for the uniform law on `[0, 2]` (`kappa = 2`).
pub fn design_uniform(n_levels: usize, gamma: f64) -> Result<QuantizationVector, QuantizerError> {
    let seq = solve_ratios(n_levels, gamma, 2.0)?;
    QuantizationVector::from_ratios(&seq, n_levels, gamma, 2.0)
}

/// Consistency constant `kappa*_N`: the support end for bounded laws,
/// otherwise `F^{-1}(1 - 1/N)`.
pub fn kappa_star(n_levels: usize, dist: &ChannelDistribution) -> Result<f64, QuantizerError> {
    if n_levels < 2 {
        return Err(QuantizerError::TooFewLevels(n_levels));
    }
    if dist.has_finite_support() {
        return Ok(dist.support_max());
    }
    Ok(dist.quantile(1.0 - 1.0 / n_levels as f64)?)
}

/// Iterated-logarithm quantizer with the top-of-range constant set to
/// `kappa*_N` (or `kappa_override`).
pub fn design_general(
    n_levels: usize,
    gamma: f64,
    dist: &ChannelDistribution,
    kappa_override: Option<f64>,
) -> Result<QuantizationVector, QuantizerError> {
    if n_levels < 2 {
        return Err(QuantizerError::TooFewLevels(n_levels));
    }
    let kappa = match kappa_override {
        Some(k) => k,
        None => kappa_star(n_levels, dist)?,
    };
    if kappa.is_nan() || kappa <= 0.0 {
        return Err(QuantizerError::DegenerateKappa(kappa));
    }
    let seq = solve_ratios(n_levels, gamma, kappa)?;
    QuantizationVector::from_ratios(&seq, n_levels, gamma, dist.support_max())
}

/// Ratio sequence behind `design_general(n_levels, gamma, dist, None)`.
pub fn general_ratios(
    n_levels: usize,
    gamma: f64,
    dist: &ChannelDistribution,
) -> Result<RatioSequence, QuantizerError> {
    solve_ratios(n_levels, gamma, kappa_star(n_levels, dist)?)
}

/// Equiprobable intervals: `q_n = F^{-1}((n + 1) / (N + 1))`.
pub fn design_max_entropy(
    n_levels: usize,
    gamma: f64,
    dist: &ChannelDistribution,
) -> Result<QuantizationVector, QuantizerError> {
    if n_levels == 0 {
        return Err(QuantizerError::NoLevels);
    }
    let total = (n_levels + 1) as f64;
    let levels = (0..n_levels)
        .map(|n| dist.quantile((n + 1) as f64 / total))
        .collect::<Result<Vec<_>, _>>()?;
    QuantizationVector::new(levels, gamma, dist.support_max())
}

/// Relative residual of the stationarity condition
/// `(q_n + c) ln((q_n + c) / (q_{n-1} + c)) = (F(q_{n+1}) - F(q_n)) / f(q_n)`
/// at every level, with `c = 1 / gamma` and `q_N` the support end.
pub fn optimality_residuals(
    q: &QuantizationVector,
    gamma: f64,
    dist: &ChannelDistribution,
) -> Vec<f64> {
    let c = 1.0 / gamma;
    let levels = q.levels();
    let n = levels.len();
    (0..n)
        .map(|i| {
            let x = levels[i];
            let below = q.lower_boundary(i);
            let above = if i + 1 < n {
                levels[i + 1]
            } else {
                dist.support_max()
            };
            let lhs = (x + c) * ((x + c) / (below + c)).ln();
            let rhs = dist.mass_between(x, above) / dist.pdf(x);
            ((lhs - rhs) / rhs).abs()
        })
        .collect()
}

const MAX_SWEEPS: usize = 10_000;
const LEVEL_TOL: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-9;

/// Minimizes the expected log-ratio loss directly by Gauss–Seidel sweeps over
/// the stationarity condition, starting from the consistency-corrected design.
///
/// Each level only couples to its two neighbours, so every sweep solves a
/// scalar equation per level inside `(q_{n-1}, q_{n+1})`.
pub fn design_fixed_point(
    n_levels: usize,
    gamma: f64,
    dist: &ChannelDistribution,
) -> Result<QuantizationVector, QuantizerError> {
    check_gamma(gamma)?;
    let start = if n_levels >= 2 {
        design_general(n_levels, gamma, dist, None)?
    } else {
        design_max_entropy(n_levels, gamma, dist)?
    };
    let mut levels = start.levels().to_vec();
    let c = 1.0 / gamma;
    let top = dist.support_max();

    let mut last_residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for i in 0..n_levels {
            let below = if i == 0 { 0.0 } else { levels[i - 1] };
            let above = if i + 1 < n_levels { levels[i + 1] } else { top };
            let next = solve_level(below, above, levels[i], c, dist);
            max_change = max_change.max(((next - levels[i]) / levels[i]).abs());
            levels[i] = next;
        }
        if max_change < LEVEL_TOL {
            let candidate = QuantizationVector::new(levels.clone(), gamma, top)?;
            last_residual = optimality_residuals(&candidate, gamma, dist)
                .into_iter()
                .fold(0.0, f64::max);
            if last_residual < RESIDUAL_TOL {
                return Ok(candidate);
            }
        }
    }
    if !last_residual.is_finite() {
        if let Ok(candidate) = QuantizationVector::new(levels, gamma, top) {
            last_residual = optimality_residuals(&candidate, gamma, dist)
                .into_iter()
                .fold(0.0, f64::max);
        }
    }
    Err(QuantizerError::NoConvergence {
        residual: last_residual,
    })
}

/// Root of `g(x) = (x + c) ln((x + c)/(below + c)) f(x) - (F(above) - F(x))`
/// on `(below, above)`. `g(below) < 0` and `g` turns positive before `above`.
fn solve_level(below: f64, above: f64, guess: f64, c: f64, dist: &ChannelDistribution) -> f64 {
    let g = |x: f64| {
        let log_ratio = ((x + c) / (below + c)).ln();
        (x + c) * log_ratio * dist.pdf(x) - dist.mass_between(x, above)
    };
    let dg = |x: f64| {
        let log_ratio = ((x + c) / (below + c)).ln();
        let f = dist.pdf(x);
        f * (log_ratio + 2.0) + (x + c) * log_ratio * dist.pdf_derivative(x)
    };

    let mut lo = below;
    let mut hi = if above.is_finite() {
        above
    } else {
        let mut h = guess.max(below + 1.0);
        while g(h) <= 0.0 && h < 1e6 {
            h *= 2.0;
        }
        h
    };
    let mut x = if guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..200 {
        let gx = g(x);
        if gx == 0.0 {
            return x;
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = dg(x);
        let newton = x - gx / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || hi - lo <= 4.0 * f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}
