//! Quantization loss: the per-link log-ratio loss `delta(q)`, its weighted
//! and relaxed bounds, and the end-to-end Monte Carlo sum-rate loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc::{
    solve_realization, AllocError, ChannelRealization, Csi, LinkQuantizer, NetworkConfig,
};
use crate::channel::{ChannelDistribution, ChannelError};
use crate::quadrature::{integrate, QuadOptions, QuadratureError};
use crate::quantizer::QuantizationVector;
use crate::rng::RngStreams;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("quadrature failed: {0}")]
    QuadratureFailure(#[from] QuadratureError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Probability left beyond the truncation point of unbounded laws.
const TAIL_PROBABILITY: f64 = 1e-10;

fn quad_options() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-11,
        rel_tol: 1e-13,
        max_subintervals: 1000,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub delta_q: f64,
    /// `I_{-1}, ..., I_{N-1}`: the loss collected on each quantization interval.
    pub interval_terms: Vec<f64>,
    /// `1 - F(q_{N-1})`.
    pub tail_mass: f64,
    /// Quadrature error estimate plus the truncation bound.
    pub abs_error: f64,
}

/// `E[ln((h + 1/gamma) / (q[h] + 1/gamma))]` under `dist`.
pub fn delta_q(
    q: &QuantizationVector,
    gamma: f64,
    dist: &ChannelDistribution,
) -> Result<LossBreakdown, LossError> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(LossError::InvalidInput(format!("gamma {gamma}")));
    }
    let c = 1.0 / gamma;
    let levels = q.levels();
    let top = dist.support_max();
    let opts = quad_options();
    let mut interval_terms = Vec::with_capacity(levels.len() + 1);
    let mut abs_error = 0.0;

    for n in 0..=levels.len() {
        let lo = q.lower_boundary(n);
        let hi = if n < levels.len() {
            levels[n].min(top)
        } else {
            top
        };
        if hi <= lo {
            interval_terms.push(0.0);
            continue;
        }
        let integrand = |h: f64| ((h - lo) / (lo + c)).ln_1p() * dist.pdf(h);
        let (value, err) = if hi.is_finite() {
            piecewise(&integrand, lo, hi, dist, &opts)?
        } else {
            // Integrate to the truncation point; beyond it the log factor is
            // split into its value at T plus ln((h+c)/(T+c)) <= (h-T)/(T+c).
            let t = dist.quantile(1.0 - TAIL_PROBABILITY)?.max(lo);
            let (v, e) = piecewise(&integrand, lo, t, dist, &opts)?;
            let at_t = dist.survival(t) * ((t - lo) / (lo + c)).ln_1p();
            (v + at_t, e + dist.stop_loss(t) / (t + c))
        };
        interval_terms.push(value.max(0.0));
        abs_error += err;
    }
    Ok(LossBreakdown {
        delta_q: interval_terms.iter().sum(),
        tail_mass: dist.survival(levels[levels.len() - 1]),
        interval_terms,
        abs_error,
    })
}

/// Integrates across the pdf's kinks one smooth piece at a time.
fn piecewise(
    f: &impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    dist: &ChannelDistribution,
    opts: &QuadOptions,
) -> Result<(f64, f64), QuadratureError> {
    let mut knots = vec![lo];
    knots.extend(dist.breakpoints(lo, hi));
    knots.push(hi);
    let (mut value, mut err) = (0.0, 0.0);
    for w in knots.windows(2) {
        let r = integrate(f, w[0], w[1], opts)?;
        value += r.value;
        err += r.abs_error;
    }
    Ok((value, err))
}

/// Loss of source link `i` weighted by the probability that the relay link
/// is strong enough for the source-relay cap to bind:
/// `sum_n I_n (1 - F_RD(alpha q_{n-1}))` with `alpha = gamma_sr / gamma_rd`.
pub fn delta_sir_bound(
    q: &QuantizationVector,
    gamma_sr: f64,
    gamma_rd: f64,
    dist_sr: &ChannelDistribution,
    dist_rd: &ChannelDistribution,
) -> Result<f64, LossError> {
    if !gamma_rd.is_finite() || gamma_rd <= 0.0 {
        return Err(LossError::InvalidInput(format!("gamma_rd {gamma_rd}")));
    }
    let breakdown = delta_q(q, gamma_sr, dist_sr)?;
    let alpha = gamma_sr / gamma_rd;
    Ok(breakdown
        .interval_terms
        .iter()
        .enumerate()
        .map(|(n, term)| term * dist_rd.survival(alpha * q.lower_boundary(n)))
        .sum())
}

/// Relaxed relay-link loss `N_S * delta(q_RD)` evaluated at `gamma_rd / N_S`.
pub fn delta_rd_bound(
    q: &QuantizationVector,
    gamma_rd: f64,
    n_sources: usize,
    dist_rd: &ChannelDistribution,
) -> Result<f64, LossError> {
    if n_sources == 0 {
        return Err(LossError::InvalidInput("need at least one source".into()));
    }
    let ns = n_sources as f64;
    Ok(ns * delta_q(q, gamma_rd / ns, dist_rd)?.delta_q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub n_trials: u64,
    pub mean_perfect_rate: f64,
    pub mean_quantized_rate: f64,
    /// Rate the sources actually get against their true source-relay caps.
    pub mean_achieved_rate: f64,
    pub mean_delta: f64,
    pub delta_stderr: f64,
    pub percent_lost: f64,
    pub percent_stderr: f64,
}

impl MonteCarloReport {
    pub fn percent_achieved(&self) -> f64 {
        100.0 - self.percent_lost
    }
}

struct Trial {
    perfect: f64,
    guaranteed: f64,
    achieved: f64,
}

/// Average sum-rate loss from quantized CSI over `n_trials` fading states.
///
/// Trial `t` draws from stream `t` of the master seed (sources in order, then
/// the relay link) and results are reduced in trial order, so the report does
/// not depend on how many threads ran the trials.
pub fn monte_carlo_delta(
    cfg: &NetworkConfig,
    quantizers: &[LinkQuantizer],
    dists: &[ChannelDistribution],
    n_trials: u64,
    seed: u64,
) -> Result<MonteCarloReport, LossError> {
    let links = cfg.n_links();
    if n_trials == 0 {
        return Err(LossError::InvalidInput("n_trials must be positive".into()));
    }
    if dists.len() != links {
        return Err(LossError::InvalidInput(format!(
            "expected {links} link distributions, got {}",
            dists.len()
        )));
    }
    if quantizers.len() != links {
        return Err(AllocError::MissingQuantizer {
            expected: links,
            got: quantizers.len(),
        }
        .into());
    }
    let streams = RngStreams::new(seed);
    let ns = cfg.n_sources();
    let trials: Vec<Trial> = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = streams.stream(t);
            let h_sr = dists[..ns].iter().map(|d| d.draw(&mut rng)).collect();
            let h_rd = dists[ns].draw(&mut rng);
            let real = ChannelRealization { h_sr, h_rd };
            let perfect = solve_realization(cfg, &real, Csi::Perfect)?;
            let quant = solve_realization(cfg, &real, Csi::Quantized(quantizers))?;
            Ok(Trial {
                perfect: perfect.guaranteed_rate_nats,
                guaranteed: quant.guaranteed_rate_nats,
                achieved: quant.achieved_rate_nats,
            })
        })
        .collect::<Result<_, AllocError>>()?;

    let n = trials.len() as f64;
    let deltas: Vec<f64> = trials.iter().map(|t| t.perfect - t.guaranteed).collect();
    let mean = |xs: &[f64]| pairwise_sum(xs) / n;
    let mean_perfect_rate = mean(&trials.iter().map(|t| t.perfect).collect::<Vec<_>>());
    let mean_quantized_rate = mean(&trials.iter().map(|t| t.guaranteed).collect::<Vec<_>>());
    let mean_achieved_rate = mean(&trials.iter().map(|t| t.achieved).collect::<Vec<_>>());
    let mean_delta = mean(&deltas);
    let delta_stderr = (welford_variance(deltas.iter().copied()) / n).sqrt();

    // Delta method for the ratio of means: residuals d_t - R p_t.
    let (percent_lost, percent_stderr) = if mean_perfect_rate > 0.0 {
        let ratio = mean_delta / mean_perfect_rate;
        let resid = trials
            .iter()
            .zip(&deltas)
            .map(|(t, d)| d - ratio * t.perfect);
        let se = (welford_variance(resid) / n).sqrt() / mean_perfect_rate;
        (100.0 * ratio, 100.0 * se)
    } else {
        (0.0, 0.0)
    };

    Ok(MonteCarloReport {
        n_trials,
        mean_perfect_rate,
        mean_quantized_rate,
        mean_achieved_rate,
        mean_delta,
        delta_stderr,
        percent_lost,
        percent_stderr,
    })
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Unbiased sample variance (zero for fewer than two values).
fn welford_variance(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut count, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for x in xs {
        count += 1.0;
        let d = x - mean;
        mean += d / count;
        m2 += d * (x - mean);
    }
    if count > 1.0 {
        m2 / (count - 1.0)
    } else {
        0.0
    }
}
