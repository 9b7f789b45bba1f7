//! Relay power split maximizing the DF sum rate.
//!
//! Source `i` gets rate `min(ln(1 + cap_i), ln(1 + p_i))` where `cap_i` is its
//! source-relay SNR and `p_i` its share of the relay-destination SNR budget.
//! The optimum is capped water-filling: `p_i = min(cap_i, nu)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantizer::QuantizationVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("expected {expected} link quantizers, got {got}")]
    MissingQuantizer { expected: usize, got: usize },
}

/// Average SNRs (linear) of the source-relay links and the relay-destination link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub gamma_sr: Vec<f64>,
    pub gamma_rd: f64,
}

impl NetworkConfig {
    pub fn new(gamma_sr: Vec<f64>, gamma_rd: f64) -> Result<Self, AllocError> {
        if gamma_sr.is_empty() {
            return Err(AllocError::InvalidInput("need at least one source".into()));
        }
        if !gamma_sr
            .iter()
            .chain([&gamma_rd])
            .all(|g| *g > 0.0 && g.is_finite())
        {
            return Err(AllocError::InvalidInput(
                "average SNRs must be positive and finite".into(),
            ));
        }
        Ok(Self { gamma_sr, gamma_rd })
    }

    pub fn n_sources(&self) -> usize {
        self.gamma_sr.len()
    }

    /// Number of quantized links: every source-relay link plus the relay-destination link.
    pub fn n_links(&self) -> usize {
        self.gamma_sr.len() + 1
    }

    /// Average SNR of link `j`, sources first and the relay link last.
    pub fn link_gamma(&self, j: usize) -> f64 {
        if j < self.gamma_sr.len() {
            self.gamma_sr[j]
        } else {
            self.gamma_rd
        }
    }
}

/// Normalized channel powers for one fading state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub h_sr: Vec<f64>,
    pub h_rd: f64,
}

impl ChannelRealization {
    pub fn link(&self, j: usize) -> f64 {
        if j < self.h_sr.len() {
            self.h_sr[j]
        } else {
            self.h_rd
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p: Vec<f64>,
    pub water_level: f64,
    pub sum_rate_nats: f64,
    /// Budget left unallocated when every cap fits under it.
    pub surplus: f64,
}

/// Capped water-filling over `caps` with total `budget`.
///
/// When the caps fit under the budget every source gets its cap and the rest
/// is reported as surplus; `water_level` is then the largest cap.
pub fn max_sum_rate(caps: &[f64], budget: f64) -> Result<PowerAllocation, AllocError> {
    if caps.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(AllocError::InvalidInput(
            "caps must be finite and nonnegative".into(),
        ));
    }
    if !budget.is_finite() || budget < 0.0 {
        return Err(AllocError::InvalidInput(format!("budget {budget}")));
    }
    let total: f64 = caps.iter().sum();
    let alloc = if total <= budget {
        let water_level = caps.iter().copied().fold(0.0, f64::max);
        PowerAllocation {
            p: caps.to_vec(),
            water_level,
            sum_rate_nats: sum_rate(caps),
            surplus: budget - total,
        }
    } else {
        let mut sorted = caps.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut remaining = budget;
        let mut nu = 0.0;
        for (i, &c) in sorted.iter().enumerate() {
            let active = (sorted.len() - i) as f64;
            if c * active >= remaining {
                nu = remaining / active;
                break;
            }
            remaining -= c;
        }
        let p: Vec<f64> = caps.iter().map(|&c| c.min(nu)).collect();
        PowerAllocation {
            sum_rate_nats: sum_rate(&p),
            p,
            water_level: nu,
            surplus: 0.0,
        }
    };
    debug_assert!(satisfies_lemma1(caps, budget, &alloc));
    Ok(alloc)
}

fn sum_rate(p: &[f64]) -> f64 {
    p.iter().map(|x| x.ln_1p()).sum()
}

/// If the budget is spent and some source sits below its cap, the caps jointly
/// exceed the allocation.
pub fn satisfies_lemma1(caps: &[f64], budget: f64, alloc: &PowerAllocation) -> bool {
    let spent: f64 = alloc.p.iter().sum();
    let tol = 1e-9 * (1.0 + budget);
    let full = (spent - budget).abs() <= tol;
    let some_below = caps.iter().zip(&alloc.p).any(|(c, p)| *p < *c - tol);
    !(full && some_below) || caps.iter().sum::<f64>() + tol >= spent
}

/// How a link's channel reaches the allocator.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkQuantizer {
    Exact,
    Levels(QuantizationVector),
}

impl LinkQuantizer {
    pub fn apply(&self, h: f64) -> f64 {
        match self {
            LinkQuantizer::Exact => h,
            LinkQuantizer::Levels(q) => q.quantize(h).1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Csi<'a> {
    Perfect,
    /// One quantizer per link, sources first and the relay link last.
    Quantized(&'a [LinkQuantizer]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationSolution {
    pub allocation: PowerAllocation,
    /// Sum rate with each source limited by its quantized cap.
    pub guaranteed_rate_nats: f64,
    /// Sum rate with each source limited by its true cap.
    pub achieved_rate_nats: f64,
}

pub fn solve_realization(
    cfg: &NetworkConfig,
    real: &ChannelRealization,
    csi: Csi<'_>,
) -> Result<RealizationSolution, AllocError> {
    let ns = cfg.n_sources();
    if real.h_sr.len() != ns {
        return Err(AllocError::InvalidInput(format!(
            "realization has {} source links, network has {ns}",
            real.h_sr.len()
        )));
    }
    let true_caps: Vec<f64> = cfg
        .gamma_sr
        .iter()
        .zip(&real.h_sr)
        .map(|(g, h)| g * h)
        .collect();
    let (caps, budget) = match csi {
        Csi::Perfect => (true_caps.clone(), cfg.gamma_rd * real.h_rd),
        Csi::Quantized(qs) => {
            if qs.len() != ns + 1 {
                return Err(AllocError::MissingQuantizer {
                    expected: ns + 1,
                    got: qs.len(),
                });
            }
            let caps = (0..ns)
                .map(|i| cfg.gamma_sr[i] * qs[i].apply(real.h_sr[i]))
                .collect();
            (caps, cfg.gamma_rd * qs[ns].apply(real.h_rd))
        }
    };
    let allocation = max_sum_rate(&caps, budget)?;
    let guaranteed_rate_nats = allocation.sum_rate_nats;
    let achieved_rate_nats = true_caps
        .iter()
        .zip(&allocation.p)
        .map(|(c, p)| c.min(*p).ln_1p())
        .sum();
    Ok(RealizationSolution {
        allocation,
        guaranteed_rate_nats,
        achieved_rate_nats,
    })
}
