//! Splitting a total CSI feedback budget across links.
//!
//! Each link's loss is modelled as `eta * 2^-k` for `k` feedback bits
//! (`2^k - 1` levels). Links are indexed sources first, relay link last.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc::NetworkConfig;
use crate::channel::ChannelDistribution;
use crate::quantizer::{general_ratios, QuantizerError};

#[derive(Debug, Error)]
pub enum BitAllocError {
    #[error("budget of {k_max} bits is below the required {required}")]
    BudgetTooSmall { k_max: u32, required: u32 },
    #[error("budget of {k_max} bits does not split evenly over {links} links")]
    NotDivisible { k_max: u32, links: u32 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCoefficients {
    pub eta_sr: Vec<f64>,
    pub eta_rd: f64,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub c_q: f64,
}

impl LossCoefficients {
    pub fn n_sources(&self) -> usize {
        self.eta_sr.len()
    }

    /// All coefficients in link order.
    pub fn link_etas(&self) -> Vec<f64> {
        let mut etas = self.eta_sr.clone();
        etas.push(self.eta_rd);
        etas
    }
}

/// `eta_i = min(1, r1_i / alpha_i) c_q` and
/// `eta_RD = N_S (1 - (beta / (beta + 1))^(2 N_S)) c_q`.
///
/// `alpha_i = gamma_SiR / gamma_RD` and `beta = 2 gamma_RD / sum_i gamma_SiR`.
/// `r1` holds one first ratio per source, or a single value for all.
pub fn loss_coefficients(
    cfg: &NetworkConfig,
    r1: &[f64],
    c_q: f64,
) -> Result<LossCoefficients, BitAllocError> {
    let ns = cfg.n_sources();
    if r1.len() != ns && r1.len() != 1 {
        return Err(BitAllocError::InvalidInput(format!(
            "expected {ns} first ratios, got {}",
            r1.len()
        )));
    }
    if r1.iter().any(|r| !r.is_finite() || *r <= 1.0) {
        return Err(BitAllocError::InvalidInput(
            "first ratios must exceed 1".into(),
        ));
    }
    if !c_q.is_finite() || c_q <= 0.0 {
        return Err(BitAllocError::InvalidInput(format!("c_q {c_q}")));
    }
    let alpha: Vec<f64> = cfg.gamma_sr.iter().map(|g| g / cfg.gamma_rd).collect();
    let eta_sr = alpha
        .iter()
        .enumerate()
        .map(|(i, a)| (r1[if r1.len() == 1 { 0 } else { i }] / a).min(1.0) * c_q)
        .collect();
    let beta = 2.0 * cfg.gamma_rd / cfg.gamma_sr.iter().sum::<f64>();
    let nsf = ns as f64;
    let eta_rd = nsf * (1.0 - (beta / (beta + 1.0)).powf(2.0 * nsf)) * c_q;
    Ok(LossCoefficients {
        eta_sr,
        eta_rd,
        alpha,
        beta,
        c_q,
    })
}

/// First ratio `r_1` of the two-bit (3-level) design on each source link.
pub fn nominal_r1(
    cfg: &NetworkConfig,
    dist_sr: &[ChannelDistribution],
) -> Result<Vec<f64>, BitAllocError> {
    if dist_sr.len() != cfg.n_sources() {
        return Err(BitAllocError::InvalidInput(format!(
            "expected {} source distributions, got {}",
            cfg.n_sources(),
            dist_sr.len()
        )));
    }
    cfg.gamma_sr
        .iter()
        .zip(dist_sr)
        .map(|(g, d)| Ok(general_ratios(3, *g, d)?.ratio(1)))
        .collect()
}

/// Bits per link; `None` marks a link whose CSI is known exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitAllocation {
    pub k_sr: Vec<Option<u32>>,
    pub k_rd: Option<u32>,
    pub k_max: u32,
    pub bound_value: f64,
    pub eta: LossCoefficients,
}

impl BitAllocation {
    fn new(eta: &LossCoefficients, k_sr: Vec<Option<u32>>, k_rd: Option<u32>, k_max: u32) -> Self {
        Self {
            bound_value: bound_value(eta, &k_sr, k_rd),
            k_sr,
            k_rd,
            k_max,
            eta: eta.clone(),
        }
    }

    /// Bits per link in link order.
    pub fn link_bits(&self) -> Vec<Option<u32>> {
        let mut bits = self.k_sr.clone();
        bits.push(self.k_rd);
        bits
    }
}

/// `sum eta_m 2^-k_m`, skipping exactly known links.
pub fn bound_value(eta: &LossCoefficients, k_sr: &[Option<u32>], k_rd: Option<u32>) -> f64 {
    let term = |e: f64, k: Option<u32>| k.map_or(0.0, |k| e * 0.5f64.powi(k as i32));
    eta.eta_sr
        .iter()
        .zip(k_sr)
        .map(|(e, k)| term(*e, *k))
        .sum::<f64>()
        + term(eta.eta_rd, k_rd)
}

/// One bit per link, then each extra bit to the link with the largest
/// `eta_m 2^-k_m`; ties go to the lowest index.
fn greedy(etas: &[f64], k_max: u32) -> Result<Vec<u32>, BitAllocError> {
    let links = etas.len() as u32;
    if k_max < links {
        return Err(BitAllocError::BudgetTooSmall {
            k_max,
            required: links,
        });
    }
    let mut k = vec![1u32; etas.len()];
    let mut gains: Vec<f64> = etas.iter().map(|e| 0.5 * e).collect();
    for _ in links..k_max {
        let mut best = 0;
        for m in 1..gains.len() {
            if gains[m] > gains[best] {
                best = m;
            }
        }
        k[best] += 1;
        gains[best] *= 0.5;
    }
    Ok(k)
}

pub fn greedy_allocate(eta: &LossCoefficients, k_max: u32) -> Result<BitAllocation, BitAllocError> {
    let k = greedy(&eta.link_etas(), k_max)?;
    let ns = eta.n_sources();
    Ok(BitAllocation::new(
        eta,
        k[..ns].iter().map(|b| Some(*b)).collect(),
        Some(k[ns]),
        k_max,
    ))
}

/// The same number of bits on every link.
pub fn uniform_allocate(
    eta: &LossCoefficients,
    k_max: u32,
) -> Result<BitAllocation, BitAllocError> {
    let links = eta.n_sources() as u32 + 1;
    if k_max < links {
        return Err(BitAllocError::BudgetTooSmall {
            k_max,
            required: links,
        });
    }
    if !k_max.is_multiple_of(links) {
        return Err(BitAllocError::NotDivisible { k_max, links });
    }
    let k = k_max / links;
    Ok(BitAllocation::new(
        eta,
        vec![Some(k); eta.n_sources()],
        Some(k),
        k_max,
    ))
}

/// Which node gathers the CSI and computes the power split. The central node
/// measures its own links exactly, so they need no feedback bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentralNode {
    External,
    Relay,
    Destination,
}

impl CentralNode {
    pub fn name(self) -> &'static str {
        match self {
            CentralNode::External => "external",
            CentralNode::Relay => "relay",
            CentralNode::Destination => "destination",
        }
    }
}

pub fn central_node_variant(
    eta: &LossCoefficients,
    k_max: u32,
    node: CentralNode,
) -> Result<BitAllocation, BitAllocError> {
    let ns = eta.n_sources();
    match node {
        CentralNode::External => greedy_allocate(eta, k_max),
        CentralNode::Relay => {
            if k_max < 1 {
                return Err(BitAllocError::BudgetTooSmall { k_max, required: 1 });
            }
            Ok(BitAllocation::new(eta, vec![None; ns], Some(k_max), k_max))
        }
        CentralNode::Destination => {
            let k = greedy(&eta.eta_sr, k_max)?;
            Ok(BitAllocation::new(
                eta,
                k.into_iter().map(Some).collect(),
                None,
                k_max,
            ))
        }
    }
}
