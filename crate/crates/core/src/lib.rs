//! Quantized channel-state feedback for a multi-source decode-and-forward
//! relay network: quantizer design, relay power allocation, loss evaluation
//! and feedback-bit allocation.

pub mod alloc;
pub mod bits;
pub mod channel;
pub mod harness;
pub mod loss;
pub mod quadrature;
pub mod quantizer;
pub mod rng;

pub use alloc::{
    max_sum_rate, solve_realization, ChannelRealization, Csi, LinkQuantizer, NetworkConfig,
    PowerAllocation,
};
pub use channel::{ChannelDistribution, DistributionKind};
pub use loss::{
    delta_q, delta_rd_bound, delta_sir_bound, monte_carlo_delta, LossBreakdown, MonteCarloReport,
};
pub use quantizer::{
    design_fixed_point, design_general, design_max_entropy, design_uniform, QuantizationVector,
    RatioSequence,
};
