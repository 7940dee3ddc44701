//! Per-attempt mutual information statistics over block-Rayleigh fading and
//! the Gaussian-approximated decoding-failure probability.
//!
//! All MI quantities are in bits (base-2 logs throughout).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate, normal_cdf};

/// Downlink channel and framing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Average downlink SNR, linear scale.
    pub snr_d: f64,
    /// Available bandwidth in Hz.
    pub bandwidth_w: f64,
    /// Slot duration in seconds.
    pub slot_duration: f64,
    /// Payload size N_b in bits.
    pub payload_bits: f64,
    /// OFDM symbols per slot (14 in every 5G NR numerology).
    pub symbols_per_slot: u32,
}

impl ChannelParams {
    pub fn new(snr_d: f64, bandwidth_w: f64, slot_duration: f64, payload_bits: f64) -> Self {
        Self { snr_d, bandwidth_w, slot_duration, payload_bits, symbols_per_slot: 14 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.snr_d > 0.0) {
            return Err(Error::InvalidConfig(format!("snr_d must be > 0, got {}", self.snr_d)));
        }
        if !(self.bandwidth_w > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bandwidth_w must be > 0, got {}",
                self.bandwidth_w
            )));
        }
        if !(self.slot_duration > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "slot_duration must be > 0, got {}",
                self.slot_duration
            )));
        }
        if !(self.payload_bits >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "payload_bits must be >= 1, got {}",
                self.payload_bits
            )));
        }
        if self.symbols_per_slot == 0 {
            return Err(Error::InvalidConfig("symbols_per_slot must be >= 1".into()));
        }
        Ok(())
    }

    /// Duration of an attempt of `n_i` OFDM symbols, in seconds.
    pub fn attempt_duration(&self, n_i: u32) -> f64 {
        n_i as f64 / self.symbols_per_slot as f64 * self.slot_duration
    }
}

/// Number of channel uses in an attempt of `n_i` OFDM symbols:
/// u_i = (n_i / symbols_per_slot) * T_slot * W.
pub fn channel_uses(n_i: u32, params: &ChannelParams) -> f64 {
    params.attempt_duration(n_i) * params.bandwidth_w
}

/// Mean and variance of the per-use mutual information log2(1 + |h|^2 SNR_d)
/// under unit-power Rayleigh fading (|h|^2 ~ Exponential(1)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiMoments {
    /// bits per channel use
    pub mean_per_use: f64,
    /// bits^2 per channel use
    pub var_per_use: f64,
}

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Computes the MI moments by adaptive quadrature against the Exponential(1)
/// density, split at the integrand knee x = 1/SNR_d.
pub fn mi_moments(params: &ChannelParams) -> Result<MiMoments> {
    let s = params.snr_d;
    assert!(s > 0.0, "snr_d must be positive");

    // e^{-x} decays to ~1e-44 by x=100; the truncated tail is negligible
    // relative to the integral at every SNR.
    let upper = 100.0;
    let mut pts = vec![0.0, 1.0, 10.0, upper];
    let knee = 1.0 / s;
    if knee > 1e-12 && knee < upper {
        pts.push(knee);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let mi = move |x: f64| LOG2_E * (1.0 + s * x).ln();
    let mean = integrate(|x| (-x).exp() * mi(x), &pts, 1e-15, 1e-11, 10_000)?.value;
    let second = integrate(|x| (-x).exp() * mi(x) * mi(x), &pts, 1e-15, 1e-11, 10_000)?.value;
    Ok(MiMoments { mean_per_use: mean, var_per_use: second - mean * mean })
}

/// Gaussian-approximated probability that the MI accumulated over the attempts
/// in `prefix_symbols` falls short of the payload: Phi((N_b - U*mean)/sqrt(U*var)).
///
/// The empty prefix returns 1 (no information, decoding cannot succeed).
pub fn failure_prob(prefix_symbols: &[u32], params: &ChannelParams, moments: &MiMoments) -> f64 {
    if prefix_symbols.is_empty() {
        return 1.0;
    }
    let total_uses: f64 = prefix_symbols.iter().map(|&n| channel_uses(n, params)).sum();
    let mean = total_uses * moments.mean_per_use;
    let std = (total_uses * moments.var_per_use).sqrt();
    normal_cdf((params.payload_bits - mean) / std)
}
