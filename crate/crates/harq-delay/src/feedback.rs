//! One-symbol binary feedback channel with asymmetric detection.
//!
//! The feedback is a unit-amplitude antipodal symbol; the detection threshold
//! sits at signed distance alpha (in amplitudes) from the midpoint, shifted
//! toward the ACK point so that the NACK region grows. alpha = 0 is the
//! symmetric detector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::numerics::erfc;

/// Feedback channel SNR and per-attempt detection indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackParams {
    /// Feedback-channel SNR, linear scale.
    pub snr_f: f64,
    /// Detection indices alpha_1..alpha_{M-1}; no feedback follows attempt M.
    pub alphas: Vec<f64>,
}

impl FeedbackParams {
    pub fn new(snr_f: f64, alphas: Vec<f64>) -> Self {
        Self { snr_f, alphas }
    }

    /// Symmetric detection (all alpha = 0) for `m` attempts.
    pub fn symmetric(snr_f: f64, max_attempts: usize) -> Self {
        Self { snr_f, alphas: vec![0.0; max_attempts.saturating_sub(1)] }
    }

    pub fn validate(&self, max_attempts: usize) -> Result<()> {
        if !(self.snr_f > 0.0) {
            return Err(Error::InvalidConfig(format!("snr_f must be > 0, got {}", self.snr_f)));
        }
        if self.alphas.len() + 1 != max_attempts {
            return Err(Error::DimensionMismatch(format!(
                "expected {} alphas for M = {max_attempts}, got {}",
                max_attempts - 1,
                self.alphas.len()
            )));
        }
        Ok(())
    }
}

/// Per-attempt ACK/NACK misdetection probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackErrorRates {
    /// P_{N,i}: a NACK read as ACK (terminates the round, causes outage).
    pub p_nack_err: Vec<f64>,
    /// P_{A,i}: an ACK read as NACK (causes a redundant retransmission).
    pub p_ack_err: Vec<f64>,
}

impl FeedbackErrorRates {
    /// Error-free feedback for `m` attempts, used as the baseline scheme.
    pub fn perfect(max_attempts: usize) -> Self {
        let n = max_attempts.saturating_sub(1);
        Self { p_nack_err: vec![0.0; n], p_ack_err: vec![0.0; n] }
    }

    /// NACK error rate with the occurrence-recursion convention P_{N,0} = 0.
    /// `j` is the 1-based attempt index; j = 0 returns the virtual zero.
    pub fn nack_err(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.p_nack_err[j - 1]
        }
    }

    /// ACK error rate for 1-based attempt index `m`.
    pub fn ack_err(&self, m: usize) -> f64 {
        self.p_ack_err[m - 1]
    }

    pub fn len(&self) -> usize {
        self.p_nack_err.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_nack_err.is_empty()
    }
}

/// ACK/NACK error rates of the asymmetric detector:
/// P_{N,i} = erfc((1 + alpha_i) sqrt(SNR_f)) / 2,
/// P_{A,i} = erfc((1 - alpha_i) sqrt(SNR_f)) / 2.
pub fn error_rates(params: &FeedbackParams) -> FeedbackErrorRates {
    let root = params.snr_f.sqrt();
    let p_nack_err = params.alphas.iter().map(|a| 0.5 * erfc((1.0 + a) * root)).collect();
    let p_ack_err = params.alphas.iter().map(|a| 0.5 * erfc((1.0 - a) * root)).collect();
    FeedbackErrorRates { p_nack_err, p_ack_err }
}
