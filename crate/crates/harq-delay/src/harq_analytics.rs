//! Occurrence recursion, outage probability, M/G/1 service and queue moments,
//! and the long-term average delay of one HARQ process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{error_rates, FeedbackErrorRates, FeedbackParams};
use crate::mi_stats::{failure_prob, mi_moments, ChannelParams, MiMoments};

/// Strict-stability margin: Eq-style utilization must stay below 1 by this
/// much before any delay is computed, since the queue formula diverges at 1.
pub const STABILITY_TOL: f64 = 1e-9;

/// Per-attempt transmission lengths and detection indices of one HARQ process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarqPolicy {
    /// OFDM symbols per attempt, n_1..n_M.
    pub n: Vec<u32>,
    /// Detection indices alpha_1..alpha_{M-1}.
    pub alphas: Vec<f64>,
    /// PDSCH-to-HARQ feedback timing k, in slots.
    pub feedback_timing_k: u32,
    /// Upper bound on each n_i.
    pub n_max: u32,
}

impl HarqPolicy {
    pub fn max_attempts(&self) -> usize {
        self.n.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() {
            return Err(Error::InvalidConfig("policy needs at least one attempt".into()));
        }
        if self.alphas.len() + 1 != self.n.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} alphas for M = {}, got {}",
                self.n.len() - 1,
                self.n.len(),
                self.alphas.len()
            )));
        }
        for (i, &ni) in self.n.iter().enumerate() {
            if ni < 1 || ni > self.n_max {
                return Err(Error::InvalidConfig(format!(
                    "n_{} = {ni} outside [1, {}]",
                    i + 1,
                    self.n_max
                )));
            }
        }
        Ok(())
    }

    /// Attempt durations T_1..T_M in seconds.
    pub fn durations(&self, channel: &ChannelParams) -> Vec<f64> {
        self.n.iter().map(|&ni| channel.attempt_duration(ni)).collect()
    }
}

/// Poisson arrival process of new packets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueParams {
    /// lambda_0 in packets per second.
    pub lambda0: f64,
}

impl QueueParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0) {
            return Err(Error::InvalidConfig(format!("lambda0 must be > 0, got {}", self.lambda0)));
        }
        Ok(())
    }
}

/// P_{i,f} with the convention P_{0,f} = 1.
fn pf(p_fail: &[f64], i: usize) -> f64 {
    if i == 0 {
        1.0
    } else {
        p_fail[i - 1]
    }
}

/// Probability that attempt i occurs in a round, for i = 1..M.
///
/// Attempt i happens either because every earlier attempt failed and every
/// NACK came through, or because decoding succeeded at some attempt i-j but
/// the ACKs since then were all misread as NACKs.
pub fn occurrence_probs(p_fail: &[f64], rates: &FeedbackErrorRates) -> Result<Vec<f64>> {
    let m = p_fail.len();
    if rates.len() + 1 != m {
        return Err(Error::DimensionMismatch(format!(
            "{} feedback rates for M = {m}",
            rates.len()
        )));
    }
    let mut p = Vec::with_capacity(m);
    p.push(1.0);
    for i in 2..=m {
        let mut no_nack_err = 1.0;
        for j in 1..=i - 1 {
            no_nack_err *= 1.0 - rates.nack_err(j);
        }
        let mut total = pf(p_fail, i - 1) * no_nack_err;
        for j in 1..=i - 1 {
            let mut term = pf(p_fail, i - j - 1) - pf(p_fail, i - j);
            for mm in 0..=i - j - 1 {
                term *= 1.0 - rates.nack_err(mm);
            }
            for mm in i - j..=i - 1 {
                term *= rates.ack_err(mm);
            }
            total += term;
        }
        p.push(total.clamp(0.0, 1.0));
    }
    Ok(p)
}

/// P_{i,s}: probability that the packet is delivered at attempt i, i.e.
/// decoding first succeeds there and every earlier NACK came through.
/// P_{1,s} = 1 - P_{1,f}.
pub fn success_probs(p_fail: &[f64], rates: &FeedbackErrorRates) -> Result<Vec<f64>> {
    let m = p_fail.len();
    if rates.len() + 1 != m {
        return Err(Error::DimensionMismatch(format!(
            "{} feedback rates for M = {m}",
            rates.len()
        )));
    }
    let mut p = Vec::with_capacity(m);
    p.push(1.0 - pf(p_fail, 1));
    for i in 2..=m {
        let mut term = pf(p_fail, i - 1) - pf(p_fail, i);
        for j in 1..=i - 1 {
            term *= 1.0 - rates.nack_err(j);
        }
        p.push(term);
    }
    Ok(p)
}

/// Overall outage probability of a round: the complement of the probability
/// that the message is delivered (decoded, with all intermediate NACKs
/// correctly received).
pub fn outage_prob(p_fail: &[f64], rates: &FeedbackErrorRates) -> Result<f64> {
    let delivered: f64 = success_probs(p_fail, rates)?.iter().sum();
    Ok((1.0 - delivered).clamp(0.0, 1.0))
}

/// Service-time moments of the attempt stream, as consumed by the queue
/// formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceMoments {
    /// E[T_tran]: mean effective transmission time, sum T_i P_{i-1,f} / sum P_{i-1,f}.
    pub mean: f64,
    /// sum_i T_i^2 P_i.
    pub sum_t2_p: f64,
    /// sum_i T_i P_i.
    pub sum_t_p: f64,
    /// sum_i P_i: expected number of transmissions per round.
    pub sum_p: f64,
}

pub fn service_moments(
    policy: &HarqPolicy,
    p_fail: &[f64],
    p_occur: &[f64],
    channel: &ChannelParams,
) -> ServiceMoments {
    let t = policy.durations(channel);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut sum_t2_p = 0.0;
    let mut sum_t_p = 0.0;
    let mut sum_p = 0.0;
    for i in 1..=t.len() {
        num += t[i - 1] * pf(p_fail, i - 1);
        den += pf(p_fail, i - 1);
        sum_t2_p += t[i - 1] * t[i - 1] * p_occur[i - 1];
        sum_t_p += t[i - 1] * p_occur[i - 1];
        sum_p += p_occur[i - 1];
    }
    ServiceMoments { mean: num / den, sum_t2_p, sum_t_p, sum_p }
}

/// Mean waiting time of the M/G/1 queue of transmission attempts:
/// sum T_i^2 P_i / (2 ((1 - P_out)/lambda_0 - sum T_i P_i)).
pub fn queue_delay(moments: &ServiceMoments, p_out: f64, queue: &QueueParams) -> Result<f64> {
    let denom = (1.0 - p_out) / queue.lambda0 - moments.sum_t_p;
    if denom <= 0.0 {
        let rho = moments.sum_t_p * queue.lambda0 / (1.0 - p_out);
        return Err(Error::UnstableQueue { rho });
    }
    Ok(moments.sum_t2_p / (2.0 * denom))
}

/// Utilization rho = E[T_tran] * lambda_0 * sum P_i / (1 - P_out); the queue
/// is treated as stable only for rho < 1 - STABILITY_TOL since the waiting
/// time diverges at rho = 1.
pub fn check_stability(moments: &ServiceMoments, p_out: f64, queue: &QueueParams) -> (bool, f64) {
    let rho = moments.mean * queue.lambda0 * moments.sum_p / (1.0 - p_out);
    (rho < 1.0 - STABILITY_TOL, rho)
}

/// Every analytic quantity of one policy under one channel/queue setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    /// P_{1,f}..P_{M,f}.
    pub p_fail: Vec<f64>,
    /// P_1..P_M.
    pub p_occur: Vec<f64>,
    pub p_out: f64,
    /// E[T_tran], seconds.
    pub t_service_mean: f64,
    /// Second moment of the attempt service time, sum T_i^2 P_i / sum P_i.
    pub t_service_2nd: f64,
    /// E[T_queue], seconds.
    pub t_queue: f64,
    /// Mean per-RTT upper bound: T_queue + T_tran + k T_slot.
    pub t_ub_mean: f64,
    /// Expected number of RTTs per delivered packet, (M + 1 - sum P_{i,s}) / (1 - P_out).
    pub expected_rtt: f64,
    /// Long-term average delay E[D] = expected_rtt * t_ub_mean (upper-bound based).
    pub avg_delay: f64,
    pub stable: bool,
    pub utilization: f64,
}

/// Assembles the full report from precomputed MI moments and feedback error
/// rates. Fails with `UnstableQueue` when the load is at or past saturation.
pub fn delay_report_with(
    policy: &HarqPolicy,
    channel: &ChannelParams,
    moments: &MiMoments,
    rates: &FeedbackErrorRates,
    queue: &QueueParams,
) -> Result<DelayReport> {
    policy.validate()?;
    channel.validate()?;
    queue.validate()?;
    let m = policy.max_attempts();

    let p_fail: Vec<f64> =
        (1..=m).map(|i| failure_prob(&policy.n[..i], channel, moments)).collect();
    let p_occur = occurrence_probs(&p_fail, rates)?;
    let p_out = outage_prob(&p_fail, rates)?;
    let service = service_moments(policy, &p_fail, &p_occur, channel);
    let (stable, utilization) = check_stability(&service, p_out, queue);
    if !stable {
        return Err(Error::UnstableQueue { rho: utilization });
    }
    let t_queue = queue_delay(&service, p_out, queue)?;
    let t_ub_mean = t_queue + service.mean + policy.feedback_timing_k as f64 * channel.slot_duration;

    // expected RTT count: (M + 1 - sum_{i=1}^{M-1} P_{i,s}) / (1 - P_out)
    let p_succ = success_probs(&p_fail, rates)?;
    let sum_ps: f64 = p_succ[..m - 1].iter().sum();
    let expected_rtt = (m as f64 + 1.0 - sum_ps) / (1.0 - p_out);
    let avg_delay = expected_rtt * t_ub_mean;

    Ok(DelayReport {
        p_fail,
        p_occur,
        p_out,
        t_service_mean: service.mean,
        t_service_2nd: service.sum_t2_p / service.sum_p,
        t_queue,
        t_ub_mean,
        expected_rtt,
        avg_delay,
        stable,
        utilization,
    })
}

/// Convenience wrapper computing MI moments and feedback error rates in place.
pub fn delay_report(
    policy: &HarqPolicy,
    channel: &ChannelParams,
    feedback: &FeedbackParams,
    queue: &QueueParams,
) -> Result<DelayReport> {
    feedback.validate(policy.max_attempts())?;
    let moments = mi_moments(channel)?;
    let rates = error_rates(&FeedbackParams {
        snr_f: feedback.snr_f,
        alphas: feedback.alphas.clone(),
    });
    delay_report_with(policy, channel, &moments, &rates, queue)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(p_n: &[f64], p_a: &[f64]) -> FeedbackErrorRates {
        FeedbackErrorRates { p_nack_err: p_n.to_vec(), p_ack_err: p_a.to_vec() }
    }

    #[test]
    fn occurrence_collapses_under_perfect_feedback() {
        let p_fail = vec![0.7, 0.3, 0.1, 0.02];
        let p = occurrence_probs(&p_fail, &FeedbackErrorRates::perfect(4)).unwrap();
        assert_eq!(p[0], 1.0);
        for i in 1..4 {
            assert!((p[i] - p_fail[i - 1]).abs() < 1e-15);
        }
    }

    #[test]
    fn occurrence_hand_example() {
        let p = occurrence_probs(&[0.5, 0.2], &rates(&[0.1], &[0.2])).unwrap();
        // 0.5 * 0.9 + (1 - 0.5) * 1 * 0.2
        assert!((p[1] - 0.55).abs() < 1e-15);
    }

    #[test]
    fn occurrence_union_bound() {
        for &(p1f, pn, pa) in &[(0.3, 0.05, 0.4), (0.9, 0.3, 0.1), (0.01, 0.49, 0.49)] {
            let p = occurrence_probs(&[p1f, p1f / 2.0], &rates(&[pn], &[pa])).unwrap();
            assert!(p[1] <= p1f + pa + 1e-15);
        }
    }

    #[test]
    fn outage_reduces_to_final_failure_with_perfect_feedback() {
        let p_fail = vec![0.7, 0.3, 0.1, 0.02];
        let out = outage_prob(&p_fail, &FeedbackErrorRates::perfect(4)).unwrap();
        assert!((out - 0.02).abs() < 1e-15);
    }

    #[test]
    fn outage_hand_example() {
        let out = outage_prob(&[0.5, 0.1], &rates(&[0.1], &[0.0])).unwrap();
        // 1 - (0.5 + 0.4 * 0.9)
        assert!((out - 0.14).abs() < 1e-15);
    }

    #[test]
    fn outage_with_certain_nack_loss() {
        let out = outage_prob(&[0.5, 0.1], &rates(&[1.0], &[0.0])).unwrap();
        assert!((out - 0.5).abs() < 1e-15); // every retransmission chance lost
    }

    fn policy(n: &[u32], k: u32) -> HarqPolicy {
        HarqPolicy {
            n: n.to_vec(),
            alphas: vec![0.0; n.len() - 1],
            feedback_timing_k: k,
            n_max: 224,
        }
    }

    fn channel() -> ChannelParams {
        ChannelParams::new(1.0, 1.4e6, 125e-6, 2816.0)
    }

    #[test]
    fn service_single_attempt() {
        let pol = policy(&[14], 1);
        let ch = channel();
        let m = service_moments(&pol, &[0.3], &[1.0], &ch);
        assert!((m.mean - 125e-6).abs() < 1e-12);
    }

    #[test]
    fn service_constant_lengths() {
        let pol = policy(&[28, 28, 28], 1);
        let ch = channel();
        let m = service_moments(&pol, &[0.9, 0.5, 0.1], &[1.0, 0.9, 0.5], &ch);
        assert!((m.mean - 250e-6).abs() < 1e-12);
    }

    #[test]
    fn service_two_attempt_example() {
        let pol = policy(&[14, 28], 1);
        let ch = channel();
        let m = service_moments(&pol, &[0.5, 0.2], &[1.0, 0.5], &ch);
        // (125 + 0.5 * 250) / 1.5 microseconds
        assert!((m.mean - 250e-6 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn queue_delay_md1_reduction() {
        // deterministic single-attempt service, no outage: Pollaczek-Khinchine
        // for M/D/1 is lambda T^2 / (2 (1 - lambda T))
        let pol = policy(&[14], 0);
        let ch = channel();
        let t1 = 125e-6;
        let q = QueueParams { lambda0: 2000.0 };
        let m = service_moments(&pol, &[0.0], &[1.0], &ch);
        let w = queue_delay(&m, 0.0, &q).unwrap();
        let pk = q.lambda0 * t1 * t1 / (2.0 * (1.0 - q.lambda0 * t1));
        assert!((w - pk).abs() < 1e-12 * pk.max(1.0));
    }

    #[test]
    fn queue_delay_vanishes_with_load() {
        let pol = policy(&[14, 14], 1);
        let ch = channel();
        let m = service_moments(&pol, &[0.5, 0.1], &[1.0, 0.5], &ch);
        let w = queue_delay(&m, 0.05, &QueueParams { lambda0: 1e-6 }).unwrap();
        assert!(w >= 0.0 && w < 1e-9);
    }

    #[test]
    fn queue_delay_unstable_errors() {
        let pol = policy(&[224, 224, 224, 224], 1);
        let ch = channel();
        let m = service_moments(&pol, &[1.0, 1.0, 1.0, 0.99], &[1.0, 1.0, 1.0, 1.0], &ch);
        let r = queue_delay(&m, 0.5, &QueueParams { lambda0: 200.0 });
        assert!(matches!(r, Err(Error::UnstableQueue { .. })));
        let (stable, rho) = check_stability(&m, 0.5, &QueueParams { lambda0: 200.0 });
        assert!(!stable);
        assert!(rho > 1.0);
    }

    #[test]
    fn stability_boundary_matches_queue_blowup() {
        // at the lambda0 where the queue denominator hits zero, rho = 1 only
        // when the two service weightings coincide (all T_i equal)
        let pol = policy(&[28, 28], 1);
        let ch = channel();
        let p_fail = [0.4, 0.1];
        let p_occ = occurrence_probs(&p_fail, &FeedbackErrorRates::perfect(2)).unwrap();
        let m = service_moments(&pol, &p_fail, &p_occ, &ch);
        let p_out = 0.1;
        let lambda_star = (1.0 - p_out) / m.sum_t_p;
        let (_, rho) = check_stability(&m, p_out, &QueueParams { lambda0: lambda_star });
        assert!((rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn queue_delay_increases_toward_saturation() {
        let pol = policy(&[28, 28], 1);
        let ch = channel();
        let p_fail = [0.4, 0.1];
        let p_occ = occurrence_probs(&p_fail, &FeedbackErrorRates::perfect(2)).unwrap();
        let m = service_moments(&pol, &p_fail, &p_occ, &ch);
        let p_out = 0.1;
        let lambda_star = (1.0 - p_out) / m.sum_t_p;
        let mut last = 0.0;
        for frac in [0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let w = queue_delay(&m, p_out, &QueueParams { lambda0: frac * lambda_star }).unwrap();
            assert!(w > last);
            last = w;
        }
    }

    #[test]
    fn report_single_attempt_formula() {
        let pol = HarqPolicy { n: vec![56], alphas: vec![], feedback_timing_k: 1, n_max: 56 };
        let ch = ChannelParams::new(10.0, 1.4e6, 125e-6, 1000.0);
        let q = QueueParams { lambda0: 200.0 };
        let fb = FeedbackParams::new(1.0, vec![]);
        let r = delay_report(&pol, &ch, &fb, &q).unwrap();
        // M = 1: E[D] = 2 / (1 - P_{1,f}) * T_ub, P_out = P_{1,f}
        assert!((r.p_out - r.p_fail[0]).abs() < 1e-15);
        let want = 2.0 / (1.0 - r.p_fail[0]) * r.t_ub_mean;
        assert!((r.avg_delay - want).abs() < 1e-12 * want);
    }

    #[test]
    fn report_perfect_channel_rtt_count() {
        // the RTT-count formula evaluates to M even for deterministic
        // one-shot success; keep the behavior observable rather than hidden
        let pol = policy(&[56, 56, 56, 56], 1);
        let ch = ChannelParams::new(1e9, 20e6, 125e-6, 100.0);
        let q = QueueParams { lambda0: 10.0 };
        let moments = mi_moments(&ch).unwrap();
        let r = delay_report_with(&pol, &ch, &moments, &FeedbackErrorRates::perfect(4), &q).unwrap();
        assert!(r.p_fail[0] < 1e-12);
        assert!((r.expected_rtt - 4.0).abs() < 1e-9);
    }

    #[test]
    fn report_probabilities_consistent() {
        let pol = policy(&[28, 42, 56, 56], 1);
        let ch = ChannelParams::new(3.0, 1.4e6, 125e-6, 2816.0);
        let q = QueueParams { lambda0: 200.0 };
        let fb = FeedbackParams::new(1.0, vec![0.2, 0.3, 0.1]);
        let r = delay_report(&pol, &ch, &fb, &q).unwrap();
        for i in 0..4 {
            assert!((0.0..=1.0).contains(&r.p_fail[i]));
            assert!((0.0..=1.0).contains(&r.p_occur[i]));
            if i > 0 {
                assert!(r.p_fail[i] <= r.p_fail[i - 1] + 1e-15);
            }
        }
        assert_eq!(r.p_occur[0], 1.0);
        assert!(r.avg_delay > 0.0);
        assert!(r.stable && r.utilization < 1.0);
    }

    #[test]
    fn outage_never_increases_with_alpha() {
        let ch = ChannelParams::new(2.0, 1.4e6, 125e-6, 2816.0);
        let moments = mi_moments(&ch).unwrap();
        let pol = policy(&[56, 56, 56], 0);
        let p_fail: Vec<f64> = (1..=3)
            .map(|i| crate::mi_stats::failure_prob(&pol.n[..i], &ch, &moments))
            .collect();
        let mut last = 1.0;
        for step in 0..10 {
            let a = 0.1 * step as f64;
            let r = error_rates(&FeedbackParams::new(0.8, vec![a, a]));
            let out = outage_prob(&p_fail, &r).unwrap();
            assert!(out <= last + 1e-15, "outage increased at alpha={a}");
            last = out;
        }
    }
}
