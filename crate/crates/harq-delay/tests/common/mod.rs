//! Brute-force round enumeration used as the oracle for the occurrence and
//! outage formulas. Walks every (first-decodable-attempt, detection outcome)
//! path of a round explicitly; shares no code with the analytic recursion.

pub struct RoundLaw {
    /// Probability that attempt i is transmitted, i = 1..M.
    pub occurrence: Vec<f64>,
    /// Probability that the packet is delivered at attempt i.
    pub success: Vec<f64>,
    /// Total delivery probability.
    pub delivered: f64,
}

/// `p_fail[i-1]` is the probability that decoding still fails after attempts
/// 1..=i. `p_nack_err`/`p_ack_err` are the per-feedback flip probabilities
/// (length M-1).
pub fn enumerate_round(p_fail: &[f64], p_nack_err: &[f64], p_ack_err: &[f64]) -> RoundLaw {
    let m = p_fail.len();
    assert_eq!(p_nack_err.len() + 1, m);
    assert_eq!(p_ack_err.len() + 1, m);

    let pf = |i: usize| if i == 0 { 1.0 } else { p_fail[i - 1] };

    let mut law = RoundLaw {
        occurrence: vec![0.0; m],
        success: vec![0.0; m],
        delivered: 0.0,
    };

    // f is the attempt at which decoding first succeeds; f = m + 1 means the
    // payload is never decodable within the round
    for f in 1..=m + 1 {
        let prob_f = if f <= m { pf(f - 1) - pf(f) } else { pf(m) };
        if prob_f <= 0.0 {
            continue;
        }
        // walk attempt by attempt; the round continues past feedback j only
        // on a detected NACK
        let mut alive = prob_f;
        for i in 1..=m {
            law.occurrence[i - 1] += alive;
            if i == f {
                law.success[i - 1] += alive;
                law.delivered += alive;
            }
            if i == m {
                break;
            }
            let detected_nack = if i < f {
                1.0 - p_nack_err[i - 1]
            } else {
                p_ack_err[i - 1]
            };
            alive *= detected_nack;
        }
    }
    law
}
