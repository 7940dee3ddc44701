//! Browser bindings for the delay model. Three operations are exposed, each
//! taking and returning JSON strings so the page needs no generated glue
//! types:
//!
//! - [`delay_report`]: analytic delay report for an explicit policy;
//! - [`feedback_curves`]: ACK/NACK detection error rates as a function of the
//!   detection index;
//! - [`sweep_feedback_snr`]: optimized delay across a feedback-SNR range for
//!   asymmetric, symmetric and perfect feedback.

use serde::Deserialize;
use wasm_bindgen::prelude::*;

use harq_delay::config::db_to_linear;
use harq_delay::feedback::{error_rates, FeedbackParams};
use harq_delay::harq_analytics::{self, HarqPolicy, QueueParams};
use harq_delay::mi_stats::ChannelParams;
use harq_delay::optimizer::{optimize, OptimizationProblem, Scheme};

#[derive(Deserialize)]
struct ChannelInput {
    snr_d_db: f64,
    #[serde(default = "defaults::bandwidth_hz")]
    bandwidth_hz: f64,
    #[serde(default = "defaults::slot_duration_s")]
    slot_duration_s: f64,
    #[serde(default = "defaults::payload_bits")]
    payload_bits: f64,
}

mod defaults {
    pub fn bandwidth_hz() -> f64 {
        1.4e6
    }
    pub fn slot_duration_s() -> f64 {
        125e-6
    }
    pub fn payload_bits() -> f64 {
        2816.0
    }
    pub fn k() -> u32 {
        1
    }
    pub fn n_max() -> u32 {
        56
    }
    pub fn two() -> usize {
        2
    }
    pub fn sweep_n_max() -> u32 {
        8
    }
}

impl ChannelInput {
    fn params(&self) -> ChannelParams {
        ChannelParams::new(
            db_to_linear(self.snr_d_db),
            self.bandwidth_hz,
            self.slot_duration_s,
            self.payload_bits,
        )
    }
}

#[derive(Deserialize)]
struct ReportInput {
    channel: ChannelInput,
    snr_f_db: f64,
    lambda0: f64,
    n: Vec<u32>,
    #[serde(default)]
    alphas: Option<Vec<f64>>,
    #[serde(default = "defaults::k")]
    k: u32,
}

fn delay_report_impl(input_json: &str) -> Result<String, String> {
    let input: ReportInput = serde_json::from_str(input_json).map_err(|e| e.to_string())?;
    let alphas = input
        .alphas
        .unwrap_or_else(|| vec![0.0; input.n.len().saturating_sub(1)]);
    let n_max = input.n.iter().copied().max().unwrap_or(1).max(defaults::n_max());
    let policy = HarqPolicy {
        n: input.n.clone(),
        alphas: alphas.clone(),
        feedback_timing_k: input.k,
        n_max,
    };
    policy.validate().map_err(|e| e.to_string())?;
    let channel = input.channel.params();
    let feedback = FeedbackParams::new(db_to_linear(input.snr_f_db), alphas);
    let queue = QueueParams { lambda0: input.lambda0 };
    let report = harq_analytics::delay_report(&policy, &channel, &feedback, &queue)
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
struct CurveInput {
    snr_f_db: f64,
    /// Detection indices to evaluate; defaults to 101 points over [0, 0.999].
    #[serde(default)]
    alphas: Option<Vec<f64>>,
}

fn feedback_curves_impl(input_json: &str) -> Result<String, String> {
    let input: CurveInput = serde_json::from_str(input_json).map_err(|e| e.to_string())?;
    let alphas = input
        .alphas
        .unwrap_or_else(|| (0..=100).map(|i| 0.999 * i as f64 / 100.0).collect());
    for &a in &alphas {
        if !(0.0..1.0).contains(&a) {
            return Err(format!("alpha must be in [0, 1), got {a}"));
        }
    }
    let rates = error_rates(&FeedbackParams::new(db_to_linear(input.snr_f_db), alphas.clone()));
    let out = serde_json::json!({
        "alphas": alphas,
        "p_nack_err": rates.p_nack_err,
        "p_ack_err": rates.p_ack_err,
    });
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
struct SweepInput {
    channel: ChannelInput,
    lambda0: f64,
    snr_f_db_values: Vec<f64>,
    #[serde(default = "defaults::two")]
    max_attempts: usize,
    #[serde(default = "defaults::sweep_n_max")]
    n_max: u32,
    #[serde(default)]
    epsilon: Option<f64>,
    #[serde(default = "defaults::k")]
    k: u32,
}

impl SweepInput {
    fn problem(&self, snr_f_db: f64, scheme: Scheme) -> OptimizationProblem {
        OptimizationProblem {
            channel: self.channel.params(),
            queue: QueueParams { lambda0: self.lambda0 },
            snr_f: db_to_linear(snr_f_db),
            max_attempts: self.max_attempts,
            n_max: self.n_max,
            epsilon: self.epsilon.unwrap_or(1.0),
            feedback_timing_k: self.k,
            scheme,
            multi_start: false,
            prune: true,
        }
    }
}

fn sweep_feedback_snr_impl(input_json: &str) -> Result<String, String> {
    let input: SweepInput = serde_json::from_str(input_json).map_err(|e| e.to_string())?;
    let mut points = Vec::new();
    for &snr_f_db in &input.snr_f_db_values {
        let mut per_scheme = serde_json::Map::new();
        for scheme in [Scheme::Afd, Scheme::Sfd, Scheme::PerfectFeedback] {
            let r = optimize(&input.problem(snr_f_db, scheme)).map_err(|e| e.to_string())?;
            per_scheme.insert(
                scheme.as_str().to_string(),
                serde_json::json!({
                    "feasible": r.feasible,
                    "objective_s": r.objective,
                    "p_out": r.best_report.p_out,
                    "n": r.best_policy.n,
                    "alphas": r.best_policy.alphas,
                }),
            );
        }
        points.push(serde_json::json!({
            "snr_f_db": snr_f_db,
            "schemes": per_scheme,
        }));
    }
    serde_json::to_string(&serde_json::json!({ "points": points })).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn delay_report(input_json: &str) -> Result<String, JsError> {
    delay_report_impl(input_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn feedback_curves(input_json: &str) -> Result<String, JsError> {
    feedback_curves_impl(input_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sweep_feedback_snr(input_json: &str) -> Result<String, JsError> {
    sweep_feedback_snr_impl(input_json).map_err(|e| JsError::new(&e))
}
