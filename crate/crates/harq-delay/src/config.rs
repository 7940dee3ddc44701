//! Flat key-value run configuration with section prefixes
//! (`channel.snr_d_db = 5`, `queue.lambda0 = 200`, ...).
//!
//! SNRs are given in dB on this surface and converted to linear internally.
//! Unknown keys are rejected with the offending line number.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harq_analytics::{HarqPolicy, QueueParams};
use crate::mi_stats::ChannelParams;
use crate::optimizer::{OptimizationProblem, Scheme};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Which quantity a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    SnrFDb,
    SnrDDb,
    Epsilon,
    Lambda0,
}

impl SweepVar {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVar::SnrFDb => "snr_f",
            SweepVar::SnrDDb => "snr_d",
            SweepVar::Epsilon => "epsilon",
            SweepVar::Lambda0 => "lambda0",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

/// Fully validated run configuration for every CLI workflow.
///
/// Defaults follow the reference operating point: lambda0 = 200 packets/s,
/// k = 1, N_b = 2816 bits, T_slot = 125 us, M = 4. The bandwidth default of
/// 1.4 MHz is our own choice (no standard value exists for it here) and is
/// config-overridable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub channel: ChannelParams,
    pub snr_f: f64,
    pub queue: QueueParams,
    /// Explicit policy for analyze/simulate; None until supplied.
    pub policy_n: Option<Vec<u32>>,
    pub policy_alphas: Option<Vec<f64>>,
    pub feedback_timing_k: u32,
    pub n_max: u32,
    pub max_attempts: usize,
    pub epsilon: f64,
    pub scheme: Scheme,
    pub multi_start: bool,
    pub prune: bool,
    pub sim_num_packets: u64,
    pub sim_warmup_packets: u64,
    pub sim_seed: u64,
    pub sim_use_gaussian_mi: bool,
    pub sim_occupy_during_feedback: bool,
    pub sweep: Option<SweepSpec>,
    /// Recorded objective from an optimizer run, if this config was written
    /// as a policy file.
    pub recorded_objective: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            channel: ChannelParams::new(db_to_linear(5.0), 1.4e6, 125e-6, 2816.0),
            snr_f: db_to_linear(0.0),
            queue: QueueParams { lambda0: 200.0 },
            policy_n: None,
            policy_alphas: None,
            feedback_timing_k: 1,
            n_max: 56,
            max_attempts: 4,
            epsilon: 1.0,
            scheme: Scheme::Afd,
            multi_start: false,
            prune: false,
            sim_num_packets: 1_000_000,
            sim_warmup_packets: 10_000,
            sim_seed: 1,
            sim_use_gaussian_mi: false,
            sim_occupy_during_feedback: false,
            sweep: None,
            recorded_objective: None,
        }
    }
}

fn parse_err(line_no: usize, msg: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("line {line_no}: {msg}"))
}

fn parse_f64(line_no: usize, key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| parse_err(line_no, format!("{key}: expected a number, got {v:?}")))
}

fn parse_u64(line_no: usize, key: &str, v: &str) -> Result<u64> {
    v.trim()
        .parse()
        .map_err(|_| parse_err(line_no, format!("{key}: expected an integer, got {v:?}")))
}

fn parse_bool(line_no: usize, key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(parse_err(line_no, format!("{key}: expected true/false, got {other:?}"))),
    }
}

fn parse_list<T, F: Fn(usize, &str, &str) -> Result<T>>(
    line_no: usize,
    key: &str,
    v: &str,
    f: F,
) -> Result<Vec<T>> {
    v.split(',').map(|item| f(line_no, key, item)).collect()
}

impl RunConfig {
    /// Parses config text, starting from the defaults. Later lines override
    /// earlier ones; `overrides` (CLI `--set key=value` flags) are applied
    /// last.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, format!("expected key = value, got {raw:?}")))?;
            entries.push((line_no, key.trim().to_string(), value.trim().to_string()));
        }
        for (k, v) in overrides {
            entries.push((0, k.clone(), v.clone()));
        }
        for (line_no, key, value) in entries {
            cfg.apply(line_no, &key, &value)?;
        }
        Ok(cfg)
    }

    fn apply(&mut self, line_no: usize, key: &str, v: &str) -> Result<()> {
        match key {
            "channel.snr_d_db" => self.channel.snr_d = db_to_linear(parse_f64(line_no, key, v)?),
            "channel.bandwidth_hz" => self.channel.bandwidth_w = parse_f64(line_no, key, v)?,
            "channel.slot_duration_s" => self.channel.slot_duration = parse_f64(line_no, key, v)?,
            "channel.payload_bits" => self.channel.payload_bits = parse_f64(line_no, key, v)?,
            "channel.symbols_per_slot" => {
                self.channel.symbols_per_slot = parse_u64(line_no, key, v)? as u32
            }
            "feedback.snr_f_db" => self.snr_f = db_to_linear(parse_f64(line_no, key, v)?),
            "queue.lambda0" => self.queue.lambda0 = parse_f64(line_no, key, v)?,
            "policy.n" => {
                self.policy_n =
                    Some(parse_list(line_no, key, v, |l, k, s| {
                        parse_u64(l, k, s).map(|x| x as u32)
                    })?)
            }
            "policy.alphas" => {
                self.policy_alphas = Some(if v.trim().is_empty() {
                    Vec::new()
                } else {
                    parse_list(line_no, key, v, parse_f64)?
                })
            }
            "policy.k" => self.feedback_timing_k = parse_u64(line_no, key, v)? as u32,
            "policy.n_max" => self.n_max = parse_u64(line_no, key, v)? as u32,
            "problem.max_attempts" => self.max_attempts = parse_u64(line_no, key, v)? as usize,
            "problem.epsilon" => self.epsilon = parse_f64(line_no, key, v)?,
            "problem.scheme" => {
                self.scheme = match v.trim() {
                    "afd" => Scheme::Afd,
                    "sfd" => Scheme::Sfd,
                    "perfect" => Scheme::PerfectFeedback,
                    other => {
                        return Err(parse_err(
                            line_no,
                            format!("scheme must be afd|sfd|perfect, got {other:?}"),
                        ))
                    }
                }
            }
            "problem.multi_start" => self.multi_start = parse_bool(line_no, key, v)?,
            "problem.prune" => self.prune = parse_bool(line_no, key, v)?,
            "sim.num_packets" => self.sim_num_packets = parse_u64(line_no, key, v)?,
            "sim.warmup_packets" => self.sim_warmup_packets = parse_u64(line_no, key, v)?,
            "sim.seed" => self.sim_seed = parse_u64(line_no, key, v)?,
            "sim.use_gaussian_mi" => self.sim_use_gaussian_mi = parse_bool(line_no, key, v)?,
            "sim.occupy_during_feedback" => {
                self.sim_occupy_during_feedback = parse_bool(line_no, key, v)?
            }
            "sweep.var" => {
                let var = match v.trim() {
                    "snr_f" => SweepVar::SnrFDb,
                    "snr_d" => SweepVar::SnrDDb,
                    "epsilon" => SweepVar::Epsilon,
                    "lambda0" => SweepVar::Lambda0,
                    other => {
                        return Err(parse_err(
                            line_no,
                            format!("sweep.var must be snr_f|snr_d|epsilon|lambda0, got {other:?}"),
                        ))
                    }
                };
                match &mut self.sweep {
                    Some(s) => s.var = var,
                    None => self.sweep = Some(SweepSpec { var, values: Vec::new() }),
                }
            }
            "sweep.values" => {
                let values = if v.trim().is_empty() {
                    Vec::new()
                } else {
                    parse_list(line_no, key, v, parse_f64)?
                };
                match &mut self.sweep {
                    Some(s) => s.values = values,
                    None => {
                        self.sweep = Some(SweepSpec { var: SweepVar::SnrFDb, values })
                    }
                }
            }
            "sweep.range" => {
                // start:stop:step, inclusive of stop up to rounding
                let parts: Vec<&str> = v.split(':').collect();
                if parts.len() != 3 {
                    return Err(parse_err(line_no, "sweep.range must be start:stop:step"));
                }
                let start = parse_f64(line_no, key, parts[0])?;
                let stop = parse_f64(line_no, key, parts[1])?;
                let step = parse_f64(line_no, key, parts[2])?;
                if step <= 0.0 || stop < start {
                    return Err(parse_err(line_no, "sweep.range needs step > 0 and stop >= start"));
                }
                let mut values = Vec::new();
                let mut i = 0u32;
                loop {
                    let x = start + step * i as f64;
                    if x > stop + 1e-9 * step {
                        break;
                    }
                    values.push(x);
                    i += 1;
                }
                match &mut self.sweep {
                    Some(s) => s.values = values,
                    None => {
                        self.sweep = Some(SweepSpec { var: SweepVar::SnrFDb, values })
                    }
                }
            }
            "result.objective" => self.recorded_objective = Some(parse_f64(line_no, key, v)?),
            other => {
                return Err(parse_err(line_no, format!("unknown key {other:?}")));
            }
        }
        Ok(())
    }

    /// Module-level validation of everything that is set.
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.queue.validate()?;
        if !(self.snr_f > 0.0) {
            return Err(Error::InvalidConfig("feedback.snr_f_db produced snr_f <= 0".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "problem.epsilon must be in (0, 1], got {}",
                self.epsilon
            )));
        }
        if let Some(p) = self.policy()? {
            p.validate()?;
        }
        Ok(())
    }

    /// The explicit policy, when one was supplied. Missing alphas default
    /// to the symmetric detector.
    pub fn policy(&self) -> Result<Option<HarqPolicy>> {
        let Some(n) = &self.policy_n else { return Ok(None) };
        let alphas = match &self.policy_alphas {
            Some(a) => a.clone(),
            None => vec![0.0; n.len().saturating_sub(1)],
        };
        Ok(Some(HarqPolicy {
            n: n.clone(),
            alphas,
            feedback_timing_k: self.feedback_timing_k,
            n_max: self.n_max.max(*n.iter().max().unwrap_or(&1)),
        }))
    }

    pub fn problem(&self) -> OptimizationProblem {
        OptimizationProblem {
            channel: self.channel,
            queue: self.queue,
            snr_f: self.snr_f,
            max_attempts: self.max_attempts,
            n_max: self.n_max,
            epsilon: self.epsilon,
            feedback_timing_k: self.feedback_timing_k,
            scheme: self.scheme,
            multi_start: self.multi_start,
            prune: self.prune,
        }
    }

    /// Serializes a policy (plus the objective that produced it) in the same
    /// key-value format, so optimizer output is loadable by analyze/simulate.
    pub fn render_policy_file(policy: &HarqPolicy, objective: f64) -> String {
        let n: Vec<String> = policy.n.iter().map(|x| x.to_string()).collect();
        let alphas: Vec<String> = policy.alphas.iter().map(|x| format!("{x:.17e}")).collect();
        format!(
            "policy.n = {}\npolicy.alphas = {}\npolicy.k = {}\npolicy.n_max = {}\nresult.objective = {objective:.17e}\n",
            n.join(","),
            alphas.join(","),
            policy.feedback_timing_k,
            policy.n_max,
        )
    }

    /// Key-value dump of the effective configuration, for reproducibility.
    pub fn render(&self) -> String {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        map.insert("channel.snr_d_db", format!("{}", linear_to_db(self.channel.snr_d)));
        map.insert("channel.bandwidth_hz", format!("{}", self.channel.bandwidth_w));
        map.insert("channel.slot_duration_s", format!("{}", self.channel.slot_duration));
        map.insert("channel.payload_bits", format!("{}", self.channel.payload_bits));
        map.insert("channel.symbols_per_slot", format!("{}", self.channel.symbols_per_slot));
        map.insert("feedback.snr_f_db", format!("{}", linear_to_db(self.snr_f)));
        map.insert("queue.lambda0", format!("{}", self.queue.lambda0));
        map.insert("policy.k", format!("{}", self.feedback_timing_k));
        map.insert("policy.n_max", format!("{}", self.n_max));
        map.insert("problem.max_attempts", format!("{}", self.max_attempts));
        map.insert("problem.epsilon", format!("{}", self.epsilon));
        map.insert("problem.scheme", self.scheme.as_str().to_string());
        if let Some(n) = &self.policy_n {
            let n: Vec<String> = n.iter().map(|x| x.to_string()).collect();
            map.insert("policy.n", n.join(","));
        }
        if let Some(a) = &self.policy_alphas {
            let a: Vec<String> = a.iter().map(|x| x.to_string()).collect();
            map.insert("policy.alphas", a.join(","));
        }
        map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
