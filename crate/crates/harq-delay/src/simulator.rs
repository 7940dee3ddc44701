//! Discrete-event Monte Carlo oracle for the HARQ process.
//!
//! Packets arrive as a Poisson stream into a FIFO queue. Each transmission
//! attempt is a separate job: the server is occupied for T_i only, the k-slot
//! feedback wait happens off-server and the follow-up attempt re-enters the
//! queue as a fresh arrival, mirroring the analytic accounting where the
//! total arrival rate includes retransmissions. `occupy_during_feedback`
//! switches to the physical alternative where the server holds the packet
//! through the feedback wait.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::FeedbackParams;
use crate::harq_analytics::{HarqPolicy, QueueParams};
use crate::mi_stats::{channel_uses, mi_moments, ChannelParams, MiMoments};

const RNG_ALGORITHM: &str = "chacha12";
const QUEUE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub policy: HarqPolicy,
    pub channel: ChannelParams,
    pub feedback: FeedbackParams,
    pub queue: QueueParams,
    /// Packets to deliver (statistics cover ids >= warmup_packets).
    pub num_packets: u64,
    pub warmup_packets: u64,
    pub seed: u64,
    /// Draw per-attempt MI from the Gaussian approximation instead of
    /// exact log2(1 + |h|^2 SNR_d); isolates the approximation error.
    pub use_gaussian_mi: bool,
    /// Keep the server busy through the k-slot feedback wait.
    pub occupy_during_feedback: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.channel.validate()?;
        self.queue.validate()?;
        self.feedback.validate(self.policy.max_attempts())?;
        if self.num_packets <= self.warmup_packets {
            return Err(Error::InvalidConfig(format!(
                "num_packets ({}) must exceed warmup_packets ({})",
                self.num_packets, self.warmup_packets
            )));
        }
        Ok(())
    }
}

/// Point estimate with 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub n_samples: u64,
}

impl SimEstimate {
    fn from_moments(sum: f64, sum_sq: f64, n: u64) -> Self {
        if n == 0 {
            return Self { mean: f64::NAN, half_width_95: f64::NAN, n_samples: 0 };
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        Self { mean, half_width_95: 1.96 * (var / n as f64).sqrt(), n_samples: n }
    }

    fn proportion(hits: u64, n: u64) -> Self {
        if n == 0 {
            return Self { mean: f64::NAN, half_width_95: f64::NAN, n_samples: 0 };
        }
        let p = hits as f64 / n as f64;
        Self {
            mean: p,
            half_width_95: 1.96 * (p * (1.0 - p) / n as f64).sqrt(),
            n_samples: n,
        }
    }
}

/// Empirical mirror of the analytic `DelayReport`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    /// Empirical P_{i,f}: accumulated MI through attempt i short of N_b.
    pub p_fail: Vec<SimEstimate>,
    /// Empirical P_i: attempt i transmitted within a round.
    pub p_occur: Vec<SimEstimate>,
    pub p_out: SimEstimate,
    /// Mean duration of effective attempts (packet not yet decodable).
    pub service_time: SimEstimate,
    /// Mean wait of an attempt-job from queue entry to service start.
    pub queue_wait: SimEstimate,
    /// Mean total delay per delivered packet: sum of wait + T_i + k T_slot
    /// over every attempt across all of its rounds.
    pub round_delay: SimEstimate,
    /// Mean number of transmission attempts (RTTs) per delivered packet.
    pub rtt_count: SimEstimate,
    /// Time-averaged number of waiting jobs.
    pub mean_queue_len: f64,
    /// Served attempt-jobs per second.
    pub job_rate: f64,
    pub rounds: u64,
    pub packets: u64,
    pub rng_algorithm: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RoundOutcome {
    Delivered,
    OutageExhausted,
    OutageFeedback,
}

/// One line per finished HARQ round, for offline analysis.
#[derive(Debug, Clone)]
pub struct RoundTrace {
    pub packet_id: u64,
    pub attempts: u32,
    pub outcome: &'static str,
    pub wait: f64,
    pub service: f64,
}

struct Round {
    packet_id: u64,
    /// index of the next attempt to transmit (0-based)
    attempt: usize,
    mi_acc: f64,
    mi_cum: Vec<f64>,
    decodable: bool,
    // per-round accounting for the trace
    wait_acc: f64,
    service_acc: f64,
    // per-packet accounting, carried across outage-retry rounds
    pkt_delay_acc: f64,
    pkt_attempts: u32,
}

impl Round {
    fn fresh(packet_id: u64, carry: Option<&Round>) -> Self {
        Round {
            packet_id,
            attempt: 0,
            mi_acc: 0.0,
            mi_cum: Vec::new(),
            decodable: false,
            wait_acc: 0.0,
            service_acc: 0.0,
            pkt_delay_acc: carry.map_or(0.0, |r| r.pkt_delay_acc),
            pkt_attempts: carry.map_or(0, |r| r.pkt_attempts),
        }
    }
}

struct Job {
    round: Round,
    enqueue_time: f64,
}

enum EventKind {
    NewPacket(u64),
    JobArrival(Box<Round>),
    Departure,
}

struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want earliest-first
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Default)]
struct Stats {
    rounds: u64,
    occur: Vec<u64>,
    fail_after: Vec<u64>,
    outages: u64,
    wait_sum: f64,
    wait_sq: f64,
    wait_n: u64,
    eff_service_sum: f64,
    eff_service_n: u64,
    delay_sum: f64,
    delay_sq: f64,
    rtt_sum: f64,
    rtt_sq: f64,
    delivered: u64,
    qlen_area: f64,
    jobs_served: u64,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    moments: MiMoments,
    uses: Vec<f64>,
    durations: Vec<f64>,
    sigma_f: f64,
    k_delay: f64,
    rng: ChaCha12Rng,
    events: BinaryHeap<Event>,
    seq: u64,
    queue: VecDeque<Job>,
    in_service: Option<Job>,
    now: f64,
    last_event_time: f64,
    stats: Stats,
    trace: Vec<RoundTrace>,
    collect_trace: bool,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, collect_trace: bool) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.policy.max_attempts();
        let moments = mi_moments(&cfg.channel)?;
        let uses =
            cfg.policy.n.iter().map(|&n| channel_uses(n, &cfg.channel)).collect();
        let durations = cfg.policy.durations(&cfg.channel);
        let mut stats = Stats::default();
        stats.occur = vec![0; m];
        stats.fail_after = vec![0; m];
        Ok(Sim {
            cfg,
            moments,
            uses,
            durations,
            sigma_f: 1.0 / (2.0 * cfg.feedback.snr_f).sqrt(),
            k_delay: cfg.policy.feedback_timing_k as f64 * cfg.channel.slot_duration,
            rng: ChaCha12Rng::seed_from_u64(cfg.seed),
            events: BinaryHeap::new(),
            seq: 0,
            queue: VecDeque::new(),
            in_service: None,
            now: 0.0,
            last_event_time: 0.0,
            stats,
            trace: Vec::new(),
            collect_trace,
        })
    }

    fn push_event(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Event { time, seq: self.seq, kind });
    }

    fn exp_interarrival(&mut self) -> f64 {
        let u: f64 = self.rng.gen();
        -(1.0 - u).ln() / self.cfg.queue.lambda0
    }

    fn draw_attempt_mi(&mut self, attempt: usize) -> f64 {
        let u_i = self.uses[attempt];
        if self.cfg.use_gaussian_mi {
            let z: f64 = self.rng.sample(StandardNormal);
            u_i * self.moments.mean_per_use + (u_i * self.moments.var_per_use).sqrt() * z
        } else {
            // one independent Rayleigh fade per channel use; the fractional
            // remainder of u_i gets a proportionally scaled final draw
            let s = self.cfg.channel.snr_d;
            let whole = u_i.floor() as u64;
            let frac = u_i - whole as f64;
            let mut total = 0.0;
            for _ in 0..whole {
                let u: f64 = self.rng.gen();
                let x = -(1.0 - u).ln();
                total += (1.0 + x * s).ln();
            }
            if frac > 0.0 {
                let u: f64 = self.rng.gen();
                let x = -(1.0 - u).ln();
                total += frac * (1.0 + x * s).ln();
            }
            std::f64::consts::LOG2_E * total
        }
    }

    fn in_measurement(&self, packet_id: u64) -> bool {
        packet_id >= self.cfg.warmup_packets
    }

    /// Transmit the next attempt of `job.round` on the server at `self.now`.
    fn begin_attempt(&mut self, mut job: Job) {
        let wait = self.now - job.enqueue_time;
        let idx = job.round.attempt;
        let t_i = self.durations[idx];
        let measured = self.in_measurement(job.round.packet_id);

        if measured {
            self.stats.wait_sum += wait;
            self.stats.wait_sq += wait * wait;
            self.stats.wait_n += 1;
            self.stats.occur[idx] += 1;
            if !job.round.decodable {
                self.stats.eff_service_sum += t_i;
                self.stats.eff_service_n += 1;
            }
        }

        let mi = self.draw_attempt_mi(idx);
        job.round.mi_acc += mi;
        job.round.mi_cum.push(job.round.mi_acc);
        if job.round.mi_acc >= self.cfg.channel.payload_bits {
            job.round.decodable = true;
        }
        job.round.wait_acc += wait;
        job.round.service_acc += t_i;
        job.round.pkt_delay_acc += wait + t_i + self.k_delay;
        job.round.pkt_attempts += 1;

        self.push_event(self.now + t_i, EventKind::Departure);
        self.in_service = Some(job);
    }

    fn maybe_start_service(&mut self) {
        if self.in_service.is_none() {
            if let Some(job) = self.queue.pop_front() {
                self.begin_attempt(job);
            }
        }
    }

    /// True when the detector reads ACK for a sent bit (`ack_sent`).
    fn feedback_detected_ack(&mut self, ack_sent: bool, alpha: f64) -> bool {
        let s = if ack_sent { 1.0 } else { -1.0 };
        let z: f64 = self.rng.sample(StandardNormal);
        s + self.sigma_f * z > alpha
    }

    fn finish_round(&mut self, mut round: Round, outcome: RoundOutcome) -> Option<Round> {
        let measured = self.in_measurement(round.packet_id);
        let m = self.cfg.policy.max_attempts();

        // virtually complete the fading draws so P_{i,f} is observed for
        // every i, independent of where the protocol stopped
        while round.mi_cum.len() < m {
            let idx = round.mi_cum.len();
            let mi = self.draw_attempt_mi(idx);
            round.mi_acc += mi;
            round.mi_cum.push(round.mi_acc);
        }

        if measured {
            self.stats.rounds += 1;
            for i in 0..m {
                if round.mi_cum[i] < self.cfg.channel.payload_bits {
                    self.stats.fail_after[i] += 1;
                }
            }
            if outcome != RoundOutcome::Delivered {
                self.stats.outages += 1;
            }
        }
        if self.collect_trace {
            self.trace.push(RoundTrace {
                packet_id: round.packet_id,
                attempts: round.mi_cum.len().min(round.attempt + 1) as u32,
                outcome: match outcome {
                    RoundOutcome::Delivered => "delivered",
                    RoundOutcome::OutageExhausted => "outage_exhausted",
                    RoundOutcome::OutageFeedback => "outage_feedback",
                },
                wait: round.wait_acc,
                service: round.service_acc,
            });
        }

        match outcome {
            RoundOutcome::Delivered => {
                if measured {
                    self.stats.delivered += 1;
                    self.stats.delay_sum += round.pkt_delay_acc;
                    self.stats.delay_sq += round.pkt_delay_acc * round.pkt_delay_acc;
                    self.stats.rtt_sum += round.pkt_attempts as f64;
                    self.stats.rtt_sq += (round.pkt_attempts as f64).powi(2);
                }
                None
            }
            _ => {
                // outage: hand the packet back as a fresh arrival (new round)
                Some(Round::fresh(round.packet_id, Some(&round)))
            }
        }
    }

    fn handle_departure(&mut self) -> Result<()> {
        let job = self.in_service.take().expect("departure with idle server");
        let round = job.round;
        let idx = round.attempt;
        let m = self.cfg.policy.max_attempts();

        let next = if idx + 1 < m {
            let alpha = self.cfg.feedback.alphas[idx];
            let detected_ack = self.feedback_detected_ack(round.decodable, alpha);
            if detected_ack {
                if round.decodable {
                    self.finish_round(round, RoundOutcome::Delivered)
                } else {
                    self.finish_round(round, RoundOutcome::OutageFeedback)
                }
            } else {
                // NACK observed: retransmit after the feedback wait
                let mut r = round;
                r.attempt += 1;
                if self.cfg.occupy_during_feedback {
                    // hold the server through the wait and the next attempt
                    let resume = self.now + self.k_delay;
                    self.now = resume;
                    self.begin_attempt(Job { round: r, enqueue_time: resume });
                    return Ok(());
                }
                let t = self.now + self.k_delay;
                self.push_event(t, EventKind::JobArrival(Box::new(r)));
                None
            }
        } else if round.decodable {
            self.finish_round(round, RoundOutcome::Delivered)
        } else {
            self.finish_round(round, RoundOutcome::OutageExhausted)
        };

        if let Some(retry) = next {
            let t = self.now + self.k_delay;
            self.push_event(t, EventKind::JobArrival(Box::new(retry)));
        }
        self.maybe_start_service();
        Ok(())
    }

    fn run(&mut self) -> Result<()> {
        let t0 = self.exp_interarrival();
        self.push_event(t0, EventKind::NewPacket(0));

        while let Some(ev) = self.events.pop() {
            self.stats.qlen_area += self.queue.len() as f64 * (ev.time - self.last_event_time);
            self.last_event_time = ev.time;
            self.now = ev.time;
            match ev.kind {
                EventKind::NewPacket(id) => {
                    if id + 1 < self.cfg.num_packets {
                        let dt = self.exp_interarrival();
                        self.push_event(self.now + dt, EventKind::NewPacket(id + 1));
                    }
                    let round = Round::fresh(id, None);
                    self.queue.push_back(Job { round, enqueue_time: self.now });
                    self.maybe_start_service();
                }
                EventKind::JobArrival(round) => {
                    self.queue.push_back(Job { round: *round, enqueue_time: self.now });
                    self.maybe_start_service();
                }
                EventKind::Departure => {
                    self.stats.jobs_served += 1;
                    self.handle_departure()?;
                }
            }
            if self.queue.len() > QUEUE_LIMIT {
                return Err(Error::QueueExplosion {
                    limit: QUEUE_LIMIT,
                    time: self.now,
                    jobs_done: self.stats.jobs_served,
                });
            }
        }
        Ok(())
    }

    fn report(&self) -> SimReport {
        let s = &self.stats;
        let m = self.cfg.policy.max_attempts();
        SimReport {
            p_fail: (0..m).map(|i| SimEstimate::proportion(s.fail_after[i], s.rounds)).collect(),
            p_occur: (0..m).map(|i| SimEstimate::proportion(s.occur[i], s.rounds)).collect(),
            p_out: SimEstimate::proportion(s.outages, s.rounds),
            service_time: SimEstimate {
                mean: s.eff_service_sum / s.eff_service_n.max(1) as f64,
                half_width_95: 0.0,
                n_samples: s.eff_service_n,
            },
            queue_wait: SimEstimate::from_moments(s.wait_sum, s.wait_sq, s.wait_n),
            round_delay: SimEstimate::from_moments(s.delay_sum, s.delay_sq, s.delivered),
            rtt_count: SimEstimate::from_moments(s.rtt_sum, s.rtt_sq, s.delivered),
            mean_queue_len: s.qlen_area / self.last_event_time.max(f64::MIN_POSITIVE),
            job_rate: s.jobs_served as f64 / self.last_event_time.max(f64::MIN_POSITIVE),
            rounds: s.rounds,
            packets: s.delivered,
            rng_algorithm: RNG_ALGORITHM.to_string(),
        }
    }
}

/// Runs the discrete-event simulation and returns empirical estimates of
/// every analytic quantity.
pub fn run(config: &SimConfig) -> Result<SimReport> {
    let mut sim = Sim::new(config, false)?;
    sim.run()?;
    Ok(sim.report())
}

/// Like [`run`], additionally writing one tab-separated record per HARQ round
/// (packet id, attempts, outcome, queue wait, service time) to `sink`.
pub fn run_traced(config: &SimConfig, sink: &mut dyn Write) -> Result<SimReport> {
    let mut sim = Sim::new(config, true)?;
    sim.run()?;
    writeln!(sink, "packet_id\tattempts\toutcome\twait_s\tservice_s")
        .map_err(|e| Error::InvalidConfig(format!("trace write failed: {e}")))?;
    for r in &sim.trace {
        writeln!(
            sink,
            "{}\t{}\t{}\t{:.9}\t{:.9}",
            r.packet_id, r.attempts, r.outcome, r.wait, r.service
        )
        .map_err(|e| Error::InvalidConfig(format!("trace write failed: {e}")))?;
    }
    Ok(sim.report())
}

/// Independent replications with disjoint RNG streams, evaluated in parallel.
pub fn run_replications(config: &SimConfig, replications: u64) -> Result<Vec<SimReport>> {
    use rayon::prelude::*;
    (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(rep.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            run(&cfg)
        })
        .collect()
}

/// Symbol-level Monte Carlo of the asymmetric detector: returns per-attempt
/// empirical (NACK-error, ACK-error) rates over `trials` sends of each bit.
pub fn validate_feedback_channel(
    feedback: &FeedbackParams,
    trials: u64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sigma = 1.0 / (2.0 * feedback.snr_f).sqrt();
    let mut p_n = Vec::with_capacity(feedback.alphas.len());
    let mut p_a = Vec::with_capacity(feedback.alphas.len());
    for &alpha in &feedback.alphas {
        let mut nack_flips = 0u64;
        let mut ack_flips = 0u64;
        for _ in 0..trials {
            let z: f64 = rng.sample(StandardNormal);
            if -1.0 + sigma * z > alpha {
                nack_flips += 1;
            }
            let z: f64 = rng.sample(StandardNormal);
            if 1.0 + sigma * z <= alpha {
                ack_flips += 1;
            }
        }
        p_n.push(nack_flips as f64 / trials as f64);
        p_a.push(ack_flips as f64 / trials as f64);
    }
    (p_n, p_a)
}
