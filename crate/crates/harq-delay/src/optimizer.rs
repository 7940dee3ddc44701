//! Delay minimization over per-attempt lengths and detection indices:
//! exhaustive enumeration of the integer length vectors, projected gradient
//! descent over the detection indices inside each cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{error_rates, FeedbackErrorRates, FeedbackParams};
use crate::harq_analytics::{
    check_stability, occurrence_probs, outage_prob, queue_delay, service_moments, success_probs,
    DelayReport, HarqPolicy, QueueParams,
};
use crate::mi_stats::{failure_prob, mi_moments, ChannelParams, MiMoments};

/// Feedback model the search optimizes for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Free detection indices (the proposed scheme).
    Afd,
    /// Symmetric detection: all alpha forced to 0.
    Sfd,
    /// Error-free feedback baseline (P_N = P_A = 0).
    PerfectFeedback,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Afd => "afd",
            Scheme::Sfd => "sfd",
            Scheme::PerfectFeedback => "perfect",
        }
    }
}

pub const ALPHA_MAX: f64 = 1.0 - 1e-3;

const PGD_STEP0: f64 = 0.1;
const PGD_ARMIJO: f64 = 1e-4;
const PGD_GRAD_H: f64 = 1e-5;
const PGD_STEP_TOL: f64 = 1e-7;
const PGD_MAX_ITERS: usize = 500;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub channel: ChannelParams,
    pub queue: QueueParams,
    /// Feedback-channel SNR, linear.
    pub snr_f: f64,
    /// Maximum attempts per round.
    pub max_attempts: usize,
    /// Upper bound on each n_i.
    pub n_max: u32,
    /// Outage limit; 1 disables the constraint.
    pub epsilon: f64,
    /// Feedback timing in slots.
    pub feedback_timing_k: u32,
    pub scheme: Scheme,
    /// Add fixed PGD restarts at alpha in {0, 0.25, 0.5, 0.75}^(M-1), capped
    /// at 64 starts, to escape local minima.
    pub multi_start: bool,
    /// Skip cells that cannot be stable for any alpha. Off by default so the
    /// exhaustive search stays the reference.
    pub prune: bool,
}

impl OptimizationProblem {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.queue.validate()?;
        if !(self.snr_f > 0.0) {
            return Err(Error::InvalidConfig(format!("snr_f must be > 0, got {}", self.snr_f)));
        }
        if self.max_attempts < 1 {
            return Err(Error::InvalidConfig("max_attempts must be >= 1".into()));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidConfig("n_max must be >= 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be in (0, 1], got {}",
                self.epsilon
            )));
        }
        let cells = (self.n_max as f64).powi(self.max_attempts as i32);
        if cells > 1e8 {
            return Err(Error::InvalidConfig(format!(
                "search space of {cells:.3e} cells is too large; lower n_max or max_attempts"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_policy: HarqPolicy,
    pub best_report: DelayReport,
    /// Long-term average delay of the best feasible policy, seconds.
    pub objective: f64,
    pub feasible: bool,
    pub cells_evaluated: u64,
    pub pgd_iterations_total: u64,
}

/// Everything PGD needs inside one cell: the failure probabilities only
/// depend on n, so they are computed once per cell.
struct CellCtx<'a> {
    problem: &'a OptimizationProblem,
    n: Vec<u32>,
    p_fail: Vec<f64>,
}

struct EvalOutcome {
    report: Option<DelayReport>,
    p_out: f64,
    objective: f64,
}

impl<'a> CellCtx<'a> {
    fn new(problem: &'a OptimizationProblem, moments: &'a MiMoments, n: Vec<u32>) -> Self {
        let p_fail = (1..=n.len())
            .map(|i| failure_prob(&n[..i], &problem.channel, moments))
            .collect();
        CellCtx { problem, n, p_fail }
    }

    fn rates(&self, alphas: &[f64]) -> FeedbackErrorRates {
        match self.problem.scheme {
            Scheme::PerfectFeedback => FeedbackErrorRates::perfect(self.n.len()),
            _ => error_rates(&FeedbackParams {
                snr_f: self.problem.snr_f,
                alphas: alphas.to_vec(),
            }),
        }
    }

    fn policy(&self, alphas: &[f64]) -> HarqPolicy {
        HarqPolicy {
            n: self.n.clone(),
            alphas: alphas.to_vec(),
            feedback_timing_k: self.problem.feedback_timing_k,
            n_max: self.problem.n_max,
        }
    }

    /// Objective value (average delay) at `alphas`; infinite when unstable.
    fn eval(&self, alphas: &[f64]) -> EvalOutcome {
        let rates = self.rates(alphas);
        let p_occur = occurrence_probs(&self.p_fail, &rates).expect("lengths fixed per cell");
        let p_out = outage_prob(&self.p_fail, &rates).expect("lengths fixed per cell");
        let policy = self.policy(alphas);
        let service = service_moments(&policy, &self.p_fail, &p_occur, &self.problem.channel);
        let (stable, utilization) = check_stability(&service, p_out, &self.problem.queue);
        if !stable {
            return EvalOutcome { report: None, p_out, objective: f64::INFINITY };
        }
        let t_queue = match queue_delay(&service, p_out, &self.problem.queue) {
            Ok(t) => t,
            Err(_) => return EvalOutcome { report: None, p_out, objective: f64::INFINITY },
        };
        let t_ub = t_queue
            + service.mean
            + self.problem.feedback_timing_k as f64 * self.problem.channel.slot_duration;
        let m = self.n.len();
        let p_succ = success_probs(&self.p_fail, &rates).expect("lengths fixed per cell");
        let sum_ps: f64 = p_succ[..m - 1].iter().sum();
        let expected_rtt = (m as f64 + 1.0 - sum_ps) / (1.0 - p_out);
        let avg_delay = expected_rtt * t_ub;
        EvalOutcome {
            report: Some(DelayReport {
                p_fail: self.p_fail.clone(),
                p_occur,
                p_out,
                t_service_mean: service.mean,
                t_service_2nd: service.sum_t2_p / service.sum_p,
                t_queue,
                t_ub_mean: t_ub,
                expected_rtt,
                avg_delay,
                stable,
                utilization,
            }),
            p_out,
            objective: avg_delay,
        }
    }

    fn objective(&self, alphas: &[f64]) -> f64 {
        self.eval(alphas).objective
    }

    fn p_out_at(&self, alphas: &[f64]) -> f64 {
        let rates = self.rates(alphas);
        outage_prob(&self.p_fail, &rates).expect("lengths fixed per cell")
    }

    /// Clamp into the box, then bisect toward the all-max-alpha point (which
    /// minimizes outage) until the outage constraint holds again.
    fn project(&self, alphas: &mut [f64]) {
        for a in alphas.iter_mut() {
            *a = a.clamp(0.0, ALPHA_MAX);
        }
        let eps = self.problem.epsilon;
        if self.p_out_at(alphas) <= eps {
            return;
        }
        let start = alphas.to_vec();
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let cand: Vec<f64> =
                start.iter().map(|&a| a + mid * (ALPHA_MAX - a)).collect();
            if self.p_out_at(&cand) <= eps {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        for (a, &s) in alphas.iter_mut().zip(&start) {
            *a = s + hi * (ALPHA_MAX - s);
        }
    }
}

/// PGD over the detection indices for a fixed length vector. Deterministic:
/// fixed start, central finite differences, backtracking line search.
///
/// Returns the optimized alphas, the objective, the report at the optimum and
/// the number of iterations used.
fn pgd_alpha_from(
    ctx: &CellCtx,
    start: &[f64],
) -> Result<(Vec<f64>, f64, DelayReport, u64)> {
    let dims = start.len();
    let eps = ctx.problem.epsilon;

    // feasibility of the whole cell: max alpha minimizes outage
    let alpha_max_vec = vec![ALPHA_MAX; dims];
    let out_min = ctx.p_out_at(&alpha_max_vec);
    if out_min > eps {
        return Err(Error::CellInfeasible { min_p_out: out_min, epsilon: eps });
    }

    let mut alphas = start.to_vec();
    ctx.project(&mut alphas);
    let mut current = ctx.eval(&alphas);
    if !current.objective.is_finite() {
        // try the outage-minimizing corner before declaring the cell dead
        alphas = alpha_max_vec.clone();
        current = ctx.eval(&alphas);
        if !current.objective.is_finite() {
            return Err(Error::CellInfeasible { min_p_out: out_min, epsilon: eps });
        }
    }

    if dims == 0 {
        let report = current.report.expect("finite objective has a report");
        return Ok((alphas, current.objective, report, 0));
    }

    let mut iters = 0u64;
    for _ in 0..PGD_MAX_ITERS {
        iters += 1;
        // central finite differences; the analytic formulas are valid for
        // any real alpha, so probe points may leave the box
        let mut grad = vec![0.0; dims];
        for d in 0..dims {
            let mut hi = alphas.clone();
            let mut lo = alphas.clone();
            hi[d] += PGD_GRAD_H;
            lo[d] -= PGD_GRAD_H;
            grad[d] = (ctx.objective(&hi) - ctx.objective(&lo)) / (2.0 * PGD_GRAD_H);
        }
        let grad_norm_sq: f64 = grad.iter().map(|g| g * g).sum();
        if grad_norm_sq == 0.0 {
            break;
        }

        // scale the first trial so it moves PGD_STEP0 in alpha space; the
        // objective is in seconds, so raw gradients can be tiny
        let mut eta = PGD_STEP0 / grad_norm_sq.sqrt();
        let eta_floor = eta * 1e-11;
        let mut moved = false;
        while eta > eta_floor {
            let mut cand: Vec<f64> =
                alphas.iter().zip(&grad).map(|(a, g)| a - eta * g).collect();
            ctx.project(&mut cand);
            let cand_eval = ctx.eval(&cand);
            if cand_eval.objective.is_finite()
                && cand_eval.objective <= current.objective - PGD_ARMIJO * eta * grad_norm_sq
            {
                let step_sq: f64 =
                    alphas.iter().zip(&cand).map(|(a, c)| (a - c) * (a - c)).sum();
                alphas = cand;
                current = cand_eval;
                moved = true;
                if step_sq.sqrt() < PGD_STEP_TOL {
                    let report = current.report.expect("finite objective has a report");
                    return Ok((alphas, current.objective, report, iters));
                }
                break;
            }
            eta *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let report = current.report.expect("finite objective has a report");
    Ok((alphas, current.objective, report, iters))
}

/// Projected gradient descent over alpha for a fixed length vector `n`.
pub fn pgd_alpha(
    n: &[u32],
    problem: &OptimizationProblem,
) -> Result<(Vec<f64>, f64)> {
    let moments = mi_moments(&problem.channel)?;
    let ctx = CellCtx::new(problem, &moments, n.to_vec());
    let dims = n.len() - 1;
    let (alphas, obj, _, _) = pgd_best(&ctx, dims)?;
    Ok((alphas, obj))
}

fn pgd_starts(problem: &OptimizationProblem, dims: usize) -> Vec<Vec<f64>> {
    let mut starts = vec![vec![0.0; dims]];
    if problem.multi_start && dims > 0 {
        let levels = [0.0, 0.25, 0.5, 0.75];
        let total = 4usize.pow(dims as u32).min(64);
        for idx in 1..total {
            let mut s = Vec::with_capacity(dims);
            let mut rem = idx;
            for _ in 0..dims {
                s.push(levels[rem % 4]);
                rem /= 4;
            }
            starts.push(s);
        }
    }
    starts
}

fn pgd_best(ctx: &CellCtx, dims: usize) -> Result<(Vec<f64>, f64, DelayReport, u64)> {
    // SFD pins every alpha to 0; perfect feedback makes alpha irrelevant.
    // Either way the cell reduces to a single evaluation.
    if ctx.problem.scheme != Scheme::Afd {
        let alphas = vec![0.0; dims];
        let out = ctx.eval(&alphas);
        if out.p_out > ctx.problem.epsilon || !out.objective.is_finite() {
            return Err(Error::CellInfeasible {
                min_p_out: out.p_out,
                epsilon: ctx.problem.epsilon,
            });
        }
        let report = out.report.expect("finite objective has a report");
        return Ok((alphas, out.objective, report, 0));
    }

    let mut best: Option<(Vec<f64>, f64, DelayReport)> = None;
    let mut iters = 0u64;
    let mut infeasible = None;
    for start in pgd_starts(ctx.problem, dims) {
        match pgd_alpha_from(ctx, &start) {
            Ok((a, obj, rep, it)) => {
                iters += it;
                let better = match &best {
                    None => true,
                    Some((ba, bobj, _)) => {
                        obj < *bobj || (obj == *bobj && a.as_slice() < ba.as_slice())
                    }
                };
                if better {
                    best = Some((a, obj, rep));
                }
            }
            Err(e) => infeasible = Some(e),
        }
    }
    match best {
        Some((a, obj, rep)) => Ok((a, obj, rep, iters)),
        None => Err(infeasible.expect("no starts attempted")),
    }
}

struct CellOutcome {
    n: Vec<u32>,
    alphas: Vec<f64>,
    objective: f64,
    report: DelayReport,
    iters: u64,
}

fn cell_index_to_n(mut idx: u64, m: usize, n_max: u32) -> Vec<u32> {
    // lexicographic order: n_1 is the most significant digit
    let mut n = vec![1u32; m];
    for d in (0..m).rev() {
        n[d] = 1 + (idx % n_max as u64) as u32;
        idx /= n_max as u64;
    }
    n
}

/// True when no alpha can stabilize the cell: first attempts alone arrive at
/// rate >= lambda_0 and each occupies the server for T_1, so T_1 * lambda_0
/// >= 1 rules the cell out regardless of the detection indices.
fn prune_cell(n: &[u32], problem: &OptimizationProblem) -> bool {
    let t1 = problem.channel.attempt_duration(n[0]);
    t1 * problem.queue.lambda0 >= 1.0
}

/// Exhaustive search over the length vectors with PGD over alpha in each
/// cell. Cells are evaluated in parallel; ties are broken toward the
/// lexicographically smallest n, then the smallest alpha vector, so the
/// result does not depend on scheduling.
pub fn optimize(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    problem.validate()?;
    let moments = mi_moments(&problem.channel)?;
    let m = problem.max_attempts;
    let total: u64 = (problem.n_max as u64).pow(m as u32);

    let outcomes: Vec<std::result::Result<CellOutcome, (Vec<u32>, f64)>> = (0..total)
        .into_par_iter()
        .filter_map(|idx| {
            let n = cell_index_to_n(idx, m, problem.n_max);
            if problem.prune && prune_cell(&n, problem) {
                return None;
            }
            let ctx = CellCtx::new(problem, &moments, n.clone());
            Some(match pgd_best(&ctx, m - 1) {
                Ok((alphas, objective, report, iters)) => {
                    Ok(CellOutcome { n, alphas, objective, report, iters })
                }
                Err(Error::CellInfeasible { min_p_out, .. }) => Err((n, min_p_out)),
                Err(_) => Err((n, f64::INFINITY)),
            })
        })
        .collect();

    let cells_evaluated = outcomes.len() as u64;
    let mut pgd_iterations_total = 0u64;
    let mut best: Option<CellOutcome> = None;
    let mut least_violation: Option<(Vec<u32>, f64)> = None;

    for o in outcomes {
        match o {
            Ok(c) => {
                pgd_iterations_total += c.iters;
                let better = match &best {
                    None => true,
                    Some(b) => {
                        (c.objective, &c.n, &c.alphas) < (b.objective, &b.n, &b.alphas)
                    }
                };
                if better {
                    best = Some(c);
                }
            }
            Err((n, viol)) => {
                let better = match &least_violation {
                    None => true,
                    Some((bn, bv)) => (viol, &n) < (*bv, bn),
                };
                if better {
                    least_violation = Some((n, viol));
                }
            }
        }
    }

    match best {
        Some(c) => Ok(OptimizationResult {
            best_policy: HarqPolicy {
                n: c.n,
                alphas: c.alphas,
                feedback_timing_k: problem.feedback_timing_k,
                n_max: problem.n_max,
            },
            objective: c.objective,
            best_report: c.report,
            feasible: true,
            cells_evaluated,
            pgd_iterations_total,
        }),
        None => {
            // no feasible cell: report the least-violating corner policy
            let (n, _) = least_violation
                .ok_or_else(|| Error::InvalidConfig("empty search space".into()))?;
            let ctx = CellCtx::new(problem, &moments, n.clone());
            let alphas = vec![ALPHA_MAX; m - 1];
            let eval = ctx.eval(&alphas);
            let report = match eval.report {
                Some(r) => r,
                None => {
                    // unstable even here; synthesize the report without the
                    // queue terms so callers still see the physical-layer state
                    let rates = ctx.rates(&alphas);
                    let p_occur = occurrence_probs(&ctx.p_fail, &rates)
                        .expect("lengths fixed per cell");
                    let p_out = eval.p_out;
                    let policy = ctx.policy(&alphas);
                    let service =
                        service_moments(&policy, &ctx.p_fail, &p_occur, &problem.channel);
                    let sum_ps: f64 = success_probs(&ctx.p_fail, &rates)
                        .expect("lengths fixed per cell")[..m - 1]
                        .iter()
                        .sum();
                    DelayReport {
                        p_fail: ctx.p_fail.clone(),
                        p_occur,
                        p_out,
                        t_service_mean: service.mean,
                        t_service_2nd: service.sum_t2_p / service.sum_p,
                        t_queue: f64::INFINITY,
                        t_ub_mean: f64::INFINITY,
                        expected_rtt: (m as f64 + 1.0 - sum_ps) / (1.0 - p_out),
                        avg_delay: f64::INFINITY,
                        stable: false,
                        utilization: f64::INFINITY,
                    }
                }
            };
            Ok(OptimizationResult {
                best_policy: HarqPolicy {
                    n,
                    alphas,
                    feedback_timing_k: problem.feedback_timing_k,
                    n_max: problem.n_max,
                },
                objective: f64::INFINITY,
                best_report: report,
                feasible: false,
                cells_evaluated,
                pgd_iterations_total,
            })
        }
    }
}
