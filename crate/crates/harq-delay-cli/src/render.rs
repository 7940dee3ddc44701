//! Text and CSV rendering of reports. Output is deterministic: same inputs,
//! byte-identical output.

use harq_delay::harq_analytics::DelayReport;
use harq_delay::optimizer::OptimizationResult;
use harq_delay::simulator::{SimEstimate, SimReport};

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.9}")).collect::<Vec<_>>().join(";")
}

pub fn report_text(r: &DelayReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("p_fail            = {}\n", fmt_vec(&r.p_fail)));
    s.push_str(&format!("p_occur           = {}\n", fmt_vec(&r.p_occur)));
    s.push_str(&format!("p_out             = {:.9}\n", r.p_out));
    s.push_str(&format!("t_service_mean_s  = {:.9e}\n", r.t_service_mean));
    s.push_str(&format!("t_service_2nd_s2  = {:.9e}\n", r.t_service_2nd));
    s.push_str(&format!("t_queue_s         = {:.9e}\n", r.t_queue));
    s.push_str(&format!("t_ub_mean_s       = {:.9e}\n", r.t_ub_mean));
    s.push_str(&format!("expected_rtt      = {:.9}\n", r.expected_rtt));
    s.push_str(&format!("avg_delay_s       = {:.9e}\n", r.avg_delay));
    s.push_str(&format!("utilization       = {:.9}\n", r.utilization));
    s.push_str(&format!("stable            = {}\n", r.stable));
    s
}

pub fn report_csv(r: &DelayReport) -> String {
    let mut s = String::from(
        "p_fail,p_occur,p_out,t_service_mean_s,t_service_2nd_s2,t_queue_s,t_ub_mean_s,expected_rtt,avg_delay_s,utilization,stable\n",
    );
    s.push_str(&format!(
        "{},{},{:.12},{:.12e},{:.12e},{:.12e},{:.12e},{:.12},{:.12e},{:.12},{}\n",
        fmt_vec(&r.p_fail),
        fmt_vec(&r.p_occur),
        r.p_out,
        r.t_service_mean,
        r.t_service_2nd,
        r.t_queue,
        r.t_ub_mean,
        r.expected_rtt,
        r.avg_delay,
        r.utilization,
        r.stable
    ));
    s
}

pub fn optimize_text(r: &OptimizationResult) -> String {
    let mut s = String::new();
    s.push_str(&format!("feasible          = {}\n", r.feasible));
    s.push_str(&format!("objective_s       = {:.9e}\n", r.objective));
    s.push_str(&format!("n                 = {}\n", join(&r.best_policy.n)));
    s.push_str(&format!("alphas            = {}\n", fmt_vec(&r.best_policy.alphas)));
    s.push_str(&format!("cells_evaluated   = {}\n", r.cells_evaluated));
    s.push_str(&format!("pgd_iterations    = {}\n", r.pgd_iterations_total));
    s.push('\n');
    s.push_str(&report_text(&r.best_report));
    s
}

pub fn optimize_csv(r: &OptimizationResult) -> String {
    let mut s = String::from(
        "feasible,objective_s,n,alphas,p_out,cells_evaluated,pgd_iterations\n",
    );
    s.push_str(&format!(
        "{},{:.12e},{},{},{:.12},{},{}\n",
        r.feasible,
        r.objective,
        join(&r.best_policy.n),
        fmt_vec(&r.best_policy.alphas),
        r.best_report.p_out,
        r.cells_evaluated,
        r.pgd_iterations_total
    ));
    s
}

struct Comparison {
    name: String,
    analytic: f64,
    estimate: SimEstimate,
    tolerance: Tolerance,
}

enum Tolerance {
    /// |analytic - empirical| <= max(3 sigma, floor)
    ThreeSigma { floor: f64 },
    /// relative difference bound
    Relative(f64),
}

impl Comparison {
    fn passes(&self) -> bool {
        let diff = (self.analytic - self.estimate.mean).abs();
        match self.tolerance {
            Tolerance::ThreeSigma { floor } => {
                let sigma = 3.0 / 1.96 * self.estimate.half_width_95;
                diff <= sigma.max(floor)
            }
            Tolerance::Relative(rel) => diff <= rel * self.analytic.abs().max(f64::MIN_POSITIVE),
        }
    }
}

fn comparisons(sim: &SimReport, analytic: &DelayReport) -> Vec<Comparison> {
    let mut rows = Vec::new();
    // the analytic failure chain is a Gaussian approximation; allow its
    // stated accuracy as an absolute floor on top of the binomial noise
    for (i, e) in sim.p_fail.iter().enumerate() {
        rows.push(Comparison {
            name: format!("p_fail_{}", i + 1),
            analytic: analytic.p_fail[i],
            estimate: *e,
            tolerance: Tolerance::ThreeSigma { floor: 0.02 },
        });
    }
    for (i, e) in sim.p_occur.iter().enumerate() {
        rows.push(Comparison {
            name: format!("p_occur_{}", i + 1),
            analytic: analytic.p_occur[i],
            estimate: *e,
            tolerance: Tolerance::ThreeSigma { floor: 0.02 },
        });
    }
    rows.push(Comparison {
        name: "p_out".into(),
        analytic: analytic.p_out,
        estimate: sim.p_out,
        tolerance: Tolerance::ThreeSigma { floor: 0.02 },
    });
    rows.push(Comparison {
        name: "t_service_mean_s".into(),
        analytic: analytic.t_service_mean,
        estimate: sim.service_time,
        tolerance: Tolerance::Relative(0.05),
    });
    rows.push(Comparison {
        name: "t_queue_s".into(),
        analytic: analytic.t_queue,
        estimate: sim.queue_wait,
        tolerance: Tolerance::Relative(0.05),
    });
    rows.push(Comparison {
        name: "avg_delay_s".into(),
        analytic: analytic.avg_delay,
        estimate: sim.round_delay,
        tolerance: Tolerance::Relative(0.10),
    });
    rows.push(Comparison {
        name: "expected_rtt".into(),
        analytic: analytic.expected_rtt,
        estimate: sim.rtt_count,
        tolerance: Tolerance::Relative(0.10),
    });
    rows
}

pub fn simulate_text(sim: &SimReport, analytic: Option<&DelayReport>) -> String {
    let mut s = String::new();
    s.push_str(&format!("rounds            = {}\n", sim.rounds));
    s.push_str(&format!("packets           = {}\n", sim.packets));
    s.push_str(&format!("rng               = {}\n", sim.rng_algorithm));
    s.push_str(&format!("mean_queue_len    = {:.6}\n", sim.mean_queue_len));
    s.push_str(&format!("job_rate_per_s    = {:.6}\n", sim.job_rate));
    match analytic {
        Some(a) => {
            s.push_str(&format!(
                "{:<18} {:>14} {:>14} {:>12} {:>6}\n",
                "quantity", "analytic", "empirical", "ci95", "check"
            ));
            for c in comparisons(sim, a) {
                s.push_str(&format!(
                    "{:<18} {:>14.6e} {:>14.6e} {:>12.3e} {:>6}\n",
                    c.name,
                    c.analytic,
                    c.estimate.mean,
                    c.estimate.half_width_95,
                    if c.passes() { "pass" } else { "FAIL" }
                ));
            }
        }
        None => {
            s.push_str("analytic reference unavailable (unstable queue)\n");
            s.push_str(&format!("p_out             = {:.9}\n", sim.p_out.mean));
            s.push_str(&format!("queue_wait_s      = {:.9e}\n", sim.queue_wait.mean));
            s.push_str(&format!("round_delay_s     = {:.9e}\n", sim.round_delay.mean));
        }
    }
    s
}

pub fn simulate_csv(sim: &SimReport, analytic: Option<&DelayReport>) -> String {
    let mut s = String::from("quantity,analytic,empirical,ci95,check\n");
    if let Some(a) = analytic {
        for c in comparisons(sim, a) {
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{:.6e},{}\n",
                c.name,
                c.analytic,
                c.estimate.mean,
                c.estimate.half_width_95,
                if c.passes() { "pass" } else { "fail" }
            ));
        }
    }
    s
}
