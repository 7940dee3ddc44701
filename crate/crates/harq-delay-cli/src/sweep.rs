//! Sweep workflow: optimize at every point of the swept variable for the
//! three schemes and emit plottable CSV.

use harq_delay::config::{db_to_linear, RunConfig, SweepSpec, SweepVar};
use harq_delay::optimizer::{optimize, OptimizationProblem, Scheme};

pub const CSV_HEADER: &str = "sweep_var,sweep_value,scheme,feasible,objective_s,p_out,n,alphas";

fn problem_at(base: &RunConfig, var: SweepVar, value: f64, scheme: Scheme) -> OptimizationProblem {
    let mut p = base.problem();
    match var {
        SweepVar::SnrFDb => p.snr_f = db_to_linear(value),
        SweepVar::SnrDDb => p.channel.snr_d = db_to_linear(value),
        SweepVar::Epsilon => p.epsilon = value,
        SweepVar::Lambda0 => p.queue.lambda0 = value,
    }
    p.scheme = scheme;
    p
}

pub fn run_sweep(base: &RunConfig, spec: &SweepSpec) -> anyhow::Result<String> {
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for &value in &spec.values {
        for scheme in [Scheme::Afd, Scheme::Sfd, Scheme::PerfectFeedback] {
            let problem = problem_at(base, spec.var, value, scheme);
            let r = optimize(&problem)?;
            let n: Vec<String> = r.best_policy.n.iter().map(|x| x.to_string()).collect();
            let alphas: Vec<String> =
                r.best_policy.alphas.iter().map(|x| format!("{x:.6}")).collect();
            csv.push_str(&format!(
                "{},{},{},{},{:.12e},{:.12},{},{}\n",
                spec.var.as_str(),
                value,
                scheme.as_str(),
                r.feasible,
                r.objective,
                r.best_report.p_out,
                n.join(";"),
                alphas.join(";"),
            ));
        }
    }
    Ok(csv)
}
