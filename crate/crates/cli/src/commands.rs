use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context};
use aslopt_core::arcs::constraint_name;
use aslopt_core::asl::io::{write_trajectory_csv, AslJson};
use aslopt_core::asl::{build_equality_system, check_feasible, extract_asl, FeasibilityReport, KeypointKind, TimedTrajectory};
use aslopt_core::coi::chatter::{chattering_series_analysis, write_recursion_csv, ChatterReport};
use aslopt_core::coi::{rest_to_rest_seed, CoiAsl, CoiProblem};
use aslopt_core::experiments;
use aslopt_core::linalg;
use aslopt_core::linsys::{LinearSystem, StateVector};
use aslopt_core::optimality::{necessary_condition_test, OptimalityVerdict};
use aslopt_core::optimizer::{optimize, write_history_csv, DescentStatus, OptimizeReport, OptimizerConfig};
use aslopt_core::oracle::grid_bbs_oracle;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::input::{load_problem, load_trajectory, Problem};
use crate::{Cli, Command, ReproCase, Status};

pub fn run(cli: &Cli) -> anyhow::Result<Status> {
    let cfg = RunConfig::resolve(cli)?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    write_json(&cfg.out.join("run_config.json"), &cfg)?;
    match &cli.command {
        Command::Simulate { problem, trajectory } => simulate(&cfg, problem, trajectory),
        Command::Check { problem, trajectory } => check(&cfg, problem, trajectory),
        Command::Optimize { problem, trajectory } => cmd_optimize(&cfg, problem, trajectory.as_deref()),
        Command::Chatter { n, window, iterations } => chatter(&cfg, *n, window, *iterations),
        Command::Oracle { problem } => oracle(&cfg, problem),
        Command::Repro { case } => match case {
            ReproCase::ViiA => repro_viia(&cfg),
            ReproCase::ViiB => repro_viib(&cfg),
            ReproCase::ViiC => repro_viic(&cfg),
            ReproCase::Chatter4 => repro_chatter4(&cfg),
        },
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn write_trajectory(cfg: &RunConfig, sys: &LinearSystem, traj: &TimedTrajectory) -> anyhow::Result<()> {
    let f = File::create(cfg.out.join("trajectory.csv"))?;
    write_trajectory_csv(sys, traj, cfg.samples_per_interval, BufWriter::new(f))?;
    write_json(&cfg.out.join("asl.json"), &AslJson::new(traj))?;
    Ok(())
}

fn law_summary(sys: &LinearSystem, traj: &TimedTrajectory) -> String {
    let law = &traj.law;
    let mut parts = Vec::new();
    for (i, arc) in law.arcs.iter().enumerate() {
        let mut s = arc.kind.to_string();
        for m in &law.markers[i] {
            let ids: Vec<String> = m.touched.iter().map(|(p, r)| format!("{}@{r}", constraint_name(sys, *p))).collect();
            s.push_str(&format!(" ({})", ids.join(", ")));
        }
        parts.push(s);
        if let Some(ec) = law.end_constraints.get(i) {
            if !ec.is_empty() {
                let ids: Vec<String> = ec
                    .touched
                    .iter()
                    .map(|t| format!("{} {:?}/{:?}", constraint_name(sys, t.id), t.left, t.right))
                    .collect();
                parts.push(format!("{{{}}}", ids.join(", ")));
            }
        }
    }
    parts.join(" ")
}

fn print_report(report: &FeasibilityReport) {
    println!(
        "feasible: {}  min margin {:.3e}  max residual {:.3e}",
        report.feasible,
        report.min_margin(),
        report.max_residual
    );
    for v in &report.violations {
        println!("  violation: {v}");
    }
}

fn verdict_json(v: &OptimalityVerdict, coi: Option<(&CoiProblem, &TimedTrajectory)>) -> serde_json::Value {
    let mut out = json!({
        "rows": v.rows,
        "cols": v.cols,
        "rank": v.rank,
        "full_rank": v.full_rank,
        "satisfied": v.satisfied,
        "marginal": v.marginal,
        "dof": v.dof(),
        "free_columns": v.free_columns,
        "singular_values": v.singular_values,
    });
    if let Some((p, traj)) = coi {
        if let Ok(asl) = CoiAsl::from_law(p, &traj.law) {
            out["asl"] = json!(asl.to_string());
            out["dof_report"] = serde_json::to_value(asl.dof_report(p.n)).unwrap_or_default();
        }
    }
    out
}

fn print_verdict(v: &OptimalityVerdict) {
    println!(
        "dH/dt: {}x{}  rank(first M-1 cols) {}  full rank {}  DOF {}  necessary condition {}",
        v.rows,
        v.cols,
        v.rank,
        v.full_rank,
        v.dof(),
        if v.satisfied { "satisfied" } else { "NOT satisfied" }
    );
}

fn simulate(cfg: &RunConfig, problem: &Path, trajectory: &Path) -> anyhow::Result<Status> {
    let problem = load_problem(problem)?;
    let loaded = load_trajectory(&problem, trajectory, &cfg.tolerances)?;
    let report = check_feasible(&loaded.sys, &loaded.traj, loaded.xf.as_ref(), &cfg.tolerances)?;
    write_trajectory(cfg, &loaded.sys, &loaded.traj)?;
    write_json(&cfg.out.join("feasibility.json"), &report)?;
    println!("ASL: {}", law_summary(&loaded.sys, &loaded.traj));
    println!("arcs {}  keypoints {}  t_f {}", loaded.traj.law.num_arcs(), loaded.traj.m(), loaded.traj.final_time());
    print_report(&report);
    Ok(if report.feasible { Status::Ok } else { Status::Infeasible })
}

fn check(cfg: &RunConfig, problem_path: &Path, trajectory: &Path) -> anyhow::Result<Status> {
    let problem = load_problem(problem_path)?;
    let loaded = load_trajectory(&problem, trajectory, &cfg.tolerances)?;
    let Some(xf) = &loaded.xf else {
        bail!("check needs a terminal state (xf in the problem or trajectory file)");
    };
    let report = check_feasible(&loaded.sys, &loaded.traj, Some(xf), &cfg.tolerances)?;
    if !report.feasible {
        print_report(&report);
        return Ok(Status::Infeasible);
    }
    let h = build_equality_system(&loaded.sys, &loaded.traj, xf, &cfg.tolerances)?;
    let verdict = necessary_condition_test(&h, &cfg.tolerances)?;
    let coi = match &problem {
        Problem::Chain(p) => Some((p, &loaded.traj)),
        Problem::General { .. } => None,
    };
    let out = verdict_json(&verdict, coi);
    write_json(&cfg.out.join("verdict.json"), &out)?;
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(if verdict.satisfied { Status::Ok } else { Status::NotSatisfied })
}

fn write_optimize_outputs(cfg: &RunConfig, sys: &LinearSystem, rep: &OptimizeReport, extra: serde_json::Value) -> anyhow::Result<()> {
    let f = File::create(cfg.out.join("history.csv"))?;
    write_history_csv(BufWriter::new(f), &rep.state.history)?;
    write_trajectory(cfg, sys, &rep.state.traj)?;
    let mut out = json!({
        "status": format!("{:?}", rep.status),
        "seed_time": rep.seed_time,
        "final_time": rep.state.final_time(),
        "reduction": rep.reduction(),
        "iterations": rep.state.iter,
        "dof": rep.state.dof(),
        "satisfied": rep.state.verdict.satisfied,
    });
    if let (Some(o), Some(e)) = (out.as_object_mut(), extra.as_object()) {
        o.extend(e.clone());
    }
    write_json(&cfg.out.join("result.json"), &out)?;
    Ok(())
}

fn print_history(rep: &OptimizeReport) {
    println!("iter  t_M                 DOF  rank  rows  cols  action");
    for h in &rep.state.history {
        println!(
            "{:>4}  {:<18.12}  {:>3}  {:>4}  {:>4}  {:>4}  {}",
            h.iter, h.t_m, h.dof, h.rank, h.rows, h.cols, h.action
        );
    }
    println!(
        "status {:?}  t_f {:.9} -> {:.9}  ({:.2}% reduction)",
        rep.status,
        rep.seed_time,
        rep.state.final_time(),
        100.0 * rep.reduction()
    );
}

fn chain_asl(problem: &Problem, traj: &TimedTrajectory) -> serde_json::Value {
    match problem {
        Problem::Chain(p) => CoiAsl::from_law(p, &traj.law).map(|a| json!(a.to_string())).unwrap_or_default(),
        Problem::General { .. } => serde_json::Value::Null,
    }
}

fn cmd_optimize(cfg: &RunConfig, problem_path: &Path, trajectory: Option<&Path>) -> anyhow::Result<Status> {
    let problem = load_problem(problem_path)?;
    let (sys, traj, xf) = match trajectory {
        Some(t) => {
            let l = load_trajectory(&problem, t, &cfg.tolerances)?;
            (l.sys, l.traj, l.xf)
        }
        None => {
            let Problem::Chain(p) = &problem else {
                bail!("optimize without --trajectory needs a chain-of-integrators problem");
            };
            let sys = p.system()?;
            let spec = rest_to_rest_seed(p)?;
            let traj = extract_asl(&sys, &spec, &p.x0_vec(), &cfg.tolerances)?;
            (sys, traj, Some(p.xf_vec()))
        }
    };
    let Some(xf) = xf else {
        bail!("optimize needs a terminal state");
    };
    let rep = optimize(&sys, traj, &xf, &cfg.optimizer)?;
    print_history(&rep);
    let asl = chain_asl(&problem, &rep.state.traj);
    if let Some(s) = asl.as_str() {
        println!("ASL: {s}");
    }
    write_optimize_outputs(cfg, &sys, &rep, json!({ "asl": asl }))?;
    Ok(if rep.status == DescentStatus::Converged { Status::Ok } else { Status::NotSatisfied })
}

fn chatter_summary(r: &ChatterReport) -> serde_json::Value {
    json!({
        "n": r.n,
        "steps": r.steps,
        "terminated_at": r.terminated_at,
        "degenerate": r.degenerate,
        "monotone": r.monotone,
        "tail_statistic": r.tail_statistic,
        "partial_sums": r.partial_sums,
        "divergence_ratio": r.divergence_ratio,
    })
}

fn chatter(cfg: &RunConfig, n: usize, window: &[f64], iterations: usize) -> anyhow::Result<Status> {
    let r = chattering_series_analysis(n, window, iterations)?;
    let f = File::create(cfg.out.join("recursion.csv"))?;
    write_recursion_csv(&r, BufWriter::new(f))?;
    let s = chatter_summary(&r);
    write_json(&cfg.out.join("chatter.json"), &s)?;
    println!("{}", serde_json::to_string_pretty(&s)?);
    Ok(Status::Ok)
}

fn oracle(cfg: &RunConfig, problem_path: &Path) -> anyhow::Result<Status> {
    let problem = load_problem(problem_path)?;
    let sys = problem.system()?;
    let (Some(x0), Some(xf)) = (problem.x0(), problem.xf()) else {
        bail!("oracle needs x0 and xf in the problem file");
    };
    let res = grid_bbs_oracle(&sys, &x0, &xf, &cfg.oracle)?;
    write_json(&cfg.out.join("oracle.json"), &res)?;
    let kinds: Vec<String> = res.arcs.iter().map(|(k, d)| format!("{k}:{d:.6}")).collect();
    println!("t_f {:.9}  switches {}  resolution {:.3e}", res.t_f, res.switches, res.resolution);
    println!("arcs {}", kinds.join(" "));
    Ok(Status::Ok)
}

fn verdict_for(sys: &LinearSystem, traj: &TimedTrajectory, xf: &StateVector, cfg: &RunConfig) -> anyhow::Result<OptimalityVerdict> {
    let h = build_equality_system(sys, traj, xf, &cfg.tolerances)?;
    Ok(necessary_condition_test(&h, &cfg.tolerances)?)
}

fn repro_viia(cfg: &RunConfig) -> anyhow::Result<Status> {
    let (sys, traj) = experiments::viia_trajectory(&cfg.tolerances)?;
    for p in 0..sys.num_constraints() {
        let info = sys.constraint_order(p, cfg.tolerances.piv)?;
        println!("{}: order {}", constraint_name(&sys, p), info.order);
    }
    let xf = traj.final_state()?;
    let report = check_feasible(&sys, &traj, Some(&xf), &cfg.tolerances)?;
    write_trajectory(cfg, &sys, &traj)?;
    write_json(&cfg.out.join("feasibility.json"), &report)?;
    println!("ASL: {}", law_summary(&sys, &traj));
    println!("arcs {}  keypoints {}  t_f {:.9}", traj.law.num_arcs(), traj.m(), traj.final_time());
    print_report(&report);
    let v = verdict_for(&sys, &traj, &xf, cfg)?;
    print_verdict(&v);
    write_json(&cfg.out.join("verdict.json"), &verdict_json(&v, None))?;
    Ok(if report.feasible { Status::Ok } else { Status::Infeasible })
}

fn repro_viib(cfg: &RunConfig) -> anyhow::Result<Status> {
    let (problem, traj) = experiments::viib_trajectory(&cfg.tolerances)?;
    let sys = problem.system()?;
    let xf = problem.xf_vec();
    let v = verdict_for(&sys, &traj, &xf, cfg)?;
    print_verdict(&v);
    let h = build_equality_system(&sys, &traj, &xf, &cfg.tolerances)?;
    let reduced = h.jacobian(&traj.times)?.remove_column(10).remove_column(3);
    let reduced_rank = linalg::rank(&reduced, cfg.tolerances.rank);
    println!("rank without columns 4 and 11: {reduced_rank} of {}", reduced.nrows());
    let ends = traj.law.arc_end_keypoints();
    let t4 = traj.times[ends[3]];
    let ocfg = OptimizerConfig {
        insert_arcs: false,
        ..cfg.optimizer.clone()
    };
    let rep = optimize(&sys, traj.clone(), &xf, &ocfg)?;
    print_history(&rep);
    let new = &rep.state.traj;
    let new_t4 = new.times[new.law.arc_end_keypoints()[3]];
    let tangencies: Vec<String> = new
        .law
        .keypoints()
        .iter()
        .enumerate()
        .filter_map(|(k, kp)| match kp.kind {
            KeypointKind::Marker(j) => Some(
                new.law.markers[kp.arc][j]
                    .touched
                    .iter()
                    .map(|(p, _)| format!("{} at t = {:.6}", constraint_name(&sys, *p), new.times[k + 1]))
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
            KeypointKind::ArcEnd => None,
        })
        .collect();
    let dt4 = new_t4 - t4;
    let dtf = new.final_time() - traj.final_time();
    println!("dt4 {dt4:+.6}  dtf {dtf:+.6}");
    println!("tangencies: {}", if tangencies.is_empty() { "none".into() } else { tangencies.join("; ") });
    write_optimize_outputs(
        cfg,
        &sys,
        &rep,
        json!({
            "seed_verdict": verdict_json(&v, Some((&problem, &traj))),
            "rank_without_4_11": reduced_rank,
            "dt4": dt4,
            "dtf": dtf,
            "tangencies": tangencies,
        }),
    )?;
    Ok(Status::Ok)
}

fn repro_viic(cfg: &RunConfig) -> anyhow::Result<Status> {
    let (problem, seed) = experiments::viic_seed(&cfg.tolerances)?;
    let sys = problem.system()?;
    let xf = problem.xf_vec();
    let seed_asl = CoiAsl::from_law(&problem, &seed.law)?;
    println!("seed: {seed_asl}  t_f {:.9}", seed.final_time());
    let rep = optimize(&sys, seed, &xf, &cfg.optimizer)?;
    print_history(&rep);
    let asl = CoiAsl::from_law(&problem, &rep.state.traj.law)?;
    println!("ASL: {asl}");
    write_optimize_outputs(cfg, &sys, &rep, json!({ "seed_asl": seed_asl.to_string(), "asl": asl.to_string() }))?;
    Ok(if rep.status == DescentStatus::Converged { Status::Ok } else { Status::NotSatisfied })
}

fn repro_chatter4(cfg: &RunConfig) -> anyhow::Result<Status> {
    let r3 = chattering_series_analysis(3, &[2.0, 1.5], 10)?;
    println!("n = 3: terminated at step {:?}", r3.terminated_at);
    let r4 = chattering_series_analysis(4, &[3.0, 2.0, 1.5], cfg.chatter_iterations)?;
    let f = File::create(cfg.out.join("recursion.csv"))?;
    write_recursion_csv(&r4, BufWriter::new(f))?;
    let s = json!({ "n3": chatter_summary(&r3), "n4": chatter_summary(&r4) });
    write_json(&cfg.out.join("chatter.json"), &s)?;
    println!(
        "n = 4: r_1 = {}  tail i r_i/(1 - r_i) = {:.6}  monotone {}",
        r4.r_head.first().copied().unwrap_or(f64::NAN),
        r4.tail_statistic.unwrap_or(f64::NAN),
        r4.monotone
    );
    for (n, s) in &r4.partial_sums {
        println!("  S({n}) = {s:.9}");
    }
    if let Some(ratio) = r4.divergence_ratio {
        println!("  S(N)/S(N/100) = {ratio:.4}");
    }
    Ok(Status::Ok)
}
