//! Command line front end: plan, cooperate, cross-check and render.
//!
//! Exit codes: 0 success, 1 malformed scenario or other input error,
//! 2 infeasible problem, 3 optimizer ran out of iterations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use coopgrid_core::coop;
use coopgrid_core::error::Error;
use coopgrid_core::executor::{backtrace_exact, decode_soft, soft_trace};
use coopgrid_core::export;
use coopgrid_core::grid::Grid2;
use coopgrid_core::oracle;
use coopgrid_core::planner::{ExtrinsicCost, PlanMode};
use coopgrid_core::render;
use coopgrid_core::scenario::{self, Scenario, SolveMode};

const EXIT_INPUT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NO_CONVERGENCE: u8 = 3;

/// Pixels per map cell in PPM output.
const RENDER_SCALE: usize = 24;

#[derive(Parser)]
#[command(
    name = "coopgrid",
    version,
    about = "Grid trajectory planning with differentiable value iteration"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plan every agent independently and export the trajectories.
    Plan(PlanArgs),
    /// Optimize all agents jointly against their mutual collision cost.
    Coop(CoopArgs),
    /// Exhaustive two-agent reference solution (small instances only).
    Oracle(CommonArgs),
    /// Write occupancy images without any export document.
    Render(PlanArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Soft,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file to load.
    #[arg(long)]
    scenario: PathBuf,
    /// Directory for exports and renders; created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reserved for future stochastic features; the solver itself is
    /// deterministic and ignores it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Pooling mode; defaults to the scenario's `mode` header.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Softmin temperature override.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct CoopArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Render one-hot final trajectories (exact) or the converged soft
    /// occupancy (soft); defaults to the scenario's `mode` header.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Softmin temperature override.
    #[arg(long)]
    tau: Option<f64>,
    /// Gradient step size override.
    #[arg(long)]
    eta: Option<f64>,
    /// Collision weight override.
    #[arg(long, value_name = "LAMBDA")]
    lambda_coll: Option<f64>,
    /// Iteration budget override.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Print one `iter=<n> J=<v> coll=<v> gnorm=<v>` line per iteration.
    #[arg(long)]
    trace: bool,
}

type CliResult = Result<(), (u8, String)>;

/// Prints a line, tolerating a closed stdout (e.g. piping into `head`).
fn say(line: String) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    match cli.cmd {
        Cmd::Plan(args) => cmd_plan(args, true),
        Cmd::Render(args) => cmd_plan(args, false),
        Cmd::Coop(args) => cmd_coop(args),
        Cmd::Oracle(args) => cmd_oracle(args),
    }
}

fn fail(e: Error) -> (u8, String) {
    let code = match e {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_INPUT,
    };
    (code, e.to_string())
}

fn load_scenario(path: &Path) -> Result<Scenario, (u8, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| (EXIT_INPUT, format!("{}: {e}", path.display())))?;
    scenario::parse(&text).map_err(fail)
}

fn solve_mode(scen: &Scenario, flag: Option<ModeArg>) -> SolveMode {
    match flag {
        Some(ModeArg::Exact) => SolveMode::Exact,
        Some(ModeArg::Soft) => SolveMode::Soft,
        None => scen.params.mode,
    }
}

fn write_out(path: &Path, bytes: &[u8]) -> CliResult {
    std::fs::write(path, bytes).map_err(|e| (EXIT_INPUT, format!("{}: {e}", path.display())))
}

/// Writes one PPM and one ASCII render per agent.
fn write_renders(scen: &Scenario, frames_per_agent: &[Vec<Grid2>], dir: &Path) -> CliResult {
    for (i, frames) in frames_per_agent.iter().enumerate() {
        let ppm = render::ppm(scen.width, scen.height, &scen.blocked, frames, RENDER_SCALE);
        write_out(&dir.join(format!("agent{i}.ppm")), &ppm)?;
        let ascii = render::ascii(scen.width, scen.height, &scen.blocked, frames);
        write_out(&dir.join(format!("agent{i}.txt")), ascii.as_bytes())?;
    }
    Ok(())
}

fn ensure_out(dir: &Option<PathBuf>) -> Result<Option<&Path>, (u8, String)> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| (EXIT_INPUT, format!("{}: {e}", dir.display())))?;
        Ok(Some(dir.as_path()))
    } else {
        Ok(None)
    }
}

fn cmd_plan(args: PlanArgs, export_doc: bool) -> CliResult {
    let scen = load_scenario(&args.common.scenario)?;
    let out = ensure_out(&args.common.out)?;
    let mode = solve_mode(&scen, args.mode);
    let tau = args.tau.unwrap_or(scen.params.tau);
    let planner = scen.planner().map_err(fail)?;
    let extr = ExtrinsicCost::zeros(scen.width, scen.height, scen.horizon);

    let mut trajectories = Vec::new();
    let mut frames_per_agent = Vec::new();
    for agent in &scen.agents {
        let plan_mode = match mode {
            SolveMode::Exact => PlanMode::Exact,
            SolveMode::Soft => PlanMode::Soft { tau },
        };
        let plan = planner
            .plan(agent.start, &agent.goals, &extr, plan_mode)
            .map_err(fail)?;
        match mode {
            SolveMode::Exact => {
                let traj = backtrace_exact(&plan, planner.model()).map_err(fail)?;
                frames_per_agent.push(traj.cell_occupancy(scen.width, scen.height));
                trajectories.push(traj);
            }
            SolveMode::Soft => {
                let trace = soft_trace(&plan, planner.model()).map_err(fail)?;
                let traj =
                    decode_soft(&plan, &trace, planner.model(), agent.start).map_err(fail)?;
                frames_per_agent.push(trace.cell_occupancy);
                trajectories.push(traj);
            }
        }
    }

    for (i, traj) in trajectories.iter().enumerate() {
        say(format!(
            "agent {i}: cost {} arrival {}",
            traj.total_cost,
            traj.arrival_time
                .map_or("never".to_string(), |t| t.to_string())
        ));
    }

    if let Some(dir) = out {
        if export_doc {
            let occupancies: Vec<Vec<Grid2>> = trajectories
                .iter()
                .map(|t| t.cell_occupancy(scen.width, scen.height))
                .collect();
            let coll = coop::collision_loss_cells(&occupancies).map_err(fail)?;
            let doc = export::from_plans(&scen, planner.model(), mode.label(), &trajectories, coll);
            write_out(&dir.join("export.json"), export::to_json(&doc).as_bytes())?;
        }
        write_renders(&scen, &frames_per_agent, dir)?;
    }
    Ok(())
}

fn cmd_coop(args: CoopArgs) -> CliResult {
    let scen = load_scenario(&args.common.scenario)?;
    let out = ensure_out(&args.common.out)?;
    let mode = solve_mode(&scen, args.mode);
    let mut problem = scen.problem();
    if let Some(tau) = args.tau {
        problem.config.tau = tau;
    }
    if let Some(eta) = args.eta {
        problem.config.eta = eta;
    }
    if let Some(lambda) = args.lambda_coll {
        problem.config.lambda_coll = lambda;
    }
    if let Some(iters) = args.max_iters {
        problem.config.max_iters = iters;
    }

    let trace = args.trace;
    let result = coop::optimize_with(&problem, &mut |r| {
        if trace {
            say(format!(
                "iter={} J={} coll={} gnorm={}",
                r.iteration, r.objective, r.collision, r.grad_norm
            ));
        }
    })
    .map_err(fail)?;

    say(format!(
        "converged={} iterations={} total_cost={} collision={}",
        result.converged, result.iterations, result.total_true_cost, result.exact_collision
    ));

    if let Some(dir) = out {
        let doc = export::from_coop(&scen, problem.planner().map_err(fail)?.model(), &result);
        write_out(&dir.join("export.json"), export::to_json(&doc).as_bytes())?;

        let planner = scen.planner().map_err(fail)?;
        let mut frames_per_agent = Vec::new();
        for (i, traj) in result.trajectories.iter().enumerate() {
            match mode {
                SolveMode::Exact => {
                    frames_per_agent.push(traj.cell_occupancy(scen.width, scen.height));
                }
                SolveMode::Soft => {
                    let plan = planner
                        .plan(
                            scen.agents[i].start,
                            &scen.agents[i].goals,
                            &result.extrinsics[i],
                            PlanMode::Soft {
                                tau: problem.config.tau,
                            },
                        )
                        .map_err(fail)?;
                    let trace = soft_trace(&plan, planner.model()).map_err(fail)?;
                    frames_per_agent.push(trace.cell_occupancy);
                }
            }
        }
        write_renders(&scen, &frames_per_agent, dir)?;
    }

    if result.converged {
        Ok(())
    } else {
        Err((
            EXIT_NO_CONVERGENCE,
            format!("no convergence within {} iterations", result.iterations),
        ))
    }
}

fn cmd_oracle(args: CommonArgs) -> CliResult {
    let scen = load_scenario(&args.scenario)?;
    let out = ensure_out(&args.out)?;
    if scen.agents.len() != 2 {
        return Err((
            EXIT_INPUT,
            format!(
                "oracle needs exactly two agents, scenario has {}",
                scen.agents.len()
            ),
        ));
    }
    let planner = scen.planner().map_err(fail)?;
    let world = oracle::World {
        width: scen.width,
        height: scen.height,
        blocked: scen.blocked.clone(),
        model: std::sync::Arc::clone(planner.model()),
        horizon: scen.horizon,
        epsilon_idle: scen.params.epsilon_idle,
    };
    let goals0 = planner.expand_goals(&scen.agents[0].goals).map_err(fail)?;
    let goals1 = planner.expand_goals(&scen.agents[1].goals).map_err(fail)?;
    let joint = oracle::joint_optimum(
        &world,
        [scen.agents[0].start, scen.agents[1].start],
        [&goals0, &goals1],
    )
    .map_err(fail)?;

    say(format!("joint_cost={}", joint.cost));
    let poses_json = joint.poses.as_ref().map(|pair| {
        pair.iter()
            .map(|seq| {
                seq.iter()
                    .map(|p| serde_json_value(p.x, p.y, planner.model().heading_label(p.theta)))
                    .collect::<Vec<String>>()
            })
            .collect::<Vec<Vec<String>>>()
    });

    if let Some(dir) = out {
        let mut doc = String::from("{\n");
        doc.push_str(&format!("  \"scenario\": \"{}\",\n", scen.name));
        doc.push_str(&format!("  \"joint_cost\": {},\n", joint.cost));
        match &poses_json {
            None => doc.push_str("  \"poses\": null\n"),
            Some(agents) => {
                doc.push_str("  \"poses\": [\n");
                for (i, seq) in agents.iter().enumerate() {
                    doc.push_str("    [");
                    doc.push_str(&seq.join(", "));
                    doc.push_str(if i + 1 < agents.len() { "],\n" } else { "]\n" });
                }
                doc.push_str("  ]\n");
            }
        }
        doc.push_str("}\n");
        write_out(&dir.join("oracle.json"), doc.as_bytes())?;
    }

    if joint.poses.is_none() {
        return Err((
            EXIT_INFEASIBLE,
            "no conflict-free joint plan within the horizon".into(),
        ));
    }
    Ok(())
}

fn serde_json_value(x: usize, y: usize, heading: &str) -> String {
    format!("{{\"x\": {x}, \"y\": {y}, \"heading\": \"{heading}\"}}")
}
