//! Cooperative multi-agent planning by gradient descent on extrinsic
//! costs.
//!
//! Each agent plans independently, but every agent carries a learnable
//! per-timestep extrinsic cost field. The shared objective is
//!
//! `J = sum_i TrueCost_i + lambda_coll * collision_loss`
//!
//! where `TrueCost_i` is the expected real path price of agent `i`'s soft
//! trajectory (movement, time, idle surcharge, static field — explicitly
//! *not* the learned extrinsics, which shape policies but are not real
//! cost), and `collision_loss` sums, per unordered agent pair, the overlap
//! of orientation-marginalised occupancies at equal steps plus the overlap
//! across consecutive steps in both directions. The cross-step terms
//! punish swap and follow-on moves, keeping agents from tunnelling through
//! one another between grid snapshots.
//!
//! One optimizer iteration records the whole pipeline (value iteration,
//! distributional backtrace, objective) on a tape, differentiates it, and
//! takes a projected gradient step `extr <- max(0, extr - eta * dJ/dextr)`
//! on every agent's extrinsic stack. When the collision term dies out the
//! extrinsics stop changing and each agent is left with an ordinary
//! single-agent problem whose exact solution is returned.

use crate::error::{Error, Result};
use crate::executor::{self, Trajectory};
use crate::grid::{require, Grid2};
use crate::lattice::Pose;
use crate::ops;
use crate::planner::{ExtrinsicCost, Goal, PlanMode, Planner, INF_CLAMP};
use crate::tape::{Tape, Var};

pub const DEFAULT_LAMBDA_COLL: f64 = 100.0;
pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_ETA: f64 = 0.5;
pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_EPSILON_IDLE: f64 = 0.05;

/// Soft collision level treated as "no interaction at all".
pub const COLLISION_ZERO: f64 = 1e-6;
/// Soft collision level required for convergence.
pub const COLLISION_CONVERGED: f64 = 1e-4;
/// Relative objective change required for convergence...
pub const OBJECTIVE_REL_CHANGE: f64 = 1e-5;
/// ...measured across this many iterations.
pub const OBJECTIVE_WINDOW: usize = 5;

/// One agent: where it starts and where it may end up.
#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub start: Pose,
    pub goals: Vec<Goal>,
}

/// Optimizer knobs; defaults follow the module docs.
#[derive(Debug, Clone, Copy)]
pub struct CoopConfig {
    pub tau: f64,
    pub eta: f64,
    pub lambda_coll: f64,
    pub max_iters: usize,
    pub epsilon_idle: f64,
}

impl Default for CoopConfig {
    fn default() -> Self {
        CoopConfig {
            tau: DEFAULT_TAU,
            eta: DEFAULT_ETA,
            lambda_coll: DEFAULT_LAMBDA_COLL,
            max_iters: DEFAULT_MAX_ITERS,
            epsilon_idle: DEFAULT_EPSILON_IDLE,
        }
    }
}

/// A complete cooperative planning instance.
#[derive(Debug, Clone)]
pub struct CoopProblem {
    pub width: usize,
    pub height: usize,
    pub blocked: Vec<bool>,
    pub orientations: usize,
    pub horizon: usize,
    pub agents: Vec<AgentSpec>,
    pub config: CoopConfig,
}

impl CoopProblem {
    pub fn planner(&self) -> Result<Planner> {
        Planner::new(
            self.width,
            self.height,
            &self.blocked,
            self.orientations,
            self.horizon,
            self.config.epsilon_idle,
        )
    }
}

/// Telemetry for one optimizer iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub collision: f64,
    pub grad_norm: f64,
}

/// Final optimizer output.
pub struct CoopResult {
    /// Learned extrinsic stacks, one per agent.
    pub extrinsics: Vec<ExtrinsicCost>,
    /// Exact-mode trajectories replanned under the learned extrinsics.
    pub trajectories: Vec<Trajectory>,
    /// Real path price per trajectory (no extrinsics).
    pub true_costs: Vec<f64>,
    pub total_true_cost: f64,
    /// Collision loss of the exact trajectories; 0 in any accepted result.
    pub exact_collision: f64,
    /// True when the exact trajectories still collide after convergence.
    pub residual_collision: bool,
    pub converged: bool,
    pub iterations: usize,
    pub history: Vec<IterRecord>,
}

/// Unweighted collision loss over per-step cell occupancies: for every
/// unordered pair, same-step overlap for `t = 0..=T` plus both cross-step
/// overlaps for `t = 1..=T`.
pub fn collision_loss_cells(occupancies: &[Vec<Grid2>]) -> Result<f64> {
    let horizon = match occupancies.first() {
        Some(o) => o.len(),
        None => return Ok(0.0),
    };
    for o in occupancies {
        require(
            o.len() == horizon,
            "collision loss needs equal trajectory horizons",
        )?;
    }
    let mut total = 0.0;
    for i in 0..occupancies.len() {
        for j in i + 1..occupancies.len() {
            let (a, b) = (&occupancies[i], &occupancies[j]);
            for t in 0..horizon {
                total += ops::frobenius(&a[t], &b[t])?;
                if t > 0 {
                    total += ops::frobenius(&a[t], &b[t - 1])?;
                    total += ops::frobenius(&a[t - 1], &b[t])?;
                }
            }
        }
    }
    Ok(total)
}

/// The objective pipeline of one iteration, recorded on a tape.
pub struct RecordedObjective {
    pub tape: Tape,
    /// `J = sum true costs + lambda * collision`.
    pub objective: Var,
    /// Unweighted collision loss.
    pub collision: Var,
    /// Extrinsic input variables, `[agent][step]`.
    pub extrinsic_vars: Vec<Vec<Var>>,
    /// Expected real path price per agent.
    pub true_costs: Vec<Var>,
}

/// Records soft planning, distributional backtraces and the collision
/// objective for every agent under the given extrinsics.
pub fn record_objective(
    problem: &CoopProblem,
    extrinsics: &[ExtrinsicCost],
) -> Result<RecordedObjective> {
    require(!problem.agents.is_empty(), "at least one agent is required")?;
    require(
        extrinsics.len() == problem.agents.len(),
        "one extrinsic stack per agent",
    )?;
    let planner = problem.planner()?;
    let mut tape = Tape::new();

    let mut extrinsic_vars = Vec::with_capacity(problem.agents.len());
    let mut true_costs = Vec::with_capacity(problem.agents.len());
    let mut cell_occupancy = Vec::with_capacity(problem.agents.len());
    for (i, agent) in problem.agents.iter().enumerate() {
        let vars: Vec<Var> = extrinsics[i]
            .fields
            .iter()
            .map(|f| tape.input2(f))
            .collect();
        let plan = planner.plan_recorded(
            &mut tape,
            agent.start,
            &agent.goals,
            &vars,
            problem.config.tau,
        )?;
        let terminal = tape
            .value(*plan.values.last().expect("plan has stages"))
            .as_field3()
            .expect("stage values are state grids");
        let reachable = plan
            .goal_poses
            .iter()
            .any(|p| terminal.get(p.x, p.y, p.theta) < 0.5 * INF_CLAMP);
        if !reachable {
            return Err(Error::Infeasible(format!(
                "agent {i} cannot reach any goal within the horizon"
            )));
        }
        let trace = executor::soft_trace_recorded(&mut tape, &plan, planner.model())?;
        true_costs.push(trace.true_cost);
        cell_occupancy.push(trace.cell_occupancy);
        extrinsic_vars.push(vars);
    }

    let mut collision_terms = Vec::new();
    for i in 0..cell_occupancy.len() {
        for j in i + 1..cell_occupancy.len() {
            let (a, b) = (&cell_occupancy[i], &cell_occupancy[j]);
            for t in 0..a.len() {
                collision_terms.push((1.0, tape.dot(a[t], b[t])?));
                if t > 0 {
                    collision_terms.push((1.0, tape.dot(a[t], b[t - 1])?));
                    collision_terms.push((1.0, tape.dot(a[t - 1], b[t])?));
                }
            }
        }
    }
    let collision = if collision_terms.is_empty() {
        tape.input_scalar(0.0)
    } else {
        tape.add_scaled(collision_terms)?
    };

    let mut objective_terms: Vec<(f64, Var)> = true_costs.iter().map(|&v| (1.0, v)).collect();
    objective_terms.push((problem.config.lambda_coll, collision));
    let objective = tape.add_scaled(objective_terms)?;

    Ok(RecordedObjective {
        tape,
        objective,
        collision,
        extrinsic_vars,
        true_costs,
    })
}

/// Runs the cooperative optimizer to convergence or `max_iters`.
pub fn optimize(problem: &CoopProblem) -> Result<CoopResult> {
    optimize_with(problem, &mut |_| {})
}

/// [`optimize`] with a per-iteration observer (used for trace logging).
pub fn optimize_with(
    problem: &CoopProblem,
    on_iter: &mut dyn FnMut(&IterRecord),
) -> Result<CoopResult> {
    require(
        problem.agents.len() >= 2,
        "cooperative planning needs at least two agents",
    )?;
    require(
        problem.config.lambda_coll > 0.0,
        "collision weight must be positive",
    )?;
    require(problem.config.eta > 0.0, "step size must be positive")?;
    let planner = problem.planner()?;

    // Every agent must be able to reach a goal on its own before any
    // coupling is attempted.
    let zero = ExtrinsicCost::zeros(problem.width, problem.height, problem.horizon);
    for (i, agent) in problem.agents.iter().enumerate() {
        let plan = planner.plan(agent.start, &agent.goals, &zero, PlanMode::Exact)?;
        if !plan.is_feasible() {
            return Err(Error::Infeasible(format!(
                "agent {i} cannot reach any goal within the horizon even alone"
            )));
        }
    }

    let mut extrinsics = vec![
        ExtrinsicCost::zeros(problem.width, problem.height, problem.horizon);
        problem.agents.len()
    ];
    let mut history: Vec<IterRecord> = Vec::new();
    let mut converged = false;

    for iteration in 0..problem.config.max_iters {
        let recorded = record_objective(problem, &extrinsics)?;
        let objective = recorded.tape.scalar(recorded.objective);
        let collision = recorded.tape.scalar(recorded.collision);
        let store = recorded.tape.backward(recorded.objective)?;

        let mut grads: Vec<ExtrinsicCost> = Vec::with_capacity(problem.agents.len());
        let mut grad_norm_sq = 0.0;
        for vars in &recorded.extrinsic_vars {
            let fields: Vec<Grid2> = vars
                .iter()
                .map(|&v| store.field2_or_zeros(v, problem.width, problem.height))
                .collect();
            grad_norm_sq += fields
                .iter()
                .flat_map(|f| f.data.iter())
                .map(|g| g * g)
                .sum::<f64>();
            grads.push(ExtrinsicCost { fields });
        }
        let record = IterRecord {
            iteration,
            objective,
            collision,
            grad_norm: grad_norm_sq.sqrt(),
        };
        history.push(record);
        on_iter(&record);

        // No interaction: stop without touching the extrinsics.
        if collision < COLLISION_ZERO {
            converged = true;
            break;
        }
        // Converged: collisions resolved and the objective has settled.
        if collision < COLLISION_CONVERGED && history.len() > OBJECTIVE_WINDOW {
            let past = history[history.len() - 1 - OBJECTIVE_WINDOW].objective;
            if (objective - past).abs() <= OBJECTIVE_REL_CHANGE * past.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        for (extr, grad) in extrinsics.iter_mut().zip(&grads) {
            extr.descend(grad, problem.config.eta)?;
        }
    }

    // Final answer: exact replans under the learned extrinsics.
    let mut trajectories = Vec::with_capacity(problem.agents.len());
    let mut true_costs = Vec::with_capacity(problem.agents.len());
    for (agent, extr) in problem.agents.iter().zip(&extrinsics) {
        let plan = planner.plan(agent.start, &agent.goals, extr, PlanMode::Exact)?;
        let traj = executor::backtrace_exact(&plan, planner.model())?;
        true_costs.push(traj.total_cost);
        trajectories.push(traj);
    }
    let occupancies: Vec<Vec<Grid2>> = trajectories
        .iter()
        .map(|t| t.cell_occupancy(problem.width, problem.height))
        .collect();
    let exact_collision = collision_loss_cells(&occupancies)?;
    let total_true_cost = true_costs.iter().sum();

    Ok(CoopResult {
        extrinsics,
        trajectories,
        true_costs,
        total_true_cost,
        exact_collision,
        residual_collision: converged && exact_collision > 0.0,
        converged,
        iterations: history.len(),
        history,
    })
}
