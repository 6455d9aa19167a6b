//! Machine-readable result documents.
//!
//! An [`ExportDoc`] captures everything needed to replay or audit a solve:
//! decoded pose sequences with action labels and per-timestep costs for
//! each agent, the final collision loss, the optimizer iteration trace and
//! the full set of solver parameters. JSON serialization is deterministic
//! (fixed field order, shortest float representation), and
//! `from_json(to_json(doc)) == doc` holds exactly.

use serde::{Deserialize, Serialize};

use crate::coop::{CoopResult, IterRecord};
use crate::error::{Error, Result};
use crate::executor::Trajectory;
use crate::lattice::TransitionModel;
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseDoc {
    pub x: usize,
    pub y: usize,
    pub heading: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDoc {
    pub poses: Vec<PoseDoc>,
    pub actions: Vec<String>,
    pub step_costs: Vec<f64>,
    pub total_cost: f64,
    pub arrival_time: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDoc {
    pub tau: f64,
    pub eta: f64,
    pub lambda_coll: f64,
    pub epsilon_idle: f64,
    pub max_iters: usize,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterDoc {
    pub iteration: usize,
    pub objective: f64,
    pub collision: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportDoc {
    pub scenario: String,
    pub width: usize,
    pub height: usize,
    pub horizon: usize,
    pub orientations: usize,
    pub params: ParamsDoc,
    pub agents: Vec<AgentDoc>,
    pub collision_loss: f64,
    pub total_cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<IterDoc>,
}

fn agent_doc(model: &TransitionModel, traj: &Trajectory) -> AgentDoc {
    AgentDoc {
        poses: traj
            .poses
            .iter()
            .map(|p| PoseDoc {
                x: p.x,
                y: p.y,
                heading: model.heading_label(p.theta).to_string(),
            })
            .collect(),
        actions: traj.actions.iter().map(|a| a.label().to_string()).collect(),
        step_costs: traj.step_costs.clone(),
        total_cost: traj.total_cost,
        arrival_time: traj.arrival_time,
    }
}

fn params_doc(s: &Scenario, mode: &str) -> ParamsDoc {
    ParamsDoc {
        tau: s.params.tau,
        eta: s.params.eta,
        lambda_coll: s.params.lambda_coll,
        epsilon_idle: s.params.epsilon_idle,
        max_iters: s.params.max_iters,
        mode: mode.to_string(),
    }
}

fn trace_doc(history: &[IterRecord]) -> Vec<IterDoc> {
    history
        .iter()
        .map(|r| IterDoc {
            iteration: r.iteration,
            objective: r.objective,
            collision: r.collision,
            grad_norm: r.grad_norm,
        })
        .collect()
}

/// Document for a cooperative solve.
pub fn from_coop(scenario: &Scenario, model: &TransitionModel, result: &CoopResult) -> ExportDoc {
    ExportDoc {
        scenario: scenario.name.clone(),
        width: scenario.width,
        height: scenario.height,
        horizon: scenario.horizon,
        orientations: scenario.orientations,
        params: params_doc(scenario, "exact"),
        agents: result
            .trajectories
            .iter()
            .map(|t| agent_doc(model, t))
            .collect(),
        collision_loss: result.exact_collision,
        total_cost: result.total_true_cost,
        converged: result.converged,
        iterations: result.iterations,
        trace: trace_doc(&result.history),
    }
}

/// Document for independent single-agent plans (no optimizer trace).
pub fn from_plans(
    scenario: &Scenario,
    model: &TransitionModel,
    mode: &str,
    trajectories: &[Trajectory],
    collision_loss: f64,
) -> ExportDoc {
    ExportDoc {
        scenario: scenario.name.clone(),
        width: scenario.width,
        height: scenario.height,
        horizon: scenario.horizon,
        orientations: scenario.orientations,
        params: params_doc(scenario, mode),
        agents: trajectories.iter().map(|t| agent_doc(model, t)).collect(),
        collision_loss,
        total_cost: trajectories.iter().map(|t| t.total_cost).sum(),
        converged: true,
        iterations: 0,
        trace: Vec::new(),
    }
}

/// Deterministic pretty JSON with a trailing newline.
pub fn to_json(doc: &ExportDoc) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("export document serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<ExportDoc> {
    serde_json::from_str(text).map_err(|e| Error::Export(e.to_string()))
}
