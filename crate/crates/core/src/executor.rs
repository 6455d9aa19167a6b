//! Trajectory extraction from a finished plan.
//!
//! Exact plans are walked backwards from the cheapest goal pose using the
//! one-hot pooling policies as predecessor pointers. Soft plans are walked
//! backwards as distributions: terminal goal mass is split by softmin over
//! the goal values, then each step multiplies state mass into the pooling
//! policy and pushes it through the reversed transitions, renormalising to
//! absorb round-off. The soft walk exists in a plain and a tape-recorded
//! form; the recorded form is what cooperative planning differentiates.
//!
//! Trajectory pricing always uses the constant per-step cost volumes
//! (movement, time, idle surcharge, static field) and deliberately leaves
//! extrinsic costs out: those are coupling terms, not path costs.

use crate::error::{Error, Result};
use crate::grid::{Grid2, Grid3, Grid4};
use crate::lattice::{ActionKind, Pose, TransitionModel};
use crate::ops;
use crate::planner::{Plan, RecordedPlan};
use crate::tape::{Tape, Var};

/// A concrete pose-per-step path with its decoded actions and prices.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Poses for `t = 0..=T`.
    pub poses: Vec<Pose>,
    /// Action arriving at step `t` (index `t - 1`).
    pub actions: Vec<ActionKind>,
    /// Price of each action under the constant cost volumes.
    pub step_costs: Vec<f64>,
    /// Sum of `step_costs`.
    pub total_cost: f64,
    /// First step whose pose lies in the goal set, if any.
    pub arrival_time: Option<usize>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// One-hot cell occupancy per step.
    pub fn cell_occupancy(&self, width: usize, height: usize) -> Vec<Grid2> {
        self.poses
            .iter()
            .map(|p| {
                let mut g = Grid2::zeros(width, height);
                g.set(p.x, p.y, 1.0);
                g
            })
            .collect()
    }
}

/// Distributional walk of a soft plan.
pub struct SoftTrace {
    /// State distribution per step, `t = 0..=T`.
    pub occupancy: Vec<Grid3>,
    /// Orientation-marginalised occupancy per step.
    pub cell_occupancy: Vec<Grid2>,
    /// State-action flow arriving at step `t` (index `t - 1`).
    pub flows: Vec<Grid4>,
    /// Expected path price under the constant cost volumes.
    pub true_cost: f64,
}

impl SoftTrace {
    /// Most likely pose per step, ties broken toward the lowest linear
    /// state index.
    pub fn argmax_poses(&self) -> Vec<Pose> {
        self.occupancy
            .iter()
            .map(|g| {
                let idx = g.argmax();
                let theta = idx % g.orientations;
                let cell = idx / g.orientations;
                Pose::new(cell % g.width, cell / g.width, theta)
            })
            .collect()
    }
}

/// Tape-resident counterpart of [`SoftTrace`].
pub struct RecordedTrace {
    pub occupancy: Vec<Var>,
    pub cell_occupancy: Vec<Var>,
    pub flows: Vec<Var>,
    pub true_cost: Var,
}

fn price(plan: &Plan, t: usize, pose: Pose, action: usize) -> f64 {
    plan.cost_volumes[t - 1].get(pose.x, pose.y, pose.theta, action)
}

/// Walks an exact plan backwards from its best goal pose.
pub fn backtrace_exact(plan: &Plan, model: &TransitionModel) -> Result<Trajectory> {
    if !plan.is_feasible() {
        return Err(Error::Infeasible(
            "no goal pose is reachable within the horizon".into(),
        ));
    }
    let horizon = plan.horizon();
    let (goal, _) = plan.best_goal();
    let mut poses = vec![goal];
    let mut actions_rev: Vec<usize> = Vec::with_capacity(horizon);
    let last = plan.values.last().expect("plan has stages");
    let (w, h) = (last.width, last.height);

    let mut cur = goal;
    for t in (1..=horizon).rev() {
        let (a, _) = plan.policies[t - 1].argmax_action(cur.x, cur.y, cur.theta);
        let prev = model.predecessor(cur, a, w, h).ok_or_else(|| {
            Error::NumericalCollapse(format!(
                "policy at step {t} points off-grid from ({}, {}, {})",
                cur.x, cur.y, cur.theta
            ))
        })?;
        actions_rev.push(a);
        poses.push(prev);
        cur = prev;
    }
    poses.reverse();
    actions_rev.reverse();
    finish_trajectory(plan, model, poses, actions_rev)
}

fn finish_trajectory(
    plan: &Plan,
    model: &TransitionModel,
    poses: Vec<Pose>,
    action_indices: Vec<usize>,
) -> Result<Trajectory> {
    let mut actions = Vec::with_capacity(action_indices.len());
    let mut step_costs = Vec::with_capacity(action_indices.len());
    let mut total = 0.0;
    for (t, &a) in action_indices.iter().enumerate() {
        let pose = poses[t + 1];
        let c = price(plan, t + 1, pose, a);
        // The arrival orientation pins down which filter the action index
        // refers to; its kind is what gets reported.
        actions.push(model.reversed_action(pose.theta, a).kind);
        step_costs.push(c);
        total += c;
    }
    let arrival_time = poses.iter().position(|p| plan.goal_poses.contains(p));
    Ok(Trajectory {
        poses,
        actions,
        step_costs,
        total_cost: total,
        arrival_time,
    })
}

/// Walks a soft plan backwards as a distribution over states.
pub fn soft_trace(plan: &Plan, model: &TransitionModel) -> Result<SoftTrace> {
    let tau = match plan.mode {
        crate::planner::PlanMode::Soft { tau } => tau,
        crate::planner::PlanMode::Exact => {
            return Err(Error::Config("soft_trace needs a soft-mode plan".into()))
        }
    };
    if !plan.is_feasible() {
        return Err(Error::Infeasible(
            "no goal pose is reachable within the horizon".into(),
        ));
    }
    let horizon = plan.horizon();
    let last = plan.values.last().expect("plan has stages");
    let (w, h, th) = (last.width, last.height, last.orientations);

    // Terminal mass: softmin split over the goal poses.
    let goal_vals = plan.goal_values();
    let weights = ops::softmin_weights(&goal_vals, tau);
    let mut rho_t = Grid3::zeros(w, h, th);
    for (p, &wgt) in plan.goal_poses.iter().zip(&weights) {
        *rho_t
            .data
            .get_mut((p.y * w + p.x) * th + p.theta)
            .expect("goal pose in bounds") += wgt;
    }

    let mut occupancy = vec![Grid3::zeros(w, h, th); horizon + 1];
    let mut flows = vec![Grid4::zeros(0, 0, 0, 0); horizon];
    occupancy[horizon] = rho_t;
    let mut true_cost = 0.0;
    for t in (1..=horizon).rev() {
        let u = ops::mul_state_policy(&occupancy[t], &plan.policies[t - 1])?;
        true_cost += ops::dot(&u.data, &plan.cost_volumes[t - 1].data);
        let pushed = ops::push_reversed(&u, model)?;
        let (rho_prev, _) = ops::renormalize(&pushed)?;
        flows[t - 1] = u;
        occupancy[t - 1] = rho_prev;
    }
    let cell_occupancy = occupancy.iter().map(ops::marginalize_orientation).collect();
    Ok(SoftTrace {
        occupancy,
        cell_occupancy,
        flows,
        true_cost,
    })
}

/// Recorded version of [`soft_trace`] over an on-tape plan.
pub fn soft_trace_recorded(
    tape: &mut Tape,
    plan: &RecordedPlan,
    model: &std::sync::Arc<TransitionModel>,
) -> Result<RecordedTrace> {
    let horizon = plan.policies.len();
    let last = tape
        .value(*plan.values.last().expect("plan has stages"))
        .as_field3()
        .expect("stage values are state grids")
        .clone();
    let (w, h, th) = (last.width, last.height, last.orientations);

    let goal_indices: Vec<usize> = plan
        .goal_poses
        .iter()
        .map(|p| (p.y * w + p.x) * th + p.theta)
        .collect();
    let gathered = tape.gather(*plan.values.last().unwrap(), goal_indices.clone())?;
    let weights = tape.softmin_weights(gathered, plan.tau)?;
    let rho_last = tape.scatter3(weights, goal_indices, w, h, th)?;

    let mut occupancy = vec![rho_last; horizon + 1];
    let mut flows = Vec::with_capacity(horizon);
    let mut cost_terms = Vec::with_capacity(horizon);
    for t in (1..=horizon).rev() {
        let u = tape.mul_state_policy(occupancy[t], plan.policies[t - 1])?;
        let costs = tape.input4(&plan.cost_volumes[t - 1]);
        cost_terms.push((1.0, tape.dot(u, costs)?));
        let pushed = tape.push_reversed(u, model)?;
        occupancy[t - 1] = tape.renormalize(pushed)?;
        flows.push(u);
    }
    flows.reverse();
    let true_cost = tape.add_scaled(cost_terms)?;
    let cell_occupancy = occupancy
        .iter()
        .map(|&rho| tape.marginalize(rho))
        .collect::<Result<Vec<Var>>>()?;
    Ok(RecordedTrace {
        occupancy,
        cell_occupancy,
        flows,
        true_cost,
    })
}

/// Greedy forward decode of a soft trace into one concrete trajectory:
/// from the start pose, repeatedly step to the successor carrying the most
/// arrival flow (ties resolve to the lowest action index).
pub fn decode_soft(
    plan: &Plan,
    trace: &SoftTrace,
    model: &TransitionModel,
    start: Pose,
) -> Result<Trajectory> {
    let horizon = plan.horizon();
    let last = plan.values.last().expect("plan has stages");
    let (w, h) = (last.width, last.height);
    let mut poses = vec![start];
    let mut action_indices = Vec::with_capacity(horizon);
    let mut cur = start;
    for t in 1..=horizon {
        let flow = &trace.flows[t - 1];
        let mut best: Option<(usize, Pose, f64)> = None;
        for (a, next) in model.successors(cur, w, h) {
            let f = flow.get(next.x, next.y, next.theta, a);
            if best.as_ref().is_none_or(|&(_, _, bf)| f > bf) {
                best = Some((a, next, f));
            }
        }
        let (a, next, _) = best.ok_or_else(|| {
            Error::NumericalCollapse(format!("no successor available at step {t}"))
        })?;
        action_indices.push(a);
        poses.push(next);
        cur = next;
    }
    finish_trajectory(plan, model, poses, action_indices)
}
