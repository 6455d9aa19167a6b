//! Time-expanded planning on the oriented grid lattice.
//!
//! The planner computes, for every step `t = 0..=T`, the minimal (or
//! softened) cost of reaching each `(x, y, orientation)` state in exactly
//! `t` steps. One value-iteration sweep equals one time step, so the value
//! stack doubles as a reachability-over-time table and the per-sweep
//! policies can be walked backwards to extract trajectories.
//!
//! Costs per transition are the sum of
//! - movement cost (0 for waiting, 1 for axis moves, sqrt(2) diagonal),
//! - a time cost of 1 per step,
//! - an idle surcharge for waiting that shrinks linearly as the horizon
//!   approaches, so early idling is dearer than late idling,
//! - the static field (a large penalty on blocked cells),
//! - an optional extrinsic field per arrival step (the coupling channel
//!   used by cooperative planning).
//!
//! Waiting on a goal state is free: movement, time and idle surcharge are
//! all zeroed there, which lets an agent arrive early and hold position
//! without distorting its reported cost.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{require, Grid2, Grid3, Grid4};
use crate::lattice::{ActionKind, Pose, TransitionModel, ACTION_COUNT};
use crate::ops;
use crate::tape::{Tape, Var};

pub use crate::ops::INF_CLAMP;

/// Value-iteration flavour: exact hard minimum, or temperature-smoothed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanMode {
    Exact,
    Soft { tau: f64 },
}

/// A goal cell, optionally pinned to one arrival orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Goal {
    pub x: usize,
    pub y: usize,
    pub theta: Option<usize>,
}

/// Time-varying cost field layered on top of the map, one 2D grid per
/// arrival step `1..=T` (index `t - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrinsicCost {
    pub fields: Vec<Grid2>,
}

impl ExtrinsicCost {
    pub fn zeros(width: usize, height: usize, horizon: usize) -> Self {
        ExtrinsicCost {
            fields: vec![Grid2::zeros(width, height); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.fields.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.fields
            .iter()
            .flat_map(|f| f.data.iter())
            .fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    /// Gradient step `self <- max(0, self - eta * grad)`, keeping the
    /// field a pure surcharge.
    pub fn descend(&mut self, grad: &ExtrinsicCost, eta: f64) -> Result<()> {
        require(
            grad.fields.len() == self.fields.len(),
            "extrinsic horizon mismatch",
        )?;
        for (mine, theirs) in self.fields.iter_mut().zip(&grad.fields) {
            require(
                mine.data.len() == theirs.data.len(),
                "extrinsic shape mismatch",
            )?;
            for (x, g) in mine.data.iter_mut().zip(&theirs.data) {
                *x = (*x - eta * g).max(0.0);
            }
        }
        Ok(())
    }
}

/// Full cost-to-reach stack and per-step policies for one agent.
pub struct Plan {
    /// `values[t]` = cost of reaching each state in exactly `t` steps.
    pub values: Vec<Grid3>,
    /// `policies[t - 1]` = pooling weights for arrival step `t`.
    pub policies: Vec<Grid4>,
    /// Constant per-step transition costs (shared with trajectory pricing).
    pub cost_volumes: Vec<Arc<Grid4>>,
    /// Expanded goal poses, in scenario order.
    pub goal_poses: Vec<Pose>,
    pub mode: PlanMode,
}

impl Plan {
    pub fn horizon(&self) -> usize {
        self.policies.len()
    }

    /// Terminal cost per goal pose.
    pub fn goal_values(&self) -> Vec<f64> {
        let last = self
            .values
            .last()
            .expect("plan has at least the initial stage");
        self.goal_poses
            .iter()
            .map(|p| last.get(p.x, p.y, p.theta))
            .collect()
    }

    /// Best goal pose under the terminal values; ties resolve to the
    /// lowest linear state index. Returns `(pose, cost)`.
    pub fn best_goal(&self) -> (Pose, f64) {
        let last = self
            .values
            .last()
            .expect("plan has at least the initial stage");
        let mut best: Option<(usize, Pose, f64)> = None;
        for p in &self.goal_poses {
            let lin = last.idx(p.x, p.y, p.theta);
            let v = last.data[lin];
            let better = match best {
                None => true,
                Some((blin, _, bv)) => v < bv || (v == bv && lin < blin),
            };
            if better {
                best = Some((lin, *p, v));
            }
        }
        let (_, pose, value) = best.expect("at least one goal pose");
        (pose, value)
    }

    /// Scalar plan cost: hard minimum over goals in exact mode, softmin
    /// expectation in soft mode.
    pub fn goal_cost(&self) -> f64 {
        let vals = self.goal_values();
        match self.mode {
            PlanMode::Exact => self.best_goal().1,
            PlanMode::Soft { tau } => {
                let w = ops::softmin_weights(&vals, tau);
                ops::dot(&w, &vals)
            }
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.best_goal().1 < 0.5 * INF_CLAMP
    }
}

/// Tape-resident plan: variable handles instead of materialised grids.
pub struct RecordedPlan {
    pub values: Vec<Var>,
    pub policies: Vec<Var>,
    pub cost_volumes: Vec<Arc<Grid4>>,
    pub goal_poses: Vec<Pose>,
    pub tau: f64,
}

/// Map- and horizon-bound planning engine for one grid world.
pub struct Planner {
    model: Arc<TransitionModel>,
    width: usize,
    height: usize,
    blocked: Vec<bool>,
    static_field: Grid2,
    horizon: usize,
    epsilon_idle: f64,
}

impl Planner {
    pub fn new(
        width: usize,
        height: usize,
        blocked: &[bool],
        orientations: usize,
        horizon: usize,
        epsilon_idle: f64,
    ) -> Result<Self> {
        require(width > 0 && height > 0, "map must be non-empty")?;
        require(
            blocked.len() == width * height,
            "blocked mask must match map size",
        )?;
        require(horizon > 0, "horizon must be at least 1")?;
        require(epsilon_idle >= 0.0, "idle surcharge must be non-negative")?;
        let model = Arc::new(TransitionModel::standard(orientations)?);
        let mut static_field = Grid2::zeros(width, height);
        for (i, &b) in blocked.iter().enumerate() {
            if b {
                static_field.data[i] = INF_CLAMP;
            }
        }
        Ok(Planner {
            model,
            width,
            height,
            blocked: blocked.to_vec(),
            static_field,
            horizon,
            epsilon_idle,
        })
    }

    pub fn model(&self) -> &Arc<TransitionModel> {
        &self.model
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn orientations(&self) -> usize {
        self.model.orientations()
    }

    pub fn is_blocked(&self, x: usize, y: usize) -> bool {
        self.blocked[y * self.width + x]
    }

    pub fn static_field(&self) -> &Grid2 {
        &self.static_field
    }

    /// Idle surcharge for a wait departing at step `depart` (0-based):
    /// `epsilon * (T - depart) / T`, strictly decreasing over time so
    /// unavoidable idling is pushed as late as possible.
    pub fn idle_surcharge(&self, depart: usize) -> f64 {
        self.epsilon_idle * (self.horizon - depart) as f64 / self.horizon as f64
    }

    fn check_pose(&self, p: Pose, what: &str) -> Result<()> {
        require(p.x < self.width && p.y < self.height, "pose out of bounds")
            .map_err(|_| Error::Config(format!("{what} ({}, {}) is out of bounds", p.x, p.y)))?;
        require(p.theta < self.orientations(), "orientation out of range")
            .map_err(|_| Error::Config(format!("{what} orientation {} out of range", p.theta)))?;
        Ok(())
    }

    /// Expands goals to concrete poses: a goal without an orientation
    /// matches every arrival orientation at its cell.
    pub fn expand_goals(&self, goals: &[Goal]) -> Result<Vec<Pose>> {
        require(!goals.is_empty(), "at least one goal is required")?;
        let mut poses = Vec::new();
        for g in goals {
            let probe = Pose::new(g.x, g.y, g.theta.unwrap_or(0));
            self.check_pose(probe, "goal")?;
            if self.blocked[g.y * self.width + g.x] {
                return Err(Error::Config(format!(
                    "goal cell ({}, {}) is blocked",
                    g.x, g.y
                )));
            }
            match g.theta {
                Some(th) => poses.push(Pose::new(g.x, g.y, th)),
                None => {
                    for th in 0..self.orientations() {
                        poses.push(Pose::new(g.x, g.y, th));
                    }
                }
            }
        }
        Ok(poses)
    }

    /// Initial stage: zero at the start pose, saturated elsewhere.
    pub fn init_cost(&self, start: Pose) -> Result<Grid3> {
        self.check_pose(start, "start")?;
        if self.blocked[start.y * self.width + start.x] {
            return Err(Error::Infeasible(format!(
                "start cell ({}, {}) is blocked",
                start.x, start.y
            )));
        }
        let mut g = Grid3::filled(self.width, self.height, self.orientations(), INF_CLAMP);
        g.set(start.x, start.y, start.theta, 0.0);
        Ok(g)
    }

    /// Per-transition constant costs for the step departing at `depart`:
    /// movement + time + idle surcharge + static field, with every cost
    /// zeroed for waiting on a goal pose (static still applies, but goal
    /// cells are never blocked). Indexed by destination state and action.
    fn cost_volume(&self, depart: usize, goal_mask: &[bool]) -> Grid4 {
        let th = self.orientations();
        let mut costs = Grid4::zeros(self.width, self.height, th, ACTION_COUNT);
        let idle = self.idle_surcharge(depart);
        let time = self.model.time_cost();
        for y in 0..self.height {
            for x in 0..self.width {
                let stat = self.static_field.data[y * self.width + x];
                for theta in 0..th {
                    let state = (y * self.width + x) * th + theta;
                    for a in 0..ACTION_COUNT {
                        let spec = self.model.reversed_action(theta, a);
                        let mut c = spec.movement_cost + time + stat;
                        if spec.kind == ActionKind::Wait {
                            c += idle;
                            if goal_mask[state] {
                                c = stat;
                            }
                        }
                        costs.data[state * ACTION_COUNT + a] = c;
                    }
                }
            }
        }
        costs
    }

    /// Constant cost volumes for every step, shared between value
    /// iteration and trajectory pricing.
    pub fn cost_volumes(&self, goal_poses: &[Pose]) -> Vec<Arc<Grid4>> {
        let th = self.orientations();
        let mut goal_mask = vec![false; self.width * self.height * th];
        for p in goal_poses {
            goal_mask[(p.y * self.width + p.x) * th + p.theta] = true;
        }
        (0..self.horizon)
            .map(|s| Arc::new(self.cost_volume(s, &goal_mask)))
            .collect()
    }

    fn check_extrinsic(&self, extrinsic: &ExtrinsicCost) -> Result<()> {
        require(
            extrinsic.fields.len() == self.horizon,
            "extrinsic cost must provide one field per step",
        )?;
        for f in &extrinsic.fields {
            require(
                f.width == self.width && f.height == self.height,
                "extrinsic field shape must match the map",
            )?;
        }
        Ok(())
    }

    /// Runs the full value-iteration stack for one agent.
    pub fn plan(
        &self,
        start: Pose,
        goals: &[Goal],
        extrinsic: &ExtrinsicCost,
        mode: PlanMode,
    ) -> Result<Plan> {
        self.check_extrinsic(extrinsic)?;
        if let PlanMode::Soft { tau } = mode {
            require(tau > 0.0, "soft mode needs a positive temperature")?;
        }
        let goal_poses = self.expand_goals(goals)?;
        let cost_volumes = self.cost_volumes(&goal_poses);
        let mut values = vec![self.init_cost(start)?];
        let mut policies = Vec::with_capacity(self.horizon);
        for t in 1..=self.horizon {
            let prop = ops::propagate(&values[t - 1], &self.model)?;
            let extr3 = ops::broadcast_orientation(&extrinsic.fields[t - 1], self.orientations());
            let q = ops::accumulate_volume(&prop, &cost_volumes[t - 1], &extr3)?;
            let (v, pi) = match mode {
                PlanMode::Exact => ops::min_pool(&q),
                PlanMode::Soft { tau } => ops::softmin_pool(&q, tau)?,
            };
            values.push(v);
            policies.push(pi);
        }
        Ok(Plan {
            values,
            policies,
            cost_volumes,
            goal_poses,
            mode,
        })
    }

    /// Same sweep as [`Planner::plan`], but recorded on a tape so the
    /// result is differentiable with respect to the extrinsic fields.
    ///
    /// `extrinsic_vars` must hold one 2D tape variable per step.
    pub fn plan_recorded(
        &self,
        tape: &mut Tape,
        start: Pose,
        goals: &[Goal],
        extrinsic_vars: &[Var],
        tau: f64,
    ) -> Result<RecordedPlan> {
        require(
            extrinsic_vars.len() == self.horizon,
            "extrinsic cost must provide one field per step",
        )?;
        require(tau > 0.0, "soft mode needs a positive temperature")?;
        let goal_poses = self.expand_goals(goals)?;
        let cost_volumes = self.cost_volumes(&goal_poses);
        let init = self.init_cost(start)?;
        let mut values = vec![tape.input3(&init)];
        let mut policies = Vec::with_capacity(self.horizon);
        for t in 1..=self.horizon {
            let prop = tape.propagate(values[t - 1], &self.model)?;
            let extr3 = tape.broadcast_orientation(extrinsic_vars[t - 1], self.orientations())?;
            let q = tape.accumulate(prop, Arc::clone(&cost_volumes[t - 1]), extr3)?;
            let (v, pi) = tape.softmin_pool(q, tau)?;
            values.push(v);
            policies.push(pi);
        }
        Ok(RecordedPlan {
            values,
            policies,
            cost_volumes,
            goal_poses,
            tau,
        })
    }

    /// Linear state indices of the given poses, matching [`Grid3`] layout.
    pub fn pose_indices(&self, poses: &[Pose]) -> Vec<usize> {
        let th = self.orientations();
        poses
            .iter()
            .map(|p| (p.y * self.width + p.x) * th + p.theta)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_corridor() -> Planner {
        // 15 x 5 empty map, 8 orientations.
        Planner::new(15, 5, &[false; 75], 8, 15, 0.05).unwrap()
    }

    #[test]
    fn idle_surcharge_decreases_toward_horizon() {
        let p = Planner::new(15, 5, &[false; 75], 8, 20, 0.05).unwrap();
        assert!((p.idle_surcharge(0) - 0.05).abs() < 1e-12);
        assert!((p.idle_surcharge(19) - 0.05 * 1.0 / 20.0).abs() < 1e-12);
        assert!(p.idle_surcharge(0) > p.idle_surcharge(1));
        // Always below the smallest movement-cost gap, so the surcharge
        // never flips a route preference.
        assert!(p.idle_surcharge(0) < std::f64::consts::SQRT_2 - 1.0);
    }

    #[test]
    fn straight_corridor_costs_two_per_cell() {
        // 12 straight moves at (1 movement + 1 time) each; early arrival
        // then free goal-waiting keeps the total at 24.
        let p = open_corridor();
        let extr = ExtrinsicCost::zeros(15, 5, 15);
        let goals = [Goal {
            x: 13,
            y: 2,
            theta: Some(0),
        }];
        let plan = p
            .plan(Pose::new(1, 2, 0), &goals, &extr, PlanMode::Exact)
            .unwrap();
        assert!((plan.values[12].get(13, 2, 0) - 24.0).abs() < 1e-9);
        assert!((plan.goal_cost() - 24.0).abs() < 1e-9);
        assert!(plan.is_feasible());
    }

    #[test]
    fn waiting_off_goal_is_never_free() {
        // Same corridor, but idling before arrival must cost more than
        // arriving early and holding at the goal.
        let p = open_corridor();
        let extr = ExtrinsicCost::zeros(15, 5, 15);
        let goals = [Goal {
            x: 13,
            y: 2,
            theta: Some(0),
        }];
        let plan = p
            .plan(Pose::new(1, 2, 0), &goals, &extr, PlanMode::Exact)
            .unwrap();
        // Start-state wait chain: cost of staying put for t steps is
        // t * (1 + surcharge) > 0.
        let v1 = plan.values[1].get(1, 2, 0);
        assert!(v1 > 1.0 && v1 < 1.1);
    }

    #[test]
    fn blocked_start_is_infeasible() {
        let mut blocked = vec![false; 75];
        blocked[2 * 15 + 1] = true;
        let p = Planner::new(15, 5, &blocked, 8, 15, 0.05).unwrap();
        match p.init_cost(Pose::new(1, 2, 0)) {
            Err(Error::Infeasible(_)) => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn blocked_goal_is_rejected() {
        let mut blocked = vec![false; 75];
        blocked[2 * 15 + 13] = true;
        let p = Planner::new(15, 5, &blocked, 8, 15, 0.05).unwrap();
        let err = p.expand_goals(&[Goal {
            x: 13,
            y: 2,
            theta: None,
        }]);
        assert!(err.is_err());
    }

    #[test]
    fn any_orientation_goal_expands_to_all_bins() {
        let p = open_corridor();
        let poses = p
            .expand_goals(&[Goal {
                x: 13,
                y: 2,
                theta: None,
            }])
            .unwrap();
        assert_eq!(poses.len(), 8);
        assert!(poses.iter().all(|q| q.x == 13 && q.y == 2));
    }

    #[test]
    fn walled_off_goal_is_unreachable() {
        // Vertical wall across the full map height.
        let mut blocked = vec![false; 75];
        for y in 0..5 {
            blocked[y * 15 + 7] = true;
        }
        let p = Planner::new(15, 5, &blocked, 8, 15, 0.05).unwrap();
        let extr = ExtrinsicCost::zeros(15, 5, 15);
        let goals = [Goal {
            x: 13,
            y: 2,
            theta: None,
        }];
        let plan = p
            .plan(Pose::new(1, 2, 0), &goals, &extr, PlanMode::Exact)
            .unwrap();
        assert!(!plan.is_feasible());
        assert!(plan.goal_cost() >= INF_CLAMP);
    }

    #[test]
    fn soft_values_bracket_exact_values() {
        let p = Planner::new(5, 3, &[false; 15], 4, 6, 0.05).unwrap();
        let extr = ExtrinsicCost::zeros(5, 3, 6);
        let goals = [Goal {
            x: 4,
            y: 1,
            theta: Some(0),
        }];
        let tau = 0.5;
        let exact = p
            .plan(Pose::new(0, 1, 0), &goals, &extr, PlanMode::Exact)
            .unwrap();
        let soft = p
            .plan(Pose::new(0, 1, 0), &goals, &extr, PlanMode::Soft { tau })
            .unwrap();
        // Soft pooled values sit within tau * ln(actions) of the hard
        // minimum per sweep; after T sweeps the gap stays bounded by
        // T * tau * ln(4) and is never negative by more than round-off.
        let bound = 6.0 * tau * 4.0_f64.ln() + 1e-9;
        for (ve, vs) in exact.values.iter().zip(&soft.values) {
            for (a, b) in ve.data.iter().zip(&vs.data) {
                if *a < INF_CLAMP {
                    assert!(
                        *b <= *a + bound + 1e-9,
                        "soft {b} above bound over exact {a}"
                    );
                    assert!(*b >= *a - 1e-9, "soft {b} below exact {a}");
                }
            }
        }
    }

    #[test]
    fn recorded_plan_matches_plain_soft_plan() {
        let p = Planner::new(5, 3, &[false; 15], 4, 6, 0.05).unwrap();
        let extr = ExtrinsicCost::zeros(5, 3, 6);
        let goals = [Goal {
            x: 4,
            y: 1,
            theta: Some(0),
        }];
        let tau = 0.5;
        let plain = p
            .plan(Pose::new(0, 1, 0), &goals, &extr, PlanMode::Soft { tau })
            .unwrap();

        let mut tape = Tape::new();
        let extr_vars: Vec<Var> = extrinsic_vars(&mut tape, &extr);
        let rec = p
            .plan_recorded(&mut tape, Pose::new(0, 1, 0), &goals, &extr_vars, tau)
            .unwrap();
        for (t, var) in rec.values.iter().enumerate() {
            let grid = tape.value(*var).as_field3().unwrap();
            for (a, b) in grid.data.iter().zip(&plain.values[t].data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn extrinsic_vars(tape: &mut Tape, extr: &ExtrinsicCost) -> Vec<Var> {
        extr.fields.iter().map(|f| tape.input2(f)).collect()
    }
}
