//! Brute-force verification oracles.
//!
//! Everything here recomputes transition prices from raw geometry with
//! plain nested loops — deliberately sharing no code with the tensor
//! kernels — so the planner and this module can only agree if both are
//! right. The single-agent table is a forward dynamic program over the
//! time-expanded state lattice; the two-agent optimum is an exhaustive
//! dynamic program over the product lattice, guarded to small instances.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{Pose, TransitionModel};
use crate::ops::INF_CLAMP;
use crate::planner::ExtrinsicCost;

/// Map, horizon and pricing context shared by the oracle routines.
#[derive(Clone)]
pub struct World {
    pub width: usize,
    pub height: usize,
    pub blocked: Vec<bool>,
    pub model: Arc<TransitionModel>,
    pub horizon: usize,
    pub epsilon_idle: f64,
}

impl World {
    fn states(&self) -> usize {
        self.width * self.height * self.model.orientations()
    }

    fn lin(&self, p: Pose) -> usize {
        (p.y * self.width + p.x) * self.model.orientations() + p.theta
    }

    fn cell_of(&self, state: usize) -> usize {
        state / self.model.orientations()
    }

    fn pose_of(&self, state: usize) -> Pose {
        let th = self.model.orientations();
        let cell = state / th;
        Pose::new(cell % self.width, cell / self.width, state % th)
    }

    pub fn goal_mask(&self, goal_poses: &[Pose]) -> Vec<bool> {
        let mut mask = vec![false; self.states()];
        for p in goal_poses {
            mask[self.lin(*p)] = true;
        }
        mask
    }

    /// Price of one transition arriving at step `depart + 1`, recomputed
    /// from geometry: Euclidean cell displacement plus a unit of time,
    /// an idle surcharge `eps * (T - depart) / T` for waiting anywhere but
    /// a goal pose, and nothing at all for holding a goal pose.
    fn edge_cost(&self, src: Pose, dst: Pose, depart: usize, goal_mask: &[bool]) -> f64 {
        let dx = dst.x as f64 - src.x as f64;
        let dy = dst.y as f64 - src.y as f64;
        let movement = (dx * dx + dy * dy).sqrt();
        if src.x == dst.x && src.y == dst.y {
            if goal_mask[self.lin(dst)] {
                0.0
            } else {
                1.0 + self.epsilon_idle * (self.horizon - depart) as f64 / self.horizon as f64
            }
        } else {
            movement + 1.0
        }
    }
}

/// Minimal cost of reaching every state in exactly `t` steps, for
/// `t = 0..=T`, saturating at [`INF_CLAMP`] like the planner does.
pub fn reach_costs(
    world: &World,
    start: Pose,
    goal_poses: &[Pose],
    extrinsic: &ExtrinsicCost,
) -> Result<Vec<Vec<f64>>> {
    if extrinsic.fields.len() != world.horizon {
        return Err(Error::Config(
            "extrinsic cost must provide one field per step".into(),
        ));
    }
    let states = world.states();
    let goal_mask = world.goal_mask(goal_poses);
    let mut stages = Vec::with_capacity(world.horizon + 1);
    let mut cur = vec![INF_CLAMP; states];
    cur[world.lin(start)] = 0.0;
    stages.push(cur.clone());

    for t in 1..=world.horizon {
        let mut next = vec![INF_CLAMP; states];
        for (s, &c) in cur.iter().enumerate() {
            if c >= INF_CLAMP {
                continue;
            }
            let src = world.pose_of(s);
            for (_, dst) in world.model.successors(src, world.width, world.height) {
                let d = world.lin(dst);
                let mut price = c + world.edge_cost(src, dst, t - 1, &goal_mask);
                price += extrinsic.fields[t - 1].get(dst.x, dst.y);
                if world.blocked[dst.y * world.width + dst.x] {
                    price += INF_CLAMP;
                }
                let price = price.min(INF_CLAMP);
                if price < next[d] {
                    next[d] = price;
                }
            }
        }
        stages.push(next.clone());
        cur = next;
    }
    Ok(stages)
}

/// Cheapest terminal value over a goal pose set.
pub fn best_goal_cost(world: &World, stages: &[Vec<f64>], goal_poses: &[Pose]) -> f64 {
    let last = stages.last().expect("at least the initial stage");
    goal_poses
        .iter()
        .map(|p| last[world.lin(*p)])
        .fold(f64::INFINITY, f64::min)
}

/// Exhaustive two-agent joint optimum over the product time-expanded
/// lattice.
pub struct JointSolution {
    /// Total true cost, or [`INF_CLAMP`] when no conflict-free joint plan
    /// exists within the horizon.
    pub cost: f64,
    /// Pose sequences (`t = 0..=T`) per agent when a plan exists.
    pub poses: Option<[Vec<Pose>; 2]>,
}

/// Joint two-agent optimum under the conflict rules of the collision
/// objective: two agents may never share a cell at the same step, nor may
/// one enter a cell the other occupied on the immediately preceding step
/// (which covers swaps and follow-on moves).
///
/// Guarded to tiny instances: at most 64 lattice states and a horizon of
/// at most 8.
pub fn joint_optimum(
    world: &World,
    starts: [Pose; 2],
    goals: [&[Pose]; 2],
) -> Result<JointSolution> {
    let states = world.states();
    if states > 64 || world.horizon > 8 {
        return Err(Error::SizeGuard(format!(
            "joint optimum is exhaustive; limit is 64 states and horizon 8, got {states} states \
             and horizon {}",
            world.horizon
        )));
    }
    let masks = [world.goal_mask(goals[0]), world.goal_mask(goals[1])];
    let (s0, s1) = (world.lin(starts[0]), world.lin(starts[1]));
    let pairs = states * states;
    let mut cur = vec![f64::INFINITY; pairs];
    if world.cell_of(s0) != world.cell_of(s1) {
        cur[s0 * states + s1] = 0.0;
    }
    // Parent pointers per stage for path reconstruction.
    let mut parents: Vec<Vec<usize>> = Vec::with_capacity(world.horizon);

    for t in 1..=world.horizon {
        let mut next = vec![f64::INFINITY; pairs];
        let mut parent = vec![usize::MAX; pairs];
        for (pair, &c) in cur.iter().enumerate() {
            if !c.is_finite() {
                continue;
            }
            let (a, b) = (pair / states, pair % states);
            let (pa, pb) = (world.pose_of(a), world.pose_of(b));
            for (_, da) in world.model.successors(pa, world.width, world.height) {
                if world.blocked[da.y * world.width + da.x] {
                    continue;
                }
                let ca = world.edge_cost(pa, da, t - 1, &masks[0]);
                let la = world.lin(da);
                // Entering the other agent's previous cell is a conflict.
                if world.cell_of(la) == world.cell_of(b) {
                    continue;
                }
                for (_, db) in world.model.successors(pb, world.width, world.height) {
                    if world.blocked[db.y * world.width + db.x] {
                        continue;
                    }
                    let lb = world.lin(db);
                    if world.cell_of(lb) == world.cell_of(a)
                        || world.cell_of(lb) == world.cell_of(la)
                    {
                        continue;
                    }
                    let cb = world.edge_cost(pb, db, t - 1, &masks[1]);
                    let cand = c + ca + cb;
                    let idx = la * states + lb;
                    if cand < next[idx] {
                        next[idx] = cand;
                        parent[idx] = pair;
                    }
                }
            }
        }
        parents.push(parent);
        cur = next;
    }

    let mut best_pair = None;
    let mut best = f64::INFINITY;
    for ga in 0..states {
        if !masks[0][ga] {
            continue;
        }
        for gb in 0..states {
            if !masks[1][gb] {
                continue;
            }
            let c = cur[ga * states + gb];
            if c < best {
                best = c;
                best_pair = Some(ga * states + gb);
            }
        }
    }
    let Some(mut pair) = best_pair else {
        return Ok(JointSolution {
            cost: INF_CLAMP,
            poses: None,
        });
    };
    let mut rev = vec![pair];
    for parent in parents.iter().rev() {
        pair = parent[pair];
        rev.push(pair);
    }
    rev.reverse();
    let first: Vec<Pose> = rev.iter().map(|&p| world.pose_of(p / states)).collect();
    let second: Vec<Pose> = rev.iter().map(|&p| world.pose_of(p % states)).collect();
    Ok(JointSolution {
        cost: best,
        poses: Some([first, second]),
    })
}

/// Exhaustive single-agent minimum by enumerating every action sequence.
/// Exponential in the horizon; test-sized instances only.
pub fn enumerate_min_cost(
    world: &World,
    start: Pose,
    goal_poses: &[Pose],
    extrinsic: &ExtrinsicCost,
) -> f64 {
    let goal_mask = world.goal_mask(goal_poses);
    let mut best = f64::INFINITY;
    fn walk(
        world: &World,
        goal_mask: &[bool],
        extrinsic: &ExtrinsicCost,
        pose: Pose,
        t: usize,
        cost: f64,
        best: &mut f64,
    ) {
        if t == world.horizon {
            if goal_mask[world.lin(pose)] && cost < *best {
                *best = cost;
            }
            return;
        }
        for (_, dst) in world.model.successors(pose, world.width, world.height) {
            if world.blocked[dst.y * world.width + dst.x] {
                continue;
            }
            let c = cost
                + world.edge_cost(pose, dst, t, goal_mask)
                + extrinsic.fields[t].get(dst.x, dst.y);
            walk(world, goal_mask, extrinsic, dst, t + 1, c, best);
        }
    }
    walk(world, &goal_mask, extrinsic, start, 0, 0.0, &mut best);
    best
}
