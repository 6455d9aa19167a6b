//! Non-holonomic state lattice.
//!
//! A state is a pose (x, y, theta) on a W x H grid with `orientations`
//! discrete heading bins. Coordinates are screen-style: x grows east
//! (right), y grows south (down), so heading N points toward smaller y.
//! Heading bin k covers the angle `k * 360 / orientations` degrees measured
//! counterclockwise from east.
//!
//! Per heading there are four actions: move straight, move diagonally to
//! the left, move diagonally to the right, and wait. Diagonal moves also
//! turn the heading by one bin (45 degrees for 8 orientations), which is
//! what makes the lattice non-holonomic: displacement never deviates by
//! more than 45 degrees from the current heading, there is no sideways or
//! reverse motion, and the arrival heading always equals the direction
//! actually moved. The filter bank therefore has `orientations * 4`
//! entries (32 for the default 8-heading model).
//!
//! Movement cost is the displacement length: 1 for axis-aligned steps,
//! sqrt(2) for diagonal steps (note a "straight" step from a diagonal
//! heading is a diagonal displacement and costs sqrt(2)). Waiting moves
//! nothing and costs nothing here; time and idle penalties are charged by
//! the planner's cost schedule, not by the lattice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Unit displacements for the eight 45-degree compass directions,
/// indexed in eighths of a turn counterclockwise from east.
const DIR8: [(i32, i32); 8] = [
    (1, 0),   // E
    (1, -1),  // NE
    (0, -1),  // N
    (-1, -1), // NW
    (-1, 0),  // W
    (-1, 1),  // SW
    (0, 1),   // S
    (1, 1),   // SE
];

const LABELS8: [&str; 8] = ["E", "NE", "N", "NW", "W", "SW", "S", "SE"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub x: usize,
    pub y: usize,
    pub theta: usize,
}

impl Pose {
    pub fn new(x: usize, y: usize, theta: usize) -> Self {
        Pose { x, y, theta }
    }
}

/// Action labels, in filter-bank order. Tie-breaks that pick the "lowest
/// action index" resolve toward the front of this list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Straight,
    DiagonalLeft,
    DiagonalRight,
    Wait,
}

pub const ACTION_COUNT: usize = 4;

pub const ALL_ACTIONS: [ActionKind; ACTION_COUNT] = [
    ActionKind::Straight,
    ActionKind::DiagonalLeft,
    ActionKind::DiagonalRight,
    ActionKind::Wait,
];

impl ActionKind {
    pub fn index(self) -> usize {
        match self {
            ActionKind::Straight => 0,
            ActionKind::DiagonalLeft => 1,
            ActionKind::DiagonalRight => 2,
            ActionKind::Wait => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        ALL_ACTIONS.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            ActionKind::Straight => "straight",
            ActionKind::DiagonalLeft => "diag_left",
            ActionKind::DiagonalRight => "diag_right",
            ActionKind::Wait => "wait",
        }
    }
}

/// One transition filter: what taking `kind` from a given heading does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSpec {
    pub kind: ActionKind,
    pub dx: i32,
    pub dy: i32,
    /// Heading change in bins (+1 turns counterclockwise).
    pub dtheta: i32,
    pub movement_cost: f64,
}

/// The full filter bank plus its mirror.
///
/// `forward` is indexed `theta * ACTION_COUNT + action` and describes the
/// successor relation; `reversed` holds the same filters mirrored around
/// the center point, i.e. applying `reversed[theta'][a]` from an arrival
/// pose lands on the unique predecessor under action `a`. The model is
/// grid-size agnostic; bounds are supplied per call.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    orientations: usize,
    time_cost: f64,
    forward: Vec<ActionSpec>,
    reversed: Vec<ActionSpec>,
}

impl TransitionModel {
    /// Builds the standard straight/diagonal-left/diagonal-right/wait bank.
    ///
    /// Only 4 and 8 orientations are supported: those are the counts for
    /// which every heading bin is a multiple of 45 degrees and so maps onto
    /// a grid displacement. Diagonal actions turn by one bin either way
    /// (45 degrees at 8 orientations, 90 at 4) and displace along the
    /// 45-degree direction between the old and new heading.
    pub fn standard(orientations: usize) -> Result<Self> {
        if orientations != 4 && orientations != 8 {
            return Err(Error::Config(format!(
                "unsupported orientation count {orientations}: grid displacements exist only for 4 or 8 heading bins"
            )));
        }
        let eighths_per_bin = 8 / orientations;
        let mut forward = Vec::with_capacity(orientations * ACTION_COUNT);
        for theta in 0..orientations {
            let e = theta * eighths_per_bin;
            for kind in ALL_ACTIONS {
                let (disp_e, dtheta) = match kind {
                    ActionKind::Straight => (Some(e as i32), 0),
                    ActionKind::DiagonalLeft => (Some(e as i32 + 1), 1),
                    ActionKind::DiagonalRight => (Some(e as i32 - 1), -1),
                    ActionKind::Wait => (None, 0),
                };
                let (dx, dy) = match disp_e {
                    Some(e) => DIR8[e.rem_euclid(8) as usize],
                    None => (0, 0),
                };
                let movement_cost = match (dx, dy) {
                    (0, 0) => 0.0,
                    (a, b) if a != 0 && b != 0 => SQRT_2,
                    _ => 1.0,
                };
                forward.push(ActionSpec {
                    kind,
                    dx,
                    dy,
                    dtheta,
                    movement_cost,
                });
            }
        }
        let reversed = mirror_bank(&forward, orientations);
        Ok(TransitionModel {
            orientations,
            time_cost: 1.0,
            forward,
            reversed,
        })
    }

    pub fn orientations(&self) -> usize {
        self.orientations
    }

    pub fn actions(&self) -> usize {
        ACTION_COUNT
    }

    pub fn filter_count(&self) -> usize {
        self.forward.len()
    }

    /// Uniform per-step time cost added to every action by the planner.
    pub fn time_cost(&self) -> f64 {
        self.time_cost
    }

    pub fn action(&self, theta: usize, action: usize) -> &ActionSpec {
        &self.forward[theta * ACTION_COUNT + action]
    }

    pub fn reversed_action(&self, theta: usize, action: usize) -> &ActionSpec {
        &self.reversed[theta * ACTION_COUNT + action]
    }

    /// Swaps the forward and mirrored banks. Applying the result's action
    /// `a` from pose `s'` walks back along the original transition, so
    /// `m.reversed().reversed() == m`.
    pub fn reversed(&self) -> TransitionModel {
        TransitionModel {
            orientations: self.orientations,
            time_cost: self.time_cost,
            forward: self.reversed.clone(),
            reversed: self.forward.clone(),
        }
    }

    /// Successor of `pose` under `action`, or None if it leaves the grid.
    pub fn successor(
        &self,
        pose: Pose,
        action: usize,
        width: usize,
        height: usize,
    ) -> Option<Pose> {
        apply(
            self.action(pose.theta, action),
            pose,
            self.orientations,
            width,
            height,
        )
    }

    /// The unique predecessor state from which `action` arrives at `pose`,
    /// or None if that state lies off-grid.
    pub fn predecessor(
        &self,
        pose: Pose,
        action: usize,
        width: usize,
        height: usize,
    ) -> Option<Pose> {
        apply(
            self.reversed_action(pose.theta, action),
            pose,
            self.orientations,
            width,
            height,
        )
    }

    /// Every in-bounds successor reachable in one action, with its action
    /// index, in action order.
    pub fn successors(&self, pose: Pose, width: usize, height: usize) -> Vec<(usize, Pose)> {
        (0..ACTION_COUNT)
            .filter_map(|a| self.successor(pose, a, width, height).map(|p| (a, p)))
            .collect()
    }

    pub fn heading_label(&self, theta: usize) -> &'static str {
        LABELS8[theta * (8 / self.orientations)]
    }

    pub fn heading_from_label(&self, label: &str) -> Option<usize> {
        let e = LABELS8
            .iter()
            .position(|&l| l.eq_ignore_ascii_case(label))?;
        let per_bin = 8 / self.orientations;
        (e % per_bin == 0).then_some(e / per_bin)
    }
}

fn apply(
    spec: &ActionSpec,
    pose: Pose,
    orientations: usize,
    width: usize,
    height: usize,
) -> Option<Pose> {
    let x = pose.x as i32 + spec.dx;
    let y = pose.y as i32 + spec.dy;
    if x < 0 || y < 0 || x >= width as i32 || y >= height as i32 {
        return None;
    }
    let theta = (pose.theta as i32 + spec.dtheta).rem_euclid(orientations as i32) as usize;
    Some(Pose::new(x as usize, y as usize, theta))
}

/// Mirrors every filter around its center point: displacement negates and
/// the turn unwinds, indexed by the arrival heading of the original filter.
fn mirror_bank(forward: &[ActionSpec], orientations: usize) -> Vec<ActionSpec> {
    let mut reversed = forward.to_vec();
    for theta in 0..orientations {
        for (a, _) in ALL_ACTIONS.iter().enumerate() {
            let src = &forward[theta * ACTION_COUNT + a];
            let arrival = (theta as i32 + src.dtheta).rem_euclid(orientations as i32) as usize;
            reversed[arrival * ACTION_COUNT + a] = ActionSpec {
                kind: src.kind,
                dx: -src.dx,
                dy: -src.dy,
                dtheta: -src.dtheta,
                movement_cost: src.movement_cost,
            };
        }
    }
    reversed
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_has_32_filters() {
        let m = TransitionModel::standard(8).unwrap();
        assert_eq!(m.filter_count(), 32);
        assert_eq!(m.orientations(), 8);
        assert_eq!(m.actions(), 4);
    }

    #[test]
    fn rejects_unsupported_orientation_counts() {
        for theta in [0, 1, 2, 3, 5, 6, 7, 12, 16] {
            assert!(TransitionModel::standard(theta).is_err(), "theta={theta}");
        }
        assert!(TransitionModel::standard(4).is_ok());
    }

    #[test]
    fn east_filters_match_hand_derivation() {
        let m = TransitionModel::standard(8).unwrap();
        let east = 0;
        let s = m.action(east, ActionKind::Straight.index());
        assert_eq!((s.dx, s.dy, s.dtheta), (1, 0, 0));
        assert_eq!(s.movement_cost, 1.0);
        let l = m.action(east, ActionKind::DiagonalLeft.index());
        assert_eq!((l.dx, l.dy, l.dtheta), (1, -1, 1));
        assert_eq!(l.movement_cost, SQRT_2);
        let r = m.action(east, ActionKind::DiagonalRight.index());
        assert_eq!((r.dx, r.dy, r.dtheta), (1, 1, -1));
        assert_eq!(r.movement_cost, SQRT_2);
        let w = m.action(east, ActionKind::Wait.index());
        assert_eq!((w.dx, w.dy, w.dtheta), (0, 0, 0));
        assert_eq!(w.movement_cost, 0.0);
    }

    #[test]
    fn diagonal_headings_move_diagonally_when_straight() {
        // Straight from NE displaces (1,-1): cost sqrt(2). Diagonal actions
        // from NE land on axis directions: cost 1.
        let m = TransitionModel::standard(8).unwrap();
        let ne = 1;
        assert_eq!(m.action(ne, 0).movement_cost, SQRT_2);
        assert_eq!(m.action(ne, 1).movement_cost, 1.0);
        assert_eq!((m.action(ne, 1).dx, m.action(ne, 1).dy), (0, -1));
        assert_eq!(m.action(ne, 2).movement_cost, 1.0);
        assert_eq!((m.action(ne, 2).dx, m.action(ne, 2).dy), (1, 0));
    }

    #[test]
    fn four_orientation_diagonals_turn_90_degrees() {
        let m = TransitionModel::standard(4).unwrap();
        // east = bin 0, north = bin 1
        let l = m.action(0, ActionKind::DiagonalLeft.index());
        assert_eq!((l.dx, l.dy, l.dtheta), (1, -1, 1));
        assert_eq!(l.movement_cost, SQRT_2);
        let s = m.action(1, ActionKind::Straight.index());
        assert_eq!((s.dx, s.dy), (0, -1));
    }

    #[test]
    fn displacement_stays_within_45_degrees_of_heading() {
        // No sideways slip: the angle between displacement and heading is
        // at most one eighth of a turn, for every filter of both models.
        for orientations in [4usize, 8] {
            let m = TransitionModel::standard(orientations).unwrap();
            let per_bin = (8 / orientations) as i32;
            for theta in 0..orientations {
                for a in 0..ACTION_COUNT {
                    let spec = m.action(theta, a);
                    if spec.dx == 0 && spec.dy == 0 {
                        continue;
                    }
                    let disp_e = DIR8.iter().position(|&d| d == (spec.dx, spec.dy)).unwrap() as i32;
                    let heading_e = theta as i32 * per_bin;
                    let mut diff = (disp_e - heading_e).rem_euclid(8);
                    if diff > 4 {
                        diff -= 8;
                    }
                    assert!(diff.abs() <= 1, "theta={theta} action={a} diff={diff}");
                }
            }
        }
    }

    #[test]
    fn arrival_heading_equals_movement_direction() {
        let m = TransitionModel::standard(8).unwrap();
        for theta in 0..8 {
            for a in 0..ACTION_COUNT {
                let spec = m.action(theta, a);
                if spec.dx == 0 && spec.dy == 0 {
                    continue;
                }
                let arrival = (theta as i32 + spec.dtheta).rem_euclid(8) as usize;
                assert_eq!(DIR8[arrival], (spec.dx, spec.dy));
            }
        }
    }

    #[test]
    fn movement_costs_positive_except_wait() {
        for orientations in [4usize, 8] {
            let m = TransitionModel::standard(orientations).unwrap();
            for theta in 0..orientations {
                for a in 0..ACTION_COUNT {
                    let spec = m.action(theta, a);
                    if spec.kind == ActionKind::Wait {
                        assert_eq!(spec.movement_cost, 0.0);
                    } else {
                        assert!(spec.movement_cost >= 1.0);
                    }
                }
            }
            assert_eq!(m.time_cost(), 1.0);
        }
    }

    #[test]
    fn interior_pose_has_four_successors_edges_fewer() {
        let m = TransitionModel::standard(8).unwrap();
        let succ = m.successors(Pose::new(7, 2, 3), 15, 5);
        assert_eq!(succ.len(), 4);
        // East edge heading east: every movement leaves the grid.
        let succ = m.successors(Pose::new(14, 2, 0), 15, 5);
        assert_eq!(succ.len(), 1);
        assert_eq!(succ[0].0, ActionKind::Wait.index());
        assert_eq!(succ[0].1, Pose::new(14, 2, 0));
    }

    #[test]
    fn successors_are_transpose_of_predecessors() {
        // Exhaustive relation check on a full 15x5x8 lattice: s' is a
        // successor of s under a iff s is the predecessor of s' under a.
        let m = TransitionModel::standard(8).unwrap();
        let (w, h) = (15usize, 5usize);
        for y in 0..h {
            for x in 0..w {
                for theta in 0..8 {
                    let s = Pose::new(x, y, theta);
                    for a in 0..ACTION_COUNT {
                        if let Some(sp) = m.successor(s, a, w, h) {
                            assert_eq!(m.predecessor(sp, a, w, h), Some(s));
                        }
                    }
                    for a in 0..ACTION_COUNT {
                        if let Some(sp) = m.predecessor(s, a, w, h) {
                            assert_eq!(m.successor(sp, a, w, h), Some(s));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reversing_twice_is_identity() {
        for orientations in [4usize, 8] {
            let m = TransitionModel::standard(orientations).unwrap();
            assert_eq!(m.reversed().reversed(), m);
        }
    }

    #[test]
    fn reverse_walks_transitions_backward() {
        // Apply then reverse-apply is the identity wherever both steps stay
        // on the grid (7x7 is big enough that interior poses do).
        let m = TransitionModel::standard(8).unwrap();
        let r = m.reversed();
        for theta in 0..8 {
            for a in 0..ACTION_COUNT {
                let s = Pose::new(3, 3, theta);
                if let Some(sp) = m.successor(s, a, 7, 7) {
                    assert_eq!(r.successor(sp, a, 7, 7), Some(s));
                }
            }
        }
    }

    #[test]
    fn heading_labels_round_trip() {
        let m8 = TransitionModel::standard(8).unwrap();
        for theta in 0..8 {
            assert_eq!(m8.heading_from_label(m8.heading_label(theta)), Some(theta));
        }
        let m4 = TransitionModel::standard(4).unwrap();
        assert_eq!(m4.heading_label(1), "N");
        assert_eq!(m4.heading_from_label("n"), Some(1));
        assert_eq!(m4.heading_from_label("NE"), None);
        assert_eq!(m8.heading_from_label("NNE"), None);
    }
}
