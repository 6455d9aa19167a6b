//! Tensor primitives for value iteration on the lattice.
//!
//! These are plain functions on grids; the tape in [`crate::tape`] records
//! calls to them and implements the matching adjoints, so exact mode, soft
//! mode and the differentiable path all share one implementation of the
//! forward math.
//!
//! Infinity is represented by the finite clamp value [`INF_CLAMP`]. Every
//! accumulation clamps back to it, so unreachable states sit at exactly
//! `INF_CLAMP` instead of drifting upward, and softmin weights for them
//! underflow to hard zeros. Real path costs at the supported problem sizes
//! stay several orders of magnitude below the clamp.

use crate::error::{Error, Result};
use crate::grid::{require, Grid2, Grid3, Grid4};
use crate::lattice::TransitionModel;

/// Finite stand-in for infinite cost.
pub const INF_CLAMP: f64 = 1e6;

/// Gathers, for every state and action, the cost at the unique predecessor
/// state under that action. Entries whose predecessor lies off-grid are
/// filled with `INF_CLAMP`.
pub fn propagate(cost: &Grid3, model: &TransitionModel) -> Result<Grid4> {
    require(
        cost.orientations == model.orientations(),
        "propagate: grid orientation count does not match the model",
    )?;
    let (w, h, th, na) = (cost.width, cost.height, cost.orientations, model.actions());
    let mut out = Grid4::filled(w, h, th, na, INF_CLAMP);
    for y in 0..h {
        for x in 0..w {
            for theta in 0..th {
                let dst = crate::lattice::Pose::new(x, y, theta);
                for a in 0..na {
                    if let Some(p) = model.predecessor(dst, a, w, h) {
                        out.set(x, y, theta, a, cost.get(p.x, p.y, p.theta));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`propagate`]: scatter-adds output cotangents back onto the
/// predecessor cells. Off-grid entries are constants and contribute nothing.
pub fn propagate_adjoint(grad_out: &Grid4, model: &TransitionModel, grad_src: &mut Grid3) {
    let (w, h, th, na) = (
        grad_out.width,
        grad_out.height,
        grad_out.orientations,
        grad_out.actions,
    );
    for y in 0..h {
        for x in 0..w {
            for theta in 0..th {
                let dst = crate::lattice::Pose::new(x, y, theta);
                for a in 0..na {
                    if let Some(p) = model.predecessor(dst, a, w, h) {
                        let g = grad_out.get(x, y, theta, a);
                        let i = grad_src.idx(p.x, p.y, p.theta);
                        grad_src.data[i] += g;
                    }
                }
            }
        }
    }
}

/// `propagated + per-action cost + extrinsic`, clamped at `INF_CLAMP`.
/// This is the scalar-schedule form; the planner uses [`accumulate_volume`]
/// with a full cost volume when action costs vary per state.
pub fn accumulate(propagated: &Grid4, action_costs: &[f64], extrinsic: &Grid3) -> Result<Grid4> {
    require(
        action_costs.len() == propagated.actions,
        "accumulate: action cost schedule length does not match the action count",
    )?;
    let mut costs = Grid4::zeros(
        propagated.width,
        propagated.height,
        propagated.orientations,
        propagated.actions,
    );
    for (i, v) in costs.data.iter_mut().enumerate() {
        *v = action_costs[i % propagated.actions];
    }
    accumulate_volume(propagated, &costs, extrinsic)
}

/// General accumulate: `out(s, a) = propagated(s, a) + costs(s, a) +
/// extrinsic(s)`, clamped so that saturated inputs stay at the clamp.
pub fn accumulate_volume(propagated: &Grid4, costs: &Grid4, extrinsic: &Grid3) -> Result<Grid4> {
    require(
        propagated.same_shape(costs),
        "accumulate: cost volume shape mismatch",
    )?;
    require(
        extrinsic.width == propagated.width
            && extrinsic.height == propagated.height
            && extrinsic.orientations == propagated.orientations,
        "accumulate: extrinsic grid shape mismatch",
    )?;
    let na = propagated.actions;
    let mut out = propagated.clone();
    for (i, v) in out.data.iter_mut().enumerate() {
        *v = (*v + costs.data[i] + extrinsic.data[i / na]).min(INF_CLAMP);
    }
    Ok(out)
}

/// Replicates a 2D field over the orientation axis.
pub fn broadcast_orientation(field: &Grid2, orientations: usize) -> Grid3 {
    let mut out = Grid3::zeros(field.width, field.height, orientations);
    for (i, v) in out.data.iter_mut().enumerate() {
        *v = field.data[i / orientations];
    }
    out
}

/// Sums a state grid over the orientation axis.
pub fn marginalize_orientation(grid: &Grid3) -> Grid2 {
    let mut out = Grid2::zeros(grid.width, grid.height);
    for (i, &v) in grid.data.iter().enumerate() {
        out.data[i / grid.orientations] += v;
    }
    out
}

/// Softmin pooling over the action axis.
///
/// Per state, `policy = softmax(-q / tau)` (stabilized by subtracting the
/// row minimum) and `value = sum_a policy(a) * q(a)`. The value is a smooth
/// upper relaxation of the row minimum: `min <= value <= min + tau ln(A)`.
/// Rows fully saturated at `INF_CLAMP` keep value `INF_CLAMP` under a
/// uniform policy.
pub fn softmin_pool(q: &Grid4, tau: f64) -> Result<(Grid3, Grid4)> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::Config(format!(
            "softmin_pool: tau must be positive, got {tau}"
        )));
    }
    let na = q.actions;
    let mut values = Grid3::zeros(q.width, q.height, q.orientations);
    let mut policy = q.clone();
    for (s, value) in values.data.iter_mut().enumerate() {
        let row = &mut policy.data[s * na..(s + 1) * na];
        let m = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (-(*v - m) / tau).exp();
            z += *v;
        }
        let mut acc = 0.0;
        for (a, v) in row.iter_mut().enumerate() {
            *v /= z;
            acc += *v * q.data[s * na + a];
        }
        *value = acc;
    }
    Ok((values, policy))
}

/// Hard min pooling: per state, the minimum over actions and a one-hot
/// policy at the argmin, ties resolved toward the lowest action index.
/// Not differentiable; the tape refuses it on gradient paths.
pub fn min_pool(q: &Grid4) -> (Grid3, Grid4) {
    let na = q.actions;
    let mut values = Grid3::zeros(q.width, q.height, q.orientations);
    let mut policy = Grid4::zeros(q.width, q.height, q.orientations, q.actions);
    for (s, value) in values.data.iter_mut().enumerate() {
        let row = &q.data[s * na..(s + 1) * na];
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v < row[best] {
                best = a;
            }
        }
        *value = row[best];
        policy.data[s * na + best] = 1.0;
    }
    (values, policy)
}

/// Frobenius inner product of two equally shaped 2D grids.
pub fn frobenius(a: &Grid2, b: &Grid2) -> Result<f64> {
    require(a.same_shape(b), "frobenius: shape mismatch")?;
    Ok(dot(&a.data, &b.data))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-action reweighting of a state distribution by a policy:
/// `out(s, a) = state(s) * policy(s, a)`.
pub fn mul_state_policy(state: &Grid3, policy: &Grid4) -> Result<Grid4> {
    require(
        state.width == policy.width
            && state.height == policy.height
            && state.orientations == policy.orientations,
        "mul_state_policy: shape mismatch",
    )?;
    let na = policy.actions;
    let mut out = policy.clone();
    for (i, v) in out.data.iter_mut().enumerate() {
        *v *= state.data[i / na];
    }
    Ok(out)
}

/// Transpose of [`propagate`]: pushes per-(state, action) weight back onto
/// the predecessor states through the mirrored filters. Weight attached to
/// an off-grid predecessor is dropped.
pub fn push_reversed(weights: &Grid4, model: &TransitionModel) -> Result<Grid3> {
    require(
        weights.orientations == model.orientations() && weights.actions == model.actions(),
        "push_reversed: weight shape does not match the model",
    )?;
    let (w, h, th, na) = (
        weights.width,
        weights.height,
        weights.orientations,
        weights.actions,
    );
    let mut out = Grid3::zeros(w, h, th);
    for y in 0..h {
        for x in 0..w {
            for theta in 0..th {
                let dst = crate::lattice::Pose::new(x, y, theta);
                for a in 0..na {
                    if let Some(p) = model.predecessor(dst, a, w, h) {
                        let i = out.idx(p.x, p.y, p.theta);
                        out.data[i] += weights.get(x, y, theta, a);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Divides a non-negative grid by its total mass. Returns the normalized
/// grid and the mass; fails if the mass is too small to divide by.
pub fn renormalize(grid: &Grid3) -> Result<(Grid3, f64)> {
    let mass = grid.sum();
    if !mass.is_finite() || mass <= 1e-300 {
        return Err(Error::NumericalCollapse(format!(
            "cannot renormalize a state grid with total mass {mass}"
        )));
    }
    let mut out = grid.clone();
    for v in out.data.iter_mut() {
        *v /= mass;
    }
    Ok((out, mass))
}

/// Softmin weights over a small vector of costs: `softmax(-v / tau)`,
/// stabilized the same way as [`softmin_pool`].
pub fn softmin_weights(costs: &[f64], tau: f64) -> Vec<f64> {
    let m = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = costs.iter().map(|&c| (-(c - m) / tau).exp()).collect();
    let z: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= z;
    }
    w
}
