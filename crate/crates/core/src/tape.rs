//! Reverse-mode differentiation over the planner's tensor primitives.
//!
//! The tape is a classic Wengert list: every operation executes eagerly
//! (delegating the forward math to [`crate::ops`]) and appends a record
//! holding its input variable ids and parameters. `backward` replays the
//! records in exact reverse execution order, accumulating cotangents per
//! node. There is no graph pruning; records whose outputs never received a
//! cotangent are skipped.
//!
//! Only the primitives the planning stack needs are recorded. Hard min
//! pooling may be recorded for bookkeeping but refuses to participate in a
//! gradient: if a cotangent reaches a min-pool record, `backward` fails
//! with an unsupported-operation error instead of inventing a subgradient.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid2, Grid3, Grid4};
use crate::lattice::{Pose, TransitionModel};
use crate::ops;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Node payload; gradients reuse the same representation so accumulator
/// shapes always match their grid shapes.
#[derive(Debug, Clone)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
    Field2(Grid2),
    Field3(Grid3),
    Field4(Grid4),
}

impl Value {
    fn zeros_like(&self) -> Value {
        match self {
            Value::Scalar(_) => Value::Scalar(0.0),
            Value::Vector(v) => Value::Vector(vec![0.0; v.len()]),
            Value::Field2(g) => Value::Field2(Grid2::zeros(g.width, g.height)),
            Value::Field3(g) => Value::Field3(Grid3::zeros(g.width, g.height, g.orientations)),
            Value::Field4(g) => {
                Value::Field4(Grid4::zeros(g.width, g.height, g.orientations, g.actions))
            }
        }
    }

    pub fn data(&self) -> &[f64] {
        match self {
            Value::Scalar(x) => std::slice::from_ref(x),
            Value::Vector(v) => v,
            Value::Field2(g) => &g.data,
            Value::Field3(g) => &g.data,
            Value::Field4(g) => &g.data,
        }
    }

    fn data_mut(&mut self) -> &mut [f64] {
        match self {
            Value::Scalar(x) => std::slice::from_mut(x),
            Value::Vector(v) => v,
            Value::Field2(g) => &mut g.data,
            Value::Field3(g) => &mut g.data,
            Value::Field4(g) => &mut g.data,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_field2(&self) -> Option<&Grid2> {
        match self {
            Value::Field2(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_field3(&self) -> Option<&Grid3> {
        match self {
            Value::Field3(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_field4(&self) -> Option<&Grid4> {
        match self {
            Value::Field4(g) => Some(g),
            _ => None,
        }
    }
}

enum Op {
    Input,
    Propagate {
        src: Var,
        model: Arc<TransitionModel>,
    },
    Accumulate {
        prop: Var,
        extr: Var,
    },
    SoftminPool {
        q: Var,
        tau: f64,
    },
    MinPool,
    MulStatePolicy {
        state: Var,
        policy: Var,
    },
    PushReversed {
        weights: Var,
        model: Arc<TransitionModel>,
    },
    Renormalize {
        src: Var,
        mass: f64,
    },
    Marginalize {
        src: Var,
    },
    BroadcastOrientation {
        src: Var,
    },
    Dot {
        a: Var,
        b: Var,
    },
    Gather {
        src: Var,
        indices: Arc<Vec<usize>>,
    },
    Scatter {
        src: Var,
        indices: Arc<Vec<usize>>,
    },
    SoftminExpect {
        costs: Var,
        tau: f64,
    },
    SoftminWeights {
        costs: Var,
        tau: f64,
    },
    AddScaled {
        terms: Vec<(f64, Var)>,
    },
}

struct Record {
    op: Op,
    outs: [Var; 2],
    out_count: usize,
}

/// Gradients per tape variable, produced by [`Tape::backward`]. Variables
/// the loss does not depend on have no entry and count as zero.
#[derive(Debug)]
pub struct GradStore {
    grads: Vec<Option<Value>>,
}

impl GradStore {
    pub fn get(&self, var: Var) -> Option<&Value> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a 2D input, zeros if the loss never touched it.
    pub fn field2_or_zeros(&self, var: Var, width: usize, height: usize) -> Grid2 {
        match self.get(var) {
            Some(Value::Field2(g)) => g.clone(),
            _ => Grid2::zeros(width, height),
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Value>,
    records: Vec<Record>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, value: Value, op: Op) -> Var {
        let var = Var(self.nodes.len());
        self.nodes.push(value);
        self.records.push(Record {
            op,
            outs: [var, var],
            out_count: 1,
        });
        var
    }

    fn push2(&mut self, first: Value, second: Value, op: Op) -> (Var, Var) {
        let a = Var(self.nodes.len());
        self.nodes.push(first);
        let b = Var(self.nodes.len());
        self.nodes.push(second);
        self.records.push(Record {
            op,
            outs: [a, b],
            out_count: 2,
        });
        (a, b)
    }

    pub fn value(&self, var: Var) -> &Value {
        &self.nodes[var.0]
    }

    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0]
            .as_scalar()
            .expect("tape variable is not a scalar")
    }

    fn field3(&self, var: Var) -> Result<&Grid3> {
        self.nodes[var.0]
            .as_field3()
            .ok_or_else(|| Error::Config("tape variable is not a state grid".into()))
    }

    fn field4(&self, var: Var) -> Result<&Grid4> {
        self.nodes[var.0]
            .as_field4()
            .ok_or_else(|| Error::Config("tape variable is not a state-action grid".into()))
    }

    fn field2(&self, var: Var) -> Result<&Grid2> {
        self.nodes[var.0]
            .as_field2()
            .ok_or_else(|| Error::Config("tape variable is not a 2d field".into()))
    }

    fn vector(&self, var: Var) -> Result<&Vec<f64>> {
        match &self.nodes[var.0] {
            Value::Vector(v) => Ok(v),
            _ => Err(Error::Config("tape variable is not a vector".into())),
        }
    }

    // --- inputs -----------------------------------------------------------

    pub fn input2(&mut self, grid: &Grid2) -> Var {
        self.push(Value::Field2(grid.clone()), Op::Input)
    }

    pub fn input3(&mut self, grid: &Grid3) -> Var {
        self.push(Value::Field3(grid.clone()), Op::Input)
    }

    pub fn input4(&mut self, grid: &Grid4) -> Var {
        self.push(Value::Field4(grid.clone()), Op::Input)
    }

    pub fn input_scalar(&mut self, x: f64) -> Var {
        self.push(Value::Scalar(x), Op::Input)
    }

    // --- recorded primitives ---------------------------------------------

    pub fn propagate(&mut self, src: Var, model: &Arc<TransitionModel>) -> Result<Var> {
        let out = ops::propagate(self.field3(src)?, model)?;
        Ok(self.push(
            Value::Field4(out),
            Op::Propagate {
                src,
                model: Arc::clone(model),
            },
        ))
    }

    /// `prop + costs + extrinsic` with the usual clamp. The cost volume is
    /// a constant; only `prop` and `extr` carry gradients.
    pub fn accumulate(&mut self, prop: Var, costs: Arc<Grid4>, extr: Var) -> Result<Var> {
        let out = ops::accumulate_volume(self.field4(prop)?, &costs, self.field3(extr)?)?;
        Ok(self.push(Value::Field4(out), Op::Accumulate { prop, extr }))
    }

    /// Returns (values, policy).
    pub fn softmin_pool(&mut self, q: Var, tau: f64) -> Result<(Var, Var)> {
        let (values, policy) = ops::softmin_pool(self.field4(q)?, tau)?;
        Ok(self.push2(
            Value::Field3(values),
            Value::Field4(policy),
            Op::SoftminPool { q, tau },
        ))
    }

    /// Hard pooling; records a barrier that rejects gradient flow.
    pub fn min_pool(&mut self, q: Var) -> Result<(Var, Var)> {
        let (values, policy) = ops::min_pool(self.field4(q)?);
        Ok(self.push2(Value::Field3(values), Value::Field4(policy), Op::MinPool))
    }

    pub fn mul_state_policy(&mut self, state: Var, policy: Var) -> Result<Var> {
        let out = ops::mul_state_policy(self.field3(state)?, self.field4(policy)?)?;
        Ok(self.push(Value::Field4(out), Op::MulStatePolicy { state, policy }))
    }

    pub fn push_reversed(&mut self, weights: Var, model: &Arc<TransitionModel>) -> Result<Var> {
        let out = ops::push_reversed(self.field4(weights)?, model)?;
        Ok(self.push(
            Value::Field3(out),
            Op::PushReversed {
                weights,
                model: Arc::clone(model),
            },
        ))
    }

    pub fn renormalize(&mut self, src: Var) -> Result<Var> {
        let (out, mass) = ops::renormalize(self.field3(src)?)?;
        Ok(self.push(Value::Field3(out), Op::Renormalize { src, mass }))
    }

    pub fn marginalize(&mut self, src: Var) -> Result<Var> {
        let out = ops::marginalize_orientation(self.field3(src)?);
        Ok(self.push(Value::Field2(out), Op::Marginalize { src }))
    }

    pub fn broadcast_orientation(&mut self, src: Var, orientations: usize) -> Result<Var> {
        let out = ops::broadcast_orientation(self.field2(src)?, orientations);
        Ok(self.push(Value::Field3(out), Op::BroadcastOrientation { src }))
    }

    /// Inner product of two equally shaped nodes (any rank), as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (da, db) = (self.nodes[a.0].data(), self.nodes[b.0].data());
        if da.len() != db.len() {
            return Err(Error::Config("dot: operand length mismatch".into()));
        }
        let out = ops::dot(da, db);
        Ok(self.push(Value::Scalar(out), Op::Dot { a, b }))
    }

    /// Reads the listed linear indices of a state grid into a vector.
    pub fn gather(&mut self, src: Var, indices: Vec<usize>) -> Result<Var> {
        let g = self.field3(src)?;
        let out: Vec<f64> = indices.iter().map(|&i| g.data[i]).collect();
        Ok(self.push(
            Value::Vector(out),
            Op::Gather {
                src,
                indices: Arc::new(indices),
            },
        ))
    }

    /// Writes a vector into an otherwise-zero state grid at the listed
    /// linear indices (duplicate indices add).
    pub fn scatter3(
        &mut self,
        src: Var,
        indices: Vec<usize>,
        width: usize,
        height: usize,
        orientations: usize,
    ) -> Result<Var> {
        let v = self.vector(src)?;
        if v.len() != indices.len() {
            return Err(Error::Config(
                "scatter: index count does not match vector length".into(),
            ));
        }
        let mut out = Grid3::zeros(width, height, orientations);
        for (&i, &x) in indices.iter().zip(v) {
            out.data[i] += x;
        }
        Ok(self.push(
            Value::Field3(out),
            Op::Scatter {
                src,
                indices: Arc::new(indices),
            },
        ))
    }

    /// Softmin-weighted expectation of a cost vector:
    /// `sum_i softmax(-c/tau)_i * c_i`.
    pub fn softmin_expect(&mut self, costs: Var, tau: f64) -> Result<Var> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::Config(format!(
                "softmin_expect: tau must be positive, got {tau}"
            )));
        }
        let c = self.vector(costs)?;
        let w = ops::softmin_weights(c, tau);
        let out = ops::dot(&w, c);
        Ok(self.push(Value::Scalar(out), Op::SoftminExpect { costs, tau }))
    }

    /// Softmin weights of a cost vector, as a vector node.
    pub fn softmin_weights(&mut self, costs: Var, tau: f64) -> Result<Var> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::Config(format!(
                "softmin_weights: tau must be positive, got {tau}"
            )));
        }
        let out = ops::softmin_weights(self.vector(costs)?, tau);
        Ok(self.push(Value::Vector(out), Op::SoftminWeights { costs, tau }))
    }

    /// Scalar linear combination `sum_i k_i * x_i`.
    pub fn add_scaled(&mut self, terms: Vec<(f64, Var)>) -> Result<Var> {
        let mut acc = 0.0;
        for &(k, v) in &terms {
            acc += k * self.nodes[v.0]
                .as_scalar()
                .ok_or_else(|| Error::Config("add_scaled: non-scalar term".into()))?;
        }
        Ok(self.push(Value::Scalar(acc), Op::AddScaled { terms }))
    }

    // --- backward ----------------------------------------------------------

    /// Reverse sweep from a scalar loss, seeding its cotangent with 1.
    /// Returns accumulators for every variable the loss depends on.
    pub fn backward(&self, loss: Var) -> Result<GradStore> {
        if self.nodes[loss.0].as_scalar().is_none() {
            return Err(Error::Config(
                "backward: loss must be a scalar tape variable".into(),
            ));
        }
        let mut grads: Vec<Option<Value>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Value::Scalar(1.0));

        for rec in self.records.iter().rev() {
            // Input cotangents are the result; leave them in place.
            if matches!(rec.op, Op::Input) {
                continue;
            }
            // The producers of a variable precede its consumers on the
            // tape, so by the time we reach a record its output cotangents
            // are final and can be consumed.
            let out_grads: Vec<Option<Value>> = rec.outs[..rec.out_count]
                .iter()
                .map(|v| grads[v.0].take())
                .collect();
            if out_grads.iter().all(|g| g.is_none()) {
                continue;
            }
            self.apply_adjoint(rec, &out_grads, &mut grads)?;
        }
        Ok(GradStore { grads })
    }

    fn apply_adjoint(
        &self,
        rec: &Record,
        out_grads: &[Option<Value>],
        grads: &mut [Option<Value>],
    ) -> Result<()> {
        let add = |grads: &mut [Option<Value>], var: Var, f: &mut dyn FnMut(&mut [f64])| {
            let slot = &mut grads[var.0];
            if slot.is_none() {
                *slot = Some(self.nodes[var.0].zeros_like());
            }
            f(slot.as_mut().unwrap().data_mut());
        };

        match &rec.op {
            Op::Input => {}

            Op::Propagate { src, model } => {
                let g = out_grads[0].as_ref().unwrap().as_field4().unwrap();
                let src_grid = self.nodes[src.0].as_field3().unwrap();
                let mut acc = Grid3::zeros(src_grid.width, src_grid.height, src_grid.orientations);
                ops::propagate_adjoint(g, model, &mut acc);
                add(grads, *src, &mut |d| {
                    for (x, y) in d.iter_mut().zip(&acc.data) {
                        *x += y;
                    }
                });
            }

            Op::Accumulate { prop, extr, .. } => {
                let g = out_grads[0].as_ref().unwrap().data();
                let out_val = self.nodes[rec.outs[0].0].as_field4().unwrap();
                let na = out_val.actions;
                // Clamped entries (at or above INF_CLAMP) pass no gradient.
                add(grads, *prop, &mut |d| {
                    for (i, x) in d.iter_mut().enumerate() {
                        if out_val.data[i] < ops::INF_CLAMP {
                            *x += g[i];
                        }
                    }
                });
                add(grads, *extr, &mut |d| {
                    for (i, &gi) in g.iter().enumerate() {
                        if out_val.data[i] < ops::INF_CLAMP {
                            d[i / na] += gi;
                        }
                    }
                });
            }

            Op::SoftminPool { q, tau } => {
                let q_grid = self.nodes[q.0].as_field4().unwrap();
                let values = self.nodes[rec.outs[0].0].as_field3().unwrap();
                let policy = self.nodes[rec.outs[1].0].as_field4().unwrap();
                let gv = out_grads[0].as_ref().map(|v| v.data().to_vec());
                let gp = out_grads[1].as_ref().map(|v| v.data().to_vec());
                let na = q_grid.actions;
                add(grads, *q, &mut |d| {
                    for s in 0..values.data.len() {
                        let v = values.data[s];
                        let pi = &policy.data[s * na..(s + 1) * na];
                        let qs = &q_grid.data[s * na..(s + 1) * na];
                        let gvs = gv.as_ref().map_or(0.0, |g| g[s]);
                        if gvs != 0.0 {
                            // d value / d q_b = pi_b * (1 + (v - q_b)/tau)
                            for b in 0..na {
                                d[s * na + b] += gvs * pi[b] * (1.0 + (v - qs[b]) / tau);
                            }
                        }
                        if let Some(gp) = gp.as_ref() {
                            let gps = &gp[s * na..(s + 1) * na];
                            if gps.iter().any(|&x| x != 0.0) {
                                // d pi_a / d q_b = (pi_a pi_b - delta_ab pi_a)/tau
                                let dot_gp_pi = ops::dot(gps, pi);
                                for b in 0..na {
                                    d[s * na + b] += pi[b] / tau * (dot_gp_pi - gps[b]);
                                }
                            }
                        }
                    }
                });
            }

            Op::MinPool => {
                let touched = out_grads
                    .iter()
                    .flatten()
                    .any(|g| g.data().iter().any(|&x| x != 0.0));
                if touched {
                    return Err(Error::Unsupported(
                        "min_pool lies on a differentiable path; use softmin_pool".into(),
                    ));
                }
            }

            Op::MulStatePolicy { state, policy } => {
                let g = out_grads[0].as_ref().unwrap().data().to_vec();
                let state_val = self.nodes[state.0].as_field3().unwrap();
                let policy_val = self.nodes[policy.0].as_field4().unwrap();
                let na = policy_val.actions;
                add(grads, *state, &mut |d| {
                    for (i, &gi) in g.iter().enumerate() {
                        d[i / na] += gi * policy_val.data[i];
                    }
                });
                add(grads, *policy, &mut |d| {
                    for (i, x) in d.iter_mut().enumerate() {
                        *x += g[i] * state_val.data[i / na];
                    }
                });
            }

            Op::PushReversed { weights, model } => {
                let g = out_grads[0].as_ref().unwrap().as_field3().unwrap();
                let w_grid = self.nodes[weights.0].as_field4().unwrap();
                let (w, h, th, na) = (
                    w_grid.width,
                    w_grid.height,
                    w_grid.orientations,
                    w_grid.actions,
                );
                add(grads, *weights, &mut |d| {
                    for y in 0..h {
                        for x in 0..w {
                            for theta in 0..th {
                                let dst = Pose::new(x, y, theta);
                                for a in 0..na {
                                    if let Some(p) = model.predecessor(dst, a, w, h) {
                                        d[((y * w + x) * th + theta) * na + a] +=
                                            g.get(p.x, p.y, p.theta);
                                    }
                                }
                            }
                        }
                    }
                });
            }

            Op::Renormalize { src, mass } => {
                let g = out_grads[0].as_ref().unwrap().data();
                let y = self.nodes[rec.outs[0].0].as_field3().unwrap();
                let gy = ops::dot(g, &y.data);
                add(grads, *src, &mut |d| {
                    for (i, x) in d.iter_mut().enumerate() {
                        *x += (g[i] - gy) / mass;
                    }
                });
            }

            Op::Marginalize { src } => {
                let g = out_grads[0].as_ref().unwrap().data();
                let th = self.nodes[src.0].as_field3().unwrap().orientations;
                add(grads, *src, &mut |d| {
                    for (i, x) in d.iter_mut().enumerate() {
                        *x += g[i / th];
                    }
                });
            }

            Op::BroadcastOrientation { src } => {
                let g = out_grads[0].as_ref().unwrap().data();
                let th = self.nodes[rec.outs[0].0].as_field3().unwrap().orientations;
                add(grads, *src, &mut |d| {
                    for (i, &gi) in g.iter().enumerate() {
                        d[i / th] += gi;
                    }
                });
            }

            Op::Dot { a, b } => {
                let g = out_grads[0].as_ref().unwrap().as_scalar().unwrap();
                let av = self.nodes[a.0].data().to_vec();
                let bv = self.nodes[b.0].data().to_vec();
                add(grads, *a, &mut |d| {
                    for (x, y) in d.iter_mut().zip(&bv) {
                        *x += g * y;
                    }
                });
                add(grads, *b, &mut |d| {
                    for (x, y) in d.iter_mut().zip(&av) {
                        *x += g * y;
                    }
                });
            }

            Op::Gather { src, indices } => {
                let g = out_grads[0].as_ref().unwrap().data().to_vec();
                add(grads, *src, &mut |d| {
                    for (&i, &gi) in indices.iter().zip(&g) {
                        d[i] += gi;
                    }
                });
            }

            Op::Scatter { src, indices } => {
                let g = out_grads[0].as_ref().unwrap().data().to_vec();
                add(grads, *src, &mut |d| {
                    for (k, &i) in indices.iter().enumerate() {
                        d[k] += g[i];
                    }
                });
            }

            Op::SoftminExpect { costs, tau } => {
                let g = out_grads[0].as_ref().unwrap().as_scalar().unwrap();
                let c = match &self.nodes[costs.0] {
                    Value::Vector(v) => v.clone(),
                    _ => unreachable!(),
                };
                let w = ops::softmin_weights(&c, *tau);
                let v = ops::dot(&w, &c);
                add(grads, *costs, &mut |d| {
                    for (b, x) in d.iter_mut().enumerate() {
                        *x += g * w[b] * (1.0 + (v - c[b]) / tau);
                    }
                });
            }

            Op::SoftminWeights { costs, tau } => {
                let g = out_grads[0].as_ref().unwrap().data().to_vec();
                let w = match &self.nodes[rec.outs[0].0] {
                    Value::Vector(v) => v.clone(),
                    _ => unreachable!(),
                };
                let dot_gw = ops::dot(&g, &w);
                add(grads, *costs, &mut |d| {
                    for (b, x) in d.iter_mut().enumerate() {
                        *x += w[b] / tau * (dot_gw - g[b]);
                    }
                });
            }

            Op::AddScaled { terms } => {
                let g = out_grads[0].as_ref().unwrap().as_scalar().unwrap();
                for &(k, v) in terms {
                    add(grads, v, &mut |d| {
                        d[0] += k * g;
                    });
                }
            }
        }
        Ok(())
    }
}
