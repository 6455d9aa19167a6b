//! Randomized invariant checks for the planning stack.

use std::sync::Arc;

use proptest::prelude::*;

use coopgrid_core::executor::backtrace_exact;
use coopgrid_core::grid::{Grid3, Grid4};
use coopgrid_core::lattice::{Pose, TransitionModel};
use coopgrid_core::ops;
use coopgrid_core::oracle;
use coopgrid_core::planner::{ExtrinsicCost, Goal, PlanMode, Planner, INF_CLAMP};
use coopgrid_core::scenario::{Scenario, ScenarioAgent, SolveMode, SolverParams};

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (
        1usize..=5,
        1usize..=4,
        prop_oneof![Just(4usize), Just(8usize)],
    )
}

fn grid3(entries: impl Strategy<Value = f64> + Clone) -> impl Strategy<Value = Grid3> {
    dims().prop_flat_map(move |(w, h, th)| {
        proptest::collection::vec(entries.clone(), w * h * th).prop_map(move |data| {
            let mut g = Grid3::zeros(w, h, th);
            g.data = data;
            g
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Propagate is affine: a gather matrix `P` plus a constant plate of
    /// `INF_CLAMP` on slots without an on-grid predecessor. Its linear part
    /// and the adjoint are transposes: `<P x, y> = <x, P^T y>`.
    #[test]
    fn propagate_and_adjoint_are_transposes(
        src in grid3(0.0..10.0f64),
        seed in proptest::collection::vec(0.0..1.0f64, 1..2000),
    ) {
        let model = TransitionModel::standard(src.orientations).unwrap();
        let out = ops::propagate(&src, &model).unwrap();
        let plate =
            ops::propagate(&Grid3::zeros(src.width, src.height, src.orientations), &model)
                .unwrap();
        let mut y = Grid4::zeros(src.width, src.height, src.orientations, 4);
        for (i, v) in y.data.iter_mut().enumerate() {
            *v = seed[i % seed.len()];
        }
        let forward: f64 = out
            .data
            .iter()
            .zip(&plate.data)
            .zip(&y.data)
            .map(|((o, c), b)| (o - c) * b)
            .sum();
        let mut pulled = Grid3::zeros(src.width, src.height, src.orientations);
        ops::propagate_adjoint(&y, &model, &mut pulled);
        let backward: f64 = src.data.iter().zip(&pulled.data).map(|(a, b)| a * b).sum();
        prop_assert!((forward - backward).abs() <= 1e-9 * forward.abs().max(1.0));
    }

    /// Softmin pooling is a smooth upper relaxation of hard min pooling:
    /// `min <= soft <= min + tau ln(actions)`, and its policy rows are
    /// probability distributions.
    #[test]
    fn softmin_pool_brackets_min_pool(
        (w, h, th) in dims(),
        tau in 0.05..2.0f64,
        seed in proptest::collection::vec(0.0..10.0f64, 1..2000),
    ) {
        let mut q = Grid4::zeros(w, h, th, 4);
        for (i, v) in q.data.iter_mut().enumerate() {
            *v = seed[i % seed.len()];
        }
        let (soft, policy) = ops::softmin_pool(&q, tau).unwrap();
        let (hard, _) = ops::min_pool(&q);
        let slack = tau * 4.0f64.ln();
        for (s, m) in soft.data.iter().zip(&hard.data) {
            prop_assert!(*s >= *m - 1e-9);
            prop_assert!(*s <= *m + slack + 1e-9);
        }
        for state in 0..w * h * th {
            let row = &policy.data[state * 4..(state + 1) * 4];
            let sum: f64 = row.iter().sum();
            prop_assert!(row.iter().all(|p| *p >= 0.0));
            prop_assert!((sum - 1.0).abs() <= 1e-9);
        }
    }

    /// Pushing state mass through the reversed transitions conserves it as
    /// long as the policy only weights arrivals that have an on-grid
    /// predecessor — which is exactly the support a softmin policy over a
    /// clamped cost volume can have. The wait action guarantees every state
    /// has at least one feasible arrival.
    #[test]
    fn push_reversed_conserves_mass(
        rho in grid3(0.0..1.0f64),
        seed in proptest::collection::vec(0.0..1.0f64, 1..2000),
    ) {
        let model = TransitionModel::standard(rho.orientations).unwrap();
        let (w, h) = (rho.width, rho.height);
        let mut policy = Grid4::zeros(w, h, rho.orientations, 4);
        for y in 0..h {
            for x in 0..w {
                for theta in 0..rho.orientations {
                    let dst = Pose::new(x, y, theta);
                    let state = policy.idx(x, y, theta, 0) / 4;
                    let raw: Vec<f64> = (0..4)
                        .map(|a| match model.predecessor(dst, a, w, h) {
                            Some(_) => seed[(state * 4 + a) % seed.len()] + 1e-3,
                            None => 0.0,
                        })
                        .collect();
                    let total: f64 = raw.iter().sum();
                    for (a, r) in raw.iter().enumerate() {
                        policy.data[state * 4 + a] = r / total;
                    }
                }
            }
        }
        let flow = ops::mul_state_policy(&rho, &policy).unwrap();
        let pushed = ops::push_reversed(&flow, &model).unwrap();
        let before: f64 = rho.data.iter().sum();
        prop_assert!((pushed.data.iter().sum::<f64>() - before).abs() <= 1e-9 * before.max(1.0));
    }

    /// Renormalize turns any non-trivial non-negative field into a
    /// distribution and reports the absorbed mass.
    #[test]
    fn renormalize_yields_distribution(rho in grid3(0.0..1.0f64)) {
        let total: f64 = rho.data.iter().sum();
        prop_assume!(total > 1e-9);
        let (unit, mass) = ops::renormalize(&rho).unwrap();
        prop_assert!((mass - total).abs() <= 1e-9 * total.max(1.0));
        prop_assert!((unit.data.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(unit.data.iter().all(|v| *v >= 0.0));
    }

    /// Scenario serialization round-trips exactly.
    #[test]
    fn scenario_round_trip(
        name in "[a-z][a-z0-9-]{0,11}",
        w in 2usize..=7,
        h in 2usize..=5,
        horizon in 1usize..=30,
        orientations in prop_oneof![Just(4usize), Just(8usize)],
        blocked_bits in proptest::collection::vec(proptest::bool::weighted(0.25), 35),
        starts in proptest::collection::vec((0usize..7, 0usize..5, 0usize..8), 1..=3),
        goals in proptest::collection::vec((0usize..7, 0usize..5, 0usize..9), 1..=3),
        tau in 0.01..10.0f64,
        eta in 0.01..10.0f64,
        lambda in 0.1..1000.0f64,
        eps in 0.0..0.5f64,
        max_iters in 1usize..=500,
        soft in proptest::bool::ANY,
    ) {
        let mut blocked: Vec<bool> =
            (0..w * h).map(|i| blocked_bits[i % blocked_bits.len()]).collect();
        let mut agents = Vec::new();
        let mut taken = Vec::new();
        for (sx, sy, sth) in starts {
            let (sx, sy) = (sx % w, sy % h);
            if taken.contains(&(sx, sy)) {
                continue;
            }
            taken.push((sx, sy));
            blocked[sy * w + sx] = false;
            let goals: Vec<Goal> = goals
                .iter()
                .map(|&(gx, gy, gth)| {
                    let (gx, gy) = (gx % w, gy % h);
                    blocked[gy * w + gx] = false;
                    Goal {
                        x: gx,
                        y: gy,
                        theta: if gth >= orientations { None } else { Some(gth) },
                    }
                })
                .collect();
            agents.push(ScenarioAgent {
                start: Pose::new(sx, sy, sth % orientations),
                goals,
            });
        }
        prop_assume!(!agents.is_empty());

        let scen = Scenario {
            name,
            width: w,
            height: h,
            blocked,
            horizon,
            orientations,
            agents,
            params: SolverParams {
                tau,
                eta,
                lambda_coll: lambda,
                epsilon_idle: eps,
                max_iters,
                mode: if soft { SolveMode::Soft } else { SolveMode::Exact },
            },
        };
        let text = coopgrid_core::scenario::serialize(&scen);
        let parsed = coopgrid_core::scenario::parse(&text).unwrap();
        prop_assert_eq!(&parsed, &scen);
        prop_assert_eq!(coopgrid_core::scenario::serialize(&parsed), text);
    }

    /// Exact plan values agree with the independent time-expanded search,
    /// and a feasible backtrace prices exactly the claimed plan cost.
    #[test]
    fn plans_match_search_and_backtrace_prices(
        w in 2usize..=6,
        h in 2usize..=4,
        horizon in 4usize..=8,
        blocked_bits in proptest::collection::vec(proptest::bool::weighted(0.2), 24),
        start_seed in (0usize..24, 0usize..4),
        goal_seed in 0usize..24,
    ) {
        let orientations = 4;
        let mut blocked: Vec<bool> =
            (0..w * h).map(|i| blocked_bits[i % blocked_bits.len()]).collect();
        let start_cell = start_seed.0 % (w * h);
        let goal_cell = goal_seed % (w * h);
        blocked[start_cell] = false;
        blocked[goal_cell] = false;
        let start = Pose::new(start_cell % w, start_cell / w, start_seed.1 % orientations);
        let goal = Goal { x: goal_cell % w, y: goal_cell / w, theta: None };

        let planner = Planner::new(w, h, &blocked, orientations, horizon, 0.05).unwrap();
        let extr = ExtrinsicCost::zeros(w, h, horizon);
        let plan = planner.plan(start, &[goal], &extr, PlanMode::Exact).unwrap();

        let world = oracle::World {
            width: w,
            height: h,
            blocked,
            model: Arc::clone(planner.model()),
            horizon,
            epsilon_idle: 0.05,
        };
        let goal_poses = planner.expand_goals(&[goal]).unwrap();
        let stages = oracle::reach_costs(&world, start, &goal_poses, &extr).unwrap();
        for (stage, values) in stages.iter().zip(&plan.values) {
            for (state, want) in stage.iter().enumerate() {
                prop_assert!((values.data[state] - want).abs() <= 1e-9);
            }
        }

        if plan.is_feasible() {
            let traj = backtrace_exact(&plan, planner.model()).unwrap();
            prop_assert!((traj.total_cost - plan.goal_cost()).abs() <= 1e-9);
            prop_assert!(traj.total_cost < 0.5 * INF_CLAMP);
        }
    }
}
