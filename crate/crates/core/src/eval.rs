//! Error metrics against the exact solutions, and multi-seed aggregation.
//!
//! Four numbers summarise a critic: mean-squared error to `Q*`, mean-squared
//! error of its action gradient to `grad_a Q*`, mean-squared difference
//! between its greedy action and `pi*`, and the Monte Carlo return of acting
//! greedily. All of them consume the read-only [`TargetCritic`] view, so the
//! same code scores trained networks and tabulated references alike.

use crate::critic::LinearActor;
use crate::env::{DiffEnv, LqrEnv, Toy1dEnv};
use crate::error::{Error, Result};
use crate::oracle::{
    argmax_ties_smallest, grad_a_q_star, linspace, lqr_q_star_eval, q_star_eval, GridSolution,
    RiccatiSolution,
};
use crate::target::TargetCritic;

/// One evaluation snapshot for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub seed: u64,
    pub q_mse: f64,
    pub grad_a_mse: f64,
    pub policy_err: f64,
    pub mc_return: f64,
}

/// Per-step mean and sample standard deviation over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub step: usize,
    pub n_seeds: usize,
    pub q_mse_mean: f64,
    pub q_mse_std: f64,
    pub grad_a_mse_mean: f64,
    pub grad_a_mse_std: f64,
    pub policy_err_mean: f64,
    pub policy_err_std: f64,
    pub mc_return_mean: f64,
    pub mc_return_std: f64,
}

fn check_grid_size(what: &'static str, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidInput {
            what,
            detail: format!("grid needs at least 2 points, got {n}"),
        });
    }
    Ok(())
}

/// Mean of `(Q - Q*)^2` over an `n x n` uniform grid on `[-1, 1]^2`.
pub fn toy_q_mse(critic: &dyn TargetCritic, sol: &GridSolution, n_side: usize) -> Result<f64> {
    check_grid_size("toy_q_mse", n_side)?;
    let ss = linspace(-1.0, 1.0, n_side);
    let aa = linspace(-1.0, 1.0, n_side);
    let mut acc = 0.0;
    for &s in &ss {
        let qs = critic.values_over_actions(&[s], &aa)?;
        for (&a, &q) in aa.iter().zip(&qs) {
            let d = q - q_star_eval(sol, s, a)?;
            acc += d * d;
        }
    }
    Ok(acc / (n_side * n_side) as f64)
}

/// Mean of `(dQ/da - dQ*/da)^2` over the same grid; the reference gradient
/// differentiates the tabulated value by centred differences.
pub fn toy_grad_a_mse(
    critic: &dyn TargetCritic,
    sol: &GridSolution,
    n_side: usize,
) -> Result<f64> {
    check_grid_size("toy_grad_a_mse", n_side)?;
    let ss = linspace(-1.0, 1.0, n_side);
    let aa = linspace(-1.0, 1.0, n_side);
    let mut acc = 0.0;
    for &s in &ss {
        for &a in &aa {
            let (_, _, ga) = critic.eval(&[s], &[a])?;
            let d = ga[0] - grad_a_q_star(sol, s, a)?;
            acc += d * d;
        }
    }
    Ok(acc / (n_side * n_side) as f64)
}

/// Mean of `(greedy(s) - pi*(s))^2` over `n_states` uniform states; the
/// greedy action maximises the critic over `n_actions` uniform actions with
/// ties resolved toward the smaller action.
pub fn toy_policy_error(
    critic: &dyn TargetCritic,
    sol: &GridSolution,
    n_states: usize,
    n_actions: usize,
) -> Result<f64> {
    check_grid_size("toy_policy_error", n_states)?;
    check_grid_size("toy_policy_error", n_actions)?;
    let ss = linspace(-1.0, 1.0, n_states);
    let aa = linspace(-1.0, 1.0, n_actions);
    let mut acc = 0.0;
    for &s in &ss {
        let vals = critic.values_over_actions(&[s], &aa)?;
        let greedy = aa[argmax_ties_smallest(&vals)];
        let d = greedy - sol.pi_at(s)?;
        acc += d * d;
    }
    Ok(acc / n_states as f64)
}

/// Discounted return of an explicit policy from each start state, averaged:
/// `mean_{s0} sum_{t < horizon} gamma^t r_t`.
pub fn toy_mc_return_with(
    policy: &mut dyn FnMut(f64) -> f64,
    env: &Toy1dEnv,
    horizon: usize,
    starts: &[f64],
) -> Result<f64> {
    if horizon == 0 || starts.is_empty() {
        return Err(Error::InvalidInput {
            what: "toy_mc_return_with",
            detail: "need horizon >= 1 and at least one start state".to_string(),
        });
    }
    let gamma = env.gamma();
    let mut total = 0.0;
    for &s0 in starts {
        let mut s = s0;
        let mut discount = 1.0;
        let mut ret = 0.0;
        for _ in 0..horizon {
            let a = policy(s);
            let (s_next, r) = env.step(&[s], &[a])?;
            ret += discount * r;
            discount *= gamma;
            s = s_next[0];
        }
        total += ret;
    }
    Ok(total / starts.len() as f64)
}

/// Return of the greedy-in-critic policy, restricted to a uniform action
/// grid. Because the next state equals the chosen action, every visited
/// state after the first step is itself a grid node, so the rollout walks
/// node indices and each node's greedy action is computed at most once.
/// Start states are the `n_starts` uniform points, which must align with
/// grid nodes.
pub fn toy_mc_return_greedy(
    critic: &dyn TargetCritic,
    env: &Toy1dEnv,
    horizon: usize,
    n_starts: usize,
    n_actions: usize,
) -> Result<f64> {
    check_grid_size("toy_mc_return_greedy", n_actions)?;
    check_grid_size("toy_mc_return_greedy", n_starts)?;
    if horizon == 0 {
        return Err(Error::InvalidInput {
            what: "toy_mc_return_greedy",
            detail: "horizon must be at least 1".to_string(),
        });
    }
    if !(n_actions - 1).is_multiple_of(n_starts - 1) {
        return Err(Error::InvalidInput {
            what: "toy_mc_return_greedy",
            detail: format!(
                "start points ({n_starts}) must align with action grid nodes ({n_actions})"
            ),
        });
    }
    let grid = linspace(-1.0, 1.0, n_actions);
    let stride = (n_actions - 1) / (n_starts - 1);
    let gamma = env.gamma();
    // Greedy action index per state index, filled on first visit.
    let mut best: Vec<Option<usize>> = vec![None; n_actions];
    let greedy_at = |i: usize, best: &mut Vec<Option<usize>>| -> Result<usize> {
        if let Some(j) = best[i] {
            return Ok(j);
        }
        let vals = critic.values_over_actions(&[grid[i]], &grid)?;
        let j = argmax_ties_smallest(&vals);
        best[i] = Some(j);
        Ok(j)
    };
    let mut total = 0.0;
    for k in 0..n_starts {
        let mut i = k * stride;
        let mut discount = 1.0;
        let mut ret = 0.0;
        for _ in 0..horizon {
            let j = greedy_at(i, &mut best)?;
            let (_, r) = env.step(&[grid[i]], &[grid[j]])?;
            ret += discount * r;
            discount *= gamma;
            i = j; // next state equals the action taken
        }
        total += ret;
    }
    Ok(total / n_starts as f64)
}

/// Mean of `(Q - Q*)^2` over an `n x n` grid on `[-half, half]^2` for the
/// scalar linear-quadratic task.
pub fn lqr_q_mse(
    critic: &dyn TargetCritic,
    env: &LqrEnv,
    ric: &RiccatiSolution,
    n_side: usize,
    half_width: f64,
) -> Result<f64> {
    check_grid_size("lqr_q_mse", n_side)?;
    check_scalar_lqr(env)?;
    let ss = linspace(-half_width, half_width, n_side);
    let aa = linspace(-half_width, half_width, n_side);
    let mut acc = 0.0;
    for &s in &ss {
        let qs = critic.values_over_actions(&[s], &aa)?;
        for (&a, &q) in aa.iter().zip(&qs) {
            let (qstar, _, _) = lqr_q_star_eval(env, ric, &[s], &[a]);
            let d = q - qstar;
            acc += d * d;
        }
    }
    Ok(acc / (n_side * n_side) as f64)
}

/// Mean of `(dQ/da - dQ*/da)^2` on the same grid.
pub fn lqr_grad_a_mse(
    critic: &dyn TargetCritic,
    env: &LqrEnv,
    ric: &RiccatiSolution,
    n_side: usize,
    half_width: f64,
) -> Result<f64> {
    check_grid_size("lqr_grad_a_mse", n_side)?;
    check_scalar_lqr(env)?;
    let ss = linspace(-half_width, half_width, n_side);
    let aa = linspace(-half_width, half_width, n_side);
    let mut acc = 0.0;
    for &s in &ss {
        for &a in &aa {
            let (_, _, ga) = critic.eval(&[s], &[a])?;
            let (_, _, ga_star) = lqr_q_star_eval(env, ric, &[s], &[a]);
            let d = ga[0] - ga_star[0];
            acc += d * d;
        }
    }
    Ok(acc / (n_side * n_side) as f64)
}

/// Mean of `(mu(s) - a*(s))^2` over uniform states, with `a* = -K* s`.
pub fn lqr_policy_error(
    actor: &LinearActor,
    ric: &RiccatiSolution,
    n_states: usize,
    half_width: f64,
) -> Result<f64> {
    check_grid_size("lqr_policy_error", n_states)?;
    let ss = linspace(-half_width, half_width, n_states);
    let mut acc = 0.0;
    for &s in &ss {
        let a = actor.act(&[s])[0];
        let a_star = -ric.k[(0, 0)] * s;
        let d = a - a_star;
        acc += d * d;
    }
    Ok(acc / n_states as f64)
}

/// Discounted return of the deterministic linear policy from uniform starts.
pub fn lqr_mc_return(
    actor: &LinearActor,
    env: &LqrEnv,
    horizon: usize,
    n_starts: usize,
    half_width: f64,
) -> Result<f64> {
    check_grid_size("lqr_mc_return", n_starts)?;
    check_scalar_lqr(env)?;
    if horizon == 0 {
        return Err(Error::InvalidInput {
            what: "lqr_mc_return",
            detail: "horizon must be at least 1".to_string(),
        });
    }
    let gamma = env.gamma();
    let starts = linspace(-half_width, half_width, n_starts);
    let mut total = 0.0;
    for &s0 in &starts {
        let mut s = s0;
        let mut discount = 1.0;
        let mut ret = 0.0;
        for _ in 0..horizon {
            let a = actor.act(&[s])[0];
            let (s_next, r) = env.step(&[s], &[a])?;
            ret += discount * r;
            discount *= gamma;
            s = s_next[0];
        }
        total += ret;
    }
    Ok(total / n_starts as f64)
}

fn check_scalar_lqr(env: &LqrEnv) -> Result<()> {
    if env.state_dim() != 1 || env.action_dim() != 1 {
        return Err(Error::InvalidInput {
            what: "lqr metrics",
            detail: "grid metrics are defined for scalar state and action".to_string(),
        });
    }
    Ok(())
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Collapse per-seed rows into per-step means and sample standard
/// deviations. Every seed must report exactly the same ordered step
/// sequence.
pub fn aggregate_seeds(rows: &[MetricsRow]) -> Result<Vec<AggregateRow>> {
    if rows.is_empty() {
        return Err(Error::InvalidInput {
            what: "aggregate_seeds",
            detail: "no rows".to_string(),
        });
    }
    let mut seeds: Vec<u64> = Vec::new();
    for r in rows {
        if !seeds.contains(&r.seed) {
            seeds.push(r.seed);
        }
    }
    let per_seed: Vec<Vec<&MetricsRow>> = seeds
        .iter()
        .map(|&sd| rows.iter().filter(|r| r.seed == sd).collect())
        .collect();
    let steps: Vec<usize> = per_seed[0].iter().map(|r| r.step).collect();
    for (sd, group) in seeds.iter().zip(&per_seed) {
        let got: Vec<usize> = group.iter().map(|r| r.step).collect();
        if got != steps {
            return Err(Error::InvalidInput {
                what: "aggregate_seeds",
                detail: format!("seed {sd} reports steps {got:?}, expected {steps:?}"),
            });
        }
    }
    let n = seeds.len();
    let mut out = Vec::with_capacity(steps.len());
    for (i, &step) in steps.iter().enumerate() {
        let col = |f: fn(&MetricsRow) -> f64| -> (f64, f64) {
            let vals: Vec<f64> = per_seed.iter().map(|g| f(g[i])).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            (mean, sample_std(&vals, mean))
        };
        let (q_mse_mean, q_mse_std) = col(|r| r.q_mse);
        let (grad_a_mse_mean, grad_a_mse_std) = col(|r| r.grad_a_mse);
        let (policy_err_mean, policy_err_std) = col(|r| r.policy_err);
        let (mc_return_mean, mc_return_std) = col(|r| r.mc_return);
        out.push(AggregateRow {
            step,
            n_seeds: n,
            q_mse_mean,
            q_mse_std,
            grad_a_mse_mean,
            grad_a_mse_std,
            policy_err_mean,
            policy_err_std,
            mc_return_mean,
            mc_return_std,
        });
    }
    Ok(out)
}
