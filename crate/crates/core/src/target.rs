//! First-order Bellman targets.
//!
//! Alongside the scalar bootstrap target `y = r + gamma * Q'(s', a')`, each
//! transition also yields targets for the critic's input gradients, obtained
//! by differentiating `y` through the dynamics:
//!
//! ```text
//! dy_ds = dr_ds + gamma * (df_ds)^T [ grad_s' Q' + K^T grad_a' Q' ]
//! dy_da = dr_da + gamma * (df_da)^T [ grad_s' Q' + K^T grad_a' Q' ]
//! ```
//!
//! where `K = d a'/d s'`. For a policy target, `a' = mu(s')` and `K` is the
//! policy Jacobian. For a grid-max target, `a'` is the best grid action and
//! the bracket drops the `K` term entirely: at an interior maximiser
//! `grad_a' Q'` vanishes, and on the grid `a'` is locally constant in `s'`,
//! so the action's sensitivity contributes nothing (the envelope argument).
//! The target critic is frozen — nothing here produces parameter gradients,
//! and the types make that impossible to do by accident.

use crate::critic::LinearActor;
use crate::diff::{eval_with_input_grads, CriticModel, FlatParams};
use crate::env::{DiffEnv, EnvJacobians, TransitionRecord};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::oracle::argmax_ties_smallest;

/// Scalar target plus its derivatives with respect to the transition's
/// originating state and action.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderTarget {
    pub y: f64,
    pub dy_ds: Vec<f64>,
    pub dy_da: Vec<f64>,
    /// Next action the bootstrap was evaluated at.
    pub a_prime: Vec<f64>,
    /// For grid-max targets: whether the argmax was strictly inside the grid
    /// and strictly above its neighbours, which is when the envelope-based
    /// gradient is trustworthy. Policy targets are differentiable everywhere,
    /// so the flag is always true for them.
    pub a_prime_interior: bool,
}

/// Read-only view of a critic used for bootstrap targets: values and input
/// gradients only, no parameter derivatives.
pub trait TargetCritic {
    /// `(Q, grad_s Q, grad_a Q)` at one point.
    fn eval(&self, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)>;

    /// `Q(s, a_j)` over a block of actions stored back to back.
    fn values_over_actions(&self, s: &[f64], actions: &[f64]) -> Result<Vec<f64>>;
}

/// A critic model paired with a fixed parameter snapshot — the usual frozen
/// target network.
pub struct FrozenCritic<'a, M: CriticModel + ?Sized> {
    model: &'a M,
    params: &'a FlatParams,
}

impl<'a, M: CriticModel + ?Sized> FrozenCritic<'a, M> {
    pub fn new(model: &'a M, params: &'a FlatParams) -> Self {
        FrozenCritic { model, params }
    }
}

impl<M: CriticModel + ?Sized> TargetCritic for FrozenCritic<'_, M> {
    fn eval(&self, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        eval_with_input_grads(self.model, self.params, s, a)
    }

    fn values_over_actions(&self, s: &[f64], actions: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.model.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "values_over_actions state",
                expected: self.model.state_dim(),
                got: s.len(),
            });
        }
        if !actions.len().is_multiple_of(self.model.action_dim()) {
            return Err(Error::DimensionMismatch {
                what: "values_over_actions block",
                expected: self.model.action_dim(),
                got: actions.len(),
            });
        }
        Ok(self.model.value_action_scan(self.params, s, actions))
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && (0.0..=1.0).contains(&gamma)) {
        return Err(Error::InvalidInput {
            what: "target discount",
            detail: format!("gamma must lie in [0, 1], got {gamma}"),
        });
    }
    Ok(())
}

/// Shared chain rule: combines reward derivatives, dynamics Jacobians, and
/// next-step critic gradients into the first-order target. `mu_jac` carries
/// `d a'/d s'` when the next action follows the state; `None` means the next
/// action is held fixed (the stop-gradient convention of the max form).
fn chain_rule_target(
    r: f64,
    gamma: f64,
    jac: &EnvJacobians,
    q_next: f64,
    g_s_next: &[f64],
    g_a_next: &[f64],
    mu_jac: Option<&Mat>,
) -> (f64, Vec<f64>, Vec<f64>) {
    let mut bracket = g_s_next.to_vec();
    if let Some(k) = mu_jac {
        let extra = k.matvec_t(g_a_next);
        for (b, e) in bracket.iter_mut().zip(&extra) {
            *b += e;
        }
    }
    let through_s = jac.df_ds.matvec_t(&bracket);
    let through_a = jac.df_da.matvec_t(&bracket);
    let dy_ds: Vec<f64> = jac
        .dr_ds
        .iter()
        .zip(&through_s)
        .map(|(dr, th)| dr + gamma * th)
        .collect();
    let dy_da: Vec<f64> = jac
        .dr_da
        .iter()
        .zip(&through_a)
        .map(|(dr, th)| dr + gamma * th)
        .collect();
    (r + gamma * q_next, dy_ds, dy_da)
}

/// Grid-max target for scalar actions: `a'` maximises the frozen critic over
/// `action_grid` at the next state (ties resolved to the smallest action),
/// and the gradient bootstrap uses `grad_s' Q'` alone.
pub fn max_target(
    critic: &dyn TargetCritic,
    rec: &TransitionRecord,
    gamma: f64,
    action_grid: &[f64],
) -> Result<FirstOrderTarget> {
    check_gamma(gamma)?;
    if action_grid.is_empty() {
        return Err(Error::InvalidInput {
            what: "max_target",
            detail: "empty action grid".to_string(),
        });
    }
    if rec.jac.df_da.cols() != 1 {
        return Err(Error::InvalidInput {
            what: "max_target",
            detail: "grid maximisation requires a scalar action".to_string(),
        });
    }
    let vals = critic.values_over_actions(&rec.s_next, action_grid)?;
    if vals.len() != action_grid.len() {
        return Err(Error::DimensionMismatch {
            what: "max_target values",
            expected: action_grid.len(),
            got: vals.len(),
        });
    }
    let j = argmax_ties_smallest(&vals);
    let interior = j > 0
        && j + 1 < vals.len()
        && vals[j] > vals[j - 1]
        && vals[j] > vals[j + 1];
    let a_prime = vec![action_grid[j]];
    let (q_next, g_s_next, g_a_next) = critic.eval(&rec.s_next, &a_prime)?;
    let (y, dy_ds, dy_da) = chain_rule_target(
        rec.r, gamma, &rec.jac, q_next, &g_s_next, &g_a_next, None,
    );
    Ok(FirstOrderTarget {
        y,
        dy_ds,
        dy_da,
        a_prime,
        a_prime_interior: interior,
    })
}

/// Policy target: the next action is `a_next = mu(s')` with Jacobian
/// `mu_jac = d mu/d s'`, whose sensitivity is carried through the bracket.
pub fn actor_target(
    critic: &dyn TargetCritic,
    rec: &TransitionRecord,
    gamma: f64,
    a_next: &[f64],
    mu_jac: &Mat,
) -> Result<FirstOrderTarget> {
    check_gamma(gamma)?;
    if mu_jac.rows() != a_next.len() || mu_jac.cols() != rec.s_next.len() {
        return Err(Error::DimensionMismatch {
            what: "actor_target policy jacobian",
            expected: a_next.len() * rec.s_next.len(),
            got: mu_jac.rows() * mu_jac.cols(),
        });
    }
    let (q_next, g_s_next, g_a_next) = critic.eval(&rec.s_next, a_next)?;
    let (y, dy_ds, dy_da) = chain_rule_target(
        rec.r,
        gamma,
        &rec.jac,
        q_next,
        &g_s_next,
        &g_a_next,
        Some(mu_jac),
    );
    Ok(FirstOrderTarget {
        y,
        dy_ds,
        dy_da,
        a_prime: a_next.to_vec(),
        a_prime_interior: true,
    })
}

/// How the next action is chosen when building targets.
pub enum TargetRule<'a> {
    /// Maximise the frozen critic over this scalar-action grid.
    GridMax { action_grid: &'a [f64] },
    /// Follow a deterministic linear policy.
    Policy { actor: &'a LinearActor },
}

impl TargetRule<'_> {
    pub fn build(
        &self,
        critic: &dyn TargetCritic,
        rec: &TransitionRecord,
        gamma: f64,
    ) -> Result<FirstOrderTarget> {
        match self {
            TargetRule::GridMax { action_grid } => max_target(critic, rec, gamma, action_grid),
            TargetRule::Policy { actor } => {
                let a_next = actor.act(&rec.s_next);
                actor_target(critic, rec, gamma, &a_next, actor.jacobian())
            }
        }
    }
}

/// Outcome of probing target gradients against finite differences of the
/// scalar target map itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub checked: usize,
    pub skipped: usize,
    /// Worst `|analytic - fd| / max(1, |fd|)` over all checked coordinates.
    pub max_rel_err: f64,
}

/// Rebuild the full target (argmax included) at probe points around each
/// given `(s, a)` and compare centred finite differences of `y` against the
/// analytic `dy_ds` / `dy_da`. Points are skipped when a probe leaves the
/// env's domain, or — for grid-max targets — when the argmax is not a strict
/// interior maximiser or flips between probes, since the envelope gradient
/// is only claimed there.
pub fn target_gradient_consistency_check(
    critic: &dyn TargetCritic,
    env: &dyn DiffEnv,
    rule: &TargetRule<'_>,
    points: &[(Vec<f64>, Vec<f64>)],
    h: f64,
) -> Result<ConsistencyReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput {
            what: "target_gradient_consistency_check",
            detail: format!("probe step must be positive, got {h}"),
        });
    }
    let gamma = env.gamma();
    let mut checked = 0;
    let mut skipped = 0;
    let mut max_rel_err: f64 = 0.0;
    'points: for (s, a) in points {
        let center = match env.transition(s, a) {
            Ok(rec) => rec,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let target = match rule.build(critic, &center, gamma) {
            Ok(t) => t,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        if matches!(rule, TargetRule::GridMax { .. }) && !target.a_prime_interior {
            skipped += 1;
            continue;
        }
        // y at a probe point, requiring the same argmax for grid targets.
        let y_at = |sp: &[f64], ap: &[f64]| -> Option<f64> {
            let rec = env.transition(sp, ap).ok()?;
            let t = rule.build(critic, &rec, gamma).ok()?;
            if matches!(rule, TargetRule::GridMax { .. }) && t.a_prime != target.a_prime {
                return None;
            }
            Some(t.y)
        };
        let mut diffs: Vec<(f64, f64)> = Vec::new(); // (analytic, fd)
        let mut probe_s = s.clone();
        for i in 0..s.len() {
            probe_s[i] = s[i] + h;
            let yp = y_at(&probe_s, a);
            probe_s[i] = s[i] - h;
            let ym = y_at(&probe_s, a);
            probe_s[i] = s[i];
            match (yp, ym) {
                (Some(p), Some(m)) => diffs.push((target.dy_ds[i], (p - m) / (2.0 * h))),
                _ => {
                    skipped += 1;
                    continue 'points;
                }
            }
        }
        let mut probe_a = a.clone();
        for i in 0..a.len() {
            probe_a[i] = a[i] + h;
            let yp = y_at(s, &probe_a);
            probe_a[i] = a[i] - h;
            let ym = y_at(s, &probe_a);
            probe_a[i] = a[i];
            match (yp, ym) {
                (Some(p), Some(m)) => diffs.push((target.dy_da[i], (p - m) / (2.0 * h))),
                _ => {
                    skipped += 1;
                    continue 'points;
                }
            }
        }
        for (analytic, fd) in diffs {
            let rel = (analytic - fd).abs() / fd.abs().max(1.0);
            max_rel_err = max_rel_err.max(rel);
        }
        checked += 1;
    }
    Ok(ConsistencyReport {
        checked,
        skipped,
        max_rel_err,
    })
}
