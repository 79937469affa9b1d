//! Instrumented critics for verification.
//!
//! These wrap exact solutions or other critics behind the [`TargetCritic`]
//! interface, so evaluation and target-construction code can be driven with
//! inputs whose correct outputs are known in closed form.

use crate::env::{DiffEnv, Toy1dEnv};
use crate::error::{Error, Result};
use crate::oracle::{grad_a_q_star, q_star_eval, GridSolution};
use crate::target::TargetCritic;

/// The exact optimal action-value of the 1-d task, tabulated on the oracle
/// grid: `Q*(s, a) = r(s, a) + gamma V*(a)` with `V*` interpolated linearly.
/// As a critic it should score (near) zero on every error metric, and as a
/// bootstrap source it reproduces its own values as targets up to
/// interpolation error — the fixed-point property.
pub struct GridCritic {
    sol: GridSolution,
}

impl GridCritic {
    pub fn new(sol: GridSolution) -> Self {
        GridCritic { sol }
    }

    pub fn solution(&self) -> &GridSolution {
        &self.sol
    }
}

impl TargetCritic for GridCritic {
    fn eval(&self, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        if s.len() != 1 || a.len() != 1 {
            return Err(Error::DimensionMismatch {
                what: "GridCritic input",
                expected: 1,
                got: s.len().max(a.len()),
            });
        }
        let q = q_star_eval(&self.sol, s[0], a[0])?;
        // d/ds hits only the reward term; the bootstrapped value depends on
        // the action alone because the next state equals the action.
        let gs = 2.0 * (a[0] - s[0]);
        let ga = grad_a_q_star(&self.sol, s[0], a[0])?;
        Ok((q, vec![gs], vec![ga]))
    }

    fn values_over_actions(&self, s: &[f64], actions: &[f64]) -> Result<Vec<f64>> {
        actions
            .iter()
            .map(|&a| q_star_eval(&self.sol, s[0], a))
            .collect()
    }
}

/// A critic plus a constant: values shift, gradients do not.
pub struct ShiftedCritic<'a> {
    inner: &'a dyn TargetCritic,
    offset: f64,
}

impl<'a> ShiftedCritic<'a> {
    pub fn new(inner: &'a dyn TargetCritic, offset: f64) -> Self {
        ShiftedCritic { inner, offset }
    }
}

impl TargetCritic for ShiftedCritic<'_> {
    fn eval(&self, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (q, gs, ga) = self.inner.eval(s, a)?;
        Ok((q + self.offset, gs, ga))
    }

    fn values_over_actions(&self, s: &[f64], actions: &[f64]) -> Result<Vec<f64>> {
        let mut vals = self.inner.values_over_actions(s, actions)?;
        for v in &mut vals {
            *v += self.offset;
        }
        Ok(vals)
    }
}

/// A critic plus an arbitrary function of the state alone (scalar state).
/// The closure returns `(g(s), g'(s))`; action gradients are untouched, which
/// is exactly what action-gradient metrics must be blind to.
pub struct StateShiftedCritic<'a> {
    inner: &'a dyn TargetCritic,
    g: fn(f64) -> (f64, f64),
}

impl<'a> StateShiftedCritic<'a> {
    pub fn new(inner: &'a dyn TargetCritic, g: fn(f64) -> (f64, f64)) -> Self {
        StateShiftedCritic { inner, g }
    }
}

impl TargetCritic for StateShiftedCritic<'_> {
    fn eval(&self, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (q, mut gs, ga) = self.inner.eval(s, a)?;
        let (gv, gd) = (self.g)(s[0]);
        gs[0] += gd;
        Ok((q + gv, gs, ga))
    }

    fn values_over_actions(&self, s: &[f64], actions: &[f64]) -> Result<Vec<f64>> {
        let mut vals = self.inner.values_over_actions(s, actions)?;
        let (gv, _) = (self.g)(s[0]);
        for v in &mut vals {
            *v += gv;
        }
        Ok(vals)
    }
}

/// A critic following an explicit closed form `(Q, dQ/ds, dQ/da)` — handy for
/// constructing cases like `Q(s, a) = -(a - pi*(s))^2`.
pub struct ClosureCritic<F>
where
    F: Fn(f64, f64) -> (f64, f64, f64),
{
    f: F,
}

impl<F> ClosureCritic<F>
where
    F: Fn(f64, f64) -> (f64, f64, f64),
{
    pub fn new(f: F) -> Self {
        ClosureCritic { f }
    }
}

impl<F> TargetCritic for ClosureCritic<F>
where
    F: Fn(f64, f64) -> (f64, f64, f64),
{
    fn eval(&self, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (q, gs, ga) = (self.f)(s[0], a[0]);
        Ok((q, vec![gs], vec![ga]))
    }

    fn values_over_actions(&self, s: &[f64], actions: &[f64]) -> Result<Vec<f64>> {
        Ok(actions.iter().map(|&a| (self.f)(s[0], a).0).collect())
    }
}

/// Reference environment paired with the tabulated critic, for tests that
/// need both in agreement.
pub fn toy_env_and_oracle_critic(n_grid: usize) -> Result<(Toy1dEnv, GridCritic)> {
    let env = Toy1dEnv::standard();
    let sol = crate::oracle::value_iteration_toy(n_grid, env.gamma(), 1e-12, 200_000)?;
    Ok((env, GridCritic::new(sol)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_critic_matches_oracle_evaluation() {
        let (_env, critic) = toy_env_and_oracle_critic(401).unwrap();
        let (q, gs, ga) = critic.eval(&[0.3], &[0.5]).unwrap();
        let want_q = q_star_eval(critic.solution(), 0.3, 0.5).unwrap();
        assert_eq!(q, want_q);
        assert_eq!(gs[0], 2.0 * (0.5 - 0.3));
        let want_ga = grad_a_q_star(critic.solution(), 0.3, 0.5).unwrap();
        assert_eq!(ga[0], want_ga);
        assert!(critic.eval(&[1.5], &[0.0]).is_err());
    }

    #[test]
    fn shifted_critic_moves_values_not_gradients() {
        let (_env, critic) = toy_env_and_oracle_critic(101).unwrap();
        let shifted = ShiftedCritic::new(&critic, 3.25);
        let (q0, gs0, ga0) = critic.eval(&[0.1], &[-0.4]).unwrap();
        let (q1, gs1, ga1) = shifted.eval(&[0.1], &[-0.4]).unwrap();
        assert_eq!(q1, q0 + 3.25);
        assert_eq!(gs0, gs1);
        assert_eq!(ga0, ga1);
        let vals0 = critic.values_over_actions(&[0.1], &[-0.5, 0.5]).unwrap();
        let vals1 = shifted.values_over_actions(&[0.1], &[-0.5, 0.5]).unwrap();
        assert_eq!(vals1[0], vals0[0] + 3.25);
        assert_eq!(vals1[1], vals0[1] + 3.25);
    }

    #[test]
    fn state_shifted_critic_changes_only_state_gradient() {
        let (_env, critic) = toy_env_and_oracle_critic(101).unwrap();
        let wrapped = StateShiftedCritic::new(&critic, |s| (s * s * s, 3.0 * s * s));
        let (q0, gs0, ga0) = critic.eval(&[0.5], &[0.2]).unwrap();
        let (q1, gs1, ga1) = wrapped.eval(&[0.5], &[0.2]).unwrap();
        assert_eq!(q1, q0 + 0.125);
        assert_eq!(gs1[0], gs0[0] + 0.75);
        assert_eq!(ga0, ga1);
    }

    #[test]
    fn closure_critic_reports_its_closed_form() {
        let critic = ClosureCritic::new(|s, a| (s * a, a, s));
        let (q, gs, ga) = critic.eval(&[2.0], &[3.0]).unwrap();
        assert_eq!((q, gs[0], ga[0]), (6.0, 3.0, 2.0));
        assert_eq!(
            critic.values_over_actions(&[2.0], &[1.0, 2.0]).unwrap(),
            vec![2.0, 4.0]
        );
    }
}
