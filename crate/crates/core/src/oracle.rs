//! Ground-truth solvers the learned critics are measured against.
//!
//! Two independent oracles:
//!
//! - [`value_iteration_toy`]: dense-grid value iteration for the bounded 1-D
//!   task. The action grid equals the state grid, so the transition `s' = a`
//!   lands exactly on grid nodes and the backup needs no interpolation.
//! - [`riccati_solve`]: fixed-point iteration on the discounted discrete
//!   algebraic Riccati equation for [`LqrEnv`], yielding the exact quadratic
//!   `Q*` and the optimal linear gain.
//!
//! Both report a residual and fail loudly instead of returning a stale or
//! diverging iterate.

use crate::env::{DiffEnv, LqrEnv, Toy1dEnv};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::textfmt::{
    expect_end, expect_version, float_row, float_row_labeled, labeled_f64, labeled_usize,
};

const ORACLE_TEXT: &str = "oracle text format";

/// Converged value-iteration output on a uniform state grid over `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    /// Grid nodes, ascending, endpoints exactly `-1` and `1`.
    pub s_grid: Vec<f64>,
    /// Optimal value at each node.
    pub v_star: Vec<f64>,
    /// Optimal action at each node (ties resolved toward the smaller action).
    pub pi_star: Vec<f64>,
    pub gamma: f64,
    /// Sup-norm change of the final sweep; the Bellman residual of `v_star`
    /// is at most `gamma` times this.
    pub residual: f64,
}

/// Converged Riccati iteration output: `V*(s) = -s^T P s`, optimal action
/// `a*(s) = -K s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p: Mat,
    pub k: Mat,
    pub iterations: usize,
    /// Largest absolute entry change of the final iteration.
    pub residual: f64,
}

/// First line of the flat text form of a [`GridSolution`]; bumped on any
/// format change so stale golden files fail loudly instead of misparsing.
pub const GRID_SOLUTION_FORMAT: &str = "grid-solution v1";
/// First line of the flat text form of a [`RiccatiSolution`].
pub const RICCATI_SOLUTION_FORMAT: &str = "riccati-solution v1";

impl GridSolution {
    /// Flat text form: the version line, `gamma`/`residual`/`nodes` header
    /// lines, then one `s v pi` row per grid node. Floats use the shortest
    /// decimal form that parses back to the identical bits, so serialized
    /// solutions diff cleanly and round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(GRID_SOLUTION_FORMAT);
        out.push('\n');
        out.push_str(&format!("gamma {}\n", self.gamma));
        out.push_str(&format!("residual {}\n", self.residual));
        out.push_str(&format!("nodes {}\n", self.s_grid.len()));
        for ((s, v), pi) in self.s_grid.iter().zip(&self.v_star).zip(&self.pi_star) {
            out.push_str(&format!("{s} {v} {pi}\n"));
        }
        out
    }

    /// Parse the format written by [`GridSolution::to_text`]. Strict: the
    /// version line, every header, the row count, and trailing content are
    /// all checked, and errors carry the offending line number.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        expect_version(ORACLE_TEXT, &mut lines, GRID_SOLUTION_FORMAT)?;
        let gamma = labeled_f64(ORACLE_TEXT, &mut lines, "gamma")?;
        let residual = labeled_f64(ORACLE_TEXT, &mut lines, "residual")?;
        let nodes = labeled_usize(ORACLE_TEXT, &mut lines, "nodes")?;
        let mut s_grid = Vec::with_capacity(nodes);
        let mut v_star = Vec::with_capacity(nodes);
        let mut pi_star = Vec::with_capacity(nodes);
        for _ in 0..nodes {
            let row = float_row(ORACLE_TEXT, &mut lines, 3)?;
            s_grid.push(row[0]);
            v_star.push(row[1]);
            pi_star.push(row[2]);
        }
        expect_end(ORACLE_TEXT, &mut lines)?;
        Ok(GridSolution {
            s_grid,
            v_star,
            pi_star,
            gamma,
            residual,
        })
    }
}

impl RiccatiSolution {
    /// Flat text form: the version line, `dims`/`iterations`/`residual`
    /// header lines, then the rows of `P` and of `K`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(RICCATI_SOLUTION_FORMAT);
        out.push('\n');
        out.push_str(&format!("dims {} {}\n", self.p.rows(), self.k.rows()));
        out.push_str(&format!("iterations {}\n", self.iterations));
        out.push_str(&format!("residual {}\n", self.residual));
        for mat in [&self.p, &self.k] {
            for i in 0..mat.rows() {
                let row: Vec<String> = (0..mat.cols()).map(|j| mat[(i, j)].to_string()).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }

    /// Parse the format written by [`RiccatiSolution::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        expect_version(ORACLE_TEXT, &mut lines, RICCATI_SOLUTION_FORMAT)?;
        let dims = float_row_labeled(ORACLE_TEXT, &mut lines, "dims", 2)?;
        let (n, m) = (dims[0] as usize, dims[1] as usize);
        if dims[0].fract() != 0.0 || dims[1].fract() != 0.0 || n == 0 || m == 0 {
            return Err(Error::InvalidInput {
                what: "RiccatiSolution::from_text",
                detail: format!("dims must be positive integers, got {} {}", dims[0], dims[1]),
            });
        }
        let iterations = labeled_usize(ORACLE_TEXT, &mut lines, "iterations")?;
        let residual = labeled_f64(ORACLE_TEXT, &mut lines, "residual")?;
        let mut p = Mat::zeros(n, n);
        for i in 0..n {
            let row = float_row(ORACLE_TEXT, &mut lines, n)?;
            for (j, x) in row.into_iter().enumerate() {
                p[(i, j)] = x;
            }
        }
        let mut k = Mat::zeros(m, n);
        for i in 0..m {
            let row = float_row(ORACLE_TEXT, &mut lines, n)?;
            for (j, x) in row.into_iter().enumerate() {
                k[(i, j)] = x;
            }
        }
        expect_end(ORACLE_TEXT, &mut lines)?;
        Ok(RiccatiSolution {
            p,
            k,
            iterations,
            residual,
        })
    }
}

/// Index of the maximum value; ties resolve to the smallest index.
pub(crate) fn argmax_ties_smallest(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = j;
        }
    }
    best
}

/// Uniform grid with exact endpoints (`lo + (hi - lo) * i/(n-1)`).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two nodes");
    (0..n)
        .map(|i| lo + (hi - lo) * (i as f64 / (n - 1) as f64))
        .collect()
}

/// Value iteration for the bounded 1-D task.
///
/// Sweeps `V(s_i) <- max_j [ r(s_i, a_j) + gamma V(a_j) ]` over the shared
/// state/action grid until the sup-norm change drops to `tol`. Exceeding
/// `max_iter` is an error carrying the last residual.
pub fn value_iteration_toy(
    n_grid: usize,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<GridSolution> {
    if n_grid < 2 {
        return Err(Error::InvalidInput {
            what: "value_iteration_toy",
            detail: format!("grid needs at least 2 nodes, got {n_grid}"),
        });
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidInput {
            what: "value_iteration_toy",
            detail: format!("gamma must lie in [0, 1), got {gamma}"),
        });
    }
    if tol <= 0.0 {
        return Err(Error::InvalidInput {
            what: "value_iteration_toy",
            detail: format!("tolerance must be positive, got {tol}"),
        });
    }
    let grid = linspace(-1.0, 1.0, n_grid);
    let mut v = vec![0.0f64; n_grid];
    let mut v_next = vec![0.0f64; n_grid];
    // w_j = 0.2 a_j + gamma V(a_j); the backup target is w_j - (a_j - s_i)^2.
    let mut w = vec![0.0f64; n_grid];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        for (wj, (aj, vj)) in w.iter_mut().zip(grid.iter().zip(&v)) {
            *wj = 0.2 * aj + gamma * vj;
        }
        residual = 0.0;
        for (i, si) in grid.iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            for (aj, wj) in grid.iter().zip(&w) {
                let d = aj - si;
                let val = wj - d * d;
                if val > best {
                    best = val;
                }
            }
            residual = residual.max((best - v[i]).abs());
            v_next[i] = best;
        }
        std::mem::swap(&mut v, &mut v_next);
        if residual <= tol {
            // Extraction sweep: record the argmax actions for the final V.
            let mut pi = vec![0.0f64; n_grid];
            for (wj, (aj, vj)) in w.iter_mut().zip(grid.iter().zip(&v)) {
                *wj = 0.2 * aj + gamma * vj;
            }
            let mut scores = vec![0.0f64; n_grid];
            for (i, si) in grid.iter().enumerate() {
                for (score, (aj, wj)) in scores.iter_mut().zip(grid.iter().zip(&w)) {
                    let d = aj - si;
                    *score = wj - d * d;
                }
                pi[i] = grid[argmax_ties_smallest(&scores)];
            }
            return Ok(GridSolution {
                s_grid: grid,
                v_star: v,
                pi_star: pi,
                gamma,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "value_iteration_toy",
        iterations: max_iter,
        residual,
    })
}

impl GridSolution {
    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let n = self.s_grid.len();
        let (lo, hi) = (self.s_grid[0], self.s_grid[n - 1]);
        if !(lo..=hi).contains(&x) || x.is_nan() {
            return Err(Error::InvalidInput {
                what: "GridSolution",
                detail: format!("query {x} outside [{lo}, {hi}]"),
            });
        }
        let span = hi - lo;
        let idx = (((x - lo) / span * (n - 1) as f64) as usize).min(n - 2);
        let width = self.s_grid[idx + 1] - self.s_grid[idx];
        let t = ((x - self.s_grid[idx]) / width).clamp(0.0, 1.0);
        Ok((idx, t))
    }

    /// `V*(x)` by linear interpolation between grid nodes.
    pub fn v_at(&self, x: f64) -> Result<f64> {
        let (idx, t) = self.locate(x)?;
        Ok(self.v_star[idx] * (1.0 - t) + self.v_star[idx + 1] * t)
    }

    /// Optimal action at `x` by linear interpolation of the tabulated policy.
    /// Exact at grid nodes; between nodes this smooths any policy jump.
    pub fn pi_at(&self, x: f64) -> Result<f64> {
        let (idx, t) = self.locate(x)?;
        Ok(self.pi_star[idx] * (1.0 - t) + self.pi_star[idx + 1] * t)
    }

    /// `dV*/ds` at `x`: centered differences at interior nodes (one-sided at
    /// the endpoints), linearly interpolated between nodes.
    pub fn v_slope_at(&self, x: f64) -> Result<f64> {
        let (idx, t) = self.locate(x)?;
        Ok(self.node_slope(idx) * (1.0 - t) + self.node_slope(idx + 1) * t)
    }

    fn node_slope(&self, i: usize) -> f64 {
        let n = self.s_grid.len();
        if i == 0 {
            (self.v_star[1] - self.v_star[0]) / (self.s_grid[1] - self.s_grid[0])
        } else if i == n - 1 {
            (self.v_star[n - 1] - self.v_star[n - 2]) / (self.s_grid[n - 1] - self.s_grid[n - 2])
        } else {
            (self.v_star[i + 1] - self.v_star[i - 1]) / (self.s_grid[i + 1] - self.s_grid[i - 1])
        }
    }
}

/// `Q*(s, a) = r(s, a) + gamma V*(a)` for the 1-D task (`s' = a`).
pub fn q_star_eval(sol: &GridSolution, s: f64, a: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&s) || s.is_nan() {
        return Err(Error::InvalidInput {
            what: "q_star_eval",
            detail: format!("state {s} outside [-1, 1]"),
        });
    }
    Ok(Toy1dEnv::reward(s, a) + sol.gamma * sol.v_at(a)?)
}

/// `d/da Q*(s, a) = dr/da + gamma dV*/da` for the 1-D task, with `dV*/da`
/// from centered differences on the oracle grid.
pub fn grad_a_q_star(sol: &GridSolution, s: f64, a: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&s) || s.is_nan() {
        return Err(Error::InvalidInput {
            what: "grad_a_q_star",
            detail: format!("state {s} outside [-1, 1]"),
        });
    }
    let dr_da = 0.2 - 2.0 * (a - s);
    Ok(dr_da + sol.gamma * sol.v_slope_at(a)?)
}

/// Solve `M X = N` column by column.
fn solve_multi(m: &Mat, n: &Mat) -> Result<Mat> {
    let mut out = Mat::zeros(n.rows(), n.cols());
    let mut col = vec![0.0f64; n.rows()];
    for j in 0..n.cols() {
        for i in 0..n.rows() {
            col[i] = n[(i, j)];
        }
        let x = m.solve(&col)?;
        for i in 0..n.rows() {
            out[(i, j)] = x[i];
        }
    }
    Ok(out)
}

/// Fixed-point iteration on the discounted discrete algebraic Riccati
/// equation:
///
/// ```text
/// P <- Q + gamma A^T P A
///        - gamma^2 A^T P B (R + gamma B^T P B)^{-1} B^T P A
/// K  = gamma (R + gamma B^T P B)^{-1} B^T P A
/// ```
///
/// Starts from `P = Q`. Stops when the largest entry change drops to `tol`;
/// errors if the change grows for ten consecutive iterations (divergence) or
/// `max_iter` is exhausted.
pub fn riccati_solve(env: &LqrEnv, tol: f64, max_iter: usize) -> Result<RiccatiSolution> {
    if tol <= 0.0 {
        return Err(Error::InvalidInput {
            what: "riccati_solve",
            detail: format!("tolerance must be positive, got {tol}"),
        });
    }
    let (a, b, q, r, gamma) = (
        env.a_mat(),
        env.b_mat(),
        env.q_cost(),
        env.r_cost(),
        env.gamma(),
    );
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = q.clone();
    let mut last_residual = f64::INFINITY;
    let mut growth_streak = 0usize;
    for iter in 1..=max_iter {
        let pa = p.matmul(a);
        let pb = p.matmul(b);
        let btpa = bt.matmul(&pa);
        let btpb = bt.matmul(&pb);
        let gain_denom = r.add(&btpb.scale(gamma));
        let x = solve_multi(&gain_denom, &btpa)?;
        let p_next = q
            .add(&at.matmul(&pa).scale(gamma))
            .sub(&btpa.transpose().matmul(&x).scale(gamma * gamma));
        // Symmetrize to keep rounding from accumulating asymmetry.
        let p_next = p_next.add(&p_next.transpose()).scale(0.5);
        let residual = p_next.sub(&p).max_abs();
        p = p_next;
        if residual <= tol {
            let pa = p.matmul(a);
            let pb = p.matmul(b);
            let btpa = bt.matmul(&pa);
            let btpb = bt.matmul(&pb);
            let gain_denom = r.add(&btpb.scale(gamma));
            let k = solve_multi(&gain_denom, &btpa)?.scale(gamma);
            return Ok(RiccatiSolution {
                p,
                k,
                iterations: iter,
                residual,
            });
        }
        if residual > last_residual {
            growth_streak += 1;
            if growth_streak >= 10 {
                return Err(Error::Diverged {
                    what: "riccati_solve",
                    iterations: iter,
                    residual,
                });
            }
        } else {
            growth_streak = 0;
        }
        last_residual = residual;
    }
    Err(Error::NoConvergence {
        what: "riccati_solve",
        iterations: max_iter,
        residual: last_residual,
    })
}

/// `V*(s) = -s^T P s`.
pub fn lqr_v_star(sol: &RiccatiSolution, s: &[f64]) -> f64 {
    let ps = sol.p.matvec(s);
    -crate::linalg::dot(s, &ps)
}

/// Exact `Q*` and its input gradients for an LQR instance:
///
/// ```text
/// Q*(s, a) = -(s^T Q s + a^T R a) - gamma (A s + B a)^T P (A s + B a)
/// ```
///
/// Returns `(q, dq_ds, dq_da)`.
pub fn lqr_q_star_eval(
    env: &LqrEnv,
    sol: &RiccatiSolution,
    s: &[f64],
    a: &[f64],
) -> (f64, Vec<f64>, Vec<f64>) {
    let gamma = env.gamma();
    let mut z = env.a_mat().matvec(s);
    let ba = env.b_mat().matvec(a);
    for (zi, bi) in z.iter_mut().zip(&ba) {
        *zi += bi;
    }
    let pz = sol.p.matvec(&z);
    let qs = env.q_cost().matvec(s);
    let ra = env.r_cost().matvec(a);
    let q = -(crate::linalg::dot(s, &qs) + crate::linalg::dot(a, &ra))
        - gamma * crate::linalg::dot(&z, &pz);
    let atpz = env.a_mat().matvec_t(&pz);
    let btpz = env.b_mat().matvec_t(&pz);
    let gs: Vec<f64> = qs
        .iter()
        .zip(&atpz)
        .map(|(qsi, ai)| -2.0 * qsi - 2.0 * gamma * ai)
        .collect();
    let ga: Vec<f64> = ra
        .iter()
        .zip(&btpz)
        .map(|(rai, bi)| -2.0 * rai - 2.0 * gamma * bi)
        .collect();
    (q, gs, ga)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::DiffEnv;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn argmax_resolves_ties_to_smallest_index() {
        assert_eq!(argmax_ties_smallest(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_ties_smallest(&[5.0, 5.0]), 0);
        assert_eq!(argmax_ties_smallest(&[-1.0]), 0);
    }

    #[test]
    fn linspace_hits_endpoints_exactly() {
        let g = linspace(-1.0, 1.0, 1001);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[1000], 1.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn gamma_zero_reduces_to_pointwise_reward_max() {
        let sol = value_iteration_toy(1001, 0.0, 1e-12, 100).unwrap();
        // Unconstrained argmax of r(s, .) is a = s + 0.1, clipped to [-1, 1].
        // At s = 1 that clips to a = 1, giving V* = r(1, 1) = 0.2.
        assert_close(*sol.v_star.last().unwrap(), 0.2, 1e-12);
        assert_close(*sol.pi_star.last().unwrap(), 1.0, 0.0);
        // s = 0: the grid contains (a node within rounding of) a = 0.1, so
        // V*(0) = r(0, 0.1) = 0.02 - 0.01 = 0.01.
        let mid = sol.s_grid.len() / 2;
        assert_close(sol.s_grid[mid], 0.0, 1e-15);
        assert_close(sol.v_star[mid], 0.01, 1e-12);
        assert_close(sol.pi_star[mid], 0.1, 1e-9);
        // Across the grid the policy tracks clip(s + 0.1) to within a node.
        let spacing = 2.0 / 1000.0;
        for (s, pi) in sol.s_grid.iter().zip(&sol.pi_star) {
            let want = (s + 0.1).clamp(-1.0, 1.0);
            assert!((pi - want).abs() <= spacing + 1e-12);
        }
    }

    #[test]
    fn value_iteration_converges_and_satisfies_bellman_equation() {
        let sol = value_iteration_toy(1001, 0.9, 1e-12, 2000).unwrap();
        assert!(sol.residual <= 1e-12);
        // Recompute the backup independently from the environment's reward
        // (different summation order than the solver kernel).
        for i in (0..1001).step_by(97) {
            let s = sol.s_grid[i];
            let mut best = f64::NEG_INFINITY;
            for (a, v) in sol.s_grid.iter().zip(&sol.v_star) {
                best = best.max(Toy1dEnv::reward(s, *a) + 0.9 * v);
            }
            assert!((best - sol.v_star[i]).abs() <= 2.0 * sol.residual + 1e-13);
        }
    }

    #[test]
    fn value_function_is_monotone_in_state() {
        let sol = value_iteration_toy(1001, 0.9, 1e-12, 2000).unwrap();
        for w in sol.v_star.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "V* must be non-decreasing");
        }
    }

    #[test]
    fn grid_refinement_changes_values_below_tolerance() {
        let coarse = value_iteration_toy(1001, 0.9, 1e-12, 2000).unwrap();
        let fine = value_iteration_toy(2001, 0.9, 1e-12, 2000).unwrap();
        // Nodes of the 1001 grid all appear (index-doubled) in the 2001 grid.
        let mut worst = 0.0f64;
        for (i, v) in coarse.v_star.iter().enumerate() {
            worst = worst.max((v - fine.v_star[2 * i]).abs());
        }
        assert!(worst <= 1e-3, "refinement shift {worst:e} exceeds 1e-3");
    }

    #[test]
    fn q_star_max_over_actions_recovers_v_star() {
        let sol = value_iteration_toy(1001, 0.9, 1e-12, 2000).unwrap();
        for &s in &[-1.0, -0.4, 0.0, 0.5, 1.0] {
            let mut best = f64::NEG_INFINITY;
            for &a in &sol.s_grid {
                best = best.max(q_star_eval(&sol, s, a).unwrap());
            }
            let v = sol.v_at(s).unwrap();
            assert!((best - v).abs() <= 2.0 * sol.residual + 1e-12);
        }
    }

    #[test]
    fn q_star_eval_rejects_out_of_range_queries() {
        let sol = value_iteration_toy(101, 0.9, 1e-12, 2000).unwrap();
        assert!(q_star_eval(&sol, 1.5, 0.0).is_err());
        assert!(q_star_eval(&sol, 0.0, -1.01).is_err());
    }

    #[test]
    fn value_iteration_reports_non_convergence() {
        let err = value_iteration_toy(101, 0.9, 1e-12, 3).unwrap_err();
        match err {
            Error::NoConvergence {
                iterations,
                residual,
                ..
            } => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    /// Scalar DARE with `A = B = Q = R = 1`, `gamma = 1` has the golden ratio
    /// as its stabilizing solution: `P^2 = P + 1`.
    #[test]
    fn riccati_scalar_golden_ratio_anchor() {
        let env = LqrEnv::new(
            Mat::from_vec(1, 1, vec![1.0]),
            Mat::from_vec(1, 1, vec![1.0]),
            Mat::from_vec(1, 1, vec![1.0]),
            Mat::from_vec(1, 1, vec![1.0]),
            1.0,
        )
        .unwrap();
        let sol = riccati_solve(&env, 1e-14, 10_000).unwrap();
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        assert_close(sol.p[(0, 0)], phi, 1e-10);
        // K = P / (1 + P) = 1/phi = phi - 1.
        assert_close(sol.k[(0, 0)], phi - 1.0, 1e-10);
    }

    #[test]
    fn riccati_uncontrolled_and_zero_cost_anchors() {
        // B = 0, A = 0.5, gamma = 1, Q = R = 1: P = 1 / (1 - 0.25) = 4/3.
        let env = LqrEnv::new(
            Mat::from_vec(1, 1, vec![0.5]),
            Mat::from_vec(1, 1, vec![0.0]),
            Mat::from_vec(1, 1, vec![1.0]),
            Mat::from_vec(1, 1, vec![1.0]),
            1.0,
        )
        .unwrap();
        let sol = riccati_solve(&env, 1e-14, 10_000).unwrap();
        assert_close(sol.p[(0, 0)], 4.0 / 3.0, 1e-12);
        assert_close(sol.k[(0, 0)], 0.0, 1e-12);

        // Q = 0 keeps the zero solution: P = 0, K = 0.
        let env = LqrEnv::new(
            Mat::from_vec(1, 1, vec![1.0]),
            Mat::from_vec(1, 1, vec![1.0]),
            Mat::from_vec(1, 1, vec![0.0]),
            Mat::from_vec(1, 1, vec![1.0]),
            0.9,
        )
        .unwrap();
        let sol = riccati_solve(&env, 1e-14, 10).unwrap();
        assert_close(sol.p[(0, 0)], 0.0, 0.0);
        assert_close(sol.k[(0, 0)], 0.0, 0.0);
    }

    /// The standard scalar instance reduces to a quadratic equation solved in
    /// closed form here, independently of the iterative solver.
    #[test]
    fn riccati_standard_scalar_matches_closed_form_root() {
        let env = LqrEnv::standard_scalar();
        let sol = riccati_solve(&env, 1e-14, 10_000).unwrap();
        // With A = B = Q = R = 1 the fixed point P = 1 + gP - g^2 P^2/(1 + gP)
        // multiplies out to P (1 + gP) = 1 + 2gP, i.e.
        //   g P^2 - (2g - 1) P - 1 = 0,
        // whose positive root is the stabilizing solution.
        let g = 0.9f64;
        let p_closed = ((2.0 * g - 1.0) + ((2.0 * g - 1.0).powi(2) + 4.0 * g).sqrt()) / (2.0 * g);
        assert_close(sol.p[(0, 0)], p_closed, 1e-12);
        let k_closed = g * p_closed / (1.0 + g * p_closed);
        assert_close(sol.k[(0, 0)], k_closed, 1e-12);
        // Residual check of the fixed point itself.
        let p = sol.p[(0, 0)];
        let rhs = 1.0 + g * p - g * g * p * p / (1.0 + g * p);
        assert_close(p, rhs, 1e-12);
    }

    #[test]
    fn riccati_detects_divergence() {
        // A = 2 with B = 0 and gamma = 1: P <- 1 + 4P grows without bound.
        let env = LqrEnv::new(
            Mat::from_vec(1, 1, vec![2.0]),
            Mat::from_vec(1, 1, vec![0.0]),
            Mat::from_vec(1, 1, vec![1.0]),
            Mat::from_vec(1, 1, vec![1.0]),
            1.0,
        )
        .unwrap();
        match riccati_solve(&env, 1e-14, 10_000).unwrap_err() {
            Error::Diverged { .. } => {}
            other => panic!("expected Diverged, got {other:?}"),
        }
    }

    #[test]
    fn lqr_q_star_is_maximized_by_the_riccati_gain() {
        let env = LqrEnv::standard_scalar();
        let sol = riccati_solve(&env, 1e-14, 10_000).unwrap();
        for &s in &[-2.0, -0.7, 0.0, 1.3] {
            let a_opt = -sol.k[(0, 0)] * s;
            let (q_opt, _, ga) = lqr_q_star_eval(&env, &sol, &[s], &[a_opt]);
            // First-order condition at the optimal action.
            assert_close(ga[0], 0.0, 1e-10);
            // Value consistency: Q*(s, a*) = V*(s).
            assert_close(q_opt, lqr_v_star(&sol, &[s]), 1e-10);
            // Any other action scores no better.
            for &da in &[-0.5, -0.1, 0.2, 1.0] {
                let (q, _, _) = lqr_q_star_eval(&env, &sol, &[s], &[a_opt + da]);
                assert!(q <= q_opt + 1e-12);
            }
        }
    }

    #[test]
    fn lqr_q_star_gradients_match_finite_differences() {
        let env = LqrEnv::new(
            Mat::from_rows(&[&[1.0, 0.1], &[0.0, 0.9]]),
            Mat::from_vec(2, 1, vec![0.0, 1.0]),
            Mat::from_rows(&[&[1.0, 0.2], &[0.2, 0.5]]),
            Mat::from_vec(1, 1, vec![0.3]),
            0.9,
        )
        .unwrap();
        let sol = riccati_solve(&env, 1e-14, 10_000).unwrap();
        let h = 1e-6;
        let s = [0.7, -1.2];
        let a = [0.4];
        let (_, gs, ga) = lqr_q_star_eval(&env, &sol, &s, &a);
        for i in 0..2 {
            let mut sp = s;
            let mut sm = s;
            sp[i] += h;
            sm[i] -= h;
            let (qp, _, _) = lqr_q_star_eval(&env, &sol, &sp, &a);
            let (qm, _, _) = lqr_q_star_eval(&env, &sol, &sm, &a);
            assert_close((qp - qm) / (2.0 * h), gs[i], 1e-7);
        }
        let (qp, _, _) = lqr_q_star_eval(&env, &sol, &s, &[a[0] + h]);
        let (qm, _, _) = lqr_q_star_eval(&env, &sol, &s, &[a[0] - h]);
        assert_close((qp - qm) / (2.0 * h), ga[0], 1e-7);
    }

    #[test]
    fn interpolation_matches_nodes_and_midpoints() {
        let sol = value_iteration_toy(11, 0.9, 1e-12, 2000).unwrap();
        for (i, &s) in sol.s_grid.iter().enumerate() {
            assert_close(sol.v_at(s).unwrap(), sol.v_star[i], 1e-12);
        }
        let mid = 0.5 * (sol.s_grid[3] + sol.s_grid[4]);
        assert_close(
            sol.v_at(mid).unwrap(),
            0.5 * (sol.v_star[3] + sol.v_star[4]),
            1e-12,
        );
        assert!(sol.v_at(1.0000001).is_err());
    }

    #[test]
    fn gamma_is_carried_from_the_environment_definition() {
        let env = Toy1dEnv::standard();
        let sol = value_iteration_toy(101, env.gamma(), 1e-12, 2000).unwrap();
        assert_eq!(sol.gamma, env.gamma());
    }

    #[test]
    fn grid_solution_text_round_trips_bitwise() {
        let sol = value_iteration_toy(101, 0.9, 1e-12, 20_000).unwrap();
        let text = sol.to_text();
        assert!(text.starts_with(GRID_SOLUTION_FORMAT));
        let back = GridSolution::from_text(&text).unwrap();
        // PartialEq on the struct compares every float exactly.
        assert_eq!(back, sol);
        // A re-serialization is byte-identical, so golden files diff cleanly.
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn riccati_solution_text_round_trips_bitwise() {
        let env = LqrEnv::standard_scalar();
        let sol = riccati_solve(&env, 1e-14, 100_000).unwrap();
        let text = sol.to_text();
        assert!(text.starts_with(RICCATI_SOLUTION_FORMAT));
        let back = RiccatiSolution::from_text(&text).unwrap();
        assert_eq!(back, sol);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn solution_text_parsers_reject_malformed_input() {
        let sol = value_iteration_toy(11, 0.9, 1e-10, 20_000).unwrap();
        let good = sol.to_text();
        // Wrong or missing version line.
        assert!(GridSolution::from_text("grid-solution v0\n").is_err());
        assert!(GridSolution::from_text("").is_err());
        // Truncated rows: drop the final line.
        let truncated = good.rsplit_once('\n').map(|(head, _)| head).unwrap();
        let truncated = truncated.rsplit_once('\n').map(|(head, _)| head).unwrap();
        assert!(GridSolution::from_text(truncated).is_err());
        // Trailing garbage after the declared rows.
        let mut extra = good.clone();
        extra.push_str("0 0 0\n");
        assert!(GridSolution::from_text(&extra).is_err());
        // Corrupt a number.
        let corrupt = good.replacen("gamma 0.9", "gamma nine", 1);
        assert!(GridSolution::from_text(&corrupt).is_err());
        // Riccati: dims must be positive integers and rows must be complete.
        let env = LqrEnv::standard_scalar();
        let ric = riccati_solve(&env, 1e-12, 100_000).unwrap();
        let good = ric.to_text();
        let corrupt = good.replacen("dims 1 1", "dims 1.5 1", 1);
        assert!(RiccatiSolution::from_text(&corrupt).is_err());
        let truncated = good.rsplit_once('\n').map(|(head, _)| head).unwrap();
        let truncated = truncated.rsplit_once('\n').map(|(head, _)| head).unwrap();
        assert!(RiccatiSolution::from_text(truncated).is_err());
    }
}
