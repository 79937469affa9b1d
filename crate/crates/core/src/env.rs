//! Differentiable environments.
//!
//! An environment exposes deterministic dynamics `s' = f(s, a)`, a reward
//! `r(s, a)`, and the four Jacobians of that pair. Trainers only see the
//! [`DiffEnv`] trait, so the same loop drives both tasks:
//!
//! - [`Toy1dEnv`]: bounded one-dimensional task with `s' = a` and
//!   `r = 0.2 a - (a - s)^2` on the square `[-1, 1]^2`.
//! - [`LqrEnv`]: discounted linear-quadratic regulator with `s' = A s + B a`
//!   and `r = -(s^T Q s + a^T R a)`.
//!
//! Out-of-bounds inputs are rejected, never clipped: silent clipping would
//! corrupt the Jacobians that first-order targets consume.

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Jacobians of dynamics and reward at one `(s, a)`.
///
/// Shapes: `df_ds` is `n x n`, `df_da` is `n x m`, `dr_ds` has length `n`,
/// `dr_da` length `m`, for state dimension `n` and action dimension `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvJacobians {
    pub df_ds: Mat,
    pub df_da: Mat,
    pub dr_ds: Vec<f64>,
    pub dr_da: Vec<f64>,
}

/// One environment transition with everything first-order targets need.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub jac: EnvJacobians,
}

/// Deterministic differentiable environment.
pub trait DiffEnv {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn gamma(&self) -> f64;

    /// `(f(s, a), r(s, a))`. Errors on invalid `(s, a)`.
    fn step(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, f64)>;

    /// Analytic Jacobians of `(f, r)` at `(s, a)`. Errors on invalid `(s, a)`.
    fn jacobians(&self, s: &[f64], a: &[f64]) -> Result<EnvJacobians>;

    /// Step plus Jacobians bundled into a [`TransitionRecord`].
    fn transition(&self, s: &[f64], a: &[f64]) -> Result<TransitionRecord> {
        let (s_next, r) = self.step(s, a)?;
        let jac = self.jacobians(s, a)?;
        Ok(TransitionRecord {
            s: s.to_vec(),
            a: a.to_vec(),
            r,
            s_next,
            jac,
        })
    }
}

/// Bounded one-dimensional environment: `s' = a`, `r = 0.2 a - (a - s)^2`,
/// with both state and action confined to `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Toy1dEnv {
    gamma: f64,
}

impl Toy1dEnv {
    pub const STATE_LO: f64 = -1.0;
    pub const STATE_HI: f64 = 1.0;

    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidInput {
                what: "Toy1dEnv",
                detail: format!("gamma must lie in [0, 1), got {gamma}"),
            });
        }
        Ok(Toy1dEnv { gamma })
    }

    /// The configuration used throughout the experiments (`gamma = 0.9`).
    pub fn standard() -> Self {
        Toy1dEnv { gamma: 0.9 }
    }

    /// Closed-form reward; callers must have validated bounds.
    pub fn reward(s: f64, a: f64) -> f64 {
        0.2 * a - (a - s) * (a - s)
    }

    fn check(&self, s: &[f64], a: &[f64]) -> Result<(f64, f64)> {
        if s.len() != 1 {
            return Err(Error::DimensionMismatch {
                what: "Toy1dEnv state",
                expected: 1,
                got: s.len(),
            });
        }
        if a.len() != 1 {
            return Err(Error::DimensionMismatch {
                what: "Toy1dEnv action",
                expected: 1,
                got: a.len(),
            });
        }
        let (s, a) = (s[0], a[0]);
        if !(Self::STATE_LO..=Self::STATE_HI).contains(&s) || s.is_nan() {
            return Err(Error::InvalidInput {
                what: "Toy1dEnv state",
                detail: format!("state {s} outside [-1, 1]"),
            });
        }
        if !(Self::STATE_LO..=Self::STATE_HI).contains(&a) || a.is_nan() {
            return Err(Error::InvalidInput {
                what: "Toy1dEnv action",
                detail: format!("action {a} outside [-1, 1]"),
            });
        }
        Ok((s, a))
    }
}

impl DiffEnv for Toy1dEnv {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn step(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (s, a) = self.check(s, a)?;
        Ok((vec![a], Self::reward(s, a)))
    }

    fn jacobians(&self, s: &[f64], a: &[f64]) -> Result<EnvJacobians> {
        let (s, a) = self.check(s, a)?;
        Ok(EnvJacobians {
            df_ds: Mat::from_vec(1, 1, vec![0.0]),
            df_da: Mat::from_vec(1, 1, vec![1.0]),
            dr_ds: vec![2.0 * (a - s)],
            dr_da: vec![0.2 - 2.0 * (a - s)],
        })
    }
}

/// Discounted linear-quadratic regulator: `s' = A s + B a`,
/// `r = -(s^T Q s + a^T R a)` with `Q` symmetric positive semi-definite and
/// `R` symmetric positive definite (both checked at construction).
#[derive(Debug, Clone)]
pub struct LqrEnv {
    a_mat: Mat,
    b_mat: Mat,
    q_cost: Mat,
    r_cost: Mat,
    gamma: f64,
}

impl LqrEnv {
    pub fn new(a_mat: Mat, b_mat: Mat, q_cost: Mat, r_cost: Mat, gamma: f64) -> Result<Self> {
        let n = a_mat.rows();
        let m = b_mat.cols();
        if a_mat.cols() != n {
            return Err(Error::InvalidInput {
                what: "LqrEnv",
                detail: format!("A must be square, got {}x{}", a_mat.rows(), a_mat.cols()),
            });
        }
        if b_mat.rows() != n {
            return Err(Error::InvalidInput {
                what: "LqrEnv",
                detail: format!("B must have {n} rows, got {}", b_mat.rows()),
            });
        }
        if q_cost.rows() != n || q_cost.cols() != n {
            return Err(Error::InvalidInput {
                what: "LqrEnv",
                detail: format!("Q must be {n}x{n}"),
            });
        }
        if r_cost.rows() != m || r_cost.cols() != m {
            return Err(Error::InvalidInput {
                what: "LqrEnv",
                detail: format!("R must be {m}x{m}"),
            });
        }
        if q_cost.asymmetry() > 1e-12 {
            return Err(Error::InvalidInput {
                what: "LqrEnv",
                detail: format!("Q must be symmetric (defect {:e})", q_cost.asymmetry()),
            });
        }
        if r_cost.asymmetry() > 1e-12 {
            return Err(Error::InvalidInput {
                what: "LqrEnv",
                detail: format!("R must be symmetric (defect {:e})", r_cost.asymmetry()),
            });
        }
        // Semi-definiteness tolerates rounding at the scale of the entries;
        // definiteness of R does not (its inverse appears in the Riccati step).
        let scale = q_cost.max_abs().max(1.0);
        if !q_cost.add(&Mat::scaled_identity(n, 1e-12 * scale)).cholesky_pivots_above(0.0) {
            return Err(Error::InvalidInput {
                what: "LqrEnv",
                detail: "Q must be positive semi-definite".to_string(),
            });
        }
        if !r_cost.cholesky_pivots_above(0.0) {
            return Err(Error::InvalidInput {
                what: "LqrEnv",
                detail: "R must be positive definite".to_string(),
            });
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidInput {
                what: "LqrEnv",
                detail: format!("gamma must lie in [0, 1], got {gamma}"),
            });
        }
        Ok(LqrEnv {
            a_mat,
            b_mat,
            q_cost,
            r_cost,
            gamma,
        })
    }

    /// The scalar configuration used in the experiments:
    /// `A = B = Q = R = 1`, `gamma = 0.9`.
    pub fn standard_scalar() -> Self {
        LqrEnv::new(
            Mat::from_vec(1, 1, vec![1.0]),
            Mat::from_vec(1, 1, vec![1.0]),
            Mat::from_vec(1, 1, vec![1.0]),
            Mat::from_vec(1, 1, vec![1.0]),
            0.9,
        )
        .expect("standard scalar LQR is valid")
    }

    pub fn a_mat(&self) -> &Mat {
        &self.a_mat
    }

    pub fn b_mat(&self) -> &Mat {
        &self.b_mat
    }

    pub fn q_cost(&self) -> &Mat {
        &self.q_cost
    }

    pub fn r_cost(&self) -> &Mat {
        &self.r_cost
    }

    fn check(&self, s: &[f64], a: &[f64]) -> Result<()> {
        if s.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "LqrEnv state",
                expected: self.state_dim(),
                got: s.len(),
            });
        }
        if a.len() != self.action_dim() {
            return Err(Error::DimensionMismatch {
                what: "LqrEnv action",
                expected: self.action_dim(),
                got: a.len(),
            });
        }
        if s.iter().chain(a).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput {
                what: "LqrEnv",
                detail: "state/action entries must be finite".to_string(),
            });
        }
        Ok(())
    }
}

impl DiffEnv for LqrEnv {
    fn state_dim(&self) -> usize {
        self.a_mat.rows()
    }

    fn action_dim(&self) -> usize {
        self.b_mat.cols()
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn step(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check(s, a)?;
        let mut s_next = self.a_mat.matvec(s);
        let ba = self.b_mat.matvec(a);
        for (sn, b) in s_next.iter_mut().zip(&ba) {
            *sn += b;
        }
        let qs = self.q_cost.matvec(s);
        let ra = self.r_cost.matvec(a);
        let r = -(crate::linalg::dot(s, &qs) + crate::linalg::dot(a, &ra));
        Ok((s_next, r))
    }

    fn jacobians(&self, s: &[f64], a: &[f64]) -> Result<EnvJacobians> {
        self.check(s, a)?;
        let qs = self.q_cost.matvec(s);
        let ra = self.r_cost.matvec(a);
        Ok(EnvJacobians {
            df_ds: self.a_mat.clone(),
            df_da: self.b_mat.clone(),
            dr_ds: qs.iter().map(|v| -2.0 * v).collect(),
            dr_da: ra.iter().map(|v| -2.0 * v).collect(),
        })
    }
}
