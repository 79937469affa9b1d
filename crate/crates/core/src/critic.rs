//! Critic architectures and the linear actor.
//!
//! Both critics implement [`CriticModel`], so the same loss and evaluation
//! code drives either. The quadratic critic doubles as an analytic oracle:
//! its value and input gradients have short closed forms that the tape path
//! must reproduce to machine precision.

use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diff::{CriticModel, FlatParams, NodeId, ParamLayout, ParamTape};
use crate::error::{Error, Result};
use crate::linalg::{matmul_acc, Mat};

/// Negative-side slope of every leaky-ReLU in this crate.
pub const LEAKY_RELU_ALPHA: f64 = 0.01;

/// Quadratic-in-`(s, a)` critic for scalar state and action:
///
/// ```text
/// Q(s, a) = t0 + t1 s + t2 a + t3 s^2 + t4 s a + t5 a^2
/// ```
///
/// Parameters start at zero, so the initial critic is identically zero.
pub struct QuadraticCritic {
    layout: Arc<ParamLayout>,
}

impl QuadraticCritic {
    pub fn new() -> Self {
        QuadraticCritic {
            layout: ParamLayout::new(&[("theta", 6)]),
        }
    }

    pub fn init_params(&self) -> FlatParams {
        FlatParams::zeros(self.layout.clone())
    }

    /// Closed-form `(Q, dQ/ds, dQ/da)`; the tape path must agree with this.
    pub fn closed_form_eval(params: &FlatParams, s: f64, a: f64) -> (f64, f64, f64) {
        let t = params.values();
        let q = t[0] + t[1] * s + t[2] * a + t[3] * s * s + t[4] * s * a + t[5] * a * a;
        let gs = t[1] + 2.0 * t[3] * s + t[4] * a;
        let ga = t[2] + t[4] * s + 2.0 * t[5] * a;
        (q, gs, ga)
    }
}

impl Default for QuadraticCritic {
    fn default() -> Self {
        Self::new()
    }
}

impl CriticModel for QuadraticCritic {
    fn state_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    fn record(&self, tape: &mut ParamTape<'_>, sa: NodeId) -> Result<NodeId> {
        let one = tape.constant(&[1.0]);
        let s = tape.gather(sa, &[0]);
        let a = tape.gather(sa, &[1]);
        let s2 = tape.square(s);
        let a2 = tape.square(a);
        let cross = tape.mul(s, a);
        let features = tape.concat(&[one, s, a, s2, cross, a2]);
        tape.affine(features, "theta", None)
    }

    fn value(&self, params: &FlatParams, s: &[f64], a: &[f64]) -> f64 {
        Self::closed_form_eval(params, s[0], a[0]).0
    }
}

/// Fully connected critic on `[s; a]` with leaky-ReLU hidden layers.
pub struct MlpCritic {
    state_dim: usize,
    action_dim: usize,
    /// All layer widths, input first, scalar output last.
    widths: Vec<usize>,
    layout: Arc<ParamLayout>,
}

impl MlpCritic {
    pub fn new(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::InvalidInput {
                what: "MlpCritic",
                detail: "state and action dims must be positive".to_string(),
            });
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidInput {
                what: "MlpCritic",
                detail: "hidden widths must be positive".to_string(),
            });
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(state_dim + action_dim);
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut segs: Vec<(String, usize)> = Vec::new();
        for l in 0..widths.len() - 1 {
            segs.push((format!("w{l}"), widths[l + 1] * widths[l]));
            segs.push((format!("b{l}"), widths[l + 1]));
        }
        let seg_refs: Vec<(&str, usize)> = segs.iter().map(|(n, l)| (n.as_str(), *l)).collect();
        Ok(MlpCritic {
            state_dim,
            action_dim,
            widths,
            layout: ParamLayout::new(&seg_refs),
        })
    }

    /// Three hidden layers of 128 units.
    pub fn standard(state_dim: usize, action_dim: usize) -> Result<Self> {
        Self::new(state_dim, action_dim, &[128, 128, 128])
    }

    fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Weights drawn uniformly from `±1/sqrt(fan_in)` per layer, biases zero.
    /// The draw order is fixed, so a seed fully determines the result.
    pub fn init_params(&self, seed: u64) -> FlatParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = FlatParams::zeros(self.layout.clone());
        for l in 0..self.n_layers() {
            let bound = 1.0 / (self.widths[l] as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let seg = params.seg_mut(&format!("w{l}")).unwrap();
            for w in seg.iter_mut() {
                *w = dist.sample(&mut rng);
            }
        }
        params
    }

    /// Smallest `|pre-activation|` over all hidden units; finite-difference
    /// probes are only trustworthy when this clears the probe step by a wide
    /// margin, since the leaky-ReLU derivative jumps at zero.
    pub fn preactivation_margin(&self, params: &FlatParams, s: &[f64], a: &[f64]) -> f64 {
        let mut cur: Vec<f64> = s.iter().chain(a.iter()).copied().collect();
        let mut margin = f64::INFINITY;
        for l in 0..self.n_layers() {
            let (rows, cols) = (self.widths[l + 1], self.widths[l]);
            let w = params.seg(&format!("w{l}")).unwrap();
            let b = params.seg(&format!("b{l}")).unwrap();
            let mut next = vec![0.0; rows];
            for i in 0..rows {
                let mut acc = b[i];
                for (wv, xv) in w[i * cols..(i + 1) * cols].iter().zip(&cur) {
                    acc += wv * xv;
                }
                next[i] = acc;
            }
            if l + 1 < self.n_layers() {
                for v in &mut next {
                    margin = margin.min(v.abs());
                    *v = if *v >= 0.0 { *v } else { LEAKY_RELU_ALPHA * *v };
                }
            }
            cur = next;
        }
        margin
    }
}

impl CriticModel for MlpCritic {
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn action_dim(&self) -> usize {
        self.action_dim
    }
    fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    fn record(&self, tape: &mut ParamTape<'_>, sa: NodeId) -> Result<NodeId> {
        let mut x = sa;
        for l in 0..self.n_layers() {
            let z = tape.affine(x, &format!("w{l}"), Some(&format!("b{l}")))?;
            x = if l + 1 < self.n_layers() {
                tape.leaky_relu(z, LEAKY_RELU_ALPHA)
            } else {
                z
            };
        }
        Ok(x)
    }

    fn value(&self, params: &FlatParams, s: &[f64], a: &[f64]) -> f64 {
        let mut cur: Vec<f64> = s.iter().chain(a.iter()).copied().collect();
        for l in 0..self.n_layers() {
            let (rows, cols) = (self.widths[l + 1], self.widths[l]);
            let w = params.seg(&format!("w{l}")).unwrap();
            let b = params.seg(&format!("b{l}")).unwrap();
            let mut next = vec![0.0; rows];
            for i in 0..rows {
                let mut acc = b[i];
                for (wv, xv) in w[i * cols..(i + 1) * cols].iter().zip(&cur) {
                    acc += wv * xv;
                }
                next[i] = acc;
            }
            if l + 1 < self.n_layers() {
                for v in &mut next {
                    if *v < 0.0 {
                        *v *= LEAKY_RELU_ALPHA;
                    }
                }
            }
            cur = next;
        }
        cur[0]
    }

    /// Batched scan over many actions at one state, organised as one matrix
    /// product per layer so the action-grid argmax inside target construction
    /// stays cheap.
    fn value_action_scan(&self, params: &FlatParams, s: &[f64], actions: &[f64]) -> Vec<f64> {
        let m = self.action_dim;
        assert_eq!(actions.len() % m, 0, "ragged action block");
        let n = actions.len() / m;
        if n == 0 {
            return Vec::new();
        }
        let d_in = self.widths[0];
        // Column j of the input matrix is [s; a_j], stored row-major.
        let mut cur = vec![0.0; d_in * n];
        for (i, &sv) in s.iter().enumerate() {
            cur[i * n..(i + 1) * n].fill(sv);
        }
        for j in 0..n {
            for k in 0..m {
                cur[(s.len() + k) * n + j] = actions[j * m + k];
            }
        }
        for l in 0..self.n_layers() {
            let (rows, cols) = (self.widths[l + 1], self.widths[l]);
            let w = params.seg(&format!("w{l}")).unwrap();
            let b = params.seg(&format!("b{l}")).unwrap();
            let mut next = vec![0.0; rows * n];
            for i in 0..rows {
                next[i * n..(i + 1) * n].fill(b[i]);
            }
            matmul_acc(&mut next, w, &cur, rows, cols, n);
            if l + 1 < self.n_layers() {
                for v in &mut next {
                    if *v < 0.0 {
                        *v *= LEAKY_RELU_ALPHA;
                    }
                }
            }
            cur = next;
        }
        cur
    }
}

/// Deterministic linear policy `mu(s) = K s` with constant Jacobian `K`.
/// Starts at zero gain.
#[derive(Clone)]
pub struct LinearActor {
    k: Mat,
}

impl LinearActor {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        LinearActor {
            k: Mat::zeros(action_dim, state_dim),
        }
    }

    pub fn act(&self, s: &[f64]) -> Vec<f64> {
        self.k.matvec(s)
    }

    /// `d mu / d s`, independent of `s` for a linear policy.
    pub fn jacobian(&self) -> &Mat {
        &self.k
    }

    pub fn gain(&self) -> &Mat {
        &self.k
    }

    pub fn gain_mut(&mut self) -> &mut Mat {
        &mut self.k
    }

    /// Batch-mean gradient of the deterministic policy objective in `K`: the
    /// per-sample gradient of `Q(s, mu(s))` is `grad_a Q . s^T`, so each pair
    /// `(s, grad_a Q)` contributes its outer product. Ascending this gradient
    /// improves the policy; the trainer feeds its negation to an optimizer.
    pub fn policy_gradient(&self, batch: &[(&[f64], &[f64])]) -> Mat {
        let mut grad = Mat::zeros(self.k.rows(), self.k.cols());
        if batch.is_empty() {
            return grad;
        }
        let scale = 1.0 / batch.len() as f64;
        for (s, ga) in batch {
            for i in 0..grad.rows() {
                for j in 0..grad.cols() {
                    grad[(i, j)] += scale * ga[i] * s[j];
                }
            }
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{
        eval_with_input_grads, finite_difference_gradient, sobolev_loss_and_param_grads,
        LossSample,
    };
    use rand::{Rng, SeedableRng};

    /// `(s, a, y, dy_ds, dy_da)` owned backing for a borrowed `LossSample`.
    type RawSample = (Vec<f64>, Vec<f64>, f64, Vec<f64>, Vec<f64>);

    #[test]
    fn quadratic_tape_matches_closed_form_everywhere() {
        let model = QuadraticCritic::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let theta: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let params = FlatParams::from_values(model.layout().clone(), theta).unwrap();
            let s = rng.gen_range(-1.5..1.5);
            let a = rng.gen_range(-1.5..1.5);
            let (q, gs, ga) = eval_with_input_grads(&model, &params, &[s], &[a]).unwrap();
            let (qc, gsc, gac) = QuadraticCritic::closed_form_eval(&params, s, a);
            assert!((q - qc).abs() <= 1e-12, "value {q} vs {qc}");
            assert!((gs[0] - gsc).abs() <= 1e-12, "ds {} vs {gsc}", gs[0]);
            assert!((ga[0] - gac).abs() <= 1e-12, "da {} vs {gac}", ga[0]);
        }
    }

    #[test]
    fn quadratic_frozen_spot_checks() {
        let model = QuadraticCritic::new();
        // theta = (0,0,0,0,0,1): Q = a^2.
        let params =
            FlatParams::from_values(model.layout().clone(), vec![0., 0., 0., 0., 0., 1.]).unwrap();
        let (q, gs, ga) = eval_with_input_grads(&model, &params, &[0.3], &[0.5]).unwrap();
        assert_eq!(q, 0.25);
        assert_eq!(gs[0], 0.0);
        assert_eq!(ga[0], 1.0);
        // Zero init evaluates to zero with zero gradients.
        let zero = model.init_params();
        let (q, gs, ga) = eval_with_input_grads(&model, &zero, &[0.7], &[-0.4]).unwrap();
        assert_eq!((q, gs[0], ga[0]), (0.0, 0.0, 0.0));
    }

    /// Independent derivation of the loss gradient: with features
    /// phi = (1, s, a, s^2, sa, a^2), phi_s = (0,1,0,2s,a,0),
    /// phi_a = (0,0,1,0,s,2a), the gradient is the batch mean of
    /// 2(Q-y) phi + 2 ls (gs-ts) phi_s + 2 la (ga-ta) phi_a.
    #[test]
    fn quadratic_loss_gradient_matches_hand_formula() {
        let model = QuadraticCritic::new();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let theta: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let params = FlatParams::from_values(model.layout().clone(), theta).unwrap();
            let pts: Vec<(f64, f64, f64, f64, f64)> = (0..8)
                .map(|_| {
                    (
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            let (ls, la) = (rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
            let store: Vec<RawSample> = pts
                .iter()
                .map(|&(s, a, y, ts, ta)| (vec![s], vec![a], y, vec![ts], vec![ta]))
                .collect();
            let batch: Vec<LossSample> = store
                .iter()
                .map(|(s, a, y, ts, ta)| LossSample {
                    s,
                    a,
                    y: *y,
                    dy_ds: ts,
                    dy_da: ta,
                })
                .collect();
            let (_, grad) =
                sobolev_loss_and_param_grads(&model, &params, &batch, ls, la).unwrap();
            let mut want = vec![0.0; 6];
            let b = pts.len() as f64;
            for &(s, a, y, ts, ta) in &pts {
                let (q, gs, ga) = QuadraticCritic::closed_form_eval(&params, s, a);
                let phi = [1.0, s, a, s * s, s * a, a * a];
                let phi_s = [0.0, 1.0, 0.0, 2.0 * s, a, 0.0];
                let phi_a = [0.0, 0.0, 1.0, 0.0, s, 2.0 * a];
                for j in 0..6 {
                    want[j] += (2.0 * (q - y) * phi[j]
                        + 2.0 * ls * (gs - ts) * phi_s[j]
                        + 2.0 * la * (ga - ta) * phi_a[j])
                        / b;
                }
            }
            for (g, w) in grad.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12, "grad {g} vs hand {w}");
            }
        }
    }

    #[test]
    fn mlp_standard_parameter_count() {
        let model = MlpCritic::standard(1, 1).unwrap();
        assert_eq!(model.layout().total_len(), 33_537);
    }

    #[test]
    fn mlp_init_is_seeded_bounded_and_zero_biased() {
        let model = MlpCritic::new(1, 1, &[16, 8]).unwrap();
        let p1 = model.init_params(42);
        let p2 = model.init_params(42);
        let p3 = model.init_params(43);
        assert_eq!(p1.values(), p2.values());
        assert_ne!(p1.values(), p3.values());
        for (l, fan_in) in [(0usize, 2usize), (1, 16), (2, 8)] {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for &w in p1.seg(&format!("w{l}")).unwrap() {
                assert!(w.abs() <= bound, "weight {w} out of ±{bound}");
            }
            for &b in p1.seg(&format!("b{l}")).unwrap() {
                assert_eq!(b, 0.0);
            }
        }
        // Not all weights are equal (the draw actually varies).
        let w0 = p1.seg("w0").unwrap();
        assert!(w0.iter().any(|&w| (w - w0[0]).abs() > 1e-12));
    }

    #[test]
    fn mlp_value_paths_agree() {
        let model = MlpCritic::new(2, 1, &[16, 8]).unwrap();
        let params = model.init_params(7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = [0.4, -0.3];
        let actions: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scan = model.value_action_scan(&params, &s, &actions);
        assert_eq!(scan.len(), 50);
        for (j, &a) in actions.iter().enumerate() {
            let direct = model.value(&params, &s, &[a]);
            let (tape_q, _, _) = eval_with_input_grads(&model, &params, &s, &[a]).unwrap();
            assert!((direct - tape_q).abs() <= 1e-12);
            assert!(
                (scan[j] - direct).abs() <= 1e-9,
                "scan {} vs direct {direct}",
                scan[j]
            );
        }
    }

    #[test]
    fn mlp_input_gradients_match_finite_differences() {
        let model = MlpCritic::new(1, 1, &[24, 16]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut checked = 0;
        while checked < 60 {
            let params = model.init_params(rng.gen());
            let s = [rng.gen_range(-1.0..1.0)];
            let a = [rng.gen_range(-1.0..1.0)];
            if model.preactivation_margin(&params, &s, &a) < 1e-3 {
                continue;
            }
            let (_, gs, ga) = eval_with_input_grads(&model, &params, &s, &a).unwrap();
            let fd = finite_difference_gradient(
                |x| model.value(&params, &x[..1], &x[1..]),
                &[s[0], a[0]],
                1e-6,
            )
            .unwrap();
            let scale = fd.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
            assert!((gs[0] - fd[0]).abs() / scale <= 1e-5);
            assert!((ga[0] - fd[1]).abs() / scale <= 1e-5);
            checked += 1;
        }
    }

    #[test]
    fn mlp_sobolev_param_gradients_match_finite_differences() {
        let model = MlpCritic::new(1, 1, &[8, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut checked = 0;
        while checked < 10 {
            let params = model.init_params(rng.gen());
            let pts: Vec<(Vec<f64>, Vec<f64>)> = (0..4)
                .map(|_| {
                    (
                        vec![rng.gen_range(-1.0..1.0)],
                        vec![rng.gen_range(-1.0..1.0)],
                    )
                })
                .collect();
            if pts
                .iter()
                .any(|(s, a)| model.preactivation_margin(&params, s, a) < 1e-3)
            {
                continue;
            }
            let targets: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..4)
                .map(|_| {
                    (
                        rng.gen_range(-1.0..1.0),
                        vec![rng.gen_range(-1.0..1.0)],
                        vec![rng.gen_range(-1.0..1.0)],
                    )
                })
                .collect();
            let batch: Vec<LossSample> = pts
                .iter()
                .zip(&targets)
                .map(|((s, a), (y, ts, ta))| LossSample {
                    s,
                    a,
                    y: *y,
                    dy_ds: ts,
                    dy_da: ta,
                })
                .collect();
            let (ls, la) = (0.9, 1.1);
            let (_, grad) =
                sobolev_loss_and_param_grads(&model, &params, &batch, ls, la).unwrap();
            let loss_of = |pv: &[f64]| {
                let p = FlatParams::from_values(model.layout().clone(), pv.to_vec()).unwrap();
                sobolev_loss_and_param_grads(&model, &p, &batch, ls, la).unwrap().0
            };
            let fd = finite_difference_gradient(loss_of, params.values(), 1e-6).unwrap();
            let scale = fd.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (g, f) in grad.iter().zip(&fd) {
                assert!(
                    (g - f).abs() / scale <= 1e-4,
                    "param grad {g} vs fd {f} (scale {scale})"
                );
            }
            checked += 1;
        }
    }

    #[test]
    fn mlp_rejects_degenerate_shapes() {
        assert!(MlpCritic::new(0, 1, &[8]).is_err());
        assert!(MlpCritic::new(1, 0, &[8]).is_err());
        assert!(MlpCritic::new(1, 1, &[8, 0]).is_err());
    }

    #[test]
    fn linear_actor_acts_and_reports_policy_gradient() {
        let mut actor = LinearActor::new(1, 1);
        assert_eq!(actor.act(&[0.7]), vec![0.0]);
        assert_eq!(actor.jacobian().rows(), 1);
        assert_eq!(actor.jacobian()[(0, 0)], 0.0);
        // Two samples: grad K = mean(ga * s) = (2*1 + 4*0.5)/2 = 2.
        let s1 = [1.0];
        let s2 = [0.5];
        let ga1 = [2.0];
        let ga2 = [4.0];
        let grad = actor.policy_gradient(&[(&s1[..], &ga1[..]), (&s2[..], &ga2[..])]);
        assert!((grad[(0, 0)] - 2.0).abs() <= 1e-15);
        // The accessor must not move the gain, and an empty batch is zero.
        assert_eq!(actor.gain()[(0, 0)], 0.0);
        assert_eq!(actor.policy_gradient(&[])[(0, 0)], 0.0);
        // Multi-dimensional outer product: grad[(i, j)] = ga[i] * s[j].
        let wide = LinearActor::new(2, 1);
        let s = [3.0, -1.0];
        let ga = [0.5];
        let g2 = wide.policy_gradient(&[(&s[..], &ga[..])]);
        assert_eq!((g2.rows(), g2.cols()), (1, 2));
        assert!((g2[(0, 0)] - 1.5).abs() <= 1e-15);
        assert!((g2[(0, 1)] + 0.5).abs() <= 1e-15);
        // Clones are independent copies of the gain.
        actor.gain_mut()[(0, 0)] = -0.3;
        let copy = actor.clone();
        actor.gain_mut()[(0, 0)] = 0.9;
        assert_eq!(copy.gain()[(0, 0)], -0.3);
    }
}
