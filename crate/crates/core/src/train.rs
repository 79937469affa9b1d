//! Training loops: gradient-matching temporal difference learning on the
//! 1-d task (grid-max targets, fresh uniform batches) and on the scalar
//! linear-quadratic task (actor-critic with a replay ring).
//!
//! Everything is seeded through independent ChaCha streams, so a config
//! reruns to bit-identical metrics, parameters, and checkpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::critic::{LinearActor, MlpCritic, QuadraticCritic};
use crate::diff::{
    sobolev_loss_and_param_grads, value_loss_and_param_grads, CriticModel, FlatParams,
    LossSample,
};
use crate::diff::eval_with_input_grads;
use crate::env::{DiffEnv, LqrEnv, Toy1dEnv, TransitionRecord};
use crate::error::{Error, Result};
use crate::eval::{
    lqr_grad_a_mse, lqr_mc_return, lqr_policy_error, lqr_q_mse, toy_grad_a_mse,
    toy_mc_return_greedy, toy_policy_error, toy_q_mse, MetricsRow,
};
use crate::linalg::Mat;
use crate::oracle::{linspace, GridSolution, RiccatiSolution};
use crate::target::{actor_target, max_target, FirstOrderTarget, FrozenCritic};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Evaluation constants: value/gradient MSE grid side, greedy-policy state
/// and action grids, rollout horizon and start count, rollout action grid,
/// and the half-width of the linear-quadratic evaluation box. The policy
/// metric gets a denser state grid than the value grid because it is a mean
/// of squared argmax displacements — a heavy-tailed quantity dominated by a
/// few states, so a coarse grid makes the metric itself noisy.
pub const EVAL_GRID_SIDE: usize = 51;
pub const POLICY_STATE_GRID: usize = 201;
pub const POLICY_ACTION_GRID: usize = 1001;
pub const MC_HORIZON: usize = 200;
pub const MC_STARTS: usize = 21;
pub const MC_ACTION_GRID: usize = 201;
pub const LQR_EVAL_HALF_WIDTH: f64 = 2.0;

/// First-moment/second-moment optimiser state with bias correction.
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update: `p -= lr * mhat / (sqrt(vhat) + eps)` with bias-corrected
    /// moment estimates.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                what: "AdamState::step",
                expected: self.m.len(),
                got: params.len().min(grad.len()),
            });
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidInput {
                what: "AdamState::step",
                detail: format!("learning rate must be positive, got {lr}"),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }
}

/// `target <- rho * target + (1 - rho) * online`, elementwise.
pub fn polyak_update(target: &mut [f64], online: &[f64], rho: f64) -> Result<()> {
    if target.len() != online.len() {
        return Err(Error::DimensionMismatch {
            what: "polyak_update",
            expected: target.len(),
            got: online.len(),
        });
    }
    if !((0.0..=1.0).contains(&rho) && rho.is_finite()) {
        return Err(Error::InvalidInput {
            what: "polyak_update",
            detail: format!("rho must lie in [0, 1], got {rho}"),
        });
    }
    for (t, o) in target.iter_mut().zip(online) {
        *t = rho * *t + (1.0 - rho) * o;
    }
    Ok(())
}

/// Fixed-capacity ring of transitions. Environment Jacobians are computed
/// once at collection time and replayed as stored.
pub struct ReplayBuffer {
    buf: Vec<TransitionRecord>,
    cap: usize,
    write: usize,
}

impl ReplayBuffer {
    pub fn new(cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(Error::InvalidInput {
                what: "ReplayBuffer",
                detail: "capacity must be positive".to_string(),
            });
        }
        Ok(ReplayBuffer {
            buf: Vec::with_capacity(cap.min(4096)),
            cap,
            write: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn push(&mut self, rec: TransitionRecord) {
        if self.buf.len() < self.cap {
            self.buf.push(rec);
        } else {
            self.buf[self.write] = rec;
        }
        self.write = (self.write + 1) % self.cap;
    }

    pub fn get(&self, i: usize) -> &TransitionRecord {
        &self.buf[i]
    }

    /// Uniform indices with replacement.
    pub fn sample_indices(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.buf.len())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Value-matching only; both gradient weights must be zero.
    Baseline,
    /// Value plus gradient matching.
    Sobolev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    /// Grid-max targets, fresh uniform batches (the 1-d task).
    QLearning,
    /// Policy targets with a learned linear actor and replay (the
    /// linear-quadratic task).
    ActorCritic,
}

/// Which gradient engine the critic update runs through. `Tangent` carries
/// forward tangents even when both lambdas are zero; `ValueOnly` is the
/// plain backprop path with no tangent machinery at all. With zero lambdas
/// the two must produce bit-identical trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossPath {
    Tangent,
    ValueOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelKind {
    Quadratic,
    Mlp { hidden: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub model: ModelKind,
    pub method: Method,
    pub algo: Algo,
    pub loss_path: LossPath,
    pub lambda_s: f64,
    pub lambda_a: f64,
    pub lr: f64,
    pub lr_actor: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub polyak_rho: f64,
    /// Steps over which the gradient weights ramp linearly from zero;
    /// zero means full weight from the first step.
    pub warmup_steps: usize,
    pub seed: u64,
    /// Nodes of the action grid used by grid-max targets.
    pub grid_points: usize,
    /// Metric cadence; zero records only the initial and final rows.
    pub eval_every: usize,
    /// Steps at which to snapshot the online parameters.
    pub checkpoint_steps: Vec<usize>,
    pub replay_capacity: usize,
    pub explore_sigma: f64,
    pub episode_len: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            model: ModelKind::Quadratic,
            method: Method::Sobolev,
            algo: Algo::QLearning,
            loss_path: LossPath::Tangent,
            lambda_s: 1.0,
            lambda_a: 1.0,
            lr: 1e-4,
            lr_actor: 1e-3,
            batch_size: 50,
            total_steps: 20_000,
            polyak_rho: 0.995,
            warmup_steps: 0,
            seed: 0,
            grid_points: 100,
            eval_every: 1000,
            checkpoint_steps: Vec::new(),
            replay_capacity: 10_000,
            explore_sigma: 0.3,
            episode_len: 20,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::InvalidInput {
            what: "TrainerConfig",
            detail,
        });
        if self.batch_size == 0 {
            return bad("batch_size must be positive".to_string());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.lr_actor > 0.0 && self.lr_actor.is_finite()) {
            return bad(format!("lr_actor must be positive, got {}", self.lr_actor));
        }
        for (name, lam) in [("lambda_s", self.lambda_s), ("lambda_a", self.lambda_a)] {
            if !(lam >= 0.0 && lam.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {lam}"));
            }
        }
        if !((0.0..=1.0).contains(&self.polyak_rho) && self.polyak_rho.is_finite()) {
            return bad(format!("polyak_rho must lie in [0, 1], got {}", self.polyak_rho));
        }
        if self.grid_points < 2 {
            return bad(format!("grid_points must be at least 2, got {}", self.grid_points));
        }
        if self.replay_capacity < self.batch_size {
            return bad(format!(
                "replay_capacity ({}) must hold at least one batch ({})",
                self.replay_capacity, self.batch_size
            ));
        }
        if !(self.explore_sigma >= 0.0 && self.explore_sigma.is_finite()) {
            return bad(format!("explore_sigma must be non-negative, got {}", self.explore_sigma));
        }
        if self.episode_len == 0 {
            return bad("episode_len must be positive".to_string());
        }
        if self.method == Method::Baseline && (self.lambda_s != 0.0 || self.lambda_a != 0.0) {
            return bad(format!(
                "baseline method requires zero gradient weights, got lambda_s={} lambda_a={}",
                self.lambda_s, self.lambda_a
            ));
        }
        if self.loss_path == LossPath::ValueOnly
            && (self.lambda_s != 0.0 || self.lambda_a != 0.0)
        {
            return bad(
                "the value-only gradient path cannot express nonzero gradient weights"
                    .to_string(),
            );
        }
        Ok(())
    }

    /// Gradient weights after the linear warm-up ramp, at 1-based step `t`.
    pub(crate) fn effective_lambdas(&self, t: usize) -> (f64, f64) {
        if self.warmup_steps == 0 {
            return (self.lambda_s, self.lambda_a);
        }
        let ramp = (t as f64 / self.warmup_steps as f64).min(1.0);
        (self.lambda_s * ramp, self.lambda_a * ramp)
    }
}

/// A training task: the environment plus its exact solution for metrics.
pub enum Task<'a> {
    Toy {
        env: &'a Toy1dEnv,
        oracle: &'a GridSolution,
    },
    Lqr {
        env: &'a LqrEnv,
        oracle: &'a RiccatiSolution,
    },
}

/// Online-parameter snapshot taken mid-run.
pub struct Checkpoint {
    pub step: usize,
    pub params: FlatParams,
}

pub struct ExperimentResult {
    pub metrics: Vec<MetricsRow>,
    pub checkpoints: Vec<Checkpoint>,
    pub final_params: FlatParams,
    pub final_target_params: FlatParams,
    /// Learned policy gain for actor-critic runs.
    pub final_actor_gain: Option<Mat>,
}

fn build_model(
    kind: &ModelKind,
    state_dim: usize,
    action_dim: usize,
    seed: u64,
) -> Result<(Box<dyn CriticModel>, FlatParams)> {
    match kind {
        ModelKind::Quadratic => {
            if state_dim != 1 || action_dim != 1 {
                return Err(Error::InvalidInput {
                    what: "build_model",
                    detail: "the quadratic critic is defined for scalar state and action"
                        .to_string(),
                });
            }
            let model = QuadraticCritic::new();
            let params = model.init_params();
            Ok((Box::new(model), params))
        }
        ModelKind::Mlp { hidden } => {
            let model = MlpCritic::new(state_dim, action_dim, hidden)?;
            let params = model.init_params(seed);
            Ok((Box::new(model), params))
        }
    }
}

fn critic_update(
    model: &dyn CriticModel,
    params: &FlatParams,
    batch: &[TransitionRecord],
    targets: &[FirstOrderTarget],
    cfg: &TrainerConfig,
    t: usize,
) -> Result<(f64, Vec<f64>)> {
    let samples: Vec<LossSample> = batch
        .iter()
        .zip(targets)
        .map(|(rec, tg)| LossSample {
            s: &rec.s,
            a: &rec.a,
            y: tg.y,
            dy_ds: &tg.dy_ds,
            dy_da: &tg.dy_da,
        })
        .collect();
    match cfg.loss_path {
        LossPath::Tangent => {
            let (ls, la) = cfg.effective_lambdas(t);
            sobolev_loss_and_param_grads(model, params, &samples, ls, la)
        }
        LossPath::ValueOnly => value_loss_and_param_grads(model, params, &samples),
    }
}

/// Run one full training configuration against a task. Returns the metric
/// trace (step 0, every `eval_every`, and the final step), any requested
/// checkpoints, and the final parameters.
pub fn run_experiment(task: &Task<'_>, cfg: &TrainerConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    match (task, cfg.algo) {
        (Task::Toy { .. }, Algo::QLearning) => run_toy_q_learning(task, cfg),
        (Task::Lqr { .. }, Algo::ActorCritic) => run_lqr_actor_critic(task, cfg),
        (Task::Toy { .. }, Algo::ActorCritic) => Err(Error::InvalidInput {
            what: "run_experiment",
            detail: "the 1-d task trains with q_learning".to_string(),
        }),
        (Task::Lqr { .. }, Algo::QLearning) => Err(Error::InvalidInput {
            what: "run_experiment",
            detail: "the linear-quadratic task trains with actor_critic".to_string(),
        }),
    }
}

fn should_eval(t: usize, total: usize, eval_every: usize) -> bool {
    t == total || (eval_every > 0 && t.is_multiple_of(eval_every))
}

fn run_toy_q_learning(task: &Task<'_>, cfg: &TrainerConfig) -> Result<ExperimentResult> {
    let (env, oracle) = match task {
        Task::Toy { env, oracle } => (*env, *oracle),
        _ => unreachable!(),
    };
    let (model, mut params) = build_model(&cfg.model, env.state_dim(), env.action_dim(), cfg.seed)?;
    let mut target_params = params.clone();
    let mut adam = AdamState::new(params.len());
    let action_grid = linspace(Toy1dEnv::STATE_LO, Toy1dEnv::STATE_HI, cfg.grid_points);
    let mut rng_batch = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_batch.set_stream(1);

    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();
    let toy_row = |step: usize, params: &FlatParams| -> Result<MetricsRow> {
        let frozen = FrozenCritic::new(&*model, params);
        Ok(MetricsRow {
            step,
            seed: cfg.seed,
            q_mse: toy_q_mse(&frozen, oracle, EVAL_GRID_SIDE)?,
            grad_a_mse: toy_grad_a_mse(&frozen, oracle, EVAL_GRID_SIDE)?,
            policy_err: toy_policy_error(&frozen, oracle, POLICY_STATE_GRID, POLICY_ACTION_GRID)?,
            mc_return: toy_mc_return_greedy(&frozen, env, MC_HORIZON, MC_STARTS, MC_ACTION_GRID)?,
        })
    };
    metrics.push(toy_row(0, &params)?);
    if cfg.checkpoint_steps.contains(&0) {
        checkpoints.push(Checkpoint {
            step: 0,
            params: params.clone(),
        });
    }

    let mut batch = Vec::with_capacity(cfg.batch_size);
    for t in 1..=cfg.total_steps {
        batch.clear();
        for _ in 0..cfg.batch_size {
            let s = rng_batch.gen_range(Toy1dEnv::STATE_LO..=Toy1dEnv::STATE_HI);
            let a = rng_batch.gen_range(Toy1dEnv::STATE_LO..=Toy1dEnv::STATE_HI);
            batch.push(env.transition(&[s], &[a])?);
        }
        let targets: Vec<FirstOrderTarget> = {
            let frozen = FrozenCritic::new(&*model, &target_params);
            batch
                .iter()
                .map(|rec| max_target(&frozen, rec, env.gamma(), &action_grid))
                .collect::<Result<_>>()?
        };
        let (_, grad) = critic_update(&*model, &params, &batch, &targets, cfg, t)?;
        adam.step(params.values_mut(), &grad, cfg.lr)?;
        polyak_update(target_params.values_mut(), params.values(), cfg.polyak_rho)?;
        if cfg.checkpoint_steps.contains(&t) {
            checkpoints.push(Checkpoint {
                step: t,
                params: params.clone(),
            });
        }
        if should_eval(t, cfg.total_steps, cfg.eval_every) {
            metrics.push(toy_row(t, &params)?);
        }
    }
    Ok(ExperimentResult {
        metrics,
        checkpoints,
        final_params: params,
        final_target_params: target_params,
        final_actor_gain: None,
    })
}

fn run_lqr_actor_critic(task: &Task<'_>, cfg: &TrainerConfig) -> Result<ExperimentResult> {
    let (env, oracle) = match task {
        Task::Lqr { env, oracle } => (*env, *oracle),
        _ => unreachable!(),
    };
    let (ds, da) = (env.state_dim(), env.action_dim());
    let (model, mut params) = build_model(&cfg.model, ds, da, cfg.seed)?;
    let mut target_params = params.clone();
    let mut adam = AdamState::new(params.len());
    let mut actor = LinearActor::new(ds, da);
    let mut actor_tgt = actor.clone();
    let mut adam_actor = AdamState::new(ds * da);
    let mut replay = ReplayBuffer::new(cfg.replay_capacity)?;
    let mut rng_batch = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_batch.set_stream(1);
    let mut rng_explore = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_explore.set_stream(2);
    let mut rng_episode = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_episode.set_stream(3);

    let fresh_start = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..ds).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };

    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();
    let lqr_row = |step: usize, params: &FlatParams, actor: &LinearActor| -> Result<MetricsRow> {
        let frozen = FrozenCritic::new(&*model, params);
        Ok(MetricsRow {
            step,
            seed: cfg.seed,
            q_mse: lqr_q_mse(&frozen, env, oracle, MC_STARTS, LQR_EVAL_HALF_WIDTH)?,
            grad_a_mse: lqr_grad_a_mse(&frozen, env, oracle, MC_STARTS, LQR_EVAL_HALF_WIDTH)?,
            policy_err: lqr_policy_error(actor, oracle, MC_STARTS, LQR_EVAL_HALF_WIDTH)?,
            mc_return: lqr_mc_return(actor, env, MC_HORIZON, MC_STARTS, LQR_EVAL_HALF_WIDTH)?,
        })
    };
    metrics.push(lqr_row(0, &params, &actor)?);
    if cfg.checkpoint_steps.contains(&0) {
        checkpoints.push(Checkpoint {
            step: 0,
            params: params.clone(),
        });
    }

    let mut cur_s = fresh_start(&mut rng_episode);
    let mut steps_in_episode = 0usize;
    for t in 1..=cfg.total_steps {
        // Collect one exploratory transition.
        let mut a = actor.act(&cur_s);
        for av in &mut a {
            let noise: f64 = rng_explore.sample(StandardNormal);
            *av += cfg.explore_sigma * noise;
        }
        let rec = env.transition(&cur_s, &a)?;
        cur_s = rec.s_next.clone();
        replay.push(rec);
        steps_in_episode += 1;
        if steps_in_episode >= cfg.episode_len {
            cur_s = fresh_start(&mut rng_episode);
            steps_in_episode = 0;
        }

        if replay.len() >= cfg.batch_size {
            let idxs = replay.sample_indices(&mut rng_batch, cfg.batch_size);
            let batch: Vec<TransitionRecord> =
                idxs.iter().map(|&i| replay.get(i).clone()).collect();
            let targets: Vec<FirstOrderTarget> = {
                let frozen = FrozenCritic::new(&*model, &target_params);
                batch
                    .iter()
                    .map(|rec| {
                        let a_next = actor_tgt.act(&rec.s_next);
                        actor_target(&frozen, rec, env.gamma(), &a_next, actor_tgt.jacobian())
                    })
                    .collect::<Result<_>>()?
            };
            let (_, grad) = critic_update(&*model, &params, &batch, &targets, cfg, t)?;
            adam.step(params.values_mut(), &grad, cfg.lr)?;
            // Deterministic policy improvement against the online critic.
            let gas: Vec<Vec<f64>> = batch
                .iter()
                .map(|rec| {
                    let mu = actor.act(&rec.s);
                    let (_, _, ga) = eval_with_input_grads(&*model, &params, &rec.s, &mu)?;
                    Ok(ga)
                })
                .collect::<Result<_>>()?;
            let pairs: Vec<(&[f64], &[f64])> = batch
                .iter()
                .zip(&gas)
                .map(|(rec, ga)| (rec.s.as_slice(), ga.as_slice()))
                .collect();
            // Gradient ascent on the policy objective = Adam descent on its
            // negation, with the actor's own optimizer state.
            let neg_grad: Vec<f64> =
                actor.policy_gradient(&pairs).data().iter().map(|g| -g).collect();
            adam_actor.step(actor.gain_mut().data_mut(), &neg_grad, cfg.lr_actor)?;
            // Both target networks track their online counterparts.
            polyak_update(target_params.values_mut(), params.values(), cfg.polyak_rho)?;
            polyak_update(
                actor_tgt.gain_mut().data_mut(),
                actor.gain().data(),
                cfg.polyak_rho,
            )?;
        }

        if cfg.checkpoint_steps.contains(&t) {
            checkpoints.push(Checkpoint {
                step: t,
                params: params.clone(),
            });
        }
        if should_eval(t, cfg.total_steps, cfg.eval_every) {
            metrics.push(lqr_row(t, &params, &actor)?);
        }
    }
    let gain = actor.gain().clone();
    Ok(ExperimentResult {
        metrics,
        checkpoints,
        final_params: params,
        final_target_params: target_params,
        final_actor_gain: Some(gain),
    })
}
