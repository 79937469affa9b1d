//! Plan execution: build the environment and its oracle once, fan the seed
//! plan out over worker threads, and write manifest plus CSV artifacts.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use sobolev_td::critic::{MlpCritic, QuadraticCritic};
use sobolev_td::diff::CriticModel;
use sobolev_td::env::{LqrEnv, Toy1dEnv};
use sobolev_td::eval::{aggregate_seeds, AggregateRow, MetricsRow};
use sobolev_td::linalg::Mat;
use sobolev_td::oracle::{riccati_solve, value_iteration_toy};
use sobolev_td::train::{
    run_experiment, ExperimentResult, Method, ModelKind, Task, TrainerConfig,
};

use crate::config::{
    manifest_text, CliError, CliOptions, CliResult, EnvId, METRICS_HEADER, SUMMARY_HEADER,
};
use crate::fmt_sig9;
use crate::slices::{dump_q_slices, SLICE_ACTION_GRID};

/// Oracle construction constants: value-iteration grid and residual bound,
/// and the Riccati fixed-point tolerance.
pub const ORACLE_GRID_NODES: usize = 1001;
pub const ORACLE_TOL: f64 = 1e-10;
pub const ORACLE_MAX_SWEEPS: usize = 1_000_000;
pub const RICCATI_TOL: f64 = 1e-14;

enum TaskBundle {
    Toy {
        env: Toy1dEnv,
        oracle: sobolev_td::oracle::GridSolution,
    },
    Lqr {
        env: LqrEnv,
        oracle: sobolev_td::oracle::RiccatiSolution,
    },
}

impl TaskBundle {
    fn task(&self) -> Task<'_> {
        match self {
            TaskBundle::Toy { env, oracle } => Task::Toy { env, oracle },
            TaskBundle::Lqr { env, oracle } => Task::Lqr { env, oracle },
        }
    }
}

fn build_task(opts: &CliOptions) -> CliResult<(TaskBundle, String)> {
    match opts.env {
        EnvId::Toy1d => {
            let env = Toy1dEnv::new(opts.gamma)?;
            let oracle =
                value_iteration_toy(ORACLE_GRID_NODES, opts.gamma, ORACLE_TOL, ORACLE_MAX_SWEEPS)?;
            let note = format!(
                "grid value iteration, {ORACLE_GRID_NODES} nodes, tol {ORACLE_TOL:e}, residual {:e}",
                oracle.residual
            );
            Ok((TaskBundle::Toy { env, oracle }, note))
        }
        EnvId::Lqr => {
            let one = || Mat::from_vec(1, 1, vec![1.0]);
            let env = LqrEnv::new(one(), one(), one(), one(), opts.gamma)?;
            let oracle = riccati_solve(&env, RICCATI_TOL, ORACLE_MAX_SWEEPS)?;
            let note = format!(
                "riccati fixed point, tol {RICCATI_TOL:e}, p {:.12}, k {:.12}",
                oracle.p[(0, 0)],
                oracle.k[(0, 0)]
            );
            Ok((TaskBundle::Lqr { env, oracle }, note))
        }
    }
}

fn trainer_config_for(
    opts: &CliOptions,
    model: ModelKind,
    method: Method,
    seed: u64,
    checkpoint_steps: Vec<usize>,
) -> TrainerConfig {
    let (lambda_s, lambda_a) = match method {
        Method::Baseline => (0.0, 0.0),
        Method::Sobolev => (opts.lambda_s, opts.lambda_a),
    };
    TrainerConfig {
        model,
        method,
        algo: opts.algo,
        loss_path: opts.loss_path,
        lambda_s,
        lambda_a,
        lr: opts.lr,
        lr_actor: opts.lr_actor,
        batch_size: opts.batch,
        total_steps: opts.steps,
        polyak_rho: opts.polyak_rho,
        warmup_steps: opts.warmup_steps,
        seed,
        grid_points: opts.grid_points,
        eval_every: opts.eval_every,
        checkpoint_steps,
        replay_capacity: opts.replay_capacity,
        explore_sigma: opts.explore_sigma,
        episode_len: opts.episode_len,
    }
}

/// Run `work` for every seed, at most `jobs` at a time, preserving plan
/// order in the returned vector.
fn run_seeds<F>(seeds: &[u64], jobs: usize, work: F) -> CliResult<Vec<ExperimentResult>>
where
    F: Fn(u64) -> CliResult<ExperimentResult> + Sync,
{
    if jobs <= 1 || seeds.len() <= 1 {
        return seeds.iter().map(|&s| work(s)).collect();
    }
    let slots: Vec<Mutex<Option<CliResult<ExperimentResult>>>> =
        seeds.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= seeds.len() {
                    break;
                }
                let result = work(seeds[i]);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("worker filled its slot"))
        .collect()
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step,
            r.seed,
            fmt_sig9(r.q_mse),
            fmt_sig9(r.grad_a_mse),
            fmt_sig9(r.policy_err),
            fmt_sig9(r.mc_return)
        ));
    }
    out
}

fn all_rows(results: &[ExperimentResult]) -> Vec<MetricsRow> {
    results
        .iter()
        .flat_map(|r| r.metrics.iter().cloned())
        .collect()
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// `run`: one (env, model, method) cell over the seed plan.
pub fn cmd_run(opts: &CliOptions) -> CliResult<()> {
    fs::create_dir_all(&opts.out)?;
    let (bundle, oracle_note) = build_task(opts)?;
    write(
        &opts.out.join("manifest.txt"),
        &manifest_text(opts, &oracle_note, unix_now()),
    )?;
    let seeds = opts.effective_seeds();
    let results = run_seeds(&seeds, opts.jobs, |seed| {
        let cfg = trainer_config_for(opts, opts.model.clone(), opts.method, seed, Vec::new());
        run_experiment(&bundle.task(), &cfg).map_err(CliError::from)
    })?;
    let metrics_path = opts.out.join("metrics.csv");
    write(&metrics_path, &metrics_csv(&all_rows(&results)))?;
    println!(
        "run complete: {} seed(s), metrics -> {}",
        seeds.len(),
        metrics_path.display()
    );
    Ok(())
}

fn summary_line(model: &str, method: &str, agg: &AggregateRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        model,
        method,
        fmt_sig9(agg.q_mse_mean),
        fmt_sig9(agg.q_mse_std),
        fmt_sig9(agg.grad_a_mse_mean),
        fmt_sig9(agg.grad_a_mse_std),
        fmt_sig9(agg.policy_err_mean),
        fmt_sig9(agg.policy_err_std)
    )
}

/// `table1`: all four (model x method) cells on the 1-d task; per-cell
/// metrics files plus a four-row summary of the final evaluation.
pub fn cmd_table1(opts: &CliOptions) -> CliResult<()> {
    fs::create_dir_all(&opts.out)?;
    let (bundle, oracle_note) = build_task(opts)?;
    write(
        &opts.out.join("manifest.txt"),
        &manifest_text(opts, &oracle_note, unix_now()),
    )?;
    let seeds = opts.effective_seeds();
    let cells = [
        (ModelKind::Quadratic, "quadratic", Method::Baseline, "baseline"),
        (ModelKind::Quadratic, "quadratic", Method::Sobolev, "sobolev"),
        (
            ModelKind::Mlp {
                hidden: crate::config::MLP_HIDDEN.to_vec(),
            },
            "mlp",
            Method::Baseline,
            "baseline",
        ),
        (
            ModelKind::Mlp {
                hidden: crate::config::MLP_HIDDEN.to_vec(),
            },
            "mlp",
            Method::Sobolev,
            "sobolev",
        ),
    ];
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for (model, model_name, method, method_name) in cells {
        let results = run_seeds(&seeds, opts.jobs, |seed| {
            let cfg = trainer_config_for(opts, model.clone(), method, seed, Vec::new());
            run_experiment(&bundle.task(), &cfg).map_err(CliError::from)
        })?;
        let rows = all_rows(&results);
        write(
            &opts
                .out
                .join(format!("metrics_{model_name}_{method_name}.csv")),
            &metrics_csv(&rows),
        )?;
        let aggregates = aggregate_seeds(&rows)?;
        let last = aggregates
            .last()
            .ok_or_else(|| CliError::Runtime("no evaluation rows to aggregate".to_string()))?;
        summary.push_str(&summary_line(model_name, method_name, last));
        summary.push('\n');
        println!(
            "table1 cell {model_name}/{method_name}: final q_mse {} grad_a_mse {} policy_err {}",
            fmt_sig9(last.q_mse_mean),
            fmt_sig9(last.grad_a_mse_mean),
            fmt_sig9(last.policy_err_mean)
        );
    }
    let summary_path = opts.out.join("summary.csv");
    write(&summary_path, &summary)?;
    println!("table1 complete: summary -> {}", summary_path.display());
    Ok(())
}

fn build_eval_model(kind: &ModelKind) -> CliResult<Box<dyn CriticModel>> {
    match kind {
        ModelKind::Quadratic => Ok(Box::new(QuadraticCritic::new())),
        ModelKind::Mlp { hidden } => Ok(Box::new(MlpCritic::new(1, 1, hidden)?)),
    }
}

/// `slices`: for each seed, train the gradient-matching and value-only
/// variants from the same initialisation and dump Q slices at the
/// checkpointed steps.
pub fn cmd_slices(opts: &CliOptions) -> CliResult<()> {
    fs::create_dir_all(&opts.out)?;
    let (bundle, oracle_note) = build_task(opts)?;
    let TaskBundle::Toy { oracle, .. } = &bundle else {
        return Err(CliError::Usage("slices is defined on env toy1d".to_string()));
    };
    write(
        &opts.out.join("manifest.txt"),
        &manifest_text(opts, &oracle_note, unix_now()),
    )?;
    let mut ckpt_steps = opts.slice_steps.clone();
    ckpt_steps.sort_unstable();
    ckpt_steps.dedup();
    let eval_model = build_eval_model(&opts.model)?;
    for &seed in &opts.effective_seeds() {
        let leg = |method: Method| -> CliResult<ExperimentResult> {
            let cfg = trainer_config_for(opts, opts.model.clone(), method, seed, ckpt_steps.clone());
            run_experiment(&bundle.task(), &cfg).map_err(CliError::from)
        };
        let sob = leg(Method::Sobolev)?;
        let base = leg(Method::Baseline)?;
        let csv = dump_q_slices(
            &*eval_model,
            &sob.checkpoints,
            &base.checkpoints,
            oracle,
            &opts.slice_states,
            &opts.slice_steps,
            SLICE_ACTION_GRID,
        )?;
        let path = opts.out.join(format!("slices_seed{seed}.csv"));
        write(&path, &csv)?;
        println!("slices seed {seed} -> {}", path.display());
    }
    println!("slices complete: {} seed(s)", opts.seeds);
    Ok(())
}
