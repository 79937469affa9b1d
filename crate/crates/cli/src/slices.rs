//! Q-slice dumps: for chosen checkpoints and states, tabulate the learned
//! critics from a gradient-matching run and a value-only run against the
//! exact Q*, over a fixed action grid.

use sobolev_td::diff::CriticModel;
use sobolev_td::oracle::{linspace, q_star_eval, GridSolution};
use sobolev_td::train::Checkpoint;

use crate::config::{CliError, CliResult, SLICES_HEADER};
use crate::fmt_sig9;

/// Action-grid resolution for slice dumps.
pub const SLICE_ACTION_GRID: usize = 201;

fn checkpoint_at<'a>(
    ckpts: &'a [Checkpoint],
    step: usize,
    label: &str,
) -> CliResult<&'a Checkpoint> {
    ckpts.iter().find(|c| c.step == step).ok_or_else(|| {
        CliError::Runtime(format!("no {label} checkpoint at step {step}"))
    })
}

/// Render the slice CSV. Both checkpoint lists must cover every requested
/// step; rows are ordered by (step, state, action).
pub fn dump_q_slices(
    model: &dyn CriticModel,
    sobolev: &[Checkpoint],
    baseline: &[Checkpoint],
    oracle: &GridSolution,
    states: &[f64],
    steps: &[usize],
    n_actions: usize,
) -> CliResult<String> {
    let actions = linspace(-1.0, 1.0, n_actions);
    let mut out = String::from(SLICES_HEADER);
    out.push('\n');
    for &step in steps {
        let sob = checkpoint_at(sobolev, step, "sobolev")?;
        let base = checkpoint_at(baseline, step, "baseline")?;
        for &s in states {
            let q_sob = model.value_action_scan(&sob.params, &[s], &actions);
            let q_base = model.value_action_scan(&base.params, &[s], &actions);
            for (j, &a) in actions.iter().enumerate() {
                let q_star = q_star_eval(oracle, s, a)?;
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    step,
                    fmt_sig9(s),
                    fmt_sig9(a),
                    fmt_sig9(q_sob[j]),
                    fmt_sig9(q_base[j]),
                    fmt_sig9(q_star)
                ));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sobolev_td::critic::QuadraticCritic;
    use sobolev_td::diff::FlatParams;
    use sobolev_td::oracle::value_iteration_toy;

    fn zero_ckpt(model: &QuadraticCritic, step: usize) -> Checkpoint {
        Checkpoint {
            step,
            params: model.init_params(),
        }
    }

    fn known_ckpt(model: &QuadraticCritic, step: usize, theta: &[f64; 6]) -> Checkpoint {
        Checkpoint {
            step,
            params: FlatParams::from_values(model.layout().clone(), theta.to_vec()).unwrap(),
        }
    }

    #[test]
    fn star_column_matches_oracle_and_zero_critic_dumps_zeros() {
        let oracle = value_iteration_toy(401, 0.9, 1e-10, 100_000).unwrap();
        let model = QuadraticCritic::new();
        let ck_s = vec![zero_ckpt(&model, 0)];
        let ck_b = vec![zero_ckpt(&model, 0)];
        let csv = dump_q_slices(&model, &ck_s, &ck_b, &oracle, &[0.0], &[0], 5).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), SLICES_HEADER);
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 5);
        for (j, row) in rows.iter().enumerate() {
            assert_eq!(row[0], "0");
            let a = -1.0 + j as f64 * 0.5;
            assert_eq!(row[2].parse::<f64>().unwrap(), a);
            // Learned columns are exactly zero for the zero-initialised critic.
            assert_eq!(row[3].parse::<f64>().unwrap(), 0.0);
            assert_eq!(row[4].parse::<f64>().unwrap(), 0.0);
            let want = q_star_eval(&oracle, 0.0, a).unwrap();
            let got: f64 = row[5].parse().unwrap();
            assert!(
                (got - want).abs() <= want.abs().max(1.0) * 1e-8,
                "q_star column {got} vs oracle {want}"
            );
        }
    }

    #[test]
    fn missing_checkpoint_error_names_the_step_and_run() {
        let oracle = value_iteration_toy(101, 0.9, 1e-8, 100_000).unwrap();
        let model = QuadraticCritic::new();
        let ck = vec![zero_ckpt(&model, 200)];
        let err =
            dump_q_slices(&model, &ck, &ck, &oracle, &[0.0], &[400], 3).unwrap_err();
        match err {
            CliError::Runtime(m) => assert!(m.contains("400") && m.contains("sobolev"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn learned_columns_come_from_their_own_checkpoints() {
        let oracle = value_iteration_toy(101, 0.9, 1e-8, 100_000).unwrap();
        let model = QuadraticCritic::new();
        // Q_sob = 1 + a, Q_base = -2 exactly.
        let ck_s = vec![known_ckpt(&model, 7, &[1.0, 0.0, 1.0, 0.0, 0.0, 0.0])];
        let ck_b = vec![known_ckpt(&model, 7, &[-2.0, 0.0, 0.0, 0.0, 0.0, 0.0])];
        let csv = dump_q_slices(&model, &ck_s, &ck_b, &oracle, &[0.5], &[7], 3).unwrap();
        let rows: Vec<Vec<String>> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        let a_vals = [-1.0, 0.0, 1.0];
        for (row, a) in rows.iter().zip(a_vals) {
            assert_eq!(row[3].parse::<f64>().unwrap(), 1.0 + a);
            assert_eq!(row[4].parse::<f64>().unwrap(), -2.0);
        }
    }
}
