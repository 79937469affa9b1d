//! Command-line experiment runner: seeded training plans over
//! {baseline, sobolev} x {quadratic, mlp} x {toy1d, lqr}, with CSV metrics,
//! summary tables, and Q-slice dumps.

pub mod config;
pub mod runner;
pub mod slices;

pub use config::{
    help_text, parse_cli, parse_cli_with_offset, CliError, CliOptions, CliResult, Command,
    EnvId, Parsed, METRICS_HEADER, SEED_OFFSET_VAR, SLICES_HEADER, SUMMARY_HEADER,
};
pub use runner::{cmd_run, cmd_slices, cmd_table1};
pub use slices::dump_q_slices;

/// CSV float formatting: nine significant digits, stable across runs.
pub(crate) fn fmt_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Parse an invocation and execute it.
pub fn run_cli(args: &[String]) -> CliResult<()> {
    match parse_cli(args)? {
        Parsed::Help => {
            print!("{}", help_text());
            Ok(())
        }
        Parsed::Options(opts) => match opts.command {
            Command::Run => cmd_run(&opts),
            Command::Table1 => cmd_table1(&opts),
            Command::Slices => cmd_slices(&opts),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_sig9;

    #[test]
    fn float_format_is_nine_significant_digits() {
        assert_eq!(fmt_sig9(0.0105), "1.05000000e-2");
        assert_eq!(fmt_sig9(0.0), "0.00000000e0");
        assert_eq!(fmt_sig9(-123456789.0), "-1.23456789e8");
        assert_eq!(fmt_sig9(1.0), "1.00000000e0");
    }
}
