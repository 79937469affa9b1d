fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let Err(e) = sobolev_td_cli::run_cli(&args) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
