use clap::Parser;

use dcohinf::cli::{run, Cli, LOG_ENV};

fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    let code = run(&cli, &mut std::io::stdout().lock());
    std::process::ExitCode::from(code.code())
}
