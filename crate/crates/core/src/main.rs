use std::process::ExitCode;

use genbench::cli::{run_from_args, LOG_ENV};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let code = run_from_args(std::env::args_os());
    ExitCode::from(code as u8)
}
