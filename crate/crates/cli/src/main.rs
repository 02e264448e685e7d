use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(delayinv_cli::run(std::env::args_os()))
}
