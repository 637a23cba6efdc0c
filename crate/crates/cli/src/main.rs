use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(closedform_cli::run_from_args(std::env::args_os()))
}
