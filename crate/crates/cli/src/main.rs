use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(eotrack_cli::run(std::env::args_os()))
}
