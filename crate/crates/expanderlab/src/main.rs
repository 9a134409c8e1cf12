use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(expanderlab::cli::run())
}
