use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(renyi_cf::cli::main_with_args(std::env::args()) as u8)
}
