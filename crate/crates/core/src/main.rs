use std::process::ExitCode;

fn main() -> ExitCode {
    alternator::harness::cli::main_with_args(std::env::args_os())
}
