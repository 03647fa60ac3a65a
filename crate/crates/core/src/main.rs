use std::process::ExitCode;

fn main() -> ExitCode {
    mcqa_uq::cli::main_with_args(std::env::args_os())
}
