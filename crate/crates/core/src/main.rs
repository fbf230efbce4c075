use std::process::ExitCode;

fn main() -> ExitCode {
    headstart::cli::run(std::env::args_os())
}
