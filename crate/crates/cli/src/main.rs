use std::process::ExitCode;

fn main() -> ExitCode {
    querytag_cli::cli::run(std::env::args_os())
}
