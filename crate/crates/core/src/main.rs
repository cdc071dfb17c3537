use std::process::ExitCode;

fn main() -> ExitCode {
    phasehyst::cli::main_with(std::env::args_os()).into()
}
