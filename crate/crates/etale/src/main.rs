use std::process::ExitCode;

fn main() -> ExitCode {
    etale::cli::run()
}
