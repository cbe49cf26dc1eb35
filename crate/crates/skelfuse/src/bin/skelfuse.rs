use std::process::ExitCode;

fn main() -> ExitCode {
    skelfuse::cli::main()
}
