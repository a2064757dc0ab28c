use std::process::ExitCode;

fn main() -> ExitCode {
    dirtysim::cli::main()
}
