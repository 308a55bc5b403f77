use std::process::ExitCode;

fn main() -> ExitCode {
    powerscale::cli::main()
}
