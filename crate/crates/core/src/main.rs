use std::process::ExitCode;

fn main() -> ExitCode {
    microdoppler::cli::main()
}
