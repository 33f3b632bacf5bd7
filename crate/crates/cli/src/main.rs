use std::process::ExitCode;

fn main() -> ExitCode {
    let code = casemem_cli::run_cli(std::env::args().skip(1), &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code)
}
