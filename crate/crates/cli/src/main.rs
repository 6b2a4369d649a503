use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = vamzls::Cli::parse();
    let code = vamzls::run(cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    ExitCode::from(code)
}
