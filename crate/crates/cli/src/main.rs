use std::io::{self, Write};
use std::process::ExitCode;

use brp_cfo_cli::{run, Cli, CliError};
use clap::error::ErrorKind;
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            return fail(&CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    match run(&cli) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("JSON values serialise");
            let _ = writeln!(io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    let _ = writeln!(io::stderr().lock(), "{}", e.to_json_line());
    ExitCode::from(e.exit_code())
}
