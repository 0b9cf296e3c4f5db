use std::process::ExitCode;

use clap::Parser;
use genea_sel_cli::config::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match genea_sel_cli::run(&cli) {
        Ok(report) => {
            for g in &report.gates {
                println!("{} {}: {}", if g.pass { "PASS" } else { "FAIL" }, g.name, g.detail);
            }
            println!("output: {}", report.out.display());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
