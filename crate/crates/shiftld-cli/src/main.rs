use clap::Parser;

use shiftld_cli::cli::Cli;
use shiftld_cli::run::run;

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(footer) => {
            // artifacts already emitted; the footer goes where it cannot
            // corrupt a CSV stream
            if cli.out.is_some() {
                println!("{footer}");
            } else {
                eprintln!("{footer}");
            }
        }
        Err(failure) => {
            let footer = serde_json::json!({
                "status": "error",
                "reason": failure.reason,
                "exit_code": failure.code,
            });
            if cli.out.is_some() {
                println!("{footer}");
            } else {
                eprintln!("{footer}");
            }
            std::process::exit(failure.code);
        }
    }
}
