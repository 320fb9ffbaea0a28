use std::io::Write;

use clap::Parser;

fn main() {
    let cli = ranknet_cli::Cli::parse();
    match ranknet_cli::run(cli) {
        Ok(out) => {
            if !out.is_empty() {
                let _ = writeln!(std::io::stdout(), "{out}");
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
