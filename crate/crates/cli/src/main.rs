use std::io::Write;

use clap::Parser;
use ncert_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let outcome = run(cli.command);
    let mut stdout = std::io::stdout().lock();
    // a closed pipe is not worth a panic
    let _ = stdout.write_all(outcome.stdout.as_bytes());
    let _ = stdout.flush();
    std::process::exit(outcome.code);
}
