use std::io::{self, Write};
use std::process;

use absnorm_cli::{run, Cli};
use clap::Parser;

fn main() {
    let cli = Cli::parse();
    let (report, code) = match run(cli) {
        Ok(report) => (Some(report), 0),
        Err(e) => {
            eprintln!("absnorm: {e}");
            (e.report, e.code as i32)
        }
    };
    if let Some(r) = report {
        // a closed pipe is not worth a panic
        let _ = writeln!(io::stdout(), "{r}");
    }
    process::exit(code);
}
