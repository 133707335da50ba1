use clap::Parser;
use ember_core::cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = execute(cli) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
