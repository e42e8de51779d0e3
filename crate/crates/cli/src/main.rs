use clap::Parser;

use irtcat_cli::{run, Cli};

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    if let Err(e) = run(cli, argv) {
        eprintln!("irtcat: {e}");
        std::process::exit(e.exit_code());
    }
}
