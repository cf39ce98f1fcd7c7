use clap::Parser;

use climd_core::cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    if let Err(e) = execute(&cli, &mut stdout.lock()) {
        eprintln!("climd: {e}");
        std::process::exit(e.exit_code());
    }
}
