use clap::Parser;

use gridcascade::cli::{execute, Cli};

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    std::process::exit(execute(cli));
}
