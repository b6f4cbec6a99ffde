use clap::Parser;
use sjlt::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
