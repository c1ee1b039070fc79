use clap::Parser;
use septensor::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
