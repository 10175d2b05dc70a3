use clap::Parser;
use pairwise_cli::{run, Cli};

fn main() {
    match run(Cli::parse()) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("pairwise: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
