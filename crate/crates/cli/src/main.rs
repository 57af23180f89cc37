use clap::Parser;
use lockwalk::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => print!("{summary}"),
        Err(e) => {
            eprintln!("lockwalk: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
