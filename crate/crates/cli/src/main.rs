use clap::Parser;
use hopod_tree_cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    let start = std::time::Instant::now();
    match run(&cli) {
        Ok(s) => {
            eprintln!("{} done in {:.2?}", s.command, start.elapsed());
            if let Some(v0) = s.v0 {
                println!("V0 = {v0:.12e}");
            }
            if let Some(gap) = s.cost_gap {
                println!("relative cost gap = {gap:.3e}");
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
