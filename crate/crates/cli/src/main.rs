use clap::Parser;

use pasolve::commands::Status;
use pasolve::{run, Cli};

fn main() {
    // Usage errors exit with 1: status 2 is reserved for unresolved solver outcomes.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if outcome.status == Status::Ambiguous {
                eprintln!("pasolve: solver reported an unresolved outcome (see the JSON summary)");
            }
            std::process::exit(outcome.status.exit_code());
        }
        Err(e) => {
            eprintln!("pasolve: {e}");
            std::process::exit(1);
        }
    }
}
