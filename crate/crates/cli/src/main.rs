use clap::Parser;

use gnsfde_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("{}", e.json_line());
            std::process::exit(e.exit_code());
        }
    }
}
