use clap::Parser;
use polmem_cli::Cli;

fn main() {
    let cli = Cli::parse();
    match polmem_cli::run(&cli) {
        Ok(report) => print!("{report}"),
        Err(e) => {
            eprintln!("polmem: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
