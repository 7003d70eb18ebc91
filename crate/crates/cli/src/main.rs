use clap::Parser;

fn main() {
    let cli = codat_cli::Cli::parse();
    if let Err(e) = codat_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
