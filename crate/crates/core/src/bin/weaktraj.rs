use clap::Parser;

fn main() {
    let cli = weaktraj::cli::Cli::parse();
    if let Err(e) = weaktraj::cli::run(cli) {
        eprintln!("weaktraj: {e}");
        std::process::exit(e.exit_code());
    }
}
