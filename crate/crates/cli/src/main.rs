use clap::Parser;

fn main() {
    let cli = coreset_cli::Cli::parse();
    if let Err(err) = coreset_cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(coreset_cli::exit_code(&err));
    }
}
