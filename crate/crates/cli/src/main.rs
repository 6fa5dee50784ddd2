use clap::Parser;

fn main() {
    let cli = forge_cli::Cli::parse();
    if let Err(err) = forge_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(forge_cli::exit_code(&err));
    }
}
