use clap::Parser;

fn main() {
    let cli = nn2dt_cli::Cli::parse();
    if let Err(f) = nn2dt_cli::run(cli) {
        eprintln!("error: {}", f.message);
        std::process::exit(f.code);
    }
}
