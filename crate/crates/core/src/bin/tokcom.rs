use clap::Parser;

fn main() {
    let cli = tokcom::cli::Cli::parse();
    if let Err(e) = tokcom::cli::run(&cli) {
        eprintln!("tokcom: {e}");
        std::process::exit(e.exit_code());
    }
}
