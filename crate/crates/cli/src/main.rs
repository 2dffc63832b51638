use clap::Parser;

fn main() {
    let cli = mfvi_cli::Cli::parse();
    std::process::exit(mfvi_cli::run(&cli));
}
