use clap::Parser;

fn main() {
    let cli = drdml_cli::Cli::parse();
    std::process::exit(drdml_cli::run(&cli));
}
