use clap::Parser;

fn main() {
    let cli = lenspec::cli::Cli::parse();
    std::process::exit(lenspec::cli::run(cli));
}
