use clap::Parser;

fn main() {
    let cli = vpsep::cli::Cli::parse();
    std::process::exit(vpsep::cli::main_with(cli));
}
