use clap::Parser;

fn main() {
    let cli = cr_sim::cli::Cli::parse();
    std::process::exit(cr_sim::cli::run(cli));
}
