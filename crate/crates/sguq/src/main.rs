use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = sguq::cli::Cli::parse();
    std::process::exit(sguq::cli::run(cli));
}
