use clap::Parser;
use jamloc_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("JAMLOC_LOG", "info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("jamloc: error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
        std::process::exit(1);
    }
}
