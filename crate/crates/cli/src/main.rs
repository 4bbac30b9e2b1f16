use clap::Parser;

fn main() {
    let cli = posekit_cli::Cli::parse();
    if let Err(e) = posekit_cli::run(cli) {
        eprintln!("{}", posekit_cli::error_json(&e));
        std::process::exit(e.exit_code());
    }
}
