use clap::Parser;

fn main() {
    let cfg = lwstream::cli::RunConfig::parse();
    let stdout = std::io::stdout();
    if let Err(e) = lwstream::cli::run(&cfg, &mut stdout.lock()) {
        eprintln!("lwstream: {e}");
        std::process::exit(e.exit_code());
    }
}
