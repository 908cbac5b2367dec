mod args;
mod commands;
mod exit;

use clap::Parser;

fn main() {
    let cli = args::Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp_secs()
        .init();
    let code = match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit::code(&e)
        }
    };
    std::process::exit(code);
}
