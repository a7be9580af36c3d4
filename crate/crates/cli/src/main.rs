use clap::Parser;

fn main() {
    let cli = genac_cli::Cli::parse();
    match genac_cli::execute(cli) {
        Ok(out) => println!("{out}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
