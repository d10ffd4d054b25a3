use clap::Parser;

fn main() {
    let cli = ldlearn_cli::Cli::parse();
    match ldlearn_cli::execute(cli) {
        Ok(paths) => {
            for path in paths {
                println!("wrote {}", path.display());
            }
        }
        Err(err) => {
            eprintln!("{err}");
            std::process::exit(err.exit_code());
        }
    }
}
