use clap::Parser;

fn main() {
    let cli = opfact_cli::Cli::parse();
    let code = opfact_cli::run(&cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
