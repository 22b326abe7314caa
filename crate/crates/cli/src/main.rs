use clap::Parser;

fn main() {
    let cli = tonelli_cli::Cli::parse();
    let outcome = tonelli_cli::execute(&cli);
    println!("{}", outcome.report_json);
    std::process::exit(outcome.exit_code);
}
