use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod manifest;

use args::{Cli, Command};

fn main() -> ExitCode {
    let argv = match args::expand_config(std::env::args().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("ttt: input error: {e:#}");
            return ExitCode::from(commands::Category::Input.exit_code());
        }
    };
    let cli = Cli::parse_from(argv);
    let name = cli.command.name();
    let result = match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::SelectSubset(a) => commands::select_subset(a),
        Command::Explain(a) => commands::explain(a),
        Command::CompareWords(a) => commands::compare_words(a),
        Command::Serve(a) => commands::serve(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ttt {name}: {}: {:#}", f.category.label(), f.error);
            ExitCode::from(f.category.exit_code())
        }
    }
}
