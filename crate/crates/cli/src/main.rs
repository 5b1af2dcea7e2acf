use clap::Parser;

use tcmap::cli::Cli;
use tcmap::stages::run_stage;

fn main() {
    let cli = Cli::parse();
    let config = match cli.overrides.resolve() {
        Ok(config) => config,
        Err(error) => exit_with(error),
    };
    match run_stage(cli.command.stage(), &config) {
        Ok(reports) => {
            for report in reports {
                println!("{report}");
                for warning in &report.warnings {
                    eprintln!("warning [{}]: {warning}", report.stage);
                }
            }
        }
        Err(error) => exit_with(error),
    }
}

fn exit_with(error: tcmap::PipelineError) -> ! {
    eprintln!("{}", error.machine_line());
    std::process::exit(error.exit_code());
}
