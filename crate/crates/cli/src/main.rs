use std::process::ExitCode;

use clap::Parser;
use riskcore::Error;
use riskcore_cli::{dispatch, exit_code, Cli, Format};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(result) => {
            match cli.format {
                Format::Text => println!("{}", result.summary),
                Format::Json => println!("{}", serde_json::to_string_pretty(&result.document).expect("json value")),
            }
            ExitCode::from(result.exit_code)
        }
        Err(err) => {
            if let (Format::Json, Some(Error::Validation(report))) = (cli.format, err.downcast_ref::<Error>()) {
                println!("{}", serde_json::to_string_pretty(report).expect("json value"));
            }
            eprintln!("error: {err:#}");
            if let Some(Error::Validation(report)) = err.downcast_ref::<Error>() {
                for v in &report.violations {
                    eprintln!("  {}: {} ({})", v.entity_id, v.message, v.relation);
                }
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
