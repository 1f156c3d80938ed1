use std::process::ExitCode;

use clap::Parser;
use stokes_lab::cli::{error_line, log_level, run, Cli, ExperimentConfig};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match log_level(std::env::var("STOKES_LOG").ok().as_deref()) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::new().filter_level(level).init();

    let outcome = ExperimentConfig::from_cli(&cli).and_then(|cfg| run(cli.command, &cfg));
    match outcome {
        Ok(o) => {
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            if let Some(fit) = o.report.fit {
                println!(
                    "slope({}): {:.4} (residual {:.2e})",
                    o.report.fit_target, fit.slope, fit.residual
                );
            }
            for line in &o.report.summary {
                println!("{line}");
            }
            if o.success() {
                ExitCode::SUCCESS
            } else {
                eprintln!("SelftestFailed:{}", o.report.failures.join(","));
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(2)
        }
    }
}
