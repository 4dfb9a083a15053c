use std::process::ExitCode;

use clap::Parser;
use log::error;

use ordemb_cli::{cmd_evaluate, cmd_generate, cmd_train, exit_code, report_json, Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();

    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args).map(|m| {
            println!("{}", serde_json::to_string_pretty(&m).expect("serializable"));
            0
        }),
        Command::Train(args) => cmd_train(args).map(|summary| {
            for row in &summary.aggregate {
                println!("epoch {:>3}  evals {:>9}  median error {:.4}", row.epoch, row.grad_evals, row.median);
            }
            let failed = summary.failed();
            if failed > 0 {
                error!("{failed} of {} trials failed", summary.trials.len());
                3
            } else {
                0
            }
        }),
        Command::Evaluate(args) => cmd_evaluate(args).map(|report| {
            println!("{}", report_json(&report));
            0
        }),
    };

    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
