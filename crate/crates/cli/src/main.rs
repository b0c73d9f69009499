mod cli;
mod manifest;
mod run;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use cli::{Cli, Command};
use run::RunContext;

fn dispatch(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build_global()?;
    let ctx = RunContext { out_dir: cli.out_dir, threads: cli.threads.max(1) };
    match &cli.command {
        Command::Preprocess(a) => run::preprocess(&ctx, a),
        Command::Train(a) => run::train_cmd(&ctx, a),
        Command::Sample(a) => run::sample_cmd(&ctx, a),
        Command::Eval(a) => run::eval(&ctx, a),
        Command::Phenotype(a) => run::phenotype(&ctx, a),
        Command::Assoc(a) => run::assoc(&ctx, a),
        Command::Gwas(a) => run::gwas(&ctx, a),
        Command::Grr(a) => run::grr(&ctx, a),
        Command::Accountant(a) => run::accountant(&ctx, a),
        Command::Sweep(a) => run::sweep(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
