use std::path::PathBuf;
use std::process::ExitCode;

use aopt::commands::{output_dir, run, Command, Options, OUT_ENV};
use aopt::config::RunConfig;
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Forward,
    Adjoint,
    Gradcheck,
    Taylor,
    Optimize,
    Energy,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Forward => Command::Forward,
            Cmd::Adjoint => Command::Adjoint,
            Cmd::Gradcheck => Command::Gradcheck,
            Cmd::Taylor => Command::Taylor,
            Cmd::Optimize => Command::Optimize,
            Cmd::Energy => Command::Energy,
        }
    }
}

/// Westervelt-plate optimal control and shape optimization.
#[derive(Debug, Parser)]
#[command(name = "aopt", version)]
struct Cli {
    /// Pipeline to run.
    #[arg(value_enum)]
    command: Cmd,
    /// INI run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for finite-difference probes and line-search trials.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory (falls back to $AOPT_OUT, then the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue `optimize` from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let command = Command::from(cli.command);
    let result = RunConfig::load(&cli.config).and_then(|cfg| {
        let env = std::env::var(OUT_ENV).ok();
        let opts = Options {
            jobs: cli.jobs,
            out: output_dir(cli.out.as_deref(), env.as_deref(), &cfg),
            resume: cli.resume,
        };
        run(command, &cfg, &opts)
    });
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("aopt {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
