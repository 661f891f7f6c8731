use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gfield_cli::{run, Command, EngineName, Invocation};

#[derive(Parser)]
#[command(name = "gfield", version, about = "Sublinear expectations of spatial and spatial-temporal G-white noise")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// JSON job configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for result files; results go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    engine: Option<EngineName>,
    /// Report runtime_ms as 0 so that repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Subcommand)]
enum Sub {
    /// Upper and lower expectations of payoffs of the field over regions.
    Expect(Common),
    /// Same as `expect` with the dynamic-programming oracle.
    Oracle(Common),
    /// Expectations of stochastic integrals of piecewise-constant integrands.
    Integrate(Common),
    /// Expectations and conditional expectations on a layered model.
    StExpect(Common),
    /// Stochastic integral of a simple adapted process and its property suite.
    StIntegral(Common),
    /// Sample paths of the field on a lattice.
    Simulate(Common),
    /// Property suites.
    Check {
        #[command(flatten)]
        common: Common,
        /// Run every suite.
        #[arg(long)]
        all: bool,
    },
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("GFIELD_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        // an already-initialised pool is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cli = Cli::parse();
    let (command, common, all) = match cli.command {
        Sub::Expect(c) => (Command::Expect, c, false),
        Sub::Oracle(c) => (Command::Oracle, c, false),
        Sub::Integrate(c) => (Command::Integrate, c, false),
        Sub::StExpect(c) => (Command::StExpect, c, false),
        Sub::StIntegral(c) => (Command::StIntegral, c, false),
        Sub::Simulate(c) => (Command::Simulate, c, false),
        Sub::Check { common, all } => (Command::Check, common, all),
    };
    let invocation = Invocation {
        command,
        config: common.config,
        seed: common.seed,
        engine: common.engine,
        all,
        timing: !common.no_timing,
    };
    let result = run(&invocation).and_then(|artifact| match &common.out {
        Some(dir) => {
            let path = artifact.write_to(dir)?;
            println!("{}", path.display());
            Ok(())
        }
        None => {
            print!("{}", artifact.content);
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
