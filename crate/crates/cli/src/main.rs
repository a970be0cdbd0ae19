use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sl2c_cli::{
    diagnostics, run_sweep, sweep_exit_code, verify, write_csv, CliError, GridSpec, VerifyArgs,
    BUDGET_ENV,
};

#[derive(Parser)]
#[command(
    name = "sl2c",
    version,
    about = "Numerical verification of SL(2,C) separation-of-variables identities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite.
    Verify {
        /// specfun, relations, sov, gustafson, mb or all
        suite: String,
        /// Case file replacing the shipped cases.
        #[arg(long)]
        case: Option<PathBuf>,
        /// Relative deviation target overriding every case.
        #[arg(long)]
        target: Option<f64>,
        /// Evaluation cap per case (overrides config and environment).
        #[arg(long)]
        budget: Option<u64>,
        /// JSON-lines report path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Zero the wall-clock fields for byte-identical reruns.
        #[arg(long)]
        no_timestamps: bool,
        /// Only cases with this chain length.
        #[arg(long = "N")]
        n: Option<usize>,
        /// Only cases of this identity.
        #[arg(long)]
        which: Option<String>,
        /// TOML or JSON configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Include cases marked slow.
        #[arg(long)]
        slow: bool,
        /// Worker threads.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Evaluate an identity over a parameter grid and write a CSV.
    Sweep {
        /// t_regularization or gustafson_n_max
        identity: String,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Verify {
            suite,
            case,
            target,
            budget,
            report,
            no_timestamps,
            n,
            which,
            config,
            slow,
            workers,
        } => {
            let args = VerifyArgs {
                suite,
                case,
                target,
                budget,
                report,
                no_timestamps,
                n,
                which,
                config,
                slow,
                workers,
            };
            let env = std::env::var(BUDGET_ENV).ok();
            let out = verify(&args, env.as_deref())?;
            print!("{}", out.summary);
            eprint!("{}", diagnostics(&out.reports));
            Ok(out.code)
        }
        Command::Sweep {
            identity,
            grid,
            out,
        } => {
            let spec = GridSpec::load(&identity, &grid)?;
            let res = run_sweep(&spec)?;
            write_csv(&out, &res.rows)?;
            println!(
                "{} grid points written to {}",
                res.rows.len(),
                out.display()
            );
            if !res.note.is_empty() {
                println!("{}", res.note);
            }
            Ok(sweep_exit_code(&res.rows))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    ExitCode::from(code as u8)
}
