use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fracch::config::parse_config;
use fracch::experiments::{exit_code, run_equilibrium, run_rates, run_simulate, run_spectrum, run_verify};

#[derive(Parser)]
#[command(name = "fracch", version, about = "Fractional Cahn-Hilliard solver and property checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the initial datum, writing the trajectory and certificates.
    Simulate(Common),
    /// Solve for a stationary state and analyze its linearization.
    Equilibrium(Common),
    /// Run the property suite.
    Verify(Common),
    /// Write pencil eigenvalues.
    Spectrum(Common),
    /// Fit the energy decay of a previous simulate/equilibrium pair.
    Rates(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Simulate(c)
        | Command::Equilibrium(c)
        | Command::Verify(c)
        | Command::Spectrum(c)
        | Command::Rates(c) => c,
    };
    let result = parse_config(&common.config).and_then(|cfg| {
        let out = cfg.output_dir(common.out.as_deref());
        match &cli.command {
            Command::Simulate(_) => run_simulate(&cfg, &out).map(|s| {
                println!("simulate: {} steps, final energy {:.12e}", s.steps, s.final_energy)
            }),
            Command::Equilibrium(_) => run_equilibrium(&cfg, &out).map(|s| {
                println!(
                    "equilibrium: residual {:.3e}, linf {:.6}, kernel_dim {}",
                    s.report.residual_dual, s.report.linf, s.report.kernel_dim
                )
            }),
            Command::Verify(_) => run_verify(&cfg, &out).map(|_| println!("verify: all checks passed")),
            Command::Spectrum(_) => run_spectrum(&cfg, &out)
                .map(|s| println!("spectrum: lambda1(s) {:.10}, lambda1(sigma) {:.10}", s.lambda1_s, s.lambda1_sigma)),
            Command::Rates(_) => run_rates(&cfg, &out).map(|f| {
                println!("rates: {:?} mode, rate {:.6}, r^2 {:.6}", f.mode, f.rate, f.r_squared)
            }),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
