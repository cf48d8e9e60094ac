use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use holodyn::experiment_harness::{
    build_scenario, holonomy_csv, load_config, resolve_out_dir, run_config, sweep_context,
    verify_invariants, EXIT_CRITERION, EXIT_INVARIANT, EXIT_OK, EXIT_SCHEMA,
};

#[derive(Parser)]
#[command(name = "holodyn", version, about = "Reservoir-driven holonomy simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a config and write CSVs plus a report.
    Run {
        config: PathBuf,
        /// Output directory (falls back to $HOLODYN_OUT, then ./holodyn_out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for gammaT sweeps.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// RNG seed for randomized invariant checks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute only the Wilson-loop holonomy of a config's scenario.
    Holonomy { config: PathBuf },
    /// Run the structural invariant suite over the built-in scenarios.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            seed,
        } => run_config(&config, out.as_deref(), jobs, seed),
        Command::Holonomy { config } => holonomy_only(&config),
        Command::Verify { seed } => verify(seed),
    };
    ExitCode::from(code as u8)
}

fn holonomy_only(config: &std::path::Path) -> i32 {
    let result = load_config(config)
        .and_then(|cfg| build_scenario(&cfg))
        .and_then(sweep_context);
    match result {
        Ok(ctx) => {
            print!("{}", holonomy_csv(&[(0, &ctx.holonomy)]));
            // Persist only when an output directory was asked for.
            if std::env::var("HOLODYN_OUT").map_or(false, |v| !v.is_empty()) {
                let out = resolve_out_dir(None);
                if std::fs::create_dir_all(&out).is_ok() {
                    let _ =
                        std::fs::write(out.join("holonomy.csv"), holonomy_csv(&[(0, &ctx.holonomy)]));
                }
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                holodyn::HolodynError::Config(_)
                | holodyn::HolodynError::InvalidParameter(_)
                | holodyn::HolodynError::Io(_) => EXIT_SCHEMA,
                _ => EXIT_INVARIANT,
            }
        }
    }
}

fn verify(seed: u64) -> i32 {
    match verify_invariants(seed) {
        Ok(checks) => {
            let mut all_ok = true;
            for chk in &checks {
                println!(
                    "[{}] {}: value {:.3e} vs {}",
                    if chk.passed { "PASS" } else { "FAIL" },
                    chk.name,
                    chk.value,
                    chk.threshold
                );
                all_ok &= chk.passed;
            }
            if all_ok {
                EXIT_OK
            } else {
                EXIT_CRITERION
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVARIANT
        }
    }
}
