//! Command-line front end: run a scenario, drive a refinement study, or
//! execute the built-in verification suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wavecouple::scenario::{
    convergence_study, load_config, oracle_suite, run_scenario, StudyMode,
};
use wavecouple::{Error, Result};

#[derive(Parser)]
#[command(
    name = "wavecouple",
    about = "Wave equation solver with transparent boundary conditions",
    long_about = "Couples an interior leapfrog finite element discretization of the wave \
                  equation to a convolution quadrature realization of the exterior Calderon \
                  operator, making the mesh boundary transparent to outgoing waves.\n\n\
                  Thread count is controlled by the RAYON_NUM_THREADS environment variable; \
                  outputs are byte-identical across thread counts.\n\n\
                  Exit codes: 0 success, 2 configuration error, 3 numerical failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write energy.csv, probes.csv, metadata.json.
    Run {
        /// Scenario config file.
        config: PathBuf,
    },
    /// Run a refinement study against an enlarged-domain reference.
    Converge {
        /// Base scenario config file.
        config: PathBuf,
        /// Number of refinement levels.
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Which discretization parameter to refine.
        #[arg(long, value_enum, default_value_t = ModeArg::Combined)]
        mode: ModeArg,
    },
    /// Run the verification suite of analytic and property oracles.
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Combined,
    Temporal,
    Spatial,
}

impl From<ModeArg> for StudyMode {
    fn from(m: ModeArg) -> StudyMode {
        match m {
            ModeArg::Combined => StudyMode::Combined,
            ModeArg::Temporal => StudyMode::Temporal,
            ModeArg::Spatial => StudyMode::Spatial,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let (scn, out) = run_scenario(&config)?;
            println!(
                "mesh: {} vertices, {} tets, {} boundary triangles",
                out.space.volume.vertices.len(),
                out.space.volume.tets.len(),
                out.space.surface.triangles.len()
            );
            println!(
                "time grid: {} steps of {:.6} (dt * flux norm = {:.3})",
                out.n_steps,
                out.dt,
                out.dt * out.d_norm
            );
            if let Some(rows) = out
                .trace
                .rows
                .first()
                .map(|f| (f, out.trace.rows.last().expect("nonempty")))
            {
                let (first, last) = rows;
                println!(
                    "energy: initial {:.6e}, final {:.6e}",
                    first.energy, last.energy
                );
            }
            println!("artifacts written to {}", scn.output_dir.display());
            Ok(())
        }
        Command::Converge {
            config,
            levels,
            mode,
        } => {
            let scn = load_config(&config)?;
            let table = convergence_study(&scn, levels, mode.into())?;
            print!("{}", table.render());
            std::fs::create_dir_all(&scn.output_dir)?;
            let csv_path = scn.output_dir.join("convergence.csv");
            std::fs::write(&csv_path, table.to_csv())?;
            println!("table written to {}", csv_path.display());
            Ok(())
        }
        Command::Verify => {
            let report = oracle_suite();
            print!("{}", report.render());
            if report.all_passed() {
                Ok(())
            } else {
                Err(Error::NonConvergence("verification suite failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
