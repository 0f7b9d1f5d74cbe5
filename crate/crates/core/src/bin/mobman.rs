use clap::{Args, Parser, Subcommand};
use mobman::esdf::{build_esdf, VoxelGrid, DEFAULT_MAX_DIST};
use mobman::output::{execute, Verb};
use mobman::pipeline::RunFlags;
use mobman::scenario::Scenario;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mobman", version, about = "Coordinated planning and isolated control for tracked mobile manipulators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Stop avoidance at the first waypoint that needs optimization.
    #[arg(long)]
    strict_alg1: bool,
    /// Use unnormalized displacements in the curvature and velocity terms.
    #[arg(long)]
    raw_displacement: bool,
}

impl RunArgs {
    fn flags(&self) -> RunFlags {
        RunFlags {
            seed: self.seed,
            strict_alg1: self.strict_alg1,
            raw_displacement: self.raw_displacement,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Plan and optimize the path only.
    Plan(RunArgs),
    /// Full pipeline including closed-loop simulation.
    Run(RunArgs),
    /// Feedforward/gain ablation on a swing scenario.
    Ablate(RunArgs),
    /// Parse and validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Convert an occupancy grid (or a scenario's scene) to a distance field file.
    EsdfBuild {
        #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
        occupancy: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_DIST)]
        max_dist: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(a) => execute(Verb::Plan, &a.scenario, &a.out, &a.flags()).map(|d| println!("plan written to {}", d.display())),
        Command::Run(a) => execute(Verb::Run, &a.scenario, &a.out, &a.flags()).map(|d| println!("run written to {}", d.display())),
        Command::Ablate(a) => execute(Verb::Ablate, &a.scenario, &a.out, &a.flags()).map(|d| {
            if let Ok(t) = std::fs::read_to_string(d.join("ablation.csv")) {
                print!("{t}");
            }
        }),
        Command::Validate { scenario } => Scenario::load(&scenario).map(|s| println!("{}: ok ({})", scenario.display(), s.task.name())),
        Command::EsdfBuild {
            occupancy,
            scenario,
            max_dist,
            out,
        } => (|| {
            let grid = match (occupancy, scenario) {
                (Some(p), _) => VoxelGrid::parse(&std::fs::read_to_string(p)?)?,
                (None, Some(s)) => Scenario::load(&s)?
                    .scene
                    .ok_or_else(|| mobman::Error::validation("scene", "scenario has no scene"))?
                    .occupancy()?,
                (None, None) => unreachable!("clap requires one source"),
            };
            let esdf = build_esdf(&grid, max_dist)?;
            std::fs::write(&out, esdf.to_text())?;
            println!("{} occupied voxels -> {}", grid.occupied_count(), out.display());
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
