use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ergoflow::fem::{self, BoundaryCondition};
use ergoflow::Error;
use ergoflow_cli::config::Config;
use ergoflow_cli::pipeline::{Pipeline, RunSummary};
use ergoflow_cli::{artifacts, report};

/// Ergodic coverage planning on meshed 2D environments.
#[derive(Parser)]
#[command(name = "ergoflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides run.out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Recompute every stage, ignoring cached artifacts.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the free-space mesh.
    MeshGen(Common),
    /// Solve the Dirichlet and natural eigenbases.
    Eig(Common),
    /// Build the measure-preserving flow basis and export it as CSV.
    Fields(Common),
    /// Sample random-flow seed trajectories.
    Sample(Common),
    /// Optimize the seed trajectories (runs all upstream stages).
    Optimize(Common),
    /// Compute metric rows for optimized trajectories.
    Metric(Common),
    /// Render the markdown report from metrics.csv.
    Report(Common),
    /// Run every stage: mesh-gen through report.
    Pipeline(Common),
}

enum Stage {
    Mesh,
    Eig,
    Fields,
    Sample,
    Optimize,
    Metric,
    Report,
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, stage) = match &cli.command {
        Command::MeshGen(c) => (c, Stage::Mesh),
        Command::Eig(c) => (c, Stage::Eig),
        Command::Fields(c) => (c, Stage::Fields),
        Command::Sample(c) => (c, Stage::Sample),
        Command::Optimize(c) => (c, Stage::Optimize),
        Command::Metric(c) => (c, Stage::Metric),
        Command::Report(c) => (c, Stage::Report),
        Command::Pipeline(c) => (c, Stage::All),
    };
    match run(common, stage) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn run(common: &Common, stage: Stage) -> Result<(), Error> {
    let cfg = Config::load(&common.config)?;
    let pipe = Pipeline::new(cfg, common.out.clone(), common.seed, common.force);
    match stage {
        Stage::Mesh => {
            let (_, _, recomputed) = pipe.stage_mesh()?;
            announce(&pipe.mesh_path(), recomputed);
        }
        Stage::Eig => {
            let (mesh, mesh_text, _) = pipe.stage_mesh()?;
            let fm = fem::assemble(&mesh)?;
            let (_, _, new_d) = pipe.stage_eig(
                &mesh,
                &mesh_text,
                &fm,
                BoundaryCondition::Dirichlet,
                pipe.cfg.planner.n_fields,
            )?;
            announce(&pipe.basis_path(BoundaryCondition::Dirichlet), new_d);
            let (_, _, new_n) = pipe.stage_eig(
                &mesh,
                &mesh_text,
                &fm,
                BoundaryCondition::Natural,
                pipe.cfg.planner.k_trunc,
            )?;
            announce(&pipe.basis_path(BoundaryCondition::Natural), new_n);
        }
        Stage::Fields => {
            let (mesh, mesh_text, _) = pipe.stage_mesh()?;
            let (dist, dist_text, _) = pipe.stage_dist(&mesh, &mesh_text)?;
            let fm = fem::assemble(&mesh)?;
            let (dirichlet, dir_text, _) = pipe.stage_eig(
                &mesh,
                &mesh_text,
                &fm,
                BoundaryCondition::Dirichlet,
                pipe.cfg.planner.n_fields,
            )?;
            let (_, _, new) =
                pipe.stage_fields(&mesh, &dist, &dirichlet, &[&mesh_text, &dist_text, &dir_text])?;
            announce(&pipe.fields_path(), new);
        }
        Stage::Sample => {
            let (mesh, mesh_text, _) = pipe.stage_mesh()?;
            let (dist, dist_text, _) = pipe.stage_dist(&mesh, &mesh_text)?;
            let fm = fem::assemble(&mesh)?;
            let (dirichlet, dir_text, _) = pipe.stage_eig(
                &mesh,
                &mesh_text,
                &fm,
                BoundaryCondition::Dirichlet,
                pipe.cfg.planner.n_fields,
            )?;
            let (flow, fields_text, _) =
                pipe.stage_fields(&mesh, &dist, &dirichlet, &[&mesh_text, &dist_text, &dir_text])?;
            let mut summary = RunSummary::default();
            for &seed in &pipe.cfg.run.seeds.clone() {
                pipe.stage_sample(seed, &mesh, &flow, &fields_text, &mut summary)?;
            }
            for (path, recomputed) in summary.artifacts.iter().zip(&summary.recomputed) {
                announce(path, *recomputed);
            }
        }
        Stage::Optimize | Stage::Metric | Stage::Report | Stage::All => {
            // These stages need the whole upstream chain; run_all reuses
            // whatever is already current.
            let summary = pipe.run_all()?;
            for (path, recomputed) in summary.artifacts.iter().zip(&summary.recomputed) {
                announce(path, *recomputed);
            }
            if matches!(stage, Stage::Report | Stage::All) {
                let rows =
                    artifacts::metrics_from_csv(&std::fs::read_to_string(pipe.metrics_path())?)?;
                print!("{}", report::report_tables(&rows));
            }
        }
    }
    Ok(())
}

fn announce(path: &std::path::Path, recomputed: bool) {
    println!(
        "{} {}",
        if recomputed { "wrote " } else { "cached" },
        path.display()
    );
}
