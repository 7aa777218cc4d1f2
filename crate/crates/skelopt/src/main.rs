use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use skelopt::config::RunConfig;
use skelopt::density::{project_components, symmetrize};
use skelopt::export;
use skelopt::grid::Grid;
use skelopt::identify::{identify_skeleton, IdentifyOptions};
use skelopt::optimizer::{self, RunError, Termination};
use skelopt::simp::{simp_warmstart, SimpOptions};

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "skelopt",
    about = "Design of stretchable metamaterial unit cells from curve skeletons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full optimization described by a config file.
    Run { config: PathBuf },
    /// Compare adjoint gradients against finite differences.
    Gradcheck { config: PathBuf },
    /// Project a skeleton onto the density grid and export it.
    Project {
        config: PathBuf,
        /// Skeleton file to project; defaults to the seeded initial design.
        #[arg(long)]
        skeleton: Option<PathBuf>,
    },
    /// Fit a skeleton to a free-density warm start and export it.
    Identify { config: PathBuf },
}

fn load_config(path: &Path) -> Result<RunConfig, u8> {
    RunConfig::from_file(path).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_VALIDATION
    })
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), u8> {
    std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join(name), text)).map_err(|e| {
        eprintln!("error: cannot write {name}: {e}");
        EXIT_VALIDATION
    })
}

fn solver_exit(e: RunError) -> u8 {
    eprintln!("error: {e}");
    EXIT_SOLVER
}

fn export_design(
    cfg: &RunConfig,
    grid: &Grid,
    design: &skelopt::design::DesignVector,
    rho: &[f64],
    dir: &Path,
) -> Result<(), u8> {
    write(dir, "density.txt", &export::density_text(grid, rho))?;
    write(dir, "density.vtk", &export::vtk_text(grid, rho))?;
    write(dir, "skeleton.txt", &export::skeleton_text(design))?;
    write(dir, "design.svg", &export::svg_design(grid, design, rho, 1))?;
    write(dir, "tiled.svg", &export::svg_design(grid, design, rho, 5))?;
    let _ = cfg;
    Ok(())
}

fn cmd_run(config: &Path) -> Result<(), u8> {
    let cfg = load_config(config)?;
    let grid = Grid::new(cfg.grid.nx, cfg.grid.ny, cfg.grid.h);
    let out = optimizer::optimize(&cfg).map_err(solver_exit)?;
    let dir = PathBuf::from(&cfg.output_dir);
    let pruned = optimizer::prune_design(&out.design, cfg.optimizer.prune_rho_bar);
    export_design(&cfg, &grid, &pruned, &out.field.rho_phys, &dir)?;
    write(&dir, "log.csv", &export::csv_text(&out.records))?;
    println!(
        "finished: {} iterations, objective {:.6}, volume {:.4}, max energy {:.4}, feasible {}, connected {}",
        out.records.len(),
        out.objective,
        out.volume_fraction,
        out.max_element_energy,
        out.feasible,
        out.connected
    );
    if !out.connected {
        eprintln!("warning: thresholded design is not periodically connected");
    }
    match out.termination {
        Termination::Converged => println!("terminated: design change below tolerance"),
        Termination::MaxIterations => println!("terminated: iteration limit"),
        Termination::RejectedDesigns => {
            eprintln!("error: optimizer aborted after repeated rejected designs");
            return Err(EXIT_SOLVER);
        }
    }
    Ok(())
}

fn cmd_gradcheck(config: &Path) -> Result<(), u8> {
    let cfg = load_config(config)?;
    let table = optimizer::gradcheck(&cfg).map_err(solver_exit)?;
    print!("{table}");
    write(Path::new(&cfg.output_dir), "gradcheck.csv", &table)
}

fn cmd_project(config: &Path, skeleton: Option<&Path>) -> Result<(), u8> {
    let cfg = load_config(config)?;
    let grid = Grid::new(cfg.grid.nx, cfg.grid.ny, cfg.grid.h);
    let design = match skeleton {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                eprintln!("error: cannot read skeleton file: {e}");
                EXIT_VALIDATION
            })?;
            export::parse_skeleton(&text).map_err(|e| {
                eprintln!("error: {e}");
                EXIT_VALIDATION
            })?
        }
        None => optimizer::initial_design(&cfg, &grid).map_err(solver_exit)?,
    };
    let mut field = project_components(&grid, &design.components, &cfg.projection_params());
    if cfg.design.symmetric {
        field = symmetrize(&grid, &field).map_err(|e| {
            eprintln!("error: {e}");
            EXIT_VALIDATION
        })?;
    }
    export_design(&cfg, &grid, &design, &field.rho_phys, Path::new(&cfg.output_dir))
}

fn cmd_identify(config: &Path) -> Result<(), u8> {
    let cfg = load_config(config)?;
    let grid = Grid::new(cfg.grid.nx, cfg.grid.ny, cfg.grid.h);
    let opts = SimpOptions {
        v_f: cfg.constraints.v_f,
        iterations: cfg.optimizer.simp_iters.max(1),
        alpha: cfg.solver.alpha,
        settings: cfg.solver_settings(),
        ..SimpOptions::default()
    };
    let target = simp_warmstart(
        &grid,
        &cfg.material(),
        &cfg.interpolation_params(),
        cfg.load.u_bar.abs().max(0.05 * grid.width()),
        &opts,
    )
    .map_err(|e| solver_exit(RunError::Fem(e)))?;
    let seed = optimizer::initial_design(
        &RunConfig {
            optimizer: skelopt::config::OptimizerConfig {
                simp_iters: 0,
                ..cfg.optimizer.clone()
            },
            ..cfg.clone()
        },
        &grid,
    )
    .map_err(solver_exit)?;
    let id_opts = IdentifyOptions {
        params: cfg.projection_params(),
        w_min: cfg.design.w_min,
        w_max: cfg.design.w_max,
        ..IdentifyOptions::default()
    };
    let fit_target = skelopt::identify::binarize_by_fraction(&target, cfg.constraints.v_f);
    let report = identify_skeleton(&grid, &seed, &fit_target, &id_opts);
    println!(
        "identification: misfit {:.6e} -> {:.6e} in {} iterations, connected {}",
        report.initial_misfit, report.final_misfit, report.iterations, report.connected
    );
    if !report.connected {
        eprintln!("warning: thresholded fit is not periodically connected");
    }
    let dir = PathBuf::from(&cfg.output_dir);
    write(&dir, "warmstart_density.txt", &export::density_text(&grid, &target))?;
    let field = project_components(&grid, &report.design.components, &cfg.projection_params());
    export_design(&cfg, &grid, &report.design, &field.rho_phys, &dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Gradcheck { config } => cmd_gradcheck(config),
        Command::Project { config, skeleton } => {
            cmd_project(config, skeleton.as_deref())
        }
        Command::Identify { config } => cmd_identify(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
