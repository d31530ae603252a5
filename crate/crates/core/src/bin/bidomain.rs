use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bidomain::experiment::{Experiment, ExperimentError};
use bidomain::mesh::{self, Rect, TriMesh};

const EXIT_VALIDATION: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "bidomain", version, about = "Bidomain gradient-flow simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or check a mesh file.
    #[command(subcommand)]
    Mesh(MeshCommand),
    /// Run a configuration and write probes.csv, energy.csv and snapshots.
    Run {
        config: PathBuf,
        /// Output directory (overrides [output] directory, which is relative to the config file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the invariants of a configuration without time stepping.
    Validate { config: PathBuf },
    /// Finite-difference audit of the energy gradient against the step residual.
    EnergyCheck {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        states: usize,
    },
}

#[derive(Subcommand)]
enum MeshCommand {
    Disk {
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long)]
        h: f64,
        #[command(flatten)]
        out: OutArg,
    },
    NestedDisk {
        #[arg(long)]
        inner: f64,
        #[arg(long)]
        outer: f64,
        #[arg(long)]
        h: f64,
        #[command(flatten)]
        out: OutArg,
    },
    NestedRect {
        /// `x0,y0,x1,y1`
        #[arg(long, value_parser = parse_rect)]
        inner: Rect,
        #[arg(long, value_parser = parse_rect)]
        outer: Rect,
        #[arg(long)]
        h: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Load and validate a mesh file.
    Check { path: PathBuf },
}

#[derive(Args)]
struct OutArg {
    /// Destination file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_rect(s: &str) -> Result<Rect, String> {
    let v: Result<Vec<f64>, _> = s.split(',').map(|x| x.trim().parse::<f64>()).collect();
    match v.map_err(|e| e.to_string())?.as_slice() {
        [x0, y0, x1, y1] => Ok(Rect::new(*x0, *y0, *x1, *y1)),
        _ => Err("expected x0,y0,x1,y1".into()),
    }
}

fn fail(e: &ExperimentError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_solver_failure() { EXIT_SOLVER } else { EXIT_VALIDATION })
}

fn write_mesh(mesh: &TriMesh, out: &OutArg) -> ExitCode {
    let text = mesh::write_mesh(mesh);
    match &out.out {
        None => print!("{text}"),
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(EXIT_VALIDATION);
            }
            eprintln!("wrote {} ({} vertices, {} triangles)", path.display(), mesh.n_vertices(), mesh.n_triangles());
        }
    }
    ExitCode::SUCCESS
}

fn mesh_command(cmd: MeshCommand) -> ExitCode {
    let generated = match &cmd {
        MeshCommand::Disk { radius, h, .. } => mesh::generate_disk(*radius, *h),
        MeshCommand::NestedDisk { inner, outer, h, .. } => mesh::generate_nested_disk(*inner, *outer, *h),
        MeshCommand::NestedRect { inner, outer, h, .. } => mesh::generate_nested_rect(*inner, *outer, *h),
        MeshCommand::Check { path } => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::from(EXIT_VALIDATION);
                }
            };
            return match mesh::load_mesh(&text) {
                Ok((m, warnings)) => {
                    for w in warnings {
                        eprintln!("warning: {w}");
                    }
                    println!("ok: {} vertices, {} triangles, shell: {}", m.n_vertices(), m.n_triangles(), m.has_shell());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_VALIDATION)
                }
            };
        }
    };
    let out = match &cmd {
        MeshCommand::Disk { out, .. } | MeshCommand::NestedDisk { out, .. } | MeshCommand::NestedRect { out, .. } => out,
        MeshCommand::Check { .. } => unreachable!(),
    };
    match generated {
        Ok(m) => write_mesh(&m, out),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn run(config: &Path, out: Option<PathBuf>) -> ExitCode {
    let exp = match Experiment::from_file(config) {
        Ok(e) => e,
        Err(e) => return fail(&e),
    };
    for w in &exp.warnings {
        eprintln!("warning: {w}");
    }
    let dir = out.unwrap_or_else(|| config.parent().unwrap_or(Path::new(".")).join(&exp.config.output.directory));
    let (traj, error) = match exp.run() {
        Ok(t) => (t, None),
        Err(ExperimentError::Run(failure)) => (failure.partial.clone(), Some(ExperimentError::Run(failure))),
        Err(e) => return fail(&e),
    };
    match exp.write_outputs(&traj, &dir) {
        Ok(files) => eprintln!("wrote {} files to {}", files.len(), dir.display()),
        Err(e) => return fail(&e),
    }
    match error {
        Some(e) => fail(&e),
        None => {
            let steps = traj.stats.len();
            let linear: usize = traj.stats.iter().map(|s| s.linear_iterations).sum();
            println!("{steps} steps, {linear} linear iterations, final t = {}", traj.times.last().copied().unwrap_or(0.0));
            ExitCode::SUCCESS
        }
    }
}

fn validate(config: &Path) -> ExitCode {
    let checks = match Experiment::from_file(config).and_then(|e| e.validate()) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let mut ok = true;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VALIDATION)
    }
}

fn energy_check(config: &Path, states: usize) -> ExitCode {
    match Experiment::from_file(config).and_then(|e| e.energy_check(states.max(1))) {
        Ok(err) => {
            println!("max relative error {err:.3e}");
            if err <= 1e-6 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Mesh(cmd) => mesh_command(cmd),
        Command::Run { config, out } => run(&config, out),
        Command::Validate { config } => validate(&config),
        Command::EnergyCheck { config, states } => energy_check(&config, states),
    }
}
