//! Turns a [`RunConfig`] into a mesh, operators and initial state, and drives
//! the `run`, `validate` and `energy-check` commands.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{parse_config, ConfigError, MeshSpec, RunConfig};
use crate::energy;
use crate::mesh::{self, LoadWarning, MeshError, TriMesh};
use crate::output::{self, OutputError, Probe};
use crate::physics::{BidomainLaws, FluxLaw, IonicMode, IonicModel};
use crate::stepper::{RunFailure, RunOptions, State, StepConfig, StepError, Stepper, Trajectory};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Run(#[from] Box<RunFailure>),
}

impl ExperimentError {
    /// Solver-side failures (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, ExperimentError::Run(_) | ExperimentError::Step(StepError::Linear(_) | StepError::NotConverged { .. }))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> ExperimentError {
    ExperimentError::Io { path: path.to_path_buf(), message: e.to_string() }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(parse_config(&text)?)
}

pub fn build_mesh(spec: &MeshSpec, base_dir: &Path) -> Result<(TriMesh, Vec<LoadWarning>), ExperimentError> {
    let mesh = match spec {
        MeshSpec::Disk { radius, h } => mesh::generate_disk(*radius, *h)?,
        MeshSpec::NestedDisk { inner_radius, outer_radius, h } => mesh::generate_nested_disk(*inner_radius, *outer_radius, *h)?,
        MeshSpec::NestedRect { inner, outer, h } => mesh::generate_nested_rect(*inner, *outer, *h)?,
        MeshSpec::File(path) => {
            let path = base_dir.join(path);
            let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
            return Ok(mesh::load_mesh(&text)?);
        }
    };
    Ok((mesh, Vec::new()))
}

/// Everything a run needs, derived from a config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub mesh: TriMesh,
    pub warnings: Vec<LoadWarning>,
    pub laws: BidomainLaws,
    pub model: IonicModel,
    pub step: StepConfig,
    pub probes: Vec<Probe>,
    pub initial: State,
}

impl Experiment {
    pub fn prepare(config: RunConfig, base_dir: &Path) -> Result<Experiment, ExperimentError> {
        let (mesh, warnings) = build_mesh(&config.mesh, base_dir)?;
        let laws = config.laws.build()?;
        if mesh.has_shell() {
            if let FluxLaw::Linear(t) = &laws.extra {
                if t.shell.is_none() {
                    return Err(ConfigError::Invalid("mesh has a shell region but [laws] has no `M_e_shell`".into()).into());
                }
            }
        }
        let model = config.ionic.model()?;
        let step = config.stepper.step_config(&laws);
        let probes = output::locate_probes(&mesh, &config.probes)?;
        let init = &config.initial;
        let u0: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|p| match init.patch {
                Some((c, r)) if (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) <= r * r => init.patch_u,
                _ => init.u,
            })
            .collect();
        let w0 = vec![init.w; mesh.n_vertices()];
        let initial = State::from_initial(&mesh, &u0, &w0)?;
        Ok(Experiment { config, mesh, warnings, laws, model, step, probes, initial })
    }

    pub fn from_file(path: &Path) -> Result<Experiment, ExperimentError> {
        let config = load_config(path)?;
        Experiment::prepare(config, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn stepper(&self) -> Result<Stepper<'_>, StepError> {
        Stepper::new(&self.mesh, self.laws, self.model, self.step, self.config.stimulus)
    }

    pub fn run_options(&self) -> RunOptions {
        let snap = self.config.output.snapshot_every;
        RunOptions {
            n_steps: self.config.stepper.n_steps(),
            output_every: self.config.output.every,
            snapshot_every: if snap == 0 { None } else { Some(snap) },
        }
    }

    pub fn run(&self) -> Result<Trajectory, ExperimentError> {
        Ok(self.stepper()?.run(self.initial.clone(), &self.probes, &self.run_options())?)
    }

    /// Writes `probes.csv`, `energy.csv` and `snap_NNNNNN.vtk` into `dir`.
    pub fn write_outputs(&self, traj: &Trajectory, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: String, text: String| -> Result<(), ExperimentError> {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| io_error(&path, e))?;
            written.push(path);
            Ok(())
        };
        put("probes.csv".into(), output::probe_series_csv(traj, self.probes.len()))?;
        put("energy.csv".into(), output::energy_csv(traj))?;
        let every = self.config.output.snapshot_every.max(1);
        for (k, s) in traj.snapshots.iter().enumerate() {
            put(format!("snap_{:06}.vtk", k * every), output::snapshot_vtk(s, &self.mesh)?)?;
        }
        Ok(written)
    }

    /// Maximum relative error of the FD gradient check over `n_states` random states
    /// (gradient mode of the configured ionic model).
    pub fn energy_check(&self, n_states: usize) -> Result<f64, ExperimentError> {
        let model = IonicModel { mode: IonicMode::PureGradient, ..self.model };
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.output.seed);
        let n = self.mesh.n_vertices();
        let mut worst: f64 = 0.0;
        for _ in 0..n_states {
            let mut field = || (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
            let state = State { t: 0.0, ui: field(), ue: field(), w: field() };
            let check = energy::gradient_check(&state, &self.mesh, &self.laws, &model, self.step.epsilon, 1e-5)?;
            worst = worst.max(check.relative_error);
        }
        Ok(worst)
    }

    /// Invariant checks that need no time stepping.
    pub fn validate(&self) -> Result<Vec<Check>, ExperimentError> {
        let mut checks = Vec::new();
        let violations = mesh::validate(&self.mesh);
        checks.push(Check::new(
            "mesh invariants",
            violations.is_empty(),
            format!("{} vertices, {} triangles, {} violations", self.mesh.n_vertices(), self.mesh.n_triangles(), violations.len()),
        ));
        checks.push(Check::new("probes inside mesh", true, format!("{} probes located", self.probes.len())));
        let omega = self.model.semiconvexity_omega();
        let product = self.step.dt * omega / self.model.tau;
        let gradient = self.model.mode == IonicMode::PureGradient;
        checks.push(Check::new(
            "step size below semiconvexity limit",
            !gradient || product < 1.0,
            format!("dt·ω/τ = {product:.4}{}", if gradient { "" } else { " (informational in FHN mode)" }),
        ));
        let stepper = self.stepper()?;
        let sys = stepper.build_step_system(&self.initial, &self.initial)?;
        let matrix = sys.monolithic_matrix();
        let finite = matrix.values().iter().chain(sys.monolithic_rhs().iter()).all(|v| v.is_finite());
        checks.push(Check::new("step system assembles", finite, format!("{} unknowns, {} nonzeros", matrix.n_rows(), matrix.nnz())));
        if gradient && self.laws.intra.is_linear() && self.laws.extra.is_linear() {
            let defect = matrix.symmetry_defect();
            checks.push(Check::new("gradient-mode symmetry", defect <= 1e-12, format!("defect {defect:.3e}")));
        }
        let err = self.energy_check(1)?;
        checks.push(Check::new("energy gradient consistency", err <= 1e-6, format!("max relative error {err:.3e}")));
        Ok(checks)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Check {
        Check { name: name.to_string(), passed, detail }
    }
}
