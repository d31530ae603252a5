//! Implicit Euler for the regularized bidomain gradient flow.
//!
//! Unknowns are `(u_i, u_e, w)` on every mesh vertex, stacked in that order.
//! With `u = u_i − u_e`, `D = M_Ω/dt`, and `L(u, w) = ∫_Ω ∂F/∂u φ` the residual is
//!
//! ```text
//! R_φ =  D(u − u_k) + r_i(u_i) + L(u, w) + ε M_S u_i − S
//! R_ψ = −D(u − u_k) + r_e(u_e) − L(u, w) + ε M_Ω u_e + S
//! R_χ = (τ/dt) M_Ω (w − w_k) + M_Ω (s u + λ + μ w) + ε M_S w
//! ```
//!
//! where `r_i`, `r_e` are the flux residuals, `S` the applied-current load and
//! `s = ±1` the mode sign. In gradient mode `R(x; x_k)` is the gradient of
//! `E + regularization + |j(x − x_k)|²_τ / (2 dt)`, and `R_φ + R_ψ` is the
//! discrete elliptic constraint.

use std::sync::OnceLock;

use thiserror::Error;

use crate::energy::{self, EnergyError, EnergyReport, TauInnerProduct};
use crate::fem::{self, FemError, RegionFilter};
use crate::linalg::{self, bicgstab_solve, cg_solve, BlockSystem, CsrMatrix, DenseMatrix, LinalgError, Solution, SolverOptions};
use crate::mesh::{Region, TriMesh};
use crate::output::Probe;
use crate::physics::{BidomainLaws, IonicModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("invalid step configuration: {0}")]
    InvalidConfig(String),
    #[error("state has length {found}, mesh has {expected} vertices")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("linear solver failed: {0}")]
    Linear(#[from] LinalgError),
    #[error("{iteration} iteration did not converge in {} iterations (last {:e})", history.len(), history.last().copied().unwrap_or(f64::NAN))]
    NotConverged { iteration: &'static str, history: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    /// `G'` evaluated at the previous step.
    Explicit,
    /// `G'` evaluated at the new step, solved by damped Newton on the τ-norm of the increment.
    Newton { max_iter: usize, tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxIteration {
    None,
    /// Lagged-diffusivity iteration for p-power laws; stops on the relative change of the frozen coefficients.
    Picard { max_iter: usize, tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Cg,
    BiCgStab,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolver {
    pub kind: SolverKind,
    pub tol: f64,
    pub max_iter: usize,
    pub jacobi: bool,
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver { kind: SolverKind::BiCgStab, tol: 1e-10, max_iter: 5000, jacobi: true }
    }
}

/// The ionic mode (gradient or FitzHugh–Nagumo sign) is carried by [`IonicModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub epsilon: f64,
    pub nonlinearity: Nonlinearity,
    pub flux_iteration: FluxIteration,
    pub linear_solver: LinearSolver,
}

impl StepConfig {
    pub fn default_epsilon(laws: &BidomainLaws) -> f64 {
        1e-6 * laws.max_conductivity()
    }

    pub fn new(dt: f64, laws: &BidomainLaws) -> StepConfig {
        StepConfig {
            dt,
            epsilon: StepConfig::default_epsilon(laws),
            nonlinearity: Nonlinearity::Explicit,
            flux_iteration: FluxIteration::Picard { max_iter: 50, tol: 1e-10 },
            linear_solver: LinearSolver::default(),
        }
    }

    pub fn validate(&self) -> Result<(), StepError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(StepError::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("epsilon", self.epsilon)?;
        positive("linear solver tolerance", self.linear_solver.tol)?;
        if let Nonlinearity::Newton { tol, max_iter } = self.nonlinearity {
            positive("Newton tolerance", tol)?;
            if max_iter == 0 {
                return Err(StepError::InvalidConfig("Newton max_iter must be positive".into()));
            }
        }
        if let FluxIteration::Picard { tol, max_iter } = self.flux_iteration {
            positive("Picard tolerance", tol)?;
            if max_iter == 0 {
                return Err(StepError::InvalidConfig("Picard max_iter must be positive".into()));
            }
        }
        if self.linear_solver.max_iter == 0 {
            return Err(StepError::InvalidConfig("linear solver max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Applied current `amplitude` on a disk during `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StimulusSpec {
    pub amplitude: f64,
    pub center: [f64; 2],
    pub radius: f64,
    pub start: f64,
    pub end: f64,
}

impl StimulusSpec {
    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.radius > 0.0) {
            return Err(StepError::InvalidConfig(format!("stimulus radius must be positive, got {}", self.radius)));
        }
        if !(self.start <= self.end) {
            return Err(StepError::InvalidConfig("stimulus window must satisfy start <= end".into()));
        }
        if !self.amplitude.is_finite() {
            return Err(StepError::InvalidConfig("stimulus amplitude must be finite".into()));
        }
        Ok(())
    }

    /// Fraction of `[t0, t1]` covered by the window.
    pub fn active_fraction(&self, t0: f64, t1: f64) -> f64 {
        let overlap = (t1.min(self.end) - t0.max(self.start)).max(0.0);
        if t1 > t0 {
            overlap / (t1 - t0)
        } else {
            0.0
        }
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.center[0]).powi(2) + (p[1] - self.center[1]).powi(2) <= self.radius * self.radius
    }

    /// `∫_Ω 1_disk φ_j`; triangles cut by the circle use a refined centroid rule.
    pub fn unit_load(&self, mesh: &TriMesh) -> Vec<f64> {
        const LEVELS: u32 = 4;
        let mut load = vec![0.0; mesh.n_vertices()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            if tri.region != Region::Tissue {
                continue;
            }
            let p = mesh.triangle_coords(t);
            let area = mesh.triangle_area(t);
            let inside = p.iter().filter(|&&q| self.contains(q)).count();
            if inside == 3 {
                for &v in &tri.vertices {
                    load[v] += area / 3.0;
                }
                continue;
            }
            let (lo_x, hi_x) = (p[0][0].min(p[1][0]).min(p[2][0]), p[0][0].max(p[1][0]).max(p[2][0]));
            let (lo_y, hi_y) = (p[0][1].min(p[1][1]).min(p[2][1]), p[0][1].max(p[1][1]).max(p[2][1]));
            let dx = (self.center[0] - self.center[0].clamp(lo_x, hi_x)).abs();
            let dy = (self.center[1] - self.center[1].clamp(lo_y, hi_y)).abs();
            if dx * dx + dy * dy > self.radius * self.radius {
                continue;
            }
            // Barycentric sub-triangle centroids on a regular 2^LEVELS subdivision.
            let k = 1usize << LEVELS;
            let sub_area = area / (k * k) as f64;
            let mut add = |l: [f64; 3]| {
                let x = [
                    l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                    l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
                ];
                if self.contains(x) {
                    for m in 0..3 {
                        load[tri.vertices[m]] += sub_area * l[m];
                    }
                }
            };
            let kf = k as f64;
            for i in 0..k {
                for j in 0..k - i {
                    let (fi, fj) = (i as f64, j as f64);
                    add([(fi + 1.0 / 3.0) / kf, (fj + 1.0 / 3.0) / kf, 1.0 - (fi + fj + 2.0 / 3.0) / kf]);
                    if i + j + 1 < k {
                        add([(fi + 2.0 / 3.0) / kf, (fj + 2.0 / 3.0) / kf, 1.0 - (fi + fj + 4.0 / 3.0) / kf]);
                    }
                }
            }
        }
        load
    }
}

/// Nodal fields at time `t`, each of mesh-vertex length. `u_i` and `w` are
/// pinned near zero on shell-only nodes by the regularization.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub ui: Vec<f64>,
    pub ue: Vec<f64>,
    pub w: Vec<f64>,
}

impl State {
    pub fn zeros(n: usize) -> State {
        State { t: 0.0, ui: vec![0.0; n], ue: vec![0.0; n], w: vec![0.0; n] }
    }

    /// Splits initial data as `u_i = u_0`, `u_e = 0` on tissue nodes; shell-only nodes start at zero.
    pub fn from_initial(mesh: &TriMesh, u0: &[f64], w0: &[f64]) -> Result<State, StepError> {
        let n = mesh.n_vertices();
        for v in [u0, w0] {
            if v.len() != n {
                return Err(StepError::DimensionMismatch { expected: n, found: v.len() });
            }
        }
        let mask = |v: &[f64]| (0..n).map(|i| if mesh.is_tissue_node(i) { v[i] } else { 0.0 }).collect::<Vec<f64>>();
        Ok(State { t: 0.0, ui: mask(u0), ue: vec![0.0; n], w: mask(w0) })
    }

    /// `u = u_i − u_e` on tissue nodes, zero on shell-only nodes.
    pub fn transmembrane(&self, mesh: &TriMesh) -> Vec<f64> {
        (0..self.ui.len()).map(|i| if mesh.is_tissue_node(i) { self.ui[i] - self.ue[i] } else { 0.0 }).collect()
    }

    pub fn field(&self, k: usize) -> &[f64] {
        match k {
            0 => &self.ui,
            1 => &self.ue,
            _ => &self.w,
        }
    }

    pub fn field_mut(&mut self, k: usize) -> &mut Vec<f64> {
        match k {
            0 => &mut self.ui,
            1 => &mut self.ue,
            _ => &mut self.w,
        }
    }

    fn stacked(&self) -> Vec<f64> {
        [self.ui.as_slice(), &self.ue, &self.w].concat()
    }

    fn from_stacked(t: f64, x: &[f64]) -> State {
        let n = x.len() / 3;
        State { t, ui: x[..n].to_vec(), ue: x[n..2 * n].to_vec(), w: x[2 * n..].to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    /// Linear solves performed (Newton and/or Picard iterations).
    pub outer_iterations: usize,
    pub linear_iterations: usize,
    /// Increment τ-norms (Newton) or coefficient changes (Picard), one per outer iteration.
    pub history: Vec<f64>,
    /// `‖R‖₂` at the initial guess of the step; residuals below are certified against it.
    pub residual_reference: f64,
    pub residual: f64,
    /// `‖R_φ + R_ψ‖₂` at the accepted state.
    pub elliptic_residual: f64,
    pub psi_residual: f64,
}

impl StepStats {
    /// `‖R_φ + R_ψ‖ ≤ factor · tol · ‖R(x_k)‖` with the solver's absolute floor.
    pub fn elliptic_certified(&self, tol: f64, factor: f64) -> bool {
        self.elliptic_residual <= factor * tol * self.residual_reference.max(linalg::ABSOLUTE_FLOOR / tol)
    }
}

/// Operators shared by every step of a run.
pub struct Stepper<'a> {
    mesh: &'a TriMesh,
    laws: BidomainLaws,
    model: IonicModel,
    cfg: StepConfig,
    stimulus: Option<(StimulusSpec, Vec<f64>)>,
    m_tissue: CsrMatrix,
    m_shell: CsrMatrix,
    tissue_ones: Vec<f64>,
    null_vector: Vec<f64>,
    constant_matrix: OnceLock<CsrMatrix>,
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl<'a> Stepper<'a> {
    pub fn new(
        mesh: &'a TriMesh,
        laws: BidomainLaws,
        model: IonicModel,
        cfg: StepConfig,
        stimulus: Option<StimulusSpec>,
    ) -> Result<Stepper<'a>, StepError> {
        cfg.validate()?;
        let model = model.validated().map_err(|e| StepError::InvalidConfig(e.to_string()))?;
        if let Some(s) = &stimulus {
            s.validate()?;
        }
        let n = mesh.n_vertices();
        let m_tissue = fem::assemble_mass(mesh, RegionFilter::Tissue);
        let m_shell = fem::shell_penalty_mass(mesh);
        let tissue_ones = m_tissue.spmv(&vec![1.0; n])?;
        let mut null_vector = vec![0.0; 3 * n];
        for v in 0..n {
            null_vector[v] = if mesh.is_tissue_node(v) { 1.0 } else { 0.0 };
            null_vector[n + v] = 1.0;
        }
        let stepper = Stepper {
            mesh,
            laws,
            model,
            cfg,
            stimulus: stimulus.map(|s| (s, s.unit_load(mesh))),
            m_tissue,
            m_shell,
            tissue_ones,
            null_vector,
            constant_matrix: OnceLock::new(),
        };
        // Surface missing-tensor errors before stepping.
        let zero = vec![0.0; n];
        fem::assemble_frozen(mesh, &laws.intra, &zero, RegionFilter::Tissue)?;
        fem::assemble_frozen(mesh, &laws.extra, &zero, RegionFilter::All)?;
        Ok(stepper)
    }

    pub fn mesh(&self) -> &TriMesh {
        self.mesh
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    pub fn model(&self) -> &IonicModel {
        &self.model
    }

    pub fn laws(&self) -> &BidomainLaws {
        &self.laws
    }

    pub fn tissue_mass(&self) -> &CsrMatrix {
        &self.m_tissue
    }

    pub fn tau_product(&self) -> TauInnerProduct<'_> {
        TauInnerProduct::new(&self.m_tissue, self.model.tau)
    }

    fn newton(&self) -> bool {
        matches!(self.cfg.nonlinearity, Nonlinearity::Newton { .. })
    }

    fn picard(&self) -> bool {
        !self.laws.intra.is_linear() || !self.laws.extra.is_linear()
    }

    fn check(&self, s: &State) -> Result<(), StepError> {
        let n = self.mesh.n_vertices();
        for f in [&s.ui, &s.ue, &s.w] {
            if f.len() != n {
                return Err(StepError::DimensionMismatch { expected: n, found: f.len() });
            }
        }
        Ok(())
    }

    /// Stimulus load for the step starting at `t0`, averaged over the step.
    pub fn stimulus_load(&self, t0: f64) -> Vec<f64> {
        let n = self.mesh.n_vertices();
        match &self.stimulus {
            Some((spec, unit)) => {
                let scale = spec.amplitude * spec.active_fraction(t0, t0 + self.cfg.dt);
                unit.iter().map(|v| scale * v).collect()
            }
            None => vec![0.0; n],
        }
    }

    /// Residual rows `[R_φ, R_ψ, R_χ]` at `x` for the step from `prev`.
    pub fn residual(&self, x: &State, prev: &State, load: &[f64]) -> Result<[Vec<f64>; 3], StepError> {
        self.check(x)?;
        self.check(prev)?;
        let cfg = &self.cfg;
        let model = &self.model;
        let u = sub(&x.ui, &x.ue);
        let u_prev = sub(&prev.ui, &prev.ue);
        let u_cubic = if self.newton() { &u } else { &u_prev };
        let cubic = fem::midpoint_load(self.mesh, u_cubic, &x.w, |um, _| model.cubic_part(um));
        let r_i = fem::assemble_flux_residual(self.mesh, &self.laws.intra, &x.ui, RegionFilter::Tissue)?;
        let r_e = fem::assemble_flux_residual(self.mesh, &self.laws.extra, &x.ue, RegionFilter::All)?;
        let du = self.m_tissue.spmv(&sub(&u, &u_prev))?;
        let mw = self.m_tissue.spmv(&x.w)?;
        let mu_ = self.m_tissue.spmv(&u)?;
        let dw = self.m_tissue.spmv(&sub(&x.w, &prev.w))?;
        let shell_ui = self.m_shell.spmv(&x.ui)?;
        let shell_w = self.m_shell.spmv(&x.w)?;
        let tissue_ue = self.m_tissue.spmv(&x.ue)?;
        let c = model.coupling();
        let s = model.w_sign();
        let n = self.mesh.n_vertices();
        let mut r_phi = vec![0.0; n];
        let mut r_psi = vec![0.0; n];
        let mut r_chi = vec![0.0; n];
        for j in 0..n {
            let ionic = cubic[j] + c * mw[j];
            let transfer = du[j] / cfg.dt + ionic - load[j];
            r_phi[j] = transfer + r_i[j] + cfg.epsilon * shell_ui[j];
            r_psi[j] = -transfer + r_e[j] + cfg.epsilon * tissue_ue[j];
            r_chi[j] = model.tau / cfg.dt * dw[j]
                + c * (s * mu_[j] + model.lambda * self.tissue_ones[j] + model.mu * mw[j])
                + cfg.epsilon * shell_w[j];
        }
        Ok([r_phi, r_psi, r_chi])
    }

    fn state_independent(&self) -> bool {
        !self.picard() && (!self.newton() || self.model.kind != crate::physics::IonicKind::FitzHughNagumo)
    }

    /// Jacobian blocks at `x` (Picard-frozen for p-power laws) with right-hand side `−R(x)`.
    pub fn build_step_system(&self, prev: &State, x: &State) -> Result<BlockSystem, StepError> {
        let load = self.stimulus_load(prev.t);
        let r = self.residual(x, prev, &load)?;
        let blocks = self.jacobian_blocks(x)?;
        let n = self.mesh.n_vertices();
        let mut sys = BlockSystem::new([n, n, n]);
        for (row, cols) in blocks.into_iter().enumerate() {
            for (col, m) in cols.into_iter().enumerate() {
                sys.set_block(row, col, m)?;
            }
        }
        for (row, v) in r.into_iter().enumerate() {
            sys.set_rhs(row, v.into_iter().map(|x| -x).collect())?;
        }
        Ok(sys)
    }

    fn jacobian_blocks(&self, x: &State) -> Result<[[CsrMatrix; 3]; 3], StepError> {
        let cfg = &self.cfg;
        let model = &self.model;
        let mesh = self.mesh;
        let k_i = fem::assemble_frozen(mesh, &self.laws.intra, &x.ui, RegionFilter::Tissue)?;
        let k_e = fem::assemble_frozen(mesh, &self.laws.extra, &x.ue, RegionFilter::All)?;
        let mut d = self.m_tissue.scaled(1.0 / cfg.dt);
        if self.newton() {
            let u = sub(&x.ui, &x.ue);
            let h = fem::midpoint_weighted_mass(mesh, &u, |um| model.cubic_derivative(um));
            d = CsrMatrix::linear_combination(&[(1.0, &d), (1.0, &h)]);
        }
        let c = model.coupling();
        let s = model.w_sign();
        let m = &self.m_tissue;
        Ok([
            [
                CsrMatrix::linear_combination(&[(1.0, &d), (1.0, &k_i), (cfg.epsilon, &self.m_shell)]),
                d.scaled(-1.0),
                m.scaled(c),
            ],
            [
                d.scaled(-1.0),
                CsrMatrix::linear_combination(&[(1.0, &d), (1.0, &k_e), (cfg.epsilon, m)]),
                m.scaled(-c),
            ],
            [
                m.scaled(c * s),
                m.scaled(-c * s),
                CsrMatrix::linear_combination(&[(model.tau / cfg.dt + c * model.mu, m), (cfg.epsilon, &self.m_shell)]),
            ],
        ])
    }

    fn monolithic_jacobian(&self, x: &State) -> Result<CsrMatrix, StepError> {
        let assemble = || -> Result<CsrMatrix, StepError> {
            let n = self.mesh.n_vertices();
            let mut sys = BlockSystem::new([n, n, n]);
            for (row, cols) in self.jacobian_blocks(x)?.into_iter().enumerate() {
                for (col, m) in cols.into_iter().enumerate() {
                    sys.set_block(row, col, m)?;
                }
            }
            Ok(sys.monolithic_matrix())
        };
        if self.state_independent() {
            if let Some(m) = self.constant_matrix.get() {
                return Ok(m.clone());
            }
            let m = assemble()?;
            let _ = self.constant_matrix.set(m.clone());
            return Ok(m);
        }
        assemble()
    }

    fn solve(&self, a: &CsrMatrix, b: &[f64]) -> Result<Solution, StepError> {
        let ls = &self.cfg.linear_solver;
        let opts = SolverOptions {
            tol: ls.tol,
            max_iter: ls.max_iter,
            jacobi: ls.jacobi,
            check_symmetry: false,
            deflation: Some(self.null_vector.clone()),
        };
        let result = match ls.kind {
            SolverKind::Cg => cg_solve(a, b, None, &opts),
            SolverKind::BiCgStab => bicgstab_solve(a, b, None, &opts),
        };
        match result {
            Ok(sol) => Ok(sol),
            Err(LinalgError::NotConverged { .. }) if a.n_rows() <= linalg::DENSE_FALLBACK_LIMIT => {
                let x = DenseMatrix::from_csr(a).solve(b)?;
                let ax = a.spmv(&x)?;
                let residual = linalg::norm2(&sub(&ax, b));
                Ok(Solution { x, iterations: 0, residual })
            }
            Err(e) => Err(e.into()),
        }
    }

    fn residual_norm(r: &[Vec<f64>; 3]) -> f64 {
        r.iter().flat_map(|v| v.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Advances `prev` by one time step.
    pub fn step(&self, prev: &State) -> Result<(State, StepStats), StepError> {
        self.check(prev)?;
        let t_next = prev.t + self.cfg.dt;
        let load = self.stimulus_load(prev.t);
        let mut x = prev.clone();
        x.t = t_next;
        let mut r = self.residual(&x, prev, &load)?;
        let reference = Self::residual_norm(&r);
        let newton = self.newton();
        let picard = self.picard();
        let newton_cfg = match self.cfg.nonlinearity {
            Nonlinearity::Newton { max_iter, tol } => Some((max_iter, tol)),
            Nonlinearity::Explicit => None,
        };
        let picard_cfg = match self.cfg.flux_iteration {
            FluxIteration::Picard { max_iter, tol } if picard => Some((max_iter, tol)),
            _ if picard => return Err(StepError::InvalidConfig("p-power laws require Picard iteration".into())),
            _ => None,
        };
        let max_outer = newton_cfg.map_or(1, |c| c.0).max(picard_cfg.map_or(1, |c| c.0));
        let mut coefficients = if picard { Some(self.coefficients(&x)?) } else { None };
        let mut stats = StepStats {
            outer_iterations: 0,
            linear_iterations: 0,
            history: Vec::new(),
            residual_reference: reference,
            residual: reference,
            elliptic_residual: 0.0,
            psi_residual: 0.0,
        };
        let n = self.mesh.n_vertices();
        let ip = self.tau_product();
        loop {
            let r_norm = Self::residual_norm(&r);
            if r_norm <= linalg::ABSOLUTE_FLOOR {
                break;
            }
            let a = self.monolithic_jacobian(&x)?;
            let rhs: Vec<f64> = r.iter().flat_map(|v| v.iter()).map(|v| -v).collect();
            let sol = self.solve(&a, &rhs)?;
            stats.linear_iterations += sol.iterations;
            stats.outer_iterations += 1;
            let base = x.stacked();
            let mut alpha = 1.0;
            let make = |alpha: f64| {
                let v: Vec<f64> = base.iter().zip(&sol.x).map(|(b, d)| b + alpha * d).collect();
                State::from_stacked(t_next, &v)
            };
            let mut trial = make(alpha);
            let mut r_trial = self.residual(&trial, prev, &load)?;
            if newton {
                for _ in 0..8 {
                    if Self::residual_norm(&r_trial) <= r_norm {
                        break;
                    }
                    alpha *= 0.5;
                    trial = make(alpha);
                    r_trial = self.residual(&trial, prev, &load)?;
                }
            }
            x = trial;
            r = r_trial;
            if !newton && !picard {
                break;
            }
            let mut done = true;
            let mut measure = 0.0f64;
            if let Some((_, tol)) = newton_cfg {
                let du: Vec<f64> = (0..n).map(|j| alpha * (sol.x[j] - sol.x[n + j])).collect();
                let dw: Vec<f64> = (0..n).map(|j| alpha * sol.x[2 * n + j]).collect();
                let inc = energy::tau_norm(&du, &dw, &ip)?;
                measure = measure.max(inc);
                done &= inc <= tol;
            }
            if let Some((_, tol)) = picard_cfg {
                let next = self.coefficients(&x)?;
                let prev_c = coefficients.as_ref().expect("Picard coefficients");
                let scale = prev_c.iter().chain(&next).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
                let change = prev_c.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
                measure = measure.max(change);
                done &= change <= tol;
                coefficients = Some(next);
            }
            stats.history.push(measure);
            if done {
                break;
            }
            if stats.outer_iterations >= max_outer {
                let iteration = if newton { "Newton" } else { "Picard" };
                return Err(StepError::NotConverged { iteration, history: stats.history });
            }
        }
        stats.residual = Self::residual_norm(&r);
        stats.psi_residual = linalg::norm2(&r[1]);
        let elliptic: Vec<f64> = r[0].iter().zip(&r[1]).map(|(a, b)| a + b).collect();
        stats.elliptic_residual = linalg::norm2(&elliptic);
        Ok((x, stats))
    }

    fn coefficients(&self, x: &State) -> Result<Vec<f64>, StepError> {
        let mut c = fem::frozen_coefficients(self.mesh, &self.laws.intra, &x.ui, RegionFilter::Tissue)?;
        c.extend(fem::frozen_coefficients(self.mesh, &self.laws.extra, &x.ue, RegionFilter::All)?);
        Ok(c)
    }

    /// `∫_Ω u_e`.
    pub fn mean_extracellular(&self, s: &State) -> f64 {
        linalg::dot(&self.tissue_ones, &s.ue)
    }

    /// Runs `options.n_steps` steps from `initial`. On failure the trajectory
    /// recorded so far is returned alongside the error.
    pub fn run(&self, initial: State, probes: &[Probe], options: &RunOptions) -> Result<Trajectory, Box<RunFailure>> {
        let mut traj = Trajectory::default();
        let record = |traj: &mut Trajectory, s: &State, k: usize| -> Result<(), StepError> {
            traj.times.push(s.t);
            traj.energy.push(energy::energy_eval(s, self.mesh, &self.laws, &self.model)?);
            traj.penalized_energy.push(energy::penalized_energy(s, self.mesh, &self.laws, &self.model, self.cfg.epsilon)?);
            traj.mean_ue.push(self.mean_extracellular(s));
            if k % options.output_every.max(1) == 0 {
                let u = s.transmembrane(self.mesh);
                traj.output_times.push(s.t);
                traj.probe_u.push(probes.iter().map(|p| p.value(self.mesh, &u)).collect());
                traj.probe_ue.push(probes.iter().map(|p| p.value(self.mesh, &s.ue)).collect());
            }
            if options.snapshot_every.is_some_and(|c| c > 0 && k % c == 0) {
                traj.snapshots.push(s.clone());
            }
            Ok(())
        };
        let fail = |traj: Trajectory, error: StepError| Box::new(RunFailure { error, partial: traj });
        if let Err(e) = self.check(&initial).and_then(|_| record(&mut traj, &initial, 0)) {
            return Err(fail(traj, e));
        }
        let t0 = initial.t;
        let mut state = initial;
        for k in 1..=options.n_steps {
            match self.step(&state) {
                Ok((mut next, stats)) => {
                    // Avoid drift from repeated addition of dt.
                    next.t = t0 + k as f64 * self.cfg.dt;
                    traj.stats.push(stats);
                    state = next;
                    if let Err(e) = record(&mut traj, &state, k) {
                        return Err(fail(traj, e));
                    }
                }
                Err(e) => {
                    traj.final_state = Some(state);
                    return Err(fail(traj, e));
                }
            }
        }
        traj.final_state = Some(state);
        Ok(traj)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub n_steps: usize,
    /// Probe values are recorded every `output_every` steps (and at the start).
    pub output_every: usize,
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    /// Time of every recorded state, starting with the initial one.
    pub times: Vec<f64>,
    pub energy: Vec<EnergyReport>,
    /// Energy including the regularization terms; the quantity the scheme decreases.
    pub penalized_energy: Vec<f64>,
    pub mean_ue: Vec<f64>,
    /// One entry per accepted step.
    pub stats: Vec<StepStats>,
    pub output_times: Vec<f64>,
    /// `[output][probe]` values of `u = u_i − u_e`.
    pub probe_u: Vec<Vec<f64>>,
    pub probe_ue: Vec<Vec<f64>>,
    pub snapshots: Vec<State>,
    pub final_state: Option<State>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("run aborted after {} steps: {error}", partial.stats.len())]
pub struct RunFailure {
    pub error: StepError,
    pub partial: Trajectory,
}

/// Residual of the step equations with zero time derivative and no stimulus
/// (Newton treatment of `G'`): the gradient of the penalized energy in gradient mode.
pub fn stationary_residual(
    state: &State,
    mesh: &TriMesh,
    laws: &BidomainLaws,
    model: &IonicModel,
    epsilon: f64,
) -> Result<[Vec<f64>; 3], StepError> {
    let cfg = StepConfig {
        dt: 1.0,
        epsilon,
        nonlinearity: Nonlinearity::Newton { max_iter: 1, tol: 1.0 },
        flux_iteration: FluxIteration::Picard { max_iter: 1, tol: 1.0 },
        linear_solver: LinearSolver::default(),
    };
    let stepper = Stepper::new(mesh, *laws, *model, cfg, None)?;
    let load = vec![0.0; mesh.n_vertices()];
    stepper.residual(state, state, &load)
}
