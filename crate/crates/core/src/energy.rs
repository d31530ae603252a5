//! Discrete energy, the τ-weighted inner product, and monitors for decay and
//! finite-difference gradient consistency.

use thiserror::Error;

use crate::fem::{self, FemError, RegionFilter};
use crate::linalg::CsrMatrix;
use crate::mesh::TriMesh;
use crate::physics::{BidomainLaws, IonicModel};
use crate::stepper::{stationary_residual, State, StepError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("field has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Fem(#[from] FemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyReport {
    pub intra_flux: f64,
    pub extra_flux: f64,
    pub ionic: f64,
    pub total: f64,
}

fn check_state(state: &State, mesh: &TriMesh) -> Result<(), EnergyError> {
    let n = mesh.n_vertices();
    for field in [&state.ui, &state.ue, &state.w] {
        if field.len() != n {
            return Err(EnergyError::DimensionMismatch { expected: n, found: field.len() });
        }
    }
    Ok(())
}

/// `E = ∫_Ω Q_i(∇u_i) + ∫_Ω̂ Q_e(∇u_e) + ∫_Ω F(u_i − u_e, w)`.
pub fn energy_eval(state: &State, mesh: &TriMesh, laws: &BidomainLaws, model: &IonicModel) -> Result<EnergyReport, EnergyError> {
    check_state(state, mesh)?;
    let intra_flux = fem::flux_energy(mesh, &laws.intra, &state.ui, RegionFilter::Tissue)?;
    let extra_flux = fem::flux_energy(mesh, &laws.extra, &state.ue, RegionFilter::All)?;
    let u: Vec<f64> = state.ui.iter().zip(&state.ue).map(|(a, b)| a - b).collect();
    let ionic = fem::ionic_energy(mesh, model, &u, &state.w);
    Ok(EnergyReport { intra_flux, extra_flux, ionic, total: intra_flux + extra_flux + ionic })
}

fn quadratic_form(m: &CsrMatrix, x: &[f64]) -> f64 {
    m.triplets().map(|(r, c, v)| x[r] * v * x[c]).sum()
}

/// Regularization energy `ε/2 (u_iᵀ M_S u_i + u_eᵀ M_Ω u_e + wᵀ M_S w)`.
/// The stepper is the exact discrete gradient flow of `E` plus this term.
pub fn regularization_energy(state: &State, mesh: &TriMesh, epsilon: f64) -> Result<f64, EnergyError> {
    check_state(state, mesh)?;
    Ok(Penalty::new(mesh).energy(state, epsilon))
}

struct Penalty {
    shell: CsrMatrix,
    tissue: CsrMatrix,
}

impl Penalty {
    fn new(mesh: &TriMesh) -> Penalty {
        Penalty { shell: fem::shell_penalty_mass(mesh), tissue: fem::assemble_mass(mesh, RegionFilter::Tissue) }
    }

    fn energy(&self, state: &State, epsilon: f64) -> f64 {
        0.5 * epsilon
            * (quadratic_form(&self.shell, &state.ui) + quadratic_form(&self.tissue, &state.ue) + quadratic_form(&self.shell, &state.w))
    }
}

pub fn penalized_energy(
    state: &State,
    mesh: &TriMesh,
    laws: &BidomainLaws,
    model: &IonicModel,
    epsilon: f64,
) -> Result<f64, EnergyError> {
    Ok(energy_eval(state, mesh, laws, model)?.total + regularization_energy(state, mesh, epsilon)?)
}

/// `⟨(u,w),(û,ŵ)⟩_τ = uᵀ M_Ω û + τ wᵀ M_Ω ŵ` on full-length nodal vectors.
#[derive(Debug, Clone, Copy)]
pub struct TauInnerProduct<'a> {
    pub mass: &'a CsrMatrix,
    pub tau: f64,
}

impl<'a> TauInnerProduct<'a> {
    pub fn new(mass: &'a CsrMatrix, tau: f64) -> TauInnerProduct<'a> {
        TauInnerProduct { mass, tau }
    }

    pub fn inner(&self, u: &[f64], w: &[f64], u_hat: &[f64], w_hat: &[f64]) -> Result<f64, EnergyError> {
        let n = self.mass.n_rows();
        for v in [u, w, u_hat, w_hat] {
            if v.len() != n {
                return Err(EnergyError::DimensionMismatch { expected: n, found: v.len() });
            }
        }
        let mut total = 0.0;
        for (r, c, m) in self.mass.triplets() {
            total += m * (u[r] * u_hat[c] + self.tau * w[r] * w_hat[c]);
        }
        Ok(total)
    }
}

pub fn tau_norm(delta_u: &[f64], delta_w: &[f64], ip: &TauInnerProduct) -> Result<f64, EnergyError> {
    Ok(ip.inner(delta_u, delta_w, delta_u, delta_w)?.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayCheck {
    pub is_monotone: bool,
    pub max_uptick: f64,
}

pub fn default_decay_tolerance(e0: f64) -> f64 {
    1e-10 * (1.0 + e0.abs())
}

pub fn decay_monitor(reports: &[EnergyReport]) -> DecayCheck {
    let totals: Vec<f64> = reports.iter().map(|r| r.total).collect();
    let tol = totals.first().map_or(0.0, |&e0| default_decay_tolerance(e0));
    decay_check(&totals, tol)
}

/// Largest increase between consecutive values; monotone when it stays within `tol`.
pub fn decay_check(values: &[f64], tol: f64) -> DecayCheck {
    let max_uptick = values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let max_uptick = if values.len() < 2 { 0.0 } else { max_uptick };
    DecayCheck { is_monotone: max_uptick <= tol, max_uptick }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// `max_j |g_fd − g| / max_j |g|`.
    pub relative_error: f64,
    pub max_gradient: f64,
}

/// Compares the stepper's stationary residual with central differences of the
/// penalized energy over every nodal unknown `(u_i, u_e, w)`.
pub fn gradient_check(
    state: &State,
    mesh: &TriMesh,
    laws: &BidomainLaws,
    model: &IonicModel,
    epsilon: f64,
    h: f64,
) -> Result<GradientCheck, StepError> {
    let residual = stationary_residual(state, mesh, laws, model, epsilon)?;
    let penalty = Penalty::new(mesh);
    let energy = |s: &State| -> Result<f64, EnergyError> { Ok(energy_eval(s, mesh, laws, model)?.total + penalty.energy(s, epsilon)) };
    let n = mesh.n_vertices();
    let mut probe = state.clone();
    let mut max_diff: f64 = 0.0;
    let mut max_gradient: f64 = 0.0;
    for field in 0..3 {
        for j in 0..n {
            let original = probe.field(field)[j];
            let step = h * (1.0 + original.abs());
            probe.field_mut(field)[j] = original + step;
            let plus = energy(&probe)?;
            probe.field_mut(field)[j] = original - step;
            let minus = energy(&probe)?;
            probe.field_mut(field)[j] = original;
            let fd = (plus - minus) / (2.0 * step);
            let g = residual[field][j];
            max_diff = max_diff.max((fd - g).abs());
            max_gradient = max_gradient.max(g.abs());
        }
    }
    let relative_error = if max_gradient > 0.0 { max_diff / max_gradient } else { max_diff };
    Ok(GradientCheck { relative_error, max_gradient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_disk, Region, Triangle};
    use crate::physics::{FluxLaw, IonicMode, Tensor2};

    fn laws() -> BidomainLaws {
        BidomainLaws { intra: FluxLaw::uniform(Tensor2::iso(1.0).unwrap()), extra: FluxLaw::uniform(Tensor2::iso(1.0).unwrap()) }
    }

    fn fhn() -> IonicModel {
        IonicModel::fitzhugh_nagumo(0.1, 0.0, 0.5, 1.0, IonicMode::PureGradient).unwrap()
    }

    #[test]
    fn zero_state_has_zero_energy() {
        let mesh = generate_disk(1.0, 0.3).unwrap();
        let r = energy_eval(&State::zeros(mesh.n_vertices()), &mesh, &laws(), &fhn()).unwrap();
        assert_eq!(r, EnergyReport::default());
    }

    #[test]
    fn equal_potentials_have_no_ionic_energy() {
        let mesh = generate_disk(1.0, 0.3).unwrap();
        let field: Vec<f64> = mesh.vertices().iter().map(|p| 0.3 * p[0] - 0.2 * p[1]).collect();
        let state = State { t: 0.0, ui: field.clone(), ue: field, w: vec![0.0; mesh.n_vertices()] };
        let r = energy_eval(&state, &mesh, &laws(), &fhn()).unwrap();
        assert_eq!(r.ionic, 0.0);
        assert!(r.intra_flux > 0.0 && r.extra_flux > 0.0);
        assert!((r.total - (r.intra_flux + r.extra_flux + r.ionic)).abs() < 1e-12);
        // Constant gradient 0.13 over the disk area.
        let area = mesh.total_area();
        assert!((r.intra_flux - 0.5 * 0.13 * area).abs() < 1e-12);
    }

    #[test]
    fn single_triangle_intra_flux() {
        let mesh = TriMesh::from_parts(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![Triangle { vertices: [0, 1, 2], region: Region::Tissue }],
        );
        let state = State { t: 0.0, ui: vec![0.0, 1.0, 0.0], ue: vec![0.0; 3], w: vec![0.0; 3] };
        let model = IonicModel::passive(1.0);
        let r = energy_eval(&state, &mesh, &laws(), &model).unwrap();
        assert!((r.intra_flux - 0.25).abs() < 1e-15);
        assert_eq!(r.extra_flux, 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mesh = generate_disk(1.0, 0.5).unwrap();
        let state = State::zeros(mesh.n_vertices() + 1);
        assert!(matches!(energy_eval(&state, &mesh, &laws(), &fhn()), Err(EnergyError::DimensionMismatch { .. })));
    }

    #[test]
    fn tau_norm_scaling() {
        let mesh = generate_disk(1.0, 0.3).unwrap();
        let m = fem::assemble_mass(&mesh, RegionFilter::Tissue);
        let n = mesh.n_vertices();
        let zero = vec![0.0; n];
        let w: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let one = TauInnerProduct::new(&m, 1.0);
        let two = TauInnerProduct::new(&m, 2.0);
        assert_eq!(tau_norm(&zero, &zero, &one).unwrap(), 0.0);
        let l2 = tau_norm(&zero, &w, &one).unwrap();
        assert!((tau_norm(&zero, &w, &two).unwrap() - 2f64.sqrt() * l2).abs() < 1e-14);
        let l2_sq: f64 = quadratic_form(&m, &w);
        assert!((tau_norm(&w, &w, &one).unwrap() - (2.0 * l2_sq).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn decay_monitor_examples() {
        let report = |total| EnergyReport { total, ..Default::default() };
        let flat = decay_monitor(&[report(1.0), report(1.0), report(1.0)]);
        assert!(flat.is_monotone);
        assert_eq!(flat.max_uptick, 0.0);
        assert!(decay_monitor(&[report(3.0), report(2.0), report(1.0)]).is_monotone);
        let up = decay_monitor(&[report(1.0), report(2.0)]);
        assert!(!up.is_monotone);
        assert_eq!(up.max_uptick, 1.0);
    }
}
