use bidomain::mesh::{self, Rect, Region};
use bidomain::physics::{BidomainLaws, FluxLaw, IonicMode, IonicModel, RegionTensors, Tensor2};
use bidomain::stepper::{Nonlinearity, RunOptions, State, StepConfig, Stepper};
use bidomain::TriMesh;

fn laws() -> BidomainLaws {
    BidomainLaws { intra: FluxLaw::uniform(Tensor2::iso(0.638).unwrap()), extra: FluxLaw::uniform(Tensor2::iso(1.538).unwrap()) }
}

fn gradient_model() -> IonicModel {
    IonicModel::fitzhugh_nagumo(0.1, 0.0, 0.5, 1.0, IonicMode::PureGradient).unwrap()
}

fn bump(mesh: &TriMesh) -> State {
    let u0: Vec<f64> = mesh.vertices().iter().map(|p| (-(p[0] * p[0] + p[1] * p[1]) / 0.2).exp()).collect();
    State::from_initial(mesh, &u0, &vec![0.0; u0.len()]).unwrap()
}

fn solve_to(mesh: &TriMesh, dt: f64, t_end: f64) -> State {
    let mut cfg = StepConfig::new(dt, &laws());
    cfg.nonlinearity = Nonlinearity::Newton { max_iter: 30, tol: 1e-13 };
    cfg.linear_solver.tol = 1e-13;
    let stepper = Stepper::new(mesh, laws(), gradient_model(), cfg, None).unwrap();
    let n_steps = (t_end / dt).round() as usize;
    let traj = stepper.run(bump(mesh), &[], &RunOptions { n_steps, output_every: n_steps, snapshot_every: None }).unwrap();
    traj.final_state.unwrap()
}

#[test]
fn implicit_euler_is_first_order() {
    let disk = mesh::generate_disk(1.0, 0.25).unwrap();
    let (dt, t_end) = (0.1, 0.4);
    // A reference much finer than dt/2 keeps its own error out of the ratio.
    let reference = solve_to(&disk, dt / 64.0, t_end).transmembrane(&disk);
    let err = |s: &State| s.transmembrane(&disk).iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let coarse = err(&solve_to(&disk, dt, t_end));
    let fine = err(&solve_to(&disk, dt / 2.0, t_end));
    let order = (coarse / fine).log2();
    assert!((0.8..=1.2).contains(&order), "observed order {order}");
}

#[test]
fn zero_data_stays_zero() {
    let disk = mesh::generate_disk(1.0, 0.3).unwrap();
    let stepper = Stepper::new(&disk, laws(), gradient_model(), StepConfig::new(0.1, &laws()), None).unwrap();
    let traj = stepper.run(State::zeros(disk.n_vertices()), &[], &RunOptions { n_steps: 5, output_every: 1, snapshot_every: None }).unwrap();
    let last = traj.final_state.unwrap();
    assert!(last.ui.iter().chain(&last.ue).chain(&last.w).all(|&v| v == 0.0));
    assert!(traj.energy.iter().all(|e| e.total == 0.0));
}

#[test]
fn shell_conducts_extracellular_potential_only() {
    let mesh = mesh::generate_nested_rect(Rect::new(0.25, 0.25, 0.75, 0.75), Rect::new(0.0, 0.0, 1.0, 1.0), 0.0625).unwrap();
    let laws = BidomainLaws {
        intra: FluxLaw::tissue_only(Tensor2::diag(0.41, 0.47).unwrap()),
        extra: FluxLaw::Linear(RegionTensors { tissue: Some(Tensor2::diag(0.29, 0.61).unwrap()), shell: Some(Tensor2::iso(1.2).unwrap()) }),
    };
    let model = IonicModel::fitzhugh_nagumo(0.1, 0.0, 0.5, 1.0, IonicMode::Fhn).unwrap();
    let u0: Vec<f64> = mesh.vertices().iter().map(|p| if p[0] < 0.45 && p[1] < 0.45 { 1.0 } else { 0.0 }).collect();
    let initial = State::from_initial(&mesh, &u0, &vec![0.0; u0.len()]).unwrap();
    let stepper = Stepper::new(&mesh, laws, model, StepConfig::new(0.1, &laws), None).unwrap();
    let traj = stepper.run(initial, &[], &RunOptions { n_steps: 10, output_every: 10, snapshot_every: None }).unwrap();
    let last = traj.final_state.unwrap();
    let shell_only: Vec<usize> = (0..mesh.n_vertices()).filter(|&v| !mesh.is_tissue_node(v)).collect();
    assert!(!shell_only.is_empty());
    let shell_ue = shell_only.iter().map(|&v| last.ue[v].abs()).fold(0.0, f64::max);
    assert!(shell_ue > 1e-4, "u_e in shell {shell_ue}");
    let u = last.transmembrane(&mesh);
    assert!(shell_only.iter().all(|&v| u[v] == 0.0));
    let tissue_u = mesh.tissue_nodes().iter().map(|&v| u[v].abs()).fold(0.0, f64::max);
    // u_i and w are pinned near zero off the tissue by the ε-penalty.
    let pinned = shell_only.iter().map(|&v| last.ui[v].abs().max(last.w[v].abs())).fold(0.0, f64::max);
    assert!(tissue_u > 0.1 && pinned < 1e3 * tissue_u);
    assert!(mesh.triangles().iter().any(|t| t.region == Region::Shell));
}

#[test]
fn accepted_steps_carry_residual_certificate() {
    let disk = mesh::generate_disk(1.0, 0.2).unwrap();
    let mut cfg = StepConfig::new(0.2, &laws());
    cfg.nonlinearity = Nonlinearity::Newton { max_iter: 30, tol: 1e-12 };
    let stepper = Stepper::new(&disk, laws(), gradient_model(), cfg, None).unwrap();
    let traj = stepper.run(bump(&disk), &[], &RunOptions { n_steps: 20, output_every: 1, snapshot_every: Some(1) }).unwrap();
    for (k, s) in traj.stats.iter().enumerate() {
        assert!(s.elliptic_certified(cfg.linear_solver.tol, 10.0), "step {k}: {s:?}");
        assert!(s.residual <= 10.0 * cfg.linear_solver.tol * s.residual_reference.max(1e-14 / cfg.linear_solver.tol), "step {k}");
    }
}
