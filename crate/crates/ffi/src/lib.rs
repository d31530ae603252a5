//! C interface to the bidomain solver.
//!
//! Objects are opaque handles created by `bd_*_new`/`bd_*_load` style calls
//! and released with the matching `*_free`. Every fallible call returns a
//! [`BdStatus`]; on failure the message is available from
//! [`bd_last_error_message`] until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use bidomain::energy;
use bidomain::experiment::{Experiment, ExperimentError};
use bidomain::mesh::{self, TriMesh};
use bidomain::stepper::State;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    Mesh = 5,
    Solver = 6,
    BufferTooSmall = 7,
    Panic = 99,
}

/// Triangle mesh.
pub struct BdMesh {
    mesh: TriMesh,
}

/// A prepared configuration together with its current state.
pub struct BdExperiment {
    experiment: Experiment,
    state: State,
    steps_taken: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: BdStatus, message: impl Into<String>) -> BdStatus {
    set_error(message);
    status
}

fn experiment_status(e: &ExperimentError) -> BdStatus {
    match e {
        ExperimentError::Io { .. } => BdStatus::Io,
        ExperimentError::Mesh(_) => BdStatus::Mesh,
        _ if e.is_solver_failure() => BdStatus::Solver,
        _ => BdStatus::Config,
    }
}

fn guard(f: impl FnOnce() -> BdStatus) -> BdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(BdStatus::Panic, "internal panic"),
    }
}

unsafe fn c_str<'a>(s: *const c_char) -> Result<&'a str, BdStatus> {
    if s.is_null() {
        return Err(fail(BdStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(BdStatus::InvalidArgument, "string argument is not UTF-8"))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> BdStatus {
    *out = Box::into_raw(Box::new(value));
    BdStatus::Ok
}

/// Message for the last failing call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a disk mesh of the given radius and target edge length.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn bd_mesh_generate_disk(radius: f64, h: f64, out: *mut *mut BdMesh) -> BdStatus {
    guard(|| {
        if out.is_null() {
            return fail(BdStatus::NullPointer, "out is null");
        }
        match mesh::generate_disk(radius, h) {
            Ok(m) => store(out, BdMesh { mesh: m }),
            Err(e) => fail(BdStatus::Mesh, e.to_string()),
        }
    })
}

/// Generates a tissue disk of radius `inner` inside a shell of radius `outer`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn bd_mesh_generate_nested_disk(inner: f64, outer: f64, h: f64, out: *mut *mut BdMesh) -> BdStatus {
    guard(|| {
        if out.is_null() {
            return fail(BdStatus::NullPointer, "out is null");
        }
        match mesh::generate_nested_disk(inner, outer, h) {
            Ok(m) => store(out, BdMesh { mesh: m }),
            Err(e) => fail(BdStatus::Mesh, e.to_string()),
        }
    })
}

/// Loads a mesh file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bd_mesh_load(path: *const c_char, out: *mut *mut BdMesh) -> BdStatus {
    guard(|| {
        if out.is_null() {
            return fail(BdStatus::NullPointer, "out is null");
        }
        let path = match c_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(BdStatus::Io, format!("{path}: {e}")),
        };
        match mesh::load_mesh(&text) {
            Ok((m, _)) => store(out, BdMesh { mesh: m }),
            Err(e) => fail(BdStatus::Mesh, e.to_string()),
        }
    })
}

/// Number of vertices, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bd_mesh_vertex_count(mesh: *const BdMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.n_vertices())
}

/// Number of triangles, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bd_mesh_triangle_count(mesh: *const BdMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.n_triangles())
}

/// Copies interleaved `x, y` coordinates into `buf` (length `2 * vertex_count`).
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bd_mesh_vertices(mesh: *const BdMesh, buf: *mut f64, len: usize) -> BdStatus {
    guard(|| {
        let Some(m) = mesh.as_ref() else {
            return fail(BdStatus::NullPointer, "mesh is null");
        };
        let v = m.mesh.vertices();
        if buf.is_null() {
            return fail(BdStatus::NullPointer, "buf is null");
        }
        if len < 2 * v.len() {
            return fail(BdStatus::BufferTooSmall, format!("need {} doubles, got {len}", 2 * v.len()));
        }
        let out = std::slice::from_raw_parts_mut(buf, 2 * v.len());
        for (i, p) in v.iter().enumerate() {
            out[2 * i] = p[0];
            out[2 * i + 1] = p[1];
        }
        BdStatus::Ok
    })
}

/// Writes the mesh in the text mesh format.
///
/// # Safety
/// `mesh` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bd_mesh_write(mesh: *const BdMesh, path: *const c_char) -> BdStatus {
    guard(|| {
        let Some(m) = mesh.as_ref() else {
            return fail(BdStatus::NullPointer, "mesh is null");
        };
        let path = match c_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match std::fs::write(path, mesh::write_mesh(&m.mesh)) {
            Ok(()) => BdStatus::Ok,
            Err(e) => fail(BdStatus::Io, format!("{path}: {e}")),
        }
    })
}

/// # Safety
/// `mesh` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bd_mesh_free(mesh: *mut BdMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

fn new_experiment(experiment: Experiment) -> BdExperiment {
    let state = experiment.initial.clone();
    BdExperiment { experiment, state, steps_taken: 0 }
}

/// Loads and prepares a configuration file. Relative paths inside the config
/// resolve against the file's directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_load(path: *const c_char, out: *mut *mut BdExperiment) -> BdStatus {
    guard(|| {
        if out.is_null() {
            return fail(BdStatus::NullPointer, "out is null");
        }
        let path = match c_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match Experiment::from_file(Path::new(path)) {
            Ok(e) => store(out, new_experiment(e)),
            Err(e) => fail(experiment_status(&e), e.to_string()),
        }
    })
}

/// Prepares a configuration given as text. Mesh files resolve against the
/// current directory.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_parse(text: *const c_char, out: *mut *mut BdExperiment) -> BdStatus {
    guard(|| {
        if out.is_null() {
            return fail(BdStatus::NullPointer, "out is null");
        }
        let text = match c_str(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let config = match bidomain::parse_config(text) {
            Ok(c) => c,
            Err(e) => return fail(BdStatus::Config, e.to_string()),
        };
        match Experiment::prepare(config, Path::new(".")) {
            Ok(e) => store(out, new_experiment(e)),
            Err(e) => fail(experiment_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `exp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_vertex_count(exp: *const BdExperiment) -> usize {
    exp.as_ref().map_or(0, |e| e.experiment.mesh.n_vertices())
}

/// # Safety
/// `exp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_probe_count(exp: *const BdExperiment) -> usize {
    exp.as_ref().map_or(0, |e| e.experiment.probes.len())
}

/// Number of steps in the configured horizon.
///
/// # Safety
/// `exp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_total_steps(exp: *const BdExperiment) -> usize {
    exp.as_ref().map_or(0, |e| e.experiment.config.stepper.n_steps())
}

/// Current simulated time, or NaN for a null handle.
///
/// # Safety
/// `exp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_time(exp: *const BdExperiment) -> f64 {
    exp.as_ref().map_or(f64::NAN, |e| e.state.t)
}

/// Advances the current state by `n_steps` time steps. On solver failure the
/// state is left at the last accepted step.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_advance(exp: *mut BdExperiment, n_steps: usize) -> BdStatus {
    guard(|| {
        let Some(e) = exp.as_mut() else {
            return fail(BdStatus::NullPointer, "experiment is null");
        };
        let stepper = match e.experiment.stepper() {
            Ok(s) => s,
            Err(err) => return fail(BdStatus::Config, err.to_string()),
        };
        let t0 = e.experiment.initial.t;
        let dt = e.experiment.step.dt;
        for _ in 0..n_steps {
            match stepper.step(&e.state) {
                Ok((mut next, _)) => {
                    e.steps_taken += 1;
                    next.t = t0 + e.steps_taken as f64 * dt;
                    e.state = next;
                }
                Err(err) => return fail(BdStatus::Solver, err.to_string()),
            }
        }
        BdStatus::Ok
    })
}

/// Restores the initial state.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_reset(exp: *mut BdExperiment) -> BdStatus {
    let Some(e) = exp.as_mut() else {
        return fail(BdStatus::NullPointer, "experiment is null");
    };
    e.state = e.experiment.initial.clone();
    e.steps_taken = 0;
    BdStatus::Ok
}

/// Energy of the current state.
///
/// # Safety
/// `exp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_energy(exp: *const BdExperiment, out: *mut f64) -> BdStatus {
    guard(|| {
        let Some(e) = exp.as_ref() else {
            return fail(BdStatus::NullPointer, "experiment is null");
        };
        if out.is_null() {
            return fail(BdStatus::NullPointer, "out is null");
        }
        let x = &e.experiment;
        match energy::energy_eval(&e.state, &x.mesh, &x.laws, &x.model) {
            Ok(r) => {
                *out = r.total;
                BdStatus::Ok
            }
            Err(err) => fail(BdStatus::InvalidArgument, err.to_string()),
        }
    })
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> BdStatus {
    if buf.is_null() {
        return fail(BdStatus::NullPointer, "buf is null");
    }
    if len < values.len() {
        return fail(BdStatus::BufferTooSmall, format!("need {} doubles, got {len}", values.len()));
    }
    std::slice::from_raw_parts_mut(buf, values.len()).copy_from_slice(values);
    BdStatus::Ok
}

/// Nodal field of the current state: 0 = `u_i`, 1 = `u_e`, 2 = `w`,
/// 3 = `u = u_i − u_e` (zero on shell-only nodes).
///
/// # Safety
/// `exp` must be a live handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_field(exp: *const BdExperiment, which: u32, buf: *mut f64, len: usize) -> BdStatus {
    guard(|| {
        let Some(e) = exp.as_ref() else {
            return fail(BdStatus::NullPointer, "experiment is null");
        };
        match which {
            0..=2 => copy_out(e.state.field(which as usize), buf, len),
            3 => copy_out(&e.state.transmembrane(&e.experiment.mesh), buf, len),
            _ => fail(BdStatus::InvalidArgument, format!("unknown field {which}")),
        }
    })
}

/// Transmembrane potential at each configured probe.
///
/// # Safety
/// `exp` must be a live handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_probe_values(exp: *const BdExperiment, buf: *mut f64, len: usize) -> BdStatus {
    guard(|| {
        let Some(e) = exp.as_ref() else {
            return fail(BdStatus::NullPointer, "experiment is null");
        };
        let mesh = &e.experiment.mesh;
        let u = e.state.transmembrane(mesh);
        let values: Vec<f64> = e.experiment.probes.iter().map(|p| p.value(mesh, &u)).collect();
        copy_out(&values, buf, len)
    })
}

/// Runs the full configured horizon from the initial state and writes
/// `probes.csv`, `energy.csv` and snapshots into `out_dir`. Partial outputs
/// are written when the solver fails.
///
/// # Safety
/// `exp` must be a live handle and `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_run(exp: *const BdExperiment, out_dir: *const c_char) -> BdStatus {
    guard(|| {
        let Some(e) = exp.as_ref() else {
            return fail(BdStatus::NullPointer, "experiment is null");
        };
        let dir = match c_str(out_dir) {
            Ok(d) => Path::new(d),
            Err(s) => return s,
        };
        let (traj, error) = match e.experiment.run() {
            Ok(t) => (t, None),
            Err(ExperimentError::Run(f)) => (f.partial.clone(), Some(ExperimentError::Run(f))),
            Err(err) => return fail(experiment_status(&err), err.to_string()),
        };
        if let Err(err) = e.experiment.write_outputs(&traj, dir) {
            return fail(experiment_status(&err), err.to_string());
        }
        match error {
            Some(err) => fail(experiment_status(&err), err.to_string()),
            None => BdStatus::Ok,
        }
    })
}

/// # Safety
/// `exp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bd_experiment_free(exp: *mut BdExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}
