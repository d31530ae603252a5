use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use bidomain_ffi::*;

const SMALL: &str = "
[mesh]
generator = disk
radius = 1.0
h = 0.25

[laws]
M_i = iso(0.638)
M_e = iso(1.538)

[stepper]
dt = 0.1
t_end = 1.0

[stimulus]
amplitude = 0.4
center = (0.0, 0.0)
radius = 0.3
start = 0.0
end = 0.5

[probes]
point = (0.0, 0.0)
point = (0.5, 0.0)
";

fn last_error() -> String {
    let p = bd_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn parse(text: &str) -> *mut BdExperiment {
    let c = CString::new(text).unwrap();
    let mut exp = ptr::null_mut();
    assert_eq!(unsafe { bd_experiment_parse(c.as_ptr(), &mut exp) }, BdStatus::Ok);
    exp
}

#[test]
fn mesh_handle_roundtrip() {
    let mut mesh = ptr::null_mut();
    unsafe {
        assert_eq!(bd_mesh_generate_disk(1.0, 0.3, &mut mesh), BdStatus::Ok);
        let n = bd_mesh_vertex_count(mesh);
        assert!(n > 10);
        assert!(bd_mesh_triangle_count(mesh) > n);
        let mut xy = vec![0.0; 2 * n];
        assert_eq!(bd_mesh_vertices(mesh, xy.as_mut_ptr(), xy.len()), BdStatus::Ok);
        assert!(xy.chunks(2).all(|p| p[0].hypot(p[1]) <= 1.0 + 1e-12));
        assert_eq!(bd_mesh_vertices(mesh, xy.as_mut_ptr(), 3), BdStatus::BufferTooSmall);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("disk.mesh").to_str().unwrap()).unwrap();
        assert_eq!(bd_mesh_write(mesh, path.as_ptr()), BdStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(bd_mesh_load(path.as_ptr(), &mut loaded), BdStatus::Ok);
        assert_eq!(bd_mesh_vertex_count(loaded), n);
        bd_mesh_free(loaded);
        bd_mesh_free(mesh);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut mesh = ptr::null_mut();
    unsafe {
        assert_eq!(bd_mesh_generate_disk(1.0, -1.0, &mut mesh), BdStatus::Mesh);
        assert!(mesh.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(bd_mesh_generate_disk(1.0, 0.3, ptr::null_mut()), BdStatus::NullPointer);
        let missing = CString::new("/nonexistent/dir/x.cfg").unwrap();
        let mut exp = ptr::null_mut();
        assert_eq!(bd_experiment_load(missing.as_ptr(), &mut exp), BdStatus::Io);
        assert!(last_error().contains("x.cfg"));
        let bad = CString::new("[stepper]\ndt = -1\n").unwrap();
        assert_eq!(bd_experiment_parse(bad.as_ptr(), &mut exp), BdStatus::Config);
        assert_eq!(bd_experiment_advance(ptr::null_mut(), 1), BdStatus::NullPointer);
        assert_eq!(bd_mesh_vertex_count(ptr::null()), 0);
        assert!(bd_experiment_time(ptr::null()).is_nan());
        bd_mesh_free(ptr::null_mut());
        bd_experiment_free(ptr::null_mut());
    }
}

#[test]
fn stepping_through_handle_matches_library() {
    let exp = parse(SMALL);
    unsafe {
        let n = bd_experiment_vertex_count(exp);
        assert_eq!(bd_experiment_total_steps(exp), 10);
        assert_eq!(bd_experiment_probe_count(exp), 2);
        assert_eq!(bd_experiment_advance(exp, 10), BdStatus::Ok);
        assert!((bd_experiment_time(exp) - 1.0).abs() < 1e-15);

        let mut u = vec![0.0; n];
        assert_eq!(bd_experiment_field(exp, 3, u.as_mut_ptr(), n), BdStatus::Ok);
        let mut probes = [0.0; 2];
        assert_eq!(bd_experiment_probe_values(exp, probes.as_mut_ptr(), 2), BdStatus::Ok);
        assert!(probes[0] > probes[1] && probes[1] > 0.0);
        assert_eq!(bd_experiment_field(exp, 7, u.as_mut_ptr(), n), BdStatus::InvalidArgument);

        let experiment = bidomain::Experiment::prepare(bidomain::parse_config(SMALL).unwrap(), std::path::Path::new(".")).unwrap();
        let traj = experiment.run().unwrap();
        let expected = traj.final_state.unwrap().transmembrane(&experiment.mesh);
        assert_eq!(u, expected);

        let mut e = 0.0;
        assert_eq!(bd_experiment_energy(exp, &mut e), BdStatus::Ok);
        assert!(e.is_finite());
        assert_eq!(bd_experiment_reset(exp), BdStatus::Ok);
        assert_eq!(bd_experiment_time(exp), 0.0);
        bd_experiment_free(exp);
    }
}

#[test]
fn run_writes_outputs() {
    let exp = parse(SMALL);
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(bd_experiment_run(exp, out.as_ptr()), BdStatus::Ok);
        bd_experiment_free(exp);
    }
    let probes = std::fs::read_to_string(dir.path().join("probes.csv")).unwrap();
    assert!(probes.starts_with("t,u@p1,u@p2,ue@p1,ue@p2\n"));
    assert_eq!(probes.lines().count(), 12);
    assert!(dir.path().join("energy.csv").exists());
}

#[test]
fn header_is_valid_c() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/bidomain.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["bd_experiment_advance", "bd_last_error_message", "BD_STATUS_SOLVER", "typedef struct BdMesh BdMesh"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        return;
    };
    if !cc.status.success() {
        return;
    }
    let status = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header).status().unwrap();
    assert!(status.success());
}
