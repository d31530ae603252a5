use std::path::PathBuf;

use bidomain::mesh::{Region, Triangle, TriMesh};
use bidomain::output::snapshot_vtk;
use bidomain::{parse_config, render_config, State};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn unit_square() -> TriMesh {
    TriMesh::from_parts(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        vec![
            Triangle { vertices: [0, 1, 2], region: Region::Tissue },
            Triangle { vertices: [0, 2, 3], region: Region::Tissue },
        ],
    )
}

/// Set `BIDOMAIN_BLESS=1` to rewrite the golden file after an intended format change.
#[test]
fn zero_state_snapshot_matches_golden() {
    let text = snapshot_vtk(&State::zeros(4), &unit_square()).unwrap();
    let path = data("square_zero.vtk");
    if std::env::var_os("BIDOMAIN_BLESS").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read(&path).unwrap();
    assert_eq!(text.as_bytes(), golden.as_slice());
}

#[test]
fn shipped_configs_round_trip() {
    for name in ["disk_fhn.cfg", "brain2d.cfg"] {
        let text = std::fs::read_to_string(configs_dir().join(name)).unwrap();
        let config = parse_config(&text).unwrap();
        assert_eq!(parse_config(&render_config(&config)).unwrap(), config, "{name}");
    }
}

#[test]
fn shipped_configs_carry_reference_values() {
    use bidomain::config::{LawSpec, TensorSpec};

    let disk = parse_config(&std::fs::read_to_string(configs_dir().join("disk_fhn.cfg")).unwrap()).unwrap();
    assert_eq!(disk.laws.intra, LawSpec::Tensor(TensorSpec::Iso(0.638)));
    assert_eq!(disk.laws.extra, LawSpec::Tensor(TensorSpec::Iso(1.538)));
    let stim = disk.stimulus.unwrap();
    assert_eq!((stim.amplitude, stim.radius), (0.4, 0.1));

    let brain = parse_config(&std::fs::read_to_string(configs_dir().join("brain2d.cfg")).unwrap()).unwrap();
    assert_eq!(brain.laws.intra, LawSpec::Tensor(TensorSpec::Diag(0.41, 0.47)));
    assert_eq!(brain.laws.extra, LawSpec::Tensor(TensorSpec::Diag(0.29, 0.61)));
    assert_eq!(brain.laws.extra_shell, Some(TensorSpec::Iso(1.2)));
    assert!(brain.stimulus.is_none());
}

#[test]
fn shipped_configs_validate() {
    for name in ["disk_fhn.cfg", "brain2d.cfg"] {
        let exp = bidomain::Experiment::from_file(&configs_dir().join(name)).unwrap();
        for check in exp.validate().unwrap() {
            assert!(check.passed, "{name}: {} {}", check.name, check.detail);
        }
    }
}
