//! Text writers: probe and energy CSV, legacy-VTK snapshots.
//!
//! Floats are written with 17 significant digits so values round-trip exactly.

use std::fmt::Write;

use thiserror::Error;

use crate::fem;
use crate::mesh::TriMesh;
use crate::stepper::{State, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OutputError {
    #[error("probe ({x}, {y}) lies outside the mesh")]
    ProbeOutside { x: f64, y: f64 },
    #[error("field has length {found}, mesh has {expected} vertices")]
    DimensionMismatch { expected: usize, found: usize },
}

/// 17 significant digits in scientific notation; `-0` is written as `0`.
pub fn fmt_f64(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

/// A point with its containing triangle and barycentric weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub point: [f64; 2],
    pub triangle: usize,
    pub weights: [f64; 3],
}

impl Probe {
    pub fn locate(mesh: &TriMesh, point: [f64; 2]) -> Result<Probe, OutputError> {
        let (triangle, weights) = mesh.locate(point[0], point[1]).ok_or(OutputError::ProbeOutside { x: point[0], y: point[1] })?;
        Ok(Probe { point, triangle, weights })
    }

    pub fn value(&self, mesh: &TriMesh, field: &[f64]) -> f64 {
        fem::interpolate(mesh, field, self.triangle, self.weights)
    }
}

pub fn locate_probes(mesh: &TriMesh, points: &[[f64; 2]]) -> Result<Vec<Probe>, OutputError> {
    points.iter().map(|&p| Probe::locate(mesh, p)).collect()
}

/// Header `t,u@p1,...,ue@p1,...` and one row per recorded output time.
pub fn probe_series_csv(traj: &Trajectory, n_probes: usize) -> String {
    let mut out = String::from("t");
    for k in 1..=n_probes {
        write!(out, ",u@p{k}").unwrap();
    }
    for k in 1..=n_probes {
        write!(out, ",ue@p{k}").unwrap();
    }
    out.push('\n');
    for (i, t) in traj.output_times.iter().enumerate() {
        out.push_str(&fmt_f64(*t));
        for v in traj.probe_u[i].iter().chain(&traj.probe_ue[i]) {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn energy_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,intra_flux,extra_flux,ionic,total,penalized,mean_ue\n");
    for (i, t) in traj.times.iter().enumerate() {
        let e = &traj.energy[i];
        let row = [*t, e.intra_flux, e.extra_flux, e.ionic, e.total, traj.penalized_energy[i], traj.mean_ue[i]];
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Legacy ASCII unstructured grid with point arrays `ui`, `ue`, `w`, `u` and cell array `region`.
pub fn snapshot_vtk(state: &State, mesh: &TriMesh) -> Result<String, OutputError> {
    let n = mesh.n_vertices();
    for f in [&state.ui, &state.ue, &state.w] {
        if f.len() != n {
            return Err(OutputError::DimensionMismatch { expected: n, found: f.len() });
        }
    }
    let m = mesh.n_triangles();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    writeln!(out, "bidomain t={}", fmt_f64(state.t)).unwrap();
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(out, "POINTS {n} double").unwrap();
    for p in mesh.vertices() {
        writeln!(out, "{} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(0.0)).unwrap();
    }
    writeln!(out, "CELLS {m} {}", 4 * m).unwrap();
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t.vertices[0], t.vertices[1], t.vertices[2]).unwrap();
    }
    writeln!(out, "CELL_TYPES {m}").unwrap();
    for _ in 0..m {
        out.push_str("5\n");
    }
    writeln!(out, "POINT_DATA {n}").unwrap();
    let u = state.transmembrane(mesh);
    for (name, field) in [("ui", &state.ui), ("ue", &state.ue), ("w", &state.w), ("u", &u)] {
        writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for v in field.iter() {
            out.push_str(&fmt_f64(*v));
            out.push('\n');
        }
    }
    writeln!(out, "CELL_DATA {m}").unwrap();
    out.push_str("SCALARS region int 1\nLOOKUP_TABLE default\n");
    for t in mesh.triangles() {
        writeln!(out, "{}", t.region.code()).unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_nested_rect, Rect};

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(-0.0), fmt_f64(0.0));
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn probes_interpolate() {
        let mesh = generate_nested_rect(Rect::new(0.25, 0.25, 0.75, 0.75), Rect::new(0.0, 0.0, 1.0, 1.0), 0.25).unwrap();
        let field: Vec<f64> = (0..mesh.n_vertices()).map(|i| (i * i) as f64 * 0.1).collect();
        let v = 3;
        let p = Probe::locate(&mesh, mesh.vertices()[v]).unwrap();
        assert_eq!(p.value(&mesh, &field), field[v]);
        let [a, b, c] = mesh.triangle_coords(5);
        let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
        let p = Probe::locate(&mesh, centroid).unwrap();
        let tri = mesh.triangles()[p.triangle].vertices;
        let mean = (field[tri[0]] + field[tri[1]] + field[tri[2]]) / 3.0;
        assert!((p.value(&mesh, &field) - mean).abs() < 1e-14);
        assert_eq!(Probe::locate(&mesh, [2.0, 0.5]), Err(OutputError::ProbeOutside { x: 2.0, y: 0.5 }));
    }

    #[test]
    fn probe_csv_layout() {
        let traj = Trajectory {
            output_times: vec![0.0, 0.5],
            probe_u: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            probe_ue: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            ..Default::default()
        };
        let csv = probe_series_csv(&traj, 2);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,u@p1,u@p2,ue@p1,ue@p2");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].split(',').skip(1).all(|c| c.parse::<f64>().unwrap() == 0.0));
    }

    #[test]
    fn snapshot_transmembrane_is_zero_on_shell() {
        let mesh = generate_nested_rect(Rect::new(0.25, 0.25, 0.75, 0.75), Rect::new(0.0, 0.0, 1.0, 1.0), 0.25).unwrap();
        let n = mesh.n_vertices();
        let state = State { t: 0.0, ui: vec![1.0; n], ue: vec![0.25; n], w: vec![0.5; n] };
        let text = snapshot_vtk(&state, &mesh).unwrap();
        let start = text.find("SCALARS u double").unwrap();
        let values: Vec<f64> = text[start..].lines().skip(2).take(n).map(|l| l.parse().unwrap()).collect();
        for v in 0..n {
            let expected = if mesh.is_tissue_node(v) { 0.75 } else { 0.0 };
            assert_eq!(values[v], expected);
        }
        assert!(snapshot_vtk(&State::zeros(n + 1), &mesh).is_err());
    }
}
