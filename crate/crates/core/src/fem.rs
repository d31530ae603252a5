//! P1 assembly over region-filtered triangles.
//!
//! All operators live on the full vertex set; a [`RegionFilter`] selects which
//! triangles contribute. Assembly is serial in triangle order, which makes
//! every matrix and vector bitwise reproducible.

use thiserror::Error;

use crate::linalg::CsrMatrix;
use crate::mesh::{Region, TriMesh};
use crate::physics::{FluxLaw, IonicModel, PhysicsError, Tensor2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("nodal vector has length {found}, mesh has {expected} vertices")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operation requires a {0} flux law")]
    WrongLaw(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionFilter {
    Tissue,
    Shell,
    All,
}

impl RegionFilter {
    pub fn accepts(self, region: Region) -> bool {
        match self {
            RegionFilter::Tissue => region == Region::Tissue,
            RegionFilter::Shell => region == Region::Shell,
            RegionFilter::All => true,
        }
    }
}

/// Area and constant basis-function gradients of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P1Element {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

impl P1Element {
    pub fn new(p: [[f64; 2]; 3]) -> P1Element {
        let area = crate::mesh::signed_area(p[0], p[1], p[2]);
        let s = 1.0 / (2.0 * area);
        let grads = [
            [(p[1][1] - p[2][1]) * s, (p[2][0] - p[1][0]) * s],
            [(p[2][1] - p[0][1]) * s, (p[0][0] - p[2][0]) * s],
            [(p[0][1] - p[1][1]) * s, (p[1][0] - p[0][0]) * s],
        ];
        P1Element { area, grads }
    }

    pub fn gradient(&self, nodal: [f64; 3]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in 0..3 {
            g[0] += nodal[k] * self.grads[k][0];
            g[1] += nodal[k] * self.grads[k][1];
        }
        g
    }

    pub fn local_mass(&self) -> [[f64; 3]; 3] {
        let d = self.area / 6.0;
        let o = self.area / 12.0;
        [[d, o, o], [o, d, o], [o, o, d]]
    }

    /// `K[i][j] = area · (M ∇φ_j) · ∇φ_i`
    pub fn local_stiffness(&self, m: &Tensor2) -> [[f64; 3]; 3] {
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in i..3 {
                let v = self.area * m.quadratic(self.grads[j], self.grads[i]);
                k[i][j] = v;
                k[j][i] = v;
            }
        }
        k
    }
}

fn element(mesh: &TriMesh, t: usize) -> P1Element {
    P1Element::new(mesh.triangle_coords(t))
}

fn check_len(mesh: &TriMesh, v: &[f64]) -> Result<(), FemError> {
    if v.len() != mesh.n_vertices() {
        return Err(FemError::DimensionMismatch { expected: mesh.n_vertices(), found: v.len() });
    }
    Ok(())
}

fn gather(v: &[f64], idx: [usize; 3]) -> [f64; 3] {
    [v[idx[0]], v[idx[1]], v[idx[2]]]
}

fn assemble_local(
    mesh: &TriMesh,
    filter: RegionFilter,
    mut local: impl FnMut(usize, &P1Element) -> Result<[[f64; 3]; 3], FemError>,
) -> Result<CsrMatrix, FemError> {
    let n = mesh.n_vertices();
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if !filter.accepts(tri.region) {
            continue;
        }
        let el = element(mesh, t);
        let k = local(t, &el)?;
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri.vertices[i], tri.vertices[j], k[i][j]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

/// Consistent P1 mass matrix over the filtered triangles.
pub fn assemble_mass(mesh: &TriMesh, filter: RegionFilter) -> CsrMatrix {
    assemble_local(mesh, filter, |_, el| Ok(el.local_mass())).expect("mass assembly is infallible")
}

/// Stiffness matrix of a linear-tensor law over the filtered triangles.
pub fn assemble_stiffness(mesh: &TriMesh, law: &FluxLaw, filter: RegionFilter) -> Result<CsrMatrix, FemError> {
    let FluxLaw::Linear(tensors) = law else {
        return Err(FemError::WrongLaw("linear tensor"));
    };
    assemble_local(mesh, filter, |t, el| {
        let region = mesh.triangles()[t].region;
        let m = tensors.get(region).ok_or(PhysicsError::MissingTensor(region))?;
        Ok(el.local_stiffness(&m))
    })
}

/// Stiffness-like matrix with the law's tensor frozen at the gradient of `nodal`:
/// the region tensor for linear laws, `alpha·p·(|∇v|²+delta)^{(p−2)/2}·Id` for p-power laws.
pub fn assemble_frozen(mesh: &TriMesh, law: &FluxLaw, nodal: &[f64], filter: RegionFilter) -> Result<CsrMatrix, FemError> {
    check_len(mesh, nodal)?;
    assemble_local(mesh, filter, |t, el| {
        let tri = mesh.triangles()[t];
        let y = el.gradient(gather(nodal, tri.vertices));
        Ok(el.local_stiffness(&law.tensor_at(tri.region, y)?))
    })
}

/// Picard matrix of a p-power law lagged at `previous`.
pub fn assemble_lagged_diffusivity(
    mesh: &TriMesh,
    law: &FluxLaw,
    previous: &[f64],
    filter: RegionFilter,
) -> Result<CsrMatrix, FemError> {
    if law.is_linear() {
        return Err(FemError::WrongLaw("p-power"));
    }
    assemble_frozen(mesh, law, previous, filter)
}

/// Per-triangle frozen diffusivity scale (largest tensor eigenvalue) at `nodal`; zero on
/// triangles outside the filter. Used to measure Picard convergence.
pub fn frozen_coefficients(mesh: &TriMesh, law: &FluxLaw, nodal: &[f64], filter: RegionFilter) -> Result<Vec<f64>, FemError> {
    check_len(mesh, nodal)?;
    let mut out = Vec::with_capacity(mesh.n_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if !filter.accepts(tri.region) {
            out.push(0.0);
            continue;
        }
        let el = element(mesh, t);
        let y = el.gradient(gather(nodal, tri.vertices));
        out.push(law.tensor_at(tri.region, y)?.eigenvalues().1);
    }
    Ok(out)
}

/// `r_i = ∫ q(x, ∇v_h)·∇φ_i` over the filtered triangles.
pub fn assemble_flux_residual(mesh: &TriMesh, law: &FluxLaw, nodal: &[f64], filter: RegionFilter) -> Result<Vec<f64>, FemError> {
    check_len(mesh, nodal)?;
    let mut r = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if !filter.accepts(tri.region) {
            continue;
        }
        let el = element(mesh, t);
        let (_, q) = law.eval(tri.region, el.gradient(gather(nodal, tri.vertices)))?;
        for k in 0..3 {
            r[tri.vertices[k]] += el.area * (q[0] * el.grads[k][0] + q[1] * el.grads[k][1]);
        }
    }
    Ok(r)
}

/// `∫ Q(x, ∇v_h)` over the filtered triangles.
pub fn flux_energy(mesh: &TriMesh, law: &FluxLaw, nodal: &[f64], filter: RegionFilter) -> Result<f64, FemError> {
    check_len(mesh, nodal)?;
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if !filter.accepts(tri.region) {
            continue;
        }
        let el = element(mesh, t);
        total += el.area * law.eval(tri.region, el.gradient(gather(nodal, tri.vertices)))?.0;
    }
    Ok(total)
}

/// Edge-midpoint rule on the tissue triangles: weight `area/3` per edge midpoint,
/// where the two edge vertices carry basis value ½. Exact for quadratics, so a
/// constant weight reproduces the consistent mass matrix.
fn for_each_midpoint(mesh: &TriMesh, mut f: impl FnMut(f64, usize, usize)) {
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if tri.region != Region::Tissue {
            continue;
        }
        let weight = mesh.triangle_area(t) / 3.0;
        let v = tri.vertices;
        for k in 0..3 {
            f(weight, v[k], v[(k + 1) % 3]);
        }
    }
}

/// `∫_Ω F(u_h, w_h)` by the edge-midpoint rule.
pub fn ionic_energy(mesh: &TriMesh, model: &IonicModel, u: &[f64], w: &[f64]) -> f64 {
    let mut total = 0.0;
    for_each_midpoint(mesh, |weight, a, b| {
        total += weight * model.eval(0.5 * (u[a] + u[b]), 0.5 * (w[a] + w[b])).f;
    });
    total
}

/// Load vector `∫_Ω g(u_h, w_h) φ_j` by the edge-midpoint rule.
pub fn midpoint_load(mesh: &TriMesh, u: &[f64], w: &[f64], g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_vertices()];
    for_each_midpoint(mesh, |weight, a, b| {
        let value = 0.5 * weight * g(0.5 * (u[a] + u[b]), 0.5 * (w[a] + w[b]));
        load[a] += value;
        load[b] += value;
    });
    load
}

/// Weighted mass matrix `∫_Ω c(u_h) φ_i φ_j` by the edge-midpoint rule.
pub fn midpoint_weighted_mass(mesh: &TriMesh, u: &[f64], c: impl Fn(f64) -> f64) -> CsrMatrix {
    let n = mesh.n_vertices();
    let mut triplets = Vec::with_capacity(12 * mesh.n_triangles());
    for_each_midpoint(mesh, |weight, a, b| {
        let value = 0.25 * weight * c(0.5 * (u[a] + u[b]));
        triplets.push((a, a, value));
        triplets.push((a, b, value));
        triplets.push((b, a, value));
        triplets.push((b, b, value));
    });
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Indices of the tissue nodes (the restriction map of the transmembrane field).
pub fn tissue_restriction(mesh: &TriMesh) -> &[usize] {
    mesh.tissue_nodes()
}

pub fn restrict_to_tissue(mesh: &TriMesh, full: &[f64]) -> Vec<f64> {
    mesh.tissue_nodes().iter().map(|&v| full[v]).collect()
}

pub fn extend_by_zero(mesh: &TriMesh, tissue_values: &[f64]) -> Vec<f64> {
    let mut full = vec![0.0; mesh.n_vertices()];
    for (&v, &x) in mesh.tissue_nodes().iter().zip(tissue_values) {
        full[v] = x;
    }
    full
}

/// Mass matrix over the shell; scaled by the regularization weight it pins
/// `u_i` and `w` outside the tissue.
pub fn shell_penalty_mass(mesh: &TriMesh) -> CsrMatrix {
    assemble_mass(mesh, RegionFilter::Shell)
}

/// P1 interpolation of a nodal field at a located point.
pub fn interpolate(mesh: &TriMesh, field: &[f64], triangle: usize, weights: [f64; 3]) -> f64 {
    let v = mesh.triangles()[triangle].vertices;
    weights[0] * field[v[0]] + weights[1] * field[v[1]] + weights[2] * field[v[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_disk, generate_nested_rect, Rect, Triangle};
    use crate::physics::PPowerLaw;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_triangle() -> TriMesh {
        TriMesh::from_parts(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![Triangle { vertices: [0, 1, 2], region: Region::Tissue }],
        )
    }

    /// Splits a triangle into 4^levels congruent sub-triangles.
    fn refine(p: [[f64; 2]; 3], levels: u32) -> Vec<[[f64; 2]; 3]> {
        let mut tris = vec![p];
        for _ in 0..levels {
            let mut next = Vec::with_capacity(tris.len() * 4);
            for [a, b, c] in tris {
                let mid = |p: [f64; 2], q: [f64; 2]| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
                let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
                next.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
            }
            tris = next;
        }
        tris
    }

    /// Barycentric coordinates of `x` in the unit right triangle.
    fn unit_basis(x: [f64; 2]) -> [f64; 3] {
        [1.0 - x[0] - x[1], x[0], x[1]]
    }

    #[test]
    fn unit_triangle_local_mass() {
        let m = assemble_mass(&unit_triangle(), RegionFilter::All);
        let expected = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.get(i, j) - expected[i][j] / 24.0).abs() < 1e-15);
            }
        }
        // Centroid-rule quadrature on refined sub-triangles converges to the same matrix.
        let subs = refine([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], 5);
        for i in 0..3 {
            for j in 0..3 {
                let q: f64 = subs
                    .iter()
                    .map(|&[a, b, c]| {
                        let x = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
                        let phi = unit_basis(x);
                        crate::mesh::signed_area(a, b, c) * phi[i] * phi[j]
                    })
                    .sum();
                assert!((q - expected[i][j] / 24.0).abs() < 1e-4, "({i},{j}) {q}");
            }
        }
    }

    #[test]
    fn unit_triangle_local_stiffness() {
        let mesh = unit_triangle();
        let k = assemble_stiffness(&mesh, &FluxLaw::uniform(Tensor2::iso(1.0).unwrap()), RegionFilter::All).unwrap();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k.get(i, j) - expected[i][j]).abs() < 1e-15);
            }
        }
        let k2 = assemble_stiffness(&mesh, &FluxLaw::uniform(Tensor2::iso(0.638).unwrap()), RegionFilter::All).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(k2.get(i, j), 0.638 * k.get(i, j));
            }
        }
    }

    #[test]
    fn anisotropic_stiffness_matches_directional_sum() {
        let mesh = unit_triangle();
        let k = assemble_stiffness(&mesh, &FluxLaw::uniform(Tensor2::diag(0.41, 0.47).unwrap()), RegionFilter::All).unwrap();
        let grads = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                let expected = 0.5 * (0.41 * grads[i][0] * grads[j][0] + 0.47 * grads[i][1] * grads[j][1]);
                assert!((k.get(i, j) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_row_sums_are_lumped_areas() {
        let mesh = generate_nested_rect(Rect::new(0.25, 0.25, 0.75, 0.75), Rect::new(0.0, 0.0, 1.0, 1.0), 0.125).unwrap();
        for (filter, area) in [(RegionFilter::Tissue, 0.25), (RegionFilter::Shell, 0.75), (RegionFilter::All, 1.0)] {
            let m = assemble_mass(&mesh, filter);
            let total: f64 = m.values().iter().sum();
            assert!((total - area).abs() < 1e-12, "{filter:?}: {total}");
            let ones = vec![1.0; mesh.n_vertices()];
            let rows = m.spmv(&ones).unwrap();
            let mut lumped = vec![0.0; mesh.n_vertices()];
            for (t, tri) in mesh.triangles().iter().enumerate() {
                if filter.accepts(tri.region) {
                    for &v in &tri.vertices {
                        lumped[v] += mesh.triangle_area(t) / 3.0;
                    }
                }
            }
            for (a, b) in rows.iter().zip(&lumped) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empty_shell_filter_gives_zero_matrix() {
        let mesh = generate_disk(1.0, 0.3).unwrap();
        assert_eq!(assemble_mass(&mesh, RegionFilter::Shell).values().iter().filter(|v| **v != 0.0).count(), 0);
        assert_eq!(shell_penalty_mass(&mesh).nnz(), 0);
        assert_eq!(tissue_restriction(&mesh).len(), mesh.n_vertices());
    }

    #[test]
    fn stiffness_requires_tensor_per_region() {
        let mesh = generate_nested_rect(Rect::new(0.25, 0.25, 0.75, 0.75), Rect::new(0.0, 0.0, 1.0, 1.0), 0.25).unwrap();
        let law = FluxLaw::tissue_only(Tensor2::iso(1.0).unwrap());
        assert!(assemble_stiffness(&mesh, &law, RegionFilter::Tissue).is_ok());
        assert_eq!(
            assemble_stiffness(&mesh, &law, RegionFilter::All),
            Err(FemError::Physics(PhysicsError::MissingTensor(Region::Shell)))
        );
        let ppower = FluxLaw::PPower(PPowerLaw::new(1.0, 3.0, None).unwrap());
        assert_eq!(assemble_stiffness(&mesh, &ppower, RegionFilter::All), Err(FemError::WrongLaw("linear tensor")));
    }

    #[test]
    fn flux_residual_of_linear_law_equals_stiffness_product() {
        let mesh = generate_disk(1.0, 0.2).unwrap();
        let law = FluxLaw::uniform(Tensor2::new(0.41, 0.05, 0.47).unwrap());
        let k = assemble_stiffness(&mesh, &law, RegionFilter::All).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kv = k.spmv(&v).unwrap();
        let r = assemble_flux_residual(&mesh, &law, &v, RegionFilter::All).unwrap();
        for (a, b) in kv.iter().zip(&r) {
            assert!((a - b).abs() < 1e-12);
        }
        let constant = vec![2.5; mesh.n_vertices()];
        assert!(assemble_flux_residual(&mesh, &law, &constant, RegionFilter::All).unwrap().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn ppower_residual_matches_refined_quadrature() {
        let mesh = unit_triangle();
        let law = FluxLaw::PPower(PPowerLaw::new(1.0, 4.0, None).unwrap());
        let nodal = [0.3, -0.7, 1.1];
        let r = assemble_flux_residual(&mesh, &law, &nodal, RegionFilter::All).unwrap();
        // Oracle: midpoint rule on 4^4 sub-triangles, gradients by finite differences of the interpolant.
        let v = |x: [f64; 2]| {
            let phi = unit_basis(x);
            phi[0] * nodal[0] + phi[1] * nodal[1] + phi[2] * nodal[2]
        };
        let mut oracle = [0.0; 3];
        for [a, b, c] in refine([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], 4) {
            let x = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
            let h = 1e-6;
            let g = [(v([x[0] + h, x[1]]) - v([x[0] - h, x[1]])) / (2.0 * h), (v([x[0], x[1] + h]) - v([x[0], x[1] - h])) / (2.0 * h)];
            let s = g[0] * g[0] + g[1] * g[1];
            let q = [4.0 * s * g[0], 4.0 * s * g[1]];
            let dphi = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
            let area = crate::mesh::signed_area(a, b, c);
            for k in 0..3 {
                oracle[k] += area * (q[0] * dphi[k][0] + q[1] * dphi[k][1]);
            }
        }
        for k in 0..3 {
            assert!((r[k] - oracle[k]).abs() < 1e-8 * (1.0 + oracle[k].abs()), "{k}: {} vs {}", r[k], oracle[k]);
        }
    }

    #[test]
    fn lagged_diffusivity_reductions() {
        let mesh = generate_disk(1.0, 0.3).unwrap();
        let n = mesh.n_vertices();
        let p2 = FluxLaw::PPower(PPowerLaw::new(0.7, 2.0, Some(0.0)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lagged = assemble_lagged_diffusivity(&mesh, &p2, &v, RegionFilter::All).unwrap();
        let linear = assemble_stiffness(&mesh, &FluxLaw::uniform(Tensor2::iso(1.4).unwrap()), RegionFilter::All).unwrap();
        for (a, b) in lagged.values().iter().zip(linear.values()) {
            assert!((a - b).abs() < 1e-14);
        }

        let zero = vec![0.0; n];
        let p4 = FluxLaw::PPower(PPowerLaw::new(1.0, 4.0, Some(0.0)).unwrap());
        let m = assemble_lagged_diffusivity(&mesh, &p4, &zero, RegionFilter::All).unwrap();
        assert!(m.values().iter().all(|&x| x == 0.0));

        let p15 = FluxLaw::PPower(PPowerLaw::new(1.0, 1.5, Some(1e-4)).unwrap());
        let m = assemble_lagged_diffusivity(&mesh, &p15, &zero, RegionFilter::All).unwrap();
        let c = 1.0 * 1.5 * 1e-4f64.powf(-0.25);
        let expected = assemble_stiffness(&mesh, &FluxLaw::uniform(Tensor2::iso(c).unwrap()), RegionFilter::All).unwrap();
        for (a, b) in m.values().iter().zip(expected.values()) {
            assert!((a - b).abs() < 1e-12 * c);
        }
        assert!(assemble_lagged_diffusivity(&mesh, &FluxLaw::uniform(Tensor2::iso(1.0).unwrap()), &zero, RegionFilter::All).is_err());
    }

    #[test]
    fn midpoint_mass_with_unit_weight_is_consistent_mass() {
        let mesh = generate_disk(1.0, 0.3).unwrap();
        let u = vec![0.0; mesh.n_vertices()];
        let a = midpoint_weighted_mass(&mesh, &u, |_| 1.0);
        let b = assemble_mass(&mesh, RegionFilter::Tissue);
        assert_eq!(a.col_indices(), b.col_indices());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-16);
        }
    }

    #[test]
    fn restriction_and_extension() {
        let mesh = generate_nested_rect(Rect::new(0.25, 0.25, 0.75, 0.75), Rect::new(0.0, 0.0, 1.0, 1.0), 0.25).unwrap();
        let tissue: Vec<f64> = (0..mesh.tissue_nodes().len()).map(|i| i as f64 + 1.0).collect();
        let full = extend_by_zero(&mesh, &tissue);
        assert_eq!(restrict_to_tissue(&mesh, &full), tissue);
        let shell_only = (0..mesh.n_vertices()).filter(|&v| !mesh.is_tissue_node(v));
        for v in shell_only {
            assert_eq!(full[v], 0.0);
        }
        let penalty = shell_penalty_mass(&mesh);
        let rows = penalty.spmv(&vec![1.0; mesh.n_vertices()]).unwrap();
        assert!((rows.iter().sum::<f64>() - 0.75).abs() < 1e-14);
    }
}
