//! Conforming triangular meshes of the nested domains `tissue ⊆ enclosure`.
//!
//! Every triangle carries a [`Region`] tag. TISSUE triangles discretize the
//! active medium, SHELL triangles the passive conductor around it (possibly
//! empty). Boundary edges are always derived from connectivity; the tags
//! stored in a mesh file are only cross-checked.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

/// Region tag of a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Tissue = 0,
    Shell = 1,
}

impl Region {
    pub fn from_code(code: i64) -> Option<Region> {
        match code {
            0 => Some(Region::Tissue),
            1 => Some(Region::Shell),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Tag of a boundary edge.
///
/// An edge lying on the outer boundary is tagged `OuterBoundary` even when it
/// also bounds the tissue; `TissueBoundary` marks the tissue/shell interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    TissueBoundary = 0,
    OuterBoundary = 1,
}

impl BoundaryTag {
    pub fn from_code(code: i64) -> Option<BoundaryTag> {
        match code {
            0 => Some(BoundaryTag::TissueBoundary),
            1 => Some(BoundaryTag::OuterBoundary),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub region: Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct BoundaryEdge {
    /// Sorted vertex pair.
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
        Rect { x0, y0, x1, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn is_valid(&self) -> bool {
        self.x1 > self.x0 && self.y1 > self.y0 && [self.x0, self.x1, self.y0, self.y1].iter().all(|v| v.is_finite())
    }

    fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("invalid mesh parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh validation failed: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// A broken [`TriMesh`] invariant together with the offending entity.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveArea { triangle: usize, area: f64 },
    VertexOutOfRange { triangle: usize, vertex: usize },
    EdgeOverShared { edge: [usize; 2], count: usize },
    BoundaryTagMismatch { edge: [usize; 2], expected: Option<BoundaryTag>, found: Option<BoundaryTag> },
    OpenBoundaryLoop { vertex: usize, tag: BoundaryTag },
    TissueNodesMismatch,
    UnusedVertex { vertex: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveArea { triangle, area } => {
                write!(f, "non-positive area: triangle {triangle} has signed area {area:e}")
            }
            Violation::VertexOutOfRange { triangle, vertex } => {
                write!(f, "vertex out of range: triangle {triangle} references vertex {vertex}")
            }
            Violation::EdgeOverShared { edge, count } => {
                write!(f, "edge shared by {count} triangles: ({}, {})", edge[0], edge[1])
            }
            Violation::BoundaryTagMismatch { edge, expected, found } => write!(
                f,
                "boundary tag mismatch on edge ({}, {}): derived {:?}, stored {:?}",
                edge[0], edge[1], expected, found
            ),
            Violation::OpenBoundaryLoop { vertex, tag } => {
                write!(f, "open boundary loop: vertex {vertex} has odd degree in {tag:?} edges")
            }
            Violation::TissueNodesMismatch => write!(f, "tissue node set differs from TISSUE triangle vertices"),
            Violation::UnusedVertex { vertex } => write!(f, "vertex {vertex} belongs to no triangle"),
        }
    }
}

/// Non-fatal repair performed while loading a mesh file.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadWarning {
    /// A clockwise triangle was reoriented by swapping two of its vertices.
    Reoriented { triangle: usize, line: usize },
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadWarning::Reoriented { triangle, line } => {
                write!(f, "line {line}: triangle {triangle} was clockwise and has been reoriented")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<Triangle>,
    boundary_edges: Vec<BoundaryEdge>,
    tissue_nodes: Vec<usize>,
    is_tissue_node: Vec<bool>,
}

pub(crate) fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn sorted_edge(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Edge → indices of the triangles containing it, in triangle order.
fn edge_map(triangles: &[Triangle]) -> BTreeMap<[usize; 2], Vec<usize>> {
    let mut map: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        let v = tri.vertices;
        for k in 0..3 {
            map.entry(sorted_edge(v[k], v[(k + 1) % 3])).or_default().push(t);
        }
    }
    map
}

fn derive_boundary(triangles: &[Triangle]) -> Vec<BoundaryEdge> {
    let mut edges = Vec::new();
    for (edge, owners) in edge_map(triangles) {
        if owners.len() == 1 {
            edges.push(BoundaryEdge { vertices: edge, tag: BoundaryTag::OuterBoundary });
        } else if owners.len() == 2 {
            let tissue = owners.iter().filter(|&&t| triangles[t].region == Region::Tissue).count();
            if tissue == 1 {
                edges.push(BoundaryEdge { vertices: edge, tag: BoundaryTag::TissueBoundary });
            }
        }
    }
    edges
}

fn tissue_node_flags(n_vertices: usize, triangles: &[Triangle]) -> Vec<bool> {
    let mut flags = vec![false; n_vertices];
    for tri in triangles.iter().filter(|t| t.region == Region::Tissue) {
        for &v in &tri.vertices {
            if v < n_vertices {
                flags[v] = true;
            }
        }
    }
    flags
}

impl TriMesh {
    /// Builds a mesh from raw data, deriving boundary edges and tissue nodes.
    /// The result is not validated; see [`TriMesh::validated`].
    pub fn from_parts(vertices: Vec<[f64; 2]>, triangles: Vec<Triangle>) -> TriMesh {
        let boundary_edges = derive_boundary(&triangles);
        let is_tissue_node = tissue_node_flags(vertices.len(), &triangles);
        let tissue_nodes = (0..vertices.len()).filter(|&v| is_tissue_node[v]).collect();
        TriMesh { vertices, triangles, boundary_edges, tissue_nodes, is_tissue_node }
    }

    /// Like [`TriMesh::from_parts`] but fails when any invariant is violated.
    pub fn validated(vertices: Vec<[f64; 2]>, triangles: Vec<Triangle>) -> Result<TriMesh, MeshError> {
        let mesh = TriMesh::from_parts(vertices, triangles);
        let violations = validate(&mesh);
        if violations.is_empty() {
            Ok(mesh)
        } else {
            Err(MeshError::Invalid(violations))
        }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn tissue_nodes(&self) -> &[usize] {
        &self.tissue_nodes
    }

    pub fn is_tissue_node(&self, v: usize) -> bool {
        self.is_tissue_node[v]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn has_shell(&self) -> bool {
        self.triangles.iter().any(|t| t.region == Region::Shell)
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let v = self.triangles[t].vertices;
        [self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        signed_area(a, b, c)
    }

    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.n_triangles())
            .filter(|&t| self.triangles[t].region == region)
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Every edge bounding the tissue, including those on the outer boundary.
    pub fn tissue_boundary_edges(&self) -> Vec<[usize; 2]> {
        let tissue: Vec<Triangle> = self.triangles.iter().copied().filter(|t| t.region == Region::Tissue).collect();
        edge_map(&tissue).into_iter().filter(|(_, owners)| owners.len() == 1).map(|(e, _)| e).collect()
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut longest: f64 = 0.0;
        for t in 0..self.n_triangles() {
            let p = self.triangle_coords(t);
            for k in 0..3 {
                let (a, b) = (p[k], p[(k + 1) % 3]);
                longest = longest.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        longest
    }

    /// Triangle containing `(x, y)` and the barycentric weights of the point,
    /// or `None` when the point lies outside the mesh.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, [f64; 3])> {
        const SLACK: f64 = 1e-12;
        for t in 0..self.n_triangles() {
            let [a, b, c] = self.triangle_coords(t);
            let area = signed_area(a, b, c);
            if area <= 0.0 {
                continue;
            }
            let l0 = signed_area([x, y], b, c) / area;
            let l1 = signed_area(a, [x, y], c) / area;
            let l2 = 1.0 - l0 - l1;
            if l0 >= -SLACK && l1 >= -SLACK && l2 >= -SLACK {
                return Some((t, [l0, l1, l2]));
            }
        }
        None
    }
}

/// Checks all [`TriMesh`] invariants; an empty list means the mesh is valid.
pub fn validate(mesh: &TriMesh) -> Vec<Violation> {
    let mut violations = Vec::new();
    let n = mesh.vertices.len();

    let mut used = vec![false; n];
    let mut indices_ok = true;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in &tri.vertices {
            if v >= n {
                violations.push(Violation::VertexOutOfRange { triangle: t, vertex: v });
                indices_ok = false;
            } else {
                used[v] = true;
            }
        }
    }
    if !indices_ok {
        return violations;
    }
    for (t, _) in mesh.triangles.iter().enumerate() {
        let area = mesh.triangle_area(t);
        if !(area > 0.0) {
            violations.push(Violation::NonPositiveArea { triangle: t, area });
        }
    }
    for (v, &u) in used.iter().enumerate() {
        if !u {
            violations.push(Violation::UnusedVertex { vertex: v });
        }
    }
    for (edge, owners) in edge_map(&mesh.triangles) {
        if owners.len() > 2 {
            violations.push(Violation::EdgeOverShared { edge, count: owners.len() });
        }
    }

    let derived: BTreeMap<[usize; 2], BoundaryTag> =
        derive_boundary(&mesh.triangles).into_iter().map(|e| (e.vertices, e.tag)).collect();
    let stored: BTreeMap<[usize; 2], BoundaryTag> =
        mesh.boundary_edges.iter().map(|e| (sorted_edge(e.vertices[0], e.vertices[1]), e.tag)).collect();
    for (edge, tag) in &derived {
        if stored.get(edge) != Some(tag) {
            violations.push(Violation::BoundaryTagMismatch { edge: *edge, expected: Some(*tag), found: stored.get(edge).copied() });
        }
    }
    for (edge, tag) in &stored {
        if !derived.contains_key(edge) {
            violations.push(Violation::BoundaryTagMismatch { edge: *edge, expected: None, found: Some(*tag) });
        }
    }

    // Closed loops: every vertex touches an even number of edges of each kind.
    let outer: Vec<[usize; 2]> =
        derived.iter().filter(|(_, &t)| t == BoundaryTag::OuterBoundary).map(|(e, _)| *e).collect();
    let tissue_boundary = mesh.tissue_boundary_edges();
    for (edges, tag) in [(outer, BoundaryTag::OuterBoundary), (tissue_boundary, BoundaryTag::TissueBoundary)] {
        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e[0]] += 1;
            degree[e[1]] += 1;
        }
        for (v, d) in degree.iter().enumerate() {
            if d % 2 == 1 {
                violations.push(Violation::OpenBoundaryLoop { vertex: v, tag });
            }
        }
    }

    let expected_flags = tissue_node_flags(n, &mesh.triangles);
    let expected_nodes: Vec<usize> = (0..n).filter(|&v| expected_flags[v]).collect();
    if expected_flags != mesh.is_tissue_node || expected_nodes != mesh.tissue_nodes {
        violations.push(Violation::TissueNodesMismatch);
    }
    violations
}

/// Structured polar-ring triangulation of the disk of `radius` centred at the origin.
pub fn generate_disk(radius: f64, h: f64) -> Result<TriMesh, MeshError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(MeshError::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    if !(h > 0.0 && h < radius) {
        return Err(MeshError::InvalidParameter(format!("h must satisfy 0 < h < radius, got h={h}, radius={radius}")));
    }
    let n_rings = (radius / h).ceil() as usize;
    let radii: Vec<f64> = (0..=n_rings).map(|k| radius * k as f64 / n_rings as f64).collect();
    polar_mesh(&radii, h, |_| Region::Tissue)
}

/// Disk of `outer_radius` with a concentric tissue disk of `inner_radius`.
/// A ring of nodes lies exactly on the inner circle, so the interface is conforming.
pub fn generate_nested_disk(inner_radius: f64, outer_radius: f64, h: f64) -> Result<TriMesh, MeshError> {
    if !(inner_radius > 0.0 && inner_radius <= outer_radius && outer_radius.is_finite()) {
        return Err(MeshError::InvalidParameter(format!(
            "radii must satisfy 0 < inner <= outer, got inner={inner_radius}, outer={outer_radius}"
        )));
    }
    if !(h > 0.0 && h < inner_radius) {
        return Err(MeshError::InvalidParameter(format!("h must satisfy 0 < h < inner radius, got h={h}")));
    }
    let inner_rings = (inner_radius / h).ceil() as usize;
    let mut radii: Vec<f64> = (0..=inner_rings).map(|k| inner_radius * k as f64 / inner_rings as f64).collect();
    let gap = outer_radius - inner_radius;
    if gap > 0.0 {
        let outer_rings = (gap / h).ceil() as usize;
        radii.extend((1..=outer_rings).map(|k| inner_radius + gap * k as f64 / outer_rings as f64));
    }
    polar_mesh(&radii, h, |ring| if ring <= inner_rings { Region::Tissue } else { Region::Shell })
}

/// `radii[0]` must be 0. `region_of(k)` tags the triangles between ring `k-1` and ring `k`.
fn polar_mesh(radii: &[f64], h: f64, region_of: impl Fn(usize) -> Region) -> Result<TriMesh, MeshError> {
    let mut vertices = vec![[0.0, 0.0]];
    let mut triangles = Vec::new();
    // (first vertex index, vertex count, angular offset) of the previous ring
    let mut prev: Option<(usize, usize, f64)> = None;
    for (k, &r) in radii.iter().enumerate().skip(1) {
        let count = ((2.0 * PI * r / h).round() as usize).max(6);
        let count = match prev {
            Some((_, pc, _)) => count.max(pc),
            None => count,
        };
        // Stagger consecutive rings by half a segment for better-shaped triangles.
        let offset = if k % 2 == 0 { PI / count as f64 } else { 0.0 };
        let start = vertices.len();
        for i in 0..count {
            let theta = offset + 2.0 * PI * i as f64 / count as f64;
            vertices.push([r * theta.cos(), r * theta.sin()]);
        }
        let region = region_of(k);
        match prev {
            None => {
                for i in 0..count {
                    triangles.push(Triangle { vertices: [0, start + i, start + (i + 1) % count], region });
                }
            }
            Some((pstart, pcount, poffset)) => {
                stitch_rings(&vertices, (pstart, pcount, poffset), (start, count, offset), region, &mut triangles);
            }
        }
        prev = Some((start, count, offset));
    }
    for tri in triangles.iter_mut() {
        let [a, b, c] = tri.vertices;
        if signed_area(vertices[a], vertices[b], vertices[c]) < 0.0 {
            tri.vertices = [a, c, b];
        }
    }
    let mesh = TriMesh::from_parts(vertices, triangles);
    let violations = validate(&mesh);
    if violations.is_empty() {
        Ok(mesh)
    } else {
        Err(MeshError::Invalid(violations))
    }
}

/// Triangulates the annulus between two rings, advancing along whichever ring
/// gives the shorter new diagonal.
fn stitch_rings(vertices: &[[f64; 2]], inner: (usize, usize, f64), outer: (usize, usize, f64), region: Region, out: &mut Vec<Triangle>) {
    let (istart, icount, _) = inner;
    let (ostart, ocount, _) = outer;
    let dist = |a: usize, b: usize| {
        let (p, q) = (vertices[a], vertices[b]);
        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
    };
    // Start the outer ring at the vertex angularly closest to inner vertex 0.
    let o0 = (0..ocount).min_by(|&x, &y| dist(istart, ostart + x).total_cmp(&dist(istart, ostart + y))).unwrap_or(0);
    let outer_at = |o: usize| ostart + (o0 + o) % ocount;
    let inner_at = |i: usize| istart + i % icount;
    let (mut i, mut o) = (0usize, 0usize);
    while i < icount || o < ocount {
        let advance_inner = if i == icount {
            false
        } else if o == ocount {
            true
        } else {
            dist(inner_at(i + 1), outer_at(o)) <= dist(inner_at(i), outer_at(o + 1))
        };
        if advance_inner {
            out.push(Triangle { vertices: [inner_at(i), inner_at(i + 1), outer_at(o)], region });
            i += 1;
        } else {
            out.push(Triangle { vertices: [inner_at(i), outer_at(o), outer_at(o + 1)], region });
            o += 1;
        }
    }
}

/// Tensor-product triangulation of `outer` whose grid lines contain the edges of `inner`.
/// Cells inside `inner` are TISSUE, the rest SHELL.
pub fn generate_nested_rect(inner: Rect, outer: Rect, h: f64) -> Result<TriMesh, MeshError> {
    if !inner.is_valid() || !outer.is_valid() {
        return Err(MeshError::InvalidParameter("rectangles must have positive extent".into()));
    }
    if !outer.contains_rect(&inner) {
        return Err(MeshError::InvalidParameter(format!("inner rectangle {inner:?} is not contained in outer {outer:?}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(MeshError::InvalidParameter(format!("h must be positive, got {h}")));
    }
    let axis = |lo: f64, a: f64, b: f64, hi: f64| -> Vec<f64> {
        let mut coords = vec![lo];
        for (s, e) in [(lo, a), (a, b), (b, hi)] {
            if e - s <= 0.0 {
                continue;
            }
            let n = ((e - s) / h).ceil() as usize;
            for k in 1..n {
                coords.push(s + (e - s) * k as f64 / n as f64);
            }
            coords.push(e);
        }
        coords
    };
    let xs = axis(outer.x0, inner.x0, inner.x1, outer.x1);
    let ys = axis(outer.y0, inner.y0, inner.y1, outer.y1);
    let nx = xs.len();
    let mut vertices = Vec::with_capacity(nx * ys.len());
    for &y in &ys {
        for &x in &xs {
            vertices.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut triangles = Vec::new();
    for j in 0..ys.len() - 1 {
        for i in 0..nx - 1 {
            let cx = 0.5 * (xs[i] + xs[i + 1]);
            let cy = 0.5 * (ys[j] + ys[j + 1]);
            let region = if inner.contains_point(cx, cy) { Region::Tissue } else { Region::Shell };
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push(Triangle { vertices: [a, b, c], region });
            triangles.push(Triangle { vertices: [a, c, d], region });
        }
    }
    TriMesh::validated(vertices, triangles)
}

/// Parses the line-oriented `bdmesh 1` format.
///
/// Clockwise triangles are reoriented and reported as warnings. A `boundary`
/// section, when present, must agree with the boundary derived from connectivity.
pub fn load_mesh(text: &str) -> Result<(TriMesh, Vec<LoadWarning>), MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let err = |line: usize, message: String| MeshError::Parse { line, message };
    let eof = |what: &str| MeshError::Parse { line: text.lines().count(), message: format!("unexpected end of file, expected {what}") };

    let (line, header) = lines.next().ok_or_else(|| eof("`bdmesh 1` header"))?;
    if header.split_whitespace().collect::<Vec<_>>() != ["bdmesh", "1"] {
        return Err(err(line, format!("expected header `bdmesh 1`, found `{header}`")));
    }

    let section = |lines: &mut dyn Iterator<Item = (usize, &str)>, keyword: &str| -> Result<(usize, usize), MeshError> {
        let (line, l) = lines.next().ok_or_else(|| eof(keyword))?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 2 || parts[0] != keyword {
            return Err(err(line, format!("expected `{keyword} <count>`, found `{l}`")));
        }
        let count = parts[1].parse::<usize>().map_err(|e| err(line, format!("bad {keyword} count: {e}")))?;
        Ok((line, count))
    };
    let parse_f64 = |line: usize, tok: &str| tok.parse::<f64>().map_err(|e| err(line, format!("bad number `{tok}`: {e}")));
    let parse_int = |line: usize, tok: &str| tok.parse::<i64>().map_err(|e| err(line, format!("bad integer `{tok}`: {e}")));

    let (_, n_vertices) = section(&mut lines, "vertices")?;
    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let (line, l) = lines.next().ok_or_else(|| eof("vertex line"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(err(line, format!("vertex line needs 2 values, found {}", toks.len())));
        }
        let (x, y) = (parse_f64(line, toks[0])?, parse_f64(line, toks[1])?);
        if !x.is_finite() || !y.is_finite() {
            return Err(err(line, "non-finite coordinate".into()));
        }
        vertices.push([x, y]);
    }

    let (_, n_triangles) = section(&mut lines, "triangles")?;
    let mut triangles = Vec::with_capacity(n_triangles);
    let mut warnings = Vec::new();
    for t in 0..n_triangles {
        let (line, l) = lines.next().ok_or_else(|| eof("triangle line"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(err(line, format!("triangle line needs 4 values, found {}", toks.len())));
        }
        let mut idx = [0usize; 3];
        for k in 0..3 {
            let v = parse_int(line, toks[k])?;
            if v < 0 || v as usize >= n_vertices {
                return Err(err(line, format!("vertex index {v} out of range (mesh has {n_vertices} vertices)")));
            }
            idx[k] = v as usize;
        }
        let code = parse_int(line, toks[3])?;
        let region = Region::from_code(code).ok_or_else(|| err(line, format!("unknown region tag {code}")))?;
        if signed_area(vertices[idx[0]], vertices[idx[1]], vertices[idx[2]]) < 0.0 {
            idx.swap(1, 2);
            warnings.push(LoadWarning::Reoriented { triangle: t, line });
        }
        triangles.push(Triangle { vertices: idx, region });
    }

    let mut stored_boundary = None;
    if let Some((line, l)) = lines.next() {
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 2 || parts[0] != "boundary" {
            return Err(err(line, format!("expected `boundary <count>` or end of file, found `{l}`")));
        }
        let count = parts[1].parse::<usize>().map_err(|e| err(line, format!("bad boundary count: {e}")))?;
        let mut edges = Vec::with_capacity(count);
        for _ in 0..count {
            let (line, l) = lines.next().ok_or_else(|| eof("boundary line"))?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(err(line, format!("boundary line needs 3 values, found {}", toks.len())));
            }
            let a = parse_int(line, toks[0])?;
            let b = parse_int(line, toks[1])?;
            for v in [a, b] {
                if v < 0 || v as usize >= n_vertices {
                    return Err(err(line, format!("vertex index {v} out of range (mesh has {n_vertices} vertices)")));
                }
            }
            let code = parse_int(line, toks[2])?;
            let tag = BoundaryTag::from_code(code).ok_or_else(|| err(line, format!("unknown boundary tag {code}")))?;
            edges.push(BoundaryEdge { vertices: sorted_edge(a as usize, b as usize), tag });
        }
        if let Some((line, l)) = lines.next() {
            return Err(err(line, format!("trailing content `{l}`")));
        }
        stored_boundary = Some(edges);
    }

    let mut mesh = TriMesh::from_parts(vertices, triangles);
    let mut violations = validate(&mesh);
    if let Some(mut edges) = stored_boundary {
        edges.sort();
        let derived = mesh.boundary_edges.clone();
        mesh.boundary_edges = edges;
        violations = validate(&mesh);
        mesh.boundary_edges = derived;
    }
    if violations.is_empty() {
        Ok((mesh, warnings))
    } else {
        Err(MeshError::Invalid(violations))
    }
}

/// Writes `mesh` in the `bdmesh 1` format, including the boundary section.
pub fn write_mesh(mesh: &TriMesh) -> String {
    let mut out = String::new();
    out.push_str("bdmesh 1\n");
    out.push_str(&format!("vertices {}\n", mesh.n_vertices()));
    for v in mesh.vertices() {
        out.push_str(&format!("{} {}\n", crate::output::fmt_f64(v[0]), crate::output::fmt_f64(v[1])));
    }
    out.push_str(&format!("triangles {}\n", mesh.n_triangles()));
    for t in mesh.triangles() {
        out.push_str(&format!("{} {} {} {}\n", t.vertices[0], t.vertices[1], t.vertices[2], t.region.code()));
    }
    out.push_str(&format!("boundary {}\n", mesh.boundary_edges().len()));
    for e in mesh.boundary_edges() {
        out.push_str(&format!("{} {} {}\n", e.vertices[0], e.vertices[1], e.tag as u8));
    }
    out
}
