//! Flat triangle meshes: file readers, builtin generators and connectivity.
//!
//! A `FlatMesh` is the straight-edged control mesh that gets lifted onto the
//! curved surface. Validation enforces the manifold-with-boundary contract:
//! every interior edge is shared by exactly two triangles with opposite
//! orientation, boundary edges belong to exactly one.

use crate::error::{Error, Result};
use nalgebra::Vector3;
use std::collections::HashMap;

/// One undirected mesh edge in canonical vertex order (v[0] < v[1]).
#[derive(Debug, Clone)]
pub struct Edge {
    pub v: [usize; 2],
    /// Incident (element, local edge) pairs; 1 for boundary, 2 for interior.
    pub elems: Vec<(usize, usize)>,
}

/// Reference of an element's local edge into the shared edge table.
#[derive(Debug, Clone, Copy)]
pub struct ElemEdge {
    pub edge: usize,
    /// True when the local direction (v_a -> v_b in the triangle's cyclic
    /// order) agrees with the canonical direction of `edge`.
    pub forward: bool,
}

#[derive(Debug, Clone)]
pub struct FlatMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    pub elem_edges: Vec<[ElemEdge; 3]>,
    /// Elements incident to each vertex.
    pub vertex_elems: Vec<Vec<usize>>,
    /// Vertex lies on a boundary edge.
    pub boundary_vertex: Vec<bool>,
}

impl FlatMesh {
    /// Assemble connectivity and validate the manifold contract.
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::MeshInvalid("mesh has no triangles".into()));
        }
        for (k, t) in triangles.iter().enumerate() {
            for &v in t {
                if v >= vertices.len() {
                    return Err(Error::MeshInvalid(format!(
                        "triangle {k} references vertex {v} of {}",
                        vertices.len()
                    )));
                }
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::MeshInvalid(format!("triangle {k} repeats a vertex")));
            }
        }

        let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut elem_edges = vec![[ElemEdge { edge: 0, forward: true }; 3]; triangles.len()];
        // Directed incidence per edge: +1 forward, -1 backward.
        let mut direction_sum: Vec<i32> = Vec::new();

        for (k, t) in triangles.iter().enumerate() {
            for le in 0..3 {
                let a = t[le];
                let b = t[(le + 1) % 3];
                let key = [a.min(b), a.max(b)];
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push(Edge { v: key, elems: Vec::new() });
                    direction_sum.push(0);
                    edges.len() - 1
                });
                let forward = a < b;
                edges[id].elems.push((k, le));
                direction_sum[id] += if forward { 1 } else { -1 };
                elem_edges[k][le] = ElemEdge { edge: id, forward };
            }
        }

        for (id, e) in edges.iter().enumerate() {
            match e.elems.len() {
                1 => {}
                2 => {
                    if direction_sum[id] != 0 {
                        return Err(Error::MeshInvalid(format!(
                            "edge ({}, {}) is traversed in the same direction by both \
                             triangles; orientation is inconsistent",
                            e.v[0], e.v[1]
                        )));
                    }
                }
                m => {
                    return Err(Error::MeshInvalid(format!(
                        "edge ({}, {}) is shared by {m} triangles (non-manifold)",
                        e.v[0], e.v[1]
                    )));
                }
            }
        }

        let mut vertex_elems = vec![Vec::new(); vertices.len()];
        for (k, t) in triangles.iter().enumerate() {
            for &v in t {
                vertex_elems[v].push(k);
            }
        }
        let mut boundary_vertex = vec![false; vertices.len()];
        for e in edges.iter().filter(|e| e.elems.len() == 1) {
            boundary_vertex[e.v[0]] = true;
            boundary_vertex[e.v[1]] = true;
        }

        Ok(Self { vertices, triangles, edges, elem_edges, vertex_elems, boundary_vertex })
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.elems.len() == 1).count()
    }

    pub fn is_closed(&self) -> bool {
        self.boundary_edge_count() == 0
    }

    /// Number of edge-connected components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.triangles.len()];
        let mut components = 0;
        for start in 0..self.triangles.len() {
            if seen[start] {
                continue;
            }
            components += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(k) = stack.pop() {
                for ee in &self.elem_edges[k] {
                    for &(other, _) in &self.edges[ee.edge].elems {
                        if !seen[other] {
                            seen[other] = true;
                            stack.push(other);
                        }
                    }
                }
            }
        }
        components
    }

    /// Longest flat edge length, a crude mesh-size measure for reports.
    pub fn max_edge_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| (self.vertices[e.v[0]] - self.vertices[e.v[1]]).norm())
            .fold(0.0, f64::max)
    }
}

/// Parse an ASCII OFF file (triangles only, '#' comments allowed).
pub fn parse_off(text: &str) -> Result<FlatMesh> {
    let mut tokens = tokens_of(text);
    let header = tokens.next().ok_or_else(|| Error::MeshFormat("empty OFF file".into()))?;
    if header != "OFF" {
        return Err(Error::MeshFormat(format!("expected OFF header, found '{header}'")));
    }
    let nv = next_usize(&mut tokens, "vertex count")?;
    let nf = next_usize(&mut tokens, "face count")?;
    let _ne = next_usize(&mut tokens, "edge count")?;
    let mut vertices = Vec::with_capacity(nv);
    for i in 0..nv {
        let x = next_f64(&mut tokens, &format!("vertex {i} x"))?;
        let y = next_f64(&mut tokens, &format!("vertex {i} y"))?;
        let z = next_f64(&mut tokens, &format!("vertex {i} z"))?;
        vertices.push(Vector3::new(x, y, z));
    }
    let mut triangles = Vec::with_capacity(nf);
    for i in 0..nf {
        let count = next_usize(&mut tokens, &format!("face {i} vertex count"))?;
        if count != 3 {
            return Err(Error::MeshFormat(format!("face {i} has {count} vertices; only triangles are supported")));
        }
        let a = next_usize(&mut tokens, "face index")?;
        let b = next_usize(&mut tokens, "face index")?;
        let c = next_usize(&mut tokens, "face index")?;
        triangles.push([a, b, c]);
    }
    FlatMesh::new(vertices, triangles)
}

/// Parse a Wavefront OBJ (v/f records, triangles only).
pub fn parse_obj(text: &str) -> Result<FlatMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut coord = [0.0; 3];
                for c in coord.iter_mut() {
                    *c = parts
                        .next()
                        .and_then(|t| t.parse_ok())
                        .ok_or_else(|| Error::MeshFormat(format!("line {}: bad vertex", ln + 1)))?;
                }
                vertices.push(Vector3::new(coord[0], coord[1], coord[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|_| Error::MeshFormat(format!("line {}: bad face index '{t}'", ln + 1)))?;
                        let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                        if resolved < 0 || resolved as usize >= vertices.len() {
                            return Err(Error::MeshFormat(format!(
                                "line {}: face index {i} out of range",
                                ln + 1
                            )));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(Error::MeshFormat(format!(
                        "line {}: face has {} vertices; only triangles are supported",
                        ln + 1,
                        idx.len()
                    )));
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            // Normals, texture coords, groups, materials: ignored.
            _ => {}
        }
    }
    FlatMesh::new(vertices, triangles)
}

trait ParseOk {
    fn parse_ok(&self) -> Option<f64>;
}
impl ParseOk for &str {
    fn parse_ok(&self) -> Option<f64> {
        self.parse().ok()
    }
}

fn tokens_of(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace())
}

fn next_usize<'a>(it: &mut impl Iterator<Item = &'a str>, what: &str) -> Result<usize> {
    it.next()
        .ok_or_else(|| Error::MeshFormat(format!("unexpected end of file reading {what}")))?
        .parse()
        .map_err(|_| Error::MeshFormat(format!("bad integer for {what}")))
}

fn next_f64<'a>(it: &mut impl Iterator<Item = &'a str>, what: &str) -> Result<f64> {
    it.next()
        .ok_or_else(|| Error::MeshFormat(format!("unexpected end of file reading {what}")))?
        .parse()
        .map_err(|_| Error::MeshFormat(format!("bad number for {what}")))
}

/// Icosphere: regular icosahedron subdivided `subdiv` times, vertices
/// projected to radius r. 20 * 4^subdiv triangles.
pub fn icosphere(subdiv: usize, radius: f64) -> Result<FlatMesh> {
    if radius <= 0.0 {
        return Err(Error::MeshInvalid("icosphere radius must be positive".into()));
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut vertices: Vec<Vector3<f64>> =
        raw.iter().map(|c| Vector3::new(c[0], c[1], c[2]).normalize() * radius).collect();
    let faces: [[usize; 3]; 20] = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    let mut triangles: Vec<[usize; 3]> = faces
        .iter()
        .map(|&[a, b, c]| orient_outward([a, b, c], &vertices))
        .collect();
    for _ in 0..subdiv {
        (vertices, triangles) = subdivide_projected(vertices, triangles, radius);
    }
    FlatMesh::new(vertices, triangles)
}

/// Upper-hemisphere mesh with its boundary exactly on the equator:
/// the four top faces of an octahedron, subdivided and projected to the
/// unit sphere (equator edges stay in the z = 0 plane under projection).
pub fn hemisphere(subdiv: usize) -> Result<FlatMesh> {
    let mut vertices = vec![
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
    ];
    let mut triangles: Vec<[usize; 3]> =
        (0..4).map(|i| orient_outward([i, (i + 1) % 4, 4], &vertices)).collect();
    for _ in 0..subdiv {
        (vertices, triangles) = subdivide_projected(vertices, triangles, 1.0);
    }
    FlatMesh::new(vertices, triangles)
}

fn orient_outward(t: [usize; 3], vertices: &[Vector3<f64>]) -> [usize; 3] {
    let n = (vertices[t[1]] - vertices[t[0]]).cross(&(vertices[t[2]] - vertices[t[0]]));
    let c = vertices[t[0]] + vertices[t[1]] + vertices[t[2]];
    if n.dot(&c) < 0.0 {
        [t[0], t[2], t[1]]
    } else {
        t
    }
}

fn subdivide_projected(
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    radius: f64,
) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let mut vertices = vertices;
    let mut midpoint: HashMap<[usize; 2], usize> = HashMap::new();
    let mut out = Vec::with_capacity(triangles.len() * 4);
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| -> usize {
        let key = [a.min(b), a.max(b)];
        *midpoint.entry(key).or_insert_with(|| {
            let p = ((vertices[a] + vertices[b]) / 2.0).normalize() * radius;
            vertices.push(p);
            vertices.len() - 1
        })
    };
    for &[a, b, c] in &triangles {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        out.push([a, ab, ca]);
        out.push([ab, b, bc]);
        out.push([ca, bc, c]);
        out.push([ab, bc, ca]);
    }
    (vertices, out)
}

/// Isosurface triangulation of f = 0 by marching tetrahedra on a regular
/// grid (six tetrahedra per cell, cut vertices welded on grid edges).
/// Quality is adequate for demonstration meshes; the high-order accuracy
/// comes from the lift, not from this triangulation.
pub fn marching_tetrahedra(
    f: &dyn Fn(Vector3<f64>) -> f64,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    res: usize,
) -> Result<FlatMesh> {
    if res < 4 {
        return Err(Error::MeshInvalid("marching grid resolution must be at least 4".into()));
    }
    let np = res + 1;
    let step = (hi - lo) / res as f64;
    let point = |i: usize, j: usize, k: usize| {
        lo + Vector3::new(step.x * i as f64, step.y * j as f64, step.z * k as f64)
    };
    let gid = |i: usize, j: usize, k: usize| i + np * (j + np * k);
    let mut values = vec![0.0; np * np * np];
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                let mut v = f(point(i, j, k));
                // Keep sample values away from exactly zero so cut points
                // never coincide with grid vertices (degenerate triangles).
                if v.abs() < 1e-12 {
                    v = 1e-12;
                }
                values[gid(i, j, k)] = v;
            }
        }
    }

    let mut cut_vertices: Vec<Vector3<f64>> = Vec::new();
    let mut cut_ids: HashMap<[usize; 2], usize> = HashMap::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();

    // Kuhn decomposition of the unit cube around the main diagonal 0-7;
    // corner bit layout: bit0 = x, bit1 = y, bit2 = z.
    const TETS: [[usize; 4]; 6] =
        [[0, 1, 3, 7], [0, 3, 2, 7], [0, 2, 6, 7], [0, 6, 4, 7], [0, 4, 5, 7], [0, 5, 1, 7]];

    for k in 0..res {
        for j in 0..res {
            for i in 0..res {
                let corner_id = |c: usize| gid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                for tet in &TETS {
                    let ids = [corner_id(tet[0]), corner_id(tet[1]), corner_id(tet[2]), corner_id(tet[3])];
                    let vals = [values[ids[0]], values[ids[1]], values[ids[2]], values[ids[3]]];
                    emit_tet_triangles(
                        &ids,
                        &vals,
                        &|g| {
                            let kz = g / (np * np);
                            let jy = (g / np) % np;
                            let ix = g % np;
                            point(ix, jy, kz)
                        },
                        &mut cut_vertices,
                        &mut cut_ids,
                        &mut triangles,
                    );
                }
            }
        }
    }
    if triangles.is_empty() {
        return Err(Error::MeshInvalid(
            "isosurface does not intersect the sampling box".into(),
        ));
    }
    FlatMesh::new(cut_vertices, triangles)
}

fn emit_tet_triangles(
    ids: &[usize; 4],
    vals: &[f64; 4],
    grid_point: &dyn Fn(usize) -> Vector3<f64>,
    cut_vertices: &mut Vec<Vector3<f64>>,
    cut_ids: &mut HashMap<[usize; 2], usize>,
    triangles: &mut Vec<[usize; 3]>,
) {
    let neg: Vec<usize> = (0..4).filter(|&c| vals[c] < 0.0).collect();
    if neg.is_empty() || neg.len() == 4 {
        return;
    }
    let pos: Vec<usize> = (0..4).filter(|&c| vals[c] >= 0.0).collect();
    let mut cut = |a: usize, b: usize, cut_vertices: &mut Vec<Vector3<f64>>| -> usize {
        let key = [ids[a].min(ids[b]), ids[a].max(ids[b])];
        *cut_ids.entry(key).or_insert_with(|| {
            // Linear interpolation along the grid edge, evaluated in the
            // canonical key order so both sides weld to the same point.
            let (ga, gb) = (key[0], key[1]);
            let (va, vb) = if ids[a] == ga { (vals[a], vals[b]) } else { (vals[b], vals[a]) };
            let t = va / (va - vb);
            let p = grid_point(ga) * (1.0 - t) + grid_point(gb) * t;
            cut_vertices.push(p);
            cut_vertices.len() - 1
        })
    };
    let centroid = |side: &[usize]| -> Vector3<f64> {
        side.iter().map(|&c| grid_point(ids[c])).sum::<Vector3<f64>>() / side.len() as f64
    };
    let outward = centroid(&pos) - centroid(&neg);
    let mut push = |a: usize, b: usize, c: usize, cut_vertices: &mut Vec<Vector3<f64>>| {
        if a == b || b == c || a == c {
            return;
        }
        let pa = cut_vertices[a];
        let n = (cut_vertices[b] - pa).cross(&(cut_vertices[c] - pa));
        if n.dot(&outward) >= 0.0 {
            triangles.push([a, b, c]);
        } else {
            triangles.push([a, c, b]);
        }
    };
    match neg.len() {
        1 => {
            let v = neg[0];
            let t: Vec<usize> = pos.iter().map(|&p| cut(v, p, cut_vertices)).collect();
            push(t[0], t[1], t[2], cut_vertices);
        }
        3 => {
            let v = pos[0];
            let t: Vec<usize> = neg.iter().map(|&q| cut(v, q, cut_vertices)).collect();
            push(t[0], t[1], t[2], cut_vertices);
        }
        2 => {
            // Quad with cyclic corners (a0b0, a0b1, a1b1, a1b0).
            let (a0, a1) = (neg[0], neg[1]);
            let (b0, b1) = (pos[0], pos[1]);
            let q00 = cut(a0, b0, cut_vertices);
            let q01 = cut(a0, b1, cut_vertices);
            let q11 = cut(a1, b1, cut_vertices);
            let q10 = cut(a1, b0, cut_vertices);
            push(q00, q01, q11, cut_vertices);
            push(q00, q11, q10, cut_vertices);
        }
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        for s in 0..=3usize {
            let m = icosphere(s, 1.0).unwrap();
            assert_eq!(m.triangles.len(), 20usize * 4usize.pow(s as u32));
            assert!(m.is_closed());
            assert_eq!(m.component_count(), 1);
            // Euler characteristic of a sphere: V - E + F = 2.
            let chi =
                m.vertices.len() as i64 - m.edges.len() as i64 + m.triangles.len() as i64;
            assert_eq!(chi, 2);
            for v in &m.vertices {
                assert!((v.norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hemisphere_counts_and_boundary() {
        for s in 0..=3usize {
            let m = hemisphere(s).unwrap();
            assert_eq!(m.triangles.len(), 4usize * 4usize.pow(s as u32));
            assert_eq!(m.boundary_edge_count(), 4 * 2usize.pow(s as u32));
            for v in &m.vertices {
                assert!(v.z >= -1e-15);
                assert!((v.norm() - 1.0).abs() < 1e-14);
            }
            // Boundary vertices lie exactly on the equator.
            for (vi, &on_boundary) in m.boundary_vertex.iter().enumerate() {
                if on_boundary {
                    assert_eq!(m.vertices[vi].z, 0.0);
                }
            }
        }
    }

    #[test]
    fn off_roundtrip_two_triangle_square() {
        let text = "OFF\n# unit square\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n";
        let m = parse_off(text).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.triangles.len(), 2);
        assert_eq!(m.edges.len(), 5);
        assert_eq!(m.boundary_edge_count(), 4);
        assert!(!m.is_closed());
    }

    #[test]
    fn off_rejects_quads_and_bad_headers() {
        assert!(matches!(
            parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n"),
            Err(Error::MeshFormat(_))
        ));
        assert!(matches!(parse_off("PLY\n"), Err(Error::MeshFormat(_))));
    }

    #[test]
    fn obj_parses_faces_with_slashes_and_negatives() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\nf -3//1 -2 -1\n";
        let m = parse_obj(text);
        // Two identical triangles share all three edges in the same
        // direction: orientation validation must reject it.
        assert!(matches!(m, Err(Error::MeshInvalid(_))));
        let ok = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(ok.triangles.len(), 1);
    }

    #[test]
    fn non_manifold_edge_is_rejected() {
        let text = "OFF\n5 3 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 -1 0\n3 0 1 2\n3 1 0 3\n3 0 1 4\n";
        assert!(matches!(parse_off(text), Err(Error::MeshInvalid(_))));
    }

    #[test]
    fn marching_tetrahedra_recovers_a_sphere() {
        let f = |p: Vector3<f64>| p.norm_squared() - 1.0;
        let m = marching_tetrahedra(
            &f,
            Vector3::new(-1.4, -1.4, -1.4),
            Vector3::new(1.4, 1.4, 1.4),
            12,
        )
        .unwrap();
        assert!(m.is_closed(), "isosurface mesh should be watertight");
        assert_eq!(m.component_count(), 1);
        let chi = m.vertices.len() as i64 - m.edges.len() as i64 + m.triangles.len() as i64;
        assert_eq!(chi, 2, "sphere topology expected");
        for v in &m.vertices {
            let r = v.norm();
            assert!((r - 1.0).abs() < 0.15, "vertex far from isosurface: r={r}");
        }
    }
}
