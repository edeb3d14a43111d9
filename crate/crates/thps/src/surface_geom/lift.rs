//! Lifting the flat control mesh onto the surface.
//!
//! Each flat triangle carries the degree-n reference node set; nodes are
//! placed in the plane of the triangle and projected to their closest
//! surface point, giving a high-order parametrization per element. Shared
//! nodes are computed canonically (edge nodes from the edge's own endpoint
//! pair in canonical order, vertices from the mesh vertex) so that the two
//! elements meeting at an edge hold bitwise-identical coordinates: the
//! skeleton is conforming by construction, not up to a tolerance.
//!
//! Per element we keep the metric-aware ingredients the solver needs:
//! tangential differentiation matrices for the three ambient coordinates,
//! the area element for quadrature, and outward binormal directions along
//! each edge for flux (Neumann-trace) extraction.

use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::ref_basis::{build_reference_element, nodes::lobatto_family, ReferenceElement};
use crate::surface_geom::mesh::FlatMesh;
use crate::surface_geom::surface::SurfaceDef;
use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;

/// Reference edge unit tangents (direction of each edge's node list).
const EDGE_TANGENT: [[f64; 2]; 3] = [
    [1.0, 0.0],
    [-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
    [0.0, -1.0],
];
/// Reference outward edge normals.
const EDGE_OUTWARD: [[f64; 2]; 3] = [
    [0.0, -1.0],
    [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
    [-1.0, 0.0],
];

/// Global numbering of physical nodes: mesh vertices first, then n-1
/// interior slots per mesh edge (ordered along the edge's canonical
/// direction), then element-interior nodes. Two elements referring to the
/// same physical node always agree on its id.
#[derive(Debug, Clone)]
pub struct Numbering {
    pub n: usize,
    pub num_vertices: usize,
    pub num_edges: usize,
    pub num_elements: usize,
    pub interior_per_element: usize,
}

impl Numbering {
    pub fn new(flat: &FlatMesh, n: usize, interior_per_element: usize) -> Self {
        Self {
            n,
            num_vertices: flat.vertices.len(),
            num_edges: flat.edges.len(),
            num_elements: flat.triangles.len(),
            interior_per_element,
        }
    }

    pub fn vertex_id(&self, v: usize) -> usize {
        v
    }

    /// Slot in 1..n measured from the edge's canonical first vertex.
    pub fn edge_slot_id(&self, edge: usize, slot: usize) -> usize {
        debug_assert!(slot >= 1 && slot < self.n);
        self.num_vertices + edge * (self.n - 1) + (slot - 1)
    }

    pub fn interior_id(&self, elem: usize, t: usize) -> usize {
        self.num_vertices + self.num_edges * (self.n - 1) + elem * self.interior_per_element + t
    }

    pub fn total(&self) -> usize {
        self.num_vertices
            + self.num_edges * (self.n - 1)
            + self.num_elements * self.interior_per_element
    }

    pub fn is_vertex(&self, id: usize) -> bool {
        id < self.num_vertices
    }

    pub fn is_edge_slot(&self, id: usize) -> bool {
        id >= self.num_vertices && id < self.num_vertices + self.num_edges * (self.n - 1)
    }
}

/// One lifted element: surface nodes plus the discrete calculus on them.
#[derive(Debug, Clone)]
pub struct SurfaceElement {
    /// Lifted nodal coordinates, reference lattice order.
    pub nodes: Vec<Vector3<f64>>,
    /// Columns of the lift Jacobian (dX/dxi, dX/deta) per node.
    /// Released after operator assembly to bound memory.
    pub jacobian: Option<Vec<[Vector3<f64>; 2]>>,
    /// sqrt(det g) per node: area element relative to the reference simplex.
    pub metric_sqrt: DVector<f64>,
    /// Tangential differentiation matrices for ambient x, y, z.
    /// Released after operator assembly to bound memory.
    pub d_surf: Option<[DMatrix<f64>; 3]>,
    /// Unit surface normal per node (orientation of the flat triangle).
    pub normals: Vec<Vector3<f64>>,
    /// Outward unit binormal per edge node, aligned with the reference
    /// element's per-edge node lists (n+1 entries each).
    pub edge_binormals: [Vec<Vector3<f64>>; 3],
    /// Quadrature weights against nodal values: w . u integrates the
    /// interpolant of u over the curved element.
    pub quad_weights: DVector<f64>,
    /// Physical node id for each local node.
    pub local_to_phys: Vec<usize>,
    /// Longest lifted vertex-to-vertex chord.
    pub h: f64,
}

impl SurfaceElement {
    pub fn d_surf(&self) -> &[DMatrix<f64>; 3] {
        self.d_surf
            .as_ref()
            .expect("tangential differentiation matrices were released")
    }
}

#[derive(Debug)]
pub struct LiftedMesh {
    pub flat: FlatMesh,
    pub surface: SurfaceDef,
    pub ref_elem: ReferenceElement,
    pub numbering: Numbering,
    pub elements: Vec<SurfaceElement>,
    /// Coordinates by physical node id.
    pub phys_coords: Vec<Vector3<f64>>,
    /// Physical node lies on the mesh boundary curve.
    pub boundary_phys: Vec<bool>,
    /// Largest element diameter proxy (max lifted edge chord).
    pub h_max: f64,
}

/// Lift `flat` onto `surface` with degree-n elements.
pub fn lift_mesh(flat: FlatMesh, surface: SurfaceDef, n: usize) -> Result<LiftedMesh> {
    let ref_elem = build_reference_element(n)?;
    let family = lobatto_family(n);
    let numbering = Numbering::new(&flat, n, ref_elem.interior.len());

    let elements: Vec<SurfaceElement> = (0..flat.triangles.len())
        .into_par_iter()
        .map(|k| build_surface_element(&flat, &ref_elem, &family, &numbering, &surface, k))
        .collect::<Result<_>>()?;

    let mut phys_coords = vec![Vector3::zeros(); numbering.total()];
    for el in &elements {
        for (r, &pid) in el.local_to_phys.iter().enumerate() {
            phys_coords[pid] = el.nodes[r];
        }
    }

    let mut boundary_phys = vec![false; numbering.total()];
    for (v, &b) in flat.boundary_vertex.iter().enumerate() {
        boundary_phys[numbering.vertex_id(v)] = b;
    }
    for (e, edge) in flat.edges.iter().enumerate() {
        if edge.elems.len() == 1 {
            for slot in 1..n {
                boundary_phys[numbering.edge_slot_id(e, slot)] = true;
            }
        }
    }

    let h_max = elements.iter().map(|el| el.h).fold(0.0, f64::max);
    Ok(LiftedMesh { flat, surface, ref_elem, numbering, elements, phys_coords, boundary_phys, h_max })
}

fn build_surface_element(
    flat: &FlatMesh,
    ref_elem: &ReferenceElement,
    family: &[f64],
    numbering: &Numbering,
    surface: &SurfaceDef,
    k: usize,
) -> Result<SurfaceElement> {
    let n = ref_elem.n;
    let dim = ref_elem.dim;
    let tri = flat.triangles[k];
    let (va, vb, vc) = (flat.vertices[tri[0]], flat.vertices[tri[1]], flat.vertices[tri[2]]);

    // Flat node positions. Interior nodes use the element's affine map;
    // vertex and edge nodes are computed canonically so both elements at a
    // shared edge produce identical bits.
    let mut flat_pts: Vec<Vector3<f64>> = ref_elem
        .nodes
        .iter()
        .map(|&[xi, eta]| va + xi * (vb - va) + eta * (vc - va))
        .collect();
    for c in 0..3 {
        flat_pts[ref_elem.vertices[c]] = flat.vertices[tri[c]];
    }
    let mut local_to_phys = vec![usize::MAX; dim];
    for c in 0..3 {
        local_to_phys[ref_elem.vertices[c]] = numbering.vertex_id(tri[c]);
    }
    for le in 0..3 {
        let ee = flat.elem_edges[k][le];
        let [a_id, b_id] = flat.edges[ee.edge].v;
        let (pa, pb) = (flat.vertices[a_id], flat.vertices[b_id]);
        for pos in 1..n {
            let slot = if ee.forward { pos } else { n - pos };
            let r = ref_elem.edges[le][pos];
            flat_pts[r] = pa + family[slot] * (pb - pa);
            local_to_phys[r] = numbering.edge_slot_id(ee.edge, slot);
        }
    }
    for (t, &r) in ref_elem.interior.iter().enumerate() {
        local_to_phys[r] = numbering.interior_id(k, t);
    }
    debug_assert!(local_to_phys.iter().all(|&p| p != usize::MAX));

    let nodes: Vec<Vector3<f64>> = flat_pts
        .iter()
        .map(|&p| surface.project(p))
        .collect::<Result<_>>()
        .map_err(|e| match e {
            Error::ProjectionFailed { x, y, z, reason } => Error::ProjectionFailed {
                x,
                y,
                z,
                reason: format!("{reason} (element {k})"),
            },
            other => other,
        })?;

    // Jacobian columns per node via the reference differentiation matrices.
    let coord = |c: usize| DVector::from_iterator(dim, nodes.iter().map(|p| p[c]));
    let (xs, ys, zs) = (coord(0), coord(1), coord(2));
    let dxi = [&ref_elem.d_xi * &xs, &ref_elem.d_xi * &ys, &ref_elem.d_xi * &zs];
    let deta = [&ref_elem.d_eta * &xs, &ref_elem.d_eta * &ys, &ref_elem.d_eta * &zs];
    let jacobian: Vec<[Vector3<f64>; 2]> = (0..dim)
        .map(|i| {
            [
                Vector3::new(dxi[0][i], dxi[1][i], dxi[2][i]),
                Vector3::new(deta[0][i], deta[1][i], deta[2][i]),
            ]
        })
        .collect();

    let mut metric_sqrt = DVector::zeros(dim);
    let mut normals = Vec::with_capacity(dim);
    // Rows of g^{-1} J^T: gradients of the reference coordinates.
    let mut grad_xi = Vec::with_capacity(dim);
    let mut grad_eta = Vec::with_capacity(dim);
    for (i, j) in jacobian.iter().enumerate() {
        let (j1, j2) = (j[0], j[1]);
        let (g11, g12, g22) = (j1.dot(&j1), j1.dot(&j2), j2.dot(&j2));
        let det = g11 * g22 - g12 * g12;
        if !(det > 1e-20) {
            return Err(Error::Numerical(format!(
                "degenerate metric (det g = {det:.3e}) at node {i} of element {k}"
            )));
        }
        metric_sqrt[i] = det.sqrt();
        grad_xi.push((g22 * j1 - g12 * j2) / det);
        grad_eta.push((g11 * j2 - g12 * j1) / det);
        normals.push(j1.cross(&j2).normalize());
    }

    // D^G_c = diag(grad_xi[c]) D_xi + diag(grad_eta[c]) D_eta.
    let mut d_surf = [DMatrix::zeros(dim, dim), DMatrix::zeros(dim, dim), DMatrix::zeros(dim, dim)];
    for c in 0..3 {
        for i in 0..dim {
            let (a, b) = (grad_xi[i][c], grad_eta[i][c]);
            for jj in 0..dim {
                d_surf[c][(i, jj)] = a * ref_elem.d_xi[(i, jj)] + b * ref_elem.d_eta[(i, jj)];
            }
        }
    }

    let edge_binormals = std::array::from_fn(|le| {
        ref_elem.edges[le]
            .iter()
            .map(|&r| {
                let j = &jacobian[r];
                let tangent = EDGE_TANGENT[le][0] * j[0] + EDGE_TANGENT[le][1] * j[1];
                let outward = EDGE_OUTWARD[le][0] * j[0] + EDGE_OUTWARD[le][1] * j[1];
                let mut b = tangent.cross(&normals[r]).normalize();
                if b.dot(&outward) < 0.0 {
                    b = -b;
                }
                b
            })
            .collect()
    });

    let quad_weights =
        DVector::from_iterator(dim, (0..dim).map(|i| ref_elem.quadrature_row()[i] * metric_sqrt[i]));

    let lifted_vert = |c: usize| nodes[ref_elem.vertices[c]];
    let h = (0..3)
        .map(|c| (lifted_vert(c) - lifted_vert((c + 1) % 3)).norm())
        .fold(0.0, f64::max);

    Ok(SurfaceElement {
        nodes,
        jacobian: Some(jacobian),
        metric_sqrt,
        d_surf: Some(d_surf),
        normals,
        edge_binormals,
        quad_weights,
        local_to_phys,
        h,
    })
}

impl LiftedMesh {
    pub fn n(&self) -> usize {
        self.ref_elem.n
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn nodes_per_element(&self) -> usize {
        self.ref_elem.dim
    }

    /// Integral of a nodal field's elementwise interpolant over the surface.
    pub fn integrate(&self, field: &NodalField) -> f64 {
        self.elements
            .iter()
            .enumerate()
            .map(|(k, el)| {
                el.quad_weights
                    .iter()
                    .zip(field.element(k))
                    .map(|(w, u)| w * u)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn area(&self) -> f64 {
        self.elements.iter().map(|el| el.quad_weights.sum()).sum()
    }

    pub fn mean(&self, field: &NodalField) -> f64 {
        self.integrate(field) / self.area()
    }

    /// Area-weighted spatial variance of a nodal field.
    pub fn variance(&self, field: &NodalField) -> f64 {
        let mean = self.mean(field);
        let second: f64 = self
            .elements
            .iter()
            .enumerate()
            .map(|(k, el)| {
                el.quad_weights
                    .iter()
                    .zip(field.element(k))
                    .map(|(w, u)| w * (u - mean) * (u - mean))
                    .sum::<f64>()
            })
            .sum();
        (second / self.area()).max(0.0)
    }

    /// L2 norm of the elementwise interpolant.
    pub fn l2_norm(&self, field: &NodalField) -> f64 {
        self.elements
            .iter()
            .enumerate()
            .map(|(k, el)| {
                el.quad_weights
                    .iter()
                    .zip(field.element(k))
                    .map(|(w, u)| w * u * u)
                    .sum::<f64>()
            })
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    /// Sample a function of position into a nodal field.
    pub fn sample(&self, f: impl Fn(Vector3<f64>) -> f64) -> NodalField {
        let mut field = NodalField::zeros(self.num_elements(), self.nodes_per_element());
        for (k, el) in self.elements.iter().enumerate() {
            let vals = field.element_mut(k);
            for (r, &p) in el.nodes.iter().enumerate() {
                vals[r] = f(p);
            }
        }
        field
    }

    /// Pairs of (element, local node) sharing each position along an
    /// interior mesh edge, endpoints included; n+1 pairs.
    pub fn interface_node_pairs(&self, edge: usize) -> Option<Vec<[(usize, usize); 2]>> {
        let e = &self.flat.edges[edge];
        if e.elems.len() != 2 {
            return None;
        }
        let n = self.n();
        let (k1, le1) = e.elems[0];
        let (k2, le2) = e.elems[1];
        let f1 = self.flat.elem_edges[k1][le1].forward;
        let f2 = self.flat.elem_edges[k2][le2].forward;
        Some(
            (0..=n)
                .map(|pos1| {
                    let slot = if f1 { pos1 } else { n - pos1 };
                    let pos2 = if f2 { slot } else { n - slot };
                    [
                        (k1, self.ref_elem.edges[le1][pos1]),
                        (k2, self.ref_elem.edges[le2][pos2]),
                    ]
                })
                .collect(),
        )
    }

    /// Free the per-element differentiation matrices and Jacobians once
    /// operators have been assembled; integrals and traces stay available.
    pub fn release_derivative_matrices(&mut self) {
        for el in &mut self.elements {
            el.d_surf = None;
            el.jacobian = None;
        }
    }
}
