//! Shared helpers for integration tests: a monolithic dense reference
//! solver assembled over the global conforming node set, small fixed
//! meshes, and error/slope utilities.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3};
use thps::field::NodalField;
use thps::leaf_ops::{assemble_operator, flux_matrix, PdeCoefficients};
use thps::surface_geom::mesh::parse_off;
use thps::surface_geom::{FlatMesh, LiftedMesh};

/// Solve the global problem directly: one unknown per physical node, PDE
/// rows at element-interior nodes, flux-balance rows (summed over every
/// incident element) at shared skeleton nodes, Dirichlet rows on the
/// surface boundary. No hierarchy involved; the merge algebra must
/// reproduce this solution.
pub fn monolithic_solve(
    mesh: &LiftedMesh,
    coeffs: &PdeCoefficients,
    forcing: &NodalField,
    dirichlet: impl Fn(Vector3<f64>) -> f64,
) -> NodalField {
    let total = mesh.numbering.total();
    let mut a = DMatrix::<f64>::zeros(total, total);
    let mut rhs = DVector::<f64>::zeros(total);

    for k in 0..mesh.num_elements() {
        let l_k = assemble_operator(mesh, k, coeffs);
        let f_k = flux_matrix(mesh, k);
        let phys = &mesh.elements[k].local_to_phys;
        for &r in &mesh.ref_elem.interior {
            let row = phys[r];
            for (c, &pc) in phys.iter().enumerate() {
                a[(row, pc)] += l_k[(r, c)];
            }
            rhs[row] = forcing.element(k)[r];
        }
        for (pos, &r) in mesh.ref_elem.boundary.iter().enumerate() {
            let row = phys[r];
            if mesh.boundary_phys[row] {
                continue;
            }
            for (c, &pc) in phys.iter().enumerate() {
                a[(row, pc)] += f_k[(pos, c)];
            }
        }
    }
    for (p, &on_boundary) in mesh.boundary_phys.iter().enumerate() {
        if on_boundary {
            a[(p, p)] = 1.0;
            rhs[p] = dirichlet(mesh.phys_coords[p]);
        }
    }

    let u = a.lu().solve(&rhs).expect("monolithic system is singular");
    let mut field = NodalField::zeros(mesh.num_elements(), mesh.nodes_per_element());
    for k in 0..mesh.num_elements() {
        let phys = &mesh.elements[k].local_to_phys;
        let vals = field.element_mut(k);
        for (r, &p) in phys.iter().enumerate() {
            vals[r] = u[p];
        }
    }
    field
}

/// max |a - b| / max |b|.
pub fn rel_linf(a: &NodalField, b: &NodalField) -> f64 {
    let num = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0_f64, f64::max);
    let den = b.as_slice().iter().map(|y| y.abs()).fold(0.0_f64, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Least-squares slope of y against x on log-log axes.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Two right triangles tiling the unit square.
pub fn mesh2() -> FlatMesh {
    parse_off("OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n").unwrap()
}

/// Four triangles fanning around an interior vertex at the square's
/// centre; the smallest mesh that internalizes a vertex.
pub fn mesh4() -> FlatMesh {
    parse_off(
        "OFF\n5 4 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0.5 0.5 0\n\
         3 0 1 4\n3 1 2 4\n3 2 3 4\n3 3 0 4\n",
    )
    .unwrap()
}

/// Eight triangles on a 3x3 vertex grid over [0,2]^2, alternating
/// diagonal directions; one fully interior vertex and a mix of interior
/// edges at different angles.
pub fn mesh8() -> FlatMesh {
    let mut text = String::from("OFF\n9 8 0\n");
    for j in 0..3 {
        for i in 0..3 {
            text.push_str(&format!("{} {} 0\n", i, j));
        }
    }
    let v = |i: usize, j: usize| j * 3 + i;
    for j in 0..2 {
        for i in 0..2 {
            let (a, b, c, d) = (v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1));
            if (i + j) % 2 == 0 {
                text.push_str(&format!("3 {a} {b} {c}\n3 {a} {c} {d}\n"));
            } else {
                text.push_str(&format!("3 {a} {b} {d}\n3 {b} {c} {d}\n"));
            }
        }
    }
    parse_off(&text).unwrap()
}

/// Closed octahedron with unit vertices; projects onto the unit sphere.
pub fn octahedron() -> FlatMesh {
    parse_off(
        "OFF\n6 8 0\n1 0 0\n-1 0 0\n0 1 0\n0 -1 0\n0 0 1\n0 0 -1\n\
         3 0 2 4\n3 2 1 4\n3 1 3 4\n3 3 0 4\n3 2 0 5\n3 1 2 5\n3 3 1 5\n3 0 3 5\n",
    )
    .unwrap()
}
