//! Legacy ASCII VTK output: each high-order element contributes its nodal
//! point cloud plus the sub-triangulation of the node lattice, so standard
//! viewers render the curved solution without any high-order support.

use crate::error::CliError;
use std::io::Write;
use thps::field::NodalField;
use thps::surface_geom::LiftedMesh;

/// Graded-lex index of lattice point (p, q) on the degree-n triangle.
fn lattice_index(p: usize, q: usize) -> usize {
    (p + q) * (p + q + 1) / 2 + p
}

/// Upward and downward micro-triangles over the degree-n node lattice,
/// as local node indices. n^2 triangles total.
pub fn subdivision(n: usize) -> Vec<[usize; 3]> {
    let mut tris = Vec::with_capacity(n * n);
    for q in 0..n {
        for p in 0..n - q {
            tris.push([lattice_index(p, q), lattice_index(p + 1, q), lattice_index(p, q + 1)]);
            if p + q < n - 1 {
                tris.push([
                    lattice_index(p + 1, q),
                    lattice_index(p + 1, q + 1),
                    lattice_index(p, q + 1),
                ]);
            }
        }
    }
    tris
}

/// Write one or more nodal scalar fields over the lifted mesh.
pub fn write_vtk(
    path: &std::path::Path,
    mesh: &LiftedMesh,
    fields: &[(&str, &NodalField)],
    title: &str,
) -> Result<(), CliError> {
    let npe = mesh.nodes_per_element();
    let nelem = mesh.num_elements();
    let total = nelem * npe;
    let local_tris = subdivision(mesh.n());
    let ncells = nelem * local_tris.len();

    let file = std::fs::File::create(path)
        .map_err(|e| CliError::io(format!("creating {}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    let mut put = |s: String| -> Result<(), CliError> {
        w.write_all(s.as_bytes()).map_err(|e| CliError::io(e.to_string()))
    };

    put("# vtk DataFile Version 3.0\n".into())?;
    put(format!("{title}\n"))?;
    put("ASCII\nDATASET UNSTRUCTURED_GRID\n".into())?;
    put(format!("POINTS {total} double\n"))?;
    for el in &mesh.elements {
        for &pid in &el.local_to_phys {
            let p = mesh.phys_coords[pid];
            put(format!("{:.17e} {:.17e} {:.17e}\n", p.x, p.y, p.z))?;
        }
    }
    put(format!("CELLS {ncells} {}\n", 4 * ncells))?;
    for k in 0..nelem {
        let base = k * npe;
        for t in &local_tris {
            put(format!("3 {} {} {}\n", base + t[0], base + t[1], base + t[2]))?;
        }
    }
    put(format!("CELL_TYPES {ncells}\n"))?;
    for _ in 0..ncells {
        put("5\n".into())?;
    }
    put(format!("POINT_DATA {total}\n"))?;
    for (name, field) in fields {
        put(format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"))?;
        for v in field.as_slice() {
            put(format!("{v:.17e}\n"))?;
        }
    }
    Ok(())
}
