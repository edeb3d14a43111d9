//! Surface geometry: flat control meshes, surface definitions, and the
//! high-order lift that joins them.

pub mod lift;
pub mod mesh;
pub mod surface;

pub use lift::{lift_mesh, LiftedMesh, Numbering, SurfaceElement};
pub use mesh::FlatMesh;
pub use surface::{ImplicitSurface, SurfaceDef};

use crate::error::{Error, Result};

/// Resolve a mesh source string: either a file path (.off / .obj) or a
/// builtin generator spec. Builtins also imply a surface:
///
/// - `icosphere:<subdiv>[:<radius>]` -> sphere of that radius
/// - `hemisphere:<subdiv>` -> unit sphere (boundary on the equator)
/// - `swiss-cheese[:<res>]`, `torus[:<res>]` -> the matching level set,
///   meshed by marching tetrahedra at grid resolution `res` (default 24)
///
/// File meshes imply no surface; pair them with an explicit `SurfaceDef`
/// (or `Identity` to solve on the flat mesh itself).
pub fn load_mesh(spec: &str) -> Result<(FlatMesh, Option<SurfaceDef>)> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts[0] {
        "icosphere" => {
            let subdiv = parse_arg(&parts, 1, "icosphere subdivision")?;
            let radius = match parts.get(2) {
                Some(r) => r
                    .parse()
                    .map_err(|_| Error::UnknownBuiltin(format!("bad icosphere radius '{r}'")))?,
                None => 1.0,
            };
            check_len(&parts, 3, spec)?;
            Ok((mesh::icosphere(subdiv, radius)?, Some(SurfaceDef::sphere(radius))))
        }
        "hemisphere" => {
            let subdiv = parse_arg(&parts, 1, "hemisphere subdivision")?;
            check_len(&parts, 2, spec)?;
            Ok((mesh::hemisphere(subdiv)?, Some(SurfaceDef::sphere(1.0))))
        }
        "swiss-cheese" | "torus" => {
            let implicit = if parts[0] == "torus" {
                surface::asymmetric_torus()
            } else {
                surface::swiss_cheese()
            };
            let res = match parts.get(1) {
                Some(r) => r
                    .parse()
                    .map_err(|_| Error::UnknownBuiltin(format!("bad grid resolution '{r}'")))?,
                None => 24,
            };
            check_len(&parts, 2, spec)?;
            let f = implicit.f.clone();
            let mesh =
                mesh::marching_tetrahedra(&move |p| f(p), implicit.bbox.0, implicit.bbox.1, res)?;
            Ok((mesh, Some(SurfaceDef::Implicit(implicit))))
        }
        _ => {
            let path = std::path::Path::new(spec);
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            match ext.to_ascii_lowercase().as_str() {
                "off" => Ok((mesh::parse_off(&std::fs::read_to_string(path)?)?, None)),
                "obj" => Ok((mesh::parse_obj(&std::fs::read_to_string(path)?)?, None)),
                _ => Err(Error::UnknownBuiltin(format!(
                    "'{spec}' is neither a builtin mesh nor a .off/.obj path"
                ))),
            }
        }
    }
}

fn parse_arg(parts: &[&str], idx: usize, what: &str) -> Result<usize> {
    parts
        .get(idx)
        .ok_or_else(|| Error::UnknownBuiltin(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::UnknownBuiltin(format!("bad {what} '{}'", parts[idx])))
}

fn check_len(parts: &[&str], max: usize, spec: &str) -> Result<()> {
    if parts.len() > max {
        return Err(Error::UnknownBuiltin(format!("too many arguments in mesh spec '{spec}'")));
    }
    Ok(())
}
