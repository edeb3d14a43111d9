//! Leaf solution operators.
//!
//! On each lifted element the PDE is collocated at the interior nodes and
//! closed with Dirichlet values at the boundary nodes. Eliminating the
//! interior block yields the element's solution operator (boundary data to
//! interior values) and its Dirichlet-to-Neumann map (boundary data to
//! outward binormal derivatives along the three edges). These two dense
//! maps are all the merge stage ever sees of an element.
//!
//! Boundary flux rows follow the element's cyclic boundary ordering; at a
//! corner the row is the sum of the two incident edges' binormal
//! derivatives, which is the discrete counterpart of the flux balance the
//! merge enforces once corners become interior to a cluster.

use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::surface_geom::LiftedMesh;
use nalgebra::{DMatrix, DVector, Dyn, LU};

/// Upper-triangle order of the symmetric second-order coefficient:
/// [xx, xy, xz, yy, yz, zz].
const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// A PDE coefficient: spatially constant, or nodal values over the mesh.
#[derive(Debug, Clone)]
pub enum Coefficient {
    Constant(f64),
    Field(NodalField),
}

impl Coefficient {
    pub fn zero() -> Self {
        Coefficient::Constant(0.0)
    }

    fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Constant(c) if *c == 0.0)
    }

    fn value(&self, elem: usize, node: usize) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Field(f) => f.element(elem)[node],
        }
    }
}

/// Coefficients of the operator
///     L u = sum_{i<=j} a_ij' (D_i D_j u) + sum_i b_i (D_i u) + c u
/// in tangential derivatives, with `a` stored as the upper triangle
/// [xx, xy, xz, yy, yz, zz] of a symmetric matrix; off-diagonal entries act
/// with a factor of two, matching the symmetric form a : grad grad u.
#[derive(Debug, Clone)]
pub struct PdeCoefficients {
    pub a: [Coefficient; 6],
    pub b: [Coefficient; 3],
    pub c: Coefficient,
}

impl PdeCoefficients {
    /// L = Laplace-Beltrami: a = identity, no drift, no reaction.
    pub fn laplace_beltrami() -> Self {
        let one = || Coefficient::Constant(1.0);
        let zero = Coefficient::zero;
        Self {
            a: [one(), zero(), zero(), one(), zero(), one()],
            b: [zero(), zero(), zero()],
            c: zero(),
        }
    }

    /// L = diffusion * Laplace-Beltrami + mass. The implicit time-step
    /// operator I - gamma Lap is `helmholtz(-gamma, 1.0)`.
    pub fn helmholtz(diffusion: f64, mass: f64) -> Self {
        let d = || Coefficient::Constant(diffusion);
        let zero = Coefficient::zero;
        Self {
            a: [d(), zero(), zero(), d(), zero(), d()],
            b: [zero(), zero(), zero()],
            c: Coefficient::Constant(mass),
        }
    }

    /// Spatially constant coefficients: a = (xx, xy, xz, yy, yz, zz),
    /// b = (x, y, z), plus the zero-order term c.
    pub fn constant(a: [f64; 6], b: [f64; 3], c: f64) -> Self {
        Self {
            a: a.map(Coefficient::Constant),
            b: b.map(Coefficient::Constant),
            c: Coefficient::Constant(c),
        }
    }
}

/// Dense collocation matrix of L on element `k` (all nodes by all nodes).
/// Requires the element's differentiation matrices (not yet released).
pub fn assemble_operator(mesh: &LiftedMesh, k: usize, coeffs: &PdeCoefficients) -> DMatrix<f64> {
    let el = &mesh.elements[k];
    let d = el.d_surf();
    let nn = mesh.ref_elem.dim;
    let mut l = DMatrix::zeros(nn, nn);
    for (idx, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        let coef = &coeffs.a[idx];
        if coef.is_zero() {
            continue;
        }
        let factor = if i == j { 1.0 } else { 2.0 };
        let p = &d[i] * &d[j];
        for r in 0..nn {
            let v = factor * coef.value(k, r);
            if v != 0.0 {
                for cc in 0..nn {
                    l[(r, cc)] += v * p[(r, cc)];
                }
            }
        }
    }
    for (i, coef) in coeffs.b.iter().enumerate() {
        if coef.is_zero() {
            continue;
        }
        for r in 0..nn {
            let v = coef.value(k, r);
            if v != 0.0 {
                for cc in 0..nn {
                    l[(r, cc)] += v * d[i][(r, cc)];
                }
            }
        }
    }
    if !coeffs.c.is_zero() {
        for r in 0..nn {
            l[(r, r)] += coeffs.c.value(k, r);
        }
    }
    l
}

/// Boundary-flux matrix of element `k`: rows follow the cyclic boundary
/// ordering, columns all element nodes. Row p applied to nodal values gives
/// the outward binormal derivative at boundary node p; corner rows carry
/// the sum over both incident edges.
pub fn flux_matrix(mesh: &LiftedMesh, k: usize) -> DMatrix<f64> {
    let re = &mesh.ref_elem;
    let el = &mesh.elements[k];
    let d = el.d_surf();
    let n = re.n;
    let nn = re.dim;
    let nb = re.boundary.len();
    let mut slot = vec![usize::MAX; nn];
    for (pos, &r) in re.boundary.iter().enumerate() {
        slot[r] = pos;
    }
    let mut fx = DMatrix::zeros(nb, nn);
    for e in 0..3 {
        for t in 0..=n {
            let r = re.edges[e][t];
            let bn = el.edge_binormals[e][t];
            let row = slot[r];
            for c in 0..3 {
                for cc in 0..nn {
                    fx[(row, cc)] += bn[c] * d[c][(r, cc)];
                }
            }
        }
    }
    fx
}

/// Factorized leaf: solution operator, flux maps, DtN.
#[derive(Debug)]
pub struct LeafOperator {
    pub elem: usize,
    lii: Option<LU<f64, Dyn, Dyn>>,
    /// Interior response to boundary data, n_int x 3n.
    pub s_map: DMatrix<f64>,
    /// Boundary flux of interior values, 3n x n_int.
    pub dflux_int: DMatrix<f64>,
    /// Boundary flux of boundary values, 3n x 3n.
    pub dflux_bnd: DMatrix<f64>,
    /// Dirichlet-to-Neumann map, 3n x 3n.
    pub dtn: DMatrix<f64>,
}

/// Build the leaf operator for element `k`.
pub fn build_leaf(mesh: &LiftedMesh, k: usize, coeffs: &PdeCoefficients) -> Result<LeafOperator> {
    let re = &mesh.ref_elem;
    let interior = &re.interior;
    let boundary = &re.boundary;
    let ni = interior.len();

    let l = assemble_operator(mesh, k, coeffs);
    let fx = flux_matrix(mesh, k);
    let dflux_int = fx.select_columns(interior.iter());
    let dflux_bnd = fx.select_columns(boundary.iter());

    let (lii, s_map) = if ni == 0 {
        (None, DMatrix::zeros(0, boundary.len()))
    } else {
        let aii = l.select_rows(interior.iter()).select_columns(interior.iter());
        let aib = l.select_rows(interior.iter()).select_columns(boundary.iter());
        let lu = aii.lu();
        let s = lu.solve(&aib).ok_or_else(|| Error::Singular {
            context: format!("interior operator block of element {k}"),
        })?;
        (Some(lu), -s)
    };
    let dtn = &dflux_bnd + &dflux_int * &s_map;
    Ok(LeafOperator { elem: k, lii, s_map, dflux_int, dflux_bnd, dtn })
}

impl LeafOperator {
    /// Interior particular solution (L^ii)^{-1} f for interior forcing f.
    pub fn particular(&self, f_int: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.lii {
            None => Ok(DVector::zeros(0)),
            Some(lu) => lu.solve(f_int).ok_or_else(|| Error::Singular {
                context: format!("interior solve on element {}", self.elem),
            }),
        }
    }

    /// Full interior values for boundary data h: particular + S h.
    pub fn interior_solution(&self, particular: &DVector<f64>, h: &DVector<f64>) -> DVector<f64> {
        particular + &self.s_map * h
    }

    /// Boundary flux contribution of the particular solution.
    pub fn particular_flux(&self, particular: &DVector<f64>) -> DVector<f64> {
        &self.dflux_int * particular
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface_geom::mesh::{icosphere, parse_off};
    use crate::surface_geom::{lift_mesh, SurfaceDef};
    use nalgebra::Vector3;

    fn one_triangle(n: usize) -> LiftedMesh {
        let m = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        lift_mesh(m, SurfaceDef::Identity, n).unwrap()
    }

    /// Manufactured polynomial u = x^3 y + y^2 with its flat-plane calculus.
    fn u_star(p: Vector3<f64>) -> f64 {
        p.x.powi(3) * p.y + p.y * p.y
    }
    fn grad_u_star(p: Vector3<f64>) -> Vector3<f64> {
        Vector3::new(3.0 * p.x * p.x * p.y, p.x.powi(3) + 2.0 * p.y, 0.0)
    }

    fn boundary_values(mesh: &LiftedMesh, k: usize, u: impl Fn(Vector3<f64>) -> f64) -> DVector<f64> {
        DVector::from_iterator(
            mesh.ref_elem.boundary.len(),
            mesh.ref_elem.boundary.iter().map(|&r| u(mesh.elements[k].nodes[r])),
        )
    }

    fn interior_forcing(mesh: &LiftedMesh, k: usize, f: impl Fn(Vector3<f64>) -> f64) -> DVector<f64> {
        DVector::from_iterator(
            mesh.ref_elem.interior.len(),
            mesh.ref_elem.interior.iter().map(|&r| f(mesh.elements[k].nodes[r])),
        )
    }

    fn check_dirichlet_solve(
        mesh: &LiftedMesh,
        coeffs: &PdeCoefficients,
        f: impl Fn(Vector3<f64>) -> f64,
        tol: f64,
    ) {
        let leaf = build_leaf(mesh, 0, coeffs).unwrap();
        let part = leaf.particular(&interior_forcing(mesh, 0, f)).unwrap();
        let h = boundary_values(mesh, 0, u_star);
        let u = leaf.interior_solution(&part, &h);
        for (t, &r) in mesh.ref_elem.interior.iter().enumerate() {
            let exact = u_star(mesh.elements[0].nodes[r]);
            assert!(
                (u[t] - exact).abs() < tol,
                "interior node {r}: got {}, want {exact}",
                u[t]
            );
        }
    }

    #[test]
    fn laplacian_dirichlet_solve_is_exact_for_polynomials() {
        let mesh = one_triangle(5);
        // f = Lap u* = 6 x y + 2.
        check_dirichlet_solve(
            &mesh,
            &PdeCoefficients::laplace_beltrami(),
            |p| 6.0 * p.x * p.y + 2.0,
            1e-10,
        );
    }

    #[test]
    fn helmholtz_and_drift_terms_enter_the_operator() {
        let mesh = one_triangle(6);
        // L = 2 Lap + 3: f = 2 (6xy + 2) + 3 u*.
        check_dirichlet_solve(
            &mesh,
            &PdeCoefficients::helmholtz(2.0, 3.0),
            |p| 2.0 * (6.0 * p.x * p.y + 2.0) + 3.0 * u_star(p),
            1e-9,
        );
        // L = Lap + b . grad with b = (1, -1, 0).
        let mut coeffs = PdeCoefficients::laplace_beltrami();
        coeffs.b[0] = Coefficient::Constant(1.0);
        coeffs.b[1] = Coefficient::Constant(-1.0);
        check_dirichlet_solve(
            &mesh,
            &coeffs,
            |p| {
                let g = grad_u_star(p);
                6.0 * p.x * p.y + 2.0 + g.x - g.y
            },
            1e-9,
        );
    }

    #[test]
    fn anisotropic_and_variable_coefficients() {
        let mesh = one_triangle(6);
        // a = [[2, 1/2], [1/2, 1]], c(x) = x + 2y:
        // f = 2 u_xx + 2*(1/2) u_xy + u_yy + c u*.
        let mut coeffs = PdeCoefficients::laplace_beltrami();
        coeffs.a[0] = Coefficient::Constant(2.0);
        coeffs.a[1] = Coefficient::Constant(0.5);
        coeffs.c = Coefficient::Field(mesh.sample(|p| p.x + 2.0 * p.y));
        check_dirichlet_solve(
            &mesh,
            &coeffs,
            |p| {
                let (uxx, uxy, uyy) = (6.0 * p.x * p.y, 3.0 * p.x * p.x, 2.0);
                2.0 * uxx + 1.0 * uxy + uyy + (p.x + 2.0 * p.y) * u_star(p)
            },
            1e-9,
        );
    }

    #[test]
    fn dtn_reproduces_the_polynomial_flux() {
        let mesh = one_triangle(7);
        let leaf = build_leaf(&mesh, 0, &PdeCoefficients::laplace_beltrami()).unwrap();
        let part = leaf.particular(&interior_forcing(&mesh, 0, |p| 6.0 * p.x * p.y + 2.0)).unwrap();
        let h = boundary_values(&mesh, 0, u_star);
        let flux = &leaf.dtn * &h + leaf.particular_flux(&part);

        let re = &mesh.ref_elem;
        let el = &mesh.elements[0];
        let n = re.n;
        for (pos, &r) in re.boundary.iter().enumerate() {
            // Expected: sum of outward binormal derivatives over the edges
            // meeting this node (one for edge nodes, two at corners).
            let mut expect = 0.0;
            for e in 0..3 {
                for t in 0..=n {
                    if re.edges[e][t] == r {
                        expect += el.edge_binormals[e][t].dot(&grad_u_star(el.nodes[r]));
                    }
                }
            }
            assert!(
                (flux[pos] - expect).abs() < 1e-8,
                "boundary pos {pos}: got {}, want {expect}",
                flux[pos]
            );
        }
    }

    #[test]
    fn curved_element_solves_a_spherical_harmonic() {
        // On any patch of the unit sphere, Lap_G Y_1^0 = -2 Y_1^0. Solving
        // L u = f with exact Dirichlet data must reproduce Y_1^0 to
        // spectral accuracy on a single icosphere element.
        let flat = icosphere(1, 1.0).unwrap();
        let mesh = lift_mesh(flat, SurfaceDef::sphere(1.0), 12).unwrap();
        let y10 = |p: Vector3<f64>| crate::sph::eval(1, 0, p.x, p.y, p.z);
        let leaf = build_leaf(&mesh, 3, &PdeCoefficients::laplace_beltrami()).unwrap();
        let f_int = DVector::from_iterator(
            mesh.ref_elem.interior.len(),
            mesh.ref_elem.interior.iter().map(|&r| -2.0 * y10(mesh.elements[3].nodes[r])),
        );
        let part = leaf.particular(&f_int).unwrap();
        let h = boundary_values(&mesh, 3, y10);
        let u = leaf.interior_solution(&part, &h);
        let mut worst: f64 = 0.0;
        for (t, &r) in mesh.ref_elem.interior.iter().enumerate() {
            worst = worst.max((u[t] - y10(mesh.elements[3].nodes[r])).abs());
        }
        assert!(worst < 1e-8, "worst interior error {worst}");
    }

    #[test]
    fn low_degree_leaves_have_no_interior() {
        for n in [1usize, 2] {
            let mesh = one_triangle(n);
            let leaf = build_leaf(&mesh, 0, &PdeCoefficients::laplace_beltrami()).unwrap();
            assert_eq!(leaf.s_map.nrows(), 0);
            assert_eq!(leaf.dtn.nrows(), 3 * n);
            let part = leaf.particular(&DVector::zeros(0)).unwrap();
            assert_eq!(part.len(), 0);
        }
    }
}
