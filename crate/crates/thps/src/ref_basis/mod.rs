//! Degree-n nodal spectral basis on the reference simplex
//! T = { (xi, eta) : xi >= 0, eta >= 0, xi + eta <= 1 }.
//!
//! The modal basis is the orthonormal Dubiner family
//!
//! ```text
//! Phi_{i,j}(xi, eta) = K_ij (1-eta)^i P_i(a) J_j^{(2i+1,0)}(2 eta - 1),
//! a = 2 xi / (1-eta) - 1,    K_ij = sqrt(2 (2i+1) (i+j+1)),
//! ```
//!
//! with P_i Legendre and J the classical Jacobi polynomials; the K_ij
//! normalization makes the Gram matrix on T the identity. The collapsed
//! factor (1-eta)^i P_i(a) is evaluated by expanding P_i in monomials of its
//! argument and distributing (1-eta)^i, i.e. as the bivariate polynomial
//! sum_k p_{ik} (2 xi + eta - 1)^k (1-eta)^{i-k}, so values and gradients at
//! the collapsed vertex (0, 1) are plain polynomial arithmetic with no 0/0.
//!
//! Nodal degrees of freedom sit at the recursive Chebyshev-Lobatto node set
//! (see [`nodes`]); the generalized Vandermonde matrix ties the two views
//! together and yields differentiation matrices D_xi = V_xi V^{-1},
//! D_eta = V_eta V^{-1}, formed by factorized solves rather than explicit
//! inversion.

pub mod jacobi;
pub mod nodes;

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, RowDVector};

use jacobi::{jacobi as jac, jacobi_deriv, legendre_monomial_coeffs};

/// Maximum supported polynomial degree.
pub const MAX_DEGREE: usize = 20;

/// Tolerance deciding whether a reference node lies on an edge.
const EDGE_TOL: f64 = 1e-12;

/// Bijection between linear mode numbers and Dubiner index pairs (i, j),
/// graded lexicographic: i + j ascending, then i ascending.
#[derive(Debug, Clone)]
pub struct DegreeIndexMap {
    pairs: Vec<(usize, usize)>,
}

impl DegreeIndexMap {
    pub fn new(n: usize) -> Self {
        let mut pairs = Vec::with_capacity((n + 1) * (n + 2) / 2);
        for degree in 0..=n {
            for i in 0..=degree {
                pairs.push((i, degree - i));
            }
        }
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, m: usize) -> (usize, usize) {
        self.pairs[m]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        (i + j) * (i + j + 1) / 2 + i
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

/// Evaluator for the orthonormal Dubiner modes of one degree.
#[derive(Debug, Clone)]
pub struct DubinerBasis {
    n: usize,
    index_map: DegreeIndexMap,
    /// Monomial coefficients of the Legendre polynomials P_0..P_n.
    legendre: Vec<Vec<f64>>,
}

impl DubinerBasis {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            index_map: DegreeIndexMap::new(n),
            legendre: legendre_monomial_coeffs(n),
        }
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.index_map.len()
    }

    pub fn index_map(&self) -> &DegreeIndexMap {
        &self.index_map
    }

    /// Phi_{i,j}(xi, eta).
    pub fn eval(&self, i: usize, j: usize, xi: f64, eta: f64) -> f64 {
        let (g, _, _) = self.collapsed_factor(i, xi, eta);
        self.norm(i, j) * g * jac(j, 2.0 * i as f64 + 1.0, 0.0, 2.0 * eta - 1.0)
    }

    /// (d/dxi, d/deta) of Phi_{i,j} at (xi, eta).
    pub fn grad(&self, i: usize, j: usize, xi: f64, eta: f64) -> (f64, f64) {
        let (g, g_xi, g_eta) = self.collapsed_factor(i, xi, eta);
        let alpha = 2.0 * i as f64 + 1.0;
        let b = 2.0 * eta - 1.0;
        let jb = jac(j, alpha, 0.0, b);
        let jb_d = jacobi_deriv(j, alpha, 0.0, b);
        let k = self.norm(i, j);
        (k * g_xi * jb, k * (g_eta * jb + 2.0 * g * jb_d))
    }

    fn norm(&self, i: usize, j: usize) -> f64 {
        (2.0 * (2.0 * i as f64 + 1.0) * (i + j + 1) as f64).sqrt()
    }

    /// (1-eta)^i P_i(2 xi/(1-eta) - 1) and its two partials, expanded as
    /// sum_k p_ik A^k B^(i-k) with A = 2 xi + eta - 1, B = 1 - eta.
    fn collapsed_factor(&self, i: usize, xi: f64, eta: f64) -> (f64, f64, f64) {
        let a = 2.0 * xi + eta - 1.0;
        let b = 1.0 - eta;
        let coeffs = &self.legendre[i];
        let mut value = 0.0;
        let mut d_xi = 0.0;
        let mut d_eta = 0.0;
        // a^k and b^(i-k) tracked incrementally.
        let mut a_pow = vec![1.0; i + 1];
        for k in 1..=i {
            a_pow[k] = a_pow[k - 1] * a;
        }
        let mut b_pow = vec![1.0; i + 1];
        for k in 1..=i {
            b_pow[k] = b_pow[k - 1] * b;
        }
        for (k, &c) in coeffs.iter().enumerate() {
            let bk = i - k;
            value += c * a_pow[k] * b_pow[bk];
            if k > 0 {
                let t = c * k as f64 * a_pow[k - 1] * b_pow[bk];
                d_xi += 2.0 * t;
                d_eta += t;
            }
            if bk > 0 {
                d_eta -= c * bk as f64 * a_pow[k] * b_pow[bk - 1];
            }
        }
        (value, d_xi, d_eta)
    }
}

/// Reference element: nodes, modal/nodal transforms, differentiation
/// matrices and the interior/boundary partition.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub n: usize,
    /// (n+1)(n+2)/2
    pub dim: usize,
    pub basis: DubinerBasis,
    /// Interpolation nodes (xi, eta), graded-lex lattice order.
    pub nodes: Vec<[f64; 2]>,
    /// V[r][m] = Phi_m(node r).
    pub vandermonde: DMatrix<f64>,
    /// D_xi = V_xi V^{-1}; exact on polynomials up to degree n.
    pub d_xi: DMatrix<f64>,
    pub d_eta: DMatrix<f64>,
    /// Node indices strictly inside the simplex, (n-1)(n-2)/2 of them.
    pub interior: Vec<usize>,
    /// Boundary nodes walked cyclically v0 -> v1 -> v2 -> v0; 3n entries,
    /// each vertex listed once (at the start of its edge run).
    pub boundary: Vec<usize>,
    /// Per-edge node lists including both endpoint vertices (n+1 each):
    /// edge 0 = v0->v1 (eta = 0), edge 1 = v1->v2 (hypotenuse),
    /// edge 2 = v2->v0 (xi = 0).
    pub edges: [Vec<usize>; 3],
    /// Node indices of the three vertices.
    pub vertices: [usize; 3],
    /// Modal-solve factorization of V (for interpolation).
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Row functional q with q . nodal = integral of the interpolant over T.
    quad_row: RowDVector<f64>,
}

/// Build the degree-n reference element.
pub fn build_reference_element(n: usize) -> Result<ReferenceElement> {
    if n < 1 || n > MAX_DEGREE {
        return Err(Error::InvalidDegree(n));
    }
    let basis = DubinerBasis::new(n);
    let dim = basis.dim();
    let nodes = nodes::triangle_nodes(n);

    let mut v = DMatrix::zeros(dim, dim);
    let mut v_xi = DMatrix::zeros(dim, dim);
    let mut v_eta = DMatrix::zeros(dim, dim);
    for (r, &[xi, eta]) in nodes.iter().enumerate() {
        for m in 0..dim {
            let (i, j) = basis.index_map().pair(m);
            v[(r, m)] = basis.eval(i, j, xi, eta);
            let (gx, ge) = basis.grad(i, j, xi, eta);
            v_xi[(r, m)] = gx;
            v_eta[(r, m)] = ge;
        }
    }

    // D = V_d V^{-1} via  V^T D^T = V_d^T.
    let lu_t = v.transpose().lu();
    let d_xi = lu_t
        .solve(&v_xi.transpose())
        .ok_or_else(|| Error::Singular { context: "inverting the Vandermonde matrix".into() })?
        .transpose();
    let d_eta = lu_t
        .solve(&v_eta.transpose())
        .ok_or_else(|| Error::Singular { context: "inverting the Vandermonde matrix".into() })?
        .transpose();

    // Integral functional: only Phi_{0,0} = sqrt(2) has nonzero mean, so
    // int p = (V^{-1} nodal)_0 / sqrt(2).
    let mut e0 = DVector::zeros(dim);
    e0[0] = 1.0;
    let z = lu_t
        .solve(&e0)
        .ok_or_else(|| Error::Singular { context: "inverting the Vandermonde matrix".into() })?;
    let quad_row = RowDVector::from_iterator(dim, z.iter().map(|&x| x / 2f64.sqrt()));

    let lu = v.clone().lu();

    // Geometric partition: a node lies on an edge iff the corresponding
    // barycentric coordinate is below EDGE_TOL.
    let on_e0 = |r: usize| nodes[r][1] < EDGE_TOL;
    let on_e1 = |r: usize| (1.0 - nodes[r][0] - nodes[r][1]) < EDGE_TOL;
    let on_e2 = |r: usize| nodes[r][0] < EDGE_TOL;

    let mut edge0: Vec<usize> = (0..dim).filter(|&r| on_e0(r)).collect();
    edge0.sort_by(|&a, &b| nodes[a][0].partial_cmp(&nodes[b][0]).unwrap());
    let mut edge1: Vec<usize> = (0..dim).filter(|&r| on_e1(r)).collect();
    edge1.sort_by(|&a, &b| nodes[a][1].partial_cmp(&nodes[b][1]).unwrap());
    let mut edge2: Vec<usize> = (0..dim).filter(|&r| on_e2(r)).collect();
    edge2.sort_by(|&a, &b| nodes[b][1].partial_cmp(&nodes[a][1]).unwrap());

    if edge0.len() != n + 1 || edge1.len() != n + 1 || edge2.len() != n + 1 {
        return Err(Error::Numerical(format!(
            "edge node detection found {}/{}/{} nodes (expected {})",
            edge0.len(),
            edge1.len(),
            edge2.len(),
            n + 1
        )));
    }

    let vertices = [edge0[0], edge1[0], edge2[0]];
    let mut boundary = Vec::with_capacity(3 * n);
    boundary.extend(&edge0[..n]);
    boundary.extend(&edge1[..n]);
    boundary.extend(&edge2[..n]);

    let on_boundary: std::collections::HashSet<usize> = boundary.iter().copied().collect();
    let interior: Vec<usize> = (0..dim).filter(|r| !on_boundary.contains(r)).collect();
    debug_assert_eq!(interior.len(), if n >= 2 { (n - 1) * (n - 2) / 2 } else { 0 });

    Ok(ReferenceElement {
        n,
        dim,
        basis,
        nodes,
        vandermonde: v,
        d_xi,
        d_eta,
        interior,
        boundary,
        edges: [edge0, edge1, edge2],
        vertices,
        lu,
        quad_row,
    })
}

impl ReferenceElement {
    /// Modal coefficients of the interpolant of `nodal`.
    pub fn modal(&self, nodal: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu
            .solve(nodal)
            .ok_or_else(|| Error::Singular { context: "nodal-to-modal transform".into() })
    }

    /// Evaluate the degree-n interpolant of `nodal` at reference points.
    pub fn interpolate(&self, nodal: &DVector<f64>, points: &[[f64; 2]]) -> Result<Vec<f64>> {
        let c = self.modal(nodal)?;
        Ok(points
            .iter()
            .map(|&[xi, eta]| {
                (0..self.dim)
                    .map(|m| {
                        let (i, j) = self.basis.index_map().pair(m);
                        c[m] * self.basis.eval(i, j, xi, eta)
                    })
                    .sum()
            })
            .collect())
    }

    /// Integral over the reference simplex of the interpolant of `nodal`.
    pub fn reference_integral(&self, nodal: &DVector<f64>) -> f64 {
        (&self.quad_row * nodal)[(0, 0)]
    }

    /// Integral functional as a row vector (dot with nodal values).
    pub fn quadrature_row(&self) -> &RowDVector<f64> {
        &self.quad_row
    }
}
