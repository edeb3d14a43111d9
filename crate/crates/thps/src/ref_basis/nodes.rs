//! Interpolation nodes on the reference simplex.
//!
//! The node set is the recursive, parameter-free simplex construction seeded
//! with a 1D Chebyshev-Lobatto family. With x_{n,0..n} the 1D nodes on
//! [0, 1], the barycentric coordinates of the node with multi-index alpha
//! (|alpha| = n) are defined by
//!
//! ```text
//! b_{1,n}(alpha)  = (x_{n,alpha_0}, x_{n,alpha_1})
//! b_{d,n}(alpha)  = sum_i w_i * embed_i(b_{d-1, n-alpha_i}(alpha \ i)) / sum_i w_i,
//! w_i             = x_{n, n - alpha_i}
//! ```
//!
//! where `embed_i` inserts a zero at slot i. The trace of the construction on
//! every edge is exactly the 1D family; interior nodes are convex
//! combinations of face nodes, so all nodes stay in the closed simplex.

/// Chebyshev-Lobatto points of degree n on [0, 1].
///
/// Built from sin^2 on the first half and mirrored, so x_i + x_{n-i} = 1
/// holds exactly in floating point. The degenerate degree-0 family is the
/// midpoint.
pub fn lobatto_family(n: usize) -> Vec<f64> {
    if n == 0 {
        return vec![0.5];
    }
    let mut x = vec![0.0; n + 1];
    for i in 0..=n / 2 {
        if 2 * i == n {
            x[i] = 0.5;
        } else {
            let s = (std::f64::consts::PI * i as f64 / (2.0 * n as f64)).sin();
            x[i] = s * s;
            x[n - i] = 1.0 - s * s;
        }
    }
    x
}

/// Barycentric coordinates (length d+1) for multi-index `alpha`, |alpha| = n.
fn recursive_node(d: usize, n: usize, alpha: &[usize], families: &[Vec<f64>]) -> Vec<f64> {
    debug_assert_eq!(alpha.len(), d + 1);
    debug_assert_eq!(alpha.iter().sum::<usize>(), n);
    let xn = &families[n];
    if d == 1 {
        return vec![xn[alpha[0]], xn[alpha[1]]];
    }
    let mut b = vec![0.0; d + 1];
    let mut total = 0.0;
    let mut sub_alpha = Vec::with_capacity(d);
    for i in 0..=d {
        let w = xn[n - alpha[i]];
        if w == 0.0 {
            continue;
        }
        sub_alpha.clear();
        sub_alpha.extend(alpha.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &a)| a));
        let sub = recursive_node(d - 1, n - alpha[i], &sub_alpha, families);
        let mut slot = 0;
        for k in 0..=d {
            if k != i {
                b[k] += w * sub[slot];
                slot += 1;
            }
        }
        total += w;
    }
    for v in b.iter_mut() {
        *v /= total;
    }
    b
}

/// Reference-simplex nodes (xi, eta) for degree n, in graded lexicographic
/// order of the lattice index (p, q): p + q ascending, then p ascending.
/// The lattice index (p, q) corresponds to barycentric multi-index
/// (n - p - q, p, q), so node 0 is the vertex (0, 0).
pub fn triangle_nodes(n: usize) -> Vec<[f64; 2]> {
    let families: Vec<Vec<f64>> = (0..=n).map(lobatto_family).collect();
    let mut nodes = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for degree in 0..=n {
        for p in 0..=degree {
            let q = degree - p;
            let alpha = [n - p - q, p, q];
            let b = recursive_node(2, n, &alpha, &families);
            let norm: f64 = b.iter().sum();
            nodes.push([b[1] / norm, b[2] / norm]);
        }
    }
    nodes
}
