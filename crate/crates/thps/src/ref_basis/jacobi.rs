//! Jacobi polynomials and Gauss-Legendre quadrature.
//!
//! `jacobi(m, alpha, beta, x)` evaluates the classical Jacobi polynomial
//! J_m^{(alpha,beta)} normalized so that J_m(1) = binom(m+alpha, m); with
//! alpha = beta = 0 this is the Legendre polynomial P_m. Derivatives use
//! the identity d/dx J_m^{(a,b)} = (m+a+b+1)/2 * J_{m-1}^{(a+1,b+1)}.

/// Evaluate J_m^{(alpha,beta)}(x) by the three-term recurrence.
pub fn jacobi(m: usize, alpha: f64, beta: f64, x: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let p1 = 0.5 * (alpha - beta) + 0.5 * (alpha + beta + 2.0) * x;
    if m == 1 {
        return p1;
    }
    let mut prev = 1.0;
    let mut cur = p1;
    for k in 2..=m {
        let k = k as f64;
        let ab = alpha + beta;
        let c1 = 2.0 * k * (k + ab) * (2.0 * k + ab - 2.0);
        let c2 = (2.0 * k + ab - 1.0) * (alpha * alpha - beta * beta);
        let c3 = (2.0 * k + ab - 1.0) * (2.0 * k + ab) * (2.0 * k + ab - 2.0);
        let c4 = 2.0 * (k + alpha - 1.0) * (k + beta - 1.0) * (2.0 * k + ab);
        let next = ((c2 + c3 * x) * cur - c4 * prev) / c1;
        prev = cur;
        cur = next;
    }
    cur
}

/// d/dx J_m^{(alpha,beta)}(x).
pub fn jacobi_deriv(m: usize, alpha: f64, beta: f64, x: f64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    0.5 * (m as f64 + alpha + beta + 1.0) * jacobi(m - 1, alpha + 1.0, beta + 1.0, x)
}

/// Monomial coefficients of the Legendre polynomials P_0..P_max.
///
/// Row i holds c such that P_i(x) = sum_k c[k] x^k. Used to evaluate the
/// collapsed-coordinate factor (1-eta)^i P_i(a) as a plain bivariate
/// polynomial, which stays finite at the collapsed vertex.
pub fn legendre_monomial_coeffs(max: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(max + 1);
    rows.push(vec![1.0]);
    if max == 0 {
        return rows;
    }
    rows.push(vec![0.0, 1.0]);
    for i in 1..max {
        let fi = i as f64;
        let mut next = vec![0.0; i + 2];
        // (i+1) P_{i+1} = (2i+1) x P_i - i P_{i-1}
        for (k, &c) in rows[i].iter().enumerate() {
            next[k + 1] += (2.0 * fi + 1.0) * c;
        }
        for (k, &c) in rows[i - 1].iter().enumerate() {
            next[k] -= fi * c;
        }
        for c in next.iter_mut() {
            *c /= fi + 1.0;
        }
        rows.push(next);
    }
    rows
}

/// Gauss-Legendre nodes and weights on [-1, 1], exact for degree 2n-1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        // Chebyshev initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (4.0 * k as f64 + 3.0) / (4.0 * n as f64 + 2.0)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_deriv(n, x);
        nodes[k] = x;
        weights[k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let next = ((2.0 * k - 1.0) * x * cur - (k - 1.0) * prev) / k;
        prev = cur;
        cur = next;
    }
    let dp = n as f64 * (x * cur - prev) / (x * x - 1.0);
    (cur, dp)
}
