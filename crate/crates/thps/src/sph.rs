//! Real spherical harmonics up to degree 20.
//!
//! Y_l^m in the real convention without the Condon-Shortley phase:
//! Y_l^0 = Pbar_l^0(cos t), Y_l^m = sqrt(2) Pbar_l^m(cos t) cos(m p) for
//! m > 0 and sqrt(2) Pbar_l^|m|(cos t) sin(|m| p) for m < 0, where Pbar is
//! the fully normalized associated Legendre function (including the
//! 1/sqrt(4 pi)). Evaluated with the standard stable three-term recurrences
//! on the normalized functions; on the unit sphere -Lap Y_l^m = l(l+1) Y_l^m.

pub const MAX_L: usize = 20;

/// Fully normalized associated Legendre Pbar_l^m(x) for 0 <= m <= l.
fn normalized_legendre(l: usize, m: usize, x: f64) -> f64 {
    debug_assert!(m <= l);
    let s = (1.0 - x * x).max(0.0).sqrt();
    // Pbar_m^m by the diagonal recurrence, starting from 1/sqrt(4 pi).
    let mut pmm = 0.5 / std::f64::consts::PI.sqrt();
    for k in 1..=m {
        pmm *= ((2.0 * k as f64 + 1.0) / (2.0 * k as f64)).sqrt() * s;
    }
    if l == m {
        return pmm;
    }
    let mut p_prev = pmm;
    let mut p_cur = (2.0 * m as f64 + 3.0).sqrt() * x * pmm;
    if l == m + 1 {
        return p_cur;
    }
    for ll in (m + 2)..=l {
        let lf = ll as f64;
        let mf = m as f64;
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
            .sqrt();
        let p_next = a * (x * p_cur - b * p_prev);
        p_prev = p_cur;
        p_cur = p_next;
    }
    p_cur
}

/// Real Y_l^m at a point on (or off) the unit sphere; the input is first
/// normalized, so fields sampled at radius-r points give Y_l^m of the
/// direction.
pub fn eval(l: usize, m: i32, x: f64, y: f64, z: f64) -> f64 {
    assert!(l <= MAX_L, "spherical harmonic degree {l} exceeds {MAX_L}");
    assert!(m.unsigned_abs() as usize <= l);
    let r = (x * x + y * y + z * z).sqrt();
    assert!(r > 0.0, "spherical harmonic evaluated at the origin");
    let ct = (z / r).clamp(-1.0, 1.0);
    let phi = y.atan2(x);
    let ma = m.unsigned_abs() as usize;
    let p = normalized_legendre(l, ma, ct);
    if m == 0 {
        p
    } else if m > 0 {
        2f64.sqrt() * p * (ma as f64 * phi).cos()
    } else {
        2f64.sqrt() * p * (ma as f64 * phi).sin()
    }
}

/// Eigenvalue of -Lap on the unit sphere for degree l: l(l+1).
pub fn laplace_eigenvalue(l: usize) -> f64 {
    (l * (l + 1)) as f64
}
