//! Release gate: every advertised guarantee of the library, checked in one
//! sequential pass that prints a PASS/FAIL line per criterion (run with
//! `--nocapture` to watch). Each check pins its tolerances in the source;
//! the final assertion fails if any line failed, so the whole table is
//! printed before the verdict.

mod common;

use common::{loglog_slope, monolithic_solve, mesh2, mesh4, mesh8, octahedron, rel_linf};
use nalgebra::{DMatrix, DVector, Vector3};
use std::sync::Arc;
use std::time::Instant;
use thps::field::NodalField;
use thps::leaf_ops::{assemble_operator, PdeCoefficients};
use thps::merge_tree::{build_merge_plan, ClosedRootPolicy, ThpsSolver};
use thps::ref_basis::jacobi::gauss_legendre;
use thps::ref_basis::build_reference_element;
use thps::sph;
use thps::surface_geom::mesh::{hemisphere, icosphere};
use thps::surface_geom::{lift_mesh, FlatMesh, LiftedMesh, SurfaceDef};
use thps::timestep::{
    imex_bdf, presets, random_initial, RdSystem, SpectralDiffusionFactory, Stepper,
    ThpsDiffusionFactory, Turing2,
};

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn check(&mut self, idx: usize, name: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {idx:02} [{verdict}] {name}: {detail}");
        if !pass {
            self.failures.push(format!("criterion {idx:02} ({name}): {detail}"));
        }
    }
}

fn lift(flat: FlatMesh, surface: SurfaceDef, n: usize) -> LiftedMesh {
    lift_mesh(flat, surface, n).unwrap()
}

fn y32(p: Vector3<f64>) -> f64 {
    sph::eval(3, 2, p.x, p.y, p.z)
}

/// Nodal differentiation exact on monomials; Dubiner basis orthonormal.
fn reference_element_exactness() -> (bool, String) {
    let mut worst_low = 0.0f64;
    let mut worst_high = 0.0f64;
    for n in [2usize, 4, 6, 8, 10, 12, 14, 16] {
        let re = build_reference_element(n).unwrap();
        for p in 0..=n {
            for q in 0..=(n - p) {
                let u = DVector::from_iterator(
                    re.dim,
                    re.nodes.iter().map(|&[xi, eta]| xi.powi(p as i32) * eta.powi(q as i32)),
                );
                let du_xi = &re.d_xi * &u;
                let du_eta = &re.d_eta * &u;
                let mut resid = 0.0f64;
                for (r, &[xi, eta]) in re.nodes.iter().enumerate() {
                    let exact_xi = if p == 0 {
                        0.0
                    } else {
                        p as f64 * xi.powi(p as i32 - 1) * eta.powi(q as i32)
                    };
                    let exact_eta = if q == 0 {
                        0.0
                    } else {
                        q as f64 * xi.powi(p as i32) * eta.powi(q as i32 - 1)
                    };
                    resid = resid.max((du_xi[r] - exact_xi).abs());
                    resid = resid.max((du_eta[r] - exact_eta).abs());
                }
                if n <= 10 {
                    worst_low = worst_low.max(resid);
                } else {
                    worst_high = worst_high.max(resid);
                }
            }
        }
    }

    // Gram matrix of the basis under exact quadrature (collapsed-coordinate
    // Gauss rule, exact for polynomial degree well past 2n).
    let mut worst_gram = 0.0f64;
    for n in [4usize, 6, 8] {
        let re = build_reference_element(n).unwrap();
        let (pts, wts) = gauss_legendre(n + 4);
        let mut gram = DMatrix::<f64>::zeros(re.dim, re.dim);
        for (ia, &a) in pts.iter().enumerate() {
            for (ib, &b) in pts.iter().enumerate() {
                let xi = (1.0 + a) * (1.0 - b) / 4.0;
                let eta = (1.0 + b) / 2.0;
                let w = wts[ia] * wts[ib] * (1.0 - b) / 8.0;
                let phi: Vec<f64> = re
                    .basis
                    .index_map()
                    .pairs()
                    .iter()
                    .map(|&(i, j)| re.basis.eval(i, j, xi, eta))
                    .collect();
                for r in 0..re.dim {
                    for c in 0..=r {
                        gram[(r, c)] += w * phi[r] * phi[c];
                    }
                }
            }
        }
        for r in 0..re.dim {
            for c in 0..=r {
                let expect = if r == c { 1.0 } else { 0.0 };
                worst_gram = worst_gram.max((gram[(r, c)] - expect).abs());
            }
        }
    }

    let pass = worst_low < 1e-11 && worst_high < 1e-8 && worst_gram < 1e-12;
    (
        pass,
        format!(
            "monomial derivative residual {worst_low:.2e} for n<=10 (tol 1e-11), \
             {worst_high:.2e} for n<=16 (tol 1e-8); Gram defect {worst_gram:.2e} \
             for n<=8 (tol 1e-12)"
        ),
    )
}

/// Collocated Laplace-Beltrami reproduces a sphere eigenfunction with
/// residual dropping at least 10x per degree step.
fn eigenfunction_residual() -> (bool, String) {
    let mut resids = Vec::new();
    for n in [4usize, 6, 8, 10] {
        let mesh = lift(icosphere(2, 1.0).unwrap(), SurfaceDef::sphere(1.0), n);
        let y = mesh.sample(&y32);
        let coeffs = PdeCoefficients::laplace_beltrami();
        let mut worst = 0.0f64;
        for k in 0..mesh.num_elements() {
            let l_k = assemble_operator(&mesh, k, &coeffs);
            let y_k = DVector::from_column_slice(mesh_element(&y, k));
            let r = &l_k * &y_k + 12.0 * &y_k;
            worst = worst.max(r.amax());
        }
        resids.push(worst);
    }
    let pass = resids.windows(2).all(|w| w[0] / w[1] >= 10.0);
    (
        pass,
        format!(
            "max |L y + 12 y| over n = 4,6,8,10: {:.2e}, {:.2e}, {:.2e}, {:.2e} (each step >= 10x)",
            resids[0], resids[1], resids[2], resids[3]
        ),
    )
}

fn mesh_element(field: &NodalField, k: usize) -> &[f64] {
    field.element(k)
}

/// The hierarchical solve agrees with a monolithic dense collocation solve
/// on every small mesh, open and closed.
fn oracle_equivalence() -> (bool, String) {
    let f = |p: Vector3<f64>| (p.x + 0.5 * p.y).sin() + p.z;
    let g = |p: Vector3<f64>| p.x * p.y + 0.25 * p.z;
    let mut worst = 0.0f64;
    let mut cases = 0usize;

    // Open meshes: Dirichlet problems, flat and curved.
    let open: Vec<(FlatMesh, SurfaceDef, usize)> = vec![
        (mesh2(), SurfaceDef::Identity, 5),
        (mesh4(), SurfaceDef::Identity, 6),
        (mesh8(), SurfaceDef::Identity, 4),
        (hemisphere(0).unwrap(), SurfaceDef::sphere(1.0), 6),
    ];
    for (flat, surface, n) in open {
        let mesh = lift(flat, surface, n);
        let coeffs = PdeCoefficients::laplace_beltrami();
        let forcing = mesh.sample(&f);
        let oracle = monolithic_solve(&mesh, &coeffs, &forcing, &g);
        let plan = build_merge_plan(&mesh.flat);
        let mut solver =
            ThpsSolver::factorize(&mesh, &coeffs, &plan, ClosedRootPolicy::Regular).unwrap();
        solver.set_forcing_field(&mesh, &forcing).unwrap();
        let u = solver.solve_dirichlet(&mesh, &g).unwrap();
        worst = worst.max(rel_linf(&u, &oracle));
        cases += 1;
    }

    // Closed mesh: Helmholtz with a mass term keeps both systems regular.
    let mesh = lift(octahedron(), SurfaceDef::sphere(1.0), 5);
    let coeffs = PdeCoefficients::helmholtz(1.0, 2.0);
    let forcing = mesh.sample(&f);
    let oracle = monolithic_solve(&mesh, &coeffs, &forcing, &g);
    let plan = build_merge_plan(&mesh.flat);
    let mut solver =
        ThpsSolver::factorize(&mesh, &coeffs, &plan, ClosedRootPolicy::Regular).unwrap();
    solver.set_forcing_field(&mesh, &forcing).unwrap();
    let u = solver.solve_closed(&mesh).unwrap();
    worst = worst.max(rel_linf(&u, &oracle));
    cases += 1;

    (worst < 1e-8, format!("{cases} meshes, worst relative deviation {worst:.2e} (tol 1e-8)"))
}

/// Dirichlet convergence on an open curved mesh at the design rate.
fn hemisphere_convergence() -> (bool, String) {
    // Refinements 2..4: refinement 1 is preasymptotic for this mode and its
    // inflated first error steepens the fitted slope past the design rate.
    let n = 5;
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for refine in [2usize, 3, 4] {
        let mesh = lift(hemisphere(refine).unwrap(), SurfaceDef::sphere(1.0), n);
        let forcing = mesh.sample(|p| -12.0 * y32(p));
        let exact = mesh.sample(&y32);
        let plan = build_merge_plan(&mesh.flat);
        let coeffs = PdeCoefficients::laplace_beltrami();
        let mut solver =
            ThpsSolver::factorize(&mesh, &coeffs, &plan, ClosedRootPolicy::Regular).unwrap();
        solver.set_forcing_field(&mesh, &forcing).unwrap();
        let u = solver.solve_dirichlet(&mesh, &y32).unwrap();
        hs.push(mesh.h_max);
        errs.push(rel_linf(&u, &exact));
    }
    let slope = loglog_slope(&hs, &errs);
    let pass = (3.0..=5.0).contains(&slope);
    (
        pass,
        format!(
            "errors {:.2e}, {:.2e}, {:.2e}; fitted slope {slope:.2} (accept [3, 5])",
            errs[0], errs[1], errs[2]
        ),
    )
}

/// High-degree convergence on a closed sphere with mean-zero regularization.
fn closed_sphere_convergence() -> (bool, String) {
    let n = 9;
    let exact_fn = |p: Vector3<f64>| sph::eval(20, 10, p.x, p.y, p.z);
    let lambda = 420.0;
    // A degree-20 harmonic is marginal on icosphere(2) (error 9e-3), which
    // overstates the decay; refinements 3..4 sit in the asymptotic range.
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for refine in [3usize, 4] {
        let mut mesh = lift(icosphere(refine, 1.0).unwrap(), SurfaceDef::sphere(1.0), n);
        let forcing = mesh.sample(|p| -lambda * exact_fn(p));
        let exact = mesh.sample(&exact_fn);
        let plan = build_merge_plan(&mesh.flat);
        let coeffs = PdeCoefficients::laplace_beltrami();
        let mut solver =
            ThpsSolver::factorize(&mesh, &coeffs, &plan, ClosedRootPolicy::MeanZero).unwrap();
        mesh.release_derivative_matrices();
        solver.set_forcing_field(&mesh, &forcing).unwrap();
        let u = solver.solve_closed(&mesh).unwrap();
        hs.push(mesh.h_max);
        errs.push(rel_linf(&u, &exact));
    }
    let slope = loglog_slope(&hs, &errs);
    let pass = (6.5..=9.5).contains(&slope);
    (
        pass,
        format!("errors {:.2e}, {:.2e}; fitted slope {slope:.2} (accept [6.5, 9.5])", errs[0], errs[1]),
    )
}

fn diffusion_system() -> RdSystem {
    RdSystem {
        name: "diffusion".into(),
        diffusion: vec![1.0],
        reaction: Arc::new(|_, f| f[0] = 0.0),
    }
}

/// Heat flow of a sphere eigenmode: spatial error monotone in the degree at
/// a fixed small time step, and fourth-order decay of the temporal error.
fn diffusion_benchmark() -> (bool, String) {
    let y10 = |p: Vector3<f64>| sph::eval(1, 0, p.x, p.y, p.z);
    let flat = icosphere(1, 1.0).unwrap();

    // Fixed dt deep in the spatial regime: error is the discretization floor
    // and must drop monotonically with the polynomial degree.
    let mut floors = Vec::new();
    for n in [4usize, 6, 8, 10] {
        let mesh = lift(flat.clone(), SurfaceDef::sphere(1.0), n);
        let u0 = mesh.sample(&y10);
        let factory = ThpsDiffusionFactory::new(&mesh).unwrap();
        let mut stepper = Stepper::new(factory, diffusion_system(), 4, 1e-3, vec![u0]).unwrap();
        stepper.advance(1000).unwrap();
        let exact = mesh.sample(|p| y10(p) * (-2.0f64).exp());
        floors.push(rel_linf(&stepper.current()[0], &exact));
    }
    let monotone = floors.windows(2).all(|w| w[1] < w[0]);

    // Halving dt in the temporal regime: degree 12 pushes the spatial floor
    // far below the BDF4 error at dt = 0.1 and 0.05; histories are seeded
    // from the exact solution so the startup ramp cannot cap the order.
    let mesh = lift(flat, SurfaceDef::sphere(1.0), 12);
    let exact_at = |t: f64, mesh: &LiftedMesh| mesh.sample(|p| y10(p) * (-2.0 * t).exp());
    let mut temporal = Vec::new();
    for dt in [0.1f64, 0.05] {
        let states: Vec<Vec<NodalField>> =
            (0..4).rev().map(|k| vec![exact_at(-(k as f64) * dt, &mesh)]).collect();
        let factory = ThpsDiffusionFactory::new(&mesh).unwrap();
        let mut stepper =
            Stepper::with_seeded_history(factory, diffusion_system(), 4, dt, states, 0.0).unwrap();
        stepper.advance((1.0 / dt).round() as usize).unwrap();
        temporal.push(rel_linf(&stepper.current()[0], &exact_at(1.0, &mesh)));
    }
    let ratio = temporal[0] / temporal[1];
    let ratio_ok = (11.2..=20.8).contains(&ratio);

    (
        monotone && ratio_ok,
        format!(
            "spatial floors over n = 4,6,8,10: {:.2e}, {:.2e}, {:.2e}, {:.2e} (monotone: {monotone}); \
             dt 0.1 -> 0.05 error ratio {ratio:.1} (accept [11.2, 20.8])",
            floors[0], floors[1], floors[2], floors[3]
        ),
    )
}

/// Observed temporal order of each scheme on the eigenmode benchmark with a
/// linear explicit reaction; the eigenmode reduction makes the spatial error
/// exactly zero, so the measured error is purely temporal.
fn imex_order_verification() -> (bool, String) {
    let rate_implicit = 2.0;
    let rate_explicit = -6.0;
    let total = rate_implicit - rate_explicit; // u' = -8 u
    let system = RdSystem {
        name: "linear".into(),
        diffusion: vec![1.0],
        reaction: Arc::new(move |u, f| f[0] = rate_explicit * u[0]),
    };
    let dts = [4e-3f64, 2e-3, 1e-3];
    let mut slopes = Vec::new();
    for order in 1..=4usize {
        let mut errs = Vec::new();
        for &dt in &dts {
            let states: Vec<Vec<NodalField>> = (0..order)
                .rev()
                .map(|k| vec![NodalField::from_values(vec![(total * k as f64 * dt).exp()], 1)])
                .collect();
            let factory = SpectralDiffusionFactory { eigenvalue: rate_implicit };
            let mut stepper =
                Stepper::with_seeded_history(factory, system.clone(), order, dt, states, 0.0)
                    .unwrap();
            stepper.advance((1.0 / dt).round() as usize).unwrap();
            let exact = (-total).exp();
            errs.push((stepper.current()[0].as_slice()[0] - exact).abs() / exact);
        }
        slopes.push(loglog_slope(&dts, &errs));
    }
    let pass = slopes.iter().enumerate().all(|(i, s)| (s - (i as f64 + 1.0)).abs() <= 0.25);
    (
        pass,
        format!(
            "fitted orders {:.2}, {:.2}, {:.2}, {:.2} (accept M +- 0.25)",
            slopes[0], slopes[1], slopes[2], slopes[3]
        ),
    )
}

/// Scheme tables and model presets match the checked-in constants file
/// character for character.
fn coefficient_fidelity() -> (bool, String) {
    let join = |v: &[thps::timestep::Rational]| {
        v.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")
    };
    let mut text = String::new();
    for m in 1..=4usize {
        let s = imex_bdf(m).unwrap();
        text.push_str(&format!(
            "imex-bdf-{m} omega={} a={} b={}\n",
            s.omega,
            join(&s.a),
            join(&s.b)
        ));
    }
    text.push_str(&format!(
        "turing2 alpha={} beta={} gamma={} delta-u2={} delta-ratio={}\n",
        presets::TURING2_ALPHA,
        presets::TURING2_BETA,
        Turing2::spots().gamma,
        presets::TURING2_DELTA_U2,
        presets::TURING2_DELTA_RATIO,
    ));
    text.push_str(&format!(
        "turing2-spots r1={} r2={}\n",
        presets::TURING2_SPOTS_R1,
        presets::TURING2_SPOTS_R2
    ));
    text.push_str(&format!(
        "turing2-stripes r1={} r2={} alpha={} beta={}\n",
        presets::TURING2_STRIPES_R1,
        presets::TURING2_STRIPES_R2,
        presets::TURING2_STRIPES_ALPHA,
        presets::TURING2_STRIPES_BETA,
    ));
    text.push_str(&format!(
        "coupled4 alpha-prime={} beta-prime={} delta-v2={} delta-v-ratio={} coupling={}\n",
        presets::COUPLED4_ALPHA_PRIME,
        presets::COUPLED4_BETA_PRIME,
        presets::COUPLED4_DELTA_V2,
        presets::COUPLED4_DELTA_V_RATIO,
        presets::COUPLED4_COUPLING_STRENGTH,
    ));

    let expected = include_str!("data/imex_constants.txt");
    if text == expected {
        (true, "generated constants equal the checked-in file".into())
    } else {
        let diff = text
            .lines()
            .zip(expected.lines())
            .find(|(a, b)| a != b)
            .map(|(a, b)| format!("generated '{a}' vs file '{b}'"))
            .unwrap_or_else(|| "line counts differ".into());
        (false, format!("first difference: {diff}"))
    }
}

/// Writes through a buffer larger than any cache level. The smallest mesh's
/// factors fit in cache while the larger meshes stream from RAM; evicting
/// before every timed pass puts all three measurements in the same regime,
/// so the fitted exponent reflects the algorithm rather than the cache cliff.
fn evict_caches(buf: &mut [u8]) {
    for (i, b) in buf.iter_mut().enumerate() {
        *b = b.wrapping_add(i as u8);
    }
    std::hint::black_box(buf.first());
}

/// Repeated solves scale near-linearly and are much cheaper than the
/// factorization they reuse.
fn scaling() -> (bool, String) {
    let n = 8;
    let f = |p: Vector3<f64>| (2.0 * p.x).sin() * p.z + p.y;
    let mut scratch = vec![0u8; 192 << 20];
    let mut dofs = Vec::new();
    let mut solve_times = Vec::new();
    let mut fact_ico3 = 0.0f64;
    let mut solve_ico3 = 0.0f64;
    for refine in [2usize, 3, 4] {
        let mut mesh = lift(icosphere(refine, 1.0).unwrap(), SurfaceDef::sphere(1.0), n);
        let coeffs = PdeCoefficients::helmholtz(1.0, 1.0);
        let plan = build_merge_plan(&mesh.flat);
        let forcing = mesh.sample(&f);
        let t0 = Instant::now();
        let mut solver =
            ThpsSolver::factorize(&mesh, &coeffs, &plan, ClosedRootPolicy::Regular).unwrap();
        let t_fact = t0.elapsed().as_secs_f64();
        mesh.release_derivative_matrices();

        // Warm once, then keep the fastest of several evicted refresh+solve
        // passes.
        solver.set_forcing_field(&mesh, &forcing).unwrap();
        let _ = solver.solve_closed(&mesh).unwrap();
        let reps = [0usize, 0, 6, 4, 3][refine];
        let mut best = f64::INFINITY;
        for _ in 0..reps {
            evict_caches(&mut scratch);
            let t1 = Instant::now();
            solver.set_forcing_field(&mesh, &forcing).unwrap();
            let u = solver.solve_closed(&mesh).unwrap();
            best = best.min(t1.elapsed().as_secs_f64());
            assert!(u.max_abs().is_finite());
        }
        dofs.push(mesh.numbering.total() as f64);
        solve_times.push(best);
        if refine == 3 {
            fact_ico3 = t_fact;
            solve_ico3 = best;
        }
    }
    let exponent = loglog_slope(&dofs, &solve_times);
    let speedup = fact_ico3 / solve_ico3;
    let pass = exponent <= 1.25 && speedup >= 5.0;
    (
        pass,
        format!(
            "solve times {:.1}ms, {:.1}ms, {:.1}ms over N = {}, {}, {}; exponent {exponent:.2} \
             (accept <= 1.25); refresh+solve {speedup:.0}x faster than factorization (accept >= 5x)",
            solve_times[0] * 1e3, solve_times[1] * 1e3, solve_times[2] * 1e3,
            dofs[0], dofs[1], dofs[2]
        ),
    )
}

/// Spot-regime reaction-diffusion smoke run: survives 2000 steps, stays
/// under the amplitude bound, and grows structure out of seeded noise.
fn turing_smoke() -> (bool, String) {
    let mesh = lift(icosphere(2, 1.0).unwrap(), SurfaceDef::sphere(1.0), 8);
    let initial = random_initial(2, mesh.num_elements(), mesh.nodes_per_element(), 1234);
    let factory = ThpsDiffusionFactory::new(&mesh).unwrap();
    let mut stepper = Stepper::new(factory, Turing2::spots().system(), 4, 0.1, initial).unwrap();

    let mut clean = true;
    let mut noise_floor = 0.0f64;
    for step in 1..=2000usize {
        if stepper.step().is_err() {
            clean = false;
            break;
        }
        if step == 1 {
            noise_floor = mesh.variance(&stepper.current()[0]);
        }
    }
    if !clean {
        return (false, format!("aborted at step {} with a non-finite state", stepper.steps_taken() + 1));
    }
    let max_u1 = stepper.current()[0].max_abs();
    let variance = mesh.variance(&stepper.current()[0]);
    let ratio = variance / noise_floor;
    let pass = max_u1 < 10.0 && ratio >= 10.0;
    (
        pass,
        format!(
            "2000 steps clean; final max|u1| = {max_u1:.2} (bound 10); \
             variance ratio vs one-step noise floor = {ratio:.0} (accept >= 10)"
        ),
    )
}

#[test]
fn acceptance() {
    let mut gate = Gate { failures: Vec::new() };
    let checks: Vec<(&str, fn() -> (bool, String))> = vec![
        ("reference-element exactness", reference_element_exactness),
        ("sphere eigenfunction residual", eigenfunction_residual),
        ("oracle equivalence", oracle_equivalence),
        ("hemisphere convergence", hemisphere_convergence),
        ("closed-sphere convergence", closed_sphere_convergence),
        ("diffusion benchmark", diffusion_benchmark),
        ("imex order verification", imex_order_verification),
        ("coefficient fidelity", coefficient_fidelity),
        ("scaling", scaling),
        ("turing smoke", turing_smoke),
    ];
    for (idx, (name, run)) in checks.into_iter().enumerate() {
        let t0 = Instant::now();
        let (pass, detail) = run();
        let secs = t0.elapsed().as_secs_f64();
        gate.check(idx + 1, name, pass, format!("{detail} [{secs:.1}s]"));
    }
    assert!(
        gate.failures.is_empty(),
        "acceptance gate failed:\n{}",
        gate.failures.join("\n")
    );
}
