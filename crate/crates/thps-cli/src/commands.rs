//! Subcommand implementations. Each returns structured results; `main`
//! handles printing and exit codes.

use crate::config::{ProblemKind, Regularization, RunConfig};
use crate::error::CliError;
use crate::report::{ErrorReport, ReportRow};
use crate::vtk::write_vtk;
use std::fmt::Write as _;
use std::time::Instant;
use thps::field::NodalField;
use thps::leaf_ops::PdeCoefficients;
use thps::merge_tree::{build_merge_plan, ClosedRootPolicy, ThpsSolver};
use thps::sph;
use thps::surface_geom::{lift_mesh, load_mesh, LiftedMesh, SurfaceDef};
use thps::timestep::{
    imex_bdf, random_initial, run_simulation, Coupled4, RdSystem, Stepper, ThpsDiffusionFactory,
    Turing2,
};

fn policy(r: Regularization) -> ClosedRootPolicy {
    match r {
        Regularization::Regular => ClosedRootPolicy::Regular,
        Regularization::MeanZero => ClosedRootPolicy::MeanZero,
        Regularization::PinNode => ClosedRootPolicy::PinNode,
        Regularization::Auto => ClosedRootPolicy::Auto,
    }
}

fn lift(cfg: &RunConfig) -> Result<LiftedMesh, CliError> {
    let (flat, surface) = load_mesh(&cfg.mesh)?;
    Ok(lift_mesh(flat, surface.unwrap_or(SurfaceDef::Identity), cfg.degree)?)
}

/// Laplace-Beltrami eigenvalue scale: Y_l^m on a radius-r sphere is an
/// eigenfunction with eigenvalue -l(l+1)/r^2.
fn sphere_eigenvalue(mesh: &LiftedMesh, l: usize) -> Result<f64, CliError> {
    match mesh.surface {
        SurfaceDef::Sphere { radius } => Ok((l * (l + 1)) as f64 / (radius * radius)),
        _ => Err(CliError::config(
            "exact spherical-harmonic solutions require a sphere surface",
        )),
    }
}

fn harmonic_field(mesh: &LiftedMesh, l: usize, m: i32) -> NodalField {
    mesh.sample(|p| sph::eval(l, m, p.x, p.y, p.z))
}

/// Relative max-norm error; on closed surfaces with a pure Laplace operator
/// both fields are compared after mean subtraction (the solution is only
/// determined up to a constant).
fn relative_error(
    mesh: &LiftedMesh,
    u: &NodalField,
    exact: &NodalField,
    mean_free: bool,
) -> f64 {
    let (su, se) = if mean_free {
        (mesh.mean(u), mesh.mean(exact))
    } else {
        (0.0, 0.0)
    };
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (a, b) in u.as_slice().iter().zip(exact.as_slice()) {
        num = num.max(((a - su) - (b - se)).abs());
        den = den.max((b - se).abs());
    }
    num / den
}

pub struct SolveOutcome {
    pub row: ReportRow,
    pub solution: NodalField,
    pub mesh: LiftedMesh,
}

fn stationary_coefficients(cfg: &RunConfig) -> Result<PdeCoefficients, CliError> {
    match cfg.kind {
        ProblemKind::Poisson => Ok(PdeCoefficients::helmholtz(1.0, cfg.mass)),
        ProblemKind::CustomCoefficients => {
            let a = cfg.coeff_a.unwrap_or([0.0; 6]);
            let b = cfg.coeff_b.unwrap_or([0.0; 3]);
            let c = cfg.coeff_c.unwrap_or(0.0);
            Ok(PdeCoefficients::constant(a, b, c))
        }
        k => Err(CliError::config(format!(
            "solve expects a stationary problem kind (poisson | custom-coefficients), got {}",
            k.as_str()
        ))),
    }
}

/// Factorize + solve one stationary problem, timing each stage.
pub fn run_stationary(cfg: &RunConfig) -> Result<SolveOutcome, CliError> {
    cfg.validate()?;
    let coeffs = stationary_coefficients(cfg)?;

    let t0 = Instant::now();
    let mesh = lift(cfg)?;
    let t_build = t0.elapsed().as_secs_f64();

    let plan = build_merge_plan(&mesh.flat);
    let t0 = Instant::now();
    let mut solver = ThpsSolver::factorize(&mesh, &coeffs, &plan, policy(cfg.regularization))?;
    let t_merge = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    if let Some((l, m)) = cfg.exact {
        // Manufactured forcing so that Y_l^m solves the configured PDE.
        if cfg.kind != ProblemKind::Poisson {
            return Err(CliError::config(
                "exact harmonic solutions are only wired to the poisson kind",
            ));
        }
        let lambda = sphere_eigenvalue(&mesh, l)?;
        let scale = cfg.mass - lambda;
        let f = harmonic_field(&mesh, l, m);
        let mut forcing = f.clone();
        forcing.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
        solver.set_forcing_field(&mesh, &forcing)?;
    } else if let Some(f) = cfg.forcing {
        solver.set_forcing(&mesh, |_| f)?;
    }
    let solution = if solver.is_closed() {
        solver.solve_closed(&mesh)?
    } else if let Some((l, m)) = cfg.exact {
        solver.solve_dirichlet(&mesh, |p| sph::eval(l, m, p.x, p.y, p.z))?
    } else {
        let g = cfg.dirichlet.unwrap_or(0.0);
        solver.solve_dirichlet(&mesh, |_| g)?
    };
    let t_solve = t0.elapsed().as_secs_f64();

    let err_linf = match cfg.exact {
        Some((l, m)) => {
            let exact = harmonic_field(&mesh, l, m);
            let mean_free = solver.is_closed() && cfg.mass == 0.0;
            Some(relative_error(&mesh, &solution, &exact, mean_free))
        }
        None => None,
    };
    let row = ReportRow {
        h: mesh.h_max,
        degree: cfg.degree,
        elements: mesh.num_elements(),
        dof: mesh.numbering.total(),
        err_linf,
        t_build,
        t_merge,
        t_solve,
    };
    Ok(SolveOutcome { row, solution, mesh })
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<String, CliError> {
    let outcome = run_stationary(cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_vtk(
        &cfg.output_dir.join("solution.vtk"),
        &outcome.mesh,
        &[("u", &outcome.solution)],
        "stationary solution",
    )?;
    let mut report = ErrorReport::default();
    report.push(outcome.row.clone());
    report.write_csv(&cfg.output_dir.join("errors.csv"))?;
    let r = &outcome.row;
    let mut line = format!(
        "solve: {} n={} N={} dof={} h={:.4e}",
        cfg.mesh, r.degree, r.elements, r.dof, r.h
    );
    if let Some(e) = r.err_linf {
        let _ = write!(line, " err={e:.6e}");
    }
    let _ = write!(
        line,
        " build={:.3}s merge={:.3}s solve={:.3}s",
        r.t_build, r.t_merge, r.t_solve
    );
    Ok(line)
}

pub fn cmd_converge(
    cfg: &RunConfig,
    refinements: &[usize],
    degrees: &[usize],
) -> Result<String, CliError> {
    if refinements.is_empty() || degrees.is_empty() {
        return Err(CliError::config("converge needs nonempty --refine and --degrees lists"));
    }
    if !cfg.mesh.contains("{}") {
        return Err(CliError::config(
            "converge needs a mesh spec with a '{}' refinement placeholder, e.g. icosphere:{}",
        ));
    }
    let mut report = ErrorReport::default();
    for &n in degrees {
        for &r in refinements {
            let mut run = cfg.clone();
            run.mesh = cfg.mesh.replace("{}", &r.to_string());
            run.degree = n;
            report.push(run_stationary(&run)?.row);
        }
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    report.write_csv(&cfg.output_dir.join("converge.csv"))?;
    let mut summary = format!("converge: {} rows -> converge.csv", report.rows.len());
    for &n in degrees {
        if let Some(slope) = report.slope_for_degree(n) {
            let _ = write!(summary, "\nn={n}: fitted error slope {:.2} in h", -slope);
        }
    }
    Ok(summary)
}

fn turing2_system(cfg: &RunConfig) -> Result<RdSystem, CliError> {
    let mut params = match cfg.preset.as_str() {
        "spots" => Turing2::spots(),
        "stripes" => Turing2::stripes(),
        other => return Err(CliError::config(format!("unknown preset '{other}'"))),
    };
    if let Some(r1) = cfg.r1 {
        params.r1 = r1;
    }
    if let Some(r2) = cfg.r2 {
        params.r2 = r2;
    }
    Ok(params.system())
}

fn coupled4_system(cfg: &RunConfig) -> Result<RdSystem, CliError> {
    let mut params = Coupled4::defaults();
    if let Some(r1) = cfg.r1 {
        params.r1 = r1;
    }
    if let Some(r2) = cfg.r2 {
        params.r2 = r2;
    }
    params.q1 = cfg.q1;
    params.q2 = cfg.q2;
    params.q3 = cfg.q3;
    params.v2_in_u1 = cfg.cubic_coupling == "v2";
    Ok(params.system())
}

fn species_names(kind: ProblemKind) -> Vec<&'static str> {
    match kind {
        ProblemKind::Coupled4 => vec!["v1", "v2", "u1", "u2"],
        ProblemKind::Diffusion => vec!["u"],
        _ => vec!["u1", "u2"],
    }
}

pub fn cmd_evolve(cfg: &RunConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let (system, wants_noise) = match cfg.kind {
        ProblemKind::Diffusion => (
            RdSystem {
                name: "diffusion".into(),
                diffusion: vec![cfg.diffusion],
                reaction: std::sync::Arc::new(|_, f| f.iter_mut().for_each(|v| *v = 0.0)),
            },
            false,
        ),
        ProblemKind::Turing2 => (turing2_system(cfg)?, true),
        ProblemKind::Coupled4 => (coupled4_system(cfg)?, true),
        k => {
            return Err(CliError::config(format!(
                "evolve expects a time-dependent kind (diffusion | turing2 | coupled4), got {}",
                k.as_str()
            )))
        }
    };
    let mesh = lift(cfg)?;
    let names = species_names(cfg.kind);

    let initial = if wants_noise {
        random_initial(system.components(), mesh.num_elements(), mesh.nodes_per_element(), cfg.seed)
    } else {
        let (l, m) = cfg.exact.ok_or_else(|| {
            CliError::config("diffusion runs need [problem] exact = l,m initial data")
        })?;
        vec![harmonic_field(&mesh, l, m)]
    };

    let scheme = imex_bdf(cfg.order)?;
    let factory = ThpsDiffusionFactory::new(&mesh)?;
    let mut stepper = Stepper::new(factory, system, scheme.order, cfg.dt, initial)?;

    let snapshot_steps: Vec<usize> = if cfg.snapshots.is_empty() {
        vec![0, cfg.steps]
    } else {
        cfg.snapshots.clone()
    };
    let result = run_simulation(&mut stepper, cfg.steps, &snapshot_steps)?;

    std::fs::create_dir_all(&cfg.output_dir)?;
    for snap in &result.snapshots {
        let fields: Vec<(&str, &NodalField)> =
            names.iter().zip(&snap.fields).map(|(n, f)| (*n, f)).collect();
        write_vtk(
            &cfg.output_dir.join(format!("snapshot_{:06}.vtk", snap.step)),
            &mesh,
            &fields,
            &format!("t = {}", snap.time),
        )?;
    }

    let mut norms_csv = String::from("step,time");
    for n in &names {
        let _ = write!(norms_csv, ",max_{n}");
    }
    norms_csv.push('\n');
    for (i, norms) in result.max_norms.iter().enumerate() {
        let _ = write!(norms_csv, "{},{}", i + 1, (i + 1) as f64 * cfg.dt);
        for v in norms {
            let _ = write!(norms_csv, ",{v:.17e}");
        }
        norms_csv.push('\n');
    }
    std::fs::write(cfg.output_dir.join("max_norms.csv"), norms_csv)?;

    let mut stats = String::new();
    let _ = writeln!(stats, "seed = {}", cfg.seed);
    let _ = writeln!(stats, "steps = {}", stepper.steps_taken());
    let _ = writeln!(stats, "final_time = {}", stepper.time());
    let _ = writeln!(stats, "reaction_evals = {}", result.reaction_evals);
    let _ = writeln!(stats, "factorizations = {}", stepper.factorization_count());
    for (name, field) in names.iter().zip(stepper.current()) {
        let min = field.as_slice().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = field.as_slice().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            stats,
            "{name}: min = {min:.9e} max = {max:.9e} variance = {:.9e}",
            mesh.variance(field)
        );
    }
    if let (ProblemKind::Diffusion, Some((l, m))) = (cfg.kind, cfg.exact) {
        let lambda = sphere_eigenvalue(&mesh, l)?;
        let decay = (-cfg.diffusion * lambda * stepper.time()).exp();
        let mut exact = harmonic_field(&mesh, l, m);
        exact.as_mut_slice().iter_mut().for_each(|v| *v *= decay);
        let err = relative_error(&mesh, &stepper.current()[0], &exact, false);
        let _ = writeln!(stats, "err_linf_vs_exact = {err:.9e}");
    }
    std::fs::write(cfg.output_dir.join("stats.txt"), &stats)?;

    Ok(format!(
        "evolve: {} steps to t = {}, {} snapshots -> {}\n{}",
        stepper.steps_taken(),
        stepper.time(),
        result.snapshots.len(),
        cfg.output_dir.display(),
        stats.trim_end()
    ))
}

pub fn cmd_mesh_info(spec: &str, degree: usize) -> Result<String, CliError> {
    let (flat, surface) = load_mesh(spec)?;
    let mut out = format!(
        "mesh {spec}: {} vertices, {} triangles, {} edges, {} boundary edges",
        flat.vertices.len(),
        flat.triangles.len(),
        flat.edges.len(),
        flat.boundary_edge_count(),
    );
    let _ = write!(
        out,
        "\ncomponents = {}, closed = {}",
        flat.component_count(),
        flat.is_closed()
    );
    let surface = surface.unwrap_or(SurfaceDef::Identity);
    let _ = write!(out, "\nsurface = {}", surface.describe());
    if degree > 0 {
        let mesh = lift_mesh(flat, surface, degree)?;
        let _ = write!(
            out,
            "\ndegree {degree}: dof = {}, nodes per element = {}, h = {:.6e}, area = {:.9e}",
            mesh.numbering.total(),
            mesh.nodes_per_element(),
            mesh.h_max,
            mesh.area(),
        );
    }
    Ok(out)
}
