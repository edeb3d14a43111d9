//! IMEX-BDF time stepping for surface reaction-diffusion systems.
//!
//! Diffusion is treated implicitly through a factorized solve of
//! (I - omega dt delta_s Lap) per species, reaction explicitly through the
//! BDF extrapolation weights:
//!
//!   (I - omega dt delta Lap) u^{n+1} = sum_i a_i u^{n-i} + dt sum_i b_i F(u^{n-i})
//!
//! The implicit operators are factorized once per (order, species) pair and
//! reused every step, so a step costs two tree sweeps per species. A cold
//! start ramps through orders 1..M with one step each; order studies seed
//! the history exactly instead.

use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::leaf_ops::PdeCoefficients;
use crate::merge_tree::{build_merge_plan, ClosedRootPolicy, MergePlan, ThpsSolver};
use crate::surface_geom::LiftedMesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

/// Exact scheme coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

impl Rational {
    pub const fn new(num: i64, den: i64) -> Self {
        Rational { num, den }
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// One implicit-explicit BDF scheme: weights for the implicit new-time
/// term (omega), the past states (a), and the past reaction values (b).
/// Consistency: sum a_i = 1, sum b_i = omega (the extrapolation weights
/// b_i/omega sum to one).
#[derive(Debug, Clone)]
pub struct ImexScheme {
    pub order: usize,
    pub omega: Rational,
    pub a: Vec<Rational>,
    pub b: Vec<Rational>,
}

impl ImexScheme {
    pub fn omega_f(&self) -> f64 {
        self.omega.value()
    }

    pub fn a_f(&self) -> Vec<f64> {
        self.a.iter().map(|r| r.value()).collect()
    }

    pub fn b_f(&self) -> Vec<f64> {
        self.b.iter().map(|r| r.value()).collect()
    }
}

/// The IMEX-BDF family, orders 1 through 4.
pub fn imex_bdf(order: usize) -> Result<ImexScheme> {
    let r = Rational::new;
    let (omega, a, b) = match order {
        1 => (r(1, 1), vec![r(1, 1)], vec![r(1, 1)]),
        2 => (r(2, 3), vec![r(4, 3), r(-1, 3)], vec![r(4, 3), r(-2, 3)]),
        3 => (
            r(6, 11),
            vec![r(18, 11), r(-9, 11), r(2, 11)],
            vec![r(18, 11), r(-18, 11), r(6, 11)],
        ),
        4 => (
            r(12, 25),
            vec![r(48, 25), r(-36, 25), r(16, 25), r(-3, 25)],
            vec![r(48, 25), r(-72, 25), r(48, 25), r(-12, 25)],
        ),
        _ => {
            return Err(Error::Numerical(format!(
                "IMEX-BDF order must be between 1 and 4, got {order}"
            )))
        }
    };
    Ok(ImexScheme { order, omega, a, b })
}

/// A solver for one implicit step operator (I - gamma Lap).
pub trait DiffusionSolve {
    fn solve(&mut self, rhs: &NodalField) -> Result<NodalField>;
}

/// Builds implicit-step solvers for given gamma = omega dt delta.
pub trait DiffusionFactory {
    type Solver: DiffusionSolve;
    fn build(&mut self, gamma: f64) -> Result<Self::Solver>;
}

/// Degenerate zero-dimensional mode: the Laplacian acts as multiplication
/// by -eigenvalue, so the implicit solve is a scalar division. Exact for
/// fields proportional to a single Laplace eigenfunction; the workhorse
/// for scheme-order verification with no spatial error.
#[derive(Debug, Clone, Copy)]
pub struct SpectralDiffusionFactory {
    pub eigenvalue: f64,
}

pub struct SpectralDiffusionSolver {
    scale: f64,
}

impl DiffusionFactory for SpectralDiffusionFactory {
    type Solver = SpectralDiffusionSolver;

    fn build(&mut self, gamma: f64) -> Result<Self::Solver> {
        let denom = 1.0 + gamma * self.eigenvalue;
        if denom == 0.0 {
            return Err(Error::Numerical(
                "implicit spectral step operator vanishes (1 + gamma lambda = 0)".into(),
            ));
        }
        Ok(SpectralDiffusionSolver { scale: 1.0 / denom })
    }
}

impl DiffusionSolve for SpectralDiffusionSolver {
    fn solve(&mut self, rhs: &NodalField) -> Result<NodalField> {
        let mut out = rhs.clone();
        for v in out.as_mut_slice() {
            *v *= self.scale;
        }
        Ok(out)
    }
}

/// THPS-backed implicit solves on a closed lifted mesh. One merge plan is
/// shared by every factorization.
pub struct ThpsDiffusionFactory<'a> {
    mesh: &'a LiftedMesh,
    plan: MergePlan,
}

impl<'a> ThpsDiffusionFactory<'a> {
    pub fn new(mesh: &'a LiftedMesh) -> Result<Self> {
        if !mesh.flat.is_closed() {
            return Err(Error::MeshInvalid(
                "time stepping requires a closed surface (no boundary conditions are applied)"
                    .into(),
            ));
        }
        let plan = build_merge_plan(&mesh.flat);
        Ok(ThpsDiffusionFactory { mesh, plan })
    }

    pub fn plan(&self) -> &MergePlan {
        &self.plan
    }
}

pub enum ThpsDiffusionSolver<'a> {
    /// gamma = 0: the implicit operator is the identity.
    Identity,
    Solver { mesh: &'a LiftedMesh, solver: ThpsSolver },
}

impl<'a> DiffusionFactory for ThpsDiffusionFactory<'a> {
    type Solver = ThpsDiffusionSolver<'a>;

    fn build(&mut self, gamma: f64) -> Result<Self::Solver> {
        if gamma < 0.0 {
            return Err(Error::Numerical(format!(
                "implicit step coefficient must be nonnegative, got {gamma}"
            )));
        }
        if gamma == 0.0 {
            return Ok(ThpsDiffusionSolver::Identity);
        }
        // (I - gamma Lap) u = rhs; always invertible for gamma > 0.
        let coeffs = PdeCoefficients::helmholtz(-gamma, 1.0);
        let solver =
            ThpsSolver::factorize(self.mesh, &coeffs, &self.plan, ClosedRootPolicy::Regular)?;
        Ok(ThpsDiffusionSolver::Solver { mesh: self.mesh, solver })
    }
}

impl DiffusionSolve for ThpsDiffusionSolver<'_> {
    fn solve(&mut self, rhs: &NodalField) -> Result<NodalField> {
        match self {
            ThpsDiffusionSolver::Identity => Ok(rhs.clone()),
            ThpsDiffusionSolver::Solver { mesh, solver } => {
                solver.set_forcing_field(mesh, rhs)?;
                solver.solve_closed(mesh)
            }
        }
    }
}

/// A reaction-diffusion system: per-species diffusion coefficients and a
/// pointwise reaction evaluated nodewise.
#[derive(Clone)]
pub struct RdSystem {
    pub name: String,
    pub diffusion: Vec<f64>,
    pub reaction: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
}

impl RdSystem {
    pub fn components(&self) -> usize {
        self.diffusion.len()
    }
}

/// Published parameter values for the reaction presets. The time-stepping
/// acceptance suite string-compares these against a checked-in constants
/// file, so they are named individually rather than buried in builders.
pub mod presets {
    pub const TURING2_ALPHA: f64 = 0.899;
    pub const TURING2_BETA: f64 = -0.91;
    pub const TURING2_DELTA_U2: f64 = 5e-3;
    pub const TURING2_DELTA_RATIO: f64 = 0.516;
    pub const TURING2_SPOTS_R1: f64 = 0.02;
    pub const TURING2_SPOTS_R2: f64 = 0.2;
    pub const TURING2_STRIPES_R1: f64 = 1.5;
    pub const TURING2_STRIPES_R2: f64 = 0.0;
    pub const TURING2_STRIPES_ALPHA: f64 = 1.899;
    pub const TURING2_STRIPES_BETA: f64 = -0.95;
    pub const COUPLED4_ALPHA_PRIME: f64 = 0.398;
    pub const COUPLED4_BETA_PRIME: f64 = -0.41;
    pub const COUPLED4_DELTA_V2: f64 = 5e-3;
    pub const COUPLED4_DELTA_V_RATIO: f64 = 0.122;
    pub const COUPLED4_COUPLING_STRENGTH: f64 = 0.55;
}

/// Two-species activator-inhibitor system:
///
///   F1 = alpha u1 (1 - r1 u2^2) + u2 (1 - r2 u1)
///   F2 = beta u2 (1 + (alpha r1 / beta) u1 u2) + u1 (gamma + r2 u2)
///
/// Cubic coupling r1 favours stripes, quadratic r2 favours spots.
#[derive(Debug, Clone, Copy)]
pub struct Turing2 {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub r1: f64,
    pub r2: f64,
    pub delta_u1: f64,
    pub delta_u2: f64,
}

impl Turing2 {
    /// Spot-forming regime.
    pub fn spots() -> Self {
        use presets::*;
        Turing2 {
            alpha: TURING2_ALPHA,
            beta: TURING2_BETA,
            gamma: -TURING2_ALPHA,
            r1: TURING2_SPOTS_R1,
            r2: TURING2_SPOTS_R2,
            delta_u1: TURING2_DELTA_RATIO * TURING2_DELTA_U2,
            delta_u2: TURING2_DELTA_U2,
        }
    }

    /// Stripe-forming regime.
    pub fn stripes() -> Self {
        use presets::*;
        Turing2 {
            alpha: TURING2_STRIPES_ALPHA,
            beta: TURING2_STRIPES_BETA,
            gamma: -TURING2_STRIPES_ALPHA,
            r1: TURING2_STRIPES_R1,
            r2: TURING2_STRIPES_R2,
            delta_u1: TURING2_DELTA_RATIO * TURING2_DELTA_U2,
            delta_u2: TURING2_DELTA_U2,
        }
    }

    pub fn system(self) -> RdSystem {
        let p = self;
        RdSystem {
            name: "turing2".into(),
            diffusion: vec![p.delta_u1, p.delta_u2],
            reaction: Arc::new(move |u, f| {
                let (u1, u2) = (u[0], u[1]);
                f[0] = p.alpha * u1 * (1.0 - p.r1 * u2 * u2) + u2 * (1.0 - p.r2 * u1);
                f[1] = p.beta * u2 * (1.0 + (p.alpha * p.r1 / p.beta) * u1 * u2)
                    + u1 * (p.gamma + p.r2 * u2);
            }),
        }
    }
}

/// Four-species system: a (v1, v2) pair driven by an autonomous (u1, u2)
/// pair through linear (q1), quadratic (q2) and cubic (q3) couplings.
/// Species order: [v1, v2, u1, u2].
///
/// As printed, the u1 equation's cubic term reads "1 - r1 v2^2", coupling
/// the driver pair back to the driven one; `v2_in_u1 = false` switches to
/// the self-contained "1 - r1 u2^2" variant.
#[derive(Debug, Clone, Copy)]
pub struct Coupled4 {
    pub alpha_prime: f64,
    pub beta_prime: f64,
    pub gamma_prime: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub r1: f64,
    pub r2: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub delta_v1: f64,
    pub delta_v2: f64,
    pub delta_u1: f64,
    pub delta_u2: f64,
    pub v2_in_u1: bool,
}

impl Coupled4 {
    /// Published defaults, spot regime, couplings off. Enable one coupling
    /// at `COUPLED4_COUPLING_STRENGTH` to reproduce the modulation study.
    pub fn defaults() -> Self {
        use presets::*;
        Coupled4 {
            alpha_prime: COUPLED4_ALPHA_PRIME,
            beta_prime: COUPLED4_BETA_PRIME,
            gamma_prime: -COUPLED4_ALPHA_PRIME,
            alpha: TURING2_ALPHA,
            beta: TURING2_BETA,
            gamma: -TURING2_ALPHA,
            r1: TURING2_SPOTS_R1,
            r2: TURING2_SPOTS_R2,
            q1: 0.0,
            q2: 0.0,
            q3: 0.0,
            delta_v1: COUPLED4_DELTA_V_RATIO * COUPLED4_DELTA_V2,
            delta_v2: COUPLED4_DELTA_V2,
            delta_u1: TURING2_DELTA_RATIO * COUPLED4_DELTA_V2,
            delta_u2: COUPLED4_DELTA_V2,
            v2_in_u1: true,
        }
    }

    pub fn system(self) -> RdSystem {
        let p = self;
        RdSystem {
            name: "coupled4".into(),
            diffusion: vec![p.delta_v1, p.delta_v2, p.delta_u1, p.delta_u2],
            reaction: Arc::new(move |u, f| {
                let (v1, v2, u1, u2) = (u[0], u[1], u[2], u[3]);
                f[0] = p.alpha_prime * v1 * (1.0 - p.r1 * v2 * v2)
                    + v2 * (1.0 - p.r2 * v1)
                    + p.q1 * u1
                    + p.q2 * u1 * v2
                    + p.q3 * u1 * v2 * v2;
                f[1] = p.beta_prime
                    * v2
                    * (1.0 + (p.alpha_prime * p.r1 / p.beta_prime) * v1 * v2)
                    + v1 * (p.gamma_prime + p.r2 * v2)
                    - p.q2 * u2 * v1
                    - p.q3 * u2 * u2 * v1;
                let w = if p.v2_in_u1 { v2 } else { u2 };
                f[2] = p.alpha * u1 * (1.0 - p.r1 * w * w) + u2 * (1.0 - p.r2 * u1);
                f[3] = p.beta * u2 * (1.0 + (p.alpha * p.r1 / p.beta) * u1 * u2)
                    + u1 * (p.gamma + p.r2 * u2);
            }),
        }
    }
}

/// Seeded uniform noise in [-0.5, 0.5], one field per species.
pub fn random_initial(
    components: usize,
    elements: usize,
    nodes_per_element: usize,
    seed: u64,
) -> Vec<NodalField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..components)
        .map(|_| {
            let mut field = NodalField::zeros(elements, nodes_per_element);
            for v in field.as_mut_slice() {
                *v = rng.gen::<f64>() - 0.5;
            }
            field
        })
        .collect()
}

struct StepState {
    u: Vec<NodalField>,
    f: Vec<NodalField>,
}

/// Multistep integrator state: history ring, per-(order, species) solver
/// cache, and run statistics.
pub struct Stepper<F: DiffusionFactory> {
    factory: F,
    system: RdSystem,
    order: usize,
    dt: f64,
    schemes: Vec<ImexScheme>,
    solvers: Vec<Vec<Option<F::Solver>>>,
    /// Front = newest state u^n.
    history: VecDeque<StepState>,
    time: f64,
    steps_taken: usize,
    reaction_evals: usize,
    factorizations: usize,
    blowup_threshold: f64,
}

fn eval_reaction(system: &RdSystem, u: &[NodalField]) -> (Vec<NodalField>, usize) {
    let ncomp = system.components();
    let (elements, nodes) = (u[0].elements(), u[0].nodes_per_element());
    let mut out: Vec<NodalField> = (0..ncomp).map(|_| NodalField::zeros(elements, nodes)).collect();
    let total = elements * nodes;
    let mut point = vec![0.0; ncomp];
    let mut rate = vec![0.0; ncomp];
    for j in 0..total {
        for c in 0..ncomp {
            point[c] = u[c].as_slice()[j];
        }
        (system.reaction)(&point, &mut rate);
        for c in 0..ncomp {
            out[c].as_mut_slice()[j] = rate[c];
        }
    }
    (out, total)
}

impl<F: DiffusionFactory> Stepper<F> {
    /// Cold start from initial data: the first steps ramp through orders
    /// 1..order ("bootstrap"), each with the same dt.
    pub fn new(
        factory: F,
        system: RdSystem,
        order: usize,
        dt: f64,
        initial: Vec<NodalField>,
    ) -> Result<Self> {
        Self::with_seeded_history(factory, system, order, dt, vec![initial], 0.0)
    }

    /// Start with an exactly known history (oldest first, newest last);
    /// the first step then runs at full order. For order studies.
    pub fn with_seeded_history(
        factory: F,
        system: RdSystem,
        order: usize,
        dt: f64,
        states: Vec<Vec<NodalField>>,
        time_of_newest: f64,
    ) -> Result<Self> {
        if !(1..=4).contains(&order) {
            return Err(Error::Numerical(format!(
                "IMEX-BDF order must be between 1 and 4, got {order}"
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::Numerical(format!("time step must be positive, got {dt}")));
        }
        if states.is_empty() || states.len() > order {
            return Err(Error::Numerical(format!(
                "seeded history must hold between 1 and {order} states, got {}",
                states.len()
            )));
        }
        let ncomp = system.components();
        let mut history = VecDeque::new();
        let mut reaction_evals = 0;
        for state in states {
            if state.len() != ncomp {
                return Err(Error::Numerical(format!(
                    "state has {} species, system has {ncomp}",
                    state.len()
                )));
            }
            let (f, evals) = eval_reaction(&system, &state);
            reaction_evals += evals;
            history.push_front(StepState { u: state, f });
        }
        let schemes = (1..=order).map(imex_bdf).collect::<Result<_>>()?;
        let solvers = (0..order).map(|_| (0..ncomp).map(|_| None).collect()).collect();
        Ok(Stepper {
            factory,
            system,
            order,
            dt,
            schemes,
            solvers,
            history,
            time: time_of_newest,
            steps_taken: 0,
            reaction_evals,
            factorizations: 0,
            blowup_threshold: 1e8,
        })
    }

    /// Advance all species by dt.
    pub fn step(&mut self) -> Result<()> {
        let m = self.order.min(self.history.len());
        let scheme = &self.schemes[m - 1];
        let (omega, a, b) = (scheme.omega_f(), scheme.a_f(), scheme.b_f());
        let ncomp = self.system.components();

        let mut u_new: Vec<NodalField> = Vec::with_capacity(ncomp);
        for c in 0..ncomp {
            if self.solvers[m - 1][c].is_none() {
                let gamma = omega * self.dt * self.system.diffusion[c];
                self.solvers[m - 1][c] = Some(self.factory.build(gamma)?);
                self.factorizations += 1;
            }

            let template = &self.history.front().expect("nonempty history").u[c];
            let mut rhs = NodalField::zeros(template.elements(), template.nodes_per_element());
            for (i, state) in self.history.iter().take(m).enumerate() {
                let (au, bf) = (a[i], self.dt * b[i]);
                let rv = rhs.as_mut_slice();
                for (j, (uv, fv)) in
                    state.u[c].as_slice().iter().zip(state.f[c].as_slice()).enumerate()
                {
                    rv[j] += au * uv + bf * fv;
                }
            }

            let solved = self.solvers[m - 1][c].as_mut().expect("solver built").solve(&rhs)?;
            if solved.has_non_finite() || solved.max_abs() > self.blowup_threshold {
                return Err(Error::Numerical(format!(
                    "instability in species {c} at step {} (t = {}): solution {}",
                    self.steps_taken + 1,
                    self.time + self.dt,
                    if solved.has_non_finite() { "has non-finite values".into() } else {
                        format!("exceeded {:.1e}", self.blowup_threshold)
                    }
                )));
            }
            u_new.push(solved);
        }

        let (f_new, evals) = eval_reaction(&self.system, &u_new);
        self.reaction_evals += evals;
        self.history.push_front(StepState { u: u_new, f: f_new });
        while self.history.len() > self.order {
            self.history.pop_back();
        }
        self.time += self.dt;
        self.steps_taken += 1;
        Ok(())
    }

    pub fn advance(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Current (newest) state, one field per species.
    pub fn current(&self) -> &[NodalField] {
        &self.history.front().expect("nonempty history").u
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn system(&self) -> &RdSystem {
        &self.system
    }

    /// Nodewise reaction evaluations so far.
    pub fn reaction_evals(&self) -> usize {
        self.reaction_evals
    }

    /// Implicit-operator factorizations so far; independent of the number
    /// of steps taken (at most order x species, exactly species when the
    /// history was fully seeded).
    pub fn factorization_count(&self) -> usize {
        self.factorizations
    }

    pub fn set_blowup_threshold(&mut self, threshold: f64) {
        self.blowup_threshold = threshold;
    }
}

/// One recorded state of a run.
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub fields: Vec<NodalField>,
}

pub struct SimulationResult {
    pub snapshots: Vec<Snapshot>,
    /// Per step (after it), per species, max |u|.
    pub max_norms: Vec<Vec<f64>>,
    pub reaction_evals: usize,
}

/// Run `steps` steps, recording snapshots at the listed step indices
/// (0 = initial data). Instability aborts with the step index in the error.
pub fn run_simulation<F: DiffusionFactory>(
    stepper: &mut Stepper<F>,
    steps: usize,
    snapshot_steps: &[usize],
) -> Result<SimulationResult> {
    let mut wanted: Vec<usize> = snapshot_steps.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    let take = |stepper: &Stepper<F>| Snapshot {
        step: stepper.steps_taken(),
        time: stepper.time(),
        fields: stepper.current().to_vec(),
    };

    let mut snapshots = Vec::new();
    if wanted.first() == Some(&stepper.steps_taken()) {
        snapshots.push(take(stepper));
    }
    let mut max_norms = Vec::with_capacity(steps);
    for _ in 0..steps {
        stepper.step()?;
        max_norms.push(stepper.current().iter().map(|f| f.max_abs()).collect());
        if wanted.binary_search(&stepper.steps_taken()).is_ok() {
            snapshots.push(take(stepper));
        }
    }
    Ok(SimulationResult { snapshots, max_norms, reaction_evals: stepper.reaction_evals() })
}
