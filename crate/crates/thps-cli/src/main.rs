use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use thps_cli::commands::{cmd_converge, cmd_evolve, cmd_mesh_info, cmd_solve};
use thps_cli::{CliError, ProblemKind, Regularization, RunConfig};

#[derive(Parser)]
#[command(name = "thps", version, about = "Hierarchical direct solver for PDEs on curved surfaces")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Factorize and solve one stationary problem
    Solve(CommonArgs),
    /// Sweep refinements and degrees, reporting errors, timings, and slopes
    Converge {
        #[command(flatten)]
        common: CommonArgs,
        /// Refinement levels substituted into the mesh spec's '{}'
        #[arg(long, value_delimiter = ',')]
        refine: Vec<usize>,
        /// Polynomial degrees to sweep
        #[arg(long, value_delimiter = ',')]
        degrees: Vec<usize>,
    },
    /// Integrate a time-dependent problem, writing snapshots and stats
    Evolve(CommonArgs),
    /// Describe a mesh: counts, topology, and lifted sizes
    MeshInfo {
        /// Mesh spec (builtin like icosphere:2, or an OFF/OBJ path)
        #[arg(long)]
        mesh: String,
        /// Also lift at this degree and report sizes
        #[arg(long, default_value_t = 0)]
        degree: usize,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Config file; flags below override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kind: Option<String>,
    /// Exact solution / initial data as a spherical harmonic 'l,m'
    #[arg(long)]
    exact: Option<String>,
    #[arg(long)]
    mesh: Option<String>,
    #[arg(long)]
    degree: Option<usize>,
    /// IMEX-BDF order (1..4)
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Snapshot step indices, comma separated
    #[arg(long)]
    snapshots: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "output-dir")]
    output_dir: Option<PathBuf>,
    /// Worker threads (0 = auto)
    #[arg(long)]
    threads: Option<usize>,
    /// Closed-surface root regularization: regular | mean-zero | pin-node | auto
    #[arg(long)]
    regularization: Option<String>,
}

fn build_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let kind = args.kind.as_deref().ok_or_else(|| {
                CliError::config("need --config or --kind to define the problem")
            })?;
            let mut c = RunConfig::default();
            c.kind = ProblemKind::parse(kind)?;
            c
        }
    };
    if let Some(kind) = &args.kind {
        cfg.kind = ProblemKind::parse(kind)?;
    }
    if let Some(exact) = &args.exact {
        let parts: Vec<&str> = exact.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(CliError::config(format!("--exact: expected 'l,m', got '{exact}'")));
        }
        let l = parts[0]
            .parse()
            .map_err(|_| CliError::config(format!("--exact: bad degree '{}'", parts[0])))?;
        let m = parts[1]
            .parse()
            .map_err(|_| CliError::config(format!("--exact: bad order '{}'", parts[1])))?;
        cfg.exact = Some((l, m));
    }
    if let Some(mesh) = &args.mesh {
        cfg.mesh = mesh.clone();
    }
    if let Some(degree) = args.degree {
        cfg.degree = degree;
    }
    if let Some(order) = args.order {
        cfg.order = order;
    }
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    if let Some(snapshots) = &args.snapshots {
        cfg.snapshots = snapshots
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::config(format!("--snapshots: bad step '{s}'")))
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(threads) = args.threads {
        cfg.threads = threads;
    }
    if let Some(reg) = &args.regularization {
        cfg.regularization = Regularization::parse(reg)?;
    }
    Ok(cfg)
}

fn apply_threads(threads: usize) {
    if threads > 0 {
        // Ignore failure: the global pool can only be set once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

fn run() -> Result<String, CliError> {
    match Cli::parse().cmd {
        Cmd::Solve(args) => {
            let cfg = build_config(&args)?;
            apply_threads(cfg.threads);
            cmd_solve(&cfg)
        }
        Cmd::Converge { common, refine, degrees } => {
            let cfg = build_config(&common)?;
            apply_threads(cfg.threads);
            cmd_converge(&cfg, &refine, &degrees)
        }
        Cmd::Evolve(args) => {
            let cfg = build_config(&args)?;
            apply_threads(cfg.threads);
            cmd_evolve(&cfg)
        }
        Cmd::MeshInfo { mesh, degree } => cmd_mesh_info(&mesh, degree),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
