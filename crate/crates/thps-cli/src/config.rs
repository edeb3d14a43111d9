//! Run configuration: a flat key = value file with [section] headers.
//! Parsing is strict: unknown sections or keys are errors, and a parsed
//! config serializes back to an equivalent config (round-trip identity).

use crate::error::CliError;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Poisson,
    Diffusion,
    Turing2,
    Coupled4,
    CustomCoefficients,
}

impl ProblemKind {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "poisson" => Ok(Self::Poisson),
            "diffusion" => Ok(Self::Diffusion),
            "turing2" => Ok(Self::Turing2),
            "coupled4" => Ok(Self::Coupled4),
            "custom-coefficients" => Ok(Self::CustomCoefficients),
            _ => Err(CliError::config(format!(
                "unknown problem kind '{s}' (expected poisson | diffusion | turing2 | coupled4 | custom-coefficients)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Poisson => "poisson",
            Self::Diffusion => "diffusion",
            Self::Turing2 => "turing2",
            Self::Coupled4 => "coupled4",
            Self::CustomCoefficients => "custom-coefficients",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularization {
    Regular,
    MeanZero,
    PinNode,
    Auto,
}

impl Regularization {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "regular" => Ok(Self::Regular),
            "mean-zero" => Ok(Self::MeanZero),
            "pin-node" => Ok(Self::PinNode),
            "auto" => Ok(Self::Auto),
            _ => Err(CliError::config(format!(
                "unknown regularization '{s}' (expected regular | mean-zero | pin-node | auto)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Regular => "regular",
            Self::MeanZero => "mean-zero",
            Self::PinNode => "pin-node",
            Self::Auto => "auto",
        }
    }
}

/// Everything a run needs; CLI flags override file values field by field.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: ProblemKind,
    /// Spherical harmonic (l, m) used as exact solution / initial data.
    pub exact: Option<(usize, i32)>,
    /// Zero-order coefficient added to the Laplacian for poisson runs.
    pub mass: f64,
    /// Diffusion coefficient for the scalar diffusion kind.
    pub diffusion: f64,
    /// turing2 parameter regime: "spots" or "stripes".
    pub preset: String,
    /// turing2 / coupled4 coupling overrides.
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    /// coupled4 coupling strengths.
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    /// coupled4 cubic term in the u1 equation: "v2" (as published) or "u2".
    pub cubic_coupling: String,
    /// custom-coefficients: second-order tensor (xx, xy, xz, yy, yz, zz).
    pub coeff_a: Option<[f64; 6]>,
    /// custom-coefficients: drift (x, y, z).
    pub coeff_b: Option<[f64; 3]>,
    /// custom-coefficients: zero-order coefficient.
    pub coeff_c: Option<f64>,
    /// custom-coefficients: constant forcing.
    pub forcing: Option<f64>,
    /// custom-coefficients: constant Dirichlet data (open surfaces).
    pub dirichlet: Option<f64>,
    pub mesh: String,
    pub degree: usize,
    pub order: usize,
    pub dt: f64,
    pub steps: usize,
    /// Step indices written as snapshots; empty = initial and final.
    pub snapshots: Vec<usize>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub regularization: Regularization,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kind: ProblemKind::Poisson,
            exact: None,
            mass: 0.0,
            diffusion: 1.0,
            preset: "spots".into(),
            r1: None,
            r2: None,
            q1: 0.0,
            q2: 0.0,
            q3: 0.0,
            cubic_coupling: "v2".into(),
            coeff_a: None,
            coeff_b: None,
            coeff_c: None,
            forcing: None,
            dirichlet: None,
            mesh: String::new(),
            degree: 0,
            order: 4,
            dt: 0.1,
            steps: 0,
            snapshots: Vec::new(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            threads: 0,
            regularization: Regularization::Auto,
        }
    }
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| {
        CliError::config(format!("[{section}] {key}: cannot parse '{value}'"))
    })
}

fn parse_list<T: std::str::FromStr>(
    section: &str,
    key: &str,
    value: &str,
) -> Result<Vec<T>, CliError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_num(section, key, v.trim())).collect()
}

fn parse_exact(value: &str) -> Result<(usize, i32), CliError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(CliError::config(format!(
            "[problem] exact: expected 'l,m', got '{value}'"
        )));
    }
    let l: usize = parse_num("problem", "exact", parts[0])?;
    let m: i32 = parse_num("problem", "exact", parts[1])?;
    if m.unsigned_abs() as usize > l {
        return Err(CliError::config(format!("[problem] exact: |m| > l in '{value}'")));
    }
    Ok((l, m))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut kind_set = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                match section.as_str() {
                    "problem" | "mesh" | "time" | "output" | "run" => {}
                    _ => {
                        return Err(CliError::config(format!(
                            "line {}: unknown section [{section}]",
                            lineno + 1
                        )))
                    }
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(format!("{section}.{key}")) {
                return Err(CliError::config(format!(
                    "line {}: duplicate key '{key}' in [{section}]",
                    lineno + 1
                )));
            }
            match (section.as_str(), key) {
                ("problem", "kind") => {
                    cfg.kind = ProblemKind::parse(value)?;
                    kind_set = true;
                }
                ("problem", "exact") => cfg.exact = Some(parse_exact(value)?),
                ("problem", "mass") => cfg.mass = parse_num(&section, key, value)?,
                ("problem", "diffusion") => cfg.diffusion = parse_num(&section, key, value)?,
                ("problem", "preset") => {
                    if value != "spots" && value != "stripes" {
                        return Err(CliError::config(format!(
                            "[problem] preset: expected spots | stripes, got '{value}'"
                        )));
                    }
                    cfg.preset = value.to_string();
                }
                ("problem", "r1") => cfg.r1 = Some(parse_num(&section, key, value)?),
                ("problem", "r2") => cfg.r2 = Some(parse_num(&section, key, value)?),
                ("problem", "q1") => cfg.q1 = parse_num(&section, key, value)?,
                ("problem", "q2") => cfg.q2 = parse_num(&section, key, value)?,
                ("problem", "q3") => cfg.q3 = parse_num(&section, key, value)?,
                ("problem", "cubic-coupling") => {
                    if value != "v2" && value != "u2" {
                        return Err(CliError::config(format!(
                            "[problem] cubic-coupling: expected v2 | u2, got '{value}'"
                        )));
                    }
                    cfg.cubic_coupling = value.to_string();
                }
                ("problem", "a") => {
                    let v: Vec<f64> = parse_list(&section, key, value)?;
                    cfg.coeff_a = Some(v.try_into().map_err(|_| {
                        CliError::config("[problem] a: expected six values (xx,xy,xz,yy,yz,zz)")
                    })?);
                }
                ("problem", "b") => {
                    let v: Vec<f64> = parse_list(&section, key, value)?;
                    cfg.coeff_b = Some(v.try_into().map_err(|_| {
                        CliError::config("[problem] b: expected three values (x,y,z)")
                    })?);
                }
                ("problem", "c") => cfg.coeff_c = Some(parse_num(&section, key, value)?),
                ("problem", "forcing") => cfg.forcing = Some(parse_num(&section, key, value)?),
                ("problem", "dirichlet") => cfg.dirichlet = Some(parse_num(&section, key, value)?),
                ("mesh", "spec") => cfg.mesh = value.to_string(),
                ("mesh", "degree") => cfg.degree = parse_num(&section, key, value)?,
                ("time", "order") => cfg.order = parse_num(&section, key, value)?,
                ("time", "dt") => cfg.dt = parse_num(&section, key, value)?,
                ("time", "steps") => cfg.steps = parse_num(&section, key, value)?,
                ("time", "snapshots") => cfg.snapshots = parse_list(&section, key, value)?,
                ("output", "dir") => cfg.output_dir = PathBuf::from(value),
                ("run", "seed") => cfg.seed = parse_num(&section, key, value)?,
                ("run", "threads") => cfg.threads = parse_num(&section, key, value)?,
                ("run", "regularization") => {
                    cfg.regularization = Regularization::parse(value)?
                }
                ("", k) => {
                    return Err(CliError::config(format!(
                        "line {}: key '{k}' before any [section]",
                        lineno + 1
                    )))
                }
                (s, k) => {
                    return Err(CliError::config(format!(
                        "line {}: unknown key '{k}' in [{s}]",
                        lineno + 1
                    )))
                }
            }
        }
        if !kind_set {
            return Err(CliError::config("missing required key: [problem] kind"));
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Inverse of `parse` up to formatting: parse(serialize(c)) == c.
    pub fn serialize(&self) -> String {
        let d = RunConfig::default();
        let mut out = String::new();
        let _ = writeln!(out, "[problem]");
        let _ = writeln!(out, "kind = {}", self.kind.as_str());
        if let Some((l, m)) = self.exact {
            let _ = writeln!(out, "exact = {l},{m}");
        }
        if self.mass != d.mass {
            let _ = writeln!(out, "mass = {}", self.mass);
        }
        if self.diffusion != d.diffusion {
            let _ = writeln!(out, "diffusion = {}", self.diffusion);
        }
        if self.preset != d.preset {
            let _ = writeln!(out, "preset = {}", self.preset);
        }
        if let Some(v) = self.r1 {
            let _ = writeln!(out, "r1 = {v}");
        }
        if let Some(v) = self.r2 {
            let _ = writeln!(out, "r2 = {v}");
        }
        for (k, v) in [("q1", self.q1), ("q2", self.q2), ("q3", self.q3)] {
            if v != 0.0 {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        if self.cubic_coupling != d.cubic_coupling {
            let _ = writeln!(out, "cubic-coupling = {}", self.cubic_coupling);
        }
        if let Some(a) = self.coeff_a {
            let _ = writeln!(out, "a = {}", a.map(|v| v.to_string()).join(","));
        }
        if let Some(b) = self.coeff_b {
            let _ = writeln!(out, "b = {}", b.map(|v| v.to_string()).join(","));
        }
        if let Some(c) = self.coeff_c {
            let _ = writeln!(out, "c = {c}");
        }
        if let Some(f) = self.forcing {
            let _ = writeln!(out, "forcing = {f}");
        }
        if let Some(g) = self.dirichlet {
            let _ = writeln!(out, "dirichlet = {g}");
        }
        let _ = writeln!(out, "\n[mesh]");
        let _ = writeln!(out, "spec = {}", self.mesh);
        let _ = writeln!(out, "degree = {}", self.degree);
        let _ = writeln!(out, "\n[time]");
        let _ = writeln!(out, "order = {}", self.order);
        let _ = writeln!(out, "dt = {}", self.dt);
        let _ = writeln!(out, "steps = {}", self.steps);
        if !self.snapshots.is_empty() {
            let snaps: Vec<String> = self.snapshots.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "snapshots = {}", snaps.join(","));
        }
        let _ = writeln!(out, "\n[output]");
        let _ = writeln!(out, "dir = {}", self.output_dir.display());
        let _ = writeln!(out, "\n[run]");
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "threads = {}", self.threads);
        let _ = writeln!(out, "regularization = {}", self.regularization.as_str());
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.mesh.is_empty() {
            return Err(CliError::config("missing required key: [mesh] spec"));
        }
        if self.degree == 0 {
            return Err(CliError::config("missing required key: [mesh] degree"));
        }
        if !(1..=4).contains(&self.order) {
            return Err(CliError::config(format!(
                "[time] order must be 1..4, got {}",
                self.order
            )));
        }
        if !(self.dt > 0.0) {
            return Err(CliError::config(format!("[time] dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}
