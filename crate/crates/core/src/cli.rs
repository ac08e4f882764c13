//! Problem files and the batch front end behind the `philap` binary.
//!
//! A problem file is a JSON document:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "T": 5, "N": 1,
//!   "phi": { "kind": "relativistic", "a": 1.0 },
//!   "law": { "name": "periodic" },
//!   "problem": { "kind": "q_linear", "h": [[0.0], [0.0], [0.0], [0.0], [0.0]] }
//! }
//! ```
//!
//! `h` arrays have `T` rows of `N` entries. An optional `options` object
//! holds `solve` and `homotopy` overrides.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::boundary_laws::{BoundaryLaw, LawDescriptor};
use crate::convex_core::{self, SolveOptions, SolveReport};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, InteriorFunction};
use crate::nonpotential::{self, HomotopyOptions, NonlinearField};
use crate::phi_maps::PhiMap;
use crate::variational::{self, EnergyReport, PotentialField, ReducedSample};
use crate::verify::{self, Problem, ResidualReport};

pub const SCHEMA_VERSION: u32 = 1;

/// Default number of instance pairs for `verify --batch` when none is given.
pub const DEFAULT_BATCH: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiName {
    Relativistic,
    PRelativistic,
    DoublePhase,
}

/// Catalog φ as written in a problem file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiDescriptor {
    pub kind: PhiName,
    pub a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

impl PhiDescriptor {
    pub fn build(&self) -> Result<PhiMap> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Parse(format!("phi.{name} is required for {:?}", self.kind)))
        };
        let unexpected = |v: Option<f64>, name: &str| match v {
            Some(_) => Err(Error::Parse(format!("phi.{name} is not used by {:?}", self.kind))),
            None => Ok(()),
        };
        match self.kind {
            PhiName::Relativistic => {
                unexpected(self.p, "p")?;
                unexpected(self.q, "q")?;
                PhiMap::relativistic(self.a)
            }
            PhiName::PRelativistic => {
                unexpected(self.q, "q")?;
                PhiMap::p_relativistic(need(self.p, "p")?, self.a)
            }
            PhiName::DoublePhase => PhiMap::double_phase(need(self.p, "p")?, need(self.q, "q")?, self.a),
        }
    }
}

/// Right-hand side of the system.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemKind {
    /// `-Δ[φ(Δu(n-1))] + u(n) = h(n)`.
    QLinear { h: Vec<Vec<f64>> },
    /// `-Δ[φ(Δu(n-1))] = f(n, u)`.
    Nonpotential { f: NonlinearField },
    /// `-Δ[φ(Δu(n-1))] = ∇F(n, u(n)) + h(n)`.
    Potential { field: PotentialField, h: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptionsSpec {
    pub solve: SolveOptions,
    pub homotopy: HomotopyOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub schema_version: u32,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "N")]
    pub dim: usize,
    pub phi: PhiDescriptor,
    pub law: LawDescriptor,
    pub problem: ProblemKind,
    #[serde(default)]
    pub options: OptionsSpec,
}

impl PartialEq for ProblemSpec {
    fn eq(&self, other: &Self) -> bool {
        // parsed specs never hold the closure-backed variants, so the JSON
        // form is a faithful comparison key
        serde_json::to_value(self).ok() == serde_json::to_value(other).ok()
    }
}

/// Objects assembled from a validated spec.
pub struct Assembled {
    pub phi: PhiMap,
    pub law: BoundaryLaw,
    /// `h` for `q_linear` and `potential` problems.
    pub h: Option<InteriorFunction>,
}

fn forcing(h: &[Vec<f64>], dim: usize, horizon: usize) -> Result<InteriorFunction> {
    if h.len() != horizon {
        return Err(Error::Dimension(format!("problem.h has {} rows, expected T = {horizon}", h.len())));
    }
    if let Some((n, row)) = h.iter().enumerate().find(|(_, r)| r.len() != dim) {
        return Err(Error::Dimension(format!(
            "problem.h row {} has {} entries, expected N = {dim}",
            n + 1,
            row.len()
        )));
    }
    InteriorFunction::from_rows(h)
}

impl ProblemSpec {
    /// Builds φ, the law and the forcing, applying every dimension check.
    pub fn assemble(&self) -> Result<Assembled> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.horizon == 0 || self.dim == 0 {
            return Err(Error::Dimension("T and N must be positive".into()));
        }
        let phi = self.phi.build()?;
        let sigma = (self.horizon as f64 + 1.0) * phi.radius();
        let law = self.law.build(self.dim, Some(sigma))?;
        self.options.solve.validate()?;
        self.options.homotopy.validate()?;
        let h = match &self.problem {
            ProblemKind::QLinear { h } => Some(forcing(h, self.dim, self.horizon)?),
            ProblemKind::Nonpotential { f } => {
                let (n, t) = f.validate()?;
                if (n, t) != (self.dim, self.horizon) {
                    return Err(Error::Dimension(format!(
                        "field is defined for N = {n}, T = {t} but the spec has N = {}, T = {}",
                        self.dim, self.horizon
                    )));
                }
                None
            }
            ProblemKind::Potential { field, h } => {
                field.validate(self.dim, self.horizon)?;
                Some(forcing(h, self.dim, self.horizon)?)
            }
        };
        Ok(Assembled { phi, law, h })
    }
}

/// Strict parse: unknown fields, a wrong schema version and every dimension
/// mismatch are errors.
pub fn parse_problem(text: &str) -> Result<ProblemSpec> {
    let spec: ProblemSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    spec.assemble()?;
    Ok(spec)
}

/// Pretty JSON that [`parse_problem`] reads back to an equal spec.
pub fn emit_problem(spec: &ProblemSpec) -> Result<String> {
    serde_json::to_string_pretty(spec).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Solve,
    EnergyMin,
    Saddle,
    Lambda1,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::EnergyMin => "energy-min",
            Self::Saddle => "saddle",
            Self::Lambda1 => "lambda1",
            Self::Verify => "verify",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "solve" => Self::Solve,
            "energy-min" => Self::EnergyMin,
            "saddle" => Self::Saddle,
            "lambda1" => Self::Lambda1,
            "verify" => Self::Verify,
            other => {
                return Err(Error::Parse(format!(
                    "unknown command {other:?}; expected solve, energy-min, saddle, lambda1 or verify"
                )))
            }
        })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    /// Directory receiving the artifacts; nothing is written when `None`.
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    /// Instance pairs for the randomized estimate checks of `verify`.
    pub batch: Option<usize>,
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub certified: bool,
    pub report: Value,
    pub solution: Option<GridFunction>,
    pub reduced_curve: Option<Vec<ReducedSample>>,
    /// One-line human summary printed by the binary.
    pub summary: String,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.certified {
            0
        } else {
            1
        }
    }

    /// Writes `solution.csv`, `report.json` and, when present,
    /// `reduced_curve.csv` into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        if let Some(u) = &self.solution {
            u.write_csv(fs::File::create(dir.join("solution.csv"))?)?;
        }
        let mut report = fs::File::create(dir.join("report.json"))?;
        let text = serde_json::to_string_pretty(&self.report).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(report, "{text}")?;
        if let Some(curve) = &self.reduced_curve {
            write_curve(curve, fs::File::create(dir.join("reduced_curve.csv"))?)?;
        }
        Ok(())
    }
}

fn write_curve<W: Write>(curve: &[ReducedSample], mut out: W) -> Result<()> {
    let dim = curve.first().map_or(0, |s| s.mean.len());
    let header: Vec<String> = (1..=dim).map(|i| format!("mean_{i}")).chain(["value".to_string()]).collect();
    writeln!(out, "{}", header.join(","))?;
    for s in curve {
        let row: Vec<String> = s.mean.iter().chain([&s.value]).map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn unwrap_report(r: Result<SolveReport>) -> Result<SolveReport> {
    match r {
        Err(Error::NotConverged(report)) => Ok(*report),
        other => other,
    }
}

struct Solved {
    converged: bool,
    solution: GridFunction,
    solver: Value,
    residuals: ResidualReport,
    curve: Option<Vec<ReducedSample>>,
}

fn certify(converged: bool, residuals: &ResidualReport, tol: f64) -> bool {
    converged && residuals.passes(tol)
}

fn from_energy(report: EnergyReport, phi: &PhiMap, law: &BoundaryLaw, field: &PotentialField, h: &InteriorFunction) -> Solved {
    let residuals = verify::residual_report(phi, law, Problem::Potential { field, h }, &report.point, None);
    Solved {
        converged: report.converged,
        solution: report.point.clone(),
        curve: report.reduced_curve.clone(),
        solver: to_value(&report),
        residuals,
    }
}

fn from_solve(report: SolveReport, residuals: ResidualReport) -> Solved {
    Solved {
        converged: report.converged,
        solution: report.solution.clone(),
        solver: to_value(&report),
        residuals,
        curve: None,
    }
}

fn incompatible(command: Command, kind: &str) -> Error {
    Error::Precondition(format!("command {command} cannot be used with a {kind} problem"))
}

fn run_solver(command: Command, spec: &ProblemSpec, parts: &Assembled, opts: &SolveOptions) -> Result<Solved> {
    let (phi, law) = (&parts.phi, &parts.law);
    match (&spec.problem, command) {
        (ProblemKind::QLinear { .. }, Command::Solve | Command::Verify) => {
            let h = parts.h.as_ref().expect("assembled forcing");
            let report = unwrap_report(convex_core::solve_q_general(phi, law, h, opts))?;
            let residuals = verify::residual_report(phi, law, Problem::Regularized(h), &report.solution, None);
            Ok(from_solve(report, residuals))
        }
        (ProblemKind::Nonpotential { f }, Command::Solve | Command::Verify) => {
            let report = unwrap_report(nonpotential::picard_solve(phi, law, f, opts, &spec.options.homotopy))?;
            let residuals = verify::residual_report(phi, law, Problem::Field(f), &report.solution, None);
            Ok(from_solve(report, residuals))
        }
        (ProblemKind::Potential { field, .. }, Command::EnergyMin | Command::Solve | Command::Verify) => {
            let h = parts.h.as_ref().expect("assembled forcing");
            Ok(from_energy(variational::minimize_energy(phi, law, field, h, opts)?, phi, law, field, h))
        }
        (ProblemKind::Potential { field, .. }, Command::Saddle) => {
            let h = parts.h.as_ref().expect("assembled forcing");
            Ok(from_energy(variational::saddle_search(phi, law, field, h, opts)?, phi, law, field, h))
        }
        _ => unreachable!("rejected by check_compatible"),
    }
}

/// Runs `command` on `spec`. Solver failures are folded into an uncertified
/// outcome carrying the error message; only malformed specs and
/// incompatible commands are errors.
pub fn run(spec: &ProblemSpec, command: Command, config: &RunConfig) -> Result<RunOutcome> {
    let parts = spec.assemble()?;
    let mut opts = spec.options.solve.clone();
    if let Some(seed) = config.seed {
        opts.seed = seed;
    }
    if let Some(tol) = config.tol {
        opts.tol_residual = tol;
    }
    opts.validate()?;
    check_compatible(spec, command)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;
    let outcome = pool.install(|| run_inner(spec, &parts, command, config, &opts))?;
    if let Some(dir) = &config.out {
        outcome.write_artifacts(dir)?;
    }
    Ok(outcome)
}

fn run_inner(spec: &ProblemSpec, parts: &Assembled, command: Command, config: &RunConfig, opts: &SolveOptions) -> Result<RunOutcome> {
    let tol = opts.tol_residual;
    let mut report = serde_json::Map::new();
    report.insert("command".into(), json!(command.name()));
    report.insert("seed".into(), json!(opts.seed));
    report.insert("tol".into(), json!(tol));

    if command == Command::Lambda1 {
        let outcome = variational::lambda1_estimate(parts.phi.radius(), &parts.law, spec.horizon, spec.dim, opts);
        let (certified, summary) = match &outcome {
            Ok(est) => {
                report.insert("lambda1".into(), to_value(est));
                (true, format!("lambda1 = {:.15}", est.value))
            }
            Err(e) => {
                report.insert("error".into(), json!(e.to_string()));
                (false, format!("lambda1 failed: {e}"))
            }
        };
        report.insert("certified".into(), json!(certified));
        return Ok(RunOutcome {
            certified,
            report: Value::Object(report),
            solution: outcome.ok().map(|e| e.minimizer),
            reduced_curve: None,
            summary,
        });
    }

    let solved = match run_solver(command, spec, parts, opts) {
        Ok(s) => s,
        Err(e) => return Ok(failed(report, e)),
    };
    let mut certified = certify(solved.converged, &solved.residuals, tol);
    report.insert("solver".into(), solved.solver);
    report.insert("residuals".into(), to_value(&solved.residuals));
    let mut summary = format!(
        "{command}: interior {:.3e}, boundary {:.3e}, margin {:.3e}",
        solved.residuals.interior_inf_norm, solved.residuals.boundary_residual, solved.residuals.feasibility_margin
    );

    if command == Command::Verify {
        let l1 = variational::lambda1_estimate(parts.phi.radius(), &parts.law, spec.horizon, spec.dim, opts).ok();
        let problem = match &spec.problem {
            ProblemKind::QLinear { .. } => Problem::Regularized(parts.h.as_ref().expect("assembled forcing")),
            ProblemKind::Nonpotential { f } => Problem::Field(f),
            ProblemKind::Potential { field, .. } => Problem::Potential {
                field,
                h: parts.h.as_ref().expect("assembled forcing"),
            },
        };
        let with_l1 = verify::residual_report(&parts.phi, &parts.law, problem, &solved.solution, l1.as_ref().map(|e| e.value));
        certified &= with_l1.passes(tol);
        report.insert("residuals".into(), to_value(&with_l1));
        if let Some(e) = &l1 {
            report.insert("lambda1".into(), to_value(e));
        }
        if let Some(batch) = config.batch {
            let batch = if batch == 0 { DEFAULT_BATCH } else { batch };
            let s = verify::check_estimates(&parts.phi, &parts.law, batch, opts.seed);
            certified &= s.passed();
            summary.push_str(&format!("; batch {batch}: {} violations, {} failures", s.violations, s.failures.len()));
            report.insert("estimates".into(), to_value(&s));
        }
    }
    report.insert("certified".into(), json!(certified));
    summary.push_str(if certified { "; certified" } else { "; NOT certified" });
    Ok(RunOutcome {
        certified,
        report: Value::Object(report),
        solution: Some(solved.solution),
        reduced_curve: solved.curve,
        summary,
    })
}

/// `energy-min` and `saddle` need a potential problem; `solve` and
/// `verify` accept every kind, `lambda1` ignores the problem.
pub fn check_compatible(spec: &ProblemSpec, command: Command) -> Result<()> {
    match (&spec.problem, command) {
        (ProblemKind::Potential { .. }, _) | (_, Command::Solve | Command::Verify | Command::Lambda1) => Ok(()),
        (ProblemKind::QLinear { .. }, _) => Err(incompatible(command, "q_linear")),
        (ProblemKind::Nonpotential { .. }, _) => Err(incompatible(command, "nonpotential")),
    }
}

fn failed(mut report: serde_json::Map<String, Value>, e: Error) -> RunOutcome {
    let summary = format!("solver failed: {e}");
    if let Error::NotConverged(r) = &e {
        report.insert("solver".into(), to_value(r.as_ref()));
    }
    report.insert("error".into(), json!(e.to_string()));
    report.insert("certified".into(), json!(false));
    RunOutcome {
        certified: false,
        report: Value::Object(report),
        solution: None,
        reduced_curve: None,
        summary,
    }
}
