//! Energy methods for the potential system
//!
//! ```text
//! -Δ[φ(Δu(n-1))] = ∇F(n, u(n)) + h(n),    (φ(Δu(0)), -φ(Δu(T))) ∈ ∂j(u(0), u(T+1))
//! ```
//!
//! with `j = G + I_K`. Critical points of
//! `𝓔_h(u) = Σ Φ(Δu) + j(u(0), u(T+1)) - Σ F(n, u(n)) - Σ ⟨h(n)|u(n)⟩`
//! solve the system, so every result here is certified by residuals.
//! Minimizers come from a multi-start descent, saddle points from the
//! mean/oscillation splitting: an inner minimization over functions with a
//! prescribed mean and an outer maximization over the mean.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boundary_laws::{BoundaryLaw, BoundaryPotential, ConvexSet, LawRepr};
use crate::convex_core::{self, SolveOptions};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, InteriorFunction};
use crate::optim::{self, Constraint, OptimOptions, OptimOutcome};
use crate::phi_maps::PhiMap;
use crate::vecops::{compensated_sum, dot, norm};

/// Value, gradient and optional Hessian of a custom potential.
pub type PotentialFn = Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>;
pub type PotentialGradFn = Arc<dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync>;

/// A host-supplied `F(n, v)`; the Hessian is taken by central differences
/// of the gradient.
#[derive(Clone)]
pub struct CustomPotential {
    pub value: PotentialFn,
    pub gradient: PotentialGradFn,
    /// Periods `ω_i` when `F(n, ·)` is periodic in every coordinate.
    pub periods: Option<Vec<f64>>,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential").field("periods", &self.periods).finish_non_exhaustive()
    }
}

/// The potential `F(n, v)`, normalized so that `F(n, 0) = 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialField {
    /// `b(n)|v|^{α+1}/(α+1) + c(n) Σ ν_i (1 - cos v_i)`, whose gradient is
    /// `b(n)|v|^{α-1}v + c(n)(ν_i sin v_i)_i`.
    PowerSin { alpha: f64, b: Vec<f64>, c: Vec<f64>, nu: Vec<f64> },
    /// `c(n) Σ ν_i (1 - cos(2π v_i / ω_i))`, periodic with period `ω_i` in `v_i`.
    PeriodicMulti { c: Vec<f64>, nu: Vec<f64>, omega: Vec<f64> },
    /// `ε|v|²`.
    Quadratic { eps: f64 },
    #[serde(skip)]
    Custom(CustomPotential),
}

impl PotentialField {
    pub fn power_sin(alpha: f64, b: Vec<f64>, c: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        let field = Self::PowerSin { alpha, b, c, nu };
        field.check_params()?;
        Ok(field)
    }

    pub fn periodic_multi(c: Vec<f64>, nu: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        let field = Self::PeriodicMulti { c, nu, omega };
        field.check_params()?;
        Ok(field)
    }

    pub fn quadratic(eps: f64) -> Result<Self> {
        let field = Self::Quadratic { eps };
        field.check_params()?;
        Ok(field)
    }

    pub fn custom(custom: CustomPotential) -> Self {
        Self::Custom(custom)
    }

    fn check_params(&self) -> Result<()> {
        let finite = |v: &[f64], what: &'static str| {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::NonFinite(what))
            }
        };
        match self {
            Self::PowerSin { alpha, b, c, nu } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
                }
                if b.len() != c.len() {
                    return Err(Error::Dimension(format!(
                        "b has {} entries but c has {}",
                        b.len(),
                        c.len()
                    )));
                }
                finite(b, "b")?;
                finite(c, "c")?;
                finite(nu, "nu")
            }
            Self::PeriodicMulti { c, nu, omega } => {
                if nu.len() != omega.len() {
                    return Err(Error::Dimension("nu and omega lengths differ".into()));
                }
                if omega.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                    return Err(Error::Domain("every period must be positive".into()));
                }
                finite(c, "c")?;
                finite(nu, "nu")
            }
            Self::Quadratic { eps } => finite(&[*eps], "eps"),
            Self::Custom(_) => Ok(()),
        }
    }

    /// Checks the coefficient sequences against the grid shape.
    pub fn validate(&self, dim: usize, horizon: usize) -> Result<()> {
        self.check_params()?;
        let (coeffs, per_coord) = match self {
            Self::PowerSin { c, nu, .. } => (Some(c.len()), Some(nu.len())),
            Self::PeriodicMulti { c, nu, .. } => (Some(c.len()), Some(nu.len())),
            Self::Custom(p) => (None, p.periods.as_ref().map(Vec::len)),
            Self::Quadratic { .. } => (None, None),
        };
        if let Some(len) = coeffs {
            if len != horizon {
                return Err(Error::Dimension(format!("coefficient sequences need T = {horizon} entries, got {len}")));
            }
        }
        if let Some(len) = per_coord {
            if len != dim {
                return Err(Error::Dimension(format!("per-coordinate parameters need N = {dim} entries, got {len}")));
            }
        }
        Ok(())
    }

    /// Periods in each coordinate when `F(n, ·)` is periodic.
    pub fn periods(&self) -> Option<Vec<f64>> {
        match self {
            Self::PowerSin { b, nu, .. } if b.iter().all(|v| *v == 0.0) => Some(vec![TAU; nu.len()]),
            Self::PeriodicMulti { omega, .. } => Some(omega.clone()),
            Self::Custom(p) => p.periods.clone(),
            _ => None,
        }
    }

    /// `F(n, v)` for `n = 1..T`.
    pub fn value(&self, n: usize, v: &[f64]) -> f64 {
        match self {
            Self::PowerSin { alpha, b, c, nu } => {
                let r = norm(v);
                let cos_part: f64 = nu.iter().zip(v).map(|(w, x)| w * (1.0 - x.cos())).sum();
                b[n - 1] * r.powf(alpha + 1.0) / (alpha + 1.0) + c[n - 1] * cos_part
            }
            Self::PeriodicMulti { c, nu, omega } => {
                let s: f64 = (0..v.len()).map(|i| nu[i] * (1.0 - (TAU * v[i] / omega[i]).cos())).sum();
                c[n - 1] * s
            }
            Self::Quadratic { eps } => eps * dot(v, v),
            Self::Custom(p) => (p.value)(n, v),
        }
    }

    pub fn gradient(&self, n: usize, v: &[f64]) -> Vec<f64> {
        match self {
            Self::PowerSin { alpha, b, c, nu } => {
                let r = norm(v);
                let radial = if r > 0.0 { b[n - 1] * r.powf(alpha - 1.0) } else { 0.0 };
                (0..v.len()).map(|i| radial * v[i] + c[n - 1] * nu[i] * v[i].sin()).collect()
            }
            Self::PeriodicMulti { c, nu, omega } => (0..v.len())
                .map(|i| c[n - 1] * nu[i] * TAU / omega[i] * (TAU * v[i] / omega[i]).sin())
                .collect(),
            Self::Quadratic { eps } => v.iter().map(|x| 2.0 * eps * x).collect(),
            Self::Custom(p) => (p.gradient)(n, v),
        }
    }

    /// `∇²F(n, v) d`.
    pub fn hessian_apply(&self, n: usize, v: &[f64], d: &[f64]) -> Vec<f64> {
        match self {
            Self::PowerSin { alpha, b, c, nu } => {
                // b(|v|^{α-1} d + (α-1)|v|^{α-3} ⟨v|d⟩ v); the origin is regularized for α < 1
                let r = norm(v).max(if *alpha < 1.0 { 1e-12 } else { 0.0 });
                let (s1, s2) = if r > 0.0 {
                    (r.powf(alpha - 1.0), (alpha - 1.0) * r.powf(alpha - 3.0) * dot(v, d))
                } else if *alpha == 1.0 {
                    (1.0, 0.0)
                } else {
                    (0.0, 0.0)
                };
                (0..v.len())
                    .map(|i| b[n - 1] * (s1 * d[i] + s2 * v[i]) + c[n - 1] * nu[i] * v[i].cos() * d[i])
                    .collect()
            }
            Self::PeriodicMulti { c, nu, omega } => (0..v.len())
                .map(|i| {
                    let k = TAU / omega[i];
                    c[n - 1] * nu[i] * k * k * (k * v[i]).cos() * d[i]
                })
                .collect(),
            Self::Quadratic { eps } => d.iter().map(|x| 2.0 * eps * x).collect(),
            Self::Custom(p) => {
                let scale = norm(d);
                if scale == 0.0 {
                    return vec![0.0; d.len()];
                }
                let eps = 1e-6 * (1.0 + norm(v)) / scale;
                let plus: Vec<f64> = v.iter().zip(d).map(|(a, b)| a + eps * b).collect();
                let minus: Vec<f64> = v.iter().zip(d).map(|(a, b)| a - eps * b).collect();
                let gp = (p.gradient)(n, &plus);
                let gm = (p.gradient)(n, &minus);
                gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect()
            }
        }
    }
}

/// What a returned critical point is known to be.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Minimizer,
    SaddleCandidate,
}

/// One sample `m(x̄)` of the reduced function.
#[derive(Clone, Debug, Serialize)]
pub struct ReducedSample {
    pub mean: Vec<f64>,
    pub value: f64,
}

/// Energies `𝓔(u + t·e)` along a constant direction `e`.
#[derive(Clone, Debug, Serialize)]
pub struct DescentWitness {
    pub direction: Vec<f64>,
    pub samples: Vec<(f64, f64)>,
    /// The last sample lies strictly below the energy at the critical point
    /// and the tail of the samples decreases.
    pub decreasing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    #[serde(skip)]
    pub point: GridFunction,
    pub energy: f64,
    pub kind: CriticalKind,
    pub interior_residual: f64,
    pub boundary_residual: f64,
    pub feasibility_margin: f64,
    pub strip_check: bool,
    pub iterations: usize,
    pub converged: bool,
    pub status: String,
    pub reduced_curve: Option<Vec<ReducedSample>>,
    pub witness: Option<DescentWitness>,
    /// Mean of the point after folding into `Π[0, ω_i)`, when folding applied.
    pub folded_mean: Option<Vec<f64>>,
}

/// `max_n |-Δ[φ(Δu(n-1))] - ∇F(n, u(n)) - h(n)|`.
pub fn potential_interior_residual(phi: &PhiMap, field: &PotentialField, h: &InteriorFunction, u: &GridFunction) -> f64 {
    convex_core::equation_residual(phi, u, |n| {
        field.gradient(n, u.at(n)).iter().zip(h.at(n)).map(|(a, b)| a + b).collect()
    })
}

fn subdiff_parts(law: &BoundaryLaw) -> Result<(&BoundaryPotential, &ConvexSet)> {
    match law.repr() {
        LawRepr::Subdifferential { potential, set } => Ok((potential, set)),
        LawRepr::LinearMatrix { .. } => Err(Error::Precondition(
            "energy methods need a subdifferential boundary law".into(),
        )),
    }
}

fn check_shapes(law: &BoundaryLaw, field: &PotentialField, h: &InteriorFunction) -> Result<()> {
    if law.dim() != h.dim() {
        return Err(Error::Dimension(format!(
            "law acts on R^{} but the forcing has dimension {}",
            law.dim(),
            h.dim()
        )));
    }
    field.validate(h.dim(), h.horizon())
}

/// `𝓔_h(u)`, or `+∞` off the domain. Boundary pairs within `1e-12` of `K`
/// count as feasible.
pub fn energy_value(phi: &PhiMap, law: &BoundaryLaw, field: &PotentialField, h: &InteriorFunction, u: &GridFunction) -> Result<f64> {
    let (potential, set) = subdiff_parts(law)?;
    check_shapes(law, field, h)?;
    if !u.same_shape(&GridFunction::zeros(h.dim(), h.horizon())?) {
        return Err(Error::Dimension("grid function shape does not match the forcing".into()));
    }
    let z = u.boundary_pair().to_vec();
    if !set.contains(&z, 1e-12) {
        return Ok(f64::INFINITY);
    }
    let mut terms = Vec::with_capacity(3 * h.horizon() + 3);
    for k in 0..=u.horizon() {
        match phi.potential(&u.diff(k)) {
            Ok(v) => terms.push(v),
            Err(_) => return Ok(f64::INFINITY),
        }
    }
    terms.push(potential.value(&z));
    for n in 1..=u.horizon() {
        terms.push(-field.value(n, u.at(n)));
        terms.push(-dot(h.at(n), u.at(n)));
    }
    Ok(compensated_sum(terms))
}

fn model<'a>(
    phi: &'a PhiMap,
    potential: &'a BoundaryPotential,
    field: &'a PotentialField,
    h: &'a InteriorFunction,
) -> EnergyModel<'a> {
    EnergyModel {
        phi,
        dim: h.dim(),
        horizon: h.horizon(),
        quad_weight: 0.0,
        forcing: Some(h),
        boundary: Some(potential),
        field: Some(field),
        barrier: 0.0,
    }
}

fn grid_mean(x: &[f64], dim: usize) -> Vec<f64> {
    let count = (x.len() / dim) as f64;
    (0..dim).map(|i| x.iter().skip(i).step_by(dim).sum::<f64>() / count).collect()
}

fn shift(x: &mut [f64], delta: &[f64]) {
    for row in x.chunks_mut(delta.len()) {
        for (v, s) in row.iter_mut().zip(delta) {
            *v += s;
        }
    }
}

/// Shifts every coordinate by a multiple of its period so the mean lands in `Π[0, ω_i)`.
fn fold(x: &mut [f64], periods: &[f64]) -> Vec<f64> {
    let mean = grid_mean(x, periods.len());
    let delta: Vec<f64> = mean.iter().zip(periods).map(|(m, w)| -(m / w).floor() * w).collect();
    shift(x, &delta);
    grid_mean(x, periods.len())
}

fn report(
    phi: &PhiMap,
    law: &BoundaryLaw,
    field: &PotentialField,
    h: &InteriorFunction,
    x: Vec<f64>,
    energy: f64,
    kind: CriticalKind,
    iterations: usize,
    tol: f64,
) -> EnergyReport {
    let u = GridFunction::from_flat_unchecked(h.dim(), h.horizon(), x);
    let interior = potential_interior_residual(phi, field, h, &u);
    let base = convex_core::build_report(phi, law, u, interior, iterations, Some(energy), tol);
    EnergyReport {
        point: base.solution,
        energy,
        kind,
        interior_residual: base.interior_residual,
        boundary_residual: base.boundary_residual,
        feasibility_margin: base.feasibility_margin,
        strip_check: base.strip_check,
        iterations,
        converged: base.converged,
        status: base.status,
        reduced_curve: None,
        witness: None,
        folded_mean: None,
    }
}

/// Number of descent starts in [`minimize_energy`]: the zero function (or
/// the nearest feasible point) plus random feasible points.
pub const DEFAULT_STARTS: usize = 8;

/// Multi-start minimization of `𝓔_h`. For periodic potentials with
/// `Σ h(n) = 0` and a shift-invariant law the mean of every start and of
/// the result is folded into `Π[0, ω_i)`. Returns the lowest certified
/// minimizer, or the lowest point found with `converged = false`.
/// Barrier weights along the central path, largest first.
const BARRIER_PATH: [f64; 6] = [1.0, 1e-1, 1e-2, 1e-4, 1e-6, 1e-8];
const BARRIER_STAGE_ITERS: usize = 500;

/// Warm start for the descent: minimizers of the energy plus a shrinking
/// logarithmic barrier. When the minimizer sits very close to `|Δu| = a`
/// a plain descent reaches the edge early and then crawls along it, while
/// the barrier keeps every stage well inside the domain.
fn follow_barrier(model: &EnergyModel, constraint: &Constraint, start: &[f64], opts: &OptimOptions) -> (Vec<f64>, usize) {
    let mut x = start.to_vec();
    let mut iterations = 0;
    for mu in BARRIER_PATH {
        let staged = EnergyModel { barrier: mu, ..*model };
        let stage_opts = OptimOptions {
            tol: (1e-2 * mu).max(opts.tol),
            max_iters: opts.max_iters.min(BARRIER_STAGE_ITERS),
            ..*opts
        };
        let out = optim::minimize(&staged, constraint, &x, &stage_opts, None);
        iterations += out.iterations;
        if out.value.is_finite() {
            x = out.x;
        }
    }
    (x, iterations)
}

pub fn minimize_energy(
    phi: &PhiMap,
    law: &BoundaryLaw,
    field: &PotentialField,
    h: &InteriorFunction,
    opts: &SolveOptions,
) -> Result<EnergyReport> {
    opts.validate()?;
    let (potential, set) = subdiff_parts(law)?;
    check_shapes(law, field, h)?;
    let (dim, horizon) = (h.dim(), h.horizon());
    let model = model(phi, potential, field, h);
    let constraint = Constraint::new(set, dim, horizon);

    let h_sum: Vec<f64> = h.mean();
    let folding = match field.periods() {
        Some(p) if norm(&h_sum) <= 1e-12 * (1.0 + h.sup_norm()) && law.is_shift_invariant() => Some(p),
        _ => None,
    };

    let zero = vec![0.0; model.len()];
    let first = constraint.project(&zero);
    let first = if model.margin(&first) > 0.0 {
        first
    } else {
        let z = constraint.boundary_of(&first);
        let n = horizon as f64 + 1.0;
        let mut line = vec![0.0; model.len()];
        for k in 0..horizon + 2 {
            for i in 0..dim {
                line[k * dim + i] = (1.0 - k as f64 / n) * z[i] + k as f64 / n * z[dim + i];
            }
        }
        let line = constraint.project(&line);
        if model.margin(&line) <= 0.0 {
            return Err(Error::Infeasible("no feasible starting point".into()));
        }
        line
    };
    let spread = match &folding {
        Some(p) => p.iter().cloned().fold(0.0, f64::max),
        None => 1.0 + h.sup_norm(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![first.clone()];
    for _ in 1..DEFAULT_STARTS {
        starts.push(convex_core::random_feasible(&model, &constraint, &first, &mut rng, spread));
    }

    let optim_opts = opts.optim(dim);
    let mut best: Option<(bool, OptimOutcome)> = None;
    let mut total = 0;
    for mut start in starts {
        if let Some(p) = &folding {
            fold(&mut start, p);
            start = constraint.project(&start);
        }
        let (start, stage_iters) = follow_barrier(&model, &constraint, &start, &optim_opts);
        let out = optim::minimize(&model, &constraint, &start, &optim_opts, None);
        total += stage_iters + out.iterations;
        if !out.value.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((conv, b)) => (out.converged && !conv) || (out.converged == *conv && out.value < b.value),
        };
        if better {
            best = Some((out.converged, out));
        }
    }
    let (_, mut out) = best.ok_or_else(|| Error::Infeasible("every start left the domain".into()))?;
    let folded_mean = folding.as_ref().map(|p| {
        let m = fold(&mut out.x, p);
        out.x = constraint.project(&out.x);
        m
    });
    let energy = model.value(&out.x);
    let mut rep = report(phi, law, field, h, out.x, energy, CriticalKind::Minimizer, total, opts.tol_residual);
    rep.folded_mean = folded_mean;
    if !out.converged && rep.converged {
        rep.status = format!(
            "residuals pass but descent hit the iteration cap (stationarity {:.3e})",
            out.stationarity
        );
    }
    Ok(rep)
}

/// Result of [`lambda1_estimate`].
#[derive(Clone, Debug, Serialize)]
pub struct Lambda1Estimate {
    pub value: f64,
    #[serde(skip)]
    pub minimizer: GridFunction,
    /// Rayleigh quotient of the witness `w#` (`w#(1) = (a/2)e₁`, zero elsewhere), always 2.
    pub witness_bound: f64,
}

/// Values below this are reported as exactly zero.
pub const LAMBDA1_CLAMP: f64 = 1e-12;
/// Threshold for deciding `λ₁ > 0`.
pub const LAMBDA1_POSITIVE: f64 = 1e-8;

struct Rayleigh<'a> {
    cone: &'a ConvexSet,
    dim: usize,
    horizon: usize,
}

impl Rayleigh<'_> {
    fn parts(&self, w: &[f64]) -> (f64, f64) {
        let d = self.dim;
        let num: f64 = (0..=self.horizon)
            .map(|k| (0..d).map(|i| (w[(k + 1) * d + i] - w[k * d + i]).powi(2)).sum::<f64>())
            .sum();
        let den: f64 = w[d..(self.horizon + 1) * d].iter().map(|v| v * v).sum();
        (num, den)
    }

    fn quotient(&self, w: &[f64]) -> f64 {
        let (num, den) = self.parts(w);
        num / den
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let (num, den) = self.parts(w);
        let r = num / den;
        let mut g = vec![0.0; w.len()];
        for k in 0..=self.horizon {
            for i in 0..d {
                let diff = w[(k + 1) * d + i] - w[k * d + i];
                g[k * d + i] -= 2.0 * diff / den;
                g[(k + 1) * d + i] += 2.0 * diff / den;
            }
        }
        for idx in d..(self.horizon + 1) * d {
            g[idx] -= 2.0 * r * w[idx] / den;
        }
        g
    }

    /// Projects the boundary pair onto the cone and normalizes `‖w‖_T = 1`.
    fn project(&self, w: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim;
        let right = (self.horizon + 1) * d;
        let z = self.cone.project(&[&w[..d], &w[right..]].concat());
        let mut out = w.to_vec();
        out[..d].copy_from_slice(&z[..d]);
        out[right..].copy_from_slice(&z[d..]);
        let (_, den) = self.parts(&out);
        if !(den > 1e-200) {
            return None;
        }
        let s = den.sqrt().recip();
        out.iter_mut().for_each(|v| *v *= s);
        Some(out)
    }

    /// Projected gradient with Barzilai–Borwein steps and backtracking.
    fn descend(&self, start: Vec<f64>, max_iters: usize) -> (Vec<f64>, f64) {
        let mut w = start;
        let mut r = self.quotient(&w);
        let mut g = self.gradient(&w);
        let mut step = 0.25;
        for _ in 0..max_iters {
            let mut accepted = None;
            let mut t = step;
            for _ in 0..60 {
                let trial: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - t * b).collect();
                if let Some(cand) = self.project(&trial) {
                    let rc = self.quotient(&cand);
                    if rc <= r {
                        accepted = Some((cand, rc));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((cand, rc)) = accepted else { break };
            let gc = self.gradient(&cand);
            let s: Vec<f64> = cand.iter().zip(&w).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
            let moved = norm(&s);
            let sy = dot(&s, &y);
            step = if sy > 0.0 { (dot(&s, &s) / sy).clamp(1e-6, 1e3) } else { (2.0 * t).min(1e3) };
            let drop = r - rc;
            w = cand;
            r = rc;
            g = gc;
            if moved <= 1e-13 || drop <= 1e-17 * (1.0 + r) && moved <= 1e-10 {
                break;
            }
        }
        (w, r)
    }
}

/// `λ₁ = inf Σ|Δw|² / ‖w‖_T²` over feasible `w` with nonzero interior.
/// Because the quotient is scale invariant and `D(j)` is a convex set
/// containing the origin, the boundary pair ranges over the cone generated
/// by `D(j)`.
pub fn lambda1_estimate(a: f64, law: &BoundaryLaw, horizon: usize, dim: usize, opts: &SolveOptions) -> Result<Lambda1Estimate> {
    let (_, set) = subdiff_parts(law)?;
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("radius must be positive, got {a}")));
    }
    if horizon == 0 || dim == 0 {
        return Err(Error::Dimension("T and N must be positive".into()));
    }
    if law.dim() != dim {
        return Err(Error::Dimension(format!("law acts on R^{} but N = {dim}", law.dim())));
    }
    let cone = set.cone_at_origin();
    let rq = Rayleigh { cone: &cone, dim, horizon };
    let len = (horizon + 2) * dim;

    let mut sharp = vec![0.0; len];
    sharp[dim] = 0.5 * a;
    let witness_bound = rq.quotient(&sharp);

    let mut starts = vec![rq.project(&sharp).expect("nonzero interior")];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..4 {
        let w: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Some(p) = rq.project(&w) {
            starts.push(p);
        }
    }
    // a smooth half-sine start sits close to the lowest mode for most laws
    let smooth: Vec<f64> = (0..len)
        .map(|k| (std::f64::consts::PI * (k / dim) as f64 / (horizon as f64 + 1.0)).sin())
        .collect();
    if let Some(p) = rq.project(&smooth) {
        starts.push(p);
    }

    let iters = opts.max_iters.min(200_000);
    let (mut w, mut value) = starts
        .into_iter()
        .map(|s| rq.descend(s, iters))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("at least one start");
    if value < LAMBDA1_CLAMP {
        value = 0.0;
    }
    let sup = (0..=horizon)
        .map(|k| norm(&(0..dim).map(|i| w[(k + 1) * dim + i] - w[k * dim + i]).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    if sup >= 0.5 * a {
        let s = 0.5 * a / sup;
        w.iter_mut().for_each(|v| *v *= s);
    }
    Ok(Lambda1Estimate {
        value,
        minimizer: GridFunction::from_flat_unchecked(dim, horizon, w),
        witness_bound,
    })
}

/// Minimizes `𝓔_h` over grid functions with the given mean, warm started.
fn inner_minimum(model: &EnergyModel, set: &ConvexSet, mean: &[f64], start: &[f64], tol: f64, max_iters: usize) -> OptimOutcome {
    let mut constraint = Constraint::new(set, model.dim, model.horizon);
    constraint.mean_pin = Some(mean.to_vec());
    let opts = optim::OptimOptions {
        tol,
        max_iters,
        step_safety: 0.99,
    };
    optim::minimize(model, &constraint, start, &opts, None)
}

/// Saddle search for laws with `j = 0` on the diagonal and `j` bounded on
/// `D(j)`. Maximizes the reduced function `m(x̄) = min{𝓔_h(u) : ū = x̄}` from
/// `x̄ = 0` with finite-difference ascent, then runs Newton on the
/// stationarity equations from the inner minimizer and certifies by residuals.
pub fn saddle_search(
    phi: &PhiMap,
    law: &BoundaryLaw,
    field: &PotentialField,
    h: &InteriorFunction,
    opts: &SolveOptions,
) -> Result<EnergyReport> {
    opts.validate()?;
    let (potential, set) = subdiff_parts(law)?;
    check_shapes(law, field, h)?;
    if !law.vanishes_on_diagonal() {
        return Err(Error::Precondition("j must vanish on the diagonal".into()));
    }
    if !law.bounded_on_domain() {
        return Err(Error::Precondition("j must be bounded on its domain".into()));
    }
    let (dim, horizon) = (h.dim(), h.horizon());
    let model = model(phi, potential, field, h);
    let inner_tol = 1e-10;
    let inner_iters = opts.max_iters.min(20_000);

    // the zero function is feasible because j vanishes on the diagonal
    let mut warm = vec![0.0; model.len()];
    let evaluate = |mean: &[f64], warm: &mut Vec<f64>| -> (f64, Vec<f64>, usize) {
        let out = inner_minimum(&model, set, mean, warm, inner_tol, inner_iters);
        if out.value.is_finite() {
            *warm = out.x.clone();
        }
        (out.value, out.x, out.iterations)
    };

    let mut xbar = vec![0.0; dim];
    let (mut m, mut inner_x, mut total) = evaluate(&xbar, &mut warm);
    let mut step = 1.0;
    for _ in 0..500 {
        let mut grad = vec![0.0; dim];
        for i in 0..dim {
            let delta = 1e-4 * (1.0 + norm(&xbar));
            let mut plus = xbar.clone();
            plus[i] += delta;
            let mut minus = xbar.clone();
            minus[i] -= delta;
            let mut w = warm.clone();
            let (mp, _, ip) = evaluate(&plus, &mut w);
            let mut w = warm.clone();
            let (mm, _, im) = evaluate(&minus, &mut w);
            total += ip + im;
            grad[i] = (mp - mm) / (2.0 * delta);
        }
        let gnorm = norm(&grad);
        if gnorm <= 1e-7 {
            break;
        }
        let mut moved = false;
        let mut t = step;
        for _ in 0..40 {
            let cand: Vec<f64> = xbar.iter().zip(&grad).map(|(x, g)| x + t * g).collect();
            let mut w = warm.clone();
            let (mc, xc, ic) = evaluate(&cand, &mut w);
            total += ic;
            if mc.is_finite() && mc >= m + 1e-4 * t * gnorm * gnorm {
                xbar = cand;
                m = mc;
                inner_x = xc;
                warm = w;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
        step = (2.0 * t).min(1e3);
    }

    let full = Constraint::new(set, dim, horizon);
    let polish = optim::find_stationary(&model, &full, &inner_x, &opts.optim(dim));
    total += polish.iterations;
    let x = if polish.value.is_finite() { polish.x } else { inner_x };
    let energy = model.value(&x);
    let mut rep = report(phi, law, field, h, x.clone(), energy, CriticalKind::SaddleCandidate, total, opts.tol_residual);

    let witness = descent_witness(&model, &full, &x, energy);
    let mut curve = Vec::new();
    let center = grid_mean(&x, dim);
    for s in -5..=5 {
        let mut mean = center.clone();
        mean[0] += 0.4 * s as f64;
        let mut w = x.clone();
        let (value, _, _) = evaluate(&mean, &mut w);
        curve.push(ReducedSample { mean, value });
    }
    rep.reduced_curve = Some(curve);
    if rep.converged && !witness.decreasing {
        rep.converged = false;
        rep.status = "critical point found but no constant descent direction".into();
    }
    rep.witness = Some(witness);
    Ok(rep)
}

/// Looks for a constant direction `e` along which `𝓔(u + t·e)` drops below `𝓔(u)`.
fn descent_witness(model: &EnergyModel, constraint: &Constraint, x: &[f64], energy: f64) -> DescentWitness {
    let dim = model.dim;
    let mut candidates = Vec::new();
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[i] = sign;
            candidates.push(e);
        }
    }
    let diag = (dim as f64).sqrt().recip();
    candidates.push(vec![diag; dim]);
    candidates.push(vec![-diag; dim]);

    let ts = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
    let mut fallback = None;
    for e in candidates {
        let samples: Vec<(f64, f64)> = ts
            .iter()
            .map(|&t| {
                let mut y = x.to_vec();
                shift(&mut y, &e.iter().map(|v| t * v).collect::<Vec<_>>());
                (t, model.value(&constraint.project(&y)))
            })
            .collect();
        let tail = &samples[samples.len() - 3..];
        let decreasing = samples.last().map_or(false, |s| s.1 < energy) && tail.windows(2).all(|p| p[1].1 < p[0].1);
        let witness = DescentWitness {
            direction: e,
            samples,
            decreasing,
        };
        if decreasing {
            return witness;
        }
        fallback.get_or_insert(witness);
    }
    fallback.expect("at least one direction")
}
