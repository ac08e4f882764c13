//! The regularized problem `[Q_γ(h)]`:
//!
//! ```text
//! -Δ[φ(Δu(n-1))] + u(n) = h(n)         n = 1..T
//! (φ(Δu(0)), -φ(Δu(T))) ∈ γ(u(0), u(T+1))
//! ```
//!
//! For `γ = ∂j` the solution is the unique minimizer of the strictly convex
//! energy `E(v) = Σ Φ(Δv) + j(v(0), v(T+1)) + ½‖v‖_T² - Σ⟨h|v⟩`. For matrix
//! laws the boundary pair is found as a zero of `γ + θ` by proximal-point
//! iterations, where `θ` maps Dirichlet data to the boundary fluxes of the
//! Dirichlet solution; a Newton polish on the full grid system finishes the
//! job.

use nalgebra::{DMatrix, DVector, LU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anderson::Anderson;
use crate::boundary_laws::{BoundaryLaw, LawRepr};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::grid::{BoundaryPair, GridFunction, InteriorFunction};
use crate::optim::{self, Constraint, OptimOptions};
use crate::phi_maps::PhiMap;
use crate::vecops::{dist, norm};

/// Solver controls shared by every solver in the crate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Required bound on both the equation and the boundary residual.
    pub tol_residual: f64,
    pub max_iters: usize,
    /// Fraction of the largest step that keeps every `|Δu| < a`.
    pub step_safety: f64,
    pub prox_point_lambda: f64,
    pub seed: u64,
    /// Start from a random feasible point drawn from `seed` instead of the
    /// canonical start.
    pub random_start: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_iters: 100_000,
            step_safety: 0.99,
            prox_point_lambda: 1.0,
            seed: 0,
            random_start: false,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0 && self.tol_residual.is_finite()) {
            return Err(Error::Domain(format!("tol_residual must be positive, got {}", self.tol_residual)));
        }
        if self.max_iters == 0 {
            return Err(Error::Domain("max_iters must be positive".into()));
        }
        if !(self.step_safety > 0.0 && self.step_safety < 1.0) {
            return Err(Error::Domain(format!("step_safety must lie in (0, 1), got {}", self.step_safety)));
        }
        if !(self.prox_point_lambda > 0.0 && self.prox_point_lambda.is_finite()) {
            return Err(Error::Domain(format!(
                "prox_point_lambda must be positive, got {}",
                self.prox_point_lambda
            )));
        }
        Ok(())
    }

    pub(crate) fn optim(&self, dim: usize) -> OptimOptions {
        OptimOptions {
            // the stationarity measure bounds both residuals up to a √(2N) factor
            tol: 0.1 * self.tol_residual / (2.0 * dim as f64).sqrt(),
            max_iters: self.max_iters,
            step_safety: self.step_safety,
        }
    }
}

/// A candidate solution with its certificates.
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub solution: GridFunction,
    /// `max_n` of the equation defect over `n = 1..T`.
    pub interior_residual: f64,
    /// Law residual at `((u(0), u(T+1)), (φ(Δu(0)), -φ(Δu(T))))`.
    pub boundary_residual: f64,
    /// `a - sup |Δu|`.
    pub feasibility_margin: f64,
    /// `|u(0) - u(T+1)| < (T+1)a`.
    pub strip_check: bool,
    pub iterations: usize,
    pub energy: Option<f64>,
    pub converged: bool,
    pub status: String,
    /// `‖u - 𝒮(u)‖_{T+2}` for fixed-point solvers.
    pub fixed_point_gap: Option<f64>,
}

/// `-Δ[φ(Δu(n-1))] = φ(Δu(n-1)) - φ(Δu(n))` for `n = 1..T`, or `None`
/// when `sup |Δu| ≥ a`.
pub(crate) fn laplacian_term(phi: &PhiMap, u: &GridFunction) -> Option<Vec<Vec<f64>>> {
    if u.sup_diff() >= phi.radius() {
        return None;
    }
    let dim = u.dim();
    let fluxes: Vec<Vec<f64>> = (0..=u.horizon())
        .map(|k| {
            let mut out = vec![0.0; dim];
            phi.eval_into(&u.diff(k), &mut out);
            out
        })
        .collect();
    Some(
        (1..=u.horizon())
            .map(|n| fluxes[n - 1].iter().zip(&fluxes[n]).map(|(a, b)| a - b).collect())
            .collect(),
    )
}

/// `max_n |-Δ[φ(Δu(n-1))] - rhs(n)|`; `∞` outside the domain.
pub(crate) fn equation_residual(phi: &PhiMap, u: &GridFunction, rhs: impl Fn(usize) -> Vec<f64>) -> f64 {
    let Some(lap) = laplacian_term(phi, u) else {
        return f64::INFINITY;
    };
    lap.iter()
        .enumerate()
        .map(|(i, l)| {
            let r = rhs(i + 1);
            l.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Equation residual of `[Q_γ(h)]`.
pub fn q_interior_residual(phi: &PhiMap, h: &InteriorFunction, u: &GridFunction) -> f64 {
    equation_residual(phi, u, |n| h.at(n).iter().zip(u.at(n)).map(|(a, b)| a - b).collect())
}

/// Boundary residual of `u` for `law`; `∞` outside the domain.
pub fn boundary_residual(phi: &PhiMap, law: &BoundaryLaw, u: &GridFunction) -> f64 {
    match crate::boundary_laws::boundary_flux(phi, u) {
        Ok(w) => law.law_residual(&u.boundary_pair(), &w),
        Err(_) => f64::INFINITY,
    }
}

pub(crate) fn build_report(
    phi: &PhiMap,
    law: &BoundaryLaw,
    u: GridFunction,
    interior_residual: f64,
    iterations: usize,
    energy: Option<f64>,
    tol: f64,
) -> SolveReport {
    let boundary_residual = boundary_residual(phi, law, &u);
    let margin = phi.radius() - u.sup_diff();
    let strip = u.boundary_pair().in_strip((u.horizon() as f64 + 1.0) * phi.radius());
    let converged = interior_residual <= tol && boundary_residual <= tol && margin > 0.0;
    let status = if converged {
        "converged".to_string()
    } else if margin <= 0.0 {
        "infeasible".to_string()
    } else {
        format!("residuals above tolerance ({interior_residual:.3e}, {boundary_residual:.3e})")
    };
    SolveReport {
        solution: u,
        interior_residual,
        boundary_residual,
        feasibility_margin: margin,
        strip_check: strip,
        iterations,
        energy,
        converged,
        status,
        fixed_point_gap: None,
    }
}

fn check_problem(phi: &PhiMap, law: &BoundaryLaw, h: &InteriorFunction) -> Result<()> {
    if law.dim() != h.dim() {
        return Err(Error::Dimension(format!(
            "law acts on R^{} but the forcing has dimension {}",
            law.dim(),
            h.dim()
        )));
    }
    let _ = phi;
    Ok(())
}

fn finish(report: SolveReport) -> Result<SolveReport> {
    if report.converged {
        Ok(report)
    } else {
        Err(Error::NotConverged(Box::new(report)))
    }
}

/// Linear interpolation between the two boundary values.
fn interpolate(dim: usize, horizon: usize, z: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; (horizon + 2) * dim];
    for n in 0..horizon + 2 {
        let s = n as f64 / (horizon as f64 + 1.0);
        for i in 0..dim {
            x[n * dim + i] = (1.0 - s) * z[i] + s * z[dim + i];
        }
    }
    x
}

/// A feasible starting point: the projection of `preferred` (or zero), else
/// the interpolation of the projected boundary pair.
fn feasible_start(
    model: &EnergyModel,
    constraint: &Constraint,
    preferred: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let zero = vec![0.0; model.len()];
    let candidate = constraint.project(preferred.unwrap_or(&zero));
    if model.margin(&candidate) > 0.0 {
        return Ok(candidate);
    }
    let z = constraint.boundary_of(&candidate);
    let line = constraint.project(&interpolate(model.dim, model.horizon, &z));
    if model.margin(&line) > 0.0 {
        return Ok(line);
    }
    let zero_start = constraint.project(&zero);
    if model.margin(&zero_start) > 0.0 {
        return Ok(zero_start);
    }
    Err(Error::Infeasible(
        "no boundary pair of the constraint set admits sup |Δu| < a".into(),
    ))
}

/// A random feasible point: a convex combination of `base` and a projected
/// random walk, shrunk until `sup |Δu| < 0.99a`.
pub(crate) fn random_feasible(
    model: &EnergyModel,
    constraint: &Constraint,
    base: &[f64],
    rng: &mut ChaCha8Rng,
    spread: f64,
) -> Vec<f64> {
    let a = model.phi.radius();
    let dim = model.dim;
    let mut walk = vec![0.0; model.len()];
    for i in 0..dim {
        walk[i] = base[i] + spread * rng.gen_range(-1.0..1.0);
    }
    for n in 1..model.horizon + 2 {
        for i in 0..dim {
            walk[n * dim + i] = walk[(n - 1) * dim + i] + 0.9 * a / (dim as f64).sqrt() * rng.gen_range(-1.0..1.0);
        }
    }
    let target = constraint.project(&walk);
    let mut t = 1.0;
    for _ in 0..60 {
        let cand: Vec<f64> = base.iter().zip(&target).map(|(b, w)| (1.0 - t) * b + t * w).collect();
        if model.sup_diff(&cand) < 0.99 * a {
            return constraint.project(&cand);
        }
        t *= 0.5;
    }
    base.to_vec()
}

/// Minimizes the convex energy for a subdifferential law, optionally warm
/// started, and returns the (possibly unconverged) report.
pub(crate) fn q_subdiff_report(
    phi: &PhiMap,
    law: &BoundaryLaw,
    h: &InteriorFunction,
    opts: &SolveOptions,
    warm: Option<&[f64]>,
) -> Result<SolveReport> {
    opts.validate()?;
    check_problem(phi, law, h)?;
    let LawRepr::Subdifferential { potential, set } = law.repr() else {
        return Err(Error::Precondition("expected a subdifferential boundary law".into()));
    };
    let (dim, horizon) = (h.dim(), h.horizon());
    let model = EnergyModel {
        phi,
        dim,
        horizon,
        quad_weight: 1.0,
        forcing: Some(h),
        boundary: Some(potential),
        field: None,
        barrier: 0.0,
    };
    let constraint = Constraint::new(set, dim, horizon);
    let mut start = feasible_start(&model, &constraint, warm)?;
    if opts.random_start {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        start = random_feasible(&model, &constraint, &start, &mut rng, 1.0 + h.sup_norm());
    }
    let out = optim::minimize(&model, &constraint, &start, &opts.optim(dim), None);
    let u = GridFunction::from_flat_unchecked(dim, horizon, out.x);
    let interior = q_interior_residual(phi, h, &u);
    Ok(build_report(
        phi,
        law,
        u,
        interior,
        out.iterations,
        Some(out.value),
        opts.tol_residual,
    ))
}

/// Solves `[Q_γ(h)]` for `γ = ∂(G + I_K)` by minimizing the strictly convex
/// energy. Errors with [`Error::NotConverged`] when the residual
/// certificates fail.
pub fn solve_q_subdiff(phi: &PhiMap, law: &BoundaryLaw, h: &InteriorFunction, opts: &SolveOptions) -> Result<SolveReport> {
    finish(q_subdiff_report(phi, law, h, opts, None)?)
}

fn check_strip(phi: &PhiMap, bc: &BoundaryPair, horizon: usize) -> Result<()> {
    let sigma = (horizon as f64 + 1.0) * phi.radius();
    let gap = dist(&bc.left, &bc.right);
    if !(gap < sigma) {
        return Err(Error::Precondition(format!(
            "Dirichlet data must satisfy |x - y| < (T+1)a = {sigma}, got {gap}"
        )));
    }
    Ok(())
}

/// The Dirichlet problem `u(0) = bc.left`, `u(T+1) = bc.right`; solvable iff
/// `|bc.left - bc.right| < (T+1)a`.
pub fn solve_dirichlet(phi: &PhiMap, bc: &BoundaryPair, h: &InteriorFunction, opts: &SolveOptions) -> Result<SolveReport> {
    check_strip(phi, bc, h.horizon())?;
    if bc.dim() != h.dim() {
        return Err(Error::Dimension("boundary data and forcing dimensions differ".into()));
    }
    solve_q_subdiff(phi, &BoundaryLaw::dirichlet_data(bc), h, opts)
}

/// Prescribed fluxes `φ(Δu(0)) = flux.left`, `φ(Δu(T)) = flux.right`.
pub fn solve_neumann(phi: &PhiMap, flux: &BoundaryPair, h: &InteriorFunction, opts: &SolveOptions) -> Result<SolveReport> {
    if flux.dim() != h.dim() {
        return Err(Error::Dimension("flux and forcing dimensions differ".into()));
    }
    solve_q_subdiff(phi, &BoundaryLaw::neumann_data(flux), h, opts)
}

/// `θ(z) = (-φ(Δu_z(0)), φ(Δu_z(T)))` where `u_z` solves the Dirichlet problem with data `z`.
pub fn theta_eval(phi: &PhiMap, h: &InteriorFunction, z: &BoundaryPair, opts: &SolveOptions) -> Result<BoundaryPair> {
    let report = solve_dirichlet(phi, z, h, opts)?;
    Ok(theta_of(phi, &report.solution))
}

fn theta_of(phi: &PhiMap, u: &GridFunction) -> BoundaryPair {
    let mut left = vec![0.0; u.dim()];
    let mut right = vec![0.0; u.dim()];
    phi.eval_into(&u.diff(0), &mut left);
    phi.eval_into(&u.diff(u.horizon()), &mut right);
    left.iter_mut().for_each(|v| *v = -*v);
    BoundaryPair { left, right }
}

/// Warm-started Dirichlet solve used inside the proximal-point loop.
struct ThetaOracle<'a> {
    phi: &'a PhiMap,
    h: &'a InteriorFunction,
    opts: SolveOptions,
    warm: Option<Vec<f64>>,
}

impl ThetaOracle<'_> {
    fn solve(&mut self, z: &[f64]) -> Result<GridFunction> {
        let bc = BoundaryPair::from_slice(z);
        check_strip(self.phi, &bc, self.h.horizon())?;
        let law = BoundaryLaw::dirichlet_data(&bc);
        let report = q_subdiff_report(self.phi, &law, self.h, &self.opts, self.warm.as_deref())?;
        if !report.converged {
            return Err(Error::NotConverged(Box::new(report)));
        }
        self.warm = Some(report.solution.as_slice().to_vec());
        Ok(report.solution)
    }

    fn theta(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        let u = self.solve(z)?;
        Ok(theta_of(self.phi, &u).to_vec())
    }
}

/// Keeps `|x - y| ≤ 0.999 (T+1)a` by shrinking the difference around the midpoint.
fn clip_to_strip(z: &mut [f64], sigma: f64) {
    let n = z.len() / 2;
    let gap = dist(&z[..n], &z[n..]);
    let limit = 0.999 * sigma;
    if gap > limit {
        let s = limit / gap;
        for i in 0..n {
            let m = 0.5 * (z[i] + z[n + i]);
            let d = 0.5 * (z[i] - z[n + i]) * s;
            z[i] = m + d;
            z[n + i] = m - d;
        }
    }
}

/// Residual map of the full grid system for a matrix law:
/// `[φ(Δu(0)) - (Mz)_L; -Δφ + u - h; -φ(Δu(T)) - (Mz)_R]`.
fn matrix_system(phi: &PhiMap, law: &BoundaryLaw, h: &InteriorFunction, x: &[f64]) -> Option<Vec<f64>> {
    let (dim, horizon) = (h.dim(), h.horizon());
    let u = GridFunction::from_flat_unchecked(dim, horizon, x.to_vec());
    let lap = laplacian_term(phi, &u)?;
    let z = u.boundary_pair().to_vec();
    let mz = law.apply_matrix(&z)?;
    let mut f = vec![0.0; x.len()];
    let mut flux = vec![0.0; dim];
    phi.eval_into(&u.diff(0), &mut flux);
    for i in 0..dim {
        f[i] = flux[i] - mz[i];
    }
    for n in 1..=horizon {
        for i in 0..dim {
            f[n * dim + i] = lap[n - 1][i] + u.at(n)[i] - h.at(n)[i];
        }
    }
    phi.eval_into(&u.diff(horizon), &mut flux);
    for i in 0..dim {
        f[(horizon + 1) * dim + i] = -flux[i] - mz[dim + i];
    }
    Some(f)
}

fn matrix_jacobian(phi: &PhiMap, law: &BoundaryLaw, dim: usize, horizon: usize, x: &[f64]) -> DMatrix<f64> {
    let len = x.len();
    let mut jac = DMatrix::zeros(len, len);
    let diff = |k: usize| -> Vec<f64> { (0..dim).map(|i| x[(k + 1) * dim + i] - x[k * dim + i]).collect() };
    // φ(Δu(k)) enters row block k with sign -1 and row block k+1 with sign +1,
    // except the first row which carries +φ(Δu(0)) and the last -φ(Δu(T))
    for k in 0..=horizon {
        let j = phi.jacobian(&diff(k));
        for row_block in [k, k + 1] {
            let coeff = match row_block {
                0 => 1.0,
                r if r == horizon + 1 => -1.0,
                r if r == k + 1 => 1.0,
                _ => -1.0,
            };
            for a in 0..dim {
                for b in 0..dim {
                    let v = coeff * j[a * dim + b];
                    // Δu(k) = u(k+1) - u(k)
                    jac[(row_block * dim + a, (k + 1) * dim + b)] += v;
                    jac[(row_block * dim + a, k * dim + b)] -= v;
                }
            }
        }
    }
    for n in 1..=horizon {
        for i in 0..dim {
            jac[(n * dim + i, n * dim + i)] += 1.0;
        }
    }
    let m = law.matrix_entries().expect("matrix law");
    let col = |c: usize| if c < dim { c } else { (horizon + 1) * dim + c - dim };
    for r in 0..2 * dim {
        for c in 0..2 * dim {
            jac[(col(r), col(c))] -= m[r * 2 * dim + c];
        }
    }
    jac
}

/// Damped Newton on the full grid system of a matrix law.
fn matrix_newton(
    phi: &PhiMap,
    law: &BoundaryLaw,
    h: &InteriorFunction,
    x0: &[f64],
    opts: &SolveOptions,
) -> (Vec<f64>, usize) {
    let (dim, horizon) = (h.dim(), h.horizon());
    optim::newton_system(
        x0,
        |x| matrix_system(phi, law, h, x),
        |x| matrix_jacobian(phi, law, dim, horizon, x),
        |x, d| max_grid_step(phi, dim, horizon, x, d),
        0.05 * opts.tol_residual / (2.0 * dim as f64).sqrt(),
        200,
        opts.step_safety,
    )
}

pub(crate) fn max_grid_step(phi: &PhiMap, dim: usize, horizon: usize, x: &[f64], d: &[f64]) -> f64 {
    let model = EnergyModel {
        phi,
        dim,
        horizon,
        quad_weight: 0.0,
        forcing: None,
        boundary: None,
        field: None,
        barrier: 0.0,
    };
    model.max_step(x, d)
}

/// Report for a matrix-law solve; `warm` seeds a direct Newton attempt.
pub(crate) fn q_matrix_report(
    phi: &PhiMap,
    law: &BoundaryLaw,
    h: &InteriorFunction,
    opts: &SolveOptions,
    warm: Option<&[f64]>,
) -> Result<SolveReport> {
    opts.validate()?;
    check_problem(phi, law, h)?;
    let (dim, horizon) = (h.dim(), h.horizon());
    let sigma = (horizon as f64 + 1.0) * phi.radius();
    let tol = opts.tol_residual;
    let certify = |x: Vec<f64>, iterations: usize| {
        let u = GridFunction::from_flat_unchecked(dim, horizon, x);
        let interior = q_interior_residual(phi, h, &u);
        build_report(phi, law, u, interior, iterations, None, tol)
    };

    if let Some(w) = warm {
        let w_grid = GridFunction::from_flat_unchecked(dim, horizon, w.to_vec());
        if w_grid.sup_diff() < phi.radius() {
            let (x, it) = matrix_newton(phi, law, h, w, opts);
            let report = certify(x, it);
            if report.converged {
                return Ok(report);
            }
        }
    }

    let matrix = law.matrix_entries().expect("matrix law");
    let inner_opts = SolveOptions {
        random_start: false,
        ..opts.clone()
    };
    let mut oracle = ThetaOracle {
        phi,
        h,
        opts: inner_opts,
        warm: None,
    };
    let m2 = 2 * dim;
    let resolvent = |lambda: f64| -> LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
        DMatrix::from_fn(m2, m2, |i, j| if i == j { 1.0 } else { 0.0 } + lambda * matrix[i * m2 + j]).lu()
    };
    let mut lambda = opts.prox_point_lambda;
    let mut lu = resolvent(lambda);
    let mut z = vec![0.0; m2];
    if opts.random_start {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let spread = 1.0 + h.sup_norm();
        z.iter_mut().for_each(|v| *v = rng.gen_range(-spread..spread));
        clip_to_strip(&mut z, sigma);
    }
    let mut total = 0usize;
    let outer_cap = opts.max_iters.min(10_000);
    let inner_tol = 1e-11;
    let mut last: Option<SolveReport> = None;

    for outer in 0..outer_cap {
        // inner fixed point v = (I + λM)⁻¹ (z - λθ(v))
        let mut v = z.clone();
        let mut acc = Anderson::new(5, 0.5);
        let mut prev_res = f64::INFINITY;
        let mut inner_ok = false;
        for _ in 0..500 {
            total += 1;
            let th = match oracle.theta(&v) {
                Ok(t) => t,
                Err(_) => break,
            };
            let rhs = DVector::from_iterator(m2, z.iter().zip(&th).map(|(a, b)| a - lambda * b));
            let Some(gv) = lu.solve(&rhs) else { break };
            let gv: Vec<f64> = gv.iter().copied().collect();
            let res = dist(&gv, &v);
            if res <= inner_tol * (1.0 + norm(&v)) {
                v = gv;
                inner_ok = true;
                break;
            }
            let mut next = if res > prev_res {
                acc.reset();
                acc.damped(&v, &gv)
            } else {
                acc.step(&v, &gv)
            };
            prev_res = res;
            clip_to_strip(&mut next, sigma);
            v = next;
        }
        if !inner_ok {
            lambda *= 0.5;
            if lambda < 1e-8 {
                break;
            }
            lu = resolvent(lambda);
            continue;
        }
        let step = dist(&v, &z);
        z = v;
        // try to finish once the outer iteration has settled
        if step <= 1e-6 * (1.0 + norm(&z)) || outer % 10 == 9 {
            if let Ok(u) = oracle.solve(&z) {
                let (x, it) = matrix_newton(phi, law, h, u.as_slice(), opts);
                let report = certify(x, total + it);
                if report.converged {
                    return Ok(report);
                }
                last = Some(report);
            }
        }
        if step <= 1e-14 * (1.0 + norm(&z)) {
            break;
        }
    }
    match last {
        Some(mut r) => {
            r.iterations = total;
            Ok(r)
        }
        None => {
            let u = oracle.solve(&z)?;
            Ok(certify(u.into_vec(), total))
        }
    }
}

/// Solves `[Q_γ(h)]` for any representable law.
pub fn solve_q_general(phi: &PhiMap, law: &BoundaryLaw, h: &InteriorFunction, opts: &SolveOptions) -> Result<SolveReport> {
    finish(q_general_report(phi, law, h, opts, None)?)
}

pub(crate) fn q_general_report(
    phi: &PhiMap,
    law: &BoundaryLaw,
    h: &InteriorFunction,
    opts: &SolveOptions,
    warm: Option<&[f64]>,
) -> Result<SolveReport> {
    match law.repr() {
        LawRepr::Subdifferential { .. } => q_subdiff_report(phi, law, h, opts, warm),
        LawRepr::LinearMatrix { .. } => q_matrix_report(phi, law, h, opts, warm),
    }
}
