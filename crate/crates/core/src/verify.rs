//! Certificates and oracles: residual reports with the a priori estimates,
//! an independent brute-force solver for tiny instances, and randomized
//! checks of the estimates satisfied by solutions of the regularized
//! problem.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary_laws::{BoundaryLaw, ConvexSet, LawRepr};
use crate::convex_core::{self, SolveOptions};
use crate::error::{Error, Result};
use crate::grid::{bilinear_terms, GridFunction, InteriorFunction};
use crate::nonpotential::{self, NonlinearField};
use crate::phi_maps::PhiMap;
use crate::variational::{self, PotentialField, LAMBDA1_POSITIVE};
use crate::vecops::{dist, norm};

/// Slack allowed in every estimate comparison.
pub const ESTIMATE_TOL: f64 = 1e-10;

/// Right-hand side of the system a grid function is checked against.
#[derive(Clone, Copy, Debug)]
pub enum Problem<'a> {
    /// `-Δ[φ(Δu(n-1))] + u(n) = h(n)`.
    Regularized(&'a InteriorFunction),
    /// `-Δ[φ(Δu(n-1))] = f(n, u)`.
    Field(&'a NonlinearField),
    /// `-Δ[φ(Δu(n-1))] = ∇F(n, u(n)) + h(n)`.
    Potential { field: &'a PotentialField, h: &'a InteriorFunction },
}

#[derive(Clone, Debug, Serialize)]
pub struct Estimate {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

impl Estimate {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            ok: lhs <= rhs + ESTIMATE_TOL,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub interior_inf_norm: f64,
    pub boundary_residual: f64,
    pub feasibility_margin: f64,
    pub strip_ok: bool,
    pub estimates: Vec<Estimate>,
}

impl ResidualReport {
    /// Both residuals within `tol`, a positive margin, the strip condition
    /// and every estimate.
    pub fn passes(&self, tol: f64) -> bool {
        self.interior_inf_norm <= tol
            && self.boundary_residual <= tol
            && self.feasibility_margin > 0.0
            && self.strip_ok
            && self.estimates.iter().all(|e| e.ok)
    }
}

fn sup_pointwise(u: &GridFunction) -> f64 {
    (0..u.horizon() + 2).map(|m| norm(u.at(m))).fold(0.0, f64::max)
}

/// Residuals of `u` for `problem` and the estimates every solution obeys:
/// the pointwise bound `|u(m)| ≤ ‖u‖_T/√T + Ta`, the strip condition
/// `|u(0) - u(T+1)| < (T+1)a`, the bound `‖u‖_T ≤ √T|h|_∞` for the
/// regularized problem, and, given `λ₁ > 0`, `|u(m)| ≤ a(√((T+1)/(Tλ₁)) + T)`.
pub fn residual_report(phi: &PhiMap, law: &BoundaryLaw, problem: Problem, u: &GridFunction, lambda1: Option<f64>) -> ResidualReport {
    let a = phi.radius();
    let t = u.horizon() as f64;
    let interior = match problem {
        Problem::Regularized(h) => convex_core::q_interior_residual(phi, h, u),
        Problem::Field(f) => nonpotential::field_interior_residual(phi, f, u),
        Problem::Potential { field, h } => variational::potential_interior_residual(phi, field, h, u),
    };
    let boundary = convex_core::boundary_residual(phi, law, u);
    let margin = a - u.sup_diff();
    let sigma = (t + 1.0) * a;
    let gap = dist(u.at(0), u.at(u.horizon() + 1));
    let sup = sup_pointwise(u);
    let mut estimates = vec![
        Estimate::new("pointwise", sup, u.norm_t() / t.sqrt() + t * a),
        Estimate::new("strip", gap, sigma),
    ];
    if let Problem::Regularized(h) = problem {
        estimates.push(Estimate::new("zero_bound", u.norm_t(), t.sqrt() * h.sup_norm()));
    }
    if let Some(l) = lambda1.filter(|l| *l > LAMBDA1_POSITIVE) {
        estimates.push(Estimate::new("lambda1_bound", sup, a * (((t + 1.0) / (t * l)).sqrt() + t)));
    }
    ResidualReport {
        interior_inf_norm: interior,
        boundary_residual: boundary,
        feasibility_margin: margin,
        strip_ok: gap < sigma,
        estimates,
    }
}

/// Boundary equations of a law as a square system in `(z, w)`.
enum BoundarySystem {
    /// `z = z0`.
    Fixed(Vec<f64>),
    /// `⟨b, w - ∇G(z)⟩ = 0` along the subspace, `⟨c, z⟩ = 0` across it.
    Subspace { along: Vec<Vec<f64>>, across: Vec<Vec<f64>> },
    /// `w = Mz`.
    Matrix(Vec<f64>),
}

fn complement(basis: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for i in 0..m {
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        for b in basis.iter().chain(out.iter()) {
            let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n = norm(&v);
        if n > 1e-8 {
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

fn boundary_system(law: &BoundaryLaw) -> Result<BoundarySystem> {
    let m = 2 * law.dim();
    match law.repr() {
        LawRepr::LinearMatrix { matrix } => Ok(BoundarySystem::Matrix(matrix.clone())),
        LawRepr::Subdifferential { set, .. } => {
            if let ConvexSet::Point(z0) = set {
                if z0.iter().any(|v| *v != 0.0) {
                    return Ok(BoundarySystem::Fixed(z0.clone()));
                }
            }
            // an inactive strip constraint leaves the boundary pair free
            let basis = match set {
                ConvexSet::Strip { dim, .. } => ConvexSet::FullSpace { dim: *dim }.subspace_basis(),
                other => other.subspace_basis(),
            }
            .ok_or_else(|| Error::Precondition("brute force supports affine boundary sets only".into()))?;
            let across = complement(&basis, m);
            Ok(BoundarySystem::Subspace { along: basis, across })
        }
    }
}

/// Residual of the full grid system (boundary equations first and last
/// interior equations in between); `None` outside the domain.
fn system_residual(phi: &PhiMap, law: &BoundaryLaw, sys: &BoundarySystem, h: &InteriorFunction, x: &[f64]) -> Option<Vec<f64>> {
    let (dim, horizon) = (h.dim(), h.horizon());
    let u = GridFunction::from_flat_unchecked(dim, horizon, x.to_vec());
    if u.sup_diff() >= phi.radius() {
        return None;
    }
    let flux: Vec<Vec<f64>> = (0..=horizon).map(|k| phi.eval(&u.diff(k)).expect("inside the domain")).collect();
    let mut out = Vec::with_capacity(x.len());
    for n in 1..=horizon {
        for i in 0..dim {
            out.push(flux[n - 1][i] - flux[n][i] + u.at(n)[i] - h.at(n)[i]);
        }
    }
    let z = u.boundary_pair().to_vec();
    let w: Vec<f64> = flux[0].iter().copied().chain(flux[horizon].iter().map(|v| -v)).collect();
    let m = 2 * dim;
    let inner = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    match sys {
        BoundarySystem::Fixed(z0) => out.extend(z.iter().zip(z0).map(|(a, b)| a - b)),
        BoundarySystem::Matrix(mat) => {
            for r in 0..m {
                out.push(w[r] - inner(&mat[r * m..(r + 1) * m], &z));
            }
        }
        BoundarySystem::Subspace { along, across } => {
            let grad = law.potential().expect("subdifferential law").gradient(&z);
            let v: Vec<f64> = w.iter().zip(&grad).map(|(a, b)| a - b).collect();
            out.extend(along.iter().map(|b| inner(b, &v)));
            out.extend(across.iter().map(|c| inner(c, &z)));
        }
    }
    Some(out)
}

/// Scalar merit scanned on the grid: the regularized energy for
/// subdifferential laws (boundary pair projected onto `K`), the squared
/// residual for matrix laws.
fn merit(phi: &PhiMap, law: &BoundaryLaw, sys: &BoundarySystem, h: &InteriorFunction, x: &mut [f64]) -> f64 {
    let horizon = h.horizon();
    let a = phi.radius();
    if let LawRepr::Subdifferential { set, .. } = law.repr() {
        let z = set.project(&[x[0], x[horizon + 1]]);
        x[0] = z[0];
        x[horizon + 1] = z[1];
    }
    if x.windows(2).any(|w| (w[1] - w[0]).abs() >= a) {
        return f64::INFINITY;
    }
    match (law.repr(), sys) {
        (LawRepr::Subdifferential { potential, .. }, _) => {
            let mut e = potential.value(&[x[0], x[horizon + 1]]);
            e += x.windows(2).map(|w| phi.potential_radial((w[1] - w[0]).abs())).sum::<f64>();
            for n in 1..=horizon {
                e += 0.5 * x[n] * x[n] - h.at(n)[0] * x[n];
            }
            e
        }
        (LawRepr::LinearMatrix { .. }, BoundarySystem::Matrix(m)) => {
            // scalar fluxes φ(Δu(k)) = sign(Δu(k)) g(|Δu(k)|)
            let flux = |k: usize| {
                let d = x[k + 1] - x[k];
                d.signum() * phi.profile(d.abs())
            };
            let mut r = 0.0;
            let mut prev = flux(0);
            for n in 1..=horizon {
                let next = flux(n);
                let e = prev - next + x[n] - h.at(n)[0];
                r += e * e;
                prev = next;
            }
            let (z0, z1) = (x[0], x[horizon + 1]);
            let w0 = flux(0) - (m[0] * z0 + m[1] * z1);
            let w1 = -prev - (m[2] * z0 + m[3] * z1);
            r + w0 * w0 + w1 * w1
        }
        _ => unreachable!("matrix laws map to matrix systems"),
    }
}

const SCAN_POINTS: usize = 41;
const REFINE_POINTS: usize = 11;
const KEEP_CELLS: usize = 8;

/// Enumerates grid vectors with `|Δu| < a` between grid neighbours, keeping
/// the `KEEP_CELLS` lowest merits. The interior chain is fixed first and each
/// boundary value is then scanned within a band of width `a` around its
/// neighbour; projecting such a value onto `K` moves it no farther than the
/// distance to the true boundary value.
fn scan(centers: &[f64], half_widths: &[f64], points: usize, a: f64, eval: &dyn Fn(&mut [f64]) -> f64) -> Vec<(f64, Vec<f64>)> {
    let len = centers.len();
    let last = len - 1;
    let order: Vec<usize> = (1..last).chain([0, last]).collect();
    let axis = |k: usize, i: usize| {
        if points == 1 {
            centers[k]
        } else {
            centers[k] - half_widths[k] + 2.0 * half_widths[k] * i as f64 / (points - 1) as f64
        }
    };
    let neighbour = |k: usize| match k {
        0 => Some(1),
        1 => None,
        k => Some(k - 1),
    };
    let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut x = vec![0.0; len];
    let mut scratch = vec![0.0; len];
    let mut stack = vec![0usize; len];
    let mut depth = 0usize;
    // iterative depth-first enumeration over `order`
    loop {
        if stack[depth] == points {
            if depth == 0 {
                break;
            }
            stack[depth] = 0;
            depth -= 1;
            stack[depth] += 1;
            continue;
        }
        let k = order[depth];
        x[k] = axis(k, stack[depth]);
        if neighbour(k).is_some_and(|j| (x[k] - x[j]).abs() >= a) {
            stack[depth] += 1;
            continue;
        }
        if depth + 1 < len {
            depth += 1;
            continue;
        }
        scratch.copy_from_slice(&x);
        let v = eval(&mut scratch);
        if v.is_finite() && (best.len() < KEEP_CELLS || v < best[best.len() - 1].0) && !best.iter().any(|(_, b)| b == &scratch) {
            best.push((v, scratch.clone()));
            best.sort_by(|p, q| p.0.total_cmp(&q.0));
            best.truncate(KEEP_CELLS);
        }
        stack[depth] += 1;
    }
    best
}

/// Newton iteration with a central-difference Jacobian.
fn fd_newton(residual: &dyn Fn(&[f64]) -> Option<Vec<f64>>, x0: &[f64], tol: f64) -> Option<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut r = residual(&x)?;
    let n = x.len();
    for _ in 0..100 {
        let rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if rn <= tol {
            return Some(x);
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let eps = 1e-7 * (1.0 + x[j].abs());
            let mut p = x.clone();
            p[j] += eps;
            let mut m = x.clone();
            m[j] -= eps;
            let (rp, rm) = match (residual(&p), residual(&m)) {
                (Some(rp), Some(rm)) => (rp, rm),
                _ => {
                    let rp = residual(&p)?;
                    for i in 0..n {
                        jac[(i, j)] = (rp[i] - r[i]) / eps;
                    }
                    continue;
                }
            };
            for i in 0..n {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * eps);
            }
        }
        let d = jac.lu().solve(&DVector::from_iterator(n, r.iter().map(|v| -v)))?;
        let merit = norm(&r);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let cand: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
            if let Some(rc) = residual(&cand) {
                if norm(&rc) < merit {
                    x = cand;
                    r = rc;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (rn <= tol).then_some(x)
}

/// Coarse scan of the merit over the a priori box `|u(m)| ≤ |h|_∞ + Ta`.
fn coarse_scan(phi: &PhiMap, law: &BoundaryLaw, sys: &BoundarySystem, h: &InteriorFunction) -> (Vec<(f64, Vec<f64>)>, f64) {
    let horizon = h.horizon();
    let len = horizon + 2;
    // ‖u‖_T ≤ √T|h|_∞ and |u(m)| ≤ ‖u‖_T/√T + Ta
    let bound = h.sup_norm() + horizon as f64 * phi.radius();
    let eval = |x: &mut [f64]| merit(phi, law, sys, h, x);
    let coarse = scan(&vec![0.0; len], &vec![bound; len], SCAN_POINTS, phi.radius(), &eval);
    (coarse, 2.0 * bound / (SCAN_POINTS - 1) as f64)
}

/// Refines the scan around `center` and polishes the best refined point.
fn refine_and_polish(phi: &PhiMap, law: &BoundaryLaw, sys: &BoundarySystem, h: &InteriorFunction, center: &[f64], cell: f64) -> Option<GridFunction> {
    let horizon = h.horizon();
    let eval = |x: &mut [f64]| merit(phi, law, sys, h, x);
    let fine = scan(center, &vec![cell; center.len()], REFINE_POINTS, phi.radius(), &eval);
    let (_, start) = fine.into_iter().next()?;
    let residual = |x: &[f64]| system_residual(phi, law, sys, h, x);
    let x = fd_newton(&residual, &start, 1e-11)?;
    let u = GridFunction::from_flat_unchecked(1, horizon, x);
    (convex_core::q_interior_residual(phi, h, &u) <= 1e-10 && convex_core::boundary_residual(phi, law, &u) <= 1e-10)
        .then_some(u)
}

fn check_brute_force_shape(law: &BoundaryLaw, h: &InteriorFunction) -> Result<()> {
    if h.dim() != 1 || h.horizon() > 3 || law.dim() != 1 {
        return Err(Error::Precondition("brute force needs N = 1 and T ≤ 3".into()));
    }
    Ok(())
}

/// Polished solutions started from each of the best coarse cells. The
/// solution is unique, so all of them should coincide.
pub fn brute_force_candidates(phi: &PhiMap, law: &BoundaryLaw, h: &InteriorFunction) -> Result<Vec<GridFunction>> {
    check_brute_force_shape(law, h)?;
    let sys = boundary_system(law)?;
    let (coarse, cell) = coarse_scan(phi, law, &sys, h);
    let found: Vec<GridFunction> = coarse
        .iter()
        .filter_map(|(_, center)| refine_and_polish(phi, law, &sys, h, center, cell))
        .collect();
    if found.is_empty() {
        return Err(Error::Convergence("brute force: polish failed from every scan cell".into()));
    }
    Ok(found)
}

/// Solves the regularized problem for `N = 1`, `T ≤ 3` by a dense grid scan
/// of a merit function over the a priori box, one refinement around the
/// best cell and a Newton polish with finite-difference Jacobians. Shares no
/// code path with the main solvers. Later cells are tried only if the
/// polish from the best one fails.
pub fn brute_force_solve(phi: &PhiMap, law: &BoundaryLaw, h: &InteriorFunction) -> Result<GridFunction> {
    check_brute_force_shape(law, h)?;
    let sys = boundary_system(law)?;
    let (coarse, cell) = coarse_scan(phi, law, &sys, h);
    coarse
        .iter()
        .find_map(|(_, center)| refine_and_polish(phi, law, &sys, h, center, cell))
        .ok_or_else(|| Error::Convergence("brute force: polish failed from every scan cell".into()))
}

/// Worst-case record of one estimate across a batch.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateStat {
    pub name: String,
    pub checks: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` seen (negative means violated).
    pub worst_margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateSummary {
    pub instances: usize,
    pub violations: usize,
    pub stats: Vec<EstimateStat>,
    /// Instances whose solves failed.
    pub failures: Vec<String>,
}

impl EstimateSummary {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.failures.is_empty()
    }
}

fn random_forcing(rng: &mut ChaCha8Rng, dim: usize, horizon: usize) -> InteriorFunction {
    let values: Vec<f64> = (0..dim * horizon).map(|_| rng.gen_range(-1.0..1.0)).collect();
    InteriorFunction::from_flat(dim, horizon, values).expect("shape")
}

/// Runs `batch` random instance pairs `(h, l)` with `|h|_∞, |l|_∞ ≤ 1` and
/// `T ∈ 2..=12`, solving both and checking the stability bound
/// `‖u_h - u_l‖_T ≤ √T|h - l|_∞`, the zero bound, the pointwise and strip
/// estimates and the identity `O = ω + M`. Instances run in parallel; each
/// is seeded from `seed` and its index.
pub fn check_estimates(phi: &PhiMap, law: &BoundaryLaw, batch: usize, seed: u64) -> EstimateSummary {
    let dim = law.dim();
    let opts = SolveOptions::default();
    let results: Vec<std::result::Result<Vec<(String, f64, f64)>, String>> = (0..batch)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(i as u64));
            let horizon = rng.gen_range(2..=12);
            let h = random_forcing(&mut rng, dim, horizon);
            let l = random_forcing(&mut rng, dim, horizon);
            let uh = convex_core::solve_q_general(phi, law, &h, &opts).map_err(|e| format!("instance {i}: {e}"))?;
            let ul = convex_core::solve_q_general(phi, law, &l, &opts).map_err(|e| format!("instance {i}: {e}"))?;
            let (uh, ul) = (uh.solution, ul.solution);
            let t = horizon as f64;
            let diff_sup = h
                .as_slice()
                .chunks(dim)
                .zip(l.as_slice().chunks(dim))
                .map(|(x, y)| dist(x, y))
                .fold(0.0, f64::max);
            let diff = GridFunction::from_flat_unchecked(
                dim,
                horizon,
                uh.as_slice().iter().zip(ul.as_slice()).map(|(a, b)| a - b).collect(),
            );
            let mut out = vec![
                ("stability".to_string(), diff.norm_t(), t.sqrt() * diff_sup),
                ("zero_bound".to_string(), uh.norm_t(), t.sqrt() * h.sup_norm()),
            ];
            for u in [&uh, &ul] {
                let r = residual_report(phi, law, Problem::Regularized(&h), u, None);
                for e in r.estimates.into_iter().filter(|e| e.name == "pointwise" || e.name == "strip") {
                    out.push((e.name, e.lhs, e.rhs));
                }
            }
            let terms = bilinear_terms(phi, &uh, &ul).map_err(|e| format!("instance {i}: {e}"))?;
            let err = (terms.o - terms.omega - terms.m).abs();
            out.push(("identity".to_string(), err, 1e-12 * (1.0 + terms.o.abs()) - ESTIMATE_TOL));
            Ok(out)
        })
        .collect();

    let mut stats: Vec<EstimateStat> = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(entries) => {
                for (name, lhs, rhs) in entries {
                    let pos = match stats.iter().position(|s| s.name == name) {
                        Some(p) => p,
                        None => {
                            stats.push(EstimateStat {
                                name: name.clone(),
                                checks: 0,
                                violations: 0,
                                worst_margin: f64::INFINITY,
                            });
                            stats.len() - 1
                        }
                    };
                    let s = &mut stats[pos];
                    s.checks += 1;
                    s.worst_margin = s.worst_margin.min(rhs - lhs);
                    if !(lhs <= rhs + ESTIMATE_TOL) {
                        s.violations += 1;
                    }
                }
            }
            Err(e) => failures.push(e),
        }
    }
    EstimateSummary {
        instances: batch,
        violations: stats.iter().map(|s| s.violations).sum(),
        stats,
        failures,
    }
}
