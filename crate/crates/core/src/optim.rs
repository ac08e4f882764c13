//! Minimization and stationary-point engine for [`EnergyModel`] over the
//! constraint `(x(0), x(T+1)) ∈ K`, optionally with the grid mean pinned.
//!
//! Globalization is a projected (proximal) gradient method with
//! Barzilai-Borwein steps and a sufficient-decrease test; every accepted
//! iterate keeps `sup |Δx| < a`. Whenever the boundary pair sits on a flat
//! face of `K`, a Newton step restricted to that face is tried first, which
//! is what brings the residuals down to 1e-10 and below.

use nalgebra::{DMatrix, DVector};

use crate::boundary_laws::ConvexSet;
use crate::energy::EnergyModel;
use crate::vecops::{dist, dot, norm, norm_sq, sub};

const DENSE_LIMIT: usize = 600;
const ARMIJO: f64 = 1e-4;
/// Accepted steps in a row without real progress before `minimize` gives up.
const STALL_LIMIT: usize = 200;

/// The feasible set of grid vectors.
#[derive(Clone, Debug)]
pub(crate) struct Constraint<'a> {
    pub set: &'a ConvexSet,
    pub dim: usize,
    pub horizon: usize,
    /// Target mean over all `T+2` points; requires a shift-invariant `K`.
    pub mean_pin: Option<Vec<f64>>,
}

impl<'a> Constraint<'a> {
    pub fn new(set: &'a ConvexSet, dim: usize, horizon: usize) -> Self {
        Self {
            set,
            dim,
            horizon,
            mean_pin: None,
        }
    }

    fn right(&self) -> usize {
        (self.horizon + 1) * self.dim
    }

    pub fn boundary_of(&self, x: &[f64]) -> Vec<f64> {
        [&x[..self.dim], &x[self.right()..self.right() + self.dim]].concat()
    }

    fn set_boundary(&self, x: &mut [f64], z: &[f64]) {
        let (d, r) = (self.dim, self.right());
        x[..d].copy_from_slice(&z[..d]);
        x[r..r + d].copy_from_slice(&z[d..]);
    }

    fn grid_mean(&self, x: &[f64]) -> Vec<f64> {
        let count = (self.horizon + 2) as f64;
        (0..self.dim)
            .map(|i| x.iter().skip(i).step_by(self.dim).sum::<f64>() / count)
            .collect()
    }

    fn shift(&self, x: &mut [f64], delta: &[f64]) {
        for row in x.chunks_mut(self.dim) {
            for (v, s) in row.iter_mut().zip(delta) {
                *v += s;
            }
        }
    }

    /// Euclidean projection. With a mean pin the two projections commute
    /// because `K` is invariant under diagonal shifts.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let z = self.set.project(&self.boundary_of(&y));
        self.set_boundary(&mut y, &z);
        if let Some(target) = &self.mean_pin {
            let m = self.grid_mean(&y);
            let delta: Vec<f64> = target.iter().zip(&m).map(|(t, v)| t - v).collect();
            self.shift(&mut y, &delta);
        }
        y
    }

    /// Projector onto the directions of the face containing `x`.
    fn face(&self, x: &[f64]) -> Option<Face> {
        let boundary = self.set.face_projector(&self.boundary_of(x))?;
        Some(Face {
            boundary,
            dim: self.dim,
            right: self.right(),
            remove_mean: self.mean_pin.is_some(),
        })
    }
}

struct Face {
    boundary: Vec<f64>,
    dim: usize,
    right: usize,
    remove_mean: bool,
}

impl Face {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let (d, r) = (self.dim, self.right);
        let m = 2 * d;
        let zb: Vec<f64> = [&v[..d], &v[r..r + d]].concat();
        let pz: Vec<f64> = (0..m).map(|i| dot(&self.boundary[i * m..(i + 1) * m], &zb)).collect();
        let mut out = v.to_vec();
        out[..d].copy_from_slice(&pz[..d]);
        out[r..r + d].copy_from_slice(&pz[d..]);
        if self.remove_mean {
            let count = (out.len() / d) as f64;
            let mean: Vec<f64> = (0..d).map(|i| out.iter().skip(i).step_by(d).sum::<f64>() / count).collect();
            for row in out.chunks_mut(d) {
                for (o, mu) in row.iter_mut().zip(&mean) {
                    *o -= mu;
                }
            }
        }
        out
    }

    fn dense(&self, len: usize) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(len, len);
        let mut e = vec![0.0; len];
        for j in 0..len {
            e[j] = 1.0;
            let col = self.apply(&e);
            e[j] = 0.0;
            for i in 0..len {
                p[(i, j)] = col[i];
            }
        }
        p
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct OptimOptions {
    /// Stop when the projected-gradient residual (max norm) is below this.
    pub tol: f64,
    pub max_iters: usize,
    pub step_safety: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub stationarity: f64,
    pub converged: bool,
}

/// `max |x - P_C(x - g)|`, zero exactly at constrained critical points.
pub(crate) fn stationarity(constraint: &Constraint, x: &[f64], g: &[f64]) -> f64 {
    let trial: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
    let p = constraint.project(&trial);
    x.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

enum NewtonMode {
    /// Shift the Hessian until positive definite, so the step is a descent direction.
    Descent,
    /// Plain Newton on the stationarity equations.
    Stationary,
}

fn newton_direction(
    model: &EnergyModel,
    face: &Face,
    x: &[f64],
    g: &[f64],
    mode: NewtonMode,
) -> Option<Vec<f64>> {
    let len = x.len();
    let pg = face.apply(g);
    if norm(&pg) == 0.0 {
        return None;
    }
    if len > DENSE_LIMIT {
        return newton_direction_cg(model, face, x, &pg, matches!(mode, NewtonMode::Descent));
    }
    let p = face.dense(len);
    let h = model.hessian(x);
    let php = &p * h * &p;
    // the Hessian blows up where φ has infinite slope (e.g. at Δu = 0 for p < 2)
    if !php.iter().all(|v| v.is_finite()) {
        return None;
    }
    let complement = DMatrix::<f64>::identity(len, len) - &p;
    let rhs = DVector::from_iterator(len, pg.iter().map(|v| -v));
    let d = match mode {
        NewtonMode::Stationary => (php + complement).lu().solve(&rhs)?,
        NewtonMode::Descent => {
            // the shift follows the diagonal: near the edge of the domain a few
            // entries are enormous and a uniform shift sized to them would
            // wipe out the curvature along the edge
            let weights = DMatrix::from_diagonal(&DVector::from_iterator(len, (0..len).map(|i| 1.0 + php[(i, i)].abs())));
            let scaled = &p * weights * &p;
            let mut shift = 0.0;
            loop {
                let a = &php + &scaled * shift + &complement;
                if let Some(ch) = a.cholesky() {
                    break ch.solve(&rhs);
                }
                shift = if shift == 0.0 { 1e-10 } else { shift * 10.0 };
                if shift > 1e6 {
                    return None;
                }
            }
        }
    };
    let d: Vec<f64> = d.iter().copied().collect();
    if d.iter().all(|v| v.is_finite()) {
        Some(d)
    } else {
        None
    }
}

/// Conjugate gradients on `PHP + (I - P)`; stops at negative curvature in descent mode.
fn newton_direction_cg(model: &EnergyModel, face: &Face, x: &[f64], pg: &[f64], descent: bool) -> Option<Vec<f64>> {
    let len = x.len();
    let apply = |v: &[f64]| {
        let pv = face.apply(v);
        let hpv = face.apply(&model.hess_apply(x, &pv));
        (0..len).map(|i| hpv[i] + (v[i] - pv[i])).collect::<Vec<f64>>()
    };
    let mut sol = vec![0.0; len];
    let mut r: Vec<f64> = pg.iter().map(|v| -v).collect();
    let mut p = r.clone();
    let mut rr = norm_sq(&r);
    let target = 1e-12 * rr.sqrt();
    for _ in 0..(4 * len).max(50) {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap == 0.0 || (descent && pap < 0.0) {
            break;
        }
        let alpha = rr / pap;
        for i in 0..len {
            sol[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = norm_sq(&r);
        if rr_new.sqrt() <= target {
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..len {
            p[i] = r[i] + beta * p[i];
        }
    }
    if norm(&sol) == 0.0 {
        // no usable curvature information: fall back to steepest descent on the face
        sol = pg.iter().map(|v| -v).collect();
    }
    Some(sol)
}

/// Minimizes `model` over `constraint` from `x0` (projected first).
pub(crate) fn minimize(
    model: &EnergyModel,
    constraint: &Constraint,
    x0: &[f64],
    opts: &OptimOptions,
    mut observer: Option<&mut dyn FnMut(&[f64])>,
) -> OptimOutcome {
    let mut x = constraint.project(x0);
    let mut f = model.value(&x);
    if !f.is_finite() {
        return OptimOutcome {
            x,
            value: f,
            iterations: 0,
            stationarity: f64::INFINITY,
            converged: false,
        };
    }
    let mut g = model.gradient(&x);
    let mut stat = stationarity(constraint, &x, &g);
    let mut step = 1.0 / (1.0 + norm(&g));
    let mut iterations = 0;
    let mut best = (x.clone(), f, stat);
    let mut stalled = 0;
    while iterations < opts.max_iters {
        if let Some(obs) = observer.as_mut() {
            obs(&x);
        }
        if stat <= opts.tol {
            break;
        }
        iterations += 1;
        let slack = 1e-15 * (1.0 + f.abs());
        let mut next: Option<(Vec<f64>, f64, Vec<f64>, f64)> = None;

        // when the face-restricted gradient is small against the full measure
        // the active set is wrong and only a projected gradient step can fix it
        let face = constraint
            .face(&x)
            .filter(|face| face.apply(&g).iter().fold(0.0f64, |m, v| m.max(v.abs())) >= 0.1 * stat);
        if let Some(face) = face {
            if let Some(d) = newton_direction(model, &face, &x, &g, NewtonMode::Descent) {
                let slope = dot(&g, &d);
                if slope < 0.0 {
                    let mut t = (opts.step_safety * model.max_step(&x, &d)).min(1.0);
                    for _ in 0..40 {
                        let raw: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                        let cand = constraint.project(&raw);
                        // a step that leaves the face is left to the projected gradient
                        // step, which is what identifies the new active constraints
                        let fc = model.value(&cand);
                        if dist(&cand, &raw) > 1e-12 * (1.0 + norm(&raw)) {
                            break;
                        }
                        if fc.is_finite() {
                            let gc = model.gradient(&cand);
                            let sc = stationarity(constraint, &cand, &gc);
                            if fc <= f + ARMIJO * t * slope || (fc <= f + 1e3 * slack && sc < stat) {
                                // near the edge of the domain the energy has a square-root
                                // wall, so a truncated step can pass Armijo far beyond the
                                // line minimum and land where the gradient is huge
                                let (mut best_t, mut best_f) = (t, fc);
                                for _ in 0..30 {
                                    let half = 0.5 * best_t;
                                    let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + half * b).collect();
                                    let ft = model.value(&trial);
                                    if !(ft < best_f) {
                                        break;
                                    }
                                    (best_t, best_f) = (half, ft);
                                }
                                if best_t < t {
                                    let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + best_t * b).collect();
                                    let gc = model.gradient(&cand);
                                    let sc = stationarity(constraint, &cand, &gc);
                                    next = Some((cand, best_f, gc, sc));
                                } else {
                                    next = Some((cand, fc, gc, sc));
                                }
                                break;
                            }
                        }
                        t *= 0.5;
                    }
                }
            }
        }

        let newton_step = next.is_some();
        if next.is_none() {
            for _ in 0..200 {
                let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                let cand = constraint.project(&trial);
                let dx = sub(&cand, &x);
                if norm(&dx) == 0.0 {
                    break;
                }
                let fc = model.value(&cand);
                if fc.is_finite() && fc <= f + dot(&g, &dx) + norm_sq(&dx) / (2.0 * step) + slack {
                    let gc = model.gradient(&cand);
                    let sc = stationarity(constraint, &cand, &gc);
                    if fc < f || sc < stat {
                        // same wall as for the Newton step: shorten along the
                        // projected arc while that still lowers the energy
                        let (mut best_s, mut best_f) = (step, fc);
                        for _ in 0..30 {
                            let half = 0.5 * best_s;
                            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - half * b).collect();
                            let ft = model.value(&constraint.project(&trial));
                            if !(ft < best_f) {
                                break;
                            }
                            (best_s, best_f) = (half, ft);
                        }
                        if best_s < step {
                            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - best_s * b).collect();
                            let cand = constraint.project(&trial);
                            let gc = model.gradient(&cand);
                            let sc = stationarity(constraint, &cand, &gc);
                            next = Some((cand, best_f, gc, sc));
                        } else {
                            next = Some((cand, fc, gc, sc));
                        }
                        break;
                    }
                }
                step *= 0.5;
            }
        }

        let Some((xn, fn_, gn, sn)) = next else {
            break;
        };
        // Barzilai–Borwein update, only from gradient moves: pairs from
        // truncated Newton steps can collapse the step length
        if !newton_step {
            let s = sub(&xn, &x);
            let y = sub(&gn, &g);
            let sy = dot(&s, &y);
            if sy > 0.0 {
                step = (norm_sq(&s) / sy).clamp(1e-14, 1e8);
            } else {
                step = (step * 2.0).min(1e8);
            }
        }
        // at the rounding floor steps keep being accepted on noise alone
        if fn_ < f - 1e3 * slack || sn < 0.5 * best.2 {
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > STALL_LIMIT {
                (x, f, stat) = best;
                break;
            }
        }
        if sn < best.2 {
            best = (xn.clone(), fn_, sn);
        }
        x = xn;
        f = fn_;
        g = gn;
        stat = sn;
    }
    OptimOutcome {
        converged: stat <= opts.tol,
        x,
        value: f,
        iterations,
        stationarity: stat,
    }
}

/// Newton iteration on the face-restricted stationarity equations `P∇S = 0`
/// with backtracking on `|P∇S|`; finds saddle points as well as minima.
pub(crate) fn find_stationary(model: &EnergyModel, constraint: &Constraint, x0: &[f64], opts: &OptimOptions) -> OptimOutcome {
    let mut x = constraint.project(x0);
    let mut f = model.value(&x);
    let fail = |x: Vec<f64>, f: f64, it: usize, stat: f64| OptimOutcome {
        x,
        value: f,
        iterations: it,
        stationarity: stat,
        converged: false,
    };
    if !f.is_finite() {
        return fail(x, f, 0, f64::INFINITY);
    }
    let mut g = model.gradient(&x);
    let mut stat = stationarity(constraint, &x, &g);
    let mut iterations = 0;
    while iterations < opts.max_iters && stat > opts.tol {
        iterations += 1;
        let Some(face) = constraint.face(&x) else {
            return fail(x, f, iterations, stat);
        };
        let merit = norm(&face.apply(&g));
        let Some(d) = newton_direction(model, &face, &x, &g, NewtonMode::Stationary) else {
            return fail(x, f, iterations, stat);
        };
        let mut t = (opts.step_safety * model.max_step(&x, &d)).min(1.0);
        let mut accepted = false;
        for _ in 0..50 {
            let cand = constraint.project(&x.iter().zip(&d).map(|(a, b)| a + t * b).collect::<Vec<_>>());
            let fc = model.value(&cand);
            if fc.is_finite() {
                let gc = model.gradient(&cand);
                let mc = norm(&face.apply(&gc));
                if mc <= (1.0 - ARMIJO * t) * merit || (mc < merit && dist(&cand, &x) < 1e-12) {
                    x = cand;
                    f = fc;
                    stat = stationarity(constraint, &x, &gc);
                    g = gc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    OptimOutcome {
        converged: stat <= opts.tol,
        x,
        value: f,
        iterations,
        stationarity: stat,
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton for a square system `F(x) = 0` whose domain is limited by
/// `max_step`; `eval` returns `None` outside the domain. Stops when
/// `|F|_∞ ≤ tol` or no step decreases `|F|`. Returns the last iterate and
/// the iteration count.
pub(crate) fn newton_system(
    x0: &[f64],
    eval: impl Fn(&[f64]) -> Option<Vec<f64>>,
    jac: impl Fn(&[f64]) -> DMatrix<f64>,
    max_step: impl Fn(&[f64], &[f64]) -> f64,
    tol: f64,
    max_iters: usize,
    safety: f64,
) -> (Vec<f64>, usize) {
    let mut x = x0.to_vec();
    let Some(mut f) = eval(&x) else {
        return (x, 0);
    };
    let mut iterations = 0;
    while iterations < max_iters && sup_norm(&f) > tol {
        iterations += 1;
        let j = jac(&x);
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|v| -v));
        let d = match j.clone().lu().solve(&rhs) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => match j.svd(true, true).solve(&rhs, 1e-14) {
                Ok(d) => d,
                Err(_) => break,
            },
        };
        let d: Vec<f64> = d.iter().copied().collect();
        let merit = norm(&f);
        let mut t = (safety * max_step(&x, &d)).min(1.0);
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            if let Some(fc) = eval(&cand) {
                if norm(&fc) <= (1.0 - ARMIJO * t) * merit {
                    x = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (x, iterations)
}
