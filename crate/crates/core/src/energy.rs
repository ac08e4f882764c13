//! Smooth energy model shared by the convex and variational solvers.
//!
//! On a flat grid vector `x ∈ ℝ^{(T+2)N}` the model evaluates
//!
//! ```text
//! S(x) = Σ_{k=0}^T Φ(Δx(k)) + (w/2) Σ_{n=1}^T |x(n)|² - Σ_{n=1}^T ⟨h(n)|x(n)⟩
//!        + G(x(0), x(T+1)) - Σ_{n=1}^T F(n, x(n))
//! ```
//!
//! plus the optional barrier `-μ Σ_k ln(1 - |Δx(k)|²/a²)`, together with its
//! gradient and Hessian. The value is `+∞` as soon as some
//! `|Δx(k)|` reaches `a`, which is where `∇Φ` blows up.

use nalgebra::DMatrix;

use crate::boundary_laws::BoundaryPotential;
use crate::grid::InteriorFunction;
use crate::phi_maps::PhiMap;
use crate::variational::PotentialField;
use crate::vecops::{compensated_sum, dot, norm};

#[derive(Clone, Copy)]
pub(crate) struct EnergyModel<'a> {
    pub phi: &'a PhiMap,
    pub dim: usize,
    pub horizon: usize,
    pub quad_weight: f64,
    pub forcing: Option<&'a InteriorFunction>,
    pub boundary: Option<&'a BoundaryPotential>,
    pub field: Option<&'a PotentialField>,
    /// Weight `μ` of the logarithmic barrier on `|Δx(k)| < a`; zero disables it.
    pub barrier: f64,
}

impl<'a> EnergyModel<'a> {
    pub fn len(&self) -> usize {
        (self.horizon + 2) * self.dim
    }

    fn block<'x>(&self, x: &'x [f64], n: usize) -> &'x [f64] {
        &x[n * self.dim..(n + 1) * self.dim]
    }

    fn diff(&self, x: &[f64], k: usize) -> Vec<f64> {
        self.block(x, k + 1)
            .iter()
            .zip(self.block(x, k))
            .map(|(a, b)| a - b)
            .collect()
    }

    fn boundary_vec(&self, x: &[f64]) -> Vec<f64> {
        [self.block(x, 0), self.block(x, self.horizon + 1)].concat()
    }

    pub fn sup_diff(&self, x: &[f64]) -> f64 {
        (0..=self.horizon).map(|k| norm(&self.diff(x, k))).fold(0.0, f64::max)
    }

    fn barrier_gap(&self, y: &[f64]) -> f64 {
        let a = self.phi.radius();
        a * a - dot(y, y)
    }

    /// `a - sup_k |Δx(k)|`.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.phi.radius() - self.sup_diff(x)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let a = self.phi.radius();
        let mut terms = Vec::with_capacity(3 * self.horizon + 4);
        for k in 0..=self.horizon {
            let s = norm(&self.diff(x, k));
            if !(s < a) {
                return f64::INFINITY;
            }
            terms.push(self.phi.potential_radial(s));
            if self.barrier > 0.0 {
                terms.push(-self.barrier * (1.0 - (s / a) * (s / a)).ln());
            }
        }
        for n in 1..=self.horizon {
            let xn = self.block(x, n);
            if self.quad_weight != 0.0 {
                terms.push(0.5 * self.quad_weight * dot(xn, xn));
            }
            if let Some(h) = self.forcing {
                terms.push(-dot(h.at(n), xn));
            }
            if let Some(f) = self.field {
                terms.push(-f.value(n, xn));
            }
        }
        if let Some(g) = self.boundary {
            terms.push(g.value(&self.boundary_vec(x)));
        }
        let v = compensated_sum(terms);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    /// Gradient; requires `sup_diff(x) < a`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let t = self.horizon;
        let mut g = vec![0.0; self.len()];
        let mut flux = vec![0.0; d];
        for k in 0..=t {
            let y = self.diff(x, k);
            self.phi.eval_into(&y, &mut flux);
            if self.barrier > 0.0 {
                let c = 2.0 * self.barrier / self.barrier_gap(&y);
                flux.iter_mut().zip(&y).for_each(|(f, yi)| *f += c * yi);
            }
            for i in 0..d {
                g[k * d + i] -= flux[i];
                g[(k + 1) * d + i] += flux[i];
            }
        }
        for n in 1..=t {
            let xn = self.block(x, n);
            let gn = &mut g[n * d..(n + 1) * d];
            if self.quad_weight != 0.0 {
                for (gi, xi) in gn.iter_mut().zip(xn) {
                    *gi += self.quad_weight * xi;
                }
            }
            if let Some(h) = self.forcing {
                for (gi, hi) in gn.iter_mut().zip(h.at(n)) {
                    *gi -= hi;
                }
            }
            if let Some(f) = self.field {
                for (gi, fi) in gn.iter_mut().zip(f.gradient(n, xn)) {
                    *gi -= fi;
                }
            }
        }
        if let Some(pot) = self.boundary {
            let gb = pot.gradient(&self.boundary_vec(x));
            for i in 0..d {
                g[i] += gb[i];
                g[(t + 1) * d + i] += gb[d + i];
            }
        }
        g
    }

    /// Hessian-vector product `∇²S(x) v`.
    pub fn hess_apply(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let t = self.horizon;
        let mut out = vec![0.0; self.len()];
        let mut jv = vec![0.0; d];
        for k in 0..=t {
            let dv = self.diff(v, k);
            let y = self.diff(x, k);
            self.phi.jacobian_apply(&y, &dv, &mut jv);
            if self.barrier > 0.0 {
                let gap = self.barrier_gap(&y);
                let c = 2.0 * self.barrier / gap;
                let r = 4.0 * self.barrier * dot(&y, &dv) / (gap * gap);
                for i in 0..d {
                    jv[i] += c * dv[i] + r * y[i];
                }
            }
            for i in 0..d {
                out[k * d + i] -= jv[i];
                out[(k + 1) * d + i] += jv[i];
            }
        }
        for n in 1..=t {
            let vn = self.block(v, n);
            if self.quad_weight != 0.0 {
                for i in 0..d {
                    out[n * d + i] += self.quad_weight * vn[i];
                }
            }
            if let Some(f) = self.field {
                let hv = f.hessian_apply(n, self.block(x, n), vn);
                for i in 0..d {
                    out[n * d + i] -= hv[i];
                }
            }
        }
        if let Some(pot) = self.boundary {
            let hb = pot.hessian_apply(&self.boundary_vec(x), &self.boundary_vec(v));
            for i in 0..d {
                out[i] += hb[i];
                out[(t + 1) * d + i] += hb[d + i];
            }
        }
        out
    }

    /// Dense Hessian, assembled blockwise.
    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let t = self.horizon;
        let len = self.len();
        let mut h = DMatrix::<f64>::zeros(len, len);
        for k in 0..=t {
            let y = self.diff(x, k);
            let mut jac = self.phi.jacobian(&y);
            if self.barrier > 0.0 {
                let gap = self.barrier_gap(&y);
                for i in 0..d {
                    jac[i * d + i] += 2.0 * self.barrier / gap;
                    for j in 0..d {
                        jac[i * d + j] += 4.0 * self.barrier * y[i] * y[j] / (gap * gap);
                    }
                }
            }
            for i in 0..d {
                for j in 0..d {
                    let v = jac[i * d + j];
                    h[(k * d + i, k * d + j)] += v;
                    h[((k + 1) * d + i, (k + 1) * d + j)] += v;
                    h[(k * d + i, (k + 1) * d + j)] -= v;
                    h[((k + 1) * d + i, k * d + j)] -= v;
                }
            }
        }
        let mut e = vec![0.0; d];
        for n in 1..=t {
            if self.quad_weight != 0.0 {
                for i in 0..d {
                    h[(n * d + i, n * d + i)] += self.quad_weight;
                }
            }
            if let Some(f) = self.field {
                let xn = self.block(x, n);
                for j in 0..d {
                    e.iter_mut().for_each(|v| *v = 0.0);
                    e[j] = 1.0;
                    let col = f.hessian_apply(n, xn, &e);
                    for i in 0..d {
                        h[(n * d + i, n * d + j)] -= col[i];
                    }
                }
            }
        }
        if let Some(pot) = self.boundary {
            let z = self.boundary_vec(x);
            let index = |i: usize| if i < d { i } else { (t + 1) * d + (i - d) };
            let mut e = vec![0.0; 2 * d];
            for j in 0..2 * d {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[j] = 1.0;
                let col = pot.hessian_apply(&z, &e);
                for i in 0..2 * d {
                    h[(index(i), index(j))] += col[i];
                }
            }
        }
        h
    }

    /// Largest `t > 0` with `|Δx(k) + tΔv(k)| < a` for all `k` (may be `∞`).
    pub fn max_step(&self, x: &[f64], v: &[f64]) -> f64 {
        let a = self.phi.radius();
        let mut best = f64::INFINITY;
        for k in 0..=self.horizon {
            let p = self.diff(x, k);
            let q = self.diff(v, k);
            let qq = dot(&q, &q);
            if qq == 0.0 {
                continue;
            }
            let pq = dot(&p, &q);
            let pp = dot(&p, &p);
            let disc = (pq * pq - qq * (pp - a * a)).max(0.0);
            // positive root of qq t² + 2 pq t + pp - a² = 0, written stably
            let root = if pq >= 0.0 {
                (a * a - pp).max(0.0) / (pq + disc.sqrt())
            } else {
                (-pq + disc.sqrt()) / qq
            };
            best = best.min(root);
        }
        best
    }
}
