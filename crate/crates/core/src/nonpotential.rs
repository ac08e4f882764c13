//! General right-hand sides `f(n, u(0), ..., u(T+1))` through the fixed
//! point map `𝒮 = S_γ ∘ N_f`, where `N_f(u)(n) = f(n, u) + u(n)` and `S_γ`
//! solves the regularized problem. Fixed points of `𝒮` are exactly the
//! solutions; the homotopy `u = μ𝒮(u)` is followed along an increasing grid
//! of `μ` values with warm starts.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anderson::Anderson;
use crate::boundary_laws::BoundaryLaw;
use crate::convex_core::{self, SolveOptions, SolveReport};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, InteriorFunction};
use crate::phi_maps::PhiMap;
use crate::vecops::{dist, dot, norm, norm_sq};

/// Evaluator of a host-supplied right-hand side: `(n, u) ↦ f(n, u(0..T+1))`.
pub type FieldFn = Arc<dyn Fn(usize, &GridFunction) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct CustomField {
    pub dim: usize,
    pub horizon: usize,
    pub eval: FieldFn,
}

impl fmt::Debug for CustomField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomField")
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

/// Catalog of right-hand sides. Sequences indexed by `n` have `T` entries;
/// `h` has `T` rows of length `N`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearField {
    /// `-u(n) + h(n)`: the system reduces to the regularized problem.
    Linear { h: Vec<Vec<f64>> },
    /// `(a_nn - 1 + Σ_{j≠n} a_nj |u(j)|² / (1 + |u(n)|²)) u(n)
    ///  + h(n) / (1 + |u(n)| + |u(T+1) - u(0)|)` with a `T×T` matrix `a`.
    CoupledMatrix { a: Vec<Vec<f64>>, h: Vec<Vec<f64>> },
    /// `-κ u(n) + β u(n-1) / (1 + |u(n-1)|) + h(n)`: a dissipative part plus a bounded one.
    DissipativePlusBounded { kappa: f64, beta: f64, h: Vec<Vec<f64>> },
    /// `-ε|u(n)|^{p-2} u(n) + Δu(n) / √(1 + |Δu(n)|²) + h(n)`.
    DelayDifference { eps: f64, p: f64, h: Vec<Vec<f64>> },
    /// `b(n)|u(n)|^{α-1} u(n) + c(n)(ν_i sin u_i(n))_i + h(n)`.
    PendulumPower { alpha: f64, b: Vec<f64>, c: Vec<f64>, nu: Vec<f64>, h: Vec<Vec<f64>> },
    #[serde(skip)]
    Custom(CustomField),
}

impl NonlinearField {
    /// `(N, T)` of the grid the field is defined on.
    pub fn shape(&self) -> Result<(usize, usize)> {
        let from_h = |h: &Vec<Vec<f64>>| -> Result<(usize, usize)> {
            let t = h.len();
            let n = h.first().map_or(0, Vec::len);
            if t == 0 || n == 0 || h.iter().any(|r| r.len() != n) {
                return Err(Error::Dimension("h must be a non-empty T×N array".into()));
            }
            if h.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("h"));
            }
            Ok((n, t))
        };
        match self {
            Self::Custom(c) => Ok((c.dim, c.horizon)),
            Self::Linear { h } | Self::CoupledMatrix { h, .. } | Self::DissipativePlusBounded { h, .. } | Self::DelayDifference { h, .. } | Self::PendulumPower { h, .. } => from_h(h),
        }
    }

    /// Checks parameters and their shapes.
    pub fn validate(&self) -> Result<(usize, usize)> {
        let (n, t) = self.shape()?;
        match self {
            Self::CoupledMatrix { a, .. } => {
                if a.len() != t || a.iter().any(|r| r.len() != t) {
                    return Err(Error::Dimension(format!("a must be {t}×{t}")));
                }
                if a.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("a"));
                }
            }
            Self::DissipativePlusBounded { kappa, beta, .. } => {
                if !(kappa.is_finite() && beta.is_finite()) {
                    return Err(Error::NonFinite("kappa/beta"));
                }
            }
            Self::DelayDifference { eps, p, .. } => {
                if !(*eps > 0.0 && eps.is_finite()) || !(*p >= 2.0 && p.is_finite()) {
                    return Err(Error::Domain(format!("need eps > 0 and p >= 2, got eps = {eps}, p = {p}")));
                }
            }
            Self::PendulumPower { alpha, b, c, nu, .. } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
                }
                if b.len() != t || c.len() != t || nu.len() != n {
                    return Err(Error::Dimension("b, c need T entries and nu needs N".into()));
                }
            }
            Self::Linear { .. } | Self::Custom(_) => {}
        }
        Ok((n, t))
    }

    /// `f(n, u(0), ..., u(T+1))` for `n = 1..T`.
    pub fn eval(&self, n: usize, u: &GridFunction) -> Vec<f64> {
        let x = u.at(n);
        match self {
            Self::Linear { h } => x.iter().zip(&h[n - 1]).map(|(a, b)| b - a).collect(),
            Self::CoupledMatrix { a, h } => {
                let xn2 = norm_sq(x);
                let coupling: f64 = (1..=u.horizon())
                    .filter(|&j| j != n)
                    .map(|j| a[n - 1][j - 1] * norm_sq(u.at(j)))
                    .sum();
                let factor = a[n - 1][n - 1] - 1.0 + coupling / (1.0 + xn2);
                let bc_gap = dist(u.at(0), u.at(u.horizon() + 1));
                let damp = 1.0 / (1.0 + xn2.sqrt() + bc_gap);
                x.iter().zip(&h[n - 1]).map(|(xi, hi)| factor * xi + damp * hi).collect()
            }
            Self::DissipativePlusBounded { kappa, beta, h } => {
                let prev = u.at(n - 1);
                let s = beta / (1.0 + norm(prev));
                (0..x.len()).map(|i| -kappa * x[i] + s * prev[i] + h[n - 1][i]).collect()
            }
            Self::DelayDifference { eps, p, h } => {
                let r = norm(x);
                let power = if r > 0.0 { eps * r.powf(p - 2.0) } else { 0.0 };
                let d = u.diff(n);
                let s = (1.0 + norm_sq(&d)).sqrt().recip();
                (0..x.len()).map(|i| -power * x[i] + s * d[i] + h[n - 1][i]).collect()
            }
            Self::PendulumPower { alpha, b, c, nu, h } => {
                let r = norm(x);
                let radial = if r > 0.0 { b[n - 1] * r.powf(alpha - 1.0) } else { 0.0 };
                (0..x.len())
                    .map(|i| radial * x[i] + c[n - 1] * nu[i] * x[i].sin() + h[n - 1][i])
                    .collect()
            }
            Self::Custom(c) => (c.eval)(n, u),
        }
    }
}

/// `N_f(u)(n) = f(n, u) + u(n)`.
pub fn apply_nf(f: &NonlinearField, u: &GridFunction) -> InteriorFunction {
    let rows: Vec<f64> = (1..=u.horizon())
        .flat_map(|n| {
            let v = f.eval(n, u);
            v.into_iter().zip(u.at(n)).map(|(a, b)| a + b).collect::<Vec<_>>()
        })
        .collect();
    InteriorFunction::from_flat(u.dim(), u.horizon(), rows).expect("shape follows u")
}

/// `max_n |-Δ[φ(Δu(n-1))] - f(n, u)|`.
pub fn field_interior_residual(phi: &PhiMap, f: &NonlinearField, u: &GridFunction) -> f64 {
    convex_core::equation_residual(phi, u, |n| f.eval(n, u))
}

/// Controls of the homotopy `u = μ𝒮(u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomotopyOptions {
    pub mu_grid: Vec<f64>,
    pub damping: f64,
    pub anderson_depth: usize,
    /// Fixed-point iterations allowed per grid value.
    pub max_steps: usize,
}

impl Default for HomotopyOptions {
    fn default() -> Self {
        Self {
            mu_grid: vec![0.1, 0.25, 0.5, 0.75, 1.0],
            damping: 0.5,
            anderson_depth: 5,
            max_steps: 2000,
        }
    }
}

impl HomotopyOptions {
    pub fn validate(&self) -> Result<()> {
        let g = &self.mu_grid;
        if g.is_empty() || g.last() != Some(&1.0) {
            return Err(Error::Domain("mu_grid must end at 1".into()));
        }
        if !(g[0] > 0.0) || g.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("mu_grid must be strictly increasing in (0, 1]".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Domain(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_steps == 0 {
            return Err(Error::Domain("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Evaluates `𝒮(u)`, warm starting the regularized solve from the previous output.
struct FixedPointMap<'a> {
    phi: &'a PhiMap,
    law: &'a BoundaryLaw,
    f: &'a NonlinearField,
    opts: &'a SolveOptions,
    warm: Option<Vec<f64>>,
    evaluations: usize,
}

impl FixedPointMap<'_> {
    fn apply(&mut self, u: &GridFunction) -> Result<GridFunction> {
        self.evaluations += 1;
        let h = apply_nf(self.f, u);
        if h.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("N_f(u)"));
        }
        let report = convex_core::q_general_report(self.phi, self.law, &h, self.opts, self.warm.as_deref())?;
        if !report.converged {
            return Err(Error::NotConverged(Box::new(report)));
        }
        self.warm = Some(report.solution.as_slice().to_vec());
        Ok(report.solution)
    }
}

/// Safeguarded Anderson–Picard iteration on `u = μ𝒮(u)` along
/// `homotopy.mu_grid`. Non-convergence of the outer iteration is reported
/// in the returned report (`converged = false`), never as an error; errors
/// of the inner regularized solves propagate.
pub fn picard_solve(
    phi: &PhiMap,
    law: &BoundaryLaw,
    f: &NonlinearField,
    opts: &SolveOptions,
    homotopy: &HomotopyOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    homotopy.validate()?;
    let (dim, horizon) = f.validate()?;
    if law.dim() != dim {
        return Err(Error::Dimension(format!("law acts on R^{} but the field has dimension {dim}", law.dim())));
    }
    let mut map = FixedPointMap {
        phi,
        law,
        f,
        opts,
        warm: None,
        evaluations: 0,
    };
    let tol = opts.tol_residual;
    let mut u = GridFunction::zeros(dim, horizon)?;
    let mut last_s = u.clone();
    let mut gap = f64::INFINITY;

    for (stage, &mu) in homotopy.mu_grid.iter().enumerate() {
        let final_stage = stage + 1 == homotopy.mu_grid.len();
        let stage_tol = if final_stage { tol } else { 1e-8 };
        let mut acc = Anderson::new(homotopy.anderson_depth, homotopy.damping);
        let mut prev_gap = f64::INFINITY;
        for _ in 0..homotopy.max_steps {
            let s = map.apply(&u)?;
            let target: Vec<f64> = s.as_slice().iter().map(|v| mu * v).collect();
            gap = dist(u.as_slice(), &target);
            last_s = s;
            if gap <= stage_tol {
                if !final_stage {
                    break;
                }
                let interior = field_interior_residual(phi, f, &last_s);
                let boundary = convex_core::boundary_residual(phi, law, &last_s);
                if interior <= tol && boundary <= tol {
                    break;
                }
            }
            // fall back to the plain damped step when acceleration stops helping
            let mut next = if gap > prev_gap {
                acc.reset();
                acc.damped(u.as_slice(), &target)
            } else {
                acc.step(u.as_slice(), &target)
            };
            if next.iter().any(|v| !v.is_finite()) {
                acc.reset();
                next = acc.damped(u.as_slice(), &target);
            }
            prev_gap = gap;
            u = GridFunction::from_flat_unchecked(dim, horizon, next);
        }
    }

    let interior = field_interior_residual(phi, f, &last_s);
    let mut report = convex_core::build_report(phi, law, last_s, interior, map.evaluations, None, tol);
    report.fixed_point_gap = Some(gap);
    if !(gap <= tol) {
        report.converged = false;
        report.status = format!("fixed-point iteration did not converge (gap {gap:.3e})");
    }
    Ok(report)
}

/// Outcome of [`check_thf1`].
#[derive(Clone, Debug, Serialize)]
pub struct Thf1Check {
    /// Every column of `c` sums to less than one.
    pub column_sums_ok: bool,
    /// Largest `⟨f(n, x)|xⁿ⟩ - (c_nn - 1)|xⁿ|² - Σ_{j≠n} c_nj |xʲ|² - c` seen; `≤ 0` is consistent.
    pub worst_violation: f64,
}

/// Samples the growth condition
/// `⟨f(n, x)|xⁿ⟩ ≤ (c_nn - 1)|xⁿ|² + Σ_{j≠n} c_nj |xʲ|² + c`
/// at `samples` random grid points with magnitudes spread over six decades.
pub fn check_thf1(f: &NonlinearField, c_matrix: &[Vec<f64>], c_const: f64, samples: usize, seed: u64) -> Result<Thf1Check> {
    let (dim, horizon) = f.validate()?;
    if c_matrix.len() != horizon || c_matrix.iter().any(|r| r.len() != horizon) {
        return Err(Error::Dimension(format!("c must be {horizon}×{horizon}")));
    }
    let column_sums_ok = (0..horizon).all(|j| (0..horizon).map(|i| c_matrix[i][j]).sum::<f64>() < 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let values: Vec<f64> = (0..(horizon + 2) * dim)
            .map(|_| {
                let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
                scale * rng.gen_range(-1.0..1.0)
            })
            .collect();
        let u = GridFunction::from_flat_unchecked(dim, horizon, values);
        for n in 1..=horizon {
            let lhs = dot(&f.eval(n, &u), u.at(n));
            let mut rhs = (c_matrix[n - 1][n - 1] - 1.0) * norm_sq(u.at(n)) + c_const;
            for j in (1..=horizon).filter(|&j| j != n) {
                rhs += c_matrix[n - 1][j - 1] * norm_sq(u.at(j));
            }
            worst = worst.max(lhs - rhs);
        }
    }
    Ok(Thf1Check {
        column_sums_ok,
        worst_violation: worst,
    })
}
