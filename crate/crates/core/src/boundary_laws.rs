//! Maximal monotone boundary operators `γ ⊂ ℝ²ᴺ × ℝ²ᴺ`.
//!
//! Two families are representable: subdifferentials `γ = ∂(G + I_K)` of a
//! smooth convex potential plus the indicator of a closed convex set, and
//! linear laws `γ(z) = Mz` with `M` positive semidefinite (not necessarily
//! symmetric). Boundary vectors are laid out as `z = (x, y) ∈ ℝᴺ × ℝᴺ` with
//! `x = u(0)` and `y = u(T+1)`; the matching "flux" vector is
//! `w = (φ(Δu(0)), -φ(Δu(T)))` and the boundary condition reads `w ∈ γ(z)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryPair, GridFunction};
use crate::phi_maps::PhiMap;
use crate::vecops::{axpy, dist, dot, norm, norm_sq, sub};

/// Tolerance of the positive semidefiniteness test on `(M + Mᵀ)/2`.
pub const PSD_TOL: f64 = 1e-12;
/// Tolerance of the orthogonality test `‖UᵀU - I‖ ≤ ORTHO_TOL`.
pub const ORTHO_TOL: f64 = 1e-12;
/// Absolute tolerance on the optimality residual of the iterative prox.
pub const PROX_TOL: f64 = 1e-12;

const PROX_MAX_ITERS: usize = 100_000;
const ACTIVE_TOL: f64 = 1e-12;

/// One block of a product set `K = K_left × K_right`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Zero,
    Full,
}

/// Closed convex subsets of `ℝᴺ × ℝᴺ` with closed-form projections.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvexSet {
    /// `{z₀}`.
    Point(Vec<f64>),
    FullSpace { dim: usize },
    Product { dim: usize, left: Factor, right: Factor },
    /// `{(x, Ux)}` for an orthogonal `U` stored row-major.
    GraphOfOrthogonal { dim: usize, u: Vec<f64> },
    /// Span of an orthonormal family of vectors in `ℝ²ᴺ`.
    LinearSubspace { dim: usize, basis: Vec<Vec<f64>> },
    /// Closed strip `{|x - y| ≤ σ}`.
    Strip { dim: usize, sigma: f64 },
    /// Coordinatewise bounds; infinite bounds are allowed.
    BoxSet { lower: Vec<f64>, upper: Vec<f64> },
}

impl ConvexSet {
    pub fn point(z0: Vec<f64>) -> Result<Self> {
        if z0.is_empty() || z0.len() % 2 != 0 {
            return Err(Error::Dimension(format!("point must lie in R^2N, got length {}", z0.len())));
        }
        if !z0.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("point set"));
        }
        Ok(Self::Point(z0))
    }

    pub fn origin(dim: usize) -> Self {
        Self::Point(vec![0.0; 2 * dim])
    }

    /// Rejects `U` with `‖UᵀU - I‖_max > ORTHO_TOL`.
    pub fn graph_of_orthogonal(dim: usize, u: Vec<f64>) -> Result<Self> {
        if u.len() != dim * dim {
            return Err(Error::Dimension(format!("U must have {} entries, got {}", dim * dim, u.len())));
        }
        let m = DMatrix::from_row_slice(dim, dim, &u);
        let defect = (m.transpose() * &m - DMatrix::identity(dim, dim)).amax();
        if !(defect <= ORTHO_TOL) {
            return Err(Error::InvalidLaw(format!("U is not orthogonal: |U^T U - I| = {defect:e}")));
        }
        Ok(Self::GraphOfOrthogonal { dim, u })
    }

    /// Span of the given vectors of `ℝ²ᴺ`; they are orthonormalized and
    /// linearly dependent ones dropped.
    pub fn linear_subspace(dim: usize, spanning: &[Vec<f64>]) -> Result<Self> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in spanning {
            if v.len() != 2 * dim {
                return Err(Error::Dimension(format!("basis vector of length {} in R^{}", v.len(), 2 * dim)));
            }
            let scale = norm(v);
            if !scale.is_finite() {
                return Err(Error::NonFinite("subspace basis"));
            }
            let mut w = v.clone();
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&w, b);
                    axpy(-c, b, &mut w);
                }
            }
            let len = norm(&w);
            if len > 1e-10 * scale.max(1e-300) {
                basis.push(w.iter().map(|x| x / len).collect());
            }
        }
        Ok(Self::LinearSubspace { dim, basis })
    }

    pub fn strip(dim: usize, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Domain(format!("strip width must be positive, got {sigma}")));
        }
        Ok(Self::Strip { dim, sigma })
    }

    pub fn box_set(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() || lower.len() % 2 != 0 {
            return Err(Error::Dimension("box bounds must both lie in R^2N".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(Error::Domain("box requires lower <= upper coordinatewise".into()));
        }
        Ok(Self::BoxSet { lower, upper })
    }

    /// `N`, half the ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            Self::Point(z) => z.len() / 2,
            Self::BoxSet { lower, .. } => lower.len() / 2,
            Self::FullSpace { dim }
            | Self::Product { dim, .. }
            | Self::GraphOfOrthogonal { dim, .. }
            | Self::LinearSubspace { dim, .. }
            | Self::Strip { dim, .. } => *dim,
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim();
        match self {
            Self::Point(z0) => z0.clone(),
            Self::FullSpace { .. } => z.to_vec(),
            Self::Product { left, right, .. } => {
                let mut out = z.to_vec();
                if *left == Factor::Zero {
                    out[..n].iter_mut().for_each(|v| *v = 0.0);
                }
                if *right == Factor::Zero {
                    out[n..].iter_mut().for_each(|v| *v = 0.0);
                }
                out
            }
            Self::GraphOfOrthogonal { u, .. } => {
                // minimize |x' - a|² + |Ux' - b|²  ⇒  x' = (a + Uᵀb)/2
                let (a, b) = z.split_at(n);
                let x: Vec<f64> = (0..n)
                    .map(|i| 0.5 * (a[i] + (0..n).map(|k| u[k * n + i] * b[k]).sum::<f64>()))
                    .collect();
                let y: Vec<f64> = (0..n).map(|i| (0..n).map(|k| u[i * n + k] * x[k]).sum()).collect();
                [x, y].concat()
            }
            Self::LinearSubspace { basis, .. } => {
                let mut out = vec![0.0; 2 * n];
                for b in basis {
                    axpy(dot(z, b), b, &mut out);
                }
                out
            }
            Self::Strip { sigma, .. } => {
                let (x, y) = z.split_at(n);
                let d = sub(x, y);
                let len = norm(&d);
                if len <= *sigma {
                    return z.to_vec();
                }
                let shrink = sigma / len;
                let mut out = vec![0.0; 2 * n];
                for i in 0..n {
                    let m = 0.5 * (x[i] + y[i]);
                    out[i] = m + 0.5 * d[i] * shrink;
                    out[n + i] = m - 0.5 * d[i] * shrink;
                }
                out
            }
            Self::BoxSet { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| v.clamp(*l, *u))
                .collect(),
        }
    }

    pub fn distance(&self, z: &[f64]) -> f64 {
        dist(z, &self.project(z))
    }

    /// Membership up to `tol·(1 + |z|)`.
    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        self.distance(z) <= tol * (1.0 + norm(z))
    }

    pub fn contains_origin(&self) -> bool {
        self.contains(&vec![0.0; 2 * self.dim()], 0.0)
    }

    /// Projection of `w` onto the normal cone `N_K(z)`; `z` is assumed to
    /// lie in `K` (callers pass a projected point).
    pub fn normal_cone_project(&self, z: &[f64], w: &[f64]) -> Vec<f64> {
        let n = self.dim();
        match self {
            Self::Point(_) => w.to_vec(),
            Self::FullSpace { .. } => vec![0.0; 2 * n],
            Self::Product { left, right, .. } => {
                let mut out = w.to_vec();
                if *left == Factor::Full {
                    out[..n].iter_mut().for_each(|v| *v = 0.0);
                }
                if *right == Factor::Full {
                    out[n..].iter_mut().for_each(|v| *v = 0.0);
                }
                out
            }
            Self::GraphOfOrthogonal { .. } | Self::LinearSubspace { .. } => sub(w, &self.project(w)),
            Self::Strip { sigma, .. } => {
                let (x, y) = z.split_at(n);
                let d = sub(x, y);
                let len = norm(&d);
                if len < sigma * (1.0 - ACTIVE_TOL) || len == 0.0 {
                    return vec![0.0; 2 * n];
                }
                // ray spanned by (d̂, -d̂)/√2
                let scale = 1.0 / (len * std::f64::consts::SQRT_2);
                let e: Vec<f64> = d.iter().map(|v| v * scale).chain(d.iter().map(|v| -v * scale)).collect();
                let c = dot(w, &e).max(0.0);
                e.iter().map(|v| v * c).collect()
            }
            Self::BoxSet { lower, upper } => (0..2 * n)
                .map(|i| {
                    let (l, u, zi, wi) = (lower[i], upper[i], z[i], w[i]);
                    if l == u {
                        wi
                    } else if zi <= l + ACTIVE_TOL * (1.0 + l.abs()) {
                        wi.min(0.0)
                    } else if zi >= u - ACTIVE_TOL * (1.0 + u.abs()) {
                        wi.max(0.0)
                    } else {
                        0.0
                    }
                })
                .collect(),
        }
    }

    /// Orthonormal basis of the set when it is a linear subspace.
    pub(crate) fn subspace_basis(&self) -> Option<Vec<Vec<f64>>> {
        let n = self.dim();
        let unit = |i: usize| {
            let mut e = vec![0.0; 2 * n];
            e[i] = 1.0;
            e
        };
        match self {
            Self::Point(z0) if z0.iter().all(|v| *v == 0.0) => Some(Vec::new()),
            Self::FullSpace { .. } => Some((0..2 * n).map(unit).collect()),
            Self::Product { left, right, .. } => {
                let mut basis = Vec::new();
                if *left == Factor::Full {
                    basis.extend((0..n).map(unit));
                }
                if *right == Factor::Full {
                    basis.extend((n..2 * n).map(unit));
                }
                Some(basis)
            }
            Self::GraphOfOrthogonal { u, .. } => Some(
                (0..n)
                    .map(|j| {
                        let mut v = vec![0.0; 2 * n];
                        v[j] = std::f64::consts::FRAC_1_SQRT_2;
                        for i in 0..n {
                            v[n + i] = u[i * n + j] * std::f64::consts::FRAC_1_SQRT_2;
                        }
                        v
                    })
                    .collect(),
            ),
            Self::LinearSubspace { basis, .. } => Some(basis.clone()),
            _ => None,
        }
    }

    /// Projector (row-major `2N×2N`) onto the directions of the affine face
    /// of `K` containing `z`. `None` when the face is curved (strip boundary).
    pub(crate) fn face_projector(&self, z: &[f64]) -> Option<Vec<f64>> {
        let m = 2 * self.dim();
        let diag = |keep: &dyn Fn(usize) -> bool| {
            let mut p = vec![0.0; m * m];
            for i in 0..m {
                if keep(i) {
                    p[i * m + i] = 1.0;
                }
            }
            p
        };
        match self {
            Self::Point(_) => Some(vec![0.0; m * m]),
            Self::Strip { sigma, dim } => {
                let d = dist(&z[..*dim], &z[*dim..]);
                if d < sigma * (1.0 - ACTIVE_TOL) {
                    Some(diag(&|_| true))
                } else {
                    None
                }
            }
            Self::BoxSet { lower, upper } => Some(diag(&|i| {
                z[i] > lower[i] + ACTIVE_TOL * (1.0 + lower[i].abs())
                    && z[i] < upper[i] - ACTIVE_TOL * (1.0 + upper[i].abs())
            })),
            _ => {
                let basis = self.subspace_basis()?;
                let mut p = vec![0.0; m * m];
                for b in &basis {
                    for i in 0..m {
                        for j in 0..m {
                            p[i * m + j] += b[i] * b[j];
                        }
                    }
                }
                Some(p)
            }
        }
    }

    /// Whether `K + (ζ, ζ) = K` for every `ζ ∈ ℝᴺ`.
    pub fn is_shift_invariant(&self) -> bool {
        let n = self.dim();
        match self {
            Self::FullSpace { .. } | Self::Strip { .. } => true,
            Self::Product { left, right, .. } => *left == Factor::Full && *right == Factor::Full,
            Self::Point(_) => false,
            Self::BoxSet { lower, upper } => lower.iter().all(|l| *l == f64::NEG_INFINITY)
                && upper.iter().all(|u| *u == f64::INFINITY),
            Self::GraphOfOrthogonal { .. } | Self::LinearSubspace { .. } => (0..n).all(|i| {
                let mut e = vec![0.0; 2 * n];
                e[i] = 1.0;
                e[n + i] = 1.0;
                self.distance(&e) <= 1e-12
            }),
        }
    }

    /// Tangent cone at the origin (the set itself for subspaces).
    pub fn cone_at_origin(&self) -> ConvexSet {
        match self {
            Self::Point(z0) => Self::Point(vec![0.0; z0.len()]),
            Self::Strip { dim, .. } => Self::FullSpace { dim: *dim },
            Self::BoxSet { lower, upper } => Self::BoxSet {
                lower: lower.iter().map(|l| if *l < 0.0 { f64::NEG_INFINITY } else { 0.0 }).collect(),
                upper: upper.iter().map(|u| if *u > 0.0 { f64::INFINITY } else { 0.0 }).collect(),
            },
            other => other.clone(),
        }
    }

    /// Whether the set is bounded.
    pub fn is_bounded(&self) -> bool {
        match self {
            Self::Point(_) => true,
            Self::BoxSet { lower, upper } => lower.iter().chain(upper).all(|v| v.is_finite()),
            Self::LinearSubspace { basis, .. } => basis.is_empty(),
            Self::Product { left, right, .. } => *left == Factor::Zero && *right == Factor::Zero,
            _ => false,
        }
    }
}

/// A smooth convex function on `ℝ²ᴺ` supplied by host code.
pub trait SmoothConvex: Send + Sync + fmt::Debug {
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vec<f64>;
    /// Hessian-vector product; central differences of the gradient by default.
    fn hessian_apply(&self, z: &[f64], d: &[f64]) -> Vec<f64> {
        let len = norm(d);
        if len == 0.0 {
            return vec![0.0; d.len()];
        }
        let h = 1e-6 * (1.0 + norm(z)) / len;
        let zp: Vec<f64> = z.iter().zip(d).map(|(a, b)| a + h * b).collect();
        let zm: Vec<f64> = z.iter().zip(d).map(|(a, b)| a - h * b).collect();
        self.gradient(&zp)
            .iter()
            .zip(self.gradient(&zm))
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect()
    }
}

/// `g(x) = coeff·|x|^p / p` on `ℝᴺ`, with `p > 1` and `coeff ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerPotential {
    pub p: f64,
    #[serde(default = "one")]
    pub coeff: f64,
}

fn one() -> f64 {
    1.0
}

impl PowerPotential {
    pub fn new(p: f64, coeff: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidLaw(format!("power potential needs p > 1, got {p}")));
        }
        if !(coeff.is_finite() && coeff >= 0.0) {
            return Err(Error::InvalidLaw(format!("power potential needs coeff >= 0, got {coeff}")));
        }
        Ok(Self { p, coeff })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.coeff * norm(x).powf(self.p) / self.p
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let s = norm(x);
        if s == 0.0 {
            return vec![0.0; x.len()];
        }
        let f = self.coeff * s.powf(self.p - 2.0);
        x.iter().map(|v| f * v).collect()
    }

    /// `coeff·|x|^{p-2} (d + (p-2) x̂⟨x̂|d⟩)`.
    pub fn hessian_apply(&self, x: &[f64], d: &[f64]) -> Vec<f64> {
        let s = norm(x);
        if s == 0.0 {
            let f = if self.p == 2.0 {
                self.coeff
            } else if self.p > 2.0 {
                0.0
            } else {
                // the curvature is unbounded at the origin; a large finite
                // value keeps Newton systems well defined
                self.coeff * 1e8
            };
            return d.iter().map(|v| f * v).collect();
        }
        let f = self.coeff * s.powf(self.p - 2.0);
        let c = (self.p - 2.0) * dot(x, d) / (s * s);
        d.iter().zip(x).map(|(di, xi)| f * (di + c * xi)).collect()
    }
}

/// The smooth part `G` of `j = G + I_K`.
#[derive(Clone)]
pub enum BoundaryPotential {
    Zero,
    /// `G(z) = ⟨c|z⟩`; only used for prescribed-flux subproblems.
    Linear(Vec<f64>),
    /// `G(z) = ½⟨Qz|z⟩` with `Q` symmetric positive semidefinite, row-major.
    Quadratic(Vec<f64>),
    /// `G(x, y) = G₁(x) + G₂(y)`.
    Separable {
        left: Option<PowerPotential>,
        right: Option<PowerPotential>,
    },
    /// `G(x, y) = g(x - y)`.
    Difference(PowerPotential),
    Custom(Arc<dyn SmoothConvex>),
}

impl fmt::Debug for BoundaryPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Linear(c) => f.debug_tuple("Linear").field(c).finish(),
            Self::Quadratic(q) => f.debug_tuple("Quadratic").field(q).finish(),
            Self::Separable { left, right } => f
                .debug_struct("Separable")
                .field("left", left)
                .field("right", right)
                .finish(),
            Self::Difference(g) => f.debug_tuple("Difference").field(g).finish(),
            Self::Custom(c) => f.debug_tuple("Custom").field(c).finish(),
        }
    }
}

impl BoundaryPotential {
    pub fn value(&self, z: &[f64]) -> f64 {
        let n = z.len() / 2;
        match self {
            Self::Zero => 0.0,
            Self::Linear(c) => dot(c, z),
            Self::Quadratic(q) => 0.5 * dot(&matvec(q, z), z),
            Self::Separable { left, right } => {
                left.map_or(0.0, |g| g.value(&z[..n])) + right.map_or(0.0, |g| g.value(&z[n..]))
            }
            Self::Difference(g) => g.value(&sub(&z[..n], &z[n..])),
            Self::Custom(c) => c.value(z),
        }
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len() / 2;
        match self {
            Self::Zero => vec![0.0; z.len()],
            Self::Linear(c) => c.clone(),
            Self::Quadratic(q) => matvec(q, z),
            Self::Separable { left, right } => {
                let gl = left.map_or(vec![0.0; n], |g| g.gradient(&z[..n]));
                let gr = right.map_or(vec![0.0; n], |g| g.gradient(&z[n..]));
                [gl, gr].concat()
            }
            Self::Difference(g) => {
                let gd = g.gradient(&sub(&z[..n], &z[n..]));
                let neg: Vec<f64> = gd.iter().map(|v| -v).collect();
                [gd, neg].concat()
            }
            Self::Custom(c) => c.gradient(z),
        }
    }

    pub fn hessian_apply(&self, z: &[f64], d: &[f64]) -> Vec<f64> {
        let n = z.len() / 2;
        match self {
            Self::Zero | Self::Linear(_) => vec![0.0; z.len()],
            Self::Quadratic(q) => matvec(q, d),
            Self::Separable { left, right } => {
                let hl = left.map_or(vec![0.0; n], |g| g.hessian_apply(&z[..n], &d[..n]));
                let hr = right.map_or(vec![0.0; n], |g| g.hessian_apply(&z[n..], &d[n..]));
                [hl, hr].concat()
            }
            Self::Difference(g) => {
                let hd = g.hessian_apply(&sub(&z[..n], &z[n..]), &sub(&d[..n], &d[n..]));
                let neg: Vec<f64> = hd.iter().map(|v| -v).collect();
                [hd, neg].concat()
            }
            Self::Custom(c) => c.hessian_apply(z, d),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Self::Zero)
    }
}

fn matvec(m: &[f64], z: &[f64]) -> Vec<f64> {
    let k = z.len();
    (0..k).map(|i| dot(&m[i * k..(i + 1) * k], z)).collect()
}

/// Internal representation of a boundary law.
#[derive(Clone, Debug)]
pub enum LawRepr {
    /// `γ = ∂(G + I_K)`.
    Subdifferential { potential: BoundaryPotential, set: ConvexSet },
    /// `γ(z) = Mz`, `M` row-major `2N×2N`.
    LinearMatrix { matrix: Vec<f64> },
}

/// A maximal monotone boundary operator on `ℝᴺ × ℝᴺ`.
#[derive(Clone, Debug)]
pub struct BoundaryLaw {
    dim: usize,
    repr: LawRepr,
}

impl BoundaryLaw {
    /// `∂(G + I_K)`; checks `0 ∈ K`, `G(0) = 0` and `∇G(0) = 0`.
    pub fn subdifferential(potential: BoundaryPotential, set: ConvexSet) -> Result<Self> {
        let dim = set.dim();
        let zero = vec![0.0; 2 * dim];
        if !set.contains_origin() {
            return Err(Error::InvalidLaw("the constraint set must contain the origin".into()));
        }
        if let BoundaryPotential::Quadratic(q) = &potential {
            check_square(q, 2 * dim, "Q")?;
            let asym = (0..2 * dim)
                .flat_map(|i| (0..2 * dim).map(move |j| (i, j)))
                .map(|(i, j)| (q[i * 2 * dim + j] - q[j * 2 * dim + i]).abs())
                .fold(0.0, f64::max);
            if asym > 1e-12 {
                return Err(Error::InvalidLaw("quadratic boundary potential must be symmetric".into()));
            }
            let eig = min_sym_eigenvalue(q, 2 * dim);
            if eig < -PSD_TOL {
                return Err(Error::InvalidLaw(format!(
                    "quadratic boundary potential is not convex (smallest eigenvalue {eig:e})"
                )));
            }
        }
        let g0 = potential.value(&zero);
        let dg0 = potential.gradient(&zero);
        if g0.abs() > 1e-12 || !g0.is_finite() {
            return Err(Error::InvalidLaw(format!("boundary potential must vanish at 0, G(0) = {g0}")));
        }
        if dg0.len() != 2 * dim || norm(&dg0) > 1e-12 {
            return Err(Error::InvalidLaw(format!(
                "boundary potential must be stationary at 0, |grad G(0)| = {:e}",
                norm(&dg0)
            )));
        }
        Ok(Self {
            dim,
            repr: LawRepr::Subdifferential { potential, set },
        })
    }

    /// `γ(z) = Mz`; rejects `M` whose symmetric part has an eigenvalue below `-PSD_TOL`.
    pub fn matrix(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        check_square(&matrix, 2 * dim, "M")?;
        let eig = min_sym_eigenvalue(&matrix, 2 * dim);
        if eig < -PSD_TOL {
            return Err(Error::InvalidLaw(format!(
                "matrix law is not positive semidefinite (smallest eigenvalue of the symmetric part {eig:e})"
            )));
        }
        Ok(Self {
            dim,
            repr: LawRepr::LinearMatrix { matrix },
        })
    }

    /// Boundary values pinned to `bc` (the Dirichlet problem with data `bc`).
    /// Not normalized at the origin unless `bc = 0`.
    pub fn dirichlet_data(bc: &BoundaryPair) -> Self {
        Self {
            dim: bc.dim(),
            repr: LawRepr::Subdifferential {
                potential: BoundaryPotential::Zero,
                set: ConvexSet::Point(bc.to_vec()),
            },
        }
    }

    /// Prescribed fluxes `φ(Δu(0)) = flux.left`, `φ(Δu(T)) = flux.right`,
    /// i.e. `j(α, β) = ⟨flux.left|α⟩ - ⟨flux.right|β⟩`.
    pub fn neumann_data(flux: &BoundaryPair) -> Self {
        let c: Vec<f64> = flux.left.iter().copied().chain(flux.right.iter().map(|v| -v)).collect();
        Self {
            dim: flux.dim(),
            repr: LawRepr::Subdifferential {
                potential: BoundaryPotential::Linear(c),
                set: ConvexSet::FullSpace { dim: flux.dim() },
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn repr(&self) -> &LawRepr {
        &self.repr
    }

    pub fn is_subdifferential(&self) -> bool {
        matches!(self.repr, LawRepr::Subdifferential { .. })
    }

    pub fn set(&self) -> Option<&ConvexSet> {
        match &self.repr {
            LawRepr::Subdifferential { set, .. } => Some(set),
            LawRepr::LinearMatrix { .. } => None,
        }
    }

    pub fn potential(&self) -> Option<&BoundaryPotential> {
        match &self.repr {
            LawRepr::Subdifferential { potential, .. } => Some(potential),
            LawRepr::LinearMatrix { .. } => None,
        }
    }

    pub fn matrix_entries(&self) -> Option<&[f64]> {
        match &self.repr {
            LawRepr::LinearMatrix { matrix } => Some(matrix),
            LawRepr::Subdifferential { .. } => None,
        }
    }

    /// `j(z) = G(z) + I_K(z)`, with membership tested to `1e-12·(1+|z|)`.
    /// Matrix laws have no potential and return an error.
    pub fn j_value(&self, z: &[f64]) -> Result<f64> {
        match &self.repr {
            LawRepr::Subdifferential { potential, set } => {
                if set.contains(z, 1e-12) {
                    Ok(potential.value(z))
                } else {
                    Ok(f64::INFINITY)
                }
            }
            LawRepr::LinearMatrix { .. } => Err(Error::Precondition(
                "a matrix law is not a subdifferential and has no potential".into(),
            )),
        }
    }

    /// Sampled check of `j(ζ, ζ) = 0` for all `ζ`.
    pub fn vanishes_on_diagonal(&self) -> bool {
        let LawRepr::Subdifferential { potential, set } = &self.repr else {
            return false;
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for scale in [1e-3, 1.0, 1e3] {
            for _ in 0..32 {
                let zeta: Vec<f64> = (0..self.dim).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
                let z = [zeta.clone(), zeta].concat();
                if !set.contains(&z, 1e-12) || potential.value(&z).abs() > 1e-12 * (1.0 + norm_sq(&z)) {
                    return false;
                }
            }
        }
        true
    }

    /// Sampled check that `j` stays bounded on its domain `K`: the largest
    /// value of `G` over projected samples must stop growing as the sampling
    /// radius goes from `1e3` to `1e6`.
    pub fn bounded_on_domain(&self) -> bool {
        let LawRepr::Subdifferential { potential, set } = &self.repr else {
            return false;
        };
        if set.is_bounded() || potential.is_zero() {
            return true;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xb0b);
        let mut sup_at = |radius: f64| {
            let mut best = 0.0f64;
            for _ in 0..256 {
                let raw: Vec<f64> = (0..2 * self.dim).map(|_| radius * rng.gen_range(-1.0..1.0)).collect();
                best = best.max(potential.value(&set.project(&raw)));
            }
            best
        };
        let moderate = sup_at(1e3);
        let large = sup_at(1e6);
        large.is_finite() && large <= 2.0 * moderate + 1e-9
    }

    /// Sampled check that `j(z + (ζ, ζ)) = j(z)`.
    pub fn is_shift_invariant(&self) -> bool {
        let LawRepr::Subdifferential { potential, set } = &self.repr else {
            return false;
        };
        if !set.is_shift_invariant() {
            return false;
        }
        match potential {
            BoundaryPotential::Zero | BoundaryPotential::Difference(_) => true,
            BoundaryPotential::Separable { left, right } => left.is_none() && right.is_none(),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(0xd1a9);
                (0..64).all(|_| {
                    let z: Vec<f64> = set.project(&(0..2 * self.dim).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>());
                    let zeta: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    let shifted: Vec<f64> =
                        z.iter().enumerate().map(|(i, v)| v + zeta[i % self.dim]).collect();
                    let (a, b) = (potential.value(&z), potential.value(&shifted));
                    (a - b).abs() <= 1e-10 * (1.0 + a.abs())
                })
            }
        }
    }

    /// Distance of the flux pair `w` from `γ(z)`; zero exactly when `w ∈ γ(z)`.
    ///
    /// Matrix laws use `|w - Mz|`. Subdifferential laws use
    /// `dist(z, K) + |v - Π_{N_K(z')}(v)|` with `z' = P_K(z)` and `v = w - ∇G(z)`.
    pub fn law_residual(&self, z: &BoundaryPair, w: &BoundaryPair) -> f64 {
        self.residual_flat(&z.to_vec(), &w.to_vec())
    }

    pub(crate) fn residual_flat(&self, z: &[f64], w: &[f64]) -> f64 {
        match &self.repr {
            LawRepr::LinearMatrix { matrix } => dist(w, &matvec(matrix, z)),
            LawRepr::Subdifferential { potential, set } => {
                let zp = set.project(z);
                let v = sub(w, &potential.gradient(z));
                let nv = set.normal_cone_project(&zp, &v);
                dist(z, &zp) + dist(&v, &nv)
            }
        }
    }

    /// `Mz` for matrix laws.
    pub(crate) fn apply_matrix(&self, z: &[f64]) -> Option<Vec<f64>> {
        self.matrix_entries().map(|m| matvec(m, z))
    }
}

fn check_square(m: &[f64], k: usize, what: &str) -> Result<()> {
    if m.len() != k * k {
        return Err(Error::Dimension(format!("{what} must have {} entries, got {}", k * k, m.len())));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("boundary matrix"));
    }
    Ok(())
}

fn min_sym_eigenvalue(m: &[f64], k: usize) -> f64 {
    let a = DMatrix::from_row_slice(k, k, m);
    let sym = (&a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// `(φ(Δu(0)), -φ(Δu(T)))`, the flux pair entering the boundary inclusion.
pub fn boundary_flux(phi: &PhiMap, u: &GridFunction) -> Result<BoundaryPair> {
    let t = u.horizon();
    let left = phi.eval(&u.diff(0))?;
    let right: Vec<f64> = phi.eval(&u.diff(t))?.iter().map(|v| -v).collect();
    Ok(BoundaryPair { left, right })
}

/// Euclidean projection onto `K`.
pub fn project_set(set: &ConvexSet, z: &[f64]) -> Vec<f64> {
    set.project(z)
}

/// Residual of the inclusion `w ∈ γ(z)`; see [`BoundaryLaw::law_residual`].
pub fn law_residual(law: &BoundaryLaw, z: &BoundaryPair, w: &BoundaryPair) -> f64 {
    law.law_residual(z, w)
}

/// `argmin_v G(v) + I_K(v) + |v - z|²/(2t)` for a subdifferential law.
///
/// Closed forms cover `G` zero, linear, and quadratic on a linear subspace;
/// other cases run a projected-gradient loop on the fixed-point residual
/// `|v - P_K(z - t∇G(v))|` down to [`PROX_TOL`].
pub fn prox_boundary(law: &BoundaryLaw, z: &[f64], t: f64) -> Result<Vec<f64>> {
    let LawRepr::Subdifferential { potential, set } = law.repr() else {
        return Err(Error::Precondition("the prox is only defined for subdifferential laws".into()));
    };
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain(format!("prox parameter must be positive, got {t}")));
    }
    if z.len() != 2 * law.dim() {
        return Err(Error::Dimension(format!("expected a vector in R^{}, got length {}", 2 * law.dim(), z.len())));
    }
    match potential {
        BoundaryPotential::Zero => return Ok(set.project(z)),
        BoundaryPotential::Linear(c) => {
            let shifted: Vec<f64> = z.iter().zip(c).map(|(a, b)| a - t * b).collect();
            return Ok(set.project(&shifted));
        }
        BoundaryPotential::Quadratic(q) => {
            if let ConvexSet::Point(z0) = set {
                return Ok(z0.clone());
            }
            if let Some(basis) = set.subspace_basis() {
                return Ok(quadratic_prox_on_subspace(q, &basis, z, t));
            }
        }
        _ => {}
    }
    iterative_prox(potential, set, z, t)
}

/// `v = Bw` with `(I + t BᵀQB) w = Bᵀz`.
fn quadratic_prox_on_subspace(q: &[f64], basis: &[Vec<f64>], z: &[f64], t: f64) -> Vec<f64> {
    let k = basis.len();
    let m = z.len();
    if k == 0 {
        return vec![0.0; m];
    }
    let qb: Vec<Vec<f64>> = basis.iter().map(|b| matvec(q, b)).collect();
    let a = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { 0.0 } + t * dot(&basis[i], &qb[j]));
    let rhs = DVector::from_iterator(k, basis.iter().map(|b| dot(b, z)));
    // I + tBᵀQB is symmetric positive definite
    let w = a.cholesky().expect("I + tBᵀQB is positive definite").solve(&rhs);
    let mut v = vec![0.0; m];
    for (wi, b) in w.iter().zip(basis) {
        axpy(*wi, b, &mut v);
    }
    v
}

fn iterative_prox(potential: &BoundaryPotential, set: &ConvexSet, z: &[f64], t: f64) -> Result<Vec<f64>> {
    let objective = |v: &[f64]| potential.value(v) + norm_sq(&sub(v, z)) / (2.0 * t);
    let gradient = |v: &[f64]| {
        let mut g = potential.gradient(v);
        for ((gi, vi), zi) in g.iter_mut().zip(v).zip(z) {
            *gi += (vi - zi) / t;
        }
        g
    };
    let fixed_point_gap = |v: &[f64]| {
        let shifted: Vec<f64> = z.iter().zip(potential.gradient(v)).map(|(a, b)| a - t * b).collect();
        dist(v, &set.project(&shifted))
    };
    let scale = 1.0 + norm(z);
    let mut v = set.project(z);
    let mut f = objective(&v);
    let mut g = gradient(&v);
    let mut step = t;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for _ in 0..PROX_MAX_ITERS {
        if fixed_point_gap(&v) <= PROX_TOL * scale {
            return Ok(v);
        }
        if let Some((pv, pg)) = &prev {
            let s = sub(&v, pv);
            let y = sub(&g, pg);
            let sy = dot(&s, &y);
            if sy > 0.0 {
                step = (norm_sq(&s) / sy).clamp(1e-12 * t, 1e6 * t);
            }
        }
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = v.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let cand = set.project(&trial);
            let d = sub(&cand, &v);
            let fc = objective(&cand);
            let bound = f + dot(&g, &d) + norm_sq(&d) / (2.0 * step) + 1e-15 * (1.0 + f.abs());
            if fc.is_finite() && fc <= bound {
                let gc = gradient(&cand);
                prev = Some((std::mem::replace(&mut v, cand), std::mem::replace(&mut g, gc)));
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no representable decrease left; accept if the gap is near tolerance
            if fixed_point_gap(&v) <= 1e3 * PROX_TOL * scale {
                return Ok(v);
            }
            break;
        }
    }
    Err(Error::Convergence(format!(
        "boundary prox stalled with fixed-point gap {:e}",
        fixed_point_gap(&v)
    )))
}

/// Constraint sets expressible in a problem file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetDescriptor {
    Origin,
    Full,
    Product { left: Factor, right: Factor },
    Graph { u: Vec<f64> },
    Subspace { basis: Vec<Vec<f64>> },
    Strip { sigma: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl SetDescriptor {
    pub fn build(&self, dim: usize) -> Result<ConvexSet> {
        match self {
            Self::Origin => Ok(ConvexSet::origin(dim)),
            Self::Full => Ok(ConvexSet::FullSpace { dim }),
            Self::Product { left, right } => Ok(ConvexSet::Product {
                dim,
                left: *left,
                right: *right,
            }),
            Self::Graph { u } => ConvexSet::graph_of_orthogonal(dim, u.clone()),
            Self::Subspace { basis } => ConvexSet::linear_subspace(dim, basis),
            Self::Strip { sigma } => ConvexSet::strip(dim, *sigma),
            Self::Box { lower, upper } => {
                if lower.len() != 2 * dim {
                    return Err(Error::Dimension(format!("box bounds must have {} entries", 2 * dim)));
                }
                ConvexSet::box_set(lower.clone(), upper.clone())
            }
        }
    }
}

/// Named boundary conditions of the problem-file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawDescriptor {
    /// `u(0) = u(T+1) = 0`.
    Dirichlet {},
    /// `Δu(0) = Δu(T) = 0`.
    Neumann {},
    /// `u(0) = 0`, `Δu(T) = 0`.
    Mixed {},
    Periodic {},
    Antiperiodic {},
    /// `u(T+1) = U u(0)`, `φ(Δu(T)) = U φ(Δu(0))`; `u` row-major `N×N`.
    Rotating { u: Vec<f64> },
    /// `(φ(Δu(0)), -φ(Δu(T))) = M (u(0), u(T+1))`; `m` row-major `2N×2N`.
    Matrix { m: Vec<f64> },
    /// `φ(Δu(0)) = ∇G₁(u(0))`, `φ(Δu(T)) = -∇G₂(u(T+1))` with power potentials.
    SteklovPair { left: PowerPotential, right: PowerPotential },
    /// `φ(Δu(0)) = ∇g(u(0) - u(T+1)) = φ(Δu(T))` with `g = coeff·|x|^p/p`,
    /// constrained to the closed strip of width `sigma` (default `(T+1)a`).
    SteklovDifference {
        p: f64,
        #[serde(default = "one")]
        coeff: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    /// `j = ½⟨Qz|z⟩ + I_K`.
    Custom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        quadratic: Option<Vec<f64>>,
        set: SetDescriptor,
    },
}

impl LawDescriptor {
    /// Builds the law in dimension `N`; `default_sigma` fills a missing strip width.
    pub fn build(&self, dim: usize, default_sigma: Option<f64>) -> Result<BoundaryLaw> {
        let identity: Vec<f64> = (0..dim * dim).map(|k| if k / dim == k % dim { 1.0 } else { 0.0 }).collect();
        let plain = |set: ConvexSet| BoundaryLaw::subdifferential(BoundaryPotential::Zero, set);
        match self {
            Self::Dirichlet {} => plain(ConvexSet::origin(dim)),
            Self::Neumann {} => plain(ConvexSet::FullSpace { dim }),
            Self::Mixed {} => plain(ConvexSet::Product {
                dim,
                left: Factor::Zero,
                right: Factor::Full,
            }),
            Self::Periodic {} => plain(ConvexSet::graph_of_orthogonal(dim, identity)?),
            Self::Antiperiodic {} => plain(ConvexSet::graph_of_orthogonal(
                dim,
                identity.iter().map(|v| -v).collect(),
            )?),
            Self::Rotating { u } => plain(ConvexSet::graph_of_orthogonal(dim, u.clone())?),
            Self::Matrix { m } => BoundaryLaw::matrix(dim, m.clone()),
            Self::SteklovPair { left, right } => BoundaryLaw::subdifferential(
                BoundaryPotential::Separable {
                    left: Some(PowerPotential::new(left.p, left.coeff)?),
                    right: Some(PowerPotential::new(right.p, right.coeff)?),
                },
                ConvexSet::FullSpace { dim },
            ),
            Self::SteklovDifference { p, coeff, sigma } => {
                let sigma = sigma.or(default_sigma).ok_or_else(|| {
                    Error::InvalidLaw("steklov_difference needs a strip width sigma".into())
                })?;
                BoundaryLaw::subdifferential(
                    BoundaryPotential::Difference(PowerPotential::new(*p, *coeff)?),
                    ConvexSet::strip(dim, sigma)?,
                )
            }
            Self::Custom { quadratic, set } => {
                let potential = match quadratic {
                    Some(q) => BoundaryPotential::Quadratic(q.clone()),
                    None => BoundaryPotential::Zero,
                };
                BoundaryLaw::subdifferential(potential, set.build(dim)?)
            }
        }
    }
}

/// Builds a law from its descriptor; see [`LawDescriptor::build`].
pub fn make_law(kind: &LawDescriptor, dim: usize, default_sigma: Option<f64>) -> Result<BoundaryLaw> {
    kind.build(dim, default_sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rand_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
        (0..len).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
    }

    fn rotation(theta: f64) -> Vec<f64> {
        vec![theta.cos(), -theta.sin(), theta.sin(), theta.cos()]
    }

    fn sample_sets() -> Vec<ConvexSet> {
        vec![
            ConvexSet::origin(2),
            ConvexSet::FullSpace { dim: 2 },
            ConvexSet::Product { dim: 2, left: Factor::Zero, right: Factor::Full },
            ConvexSet::graph_of_orthogonal(2, rotation(0.7)).unwrap(),
            ConvexSet::graph_of_orthogonal(2, vec![-1.0, 0.0, 0.0, -1.0]).unwrap(),
            ConvexSet::linear_subspace(2, &[vec![1.0, 2.0, 0.0, -1.0], vec![0.0, 1.0, 1.0, 1.0]]).unwrap(),
            ConvexSet::strip(2, 1.5).unwrap(),
            ConvexSet::box_set(vec![-1.0, -0.5, 0.0, -2.0], vec![1.0, 0.5, 3.0, f64::INFINITY]).unwrap(),
        ]
    }

    fn catalog_laws() -> Vec<BoundaryLaw> {
        let n = 2;
        let mut laws: Vec<BoundaryLaw> = [
            LawDescriptor::Dirichlet {},
            LawDescriptor::Neumann {},
            LawDescriptor::Mixed {},
            LawDescriptor::Periodic {},
            LawDescriptor::Antiperiodic {},
            LawDescriptor::Rotating { u: rotation(1.1) },
            LawDescriptor::SteklovPair {
                left: PowerPotential { p: 2.0, coeff: 1.0 },
                right: PowerPotential { p: 3.0, coeff: 0.5 },
            },
            LawDescriptor::SteklovDifference { p: 3.0, coeff: 1.0, sigma: Some(4.0) },
        ]
        .iter()
        .map(|d| d.build(n, None).unwrap())
        .collect();
        let skew = vec![
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            -1.0, 0.0, 0.0, 0.0, //
            0.0, -1.0, 0.0, 0.0,
        ];
        laws.push(BoundaryLaw::matrix(n, skew).unwrap());
        laws
    }

    #[test]
    fn projection_is_idempotent_and_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for set in sample_sets() {
            for _ in 0..1000 {
                let z1 = rand_vec(&mut rng, 4, 5.0);
                let z2 = rand_vec(&mut rng, 4, 5.0);
                let p1 = set.project(&z1);
                let p2 = set.project(&z2);
                assert!(dist(&p1, &p2) <= dist(&z1, &z2) * (1.0 + 1e-12), "{set:?}");
                let pp = set.project(&p1);
                assert!(dist(&pp, &p1) <= 1e-12 * (1.0 + norm(&p1)), "{set:?}");
                // variational inequality ⟨z - Pz | k - Pz⟩ ≤ 0 for k = P(z2) ∈ K
                let lhs = dot(&sub(&z1, &p1), &sub(&p2, &p1));
                assert!(lhs <= 1e-10, "{set:?}: {lhs}");
            }
        }
    }

    #[test]
    fn diagonal_projection_is_the_average() {
        let periodic = LawDescriptor::Periodic {}.build(2, None).unwrap();
        let p = periodic.set().unwrap().project(&[1.0, 2.0, 3.0, -4.0]);
        assert_eq!(p, vec![2.0, -1.0, 2.0, -1.0]);
    }

    #[test]
    fn normal_cone_projection_is_a_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for set in sample_sets() {
            for _ in 0..300 {
                let z = set.project(&rand_vec(&mut rng, 4, 5.0));
                let w = rand_vec(&mut rng, 4, 3.0);
                let nw = set.normal_cone_project(&z, &w);
                // elements of the normal cone satisfy ⟨v | k - z⟩ ≤ 0 on K
                for _ in 0..5 {
                    let k = set.project(&rand_vec(&mut rng, 4, 5.0));
                    assert!(dot(&nw, &sub(&k, &z)) <= 1e-9 * (1.0 + norm(&nw)), "{set:?}");
                }
                // Moreau: w - Π_N(w) lies in the polar, so ⟨Π_N(w) | w - Π_N(w)⟩ = 0
                assert!(dot(&nw, &sub(&w, &nw)).abs() <= 1e-10, "{set:?}");
            }
        }
    }

    #[test]
    fn strip_boundary_normal_ray() {
        let set = ConvexSet::strip(1, 2.0).unwrap();
        let z = [1.0, -1.0];
        let ray = set.normal_cone_project(&z, &[1.0, -1.0]);
        assert_abs_diff_eq!(ray[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ray[1], -1.0, epsilon = 1e-15);
        assert_eq!(set.normal_cone_project(&z, &[-1.0, 1.0]), vec![0.0, 0.0]);
        assert_eq!(set.normal_cone_project(&[0.5, 0.0], &[1.0, -1.0]), vec![0.0, 0.0]);
        assert_eq!(set.project(&[3.0, -3.0]), vec![1.0, -1.0]);
        assert!(set.face_projector(&z).is_none());
    }

    #[test]
    fn catalog_construction() {
        let periodic = LawDescriptor::Periodic {}.build(1, None).unwrap();
        assert!(matches!(
            periodic.repr(),
            LawRepr::Subdifferential { potential: BoundaryPotential::Zero, set: ConvexSet::GraphOfOrthogonal { .. } }
        ));
        assert!(periodic.set().unwrap().contains(&[2.0, 2.0], 0.0));
        let anti = LawDescriptor::Antiperiodic {}.build(1, None).unwrap();
        assert!(anti.set().unwrap().contains(&[2.0, -2.0], 0.0));
        assert!(!anti.set().unwrap().contains(&[2.0, 2.0], 1e-12));

        assert!(LawDescriptor::Rotating { u: vec![1.0, 0.1, 0.0, 1.0] }.build(2, None).is_err());
        let not_psd = LawDescriptor::Matrix { m: vec![-1.0, 0.0, 0.0, 0.0] };
        assert!(matches!(not_psd.build(1, None), Err(Error::InvalidLaw(_))));
        let skew = LawDescriptor::Matrix { m: vec![0.0, 1.0, -1.0, 0.0] };
        assert!(skew.build(1, None).is_ok());
        let shifted = BoundaryPotential::Linear(vec![1.0, 0.0]);
        assert!(BoundaryLaw::subdifferential(shifted, ConvexSet::FullSpace { dim: 1 }).is_err());
        assert!(LawDescriptor::SteklovDifference { p: 3.0, coeff: 1.0, sigma: None }.build(1, None).is_err());
    }

    #[test]
    fn residual_examples() {
        let periodic = LawDescriptor::Periodic {}.build(2, None).unwrap();
        let z = BoundaryPair::new(vec![0.3, -1.0], vec![0.3, -1.0]).unwrap();
        let w = BoundaryPair::new(vec![2.0, 0.5], vec![-2.0, -0.5]).unwrap();
        assert!(periodic.law_residual(&z, &w) < 1e-15);

        let ident = BoundaryLaw::matrix(1, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let z = BoundaryPair::new(vec![0.7], vec![-3.0]).unwrap();
        assert_eq!(ident.law_residual(&z, &z), 0.0);

        let dirichlet = LawDescriptor::Dirichlet {}.build(1, None).unwrap();
        let w = BoundaryPair::new(vec![5.0], vec![-7.0]).unwrap();
        assert_eq!(dirichlet.law_residual(&BoundaryPair::zeros(1), &w), 0.0);
        let z = BoundaryPair::new(vec![3.0], vec![4.0]).unwrap();
        let r = dirichlet.law_residual(&z, &w);
        // dist to the origin plus the (zero) normal-cone defect
        assert_abs_diff_eq!(r, 5.0, epsilon = 1e-15);
    }

    #[test]
    fn origin_normalization() {
        for law in catalog_laws() {
            let zero = BoundaryPair::zeros(2);
            assert_eq!(law.law_residual(&zero, &zero), 0.0, "{law:?}");
        }
    }

    #[test]
    fn rotating_pairs_have_zero_residual() {
        let u = rotation(0.4);
        let law = LawDescriptor::Rotating { u: u.clone() }.build(2, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let x = rand_vec(&mut rng, 2, 3.0);
            let v = rand_vec(&mut rng, 2, 3.0);
            let ux = vec![u[0] * x[0] + u[1] * x[1], u[2] * x[0] + u[3] * x[1]];
            let utv = vec![-(u[0] * v[0] + u[2] * v[1]), -(u[1] * v[0] + u[3] * v[1])];
            let r = law.law_residual(&BoundaryPair::new(x, ux).unwrap(), &BoundaryPair::new(utv, v).unwrap());
            assert!(r < 1e-14, "{r}");
        }
    }

    /// Sample points of the graph of each law and check monotonicity.
    #[test]
    fn laws_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for law in catalog_laws() {
            let mut graph = Vec::new();
            for _ in 0..200 {
                let (z, w) = match law.repr() {
                    LawRepr::LinearMatrix { .. } => {
                        let z = rand_vec(&mut rng, 4, 2.0);
                        let w = law.apply_matrix(&z).unwrap();
                        (z, w)
                    }
                    LawRepr::Subdifferential { potential, set } => {
                        let z = set.project(&rand_vec(&mut rng, 4, 3.0));
                        let nw = set.normal_cone_project(&z, &rand_vec(&mut rng, 4, 2.0));
                        let w: Vec<f64> = potential.gradient(&z).iter().zip(&nw).map(|(a, b)| a + b).collect();
                        (z, w)
                    }
                };
                assert!(law.residual_flat(&z, &w) <= 1e-12 * (1.0 + norm(&w)), "{law:?}");
                graph.push((z, w));
            }
            for i in 0..graph.len() {
                for j in 0..i {
                    let (z1, w1) = &graph[i];
                    let (z2, w2) = &graph[j];
                    assert!(dot(&sub(w1, w2), &sub(z1, z2)) >= -1e-10, "{law:?}");
                }
            }
        }
    }

    #[test]
    fn prox_closed_forms() {
        let neumann = LawDescriptor::Neumann {}.build(1, None).unwrap();
        assert_eq!(prox_boundary(&neumann, &[1.0, 2.0], 0.3).unwrap(), vec![1.0, 2.0]);
        let periodic = LawDescriptor::Periodic {}.build(1, None).unwrap();
        assert_eq!(prox_boundary(&periodic, &[1.0, 3.0], 0.3).unwrap(), vec![2.0, 2.0]);

        let flux = BoundaryPair::new(vec![0.5], vec![-0.25]).unwrap();
        let affine = BoundaryLaw::neumann_data(&flux);
        let p = prox_boundary(&affine, &[1.0, 1.0], 2.0).unwrap();
        assert_eq!(p, vec![1.0 - 2.0 * 0.5, 1.0 - 2.0 * 0.25]);
        assert!(prox_boundary(&BoundaryLaw::matrix(1, vec![0.0; 4]).unwrap(), &[0.0, 0.0], 1.0).is_err());
        assert!(prox_boundary(&neumann, &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn quadratic_prox_matches_iterative_loop() {
        // G(x, y) = |x - y|²/2 as a quadratic form and as a difference potential
        let q = vec![1.0, -1.0, -1.0, 1.0];
        let closed = BoundaryLaw::subdifferential(BoundaryPotential::Quadratic(q.clone()), ConvexSet::FullSpace { dim: 1 })
            .unwrap();
        let looped = BoundaryLaw::subdifferential(
            BoundaryPotential::Difference(PowerPotential::new(2.0, 1.0).unwrap()),
            ConvexSet::FullSpace { dim: 1 },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let z = rand_vec(&mut rng, 2, 4.0);
            let t = rng.gen_range(0.05..3.0);
            let a = prox_boundary(&closed, &z, t).unwrap();
            let b = prox_boundary(&looped, &z, t).unwrap();
            assert!(dist(&a, &b) <= 1e-10, "{a:?} vs {b:?}");
            // optimality: (z - v)/t = ∇G(v)
            let g = looped.potential().unwrap().gradient(&a);
            for i in 0..2 {
                assert_abs_diff_eq!((z[i] - a[i]) / t, g[i], epsilon = 1e-10);
            }
        }
        // quadratic on a subspace versus the loop with a projection
        let mixed_q = BoundaryLaw::subdifferential(
            BoundaryPotential::Quadratic(vec![2.0, 0.0, 0.0, 1.0]),
            ConvexSet::graph_of_orthogonal(1, vec![-1.0]).unwrap(),
        )
        .unwrap();
        let v = prox_boundary(&mixed_q, &[1.0, 0.0], 1.0).unwrap();
        // on {(s, -s)}: minimize (2s² + s²)/2 + ((s-1)² + s²)/2  ⇒  s = 1/5
        assert_abs_diff_eq!(v[0], 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(v[1], -0.2, epsilon = 1e-14);
    }

    #[test]
    fn prox_optimality_on_strip() {
        let law = LawDescriptor::SteklovDifference { p: 3.0, coeff: 1.0, sigma: Some(1.0) }.build(2, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..40 {
            let z = rand_vec(&mut rng, 4, 3.0);
            let t = rng.gen_range(0.1..2.0);
            let v = prox_boundary(&law, &z, t).unwrap();
            // (z - v)/t ∈ ∇G(v) + N_K(v)
            let w: Vec<f64> = z.iter().zip(&v).map(|(a, b)| (a - b) / t).collect();
            assert!(law.residual_flat(&v, &w) <= 1e-9, "{}", law.residual_flat(&v, &w));
        }
    }

    #[test]
    fn structural_samplers() {
        let n = 2;
        let neumann = LawDescriptor::Neumann {}.build(n, None).unwrap();
        assert!(neumann.vanishes_on_diagonal() && neumann.bounded_on_domain() && neumann.is_shift_invariant());
        let steklov = LawDescriptor::SteklovDifference { p: 3.0, coeff: 1.0, sigma: Some(11.0) }.build(n, None).unwrap();
        assert!(steklov.vanishes_on_diagonal() && steklov.bounded_on_domain() && steklov.is_shift_invariant());
        let periodic = LawDescriptor::Periodic {}.build(n, None).unwrap();
        assert!(periodic.is_shift_invariant());
        let dirichlet = LawDescriptor::Dirichlet {}.build(n, None).unwrap();
        assert!(!dirichlet.vanishes_on_diagonal() && !dirichlet.is_shift_invariant());
        let pair = LawDescriptor::SteklovPair {
            left: PowerPotential { p: 2.0, coeff: 1.0 },
            right: PowerPotential { p: 2.0, coeff: 1.0 },
        }
        .build(n, None)
        .unwrap();
        assert!(!pair.bounded_on_domain());
        let unbounded_diff = BoundaryLaw::subdifferential(
            BoundaryPotential::Difference(PowerPotential { p: 2.0, coeff: 1.0 }),
            ConvexSet::FullSpace { dim: n },
        )
        .unwrap();
        assert!(unbounded_diff.vanishes_on_diagonal() && !unbounded_diff.bounded_on_domain());
    }

    #[test]
    fn descriptor_json_round_trip() {
        let descs = vec![
            LawDescriptor::Dirichlet {},
            LawDescriptor::Rotating { u: rotation(0.3) },
            LawDescriptor::SteklovDifference { p: 3.0, coeff: 1.0, sigma: None },
            LawDescriptor::Custom {
                quadratic: None,
                set: SetDescriptor::Product { left: Factor::Full, right: Factor::Zero },
            },
        ];
        for d in descs {
            let text = serde_json::to_string(&d).unwrap();
            let back: LawDescriptor = serde_json::from_str(&text).unwrap();
            assert_eq!(back, d);
        }
        assert!(serde_json::from_str::<LawDescriptor>(r#"{"name":"periodic","extra":1}"#).is_err());
        assert!(serde_json::from_str::<LawDescriptor>(r#"{"name":"unknown"}"#).is_err());
    }

    #[test]
    fn cone_at_origin() {
        let b = ConvexSet::box_set(vec![-1.0, 0.0], vec![0.0, 2.0]).unwrap();
        assert_eq!(
            b.cone_at_origin(),
            ConvexSet::BoxSet { lower: vec![f64::NEG_INFINITY, 0.0], upper: vec![0.0, f64::INFINITY] }
        );
        assert_eq!(ConvexSet::strip(1, 2.0).unwrap().cone_at_origin(), ConvexSet::FullSpace { dim: 1 });
    }
}
