//! Singular radial homeomorphisms `φ: B_a → ℝᴺ` with convex potentials.
//!
//! Every map in the catalog is radial: `φ(y) = g(|y|) y/|y|` for a scalar
//! profile `g: [0, a) → [0, ∞)` that is strictly increasing, vanishes at 0 and
//! blows up at `a`. The potential is `Φ(y) = ∫₀^|y| g`, finite on the closed
//! ball.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::vecops::norm;

/// Absolute tolerance on the radial equation `g(s) = t` used by [`PhiMap::invert`].
pub const INVERSE_TOL: f64 = 1e-12;

const QUADRATURE_TOL: f64 = 1e-10;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied radial profile.
#[derive(Clone)]
pub struct CustomProfile {
    profile: ScalarFn,
    antiderivative: Option<ScalarFn>,
    derivative: Option<ScalarFn>,
}

impl CustomProfile {
    /// `profile` is `g`; `antiderivative` (with value 0 at 0) gives `Φ`
    /// directly, otherwise `Φ` is obtained by adaptive quadrature of `g`.
    pub fn new(
        profile: impl Fn(f64) -> f64 + Send + Sync + 'static,
        antiderivative: Option<ScalarFn>,
        derivative: Option<ScalarFn>,
    ) -> Self {
        Self {
            profile: Arc::new(profile),
            antiderivative,
            derivative,
        }
    }
}

impl fmt::Debug for CustomProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomProfile")
            .field("antiderivative", &self.antiderivative.is_some())
            .field("derivative", &self.derivative.is_some())
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum PhiKind {
    /// `g(s) = r/√(1-r²)`, `r = s/a`.
    Relativistic,
    /// `g(s) = r^{p-1}/(1-r^p)^{1-1/p}`, `r = s/a`, `p > 1`.
    PRelativistic { p: f64 },
    /// Sum of the `p`- and `q`-relativistic profiles.
    DoublePhase { p: f64, q: f64 },
    CustomRadial(CustomProfile),
}

/// A singular homeomorphism of the ball of radius `a` onto `ℝᴺ`.
#[derive(Clone, Debug)]
pub struct PhiMap {
    radius: f64,
    kind: PhiKind,
}

impl PhiMap {
    pub fn relativistic(radius: f64) -> Result<Self> {
        Self::new(radius, PhiKind::Relativistic)
    }

    pub fn p_relativistic(p: f64, radius: f64) -> Result<Self> {
        Self::new(radius, PhiKind::PRelativistic { p })
    }

    pub fn double_phase(p: f64, q: f64, radius: f64) -> Result<Self> {
        Self::new(radius, PhiKind::DoublePhase { p, q })
    }

    /// Custom radial profile. The profile is sanity checked on a few sample
    /// points (`g(0) = 0`, increasing); blow-up at `a` is the caller's
    /// responsibility.
    pub fn custom_radial(radius: f64, profile: CustomProfile) -> Result<Self> {
        Self::new(radius, PhiKind::CustomRadial(profile))
    }

    pub fn new(radius: f64, kind: PhiKind) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Domain(format!("ball radius must be positive, got {radius}")));
        }
        match &kind {
            PhiKind::Relativistic => {}
            PhiKind::PRelativistic { p } => {
                if !(p.is_finite() && *p > 1.0) {
                    return Err(Error::Domain(format!("exponent p must exceed 1, got {p}")));
                }
            }
            PhiKind::DoublePhase { p, q } => {
                if !(p.is_finite() && q.is_finite() && *p > 1.0 && *q > 1.0) {
                    return Err(Error::Domain(format!(
                        "exponents must exceed 1, got p = {p}, q = {q}"
                    )));
                }
                if p == q {
                    return Err(Error::Domain("double phase requires p != q".into()));
                }
            }
            PhiKind::CustomRadial(c) => {
                let g0 = (c.profile)(0.0);
                if g0.abs() > 1e-14 {
                    return Err(Error::Domain(format!("custom profile must vanish at 0, g(0) = {g0}")));
                }
                let mut prev = g0;
                for k in 1..=16 {
                    let s = radius * (k as f64) / 17.0;
                    let v = (c.profile)(s);
                    if !(v.is_finite() && v > prev) {
                        return Err(Error::Domain(format!(
                            "custom profile must be finite and strictly increasing on [0, a); g({s}) = {v}"
                        )));
                    }
                    prev = v;
                }
            }
        }
        Ok(Self { radius, kind })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn kind(&self) -> &PhiKind {
        &self.kind
    }

    /// Radial profile `g(s)`, `0 <= s < a`; `+∞` at or beyond `a`.
    pub fn profile(&self, s: f64) -> f64 {
        let a = self.radius;
        if s >= a {
            return f64::INFINITY;
        }
        match &self.kind {
            PhiKind::Relativistic => {
                let r = s / a;
                r / ((1.0 - r) * (1.0 + r)).sqrt()
            }
            PhiKind::PRelativistic { p } => p_rel_profile(*p, s / a),
            PhiKind::DoublePhase { p, q } => p_rel_profile(*p, s / a) + p_rel_profile(*q, s / a),
            PhiKind::CustomRadial(c) => (c.profile)(s),
        }
    }

    /// `g'(s)`; may be `+∞` at `s = 0` for exponents below 2.
    pub fn profile_derivative(&self, s: f64) -> f64 {
        let a = self.radius;
        if s >= a {
            return f64::INFINITY;
        }
        match &self.kind {
            PhiKind::Relativistic => {
                let r = s / a;
                let w = (1.0 - r) * (1.0 + r);
                1.0 / (a * w * w.sqrt())
            }
            PhiKind::PRelativistic { p } => p_rel_derivative(*p, s / a) / a,
            PhiKind::DoublePhase { p, q } => {
                (p_rel_derivative(*p, s / a) + p_rel_derivative(*q, s / a)) / a
            }
            PhiKind::CustomRadial(c) => match &c.derivative {
                Some(d) => d(s),
                None => {
                    let h = 1e-6 * a;
                    let lo = (s - h).max(0.0);
                    let hi = (s + h).min(0.5 * (s + a));
                    ((c.profile)(hi) - (c.profile)(lo)) / (hi - lo)
                }
            },
        }
    }

    /// `g(s)/s`, the transverse stiffness of `Dφ`; the limit `g'(0)` at 0.
    fn profile_ratio(&self, s: f64) -> f64 {
        if s == 0.0 {
            self.profile_derivative(0.0)
        } else {
            self.profile(s) / s
        }
    }

    /// Radial potential `Φ` as a function of `s = |y|`, `0 <= s <= a`.
    pub fn potential_radial(&self, s: f64) -> f64 {
        let a = self.radius;
        let s = s.min(a);
        match &self.kind {
            PhiKind::Relativistic => {
                let r = s / a;
                // a (1 - √(1 - r²)) written without cancellation
                let w = (1.0 - r) * (1.0 + r);
                a * r * r / (1.0 + w.sqrt())
            }
            PhiKind::PRelativistic { p } => a * p_rel_potential(*p, s / a),
            PhiKind::DoublePhase { p, q } => a * (p_rel_potential(*p, s / a) + p_rel_potential(*q, s / a)),
            PhiKind::CustomRadial(c) => match &c.antiderivative {
                Some(anti) => anti(s),
                None => {
                    let upper = if s >= a { a * (1.0 - 1e-15) } else { s };
                    adaptive_simpson(&*c.profile, 0.0, upper, QUADRATURE_TOL)
                }
            },
        }
    }

    /// `φ(y)`; domain error when `|y| >= a`.
    pub fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        let s = norm(y);
        if !s.is_finite() {
            return Err(Error::NonFinite("phi argument"));
        }
        if s >= self.radius {
            return Err(Error::Domain(format!(
                "|y| = {s} is outside the open ball of radius {}",
                self.radius
            )));
        }
        let mut out = vec![0.0; y.len()];
        self.eval_into(y, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation; writes `+∞` components outside the ball.
    pub(crate) fn eval_into(&self, y: &[f64], out: &mut [f64]) {
        let s = norm(y);
        if s == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let factor = self.profile(s) / s;
        for (o, yi) in out.iter_mut().zip(y) {
            *o = factor * yi;
        }
    }

    /// `out = Dφ(y) d`.
    pub(crate) fn jacobian_apply(&self, y: &[f64], d: &[f64], out: &mut [f64]) {
        let s = norm(y);
        if s == 0.0 {
            let k = self.profile_derivative(0.0);
            for (o, di) in out.iter_mut().zip(d) {
                *o = k * di;
            }
            return;
        }
        let radial = self.profile_derivative(s);
        let transverse = self.profile_ratio(s);
        let proj: f64 = y.iter().zip(d).map(|(a, b)| a * b).sum::<f64>() / (s * s);
        for ((o, yi), di) in out.iter_mut().zip(y).zip(d) {
            let along = proj * yi;
            *o = radial * along + transverse * (di - along);
        }
    }

    /// Dense `Dφ(y)` as a row-major `N×N` array.
    pub(crate) fn jacobian(&self, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut jac = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            self.jacobian_apply(y, &e, &mut col);
            for i in 0..n {
                jac[i * n + j] = col[i];
            }
        }
        jac
    }

    /// `φ⁻¹(z)`, defined on all of `ℝᴺ`; the result lies in the open ball.
    pub fn invert(&self, z: &[f64]) -> Result<Vec<f64>> {
        let t = norm(z);
        if !t.is_finite() {
            return Err(Error::NonFinite("phi inverse argument"));
        }
        if t == 0.0 {
            return Ok(vec![0.0; z.len()]);
        }
        let a = self.radius;
        let s = match &self.kind {
            PhiKind::Relativistic => a * t / (1.0 + t * t).sqrt(),
            PhiKind::PRelativistic { p } => {
                // r^p / (1 - r^p) = t^{p/(p-1)}
                let tau = t.powf(p / (p - 1.0));
                a * (1.0 / (1.0 + 1.0 / tau)).powf(1.0 / p)
            }
            _ => self.radial_root(t)?,
        };
        let s = clamp_inside(s, a);
        Ok(z.iter().map(|zi| zi * s / t).collect())
    }

    /// Solves `g(s) = t` by bisection on `[0, a(1-1e-15)]` with safeguarded Newton.
    fn radial_root(&self, t: f64) -> Result<f64> {
        let a = self.radius;
        let mut lo = 0.0;
        let mut hi = a * (1.0 - 1e-15);
        let g_hi = self.profile(hi);
        if !g_hi.is_finite() && !g_hi.is_infinite() {
            return Err(Error::Convergence("profile is NaN near the ball boundary".into()));
        }
        if g_hi <= t {
            // target beyond what f64 can resolve inside the ball
            return Ok(hi);
        }
        let mut s = 0.5 * (lo + hi);
        for _ in 0..400 {
            let gs = self.profile(s) - t;
            if !gs.is_finite() {
                return Err(Error::Convergence(format!("profile evaluated to {gs} at s = {s}")));
            }
            if gs.abs() <= INVERSE_TOL * (1.0 + t) {
                return Ok(s);
            }
            if gs > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            if hi - lo <= f64::EPSILON * a {
                return Ok(0.5 * (lo + hi));
            }
            let dg = self.profile_derivative(s);
            let newton = s - gs / dg;
            s = if dg.is_finite() && dg > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(Error::Convergence(format!(
            "radial inverse did not converge for |z| = {t}"
        )))
    }

    /// `Φ(y)` on the closed ball; domain error when `|y| > a`.
    pub fn potential(&self, y: &[f64]) -> Result<f64> {
        let s = norm(y);
        if !s.is_finite() {
            return Err(Error::NonFinite("potential argument"));
        }
        if s > self.radius {
            return Err(Error::Domain(format!(
                "|y| = {s} is outside the closed ball of radius {}",
                self.radius
            )));
        }
        Ok(self.potential_radial(s))
    }
}

/// Evaluates `φ(y)`.
pub fn phi_eval(phi: &PhiMap, y: &[f64]) -> Result<Vec<f64>> {
    phi.eval(y)
}

/// Evaluates `φ⁻¹(z)`.
pub fn phi_invert(phi: &PhiMap, z: &[f64]) -> Result<Vec<f64>> {
    phi.invert(z)
}

/// Evaluates the potential `Φ(y)`.
pub fn phi_potential(phi: &PhiMap, y: &[f64]) -> Result<f64> {
    phi.potential(y)
}

fn clamp_inside(s: f64, a: f64) -> f64 {
    if s >= a {
        f64::from_bits(a.to_bits() - 1)
    } else {
        s
    }
}

fn p_rel_profile(p: f64, r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let rp = r.powf(p);
    r.powf(p - 1.0) / (1.0 - rp).powf(1.0 - 1.0 / p)
}

fn p_rel_derivative(p: f64, r: f64) -> f64 {
    if r == 0.0 {
        return if p < 2.0 {
            f64::INFINITY
        } else if p == 2.0 {
            1.0
        } else {
            0.0
        };
    }
    let rp = r.powf(p);
    (p - 1.0) * r.powf(p - 2.0) * (1.0 - rp).powf(-(2.0 * p - 1.0) / p)
}

/// `1 - (1 - r^p)^{1/p}` on `[0, 1]`.
fn p_rel_potential(p: f64, r: f64) -> f64 {
    let rp = r.min(1.0).powf(p);
    // -expm1(ln(1 - r^p)/p) avoids cancellation for small r
    -((-rp).ln_1p() / p).exp_m1()
}

fn adaptive_simpson(f: &(dyn Fn(f64) -> f64 + Send + Sync), a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &(dyn Fn(f64) -> f64 + Send + Sync),
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}
