//! Grid functions on `0..=T+1` (boundary points included) and on the
//! interior `1..=T`, together with the differences, norms and bilinear
//! quantities used throughout the solvers.
//!
//! Index windows are always explicit: [`GridFunction::at`] takes the full
//! index `0..=T+1`, [`InteriorFunction::at`] takes `1..=T`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::phi_maps::PhiMap;
use crate::vecops::{compensated_sum, dot, norm};

/// A function `u: {0, ..., T+1} → ℝᴺ`, stored row-major by grid index.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    dim: usize,
    horizon: usize,
    values: Vec<f64>,
}

/// A function `h: {1, ..., T} → ℝᴺ`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteriorFunction {
    dim: usize,
    horizon: usize,
    values: Vec<f64>,
}

/// The boundary data `(u(0), u(T+1))`, or a flux pair in the same layout.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPair {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

/// Output of [`norms_and_split`].
#[derive(Clone, Debug)]
pub struct NormSummary {
    /// `(Σ_{n=1}^T |u(n)|²)^{1/2}`
    pub norm_t: f64,
    /// `(Σ_{n=0}^{T+1} |u(n)|²)^{1/2}`
    pub norm_t2: f64,
    /// `max_{0≤k≤T} |Δu(k)|`
    pub sup_diff: f64,
    /// average over all `T+2` points
    pub mean: Vec<f64>,
    pub tilde: GridFunction,
}

/// The three sums of the summation-by-parts identity `O = ω + M`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearTerms {
    pub o: f64,
    pub omega: f64,
    pub m: f64,
}

fn check_shape(dim: usize, horizon: usize) -> Result<()> {
    if dim == 0 || horizon == 0 {
        return Err(Error::Dimension(format!(
            "dimension and horizon must be positive, got N = {dim}, T = {horizon}"
        )));
    }
    Ok(())
}

impl GridFunction {
    pub fn zeros(dim: usize, horizon: usize) -> Result<Self> {
        check_shape(dim, horizon)?;
        Ok(Self {
            dim,
            horizon,
            values: vec![0.0; (horizon + 2) * dim],
        })
    }

    pub fn constant(value: &[f64], horizon: usize) -> Result<Self> {
        check_shape(value.len(), horizon)?;
        if !value.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("grid function"));
        }
        let values = (0..horizon + 2).flat_map(|_| value.iter().copied()).collect();
        Ok(Self {
            dim: value.len(),
            horizon,
            values,
        })
    }

    /// Builds from `T+2` rows of length `N`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 3 {
            return Err(Error::Dimension(format!(
                "a grid function needs at least 3 rows (T >= 1), got {}",
                rows.len()
            )));
        }
        let dim = rows[0].len();
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Dimension(format!(
                "row {bad} has length {}, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::from_flat(dim, rows.len() - 2, rows.concat())
    }

    /// Builds from a flat row-major buffer of length `(T+2)·N`.
    pub fn from_flat(dim: usize, horizon: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(dim, horizon)?;
        if values.len() != (horizon + 2) * dim {
            return Err(Error::Dimension(format!(
                "expected {} values for N = {dim}, T = {horizon}, got {}",
                (horizon + 2) * dim,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("grid function"));
        }
        Ok(Self { dim, horizon, values })
    }

    pub(crate) fn from_flat_unchecked(dim: usize, horizon: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), (horizon + 2) * dim);
        Self { dim, horizon, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `u(n)` for `n` in `0..=T+1`.
    pub fn at(&self, n: usize) -> &[f64] {
        &self.values[n * self.dim..(n + 1) * self.dim]
    }

    pub fn at_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.values[n * self.dim..(n + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.dim).map(|c| c.to_vec()).collect()
    }

    /// `(u(0), u(T+1))`.
    pub fn boundary_pair(&self) -> BoundaryPair {
        BoundaryPair {
            left: self.at(0).to_vec(),
            right: self.at(self.horizon + 1).to_vec(),
        }
    }

    /// Restriction to `1..=T`.
    pub fn interior(&self) -> InteriorFunction {
        InteriorFunction {
            dim: self.dim,
            horizon: self.horizon,
            values: self.values[self.dim..(self.horizon + 1) * self.dim].to_vec(),
        }
    }

    /// `Δu(k) = u(k+1) - u(k)` for `k` in `0..=T`.
    pub fn diff(&self, k: usize) -> Vec<f64> {
        self.at(k + 1).iter().zip(self.at(k)).map(|(a, b)| a - b).collect()
    }

    pub fn sup_diff(&self) -> f64 {
        (0..=self.horizon).map(|k| norm(&self.diff(k))).fold(0.0, f64::max)
    }

    pub fn norm_t(&self) -> f64 {
        (1..=self.horizon).map(|n| dot(self.at(n), self.at(n))).sum::<f64>().sqrt()
    }

    pub fn norm_t2(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    /// Average over all `T+2` points.
    pub fn mean(&self) -> Vec<f64> {
        let count = (self.horizon + 2) as f64;
        (0..self.dim)
            .map(|i| compensated_sum(self.values.iter().skip(i).step_by(self.dim).copied()) / count)
            .collect()
    }

    /// `‖u - v‖_{T+2}`.
    pub fn distance(&self, other: &GridFunction) -> f64 {
        crate::vecops::dist(&self.values, &other.values)
    }

    pub fn same_shape(&self, other: &GridFunction) -> bool {
        self.dim == other.dim && self.horizon == other.horizon
    }

    /// Writes one row per grid index: `n,u_1,...,u_N`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, self.dim, 0, &self.values)
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let (first, rows) = read_rows(input)?;
        if first != 0 {
            return Err(Error::Parse(format!("grid function rows must start at n = 0, found {first}")));
        }
        Self::from_rows(&rows)
    }
}

impl InteriorFunction {
    pub fn zeros(dim: usize, horizon: usize) -> Result<Self> {
        check_shape(dim, horizon)?;
        Ok(Self {
            dim,
            horizon,
            values: vec![0.0; horizon * dim],
        })
    }

    pub fn constant(value: &[f64], horizon: usize) -> Result<Self> {
        check_shape(value.len(), horizon)?;
        Self::from_flat(
            value.len(),
            horizon,
            (0..horizon).flat_map(|_| value.iter().copied()).collect(),
        )
    }

    /// Builds from `T` rows of length `N`, row `i` being `h(i+1)`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Dimension("an interior function needs at least one row".into()));
        }
        let dim = rows[0].len();
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Dimension(format!(
                "row {bad} has length {}, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::from_flat(dim, rows.len(), rows.concat())
    }

    pub fn from_flat(dim: usize, horizon: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(dim, horizon)?;
        if values.len() != horizon * dim {
            return Err(Error::Dimension(format!(
                "expected {} values for N = {dim}, T = {horizon}, got {}",
                horizon * dim,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("interior function"));
        }
        Ok(Self { dim, horizon, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `h(n)` for `n` in `1..=T`.
    pub fn at(&self, n: usize) -> &[f64] {
        assert!(n >= 1 && n <= self.horizon, "interior index {n} outside 1..={}", self.horizon);
        &self.values[(n - 1) * self.dim..n * self.dim]
    }

    pub fn at_mut(&mut self, n: usize) -> &mut [f64] {
        assert!(n >= 1 && n <= self.horizon, "interior index {n} outside 1..={}", self.horizon);
        &mut self.values[(n - 1) * self.dim..n * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.dim).map(|c| c.to_vec()).collect()
    }

    /// `max_n |h(n)|`.
    pub fn sup_norm(&self) -> f64 {
        self.values.chunks(self.dim).map(norm).fold(0.0, f64::max)
    }

    /// Average over `1..=T`.
    pub fn mean(&self) -> Vec<f64> {
        let count = self.horizon as f64;
        (0..self.dim)
            .map(|i| compensated_sum(self.values.iter().skip(i).step_by(self.dim).copied()) / count)
            .collect()
    }

    /// Writes one row per grid index: `n,h_1,...,h_N` for `n = 1..T`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, self.dim, 1, &self.values)
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let (first, rows) = read_rows(input)?;
        if first != 1 {
            return Err(Error::Parse(format!("interior rows must start at n = 1, found {first}")));
        }
        Self::from_rows(&rows)
    }
}

impl BoundaryPair {
    pub fn new(left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        if left.len() != right.len() || left.is_empty() {
            return Err(Error::Dimension(format!(
                "boundary pair entries must share a positive dimension, got {} and {}",
                left.len(),
                right.len()
            )));
        }
        if !left.iter().chain(&right).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("boundary pair"));
        }
        Ok(Self { left, right })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            left: vec![0.0; dim],
            right: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.left.len()
    }

    /// Concatenation `(left, right) ∈ ℝ²ᴺ`.
    pub fn to_vec(&self) -> Vec<f64> {
        [self.left.as_slice(), self.right.as_slice()].concat()
    }

    pub fn from_slice(z: &[f64]) -> Self {
        let n = z.len() / 2;
        Self {
            left: z[..n].to_vec(),
            right: z[n..].to_vec(),
        }
    }

    /// Membership in the open strip `|left - right| < sigma`.
    pub fn in_strip(&self, sigma: f64) -> bool {
        crate::vecops::dist(&self.left, &self.right) < sigma
    }
}

/// The `T+1` forward differences `Δu(0), ..., Δu(T)`.
pub fn forward_differences(u: &GridFunction) -> Vec<Vec<f64>> {
    (0..=u.horizon).map(|k| u.diff(k)).collect()
}

/// Norms, mean over `0..=T+1` and the zero-mean part `u - mean`.
pub fn norms_and_split(u: &GridFunction) -> NormSummary {
    let mean = u.mean();
    let mut tilde = u.clone();
    for row in tilde.values.chunks_mut(u.dim) {
        for (r, m) in row.iter_mut().zip(&mean) {
            *r -= m;
        }
    }
    NormSummary {
        norm_t: u.norm_t(),
        norm_t2: u.norm_t2(),
        sup_diff: u.sup_diff(),
        mean,
        tilde,
    }
}

fn check_in_ball(phi: &PhiMap, u: &GridFunction, which: &str) -> Result<()> {
    let s = u.sup_diff();
    if s >= phi.radius() {
        return Err(Error::Domain(format!(
            "sup |Δ{which}| = {s} is not below the radius {}",
            phi.radius()
        )));
    }
    Ok(())
}

/// Flux sequence `φ(Δu(k))`, `k = 0..=T`; requires `sup_diff(u) < a`.
pub fn flux_sequence(phi: &PhiMap, u: &GridFunction) -> Result<Vec<Vec<f64>>> {
    check_in_ball(phi, u, "u")?;
    Ok((0..=u.horizon)
        .map(|k| {
            let d = u.diff(k);
            let mut out = vec![0.0; u.dim];
            phi.eval_into(&d, &mut out);
            out
        })
        .collect())
}

/// Evaluates the three sums
///
/// ```text
/// O = -Σ_{n=1}^T ⟨Δ[φ(Δu(n-1))] - Δ[φ(Δv(n-1))] | u(n) - v(n)⟩
/// ω = ⟨φ(Δu(0)) - φ(Δv(0)) | u(0) - v(0)⟩ - ⟨φ(Δu(T)) - φ(Δv(T)) | u(T+1) - v(T+1)⟩
/// M = Σ_{k=0}^T ⟨φ(Δu(k)) - φ(Δv(k)) | Δu(k) - Δv(k)⟩
/// ```
///
/// with compensated summation.
pub fn bilinear_terms(phi: &PhiMap, u: &GridFunction, v: &GridFunction) -> Result<BilinearTerms> {
    if !u.same_shape(v) {
        return Err(Error::Dimension(format!(
            "grid functions have shapes (N={}, T={}) and (N={}, T={})",
            u.dim, u.horizon, v.dim, v.horizon
        )));
    }
    let fu = flux_sequence(phi, u)?;
    let fv = flux_sequence(phi, v)?;
    let t = u.horizon;
    let dflux: Vec<Vec<f64>> = fu
        .iter()
        .zip(&fv)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let w: Vec<Vec<f64>> = (0..t + 2)
        .map(|n| u.at(n).iter().zip(v.at(n)).map(|(x, y)| x - y).collect())
        .collect();

    let mut o_terms = Vec::with_capacity(t * u.dim);
    for n in 1..=t {
        for i in 0..u.dim {
            // -Δ[ψ(n-1)] = ψ(n-1) - ψ(n)
            o_terms.push((dflux[n - 1][i] - dflux[n][i]) * w[n][i]);
        }
    }
    let mut omega_terms = Vec::with_capacity(2 * u.dim);
    for i in 0..u.dim {
        omega_terms.push(dflux[0][i] * w[0][i]);
        omega_terms.push(-dflux[t][i] * w[t + 1][i]);
    }
    let mut m_terms = Vec::with_capacity((t + 1) * u.dim);
    for k in 0..=t {
        for i in 0..u.dim {
            m_terms.push(dflux[k][i] * (w[k + 1][i] - w[k][i]));
        }
    }
    Ok(BilinearTerms {
        o: compensated_sum(o_terms),
        omega: compensated_sum(omega_terms),
        m: compensated_sum(m_terms).max(0.0),
    })
}

fn write_rows<W: Write>(mut out: W, dim: usize, first: usize, values: &[f64]) -> Result<()> {
    let header: Vec<String> = std::iter::once("n".to_string())
        .chain((1..=dim).map(|i| format!("u_{i}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (k, row) in values.chunks(dim).enumerate() {
        let mut line = (first + k).to_string();
        for v in row {
            line.push(',');
            line.push_str(&format!("{v:.16e}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn read_rows<R: BufRead>(input: R) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut rows = Vec::new();
    let mut first = None;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with('n')) {
            continue;
        }
        let mut fields = line.split(',');
        let idx: usize = fields
            .next()
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad index: {e}", lineno + 1)))?;
        let expected = first.map_or(idx, |f: usize| f + rows.len());
        if idx != expected {
            return Err(Error::Parse(format!("line {}: expected index {expected}, found {idx}", lineno + 1)));
        }
        first.get_or_insert(idx);
        let row = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((first.unwrap_or(0), rows))
}
