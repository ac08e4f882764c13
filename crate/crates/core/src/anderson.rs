//! Anderson (type II) acceleration of a damped fixed-point iteration
//! `x ← (1-β)x + βG(x)`.
//!
//! Callers own the safeguard: [`Anderson::step`] proposes an accelerated
//! iterate and [`Anderson::damped`] the plain one; the solvers compare
//! residuals and call [`Anderson::reset`] when acceleration misbehaves.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct Anderson {
    depth: usize,
    damping: f64,
    xs: VecDeque<Vec<f64>>,
    fs: VecDeque<Vec<f64>>,
}

impl Anderson {
    /// `depth = 0` gives the plain damped iteration.
    pub fn new(depth: usize, damping: f64) -> Self {
        Self {
            depth,
            damping,
            xs: VecDeque::with_capacity(depth + 1),
            fs: VecDeque::with_capacity(depth + 1),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn reset(&mut self) {
        self.xs.clear();
        self.fs.clear();
    }

    /// `(1-β)x + βg`.
    pub fn damped(&self, x: &[f64], gx: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(gx)
            .map(|(a, b)| (1.0 - self.damping) * a + self.damping * b)
            .collect()
    }

    /// Records the pair `(x, G(x))` and returns the next iterate.
    pub fn step(&mut self, x: &[f64], gx: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = gx.iter().zip(x).map(|(g, v)| g - v).collect();
        self.xs.push_back(x.to_vec());
        self.fs.push_back(f.clone());
        while self.xs.len() > self.depth + 1 {
            self.xs.pop_front();
            self.fs.pop_front();
        }
        let m = self.xs.len() - 1;
        if m == 0 {
            return self.damped(x, gx);
        }
        let n = x.len();
        // columns are consecutive differences of residuals and iterates
        let df = DMatrix::from_fn(n, m, |i, j| self.fs[j + 1][i] - self.fs[j][i]);
        let dx = DMatrix::from_fn(n, m, |i, j| self.xs[j + 1][i] - self.xs[j][i]);
        let rhs = DVector::from_column_slice(&f);
        let svd = df.clone().svd(true, true);
        let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
        let gamma = match svd.solve(&rhs, tol) {
            Ok(g) if g.iter().all(|v| v.is_finite()) => g,
            _ => {
                self.reset();
                return self.damped(x, gx);
            }
        };
        let correction = (dx + df * self.damping) * gamma;
        (0..n)
            .map(|i| x[i] + self.damping * f[i] - correction[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accelerates_a_linear_contraction() {
        // G(x) = Ax + b with spectral radius 0.95; fixed point solves (I - A)x = b
        let a = [[0.9, 0.05], [0.0, 0.95]];
        let b = [1.0, -0.5];
        let g = |x: &[f64]| {
            vec![
                a[0][0] * x[0] + a[0][1] * x[1] + b[0],
                a[1][0] * x[0] + a[1][1] * x[1] + b[1],
            ]
        };
        let exact_y = b[1] / (1.0 - a[1][1]);
        let exact_x = (b[0] + a[0][1] * exact_y) / (1.0 - a[0][0]);

        let mut acc = Anderson::new(3, 1.0);
        let mut x = vec![0.0, 0.0];
        let mut accelerated = 0;
        for k in 0..50 {
            let gx = g(&x);
            if ((gx[0] - x[0]).powi(2) + (gx[1] - x[1]).powi(2)).sqrt() < 1e-12 {
                accelerated = k;
                break;
            }
            x = acc.step(&x, &gx);
        }
        assert!(accelerated > 0 && accelerated < 20, "took {accelerated}");
        assert!((x[0] - exact_x).abs() < 1e-10 && (x[1] - exact_y).abs() < 1e-10);

        let plain = Anderson::new(0, 1.0);
        let mut y = vec![0.0, 0.0];
        for _ in 0..50 {
            y = plain.damped(&y, &g(&y));
        }
        assert!((y[1] - exact_y).abs() > 1e-3);
    }

    #[test]
    fn damping_only_without_history() {
        let mut acc = Anderson::new(2, 0.5);
        assert_eq!(acc.step(&[0.0], &[2.0]), vec![1.0]);
        acc.reset();
        assert_eq!(acc.step(&[1.0], &[1.0]), vec![1.0]);
    }
}
