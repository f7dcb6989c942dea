//! RBF kernel evaluation and Gram-matrix construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `k(x, y) = exp(-gamma * ||x - y||^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Qp(format!(
            "kernel dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if gamma < 0.0 {
        return Err(Error::Qp(format!("kernel scale must be >= 0, got {gamma}")));
    }
    Ok((-gamma * squared_distance(x, y)).exp())
}

/// Symmetric n x n RBF kernel matrix with unit diagonal, stored row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramMatrix {
    n: usize,
    pub gamma: f64,
    values: Vec<f64>,
}

impl GramMatrix {
    pub fn from_points(points: &[Vec<f64>], gamma: f64) -> Result<Self> {
        if gamma < 0.0 {
            return Err(Error::Qp(format!("kernel scale must be >= 0, got {gamma}")));
        }
        let n = points.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
            for j in (i + 1)..n {
                let k = rbf_kernel(&points[i], &points[j], gamma)?;
                values[i * n + j] = k;
                values[j * n + i] = k;
            }
        }
        Ok(Self { n, gamma, values })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Kernel values between training points and arbitrary query points:
/// entry (i, j) = k(train_i, query_j).
pub fn cross_kernel(train: &[Vec<f64>], query: &[Vec<f64>], gamma: f64) -> Result<Vec<Vec<f64>>> {
    train
        .iter()
        .map(|t| query.iter().map(|q| rbf_kernel(t, q, gamma)).collect())
        .collect()
}

/// Median squared pairwise distance, the anchor for the default gamma grids.
/// Returns 1.0 for degenerate inputs (all points identical).
pub fn median_squared_distance(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 1.0;
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(squared_distance(&points[i], &points[j]));
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = dists[dists.len() / 2];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Logarithmically spaced gamma candidates spanning `[1e-3/m, 1e3/m]` where
/// m is the median squared pairwise distance of the points.
pub fn gamma_grid(points: &[Vec<f64>], count: usize) -> Vec<f64> {
    let m = median_squared_distance(points);
    log_grid(1e-3 / m, 1e3 / m, count)
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 1);
    if count == 1 {
        return vec![(lo * hi).sqrt()];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_zero_distance_is_one() {
        let x = vec![1.0, -2.0, 0.5];
        assert_eq!(rbf_kernel(&x, &x, 3.7).unwrap(), 1.0);
    }

    #[test]
    fn kernel_zero_gamma_is_one() {
        let x = vec![1.0, 2.0];
        let y = vec![-5.0, 9.0];
        assert_eq!(rbf_kernel(&x, &y, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn kernel_unit_distance_closed_form() {
        let x = vec![0.0, 0.0];
        let y = vec![1.0, 0.0];
        assert_relative_eq!(rbf_kernel(&x, &y, 1.0).unwrap(), (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn kernel_rejects_dimension_mismatch() {
        assert!(rbf_kernel(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn gram_symmetric_unit_diagonal() {
        let pts: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let g = GramMatrix::from_points(&pts, 0.8).unwrap();
        for i in 0..8 {
            assert_eq!(g.get(i, i), 1.0);
            for j in 0..8 {
                assert!((g.get(i, j) - g.get(j, i)).abs() < 1e-15);
                assert!(g.get(i, j) > 0.0 && g.get(i, j) <= 1.0);
            }
        }
    }

    #[test]
    fn gamma_grid_spans_six_decades() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let grid = gamma_grid(&pts, 15);
        assert_eq!(grid.len(), 15);
        let m = median_squared_distance(&pts);
        assert_relative_eq!(grid[0], 1e-3 / m, max_relative = 1e-12);
        assert_relative_eq!(grid[14], 1e3 / m, max_relative = 1e-12);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }
}
