//! Shared test oracles: an independent projected-gradient solver for the
//! two dual quadratic programs, and a Gaussian kernel density estimate with
//! matched quantile thresholds. Both are deliberately written with different
//! algorithms than the production code so that agreement is evidence, not
//! tautology.

#![allow(dead_code)]

use lfd_grasp::kernel::GramMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Dense symmetric quadratic program
///   minimize 1/2 a'Qa + p'a   s.t.   0 <= a_i <= upper,  sum z_i a_i = rhs
/// solved by projected gradient descent with a fixed 1/L step.
pub struct BoxQp {
    pub q: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub z: Vec<f64>,
    pub upper: f64,
    pub rhs: f64,
}

impl BoxQp {
    pub fn objective(&self, a: &[f64]) -> f64 {
        let n = a.len();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += a[i] * self.q[i][j] * a[j];
            }
        }
        0.5 * quad + self.p.iter().zip(a).map(|(p, a)| p * a).sum::<f64>()
    }

    /// Euclidean projection onto the box-and-hyperplane feasible set via
    /// bisection on the Lagrange multiplier of the equality constraint.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let clamp = |x: f64| x.max(0.0).min(self.upper);
        let constraint = |lambda: f64| -> f64 {
            v.iter()
                .zip(&self.z)
                .map(|(vi, zi)| zi * clamp(vi + lambda * zi))
                .sum::<f64>()
                - self.rhs
        };
        // sum z_i clamp(v_i + lambda z_i) is nondecreasing in lambda; bracket
        // the root, then bisect to fixed-point precision.
        let mut lo = -1.0;
        let mut hi = 1.0;
        let span = self.upper + v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + self.rhs.abs() + 1.0;
        lo *= span;
        hi *= span;
        assert!(constraint(lo) <= 0.0 && constraint(hi) >= 0.0, "projection bracket failed");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if constraint(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let lambda = 0.5 * (lo + hi);
        v.iter().zip(&self.z).map(|(vi, zi)| clamp(vi + lambda * zi)).collect()
    }

    /// Accelerated projected gradient (FISTA with function-value restart)
    /// from a feasible start. The step is the inverse of an upper bound on
    /// the largest eigenvalue of Q.
    pub fn solve(&self, start: Vec<f64>, iterations: usize) -> Vec<f64> {
        let n = start.len();
        let lipschitz = (0..n)
            .map(|i| self.q[i].iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0f64, f64::max)
            .max(1e-12);
        let step = 1.0 / lipschitz;
        let mut a = self.project(&start);
        let mut momentum = a.clone();
        let mut t = 1.0f64;
        let mut prev_obj = self.objective(&a);
        for _ in 0..iterations {
            let grad: Vec<f64> = (0..n)
                .map(|i| {
                    self.p[i]
                        + self.q[i].iter().zip(&momentum).map(|(q, m)| q * m).sum::<f64>()
                })
                .collect();
            let trial: Vec<f64> =
                momentum.iter().zip(&grad).map(|(mi, gi)| mi - step * gi).collect();
            let next = self.project(&trial);
            let obj = self.objective(&next);
            if obj > prev_obj {
                // restart the momentum sequence whenever it overshoots
                momentum = a.clone();
                t = 1.0;
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let shift = next
                .iter()
                .zip(&a)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            momentum = next
                .iter()
                .zip(&a)
                .map(|(ni, ai)| ni + ((t - 1.0) / t_next) * (ni - ai))
                .collect();
            a = next;
            t = t_next;
            prev_obj = obj;
            if shift < 1e-15 {
                break;
            }
        }
        self.polish(a)
    }

    /// Active-set refinement of a near-optimal point: variables at a box
    /// bound are frozen, the equality-constrained QP on the free variables
    /// is solved exactly, and any free variable pushed outside the box is
    /// moved to its bound for the next round.
    fn polish(&self, mut a: Vec<f64>) -> Vec<f64> {
        let n = a.len();
        let tol = 1e-9 * self.upper.max(1.0);
        for _ in 0..4 * n {
            let free: Vec<usize> = (0..n)
                .filter(|&i| a[i] > tol && a[i] < self.upper - tol)
                .collect();
            if free.is_empty() {
                return a;
            }
            // KKT system: [Q_ff z_f; z_f' 0] [a_f; lambda] = [-p_f - Q_fb a_b; rhs - z_b' a_b]
            let m = free.len() + 1;
            let mut mat = vec![vec![0.0; m]; m];
            let mut vec_b = vec![0.0; m];
            for (r, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    mat[r][c] = self.q[i][j];
                }
                mat[r][free.len()] = self.z[i];
                mat[free.len()][r] = self.z[i];
                let bound_term: f64 = (0..n)
                    .filter(|j| !free.contains(j))
                    .map(|j| self.q[i][j] * a[j])
                    .sum();
                vec_b[r] = -self.p[i] - bound_term;
            }
            vec_b[free.len()] = self.rhs
                - (0..n)
                    .filter(|j| !free.contains(j))
                    .map(|j| self.z[j] * a[j])
                    .sum::<f64>();
            let Some(sol) = gaussian_solve(mat, vec_b) else {
                return a;
            };
            let mut clipped = false;
            for (r, &i) in free.iter().enumerate() {
                if sol[r] < -tol {
                    a[i] = 0.0;
                    clipped = true;
                } else if sol[r] > self.upper + tol {
                    a[i] = self.upper;
                    clipped = true;
                } else {
                    a[i] = sol[r].max(0.0).min(self.upper);
                }
            }
            if !clipped {
                return a;
            }
        }
        a
    }
}

/// Dense Gaussian elimination with partial pivoting; None on a singular
/// system.
fn gaussian_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[pivot][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    Some(x)
}

/// One-class SVM dual as a BoxQp: min 1/2 a'Ka, 0 <= a <= 1/(nu l), sum = 1.
pub fn ocsvm_qp(k: &GramMatrix, nu: f64) -> BoxQp {
    let l = k.n();
    let q: Vec<Vec<f64>> = (0..l).map(|i| k.row(i).to_vec()).collect();
    BoxQp {
        q,
        p: vec![0.0; l],
        z: vec![1.0; l],
        upper: 1.0 / (nu * l as f64),
        rhs: 1.0,
    }
}

/// SVR dual in the 2n (alpha, alpha*) form as a BoxQp:
///   min 1/2 (a-a*)'K(a-a*) + eps sum(a+a*) - y'(a-a*)
///   s.t. sum(a-a*) = 0, 0 <= a, a* <= C.
pub fn svr_qp(k: &GramMatrix, y: &[f64], epsilon: f64, c: f64) -> BoxQp {
    let n = k.n();
    let m = 2 * n;
    let sign = |i: usize| if i < n { 1.0 } else { -1.0 };
    let base = |i: usize| if i < n { i } else { i - n };
    let mut q = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            q[i][j] = sign(i) * sign(j) * k.get(base(i), base(j));
        }
    }
    let mut p = vec![0.0; m];
    let mut z = vec![0.0; m];
    for i in 0..n {
        p[i] = epsilon - y[i];
        p[n + i] = epsilon + y[i];
        z[i] = 1.0;
        z[n + i] = -1.0;
    }
    BoxQp { q, p, z, upper: c, rhs: 0.0 }
}

/// Gaussian product-kernel density estimate evaluated at every training
/// point (the evaluation point included in its own sum, matching the
/// one-class SVM's in-sample expansion).
pub fn kde_scores(points: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    points
        .iter()
        .map(|x| {
            points
                .iter()
                .map(|y| {
                    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-gamma * d2).exp()
                })
                .sum::<f64>()
        })
        .collect()
}

/// The exact-density decision rule with a matched quantile: a point is kept
/// iff its density strictly exceeds the nu-quantile of the in-sample
/// density distribution (the same fraction the one-class SVM excludes).
pub fn kde_kept(points: &[Vec<f64>], gamma: f64, nu: f64) -> (Vec<bool>, Vec<f64>, f64) {
    let scores = kde_scores(points, gamma);
    let mut sorted = scores.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cut_idx = ((nu * points.len() as f64).round() as usize).min(points.len() - 1);
    let threshold = sorted[cut_idx];
    let kept = scores.iter().map(|&s| s > threshold).collect();
    (kept, scores, threshold)
}

/// Seeded Gaussian cloud, optionally anisotropic.
pub fn gaussian_cloud(n: usize, dim: usize, seed: u64, scales: &[f64]) -> Vec<Vec<f64>> {
    assert_eq!(scales.len(), dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|j| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    v * scales[j]
                })
                .collect()
        })
        .collect()
}

/// Random smooth regression targets for SVR instances.
pub fn smooth_targets(points: &[Vec<f64>], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..points[0].len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    points
        .iter()
        .map(|x| {
            let dot: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            (dot + phase).sin() + 0.3 * dot
        })
        .collect()
}
