//! SMO-style solver for the two box- and equality-constrained quadratic
//! programs used by the pipeline: the one-class SVM dual and the
//! epsilon-insensitive SVR dual.
//!
//! Both are instances of
//!   minimize  1/2 a'Qa + p'a
//!   s.t.      z'a = const (fixed by the feasible starting point),
//!             0 <= a_k <= U,
//! solved by repeated analytic updates of the most-violating variable pair.

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;

/// KKT tolerance at convergence.
pub const SMO_TOL: f64 = 1e-7;
/// Iteration cap per variable; exceeding it is a hard error.
pub const SMO_MAX_ITER_PER_VAR: u64 = 100_000;
/// A pairwise curvature below -PSD_TOL * n means the kernel matrix is not
/// positive semidefinite up to tolerance.
const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    pub iterations: u64,
    pub kkt_violation: f64,
    /// Objective value after every update, recorded only when tracing.
    pub objective_trace: Option<Vec<f64>>,
}

/// Matrix access abstraction so the SVR dual can present its 2n x 2n
/// sign-extended kernel without materializing it.
pub trait QpMatrix {
    fn len(&self) -> usize;
    fn entry(&self, i: usize, j: usize) -> f64;
}

impl QpMatrix for GramMatrix {
    fn len(&self) -> usize {
        self.n()
    }
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }
}

/// 2n x 2n view used by the SVR dual: entry(a, b) = z_a z_b K(a mod n, b mod n)
/// with z = +1 for the first n variables and -1 for the rest.
struct SvrMatrix<'a> {
    k: &'a GramMatrix,
}

impl SvrMatrix<'_> {
    #[inline]
    fn sign(&self, i: usize) -> f64 {
        if i < self.k.n() {
            1.0
        } else {
            -1.0
        }
    }
    #[inline]
    fn base(&self, i: usize) -> usize {
        let n = self.k.n();
        if i < n {
            i
        } else {
            i - n
        }
    }
}

impl QpMatrix for SvrMatrix<'_> {
    fn len(&self) -> usize {
        2 * self.k.n()
    }
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.sign(i) * self.sign(j) * self.k.get(self.base(i), self.base(j))
    }
}

struct SmoOutcome {
    a: Vec<f64>,
    gradient: Vec<f64>,
    iterations: u64,
    kkt_violation: f64,
    objective_trace: Option<Vec<f64>>,
}

/// Core most-violating-pair SMO loop. `z` entries must be +1 or -1 and the
/// starting point `a` must already satisfy the box and equality constraints.
fn smo_loop(
    q: &dyn QpMatrix,
    p: &[f64],
    z: &[f64],
    upper: f64,
    mut a: Vec<f64>,
    trace: bool,
) -> Result<SmoOutcome> {
    let m = q.len();
    debug_assert_eq!(p.len(), m);
    debug_assert_eq!(z.len(), m);
    debug_assert_eq!(a.len(), m);

    let mut g: Vec<f64> = (0..m)
        .map(|k| p[k] + (0..m).map(|l| q.entry(k, l) * a[l]).sum::<f64>())
        .collect();

    let objective = |a: &[f64], g: &[f64]| -> f64 {
        0.5 * a.iter().zip(g.iter().zip(p)).map(|(ak, (gk, pk))| ak * (gk + pk)).sum::<f64>()
    };

    let mut trace_vec = if trace { Some(vec![objective(&a, &g)]) } else { None };
    let max_iter = SMO_MAX_ITER_PER_VAR * m as u64;
    let mut iterations = 0u64;
    let mut violation;

    loop {
        // Most violating pair: i maximizes -z_k g_k over variables movable in
        // the +z_k direction, j minimizes it over those movable in -z_k.
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let mut up_max = f64::NEG_INFINITY;
        let mut down_min = f64::INFINITY;
        for k in 0..m {
            let v = -z[k] * g[k];
            let can_up = if z[k] > 0.0 { a[k] < upper } else { a[k] > 0.0 };
            let can_down = if z[k] > 0.0 { a[k] > 0.0 } else { a[k] < upper };
            if can_up && v > up_max {
                up_max = v;
                i = k;
            }
            if can_down && v < down_min {
                down_min = v;
                j = k;
            }
        }
        violation = if i == usize::MAX || j == usize::MAX {
            0.0
        } else {
            up_max - down_min
        };
        if violation <= SMO_TOL || i == j {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Qp(format!(
                "SMO did not converge after {iterations} iterations (violation {violation:.3e})"
            )));
        }
        iterations += 1;

        let eta = q.entry(i, i) + q.entry(j, j) - 2.0 * z[i] * z[j] * q.entry(i, j);
        if eta < -PSD_TOL * m as f64 {
            return Err(Error::Qp(format!(
                "kernel matrix not positive semidefinite (pair curvature {eta:.3e})"
            )));
        }
        let t_max_i = if z[i] > 0.0 { upper - a[i] } else { a[i] };
        let t_max_j = if z[j] > 0.0 { a[j] } else { upper - a[j] };
        let t_cap = t_max_i.min(t_max_j);
        let t = if eta > 0.0 { (violation / eta).min(t_cap) } else { t_cap };

        // Apply step; snap exactly to a bound when the step is capped there.
        a[i] += z[i] * t;
        a[j] -= z[j] * t;
        if t >= t_max_i {
            a[i] = if z[i] > 0.0 { upper } else { 0.0 };
        }
        if t >= t_max_j {
            a[j] = if z[j] > 0.0 { 0.0 } else { upper };
        }
        for k in 0..m {
            g[k] += t * (z[i] * q.entry(k, i) - z[j] * q.entry(k, j));
        }
        if let Some(tr) = trace_vec.as_mut() {
            tr.push(objective(&a, &g));
        }
    }

    Ok(SmoOutcome {
        kkt_violation: violation.max(0.0),
        objective_trace: trace_vec,
        gradient: g,
        a,
        iterations,
    })
}

fn finish(p: &[f64], out: SmoOutcome) -> QpSolution {
    let objective = 0.5
        * out
            .a
            .iter()
            .zip(out.gradient.iter().zip(p))
            .map(|(ak, (gk, pk))| ak * (gk + pk))
            .sum::<f64>();
    QpSolution {
        coefficients: out.a,
        objective,
        iterations: out.iterations,
        kkt_violation: out.kkt_violation,
        objective_trace: out.objective_trace,
    }
}

/// One-class SVM dual:
///   min 1/2 a'Ka  s.t.  0 <= a_i <= 1/(nu l), sum a_i = 1.
pub fn solve_ocsvm_dual(k: &GramMatrix, nu: f64) -> Result<QpSolution> {
    solve_ocsvm_dual_traced(k, nu, false)
}

pub fn solve_ocsvm_dual_traced(k: &GramMatrix, nu: f64, trace: bool) -> Result<QpSolution> {
    let l = k.n();
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::Qp(format!("nu must be in (0, 1], got {nu}")));
    }
    let nl = nu * l as f64;
    if nl < 1.0 {
        return Err(Error::Qp(format!(
            "infeasible one-class SVM dual: nu*l = {nl} < 1, the box cannot sum to 1"
        )));
    }
    let upper = 1.0 / nl;
    let p = vec![0.0; l];
    let z = vec![1.0; l];
    let init = vec![1.0 / l as f64; l];
    let out = smo_loop(k, &p, &z, upper, init, trace)?;
    Ok(finish(&p, out))
}

/// Bias of the one-class SVM decision function, recovered from the kernel
/// expansion at the free support vectors. At convergence every expansion
/// over a non-upper-bound coefficient lies within the solver tolerance of
/// the free-SV value; taking the minimum keeps all of those points at a
/// nonnegative score, so only bound coefficients can become outliers.
/// Falls back to the midpoint of the KKT bounds when every coefficient sits
/// on a box bound; the flag reports whether a free SV existed.
pub fn ocsvm_rho(k: &GramMatrix, alpha: &[f64], upper: f64) -> (f64, bool) {
    let l = k.n();
    let expansion = |i: usize| -> f64 {
        k.row(i).iter().zip(alpha).map(|(kij, aj)| kij * aj).sum()
    };
    let margin = upper * 1e-8;
    let mut any_free = false;
    let mut min_non_bound = f64::INFINITY;
    for i in 0..l {
        if alpha[i] < upper - margin {
            min_non_bound = min_non_bound.min(expansion(i));
            if alpha[i] > margin {
                any_free = true;
            }
        }
    }
    if min_non_bound.is_finite() && any_free {
        return (min_non_bound, true);
    }
    // All coefficients at bounds: rho lies between the largest expansion over
    // upper-bound points and the smallest over zero points.
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..l {
        let e = expansion(i);
        if alpha[i] >= upper - margin {
            lo = lo.max(e);
        } else {
            hi = hi.min(e);
        }
    }
    if !lo.is_finite() {
        lo = hi;
    }
    if !hi.is_finite() {
        hi = lo;
    }
    (0.5 * (lo + hi), false)
}

#[derive(Debug, Clone)]
pub struct SvrSolution {
    /// beta_i = alpha_i - alpha_i^*, the signed support coefficients.
    pub beta: Vec<f64>,
    /// Bias in the standard convention f(x) = sum beta_i k(x_i, x) + bias.
    pub bias: f64,
    /// False when no free support vector existed and the bias fell back to
    /// the midpoint of its KKT bounds.
    pub bias_from_free_sv: bool,
    pub objective: f64,
    pub iterations: u64,
    pub kkt_violation: f64,
}

/// Epsilon-insensitive SVR dual, solved in the 2n-variable (alpha, alpha*)
/// form:
///   min 1/2 (a-a*)'K(a-a*) + eps sum(a+a*) - y'(a-a*)
///   s.t. sum(a-a*) = 0, 0 <= a, a* <= C.
pub fn solve_svr_dual(k: &GramMatrix, y: &[f64], epsilon: f64, c: f64) -> Result<SvrSolution> {
    let n = k.n();
    if y.len() != n {
        return Err(Error::Qp(format!("target length {} != kernel size {n}", y.len())));
    }
    if epsilon < 0.0 {
        return Err(Error::Qp(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if c <= 0.0 {
        return Err(Error::Qp(format!("box constraint C must be > 0, got {c}")));
    }
    let q = SvrMatrix { k };
    let m = 2 * n;
    let mut p = vec![0.0; m];
    let mut z = vec![0.0; m];
    for i in 0..n {
        p[i] = epsilon - y[i];
        p[n + i] = epsilon + y[i];
        z[i] = 1.0;
        z[n + i] = -1.0;
    }
    let out = smo_loop(&q, &p, &z, c, vec![0.0; m], false)?;

    // Bias: for any free variable the stationarity condition gives
    // b = -z_k g_k; otherwise bracket it from the bound conditions.
    let margin = c * 1e-8;
    let mut sum = 0.0;
    let mut count = 0usize;
    for kk in 0..m {
        if out.a[kk] > margin && out.a[kk] < c - margin {
            sum += -z[kk] * out.gradient[kk];
            count += 1;
        }
    }
    let (bias, from_free) = if count > 0 {
        (sum / count as f64, true)
    } else {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for kk in 0..m {
            let v = -z[kk] * out.gradient[kk];
            // At a_k = 0 the KKT inequality g_k - b_mult z_k >= 0 bounds the
            // bias below for z = +1 and above for z = -1; at the upper bound
            // the inequality (and the sides) flip.
            let at_zero = out.a[kk] <= margin;
            if at_zero == (z[kk] > 0.0) {
                lo = lo.max(v);
            } else {
                hi = hi.min(v);
            }
        }
        if !lo.is_finite() {
            lo = hi;
        }
        if !hi.is_finite() {
            hi = lo;
        }
        (0.5 * (lo + hi), false)
    };

    let beta: Vec<f64> = (0..n).map(|i| out.a[i] - out.a[n + i]).collect();
    let objective = 0.5
        * out
            .a
            .iter()
            .zip(out.gradient.iter().zip(&p))
            .map(|(ak, (gk, pk))| ak * (gk + pk))
            .sum::<f64>();
    Ok(SvrSolution {
        beta,
        bias,
        bias_from_free_sv: from_free,
        objective,
        iterations: out.iterations,
        kkt_violation: out.kkt_violation,
    })
}

/// Fitted SVR values on the training points.
pub fn svr_fitted(k: &GramMatrix, beta: &[f64], bias: f64) -> Vec<f64> {
    (0..k.n())
        .map(|i| k.row(i).iter().zip(beta).map(|(kij, bj)| kij * bj).sum::<f64>() + bias)
        .collect()
}
