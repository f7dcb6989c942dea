//! Intended-policy learning: consistency filtering followed by one
//! epsilon-insensitive RBF-kernel SVR per action dimension, with a
//! cross-validated C/gamma grid search, plus prediction and post-processing
//! of raw regressed actions into executable ones.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::consistency::{filter_consistent, ConsistencyReport, FilterConfig};
use crate::error::{Error, Result};
use crate::kernel::{cross_kernel, gamma_grid, rbf_kernel, GramMatrix};
use crate::model::{
    cross, ActionVector, DemonstrationSet, Standardization, StateVector, ACTION_DIM, STATE_DIM,
};
use crate::novelty::fold_indices;
use crate::qp::{solve_svr_dual, SMO_TOL};

/// Default tube half-width as a fraction of each target dimension's
/// training standard deviation.
pub const DEFAULT_EPSILON_SCALE: f64 = 0.05;

/// Per-dimension support-vector expansion: prediction in standardized units
/// is `sum_i alpha_i exp(-gamma ||s_i - s||^2) - bias`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarPolicy {
    pub output_index: usize,
    pub alpha: Vec<f64>,
    pub support: Vec<Vec<f64>>,
    /// Stored so that the prediction *subtracts* it.
    pub bias: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub c: f64,
    pub bias_from_free_sv: bool,
}

impl ScalarPolicy {
    /// Kernel expansion over the stored support vectors, in standardized
    /// target units.
    pub fn predict_std(&self, s_std: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (sv, &a) in self.support.iter().zip(&self.alpha) {
            acc += a * rbf_kernel(sv, s_std, self.gamma)?;
        }
        Ok(acc - self.bias)
    }

    pub fn n_sv(&self) -> usize {
        self.alpha.len()
    }
}

/// The 17 scalar policies plus the shared standardization records and the
/// consistency report of the training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorPolicy {
    pub state_standardization: Standardization,
    pub action_standardization: Standardization,
    pub scalars: Vec<ScalarPolicy>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub consistency: Option<ConsistencyReport>,
}

impl VectorPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.scalars.len() != ACTION_DIM {
            return Err(Error::Policy(format!(
                "policy must cover all {ACTION_DIM} action dimensions, found {}",
                self.scalars.len()
            )));
        }
        for (k, sp) in self.scalars.iter().enumerate() {
            if sp.output_index != k {
                return Err(Error::Policy(format!(
                    "scalar policy at slot {k} claims output index {}",
                    sp.output_index
                )));
            }
            if sp.alpha.len() != sp.support.len() {
                return Err(Error::Policy(format!(
                    "dimension {k}: {} coefficients vs {} support vectors",
                    sp.alpha.len(),
                    sp.support.len()
                )));
            }
        }
        if self.state_standardization.dim() != STATE_DIM
            || self.action_standardization.dim() != ACTION_DIM
        {
            return Err(Error::Policy("standardization records have wrong width".into()));
        }
        Ok(())
    }

    /// Raw regressed action for a state, de-standardized to physical units.
    /// The output is not post-processed and carries `executable = false`.
    pub fn predict(&self, state: &StateVector) -> Result<ActionVector> {
        state.validate()?;
        let s_std = self.state_standardization.apply(&state.to_array());
        let mut out_std = vec![0.0; ACTION_DIM];
        for sp in &self.scalars {
            out_std[sp.output_index] = sp.predict_std(&s_std)?;
        }
        let phys = self.action_standardization.invert(&out_std);
        ActionVector::from_array(&phys, false)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let policy: Self = serde_json::from_reader(std::io::BufReader::new(file))?;
        policy.validate()?;
        Ok(policy)
    }
}

/// Scalar epsilon-insensitive loss in the literal form used for reporting:
/// zero inside the tube, the full absolute error outside it.
pub fn scalar_loss(a: f64, a_star: f64, epsilon: f64) -> f64 {
    let e = (a - a_star).abs();
    if e <= epsilon {
        0.0
    } else {
        e
    }
}

/// Sum of the per-dimension scalar losses over the 17 action dimensions.
pub fn loss_vector(a: &ActionVector, a_star: &ActionVector, epsilon: &[f64]) -> f64 {
    debug_assert_eq!(epsilon.len(), ACTION_DIM);
    a.to_array()
        .iter()
        .zip(a_star.to_array())
        .zip(epsilon)
        .map(|((x, y), e)| scalar_loss(*x, y, *e))
        .sum()
}

/// C/gamma candidate grid and search configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperGrid {
    pub c_values: Vec<f64>,
    /// Explicit gamma candidates; when absent a median-heuristic log grid of
    /// `gamma_grid_size` values is derived from the standardized states.
    pub gamma_values: Option<Vec<f64>>,
    pub gamma_grid_size: usize,
    /// Tube half-width as a fraction of each dimension's standard deviation.
    pub epsilon_scale: f64,
    pub folds: usize,
    pub seed: u64,
    /// Optional support-vector cap: when a trained dimension exceeds it, the
    /// tube is widened by 25% and the fit repeated, at most three times.
    pub sv_cap: Option<usize>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            c_values: vec![0.1, 1.0, 10.0, 100.0],
            gamma_values: None,
            gamma_grid_size: 15,
            epsilon_scale: DEFAULT_EPSILON_SCALE,
            folds: 5,
            seed: 0,
            sv_cap: None,
        }
    }
}

impl HyperGrid {
    pub fn validate(&self, n_train: usize) -> Result<()> {
        if self.c_values.is_empty() || self.c_values.iter().any(|&c| c <= 0.0) {
            return Err(Error::Policy("C candidates must be nonempty and positive".into()));
        }
        if let Some(g) = &self.gamma_values {
            if g.is_empty() || g.iter().any(|&v| v <= 0.0) {
                return Err(Error::Policy("gamma candidates must be nonempty and positive".into()));
            }
        }
        if self.epsilon_scale < 0.0 {
            return Err(Error::Policy("epsilon scale must be >= 0".into()));
        }
        if self.folds < 2 {
            return Err(Error::Policy(format!("need at least 2 folds, got {}", self.folds)));
        }
        if n_train < self.folds {
            return Err(Error::Policy(format!(
                "need at least {} training points for {}-fold search, got {n_train}",
                self.folds, self.folds
            )));
        }
        Ok(())
    }
}

/// Cross-validation loss table: `mean_loss[dim][ci][gi]` is the mean
/// held-out literal loss for C candidate `ci` and gamma candidate `gi`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossTable {
    pub c_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
    pub mean_loss: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridChoice {
    pub c: f64,
    pub gamma: f64,
    pub cv_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub per_dim: Vec<GridChoice>,
    pub table: LossTable,
}

/// Trains one scalar SVR and keeps only the nonzero-coefficient support
/// vectors. Inputs are in standardized units.
pub fn train_scalar(
    states_std: &[Vec<f64>],
    targets_std: &[f64],
    output_index: usize,
    epsilon: f64,
    c: f64,
    gamma: f64,
) -> Result<ScalarPolicy> {
    if states_std.len() < 2 {
        return Err(Error::Policy(format!(
            "scalar training needs at least 2 points, got {}",
            states_std.len()
        )));
    }
    let k = GramMatrix::from_points(states_std, gamma)?;
    train_scalar_with_gram(&k, states_std, targets_std, output_index, epsilon, c)
}

fn train_scalar_with_gram(
    k: &GramMatrix,
    states_std: &[Vec<f64>],
    targets_std: &[f64],
    output_index: usize,
    epsilon: f64,
    c: f64,
) -> Result<ScalarPolicy> {
    let sol = solve_svr_dual(k, targets_std, epsilon, c)?;
    let cutoff = c * 1e-10;
    let mut alpha = Vec::new();
    let mut support = Vec::new();
    for (i, &b) in sol.beta.iter().enumerate() {
        if b.abs() > cutoff {
            alpha.push(b);
            support.push(states_std[i].clone());
        }
    }
    Ok(ScalarPolicy {
        output_index,
        alpha,
        support,
        bias: -sol.bias,
        gamma: k.gamma,
        epsilon,
        c,
        bias_from_free_sv: sol.bias_from_free_sv,
    })
}

/// K-fold cross-validated grid search minimizing the mean literal loss per
/// action dimension. Ties break toward the smallest C, then the smallest
/// gamma. Targets arrive as one standardized column per dimension with its
/// tube half-width; constant dimensions pass `None` and are skipped.
pub fn grid_search(
    states_std: &[Vec<f64>],
    targets_std: &[Option<Vec<f64>>],
    epsilons: &[f64],
    grid: &HyperGrid,
) -> Result<GridSearchResult> {
    let n = states_std.len();
    grid.validate(n)?;
    let gamma_values = match &grid.gamma_values {
        Some(g) => {
            let mut g = g.clone();
            g.sort_by(|a, b| a.partial_cmp(b).unwrap());
            g
        }
        None => gamma_grid(states_std, grid.gamma_grid_size),
    };
    let mut c_values = grid.c_values.clone();
    c_values.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let dims = targets_std.len();
    let folds = fold_indices(n, grid.folds, grid.seed);
    let mut total_loss = vec![vec![vec![0.0f64; gamma_values.len()]; c_values.len()]; dims];
    let mut held_out_total = 0usize;

    for (gi, &gamma) in gamma_values.iter().enumerate() {
        for held_out in &folds {
            let held: std::collections::HashSet<usize> = held_out.iter().copied().collect();
            let train_idx: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
            let train_pts: Vec<Vec<f64>> =
                train_idx.iter().map(|&i| states_std[i].clone()).collect();
            let val_pts: Vec<Vec<f64>> = held_out.iter().map(|&i| states_std[i].clone()).collect();
            let k = GramMatrix::from_points(&train_pts, gamma)?;
            let kx = cross_kernel(&train_pts, &val_pts, gamma)?;
            if gi == 0 {
                held_out_total += held_out.len();
            }
            for (ci, &c) in c_values.iter().enumerate() {
                for (dim, col) in targets_std.iter().enumerate() {
                    let Some(col) = col else { continue };
                    let y_train: Vec<f64> = train_idx.iter().map(|&i| col[i]).collect();
                    let sol = solve_svr_dual(&k, &y_train, epsilons[dim], c)?;
                    for (vi, &i) in held_out.iter().enumerate() {
                        let pred: f64 = kx
                            .iter()
                            .zip(&sol.beta)
                            .map(|(row, &b)| row[vi] * b)
                            .sum::<f64>()
                            + sol.bias;
                        total_loss[dim][ci][gi] += scalar_loss(pred, col[i], epsilons[dim]);
                    }
                }
            }
        }
    }

    let denom = held_out_total.max(1) as f64;
    let mean_loss: Vec<Vec<Vec<f64>>> = total_loss
        .iter()
        .map(|per_c| per_c.iter().map(|per_g| per_g.iter().map(|&v| v / denom).collect()).collect())
        .collect();

    let per_dim = (0..dims)
        .map(|dim| {
            let mut best = GridChoice { c: c_values[0], gamma: gamma_values[0], cv_loss: f64::INFINITY };
            for (ci, &c) in c_values.iter().enumerate() {
                for (gi, &gamma) in gamma_values.iter().enumerate() {
                    let v = mean_loss[dim][ci][gi];
                    if v < best.cv_loss {
                        best = GridChoice { c, gamma, cv_loss: v };
                    }
                }
            }
            if targets_std[dim].is_none() {
                best.cv_loss = 0.0;
            }
            best
        })
        .collect();

    Ok(GridSearchResult {
        per_dim,
        table: LossTable { c_values, gamma_values, mean_loss },
    })
}

/// Gripper scalar clamp ranges applied during post-processing.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GripperLimits {
    pub f_range: (f64, f64),
    pub pre_range: (f64, f64),
}

impl Default for GripperLimits {
    fn default() -> Self {
        Self { f_range: (0.0, 3.0), pre_range: (0.0, 2.0) }
    }
}

fn normalize(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n < 1e-6 {
        return None;
    }
    Some([v[0] / n, v[1] / n, v[2] / n])
}

/// Turns a raw regressed action into an executable one: d1 normalized, d2
/// Gram-Schmidt orthogonalized against d1, d3 rebuilt as the cross product,
/// tactile thresholds clamped nonnegative and gripper scalars clamped to
/// their ranges. Position is untouched. Idempotent on already-executable
/// input.
pub fn postprocess_action(raw: &ActionVector, limits: &GripperLimits) -> Result<ActionVector> {
    if raw.to_array().iter().any(|x| !x.is_finite()) {
        return Err(Error::Policy("non-finite raw action".into()));
    }
    let d1 = normalize(raw.d1)
        .ok_or_else(|| Error::Policy("degenerate orientation: |d1| below 1e-6".into()))?;
    let proj = raw.d2[0] * d1[0] + raw.d2[1] * d1[1] + raw.d2[2] * d1[2];
    let d2_orth = [
        raw.d2[0] - proj * d1[0],
        raw.d2[1] - proj * d1[1],
        raw.d2[2] - proj * d1[2],
    ];
    let d2 = normalize(d2_orth)
        .ok_or_else(|| Error::Policy("degenerate orientation: d2 parallel to d1".into()))?;
    let d3 = cross(&d1, &d2);
    Ok(ActionVector {
        p: raw.p,
        d1,
        d2,
        d3,
        f: raw.f.clamp(limits.f_range.0, limits.f_range.1),
        pre: raw.pre.clamp(limits.pre_range.0, limits.pre_range.1),
        spt: [raw.spt[0].max(0.0), raw.spt[1].max(0.0), raw.spt[2].max(0.0)],
        executable: true,
    })
}

/// Full intended-policy learning: consistency filtering on the input set,
/// then per-dimension grid search and SVR training on the consistent
/// subset. The regression standardization is refitted on the consistent
/// subset so that removed demonstrations cannot distort the scales (and
/// thereby the tube widths) of the policy fit; the filter keeps its own
/// full-set record internally.
pub fn learn_intended_policy(
    set: &DemonstrationSet,
    filter_cfg: &FilterConfig,
    grid: &HyperGrid,
) -> Result<(VectorPolicy, ConsistencyReport)> {
    set.validate().map_err(|e| Error::Policy(format!("input set invalid: {e}")))?;
    let (consistent, report) = filter_consistent(set, filter_cfg)?;
    let rec29 = crate::model::standardize(&consistent.demo_matrix()?)?.1;
    let policy = train_policy_on(&consistent, &rec29, grid, Some(report.clone()))?;
    Ok((policy, report))
}

/// SVR training stage alone, without filtering: used for the unfiltered
/// ablation arm and internally by `learn_intended_policy`. `rec29` is the
/// shared demonstration-space standardization record.
pub fn train_policy_on(
    train: &DemonstrationSet,
    rec29: &Standardization,
    grid: &HyperGrid,
    consistency: Option<ConsistencyReport>,
) -> Result<VectorPolicy> {
    train.validate().map_err(|e| Error::Policy(format!("training set invalid: {e}")))?;
    let state_rec = rec29.slice(0..STATE_DIM);
    let action_rec = rec29.slice(STATE_DIM..STATE_DIM + ACTION_DIM);
    let states_std: Vec<Vec<f64>> =
        train.demos.iter().map(|d| state_rec.apply(&d.state.to_array())).collect();
    let actions_std: Vec<Vec<f64>> =
        train.demos.iter().map(|d| action_rec.apply(&d.action.to_array())).collect();

    // In standardized units every non-constant dimension has unit spread on
    // the record's fit set, so the tube half-width is the epsilon scale
    // itself. Dimensions constant over the training subset are handled by
    // the bias alone.
    let mut targets: Vec<Option<Vec<f64>>> = Vec::with_capacity(ACTION_DIM);
    let mut target_means = vec![0.0; ACTION_DIM];
    for k in 0..ACTION_DIM {
        let col: Vec<f64> = actions_std.iter().map(|r| r[k]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        target_means[k] = mean;
        let constant = col.iter().all(|&v| (v - mean).abs() < 1e-12);
        targets.push(if constant { None } else { Some(col) });
    }
    let epsilons = vec![grid.epsilon_scale; ACTION_DIM];

    let search = grid_search(&states_std, &targets, &epsilons, grid)?;

    // dims often share the chosen gamma; build each Gram matrix once
    let mut gram_cache: std::collections::HashMap<u64, GramMatrix> = std::collections::HashMap::new();
    let mut scalars = Vec::with_capacity(ACTION_DIM);
    for k in 0..ACTION_DIM {
        let scalar = match &targets[k] {
            None => ScalarPolicy {
                output_index: k,
                alpha: Vec::new(),
                support: Vec::new(),
                bias: -target_means[k],
                gamma: search.per_dim[k].gamma,
                epsilon: epsilons[k],
                c: search.per_dim[k].c,
                bias_from_free_sv: false,
            },
            Some(col) => {
                let choice = &search.per_dim[k];
                let gram = match gram_cache.entry(choice.gamma.to_bits()) {
                    std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(GramMatrix::from_points(&states_std, choice.gamma)?)
                    }
                }
                .clone();
                let mut eps = epsilons[k];
                let mut scalar = train_scalar_with_gram(&gram, &states_std, col, k, eps, choice.c)?;
                if let Some(cap) = grid.sv_cap {
                    for _ in 0..3 {
                        if scalar.n_sv() <= cap {
                            break;
                        }
                        eps *= 1.25;
                        scalar = train_scalar_with_gram(&gram, &states_std, col, k, eps, choice.c)?;
                    }
                }
                scalar
            }
        };
        scalars.push(scalar);
    }

    let policy = VectorPolicy {
        state_standardization: state_rec,
        action_standardization: action_rec,
        scalars,
        consistency,
    };
    policy.validate()?;
    Ok(policy)
}

/// SVR KKT residual checks for a trained scalar policy on its own training
/// data. Returns the worst violation of each condition:
/// (inside-tube coefficient magnitude, free-coefficient tube residual,
/// coefficient-sum residual).
pub fn svr_kkt_residuals(
    scalar: &ScalarPolicy,
    states_std: &[Vec<f64>],
    targets_std: &[f64],
) -> Result<(f64, f64, f64)> {
    let sum_resid = scalar.alpha.iter().sum::<f64>().abs();
    let mut inside_tube_coeff: f64 = 0.0;
    let mut free_tube_resid: f64 = 0.0;
    let margin = scalar.c * 1e-6;
    for (s, &y) in states_std.iter().zip(targets_std) {
        let pred = scalar.predict_std(s)?;
        let resid = y - pred;
        // match training points to stored support vectors by coefficient
        let coeff = scalar
            .support
            .iter()
            .position(|sv| sv == s)
            .map(|i| scalar.alpha[i])
            .unwrap_or(0.0);
        if resid.abs() < scalar.epsilon - SMO_TOL {
            inside_tube_coeff = inside_tube_coeff.max(coeff.abs());
        }
        if coeff.abs() > margin && coeff.abs() < scalar.c - margin {
            free_tube_resid = free_tube_resid.max((resid.abs() - scalar.epsilon).abs());
        }
    }
    Ok((inside_tube_coeff, free_tube_resid, sum_resid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn action(arr: [f64; ACTION_DIM]) -> ActionVector {
        ActionVector::from_array(&arr, false).unwrap()
    }

    #[test]
    fn loss_identity_is_zero() {
        let a = action([1.0; ACTION_DIM]);
        assert_eq!(loss_vector(&a, &a, &[0.5; ACTION_DIM]), 0.0);
    }

    #[test]
    fn loss_jumps_to_full_absolute_error_outside_tube() {
        assert_eq!(scalar_loss(1.0, 0.0, 0.5), 1.0);
        assert_eq!(scalar_loss(0.4, 0.0, 0.5), 0.0);
    }

    #[test]
    fn loss_translation_invariance() {
        let mut a = [0.0; ACTION_DIM];
        let mut b = [0.0; ACTION_DIM];
        for k in 0..ACTION_DIM {
            a[k] = (k as f64 * 0.7).sin();
            b[k] = (k as f64 * 1.3).cos();
        }
        let eps = [0.1; ACTION_DIM];
        let base = loss_vector(&action(a), &action(b), &eps);
        let mut at = a;
        let mut bt = b;
        for k in 0..ACTION_DIM {
            at[k] += 3.5;
            bt[k] += 3.5;
        }
        assert_relative_eq!(loss_vector(&action(at), &action(bt), &eps), base, epsilon = 1e-12);
    }

    #[test]
    fn predict_zero_coefficients_is_constant_bias() {
        let sp = ScalarPolicy {
            output_index: 0,
            alpha: vec![],
            support: vec![],
            bias: -2.5,
            gamma: 1.0,
            epsilon: 0.05,
            c: 1.0,
            bias_from_free_sv: false,
        };
        assert_eq!(sp.predict_std(&[0.0; STATE_DIM]).unwrap(), 2.5);
        assert_eq!(sp.predict_std(&[9.0; STATE_DIM]).unwrap(), 2.5);
    }

    #[test]
    fn predict_single_isolated_support_vector() {
        let sp = ScalarPolicy {
            output_index: 0,
            alpha: vec![0.7],
            support: vec![vec![1.0; STATE_DIM]],
            bias: 0.0,
            gamma: 2.0,
            epsilon: 0.05,
            c: 1.0,
            bias_from_free_sv: true,
        };
        assert_relative_eq!(sp.predict_std(&[1.0; STATE_DIM]).unwrap(), 0.7, epsilon = 1e-12);
        // far away the kernel decays and only the subtracted bias remains
        let far = sp.predict_std(&[100.0; STATE_DIM]).unwrap();
        assert!(far.abs() < 1e-12);
    }

    #[test]
    fn postprocess_gram_schmidt_closed_form() {
        let raw = ActionVector {
            p: [1.0, 2.0, 3.0],
            d1: [2.0, 0.0, 0.0],
            d2: [1.0, 1.0, 0.0],
            d3: [0.0, 0.0, 0.0],
            f: 1.0,
            pre: 0.5,
            spt: [1.0, 1.0, 1.0],
            executable: false,
        };
        let out = postprocess_action(&raw, &GripperLimits::default()).unwrap();
        assert_relative_eq!(out.d1[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(out.d2[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(out.d3[2], 1.0, epsilon = 1e-12);
        assert_eq!(out.p, raw.p);
        assert!(out.executable);
        out.validate().unwrap();
    }

    #[test]
    fn postprocess_clamps_spt() {
        let raw = ActionVector {
            p: [0.0; 3],
            d1: [0.0, 0.0, -1.0],
            d2: [0.0, 1.0, 0.0],
            d3: [0.0, 0.0, 0.0],
            f: 1.0,
            pre: 0.5,
            spt: [-0.3, 5.0, 7.0],
            executable: false,
        };
        let out = postprocess_action(&raw, &GripperLimits::default()).unwrap();
        assert_eq!(out.spt, [0.0, 5.0, 7.0]);
    }

    #[test]
    fn postprocess_idempotent() {
        let raw = ActionVector {
            p: [5.0, -1.0, 2.0],
            d1: [0.0, 0.0, -1.0],
            d2: [-0.6, 0.8, 0.0],
            d3: [0.8, 0.6, 0.0],
            f: 2.0,
            pre: 1.0,
            spt: [10.0, 20.0, 30.0],
            executable: true,
        };
        let once = postprocess_action(&raw, &GripperLimits::default()).unwrap();
        let twice = postprocess_action(&once, &GripperLimits::default()).unwrap();
        for (a, b) in raw.to_array().iter().zip(once.to_array()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(once, twice);
    }

    #[test]
    fn postprocess_rejects_degenerate_frames() {
        let mut raw = ActionVector {
            p: [0.0; 3],
            d1: [0.0, 0.0, 0.0],
            d2: [0.0, 1.0, 0.0],
            d3: [0.0; 3],
            f: 0.0,
            pre: 0.0,
            spt: [0.0; 3],
            executable: false,
        };
        assert!(postprocess_action(&raw, &GripperLimits::default()).is_err());
        raw.d1 = [0.0, 1.0, 0.0];
        assert!(postprocess_action(&raw, &GripperLimits::default()).is_err());
    }

    #[test]
    fn train_scalar_constant_targets_pure_bias() {
        let states: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64; STATE_DIM]).collect();
        let sp = train_scalar(&states, &vec![3.0; 10], 0, 0.05, 10.0, 0.1).unwrap();
        assert_eq!(sp.n_sv(), 0);
        for s in &states {
            assert_relative_eq!(sp.predict_std(s).unwrap(), 3.0, epsilon = 0.06);
        }
    }

    #[test]
    fn grid_search_single_cell() {
        let states: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.5]).collect();
        let targets: Vec<Option<Vec<f64>>> =
            vec![Some(states.iter().map(|s| s[0] * 2.0).collect())];
        let grid = HyperGrid {
            c_values: vec![10.0],
            gamma_values: Some(vec![0.3]),
            folds: 3,
            ..HyperGrid::default()
        };
        let res = grid_search(&states, &targets, &[0.05], &grid).unwrap();
        assert_eq!(res.per_dim[0].c, 10.0);
        assert_eq!(res.per_dim[0].gamma, 0.3);
    }

    #[test]
    fn grid_search_argmin_self_consistency() {
        let states: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 0.2]).collect();
        let targets: Vec<Option<Vec<f64>>> =
            vec![Some(states.iter().map(|s| 1.5 * s[0] - 0.3).collect())];
        let grid = HyperGrid {
            c_values: vec![0.1, 10.0],
            gamma_values: Some(vec![0.01, 0.5, 50.0]),
            folds: 3,
            ..HyperGrid::default()
        };
        let res = grid_search(&states, &targets, &[0.05], &grid).unwrap();
        let chosen = res.per_dim[0].cv_loss;
        for row in &res.table.mean_loss[0] {
            for &v in row {
                assert!(chosen <= v + 1e-12);
            }
        }
    }
}
