//! One-class SVM novelty detection: training, decision-function evaluation
//! and the cross-validated gamma search.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{rbf_kernel, GramMatrix};
use crate::model::Standardization;
use crate::qp::{ocsvm_rho, solve_ocsvm_dual};

/// Default fold count for the gamma search.
pub const DEFAULT_FOLDS: usize = 5;
/// Default size of the gamma candidate grid.
pub const DEFAULT_GAMMA_GRID: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceTag {
    DemonstrationSpace,
    StateSpace,
}

/// Trained one-class SVM: support vectors, their coefficients, the bias rho
/// and the kernel scale. The decision function is
/// `sgn(sum_i alpha_i k(x_i, x) - rho)` with score-zero ties treated as
/// outliers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoveltyModel {
    pub space_tag: SpaceTag,
    pub nu: f64,
    pub gamma: f64,
    pub rho: f64,
    pub support_vectors: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    /// Applied to query points before kernel evaluation; identity when the
    /// training features were already standardized upstream.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub standardization: Option<Standardization>,
}

/// Trains a one-class SVM on the given feature vectors. The features are
/// used as-is; attach a standardization record afterwards if queries arrive
/// in raw units.
pub fn train_ocsvm(points: &[Vec<f64>], nu: f64, gamma: f64, tag: SpaceTag) -> Result<NoveltyModel> {
    if gamma <= 0.0 {
        return Err(Error::Novelty(format!("gamma must be > 0, got {gamma}")));
    }
    let l = points.len();
    if !(nu > 0.0 && nu <= 1.0) || (l as f64) < 1.0 / nu {
        return Err(Error::Novelty(format!(
            "need at least ceil(1/nu) = {} points for nu = {nu}, got {l}",
            (1.0 / nu).ceil()
        )));
    }
    let k = GramMatrix::from_points(points, gamma)?;
    let sol = solve_ocsvm_dual(&k, nu)?;
    let upper = 1.0 / (nu * l as f64);
    let (rho, _from_free) = ocsvm_rho(&k, &sol.coefficients, upper);

    let sv_cutoff = upper * 1e-8;
    let mut support_vectors = Vec::new();
    let mut alpha = Vec::new();
    for (x, &a) in points.iter().zip(&sol.coefficients) {
        if a > sv_cutoff {
            support_vectors.push(x.clone());
            alpha.push(a);
        }
    }
    Ok(NoveltyModel {
        space_tag: tag,
        nu,
        gamma,
        rho,
        support_vectors,
        alpha,
        standardization: None,
    })
}

impl NoveltyModel {
    /// Raw decision score `sum_i alpha_i k(x_i, x) - rho`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let q = match &self.standardization {
            Some(rec) => rec.apply(x),
            None => x.to_vec(),
        };
        let mut s = 0.0;
        for (sv, &a) in self.support_vectors.iter().zip(&self.alpha) {
            s += a * rbf_kernel(sv, &q, self.gamma)?;
        }
        Ok(s - self.rho)
    }

    /// Decision sign and raw score. Inliers require a strictly positive
    /// score; a point exactly on the boundary resolves to -1. With rho taken
    /// as the smallest non-bound expansion, at most one training point sits
    /// exactly on the boundary, so training outliers stay within the
    /// nu-property ceiling of nu*l + 1.
    pub fn decide(&self, x: &[f64]) -> Result<(i8, f64)> {
        let s = self.score(x)?;
        Ok((if s > 0.0 { 1 } else { -1 }, s))
    }
}

/// Seeded k-fold index partition.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    out
}

/// Cross-validated gamma search: for each candidate, counts held-out points
/// predicted as outliers over a k-fold split and returns the candidate with
/// the minimal total count. Ties break toward the smallest gamma.
pub fn select_gamma(
    points: &[Vec<f64>],
    nu: f64,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Novelty("empty gamma grid".into()));
    }
    if grid.iter().any(|&g| g <= 0.0) {
        return Err(Error::Novelty("gamma candidates must be > 0".into()));
    }
    if folds < 2 {
        return Err(Error::Novelty(format!("need at least 2 folds, got {folds}")));
    }
    if points.len() < folds {
        return Err(Error::Novelty(format!(
            "need at least {folds} points for {folds}-fold selection, got {}",
            points.len()
        )));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let fold_sets = fold_indices(points.len(), folds, seed);
    select_gamma_with_folds(points, nu, grid, &fold_sets)
}

/// Gamma search over an explicit fold partition.
pub fn select_gamma_with_folds(
    points: &[Vec<f64>],
    nu: f64,
    grid: &[f64],
    fold_sets: &[Vec<usize>],
) -> Result<f64> {
    let mut best_gamma = grid[0];
    let mut best_count = usize::MAX;
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &gamma in &sorted {
        let mut count = 0usize;
        for held_out in fold_sets {
            let held: std::collections::HashSet<usize> = held_out.iter().copied().collect();
            let train: Vec<Vec<f64>> = points
                .iter()
                .enumerate()
                .filter(|(i, _)| !held.contains(i))
                .map(|(_, p)| p.clone())
                .collect();
            let model = train_ocsvm(&train, nu, gamma, SpaceTag::DemonstrationSpace)?;
            for &i in held_out {
                let (sign, _) = model.decide(&points[i])?;
                if sign < 0 {
                    count += 1;
                }
            }
        }
        if count < best_count {
            best_count = count;
            best_gamma = gamma;
        }
    }
    Ok(best_gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_cloud(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn free_support_vector_scores_zero() {
        let pts = gaussian_cloud(60, 2, 1);
        let model = train_ocsvm(&pts, 0.2, 0.5, SpaceTag::StateSpace).unwrap();
        let upper = 1.0 / (0.2 * 60.0);
        let mut found = false;
        for (sv, &a) in model.support_vectors.iter().zip(&model.alpha) {
            if a > upper * 1e-4 && a < upper * (1.0 - 1e-4) {
                let s = model.score(sv).unwrap();
                assert!(s.abs() < 1e-5, "free SV score {s}");
                // and the tie/boundary rule pushes a zero-score point to -1
                found = true;
            }
        }
        assert!(found, "no free support vector in test model");
    }

    #[test]
    fn far_point_is_outlier() {
        let mut pts = gaussian_cloud(50, 2, 2);
        for p in &mut pts {
            for x in p.iter_mut() {
                *x *= 0.3;
            }
        }
        pts.push(vec![10.0, 10.0]);
        // At a smooth kernel scale the dense cluster supports a level well
        // above the box bound, so the isolated point cannot hold enough
        // coefficient mass to sit on the boundary: it lands strictly outside.
        let model = train_ocsvm(&pts, 0.05, 0.05, SpaceTag::StateSpace).unwrap();
        let (sign, score) = model.decide(&[10.0, 10.0]).unwrap();
        assert_eq!(sign, -1);
        assert!(score < -1e-3, "far point score {score}");
        // cluster mean stays an inlier
        let (sign_mean, _) = model.decide(&[0.0, 0.0]).unwrap();
        assert_eq!(sign_mean, 1);
    }

    #[test]
    fn extreme_distance_score_tends_to_minus_rho() {
        let pts = gaussian_cloud(40, 2, 3);
        let model = train_ocsvm(&pts, 0.1, 1.0, SpaceTag::StateSpace).unwrap();
        let s = model.score(&[1e6, -1e6]).unwrap();
        assert!((s + model.rho).abs() < 1e-12);
        assert!(s < 0.0);
    }

    #[test]
    fn alpha_sums_to_one_and_positive() {
        let pts = gaussian_cloud(80, 3, 4);
        let model = train_ocsvm(&pts, 0.15, 0.7, SpaceTag::DemonstrationSpace).unwrap();
        let sum: f64 = model.alpha.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "sum alpha = {sum}");
        assert!(model.alpha.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn nu_property_on_training_data() {
        let pts = gaussian_cloud(100, 2, 5);
        for nu in [0.05, 0.1, 0.2] {
            let model = train_ocsvm(&pts, nu, 0.8, SpaceTag::StateSpace).unwrap();
            let outliers = pts
                .iter()
                .filter(|p| model.score(p).unwrap() < 0.0)
                .count() as f64;
            let nl = nu * 100.0;
            assert!(outliers <= nl + 1.0, "nu={nu}: {outliers} outliers > {nl}+1");
            assert!(
                model.alpha.len() as f64 >= nl - 1.0,
                "nu={nu}: {} SVs < {nl}-1",
                model.alpha.len()
            );
        }
    }

    #[test]
    fn outlier_count_monotone_in_nu() {
        let pts = gaussian_cloud(100, 2, 6);
        let mut last = 0usize;
        for nu in [0.02, 0.05, 0.1, 0.2] {
            let model = train_ocsvm(&pts, nu, 0.8, SpaceTag::StateSpace).unwrap();
            let outliers = pts.iter().filter(|p| model.score(p).unwrap() < 0.0).count();
            assert!(outliers >= last, "outliers dropped from {last} to {outliers} at nu={nu}");
            last = outliers;
        }
    }

    #[test]
    fn select_gamma_single_candidate() {
        let pts = gaussian_cloud(30, 2, 7);
        let g = select_gamma(&pts, 0.2, &[0.42], 5, 0).unwrap();
        assert_eq!(g, 0.42);
    }

    #[test]
    fn select_gamma_avoids_extreme_scale() {
        let pts = gaussian_cloud(80, 2, 8);
        let g = select_gamma(&pts, 0.1, &[1e-3, 1.0, 1e3], 5, 0).unwrap();
        assert_ne!(g, 1e3, "extreme gamma should make every held-out point an outlier");
    }

    #[test]
    fn select_gamma_stable_under_duplication() {
        // Folds for the doubled set hold out both copies of each original
        // point together, so the held-out counts scale exactly by two and
        // the argmin is unchanged.
        let pts = gaussian_cloud(60, 2, 9);
        let grid = [1e-3, 1e-1, 1e1, 1e3];
        let folds = fold_indices(60, 5, 3);
        let g1 = select_gamma_with_folds(&pts, 0.1, &grid, &folds).unwrap();
        let doubled: Vec<Vec<f64>> = pts.iter().chain(pts.iter()).cloned().collect();
        let doubled_folds: Vec<Vec<usize>> = folds
            .iter()
            .map(|f| f.iter().flat_map(|&i| [i, i + 60]).collect())
            .collect();
        let g2 = select_gamma_with_folds(&doubled, 0.1, &grid, &doubled_folds).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn decide_rejects_dimension_mismatch() {
        let pts = gaussian_cloud(20, 2, 10);
        let model = train_ocsvm(&pts, 0.5, 1.0, SpaceTag::StateSpace).unwrap();
        assert!(model.decide(&[1.0]).is_err());
    }

    #[test]
    fn fold_indices_partition() {
        let folds = fold_indices(23, 5, 11);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }
}
