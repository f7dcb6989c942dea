//! Discovery of the demonstration subset consistent with the teacher's
//! intended policy: a demonstration is kept iff it is an inlier of the
//! demonstration-space one-class SVM or an outlier of the state-space one.
//!
//! Both models are trained on the full, unfiltered input set; the
//! state-outlier exemption keeps demonstrations from sparse regions so the
//! learned policy stays valid over the whole sampled state space.

use serde::{Deserialize, Serialize};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::gamma_grid;
use crate::model::{DemonstrationSet, Standardization, STATE_DIM};
use crate::novelty::{select_gamma, train_ocsvm, NoveltyModel, SpaceTag, DEFAULT_FOLDS, DEFAULT_GAMMA_GRID};

/// Default quantile parameters. The demonstration-space ceiling comfortably
/// covers a ~5% inconsistency rate while the state-space exemption protects
/// sparse-region demonstrations.
pub const DEFAULT_NU_D: f64 = 0.08;
pub const DEFAULT_NU_S: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    StateActionInlier,
    StateOutlier,
    Inconsistent,
}

/// Per-demonstration audit record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoAssessment {
    pub id: u64,
    pub region: Region,
    pub g_d_sign: i8,
    pub g_s_sign: i8,
    pub g_d_score: f64,
    pub g_s_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub records: Vec<DemoAssessment>,
    pub kept_ids: Vec<u64>,
    pub removed_ids: Vec<u64>,
    pub demo_model: NoveltyModel,
    pub state_model: NoveltyModel,
}

impl ConsistencyReport {
    /// Writes the line-delimited audit format: one JSON record per
    /// demonstration with id, region and both raw scores.
    pub fn save_audit<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterConfig {
    pub nu_d: f64,
    pub nu_s: f64,
    /// Explicit gamma candidates; when absent a median-heuristic log grid of
    /// `gamma_grid_size` values is derived from the data.
    pub gamma_candidates: Option<Vec<f64>>,
    pub gamma_grid_size: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            nu_d: DEFAULT_NU_D,
            nu_s: DEFAULT_NU_S,
            gamma_candidates: None,
            gamma_grid_size: DEFAULT_GAMMA_GRID,
            folds: DEFAULT_FOLDS,
            seed: 0,
        }
    }
}

/// Trains the two one-class SVMs on the full set and splits it into the
/// consistent subset and the removal report.
pub fn filter_consistent(
    set: &DemonstrationSet,
    cfg: &FilterConfig,
) -> Result<(DemonstrationSet, ConsistencyReport)> {
    set.validate().map_err(|e| Error::Consistency(format!("input set invalid: {e}")))?;
    for (name, nu) in [("nu_d", cfg.nu_d), ("nu_s", cfg.nu_s)] {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::Consistency(format!("{name} must be in (0, 1], got {nu}")));
        }
    }
    let min_points = (1.0 / cfg.nu_d.min(cfg.nu_s)).ceil() as usize;
    if set.len() < min_points.max(cfg.folds) {
        return Err(Error::Consistency(format!(
            "need at least {} demonstrations for nu_d={}, nu_s={}, folds={}; got {}",
            min_points.max(cfg.folds),
            cfg.nu_d,
            cfg.nu_s,
            cfg.folds,
            set.len()
        )));
    }

    // Robust (median/MAD) standardization: the filter's whole purpose is to
    // expose outliers, and a plain mean/std fit would let gross action
    // deviations inflate their own dimensions' scales until they no longer
    // look deviant (classical masking).
    let demo_rows = set.demo_matrix()?;
    let rec29 = Standardization::fit_robust(&demo_rows)?;
    let demo_std: Vec<Vec<f64>> = demo_rows.iter().map(|r| rec29.apply(r)).collect();
    let state_std: Vec<Vec<f64>> = demo_std.iter().map(|r| r[..STATE_DIM].to_vec()).collect();
    let rec12 = rec29.slice(0..STATE_DIM);

    let demo_grid = match &cfg.gamma_candidates {
        Some(g) => g.clone(),
        None => gamma_grid(&demo_std, cfg.gamma_grid_size),
    };
    let state_grid = match &cfg.gamma_candidates {
        Some(g) => g.clone(),
        None => gamma_grid(&state_std, cfg.gamma_grid_size),
    };

    let gamma_d = select_gamma(&demo_std, cfg.nu_d, &demo_grid, cfg.folds, cfg.seed)?;
    let gamma_s = select_gamma(&state_std, cfg.nu_s, &state_grid, cfg.folds, cfg.seed.wrapping_add(1))?;

    let mut demo_model = train_ocsvm(&demo_std, cfg.nu_d, gamma_d, SpaceTag::DemonstrationSpace)?;
    demo_model.standardization = Some(rec29);
    let mut state_model = train_ocsvm(&state_std, cfg.nu_s, gamma_s, SpaceTag::StateSpace)?;
    state_model.standardization = Some(rec12);

    let mut records = Vec::with_capacity(set.len());
    let mut kept_ids = Vec::new();
    let mut removed_ids = Vec::new();
    let mut kept = Vec::new();
    for (demo, raw) in set.demos.iter().zip(&demo_rows) {
        let (g_d_sign, g_d_score) = demo_model.decide(raw)?;
        let (g_s_sign, g_s_score) = state_model.decide(&raw[..STATE_DIM])?;
        let region = if g_d_sign > 0 {
            Region::StateActionInlier
        } else if g_s_sign < 0 {
            Region::StateOutlier
        } else {
            Region::Inconsistent
        };
        if region == Region::Inconsistent {
            removed_ids.push(demo.id);
        } else {
            kept_ids.push(demo.id);
            kept.push(demo.clone());
        }
        records.push(DemoAssessment {
            id: demo.id,
            region,
            g_d_sign,
            g_s_sign,
            g_d_score,
            g_s_score,
        });
    }

    if kept.is_empty() {
        return Err(Error::Consistency(format!(
            "every demonstration was flagged inconsistent; reduce nu_d (currently {})",
            cfg.nu_d
        )));
    }

    Ok((
        DemonstrationSet::new(kept),
        ConsistencyReport { records, kept_ids, removed_ids, demo_model, state_model },
    ))
}
