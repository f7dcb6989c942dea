//! Evaluation: per-dimension R² reports, the filtered-vs-unfiltered
//! comparison experiment, and the grasp-success rollout experiment.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::consistency::FilterConfig;
use crate::error::{Error, Result};
use crate::model::{standardize, DemonstrationSet, Label, StateVector, ACTION_DIM};
use crate::perception::{extract_state, height_from_depth, segment};
use crate::policy::{
    learn_intended_policy, postprocess_action, scalar_loss, train_policy_on, GripperLimits,
    HyperGrid, VectorPolicy,
};
use crate::synth::{
    generate_demos, grasp_success, intended_action, render_scene, RenderConfig, SceneSampler,
    SceneSpec, SuccessTolerances, TeacherConfig,
};

/// Action-vector index groups reported alongside the per-dimension values.
pub const POSITION_DIMS: std::ops::Range<usize> = 0..3;
pub const ORIENTATION_DIMS: std::ops::Range<usize> = 3..12;
pub const SPT_DIMS: std::ops::Range<usize> = 14..17;

/// FNV-1a over a byte stream; used to assert both experiment arms saw
/// byte-identical validation data.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    /// Coefficient of determination per action dimension, on physical
    /// (de-standardized) values.
    pub r2: Vec<f64>,
    /// Dimensions whose validation targets were constant; their R² is
    /// reported as 0 by convention.
    pub constant_dims: Vec<usize>,
    pub group_position: f64,
    pub group_orientation: f64,
    pub group_spt: f64,
    pub mean_r2: f64,
    /// Standard deviation of R² across the 17 dimensions.
    pub std_r2: f64,
    /// Mean per-demonstration tube loss (zero inside the tube, full
    /// absolute error outside), in standardized units.
    pub tube_loss: f64,
}

impl RegressionReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("dim  r2\n");
        for (k, v) in self.r2.iter().enumerate() {
            let flag = if self.constant_dims.contains(&k) { "  (constant)" } else { "" };
            out.push_str(&format!("{k:>3}  {v:+.4}{flag}\n"));
        }
        out.push_str(&format!("position     {:+.4}\n", self.group_position));
        out.push_str(&format!("orientation  {:+.4}\n", self.group_orientation));
        out.push_str(&format!("spt          {:+.4}\n", self.group_spt));
        out.push_str(&format!("mean r2      {:+.4}\n", self.mean_r2));
        out.push_str(&format!("std r2       {:.4}\n", self.std_r2));
        out.push_str(&format!("tube loss    {:.4}\n", self.tube_loss));
        out
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Per-dimension R² of the policy on a validation set, plus grouped means,
/// the cross-dimension spread, and the tube loss.
pub fn r2_report(policy: &VectorPolicy, val: &DemonstrationSet) -> Result<RegressionReport> {
    policy.validate()?;
    if val.len() == 0 {
        return Err(Error::Eval("validation set is empty".into()));
    }
    let targets = val.action_matrix();
    let mut preds = Vec::with_capacity(val.len());
    for demo in &val.demos {
        preds.push(policy.predict(&demo.state)?.to_array());
    }

    let mut r2 = Vec::with_capacity(ACTION_DIM);
    let mut constant_dims = Vec::new();
    for k in 0..ACTION_DIM {
        let col: Vec<f64> = targets.iter().map(|r| r[k]).collect();
        let m = mean(&col);
        let ss_tot: f64 = col.iter().map(|y| (y - m).powi(2)).sum();
        if ss_tot < 1e-12 {
            constant_dims.push(k);
            r2.push(0.0);
            continue;
        }
        let ss_res: f64 =
            col.iter().zip(&preds).map(|(y, p)| (y - p[k]).powi(2)).sum();
        r2.push(1.0 - ss_res / ss_tot);
    }

    let mut tube_loss = 0.0;
    for (demo, pred) in val.demos.iter().zip(&preds) {
        let t_std = policy.action_standardization.apply(&demo.action.to_array());
        let p_std = policy.action_standardization.apply(pred);
        for sp in &policy.scalars {
            let k = sp.output_index;
            tube_loss += scalar_loss(p_std[k], t_std[k], sp.epsilon);
        }
    }
    tube_loss /= val.len() as f64;

    let group = |r: std::ops::Range<usize>| mean(&r2[r]);
    Ok(RegressionReport {
        group_position: group(POSITION_DIMS),
        group_orientation: group(ORIENTATION_DIMS),
        group_spt: group(SPT_DIMS),
        mean_r2: mean(&r2),
        std_r2: population_std(&r2),
        r2,
        constant_dims,
        tube_loss,
    })
}

/// Configuration of the filtered-vs-unfiltered comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Config {
    pub n_demos: usize,
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    pub sampler: SceneSampler,
    pub render: RenderConfig,
    pub teacher: TeacherConfig,
    pub filter: FilterConfig,
    pub grid: HyperGrid,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            n_demos: 525,
            train_fraction: 0.75,
            seeds: (0..10).collect(),
            sampler: SceneSampler::default(),
            render: RenderConfig::default(),
            teacher: TeacherConfig::default().with_default_corruption(),
            // reduced search budgets keep the 10-seed run desk-scale while
            // spanning the same candidate decades as the library defaults
            // pin the novelty kernels at the median heuristic (demonstration
            // vectors standardize to a median squared pairwise distance near
            // 2*29): density-quantile regime, no degenerate near-linear fits
            filter: FilterConfig {
                gamma_candidates: Some(vec![1.0 / 58.0]),
                folds: 3,
                ..FilterConfig::default()
            },
            // standardized 12-dim states have a median squared pairwise
            // distance near 2*12, so a short grid around 1/24 covers the
            // useful decades without the full 15-point sweep
            grid: HyperGrid {
                c_values: vec![1.0, 10.0],
                gamma_values: Some(vec![0.012, 0.04, 0.12]),
                folds: 2,
                ..HyperGrid::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub seed: u64,
    pub val_hash: u64,
    pub filtered: RegressionReport,
    pub unfiltered: RegressionReport,
    pub removed: usize,
    pub corrupted_in_train: usize,
    /// Fraction of injected corruptions the filter removed; None when the
    /// training split had no corruptions.
    pub recall: Option<f64>,
    /// Fraction of removed demos that were actually corrupted; None when
    /// nothing was removed.
    pub precision: Option<f64>,
    /// Fraction of clean training demos removed.
    pub clean_removal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Result {
    pub config_demos: usize,
    pub rows: Vec<Table1Row>,
    pub mean_r2_filtered: f64,
    pub mean_r2_unfiltered: f64,
    pub std_r2_filtered_across_seeds: f64,
    pub std_r2_unfiltered_across_seeds: f64,
    pub gap: f64,
    pub mean_recall: Option<f64>,
    pub mean_precision: Option<f64>,
    pub mean_clean_removal: f64,
}

impl Table1Result {
    pub fn render_text(&self) -> String {
        let opt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.4}"),
            None => "n/a".into(),
        };
        let mut out = String::new();
        out.push_str(&format!("demonstrations per seed: {}\n", self.config_demos));
        out.push_str("seed  val_hash            r2_filt  r2_unfl  removed  recall  precision  clean_rm\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:>4}  {:016x}  {:+.4}  {:+.4}  {:>7}  {:>6}  {:>9}  {:.4}\n",
                r.seed,
                r.val_hash,
                r.filtered.mean_r2,
                r.unfiltered.mean_r2,
                r.removed,
                opt(r.recall),
                opt(r.precision),
                r.clean_removal,
            ));
        }
        out.push_str(&format!(
            "consistent only          {:.4} (std across seeds {:.4})\n",
            self.mean_r2_filtered, self.std_r2_filtered_across_seeds
        ));
        out.push_str(&format!(
            "including inconsistent   {:.4} (std across seeds {:.4})\n",
            self.mean_r2_unfiltered, self.std_r2_unfiltered_across_seeds
        ));
        out.push_str(&format!("gap                      {:+.4}\n", self.gap));
        out.push_str(&format!("mean recall              {}\n", opt(self.mean_recall)));
        out.push_str(&format!("mean precision           {}\n", opt(self.mean_precision)));
        out.push_str(&format!("mean clean removal       {:.4}\n", self.mean_clean_removal));
        out
    }
}

/// Runs the full comparison once per seed: generate a corrupted dataset,
/// split it, train the filtered (learn_intended_policy) policy and an unfiltered
/// ablation with the identical hyperparameter search, and score both on the
/// byte-identical validation split.
pub fn table1_experiment(cfg: &Table1Config) -> Result<Table1Result> {
    if cfg.seeds.is_empty() {
        return Err(Error::Eval("need at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let data = generate_demos(cfg.n_demos, &cfg.sampler, &cfg.render, &cfg.teacher, seed)?;
        let (train, val_raw) = data.split(cfg.train_fraction, seed)?;
        // score both arms against the intended policy: only validation
        // demos whose recorded action is an uncorrupted realization of it
        let val = DemonstrationSet::new(
            val_raw
                .demos
                .iter()
                .filter(|d| d.label.is_none() || d.label == Some(Label::Clean))
                .cloned()
                .collect(),
        );
        if val.len() == 0 {
            return Err(Error::Eval("validation split has no clean demonstrations".into()));
        }
        let val_bytes = serde_json::to_vec(&val)?;
        let val_hash = fnv1a(&val_bytes);

        let mut filter = cfg.filter.clone();
        filter.seed = seed;
        let mut grid = cfg.grid.clone();
        grid.seed = seed;

        let (policy_f, report) = learn_intended_policy(&train, &filter, &grid)?;
        let rec29 = standardize(&train.demo_matrix()?)?.1;
        let policy_u = train_policy_on(&train, &rec29, &grid, None)?;

        // the unfiltered arm must score the same bytes
        if fnv1a(&serde_json::to_vec(&val)?) != val_hash {
            return Err(Error::Eval("validation split changed between arms".into()));
        }
        let filtered = r2_report(&policy_f, &val)?;
        let unfiltered = r2_report(&policy_u, &val)?;

        let corrupted: std::collections::HashSet<u64> = train
            .demos
            .iter()
            .filter(|d| d.label.is_some() && d.label != Some(Label::Clean))
            .map(|d| d.id)
            .collect();
        let removed: std::collections::HashSet<u64> =
            report.removed_ids.iter().copied().collect();
        let hit = removed.intersection(&corrupted).count();
        let clean_total = train.len() - corrupted.len();
        let clean_removed = removed.len() - hit;
        rows.push(Table1Row {
            seed,
            val_hash,
            filtered,
            unfiltered,
            removed: removed.len(),
            corrupted_in_train: corrupted.len(),
            recall: (!corrupted.is_empty()).then(|| hit as f64 / corrupted.len() as f64),
            precision: (!removed.is_empty()).then(|| hit as f64 / removed.len() as f64),
            clean_removal: if clean_total > 0 {
                clean_removed as f64 / clean_total as f64
            } else {
                0.0
            },
        });
    }

    let filt: Vec<f64> = rows.iter().map(|r| r.filtered.mean_r2).collect();
    let unfl: Vec<f64> = rows.iter().map(|r| r.unfiltered.mean_r2).collect();
    let recalls: Vec<f64> = rows.iter().filter_map(|r| r.recall).collect();
    let precisions: Vec<f64> = rows.iter().filter_map(|r| r.precision).collect();
    let clean: Vec<f64> = rows.iter().map(|r| r.clean_removal).collect();
    Ok(Table1Result {
        config_demos: cfg.n_demos,
        mean_r2_filtered: mean(&filt),
        mean_r2_unfiltered: mean(&unfl),
        std_r2_filtered_across_seeds: population_std(&filt),
        std_r2_unfiltered_across_seeds: population_std(&unfl),
        gap: mean(&filt) - mean(&unfl),
        mean_recall: (!recalls.is_empty()).then(|| mean(&recalls)),
        mean_precision: (!precisions.is_empty()).then(|| mean(&precisions)),
        mean_clean_removal: mean(&clean),
        rows,
    })
}

/// What acts in the rollout: a learned policy (predicted action is
/// post-processed before execution) or the analytic teacher itself.
pub enum RolloutPolicy<'a> {
    Learned(&'a VectorPolicy),
    Teacher,
}

impl RolloutPolicy<'_> {
    fn act(&self, spec: &SceneSpec, state: &StateVector) -> Result<crate::model::ActionVector> {
        match self {
            RolloutPolicy::Learned(p) => {
                let raw = p.predict(state)?;
                postprocess_action(&raw, &GripperLimits::default())
            }
            RolloutPolicy::Teacher => intended_action(spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneOutcome {
    pub scene: usize,
    pub successes: usize,
    pub grasps: usize,
    pub failures: Vec<crate::synth::FailureReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessTable {
    pub per_scene: Vec<SceneOutcome>,
    pub total_successes: usize,
    pub total_grasps: usize,
    pub rate: f64,
}

impl SuccessTable {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("scene  successes\n");
        for s in &self.per_scene {
            out.push_str(&format!("{:>5}  {} / {}\n", s.scene, s.successes, s.grasps));
        }
        out.push_str(&format!(
            "overall  {} / {}  ({:.1}%)\n",
            self.total_successes,
            self.total_grasps,
            100.0 * self.rate
        ));
        out
    }
}

/// Samples scenes, renders each `grasps_per_scene` times with fresh sensor
/// noise, runs perception, acts, and scores with the grasp oracle.
pub fn success_experiment(
    policy: &RolloutPolicy,
    n_scenes: usize,
    grasps_per_scene: usize,
    sampler: &SceneSampler,
    render: &RenderConfig,
    tol: &SuccessTolerances,
    seed: u64,
) -> Result<SuccessTable> {
    if n_scenes == 0 || grasps_per_scene == 0 {
        return Err(Error::Eval("need at least one scene and one grasp".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_scene = Vec::with_capacity(n_scenes);
    let mut total = 0usize;
    for scene_idx in 0..n_scenes {
        let spec = sampler.sample(&mut rng);
        let mut successes = 0;
        let mut failures = Vec::new();
        for _ in 0..grasps_per_scene {
            let rendered = render_scene(&spec, render, rng.gen())?;
            let h = height_from_depth(&rendered.depth, &rendered.reference)?;
            let mask = segment(&h, render.threshold)?;
            let state = extract_state(&mask, &h)?;
            let action = policy.act(&spec, &state)?;
            let (ok, reason) = grasp_success(&spec, &action, tol)?;
            if ok {
                successes += 1;
            } else {
                failures.push(reason);
            }
        }
        total += successes;
        per_scene.push(SceneOutcome {
            scene: scene_idx,
            successes,
            grasps: grasps_per_scene,
            failures,
        });
    }
    let total_grasps = n_scenes * grasps_per_scene;
    Ok(SuccessTable {
        per_scene,
        total_successes: total,
        total_grasps,
        rate: total as f64 / total_grasps as f64,
    })
}
