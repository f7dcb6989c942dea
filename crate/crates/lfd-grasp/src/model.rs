//! Shared data model: states, actions, demonstrations, datasets, and the
//! dataset-level utilities (validation, concatenation into demonstration
//! space, train/validation split, feature standardization).
//!
//! Feature layout is frozen: a demonstration concatenates into a 29-vector
//! with the state at indices 0..12 and the action at indices 12..29.
//!
//! State order:  `[x_a, y_a, z_a, h_a, l_a, w_a, cos_theta, sin_theta,
//!                 h_b, w_b, h_c, w_c]`
//! Action order: `[p(3), d1(3), d2(3), d3(3), f, pre, spt1, spt2, spt3]`

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 12;
pub const ACTION_DIM: usize = 17;
pub const DEMO_DIM: usize = STATE_DIM + ACTION_DIM;

/// Visual feature vector extracted from a height image (units: mm, except
/// the dimensionless major-axis direction components).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub x_a: f64,
    pub y_a: f64,
    pub z_a: f64,
    pub h_a: f64,
    pub l_a: f64,
    pub w_a: f64,
    pub cos_theta: f64,
    pub sin_theta: f64,
    pub h_b: f64,
    pub w_b: f64,
    pub h_c: f64,
    pub w_c: f64,
}

impl StateVector {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.x_a,
            self.y_a,
            self.z_a,
            self.h_a,
            self.l_a,
            self.w_a,
            self.cos_theta,
            self.sin_theta,
            self.h_b,
            self.w_b,
            self.h_c,
            self.w_c,
        ]
    }

    pub fn from_array(v: &[f64]) -> Result<Self> {
        if v.len() != STATE_DIM {
            return Err(Error::Validation(format!(
                "state vector needs {} entries, got {}",
                STATE_DIM,
                v.len()
            )));
        }
        Ok(Self {
            x_a: v[0],
            y_a: v[1],
            z_a: v[2],
            h_a: v[3],
            l_a: v[4],
            w_a: v[5],
            cos_theta: v[6],
            sin_theta: v[7],
            h_b: v[8],
            w_b: v[9],
            h_c: v[10],
            w_c: v[11],
        })
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite state field".into()));
        }
        let norm2 = self.cos_theta * self.cos_theta + self.sin_theta * self.sin_theta;
        if (norm2 - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "axis direction not unit length: cos^2+sin^2 = {norm2}"
            )));
        }
        if self.l_a < self.w_a || self.w_a < 0.0 {
            return Err(Error::Validation(format!(
                "axis lengths must satisfy l_a >= w_a >= 0, got l_a={} w_a={}",
                self.l_a, self.w_a
            )));
        }
        for (name, v) in [
            ("h_a", self.h_a),
            ("h_b", self.h_b),
            ("h_c", self.h_c),
            ("w_b", self.w_b),
            ("w_c", self.w_c),
        ] {
            if v < 0.0 {
                return Err(Error::Validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Grasp action: end-effector position, the redundant orientation triplet
/// (d1, d2, d3), finger figure, preshape, and the three per-finger
/// significant pressure thresholds.
///
/// `executable` distinguishes post-processed actions (orthonormal frame,
/// clamped scalars) from raw regressed or noisy recorded actions, whose
/// orientation invariants are not required to hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionVector {
    pub p: [f64; 3],
    pub d1: [f64; 3],
    pub d2: [f64; 3],
    pub d3: [f64; 3],
    pub f: f64,
    pub pre: f64,
    pub spt: [f64; 3],
    #[serde(default)]
    pub executable: bool,
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl ActionVector {
    pub fn to_array(&self) -> [f64; ACTION_DIM] {
        [
            self.p[0], self.p[1], self.p[2], self.d1[0], self.d1[1], self.d1[2], self.d2[0],
            self.d2[1], self.d2[2], self.d3[0], self.d3[1], self.d3[2], self.f, self.pre,
            self.spt[0], self.spt[1], self.spt[2],
        ]
    }

    pub fn from_array(v: &[f64], executable: bool) -> Result<Self> {
        if v.len() != ACTION_DIM {
            return Err(Error::Validation(format!(
                "action vector needs {} entries, got {}",
                ACTION_DIM,
                v.len()
            )));
        }
        Ok(Self {
            p: [v[0], v[1], v[2]],
            d1: [v[3], v[4], v[5]],
            d2: [v[6], v[7], v[8]],
            d3: [v[9], v[10], v[11]],
            f: v[12],
            pre: v[13],
            spt: [v[14], v[15], v[16]],
            executable,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite action field".into()));
        }
        if !self.executable {
            return Ok(());
        }
        let n1 = dot(&self.d1, &self.d1).sqrt();
        let n2 = dot(&self.d2, &self.d2).sqrt();
        if (n1 - 1.0).abs() > 1e-6 || (n2 - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "executable action frame not unit length: |d1|={n1} |d2|={n2}"
            )));
        }
        if dot(&self.d1, &self.d2).abs() > 1e-6 {
            return Err(Error::Validation("executable action d1 not orthogonal to d2".into()));
        }
        let d3 = cross(&self.d1, &self.d2);
        for k in 0..3 {
            if (d3[k] - self.d3[k]).abs() > 1e-6 {
                return Err(Error::Validation("executable action d3 != d1 x d2".into()));
            }
        }
        if self.spt.iter().any(|&s| s < 0.0) {
            return Err(Error::Validation("executable action spt must be >= 0".into()));
        }
        Ok(())
    }

    /// Whether the executable-frame invariants happen to hold, regardless of
    /// the flag value.
    pub fn frame_is_orthonormal(&self) -> bool {
        let mut probe = *self;
        probe.executable = true;
        probe.validate().is_ok()
    }
}

/// Ground-truth provenance tag carried by synthetic demonstrations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Clean,
    IntentionDeviation,
    ExecutionDeviation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub id: u64,
    pub state: StateVector,
    pub action: ActionVector,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<Label>,
}

impl Demonstration {
    pub fn validate(&self) -> Result<()> {
        self.state.validate()?;
        self.action.validate()
    }

    /// Concatenates state and action into the fixed 29-dimensional
    /// demonstration-space layout.
    pub fn concat(&self) -> Result<[f64; DEMO_DIM]> {
        self.validate()?;
        let mut out = [0.0; DEMO_DIM];
        out[..STATE_DIM].copy_from_slice(&self.state.to_array());
        out[STATE_DIM..].copy_from_slice(&self.action.to_array());
        Ok(out)
    }
}

/// Per-feature affine standardization record: `z = (x - mean) / scale`.
///
/// Constant features keep scale 1 and map to 0, so applying the record never
/// divides by zero and inverting always recovers the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardization {
    /// Fits per-feature mean and population standard deviation over rows.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Dataset(format!(
                "standardization needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dataset("ragged feature rows".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for j in 0..dim {
                let d = r[j] - mean[j];
                var[j] += d * d;
            }
        }
        let mut scale = vec![1.0; dim];
        let mut constant = vec![false; dim];
        for j in 0..dim {
            let sd = (var[j] / n).sqrt();
            if sd > 0.0 {
                scale[j] = sd;
            } else {
                constant[j] = true;
            }
        }
        Ok(Self { mean, scale, constant })
    }

    /// Robust fit: per-dimension median location and scaled-MAD spread
    /// (1.4826 * median absolute deviation, the normal-consistent estimator).
    /// Used where the data may contain the very outliers the transform
    /// serves to expose, so that they cannot inflate the scale and mask
    /// themselves. Falls back to the ordinary standard deviation when the
    /// MAD degenerates to zero on a non-constant dimension.
    pub fn fit_robust(rows: &[Vec<f64>]) -> Result<Self> {
        let plain = Self::fit(rows)?;
        let dim = plain.dim();
        let n = rows.len();
        let median = |v: &mut Vec<f64>| -> f64 {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if v.len() % 2 == 1 {
                v[v.len() / 2]
            } else {
                0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
            }
        };
        let mut mean = vec![0.0; dim];
        let mut scale = vec![1.0; dim];
        let mut constant = vec![false; dim];
        for j in 0..dim {
            let mut col: Vec<f64> = (0..n).map(|i| rows[i][j]).collect();
            let med = median(&mut col);
            let mut dev: Vec<f64> = col.iter().map(|x| (x - med).abs()).collect();
            let mad = median(&mut dev);
            mean[j] = med;
            if mad > 0.0 {
                scale[j] = 1.4826 * mad;
            } else if !plain.constant[j] {
                scale[j] = plain.scale[j];
            } else {
                constant[j] = true;
            }
        }
        Ok(Self { mean, scale, constant })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
            constant: vec![false; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim());
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.dim());
        z.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((z, m), s)| z * s + m)
            .collect()
    }

    /// Restriction of a 29-feature record to a contiguous index range
    /// (e.g. the state block or the action block).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            mean: self.mean[range.clone()].to_vec(),
            scale: self.scale[range.clone()].to_vec(),
            constant: self.constant[range].to_vec(),
        }
    }
}

/// Standardizes a feature matrix, returning the transformed rows and the
/// record needed to apply the same transform to unseen points.
pub fn standardize(rows: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Standardization)> {
    let record = Standardization::fit(rows)?;
    let out = rows.iter().map(|r| record.apply(r)).collect();
    Ok((out, record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationSet {
    pub demos: Vec<Demonstration>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub standardization: Option<Standardization>,
}

impl DemonstrationSet {
    pub fn new(demos: Vec<Demonstration>) -> Self {
        Self { demos, standardization: None }
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.demos.is_empty() {
            return Err(Error::Dataset("empty demonstration set".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for d in &self.demos {
            d.validate()?;
            if !seen.insert(d.id) {
                return Err(Error::Dataset(format!("duplicate demonstration id {}", d.id)));
            }
        }
        if let Some(rec) = &self.standardization {
            if rec.scale.iter().any(|&s| s <= 0.0) {
                return Err(Error::Dataset("standardization with non-positive scale".into()));
            }
        }
        Ok(())
    }

    /// Raw 29-vectors for every demonstration, in set order.
    pub fn demo_matrix(&self) -> Result<Vec<Vec<f64>>> {
        self.demos.iter().map(|d| d.concat().map(|a| a.to_vec())).collect()
    }

    /// Raw 12-dim state rows, in set order.
    pub fn state_matrix(&self) -> Vec<Vec<f64>> {
        self.demos.iter().map(|d| d.state.to_array().to_vec()).collect()
    }

    /// Raw 17-dim action rows, in set order.
    pub fn action_matrix(&self) -> Vec<Vec<f64>> {
        self.demos.iter().map(|d| d.action.to_array().to_vec()).collect()
    }

    /// Splits into disjoint train/validation sets by a seeded uniform random
    /// permutation. `|train| = round(train_fraction * n)`.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Dataset(format!(
                "train_fraction must be in (0, 1), got {train_fraction}"
            )));
        }
        if self.demos.len() < 2 {
            return Err(Error::Dataset("split needs at least 2 demonstrations".into()));
        }
        let mut idx: Vec<usize> = (0..self.demos.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        let n_train = (train_fraction * self.demos.len() as f64).round() as usize;
        let n_train = n_train.clamp(1, self.demos.len() - 1);
        let train = idx[..n_train].iter().map(|&i| self.demos[i].clone()).collect();
        let val = idx[n_train..].iter().map(|&i| self.demos[i].clone()).collect();
        Ok((Self::new(train), Self::new(val)))
    }

    /// Writes the line-delimited dataset format: one JSON record per
    /// demonstration with keys `id`, `state`, `action`, optional `label`.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        for d in &self.demos {
            let rec = DatasetRecord {
                id: d.id,
                state: d.state.to_array().to_vec(),
                action: d.action.to_array().to_vec(),
                executable: d.action.executable,
                label: d.label,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut demos = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DatasetRecord = serde_json::from_str(&line).map_err(|e| {
                Error::Dataset(format!("line {}: {e}", lineno + 1))
            })?;
            demos.push(Demonstration {
                id: rec.id,
                state: StateVector::from_array(&rec.state)?,
                action: ActionVector::from_array(&rec.action, rec.executable)?,
                label: rec.label,
            });
        }
        let set = Self::new(demos);
        set.validate()?;
        Ok(set)
    }
}

/// On-disk record for the line-delimited dataset file. Key names are frozen.
#[derive(Serialize, Deserialize)]
struct DatasetRecord {
    id: u64,
    state: Vec<f64>,
    action: Vec<f64>,
    #[serde(default)]
    executable: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    label: Option<Label>,
}
