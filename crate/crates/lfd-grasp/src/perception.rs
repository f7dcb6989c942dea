//! State extraction from height images (depth minus reference) plus the
//! tactile significant-pressure rule and the grip-stop criterion.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::StateVector;

/// Default segmentation threshold above the reference plane, in mm.
pub const DEFAULT_SEGMENT_THRESHOLD_MM: f64 = 10.0;

/// Fraction of the per-finger maximum a tactile reading must strictly
/// exceed to count as significant.
pub const SIGNIFICANT_FRACTION: f64 = 0.7;

/// Heights above the table plane on a regular grid. `values` is row-major;
/// pixel (row, col) maps to robot-frame (x, y) as
/// `(origin[0] + col * pitch, origin[1] + row * pitch)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightImage {
    pub rows: usize,
    pub cols: usize,
    /// mm per pixel.
    pub pitch: f64,
    /// Robot-frame offset of pixel (0, 0), mm.
    pub origin: [f64; 2],
    pub values: Vec<f64>,
}

impl HeightImage {
    pub fn new(rows: usize, cols: usize, pitch: f64, origin: [f64; 2], values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::Perception(format!(
                "grid of {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if !(pitch > 0.0) {
            return Err(Error::Perception(format!("pixel pitch must be > 0, got {pitch}")));
        }
        if values.iter().any(|v| !v.is_finite()) || origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::Perception("non-finite height or origin entry".into()));
        }
        Ok(Self { rows, cols, pitch, origin, values })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{} {} {} {} {}", self.rows, self.cols, self.pitch, self.origin[0], self.origin[1])?;
        for r in 0..self.rows {
            let row: Vec<String> =
                (0..self.cols).map(|c| format!("{}", self.get(r, c))).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Perception("empty height image file".into()))??;
        let head: Vec<f64> = header
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Perception(format!("bad header: {e}"))))
            .collect::<Result<_>>()?;
        if head.len() != 5 {
            return Err(Error::Perception("height image header needs 5 fields".into()));
        }
        let (rows, cols) = (head[0] as usize, head[1] as usize);
        let mut values = Vec::with_capacity(rows * cols);
        for line in lines {
            let line = line?;
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|e| Error::Perception(format!("bad height value: {e}")))?,
                );
            }
        }
        Self::new(rows, cols, head[2], [head[3], head[4]], values)
    }
}

/// Object mask with the threshold that produced it; shape matches its
/// source HeightImage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMask {
    pub rows: usize,
    pub cols: usize,
    pub threshold: f64,
    pub values: Vec<bool>,
}

impl BinaryMask {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[row * self.cols + col]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }

    /// Fraction of pixels on which two same-shape masks disagree.
    pub fn disagreement(&self, other: &BinaryMask) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Perception("mask shape mismatch".into()));
        }
        let diff = self.values.iter().zip(&other.values).filter(|(a, b)| a != b).count();
        Ok(diff as f64 / self.values.len() as f64)
    }
}

/// 3 fingers with 9 tactile sensors each, raw nonnegative units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TactileArray {
    pub fingers: [[f64; 9]; 3],
}

impl TactileArray {
    pub fn new(fingers: [[f64; 9]; 3]) -> Result<Self> {
        for f in &fingers {
            for &v in f {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Perception(format!(
                        "tactile readings must be finite and >= 0, got {v}"
                    )));
                }
            }
        }
        Ok(Self { fingers })
    }
}

/// Pointwise `reference - depth`, clipped at 0: readings below the table
/// plane carry no object information.
pub fn height_from_depth(depth: &HeightImage, reference: &HeightImage) -> Result<HeightImage> {
    if depth.rows != reference.rows || depth.cols != reference.cols {
        return Err(Error::Perception(format!(
            "depth {}x{} vs reference {}x{}",
            depth.rows, depth.cols, reference.rows, reference.cols
        )));
    }
    let values = reference
        .values
        .iter()
        .zip(&depth.values)
        .map(|(r, d)| (r - d).max(0.0))
        .collect();
    HeightImage::new(depth.rows, depth.cols, depth.pitch, depth.origin, values)
}

/// Thresholds the height image and keeps only the largest 4-connected
/// component (single-object assumption).
pub fn segment(h: &HeightImage, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0) {
        return Err(Error::Perception(format!("threshold must be > 0, got {threshold}")));
    }
    let raw: Vec<bool> = h.values.iter().map(|&v| v > threshold).collect();
    let mut label = vec![usize::MAX; raw.len()];
    let mut sizes = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    for start in 0..raw.len() {
        if !raw[start] || label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0usize;
        label[start] = id;
        queue.push_back(start);
        while let Some(px) = queue.pop_front() {
            size += 1;
            let (r, c) = (px / h.cols, px % h.cols);
            let mut push = |rr: usize, cc: usize| {
                let q = rr * h.cols + cc;
                if raw[q] && label[q] == usize::MAX {
                    label[q] = id;
                    queue.push_back(q);
                }
            };
            if r > 0 {
                push(r - 1, c);
            }
            if r + 1 < h.rows {
                push(r + 1, c);
            }
            if c > 0 {
                push(r, c - 1);
            }
            if c + 1 < h.cols {
                push(r, c + 1);
            }
        }
        sizes.push(size);
    }
    if sizes.is_empty() {
        return Err(Error::Perception(format!(
            "no object: nothing above the {threshold} mm threshold"
        )));
    }
    // ties resolve to the component first seen in row-major order
    let best = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap();
    let values = label.iter().map(|&l| l == best).collect();
    Ok(BinaryMask { rows: h.rows, cols: h.cols, threshold, values })
}

fn height_at_nearest(h: &HeightImage, pixels: &[(usize, usize)], x_px: f64, y_px: f64) -> f64 {
    let mut best = f64::INFINITY;
    let mut val = 0.0;
    for &(r, c) in pixels {
        let d = (c as f64 - x_px).powi(2) + (r as f64 - y_px).powi(2);
        if d < best {
            best = d;
            val = h.get(r, c);
        }
    }
    val
}

/// Twelve-feature state vector from a mask and its height image: centroid a,
/// principal-axis angle and extents from second-order moments, and heights /
/// widths at the two major-axis midpoints b (toward +major) and c (toward
/// -major). The angle is canonicalized to cos(theta) >= 0, breaking the
/// theta = 90 degree tie toward sin(theta) = 1.
pub fn extract_state(mask: &BinaryMask, h: &HeightImage) -> Result<StateVector> {
    if mask.rows != h.rows || mask.cols != h.cols {
        return Err(Error::Perception("mask and height image shapes differ".into()));
    }
    let mut pixels = Vec::new();
    for r in 0..mask.rows {
        for c in 0..mask.cols {
            if mask.get(r, c) {
                pixels.push((r, c));
            }
        }
    }
    if pixels.len() < 2 {
        return Err(Error::Perception(format!(
            "degenerate shape: {} mask pixel(s), principal axes undefined",
            pixels.len()
        )));
    }
    let n = pixels.len() as f64;
    let cx = pixels.iter().map(|&(_, c)| c as f64).sum::<f64>() / n;
    let cy = pixels.iter().map(|&(r, _)| r as f64).sum::<f64>() / n;
    let (mut mu20, mut mu02, mut mu11) = (0.0, 0.0, 0.0);
    for &(r, c) in &pixels {
        let dx = c as f64 - cx;
        let dy = r as f64 - cy;
        mu20 += dx * dx;
        mu02 += dy * dy;
        mu11 += dx * dy;
    }
    let mut theta = 0.5 * (2.0 * mu11).atan2(mu20 - mu02);
    let project = |theta: f64| {
        let (sin_t, cos_t) = theta.sin_cos();
        let (mut umin, mut umax, mut vmin, mut vmax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(r, c) in &pixels {
            let dx = c as f64 - cx;
            let dy = r as f64 - cy;
            let u = dx * cos_t + dy * sin_t;
            let v = -dx * sin_t + dy * cos_t;
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        (umin, umax, vmin, vmax)
    };
    let (mut umin, mut umax, mut vmin, mut vmax) = project(theta);
    if (vmax - vmin) > (umax - umin) {
        // eigenvalue tie / near-tie resolved against the extents: keep the
        // longer projected direction as the major axis
        theta += std::f64::consts::FRAC_PI_2;
        (umin, umax, vmin, vmax) = project(theta);
    }
    // canonicalize the undirected axis to cos >= 0, tie toward sin = +1
    let (mut sin_t, mut cos_t) = theta.sin_cos();
    let flip = cos_t < -1e-12 || (cos_t.abs() <= 1e-12 && sin_t < 0.0);
    if flip {
        cos_t = -cos_t;
        sin_t = -sin_t;
        (umin, umax) = (-umax, -umin);
    }
    if cos_t.abs() <= 1e-12 {
        cos_t = 0.0;
        sin_t = 1.0;
    }

    let l_a = (umax - umin + 1.0) * h.pitch;
    let w_a = (vmax - vmin + 1.0) * h.pitch;

    // strip extent along the minor axis through a major-axis coordinate u0
    let width_at = |u0: f64| {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(r, c) in &pixels {
            let dx = c as f64 - cx;
            let dy = r as f64 - cy;
            let u = dx * cos_t + dy * sin_t;
            if (u - u0).abs() <= 0.5 {
                let v = -dx * sin_t + dy * cos_t;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if lo.is_finite() {
            (hi - lo + 1.0) * h.pitch
        } else {
            0.0
        }
    };
    let u_b = umax / 2.0;
    let u_c = umin / 2.0;
    let b_px = (cx + u_b * cos_t, cy + u_b * sin_t);
    let c_px = (cx + u_c * cos_t, cy + u_c * sin_t);

    let z_a = pixels.iter().map(|&(r, c)| h.get(r, c)).sum::<f64>() / n;
    let state = StateVector {
        x_a: h.origin[0] + cx * h.pitch,
        y_a: h.origin[1] + cy * h.pitch,
        z_a,
        h_a: height_at_nearest(h, &pixels, cx, cy),
        l_a,
        w_a,
        cos_theta: cos_t,
        sin_theta: sin_t,
        h_b: height_at_nearest(h, &pixels, b_px.0, b_px.1),
        w_b: width_at(u_b),
        h_c: height_at_nearest(h, &pixels, c_px.0, c_px.1),
        w_c: width_at(u_c),
    };
    state.validate()?;
    Ok(state)
}

/// Mean of the readings strictly above 70% of the finger's maximum; 0 for
/// an all-zero finger.
pub fn significant_pressure(t: &[f64; 9]) -> f64 {
    let m = t.iter().cloned().fold(0.0f64, f64::max);
    if m <= 0.0 {
        return 0.0;
    }
    let cut = SIGNIFICANT_FRACTION * m;
    let over: Vec<f64> = t.iter().cloned().filter(|&v| v > cut).collect();
    over.iter().sum::<f64>() / over.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripOutcome {
    /// Step at which closing stopped, or None when the stream ran out
    /// before any finger reached its target.
    pub stop_step: Option<usize>,
    /// Per-finger significant pressures at the stop step (or at the final
    /// step when exhausted; zeros on an empty stream).
    pub achieved: [f64; 3],
}

/// Consumes the closing stream in order and stops at the first step where
/// ANY finger's significant pressure reaches its target.
pub fn grip_stop<I>(targets: [f64; 3], stream: I) -> Result<GripOutcome>
where
    I: IntoIterator<Item = TactileArray>,
{
    if targets.iter().any(|&t| !(t.is_finite() && t >= 0.0)) {
        return Err(Error::Perception(format!("targets must be finite and >= 0, got {targets:?}")));
    }
    let mut achieved = [0.0; 3];
    for (step, frame) in stream.into_iter().enumerate() {
        for (k, finger) in frame.fingers.iter().enumerate() {
            achieved[k] = significant_pressure(finger);
        }
        if achieved.iter().zip(&targets).any(|(a, t)| a >= t) {
            return Ok(GripOutcome { stop_step: Some(step), achieved });
        }
    }
    Ok(GripOutcome { stop_step: None, achieved })
}
