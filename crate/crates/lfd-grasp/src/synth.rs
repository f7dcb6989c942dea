//! Synthetic stand-in for the robot/teacher/produce rig: parametric scenes
//! with analytic ground truth, an analytic intended teacher policy, noisy
//! demonstration generation with injected intention/execution deviations,
//! the dataset augmentation, and a grasp-success oracle.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ActionVector, Demonstration, DemonstrationSet, Label, StateVector, ACTION_DIM,
};
use crate::perception::{
    extract_state, height_from_depth, segment, BinaryMask, HeightImage, TactileArray,
    DEFAULT_SEGMENT_THRESHOLD_MM,
};
use crate::policy::{postprocess_action, GripperLimits};

/// Mean of the height profile factor (1 - r^4)^(1/4) over the unit disk:
/// integral of 2r(1-r^4)^(1/4) over r in [0,1] = B(1/2, 5/4)/2 via t = r^2.
pub const MEAN_HEIGHT_FACTOR: f64 = 0.8740191847640399;

/// Fraction of the half-major length the grasp point is shifted from the
/// centroid toward the root (higher-compliance, sturdier) end.
pub const ROOT_SHIFT_FRACTION: f64 = 0.5;

/// Grasp height as a fraction of the local surface height.
pub const GRASP_HEIGHT_FRACTION: f64 = 0.5;

/// Fixed gripper scalars of the intended policy.
pub const INTENDED_FORCE: f64 = 2.0;
pub const INTENDED_PREGRASP: f64 = 1.0;

/// Base significant-pressure target (raw tactile units) and the per-finger
/// offsets (mm along the major axis) at which the compliance profile is
/// sampled.
pub const BASE_SPT: f64 = 60.0;
pub const FINGER_OFFSETS_MM: [f64; 3] = [-10.0, 0.0, 10.0];

/// Elliptical tapered mound with a compliance profile along its major axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Table-plane position of the footprint center, mm.
    pub center: [f64; 2],
    /// Major-axis direction, rad.
    pub yaw: f64,
    /// Half-lengths of the footprint ellipse, mm.
    pub half_major: f64,
    pub half_minor: f64,
    /// Peak height at the center, mm.
    pub peak: f64,
    /// Root-vs-leaf height taper along the major axis, dimensionless in
    /// (-1, 1); positive means the +major (root) end is taller.
    pub asym: f64,
    /// Tactile units per mm along the major axis; positive means the root
    /// end tolerates higher pressure than the fragile leaf end.
    pub compliance: f64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.center[0],
            self.center[1],
            self.yaw,
            self.half_major,
            self.half_minor,
            self.peak,
            self.asym,
            self.compliance,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::Synth("non-finite scene parameter".into()));
        }
        if self.half_major <= 0.0 || self.half_minor <= 0.0 {
            return Err(Error::Synth("half-lengths must be > 0".into()));
        }
        if self.peak <= 0.0 {
            return Err(Error::Synth("peak height must be > 0".into()));
        }
        if self.asym.abs() >= 1.0 {
            return Err(Error::Synth(format!(
                "asymmetry must stay in (-1, 1) to keep heights positive, got {}",
                self.asym
            )));
        }
        Ok(())
    }

    /// Major-axis unit direction after the same cos >= 0 canonicalization
    /// perception applies to an undirected axis; the root end sits at the
    /// +major side of this direction.
    pub fn canonical_axis(&self) -> [f64; 2] {
        let (mut s, mut c) = self.yaw.sin_cos();
        if c < -1e-12 || (c.abs() <= 1e-12 && s < 0.0) {
            s = -s;
            c = -c;
        }
        if c.abs() <= 1e-12 {
            return [0.0, 1.0];
        }
        [c, s]
    }

    /// Noiseless surface height at a table point, mm.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let axis = self.canonical_axis();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let u = dx * axis[0] + dy * axis[1];
        let v = -dx * axis[1] + dy * axis[0];
        let r2 = (u / self.half_major).powi(2) + (v / self.half_minor).powi(2);
        if r2 >= 1.0 {
            return 0.0;
        }
        self.peak * (1.0 + self.asym * u / self.half_major) * (1.0 - r2 * r2).powf(0.25)
    }

    /// Pressure the object tolerates at major-axis coordinate u (mm from
    /// the centroid, root side positive).
    pub fn tolerated_pressure(&self, u: f64) -> f64 {
        BASE_SPT + self.compliance * u
    }
}

/// Camera/grid parameters for rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub rows: usize,
    pub cols: usize,
    /// mm per pixel.
    pub pitch: f64,
    /// Std of the zero-mean Gaussian depth noise, mm.
    pub noise_sigma: f64,
    /// Distance from the camera to the table plane, mm.
    pub reference_mm: f64,
    /// Segmentation threshold used for the ground-truth mask, mm.
    pub threshold: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            rows: 160,
            cols: 160,
            pitch: 2.0,
            noise_sigma: 1.0,
            reference_mm: 800.0,
            threshold: DEFAULT_SEGMENT_THRESHOLD_MM,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    /// Noisy depth image (reference minus surface height plus noise).
    pub depth: HeightImage,
    /// Clean reference (empty-table) depth image.
    pub reference: HeightImage,
    /// Noiseless height field, for oracle comparisons.
    pub height_true: HeightImage,
    /// Ground-truth object mask (noiseless height above threshold).
    pub truth_mask: BinaryMask,
    /// Closed-form state features of the scene. Lengths include the same
    /// +1-pixel extent convention perception uses.
    pub truth_state: StateVector,
}

/// Renders a scene onto the grid. Noise is applied to the depth image only;
/// the reference, the true height field and the ground truth stay clean.
pub fn render_scene(spec: &SceneSpec, cfg: &RenderConfig, seed: u64) -> Result<RenderedScene> {
    spec.validate()?;
    if cfg.rows == 0 || cfg.cols == 0 || cfg.pitch <= 0.0 || cfg.noise_sigma < 0.0 {
        return Err(Error::Synth("invalid render grid".into()));
    }
    let reach = spec.half_major.max(spec.half_minor) + cfg.pitch;
    let (w, h) = (cfg.cols as f64 * cfg.pitch, cfg.rows as f64 * cfg.pitch);
    if spec.center[0] - reach < 0.0
        || spec.center[1] - reach < 0.0
        || spec.center[0] + reach > w
        || spec.center[1] + reach > h
    {
        return Err(Error::Synth(format!(
            "scene at ({}, {}) with reach {reach} mm leaves the {w}x{h} mm grid",
            spec.center[0], spec.center[1]
        )));
    }

    let n = cfg.rows * cfg.cols;
    let mut height = vec![0.0; n];
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            height[r * cfg.cols + c] =
                spec.height_at(c as f64 * cfg.pitch, r as f64 * cfg.pitch);
        }
    }
    let origin = [0.0, 0.0];
    let height_true = HeightImage::new(cfg.rows, cfg.cols, cfg.pitch, origin, height.clone())?;
    let reference =
        HeightImage::new(cfg.rows, cfg.cols, cfg.pitch, origin, vec![cfg.reference_mm; n])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Synth(e.to_string()))?;
    let depth_vals: Vec<f64> = height
        .iter()
        .map(|&hv| {
            let eps = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            cfg.reference_mm - hv + eps
        })
        .collect();
    let depth = HeightImage::new(cfg.rows, cfg.cols, cfg.pitch, origin, depth_vals)?;

    let mask_vals = height.iter().map(|&hv| hv > cfg.threshold).collect();
    let truth_mask =
        BinaryMask { rows: cfg.rows, cols: cfg.cols, threshold: cfg.threshold, values: mask_vals };

    let axis = spec.canonical_axis();
    let midpoint_factor = 0.9375_f64.powf(0.25); // (1 - (1/2)^4)^(1/4)
    let truth_state = StateVector {
        x_a: spec.center[0],
        y_a: spec.center[1],
        z_a: MEAN_HEIGHT_FACTOR * spec.peak,
        h_a: spec.peak,
        l_a: 2.0 * spec.half_major + cfg.pitch,
        w_a: 2.0 * spec.half_minor + cfg.pitch,
        cos_theta: axis[0],
        sin_theta: axis[1],
        h_b: spec.peak * (1.0 + spec.asym / 2.0) * midpoint_factor,
        w_b: 3.0_f64.sqrt() * spec.half_minor + cfg.pitch,
        h_c: spec.peak * (1.0 - spec.asym / 2.0) * midpoint_factor,
        w_c: 3.0_f64.sqrt() * spec.half_minor + cfg.pitch,
    };
    Ok(RenderedScene { depth, reference, height_true, truth_mask, truth_state })
}

/// Closed-form intended grasp: above the centroid shifted toward the root
/// end, approach straight down, fingers across the minor axis, pressure
/// targets following the local compliance.
pub fn intended_action(spec: &SceneSpec) -> Result<ActionVector> {
    spec.validate()?;
    let axis = spec.canonical_axis();
    let u_g = ROOT_SHIFT_FRACTION * spec.half_major;
    let p = [
        spec.center[0] + u_g * axis[0],
        spec.center[1] + u_g * axis[1],
        GRASP_HEIGHT_FRACTION
            * spec.height_at(spec.center[0] + u_g * axis[0], spec.center[1] + u_g * axis[1]),
    ];
    let d1 = [0.0, 0.0, -1.0];
    let d2 = [-axis[1], axis[0], 0.0];
    let d3 = crate::model::cross(&d1, &d2);
    let mut spt = [0.0; 3];
    for (k, off) in FINGER_OFFSETS_MM.iter().enumerate() {
        spt[k] = spec.tolerated_pressure(u_g + off);
    }
    if spt.iter().any(|&v| v < 0.0) {
        return Err(Error::Synth("compliance profile yields a negative pressure target".into()));
    }
    let a = ActionVector {
        p,
        d1,
        d2,
        d3,
        f: INTENDED_FORCE,
        pre: INTENDED_PREGRASP,
        spt,
        executable: true,
    };
    a.validate()?;
    Ok(a)
}

/// Teacher noise and deviation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    /// Per-action-dimension Gaussian noise std, physical units.
    pub action_noise: [f64; ACTION_DIM],
    /// Probability of an intention deviation (grasping the fragile leaf
    /// end); checked first, mutually exclusive with execution deviations.
    pub p_intent: f64,
    /// Probability of an execution deviation (gross yaw error or
    /// out-of-band pressure targets).
    pub p_exec: f64,
    /// Gripper yaw error of the execution deviation, rad.
    pub exec_yaw: f64,
    /// Pressure-target scale factor of the execution deviation.
    pub exec_spt_factor: f64,
    /// Probability that an execution deviation is the yaw error rather than
    /// the pressure error.
    pub exec_yaw_prob: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        let mut action_noise = [0.01; ACTION_DIM];
        action_noise[0] = 2.0; // position, mm
        action_noise[1] = 2.0;
        action_noise[2] = 2.0;
        action_noise[12] = 0.05; // force
        action_noise[14] = 0.5; // pressure targets, raw units
        action_noise[15] = 0.5;
        action_noise[16] = 0.5;
        Self {
            action_noise,
            p_intent: 0.0,
            p_exec: 0.0,
            exec_yaw: std::f64::consts::FRAC_PI_2,
            exec_spt_factor: 12.0,
            exec_yaw_prob: 0.5,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.action_noise.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::Synth("action noise must be finite and >= 0".into()));
        }
        for (name, p) in
            [("p_intent", self.p_intent), ("p_exec", self.p_exec), ("exec_yaw_prob", self.exec_yaw_prob)]
        {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Synth(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.p_intent + self.p_exec > 1.0 {
            return Err(Error::Synth("p_intent + p_exec must be <= 1".into()));
        }
        Ok(())
    }

    /// Corruption rates proportioned like the reference dataset
    /// (28 inconsistent out of 525 demonstrations).
    pub fn with_default_corruption(mut self) -> Self {
        self.p_intent = 0.015;
        self.p_exec = 28.0 / 525.0 - 0.015;
        self
    }
}

/// Draws which deviation branch fires; intent is checked first and the
/// branches are mutually exclusive.
pub(crate) fn draw_label(rng: &mut ChaCha8Rng, cfg: &TeacherConfig) -> Label {
    let u: f64 = rng.gen();
    if u < cfg.p_intent {
        Label::IntentionDeviation
    } else if u < cfg.p_intent + cfg.p_exec {
        Label::ExecutionDeviation
    } else {
        Label::Clean
    }
}

/// One noisy, possibly deviated demonstration of the scene. The state comes
/// from the perception pipeline on the rendered noisy depth image; the id
/// is left at 0 for the caller to assign.
pub fn demonstrate(
    spec: &SceneSpec,
    render: &RenderConfig,
    teacher: &TeacherConfig,
    seed: u64,
) -> Result<Demonstration> {
    teacher.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = render_scene(spec, render, rng.gen())?;
    let h = height_from_depth(&scene.depth, &scene.reference)?;
    let mask = segment(&h, render.threshold)?;
    let state = extract_state(&mask, &h)?;

    let intended = intended_action(spec)?;
    let mut arr = intended.to_array();
    let label = draw_label(&mut rng, teacher);
    match label {
        Label::Clean => {}
        Label::IntentionDeviation => {
            // smooth but wrong: grasp point reflected to the fragile leaf
            // end while the pressure targets stay root-appropriate
            let axis = spec.canonical_axis();
            let u_g = ROOT_SHIFT_FRACTION * spec.half_major;
            arr[0] = spec.center[0] - u_g * axis[0];
            arr[1] = spec.center[1] - u_g * axis[1];
        }
        Label::ExecutionDeviation => {
            if rng.gen_bool(teacher.exec_yaw_prob) {
                let phi = if rng.gen_bool(0.5) { teacher.exec_yaw } else { -teacher.exec_yaw };
                let (sin_p, cos_p) = phi.sin_cos();
                for k in 0..3 {
                    let d2k = intended.d2[k];
                    let d3k = intended.d3[k];
                    arr[6 + k] = cos_p * d2k + sin_p * d3k;
                    arr[9 + k] = -sin_p * d2k + cos_p * d3k;
                }
            } else {
                for k in 14..17 {
                    arr[k] *= teacher.exec_spt_factor;
                }
            }
        }
    }
    for (k, v) in arr.iter_mut().enumerate() {
        if teacher.action_noise[k] > 0.0 {
            let noise = Normal::new(0.0, teacher.action_noise[k])
                .map_err(|e| Error::Synth(e.to_string()))?;
            *v += noise.sample(&mut rng);
        }
    }
    let action = ActionVector::from_array(&arr, false)?;
    Ok(Demonstration { id: 0, state, action, label: Some(label) })
}

/// Ranges the batch generator samples scene parameters from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSampler {
    pub center_range: (f64, f64),
    pub yaw_range: (f64, f64),
    pub half_major_range: (f64, f64),
    pub half_minor_range: (f64, f64),
    pub peak_range: (f64, f64),
    pub asym_range: (f64, f64),
    /// Compliance gradient per unit asymmetry: taller, stiffer objects
    /// tolerate more pressure, which keeps the pressure targets a function
    /// of observable geometry.
    pub compliance_per_asym: f64,
}

impl Default for SceneSampler {
    fn default() -> Self {
        Self {
            center_range: (148.0, 172.0),
            yaw_range: (-0.6, 0.6),
            half_major_range: (65.0, 85.0),
            half_minor_range: (35.0, 55.0),
            peak_range: (50.0, 80.0),
            asym_range: (0.1, 0.3),
            compliance_per_asym: 2.0,
        }
    }
}

impl SceneSampler {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> SceneSpec {
        let range = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
            if hi > lo {
                rng.gen_range(lo..hi)
            } else {
                lo
            }
        };
        let asym = range(rng, self.asym_range);
        SceneSpec {
            center: [range(rng, self.center_range), range(rng, self.center_range)],
            yaw: range(rng, self.yaw_range),
            half_major: range(rng, self.half_major_range),
            half_minor: range(rng, self.half_minor_range),
            peak: range(rng, self.peak_range),
            asym,
            compliance: self.compliance_per_asym * asym,
        }
    }
}

/// Batch generation: n scenes, one demonstration each, ids 0..n.
pub fn generate_demos(
    n: usize,
    sampler: &SceneSampler,
    render: &RenderConfig,
    teacher: &TeacherConfig,
    seed: u64,
) -> Result<DemonstrationSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut demos = Vec::with_capacity(n);
    for i in 0..n {
        let spec = sampler.sample(&mut rng);
        let demo_seed: u64 = rng.gen();
        let mut demo = demonstrate(&spec, render, teacher, demo_seed)?;
        demo.id = i as u64;
        demos.push(demo);
    }
    Ok(DemonstrationSet::new(demos))
}

pub(crate) fn flip_action(a: &ActionVector) -> ActionVector {
    ActionVector {
        d2: [-a.d2[0], -a.d2[1], -a.d2[2]],
        d3: [-a.d3[0], -a.d3[1], -a.d3[2]],
        ..*a
    }
}

/// Augmentation: each copy applies one rigid translation (sigma = 25 mm per
/// axis) to the state centroid AND the action position, and independently
/// with probability 0.5 the 180-degree gripper flip about the approach
/// axis. Originals are retained; labels are inherited.
pub fn augment(set: &DemonstrationSet, copies: usize, seed: u64) -> Result<DemonstrationSet> {
    set.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = Normal::new(0.0, 25.0).map_err(|e| Error::Synth(e.to_string()))?;
    let mut out = set.demos.clone();
    let mut next_id = set.demos.iter().map(|d| d.id).max().map_or(0, |m| m + 1);
    for demo in &set.demos {
        for _ in 0..copies {
            let delta = [
                offset.sample(&mut rng),
                offset.sample(&mut rng),
                offset.sample(&mut rng),
            ];
            let mut state = demo.state;
            state.x_a += delta[0];
            state.y_a += delta[1];
            state.z_a += delta[2];
            let mut action = demo.action;
            for k in 0..3 {
                action.p[k] += delta[k];
            }
            if rng.gen_bool(0.5) {
                action = flip_action(&action);
            }
            out.push(Demonstration { id: next_id, state, action, label: demo.label });
            next_id += 1;
        }
    }
    Ok(DemonstrationSet::new(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    None,
    Position,
    Orientation,
    PressureLow,
    PressureHigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessTolerances {
    /// Horizontal distance from the intended grasp point, mm.
    pub position_mm: f64,
    /// Angle between the finger axis and the intended one, modulo the
    /// 180-degree flip symmetry, degrees.
    pub orientation_deg: f64,
    /// Relative half-width of the acceptable pressure band.
    pub pressure_band: f64,
}

impl Default for SuccessTolerances {
    fn default() -> Self {
        Self { position_mm: 25.0, orientation_deg: 20.0, pressure_band: 0.4 }
    }
}

/// Judges an executable action against the scene's intended grasp. Checks
/// run in a fixed order (position, orientation, pressure per finger) and
/// the first violation names the failure reason. The position check is
/// horizontal: a top grasp's height is absorbed by the compliant closing.
pub fn grasp_success(
    spec: &SceneSpec,
    action: &ActionVector,
    tol: &SuccessTolerances,
) -> Result<(bool, FailureReason)> {
    if !action.executable {
        return Err(Error::Synth("grasp_success needs a post-processed executable action".into()));
    }
    action.validate()?;
    let intended = intended_action(spec)?;
    let dx = action.p[0] - intended.p[0];
    let dy = action.p[1] - intended.p[1];
    if (dx * dx + dy * dy).sqrt() > tol.position_mm {
        return Ok((false, FailureReason::Position));
    }
    let dot: f64 = action.d2.iter().zip(&intended.d2).map(|(a, b)| a * b).sum();
    if dot.abs() < tol.orientation_deg.to_radians().cos() {
        return Ok((false, FailureReason::Orientation));
    }
    for k in 0..3 {
        let want = intended.spt[k];
        if action.spt[k] < (1.0 - tol.pressure_band) * want {
            return Ok((false, FailureReason::PressureLow));
        }
        if action.spt[k] > (1.0 + tol.pressure_band) * want {
            return Ok((false, FailureReason::PressureHigh));
        }
    }
    Ok((true, FailureReason::None))
}

/// Scripted closing trace: at step i every sensor of finger k reads
/// rate_k * i, so for a positive target t the stop step is ceil(t / rate).
pub fn closing_trace(rates: [f64; 3], steps: usize) -> Result<Vec<TactileArray>> {
    (0..steps)
        .map(|i| {
            let mut fingers = [[0.0; 9]; 3];
            for (k, f) in fingers.iter_mut().enumerate() {
                *f = [rates[k] * i as f64; 9];
            }
            TactileArray::new(fingers)
        })
        .collect()
}

/// Checks that an action survives post-processing unchanged (up to float
/// tolerance); used to keep the intended policy closed under the gripper
/// constraints.
pub fn is_postprocess_fixed_point(a: &ActionVector) -> Result<bool> {
    let out = postprocess_action(a, &GripperLimits::default())?;
    Ok(a.to_array()
        .iter()
        .zip(out.to_array())
        .all(|(x, y)| (x - y).abs() < 1e-9))
}
