//! Ground-truth scenes with descriptor-tagged landmarks.
//!
//! Landmarks carry random unit descriptors; frames observe the landmarks
//! inside the camera frustum and range, with optional depth noise,
//! descriptor noise, dropped points, and replaced (outlier) descriptors.

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspondence::{FeaturePointcloud, DEFAULT_DESCRIPTOR_DIM};
use crate::derive_seed;
use crate::geometry::{render_depth, CameraIntrinsics, DepthMap, RigidTransform};
use crate::synchronization::PoseGraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("scene generation failed: {0}")]
    GenerationFailure(String),
    #[error("frame {frame} out of range for a {n_frames}-frame scene")]
    FrameOutOfRange { frame: usize, n_frames: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    /// Sideways translation in front of a slab of landmarks.
    LateralPan,
    /// Circle around a landmark volume, looking inward.
    Orbit,
    /// Forward motion down a corridor lined with landmarks.
    Corridor,
}

impl std::str::FromStr for Motion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lateral_pan" | "lateral-pan" | "pan" => Ok(Motion::LateralPan),
            "orbit" => Ok(Motion::Orbit),
            "corridor" => Ok(Motion::Corridor),
            other => Err(format!("unknown motion model '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n_frames: usize,
    pub n_landmarks: usize,
    pub motion: Motion,
    pub seed: u64,
    pub descriptor_dim: usize,
    pub intrinsics: CameraIntrinsics,
    /// Landmarks farther than this from the camera are not observed, meters.
    pub max_range: f64,
    /// Smallest accepted visible-set IoU between adjacent frames.
    pub min_overlap: f64,
    /// Camera displacement per frame for the pan model, meters.
    pub pan_step: f64,
    /// Angular step per frame for the orbit model, degrees.
    pub orbit_step_deg: f64,
    /// Forward displacement per frame for the corridor model, meters.
    pub corridor_step: f64,
    /// Amplitude of the random yaw/pitch jitter added to every camera, degrees.
    pub jitter_deg: f64,
    pub repetition: Option<Repetition>,
}

/// Repeated structure: a fraction of landmarks gets a twin at a fixed
/// offset carrying the same descriptor. Frames that see only the twins of
/// each other's landmarks then produce consistent but wrong matches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub fraction: f64,
    pub offset: Vector3<f64>,
}

impl SceneConfig {
    pub fn new(n_frames: usize, n_landmarks: usize, motion: Motion, seed: u64) -> Self {
        Self {
            n_frames,
            n_landmarks,
            motion,
            seed,
            descriptor_dim: DEFAULT_DESCRIPTOR_DIM,
            intrinsics: default_intrinsics(),
            max_range: 8.0,
            min_overlap: 0.3,
            pan_step: 0.8,
            orbit_step_deg: 10.0,
            corridor_step: 0.3,
            jitter_deg: 2.0,
            repetition: None,
        }
    }
}

/// 640x480 camera with a 525 px focal length.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 525.0,
        fy: 525.0,
        cx: 319.5,
        cy: 239.5,
        width: 640,
        height: 480,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub landmarks: Vec<Vector3<f64>>,
    /// `descriptor_dim` values per landmark, unit norm.
    pub descriptors: Vec<f64>,
    /// Ground-truth world-to-camera poses.
    pub trajectory: Vec<RigidTransform>,
    pub intrinsics: CameraIntrinsics,
    /// Visible landmark indices per frame, ascending.
    pub visibility: Vec<Vec<usize>>,
    /// Row-major `N x N` IoU of visible landmark sets.
    pub overlap_schedule: Vec<f64>,
}

impl SyntheticScene {
    pub fn n_frames(&self) -> usize {
        self.trajectory.len()
    }

    pub fn overlap(&self, i: usize, j: usize) -> f64 {
        self.overlap_schedule[i * self.n_frames() + j]
    }

    pub fn descriptor(&self, landmark: usize) -> &[f64] {
        let d = self.config.descriptor_dim;
        &self.descriptors[landmark * d..(landmark + 1) * d]
    }
}

/// Per-observation corruption.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Per-component Gaussian noise added before renormalizing descriptors.
    pub descriptor_sigma: f64,
    /// Fraction of kept points whose descriptor is replaced by a fresh random one.
    pub outlier_fraction: f64,
    /// Radial depth noise, meters.
    pub depth_sigma: f64,
    /// Fraction of visible points removed.
    pub drop_fraction: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn none() -> Self {
        Self::default()
    }

    fn validate(&self) -> Result<(), SceneError> {
        let fractions_ok = (0.0..=1.0).contains(&self.outlier_fraction)
            && (0.0..=1.0).contains(&self.drop_fraction);
        let sigmas_ok = self.descriptor_sigma >= 0.0 && self.depth_sigma >= 0.0;
        if !(fractions_ok && sigmas_ok) {
            return Err(SceneError::GenerationFailure(format!(
                "invalid corruption spec {self:?}"
            )));
        }
        Ok(())
    }
}

fn random_unit(rng: &mut impl Rng, dim: usize, out: &mut Vec<f64>) {
    let start = out.len();
    let mut norm = 0.0;
    for _ in 0..dim {
        let v: f64 = rng.sample(StandardNormal);
        norm += v * v;
        out.push(v);
    }
    let norm = norm.sqrt();
    out[start..].iter_mut().for_each(|v| *v /= norm);
}

/// World-to-camera pose for a camera at `center` looking along `forward`,
/// x right and y down (world y points down).
fn look_along(center: Vector3<f64>, forward: Vector3<f64>) -> RigidTransform {
    let f = forward.normalize();
    let r = Vector3::y().cross(&f).normalize();
    let d = f.cross(&r);
    let world_to_cam_col = Matrix3::from_rows(&[r.transpose(), d.transpose(), f.transpose()]);
    RigidTransform::from_column_form(world_to_cam_col, -(world_to_cam_col * center))
        .expect("orthonormal basis")
}

fn jittered(forward: Vector3<f64>, rng: &mut impl Rng, amplitude_deg: f64) -> Vector3<f64> {
    if amplitude_deg <= 0.0 {
        return forward;
    }
    let a = amplitude_deg.to_radians();
    let yaw = Rotation3::from_axis_angle(&Vector3::y_axis(), rng.random_range(-a..a));
    let pitch = Rotation3::from_axis_angle(&Vector3::x_axis(), rng.random_range(-a..a));
    yaw * pitch * forward
}

fn is_visible(cfg: &SceneConfig, pose: &RigidTransform, landmark: &Vector3<f64>) -> bool {
    let pc = pose.transform_point(landmark);
    if pc.z <= 0.1 || pc.norm() > cfg.max_range {
        return false;
    }
    cfg.intrinsics
        .project(&pc)
        .is_some_and(|px| cfg.intrinsics.contains(&px))
}

pub fn generate_scene(
    n_frames: usize,
    n_landmarks: usize,
    motion: Motion,
    seed: u64,
) -> Result<SyntheticScene, SceneError> {
    generate_scene_with(&SceneConfig::new(n_frames, n_landmarks, motion, seed))
}

pub fn generate_scene_with(cfg: &SceneConfig) -> Result<SyntheticScene, SceneError> {
    if cfg.n_frames < 2 {
        return Err(SceneError::GenerationFailure(format!(
            "need at least 2 frames, got {}",
            cfg.n_frames
        )));
    }
    if cfg.n_landmarks < 50 {
        return Err(SceneError::GenerationFailure(format!(
            "need at least 50 landmarks, got {}",
            cfg.n_landmarks
        )));
    }
    if cfg.descriptor_dim == 0 {
        return Err(SceneError::GenerationFailure(
            "descriptor dimension must be positive".into(),
        ));
    }
    cfg.intrinsics
        .validate()
        .map_err(|e| SceneError::GenerationFailure(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_frames;
    let k = &cfg.intrinsics;
    let half_fov_x = ((k.width as f64) / 2.0 / k.fx).atan();
    let half_fov_y = ((k.height as f64) / 2.0 / k.fy).atan();

    let (trajectory, mut landmarks): (Vec<RigidTransform>, Vec<Vector3<f64>>) = match cfg.motion {
        Motion::LateralPan => {
            let (z_near, z_far) = (2.5, 3.5);
            let half_w = z_far * half_fov_x.tan() + 0.5;
            let half_h = z_far * half_fov_y.tan() + 0.3;
            let x_max = (n - 1) as f64 * cfg.pan_step;
            let traj = (0..n)
                .map(|i| {
                    let f = jittered(Vector3::z(), &mut rng, cfg.jitter_deg);
                    look_along(Vector3::new(i as f64 * cfg.pan_step, 0.0, 0.0), f)
                })
                .collect();
            let pts = (0..cfg.n_landmarks)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-half_w..x_max + half_w),
                        rng.random_range(-half_h..half_h),
                        rng.random_range(z_near..z_far),
                    )
                })
                .collect();
            (traj, pts)
        }
        Motion::Orbit => {
            let radius = 5.0;
            let traj = (0..n)
                .map(|i| {
                    let theta = (i as f64 * cfg.orbit_step_deg).to_radians();
                    let center = Vector3::new(radius * theta.sin(), -0.5, -radius * theta.cos());
                    let f = jittered(-center, &mut rng, cfg.jitter_deg);
                    look_along(center, f)
                })
                .collect();
            let pts = (0..cfg.n_landmarks)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-1.5..1.5),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.5..1.5),
                    )
                })
                .collect();
            (traj, pts)
        }
        Motion::Corridor => {
            let (half_width, half_height) = (1.5, 1.2);
            let length = (n - 1) as f64 * cfg.corridor_step + cfg.max_range;
            let traj = (0..n)
                .map(|i| {
                    let f = jittered(Vector3::z(), &mut rng, cfg.jitter_deg);
                    look_along(Vector3::new(0.0, 0.0, i as f64 * cfg.corridor_step), f)
                })
                .collect();
            let pts = (0..cfg.n_landmarks)
                .map(|_| {
                    let z = rng.random_range(-0.5..length);
                    let along_x = rng.random_range(-half_width..half_width);
                    let along_y = rng.random_range(-half_height..half_height);
                    let offset = rng.random_range(-0.05..0.05);
                    match rng.random_range(0..4) {
                        0 => Vector3::new(-half_width + offset, along_y, z),
                        1 => Vector3::new(half_width + offset, along_y, z),
                        2 => Vector3::new(along_x, -half_height + offset, z),
                        _ => Vector3::new(along_x, half_height + offset, z),
                    }
                })
                .collect();
            (traj, pts)
        }
    };

    let mut descriptors = Vec::with_capacity(cfg.n_landmarks * cfg.descriptor_dim);
    for _ in 0..cfg.n_landmarks {
        random_unit(&mut rng, cfg.descriptor_dim, &mut descriptors);
    }
    if let Some(rep) = cfg.repetition {
        if !(0.0..=1.0).contains(&rep.fraction) {
            return Err(SceneError::GenerationFailure(format!(
                "repetition fraction {} outside [0, 1]",
                rep.fraction
            )));
        }
        let count = (rep.fraction * cfg.n_landmarks as f64).round() as usize;
        let mut originals = index::sample(&mut rng, cfg.n_landmarks, count).into_vec();
        originals.sort_unstable();
        let d = cfg.descriptor_dim;
        for l in originals {
            landmarks.push(landmarks[l] + rep.offset);
            descriptors.extend_from_within(l * d..(l + 1) * d);
        }
    }

    let visibility: Vec<Vec<usize>> = trajectory
        .iter()
        .map(|pose| {
            (0..landmarks.len())
                .filter(|&l| is_visible(cfg, pose, &landmarks[l]))
                .collect()
        })
        .collect();
    let masks: Vec<Vec<bool>> = visibility
        .iter()
        .map(|v| {
            let mut m = vec![false; landmarks.len()];
            v.iter().for_each(|&l| m[l] = true);
            m
        })
        .collect();
    let mut overlap_schedule = vec![0.0; n * n];
    for i in 0..n {
        overlap_schedule[i * n + i] = 1.0;
        for j in i + 1..n {
            let inter = visibility[i].iter().filter(|&&l| masks[j][l]).count();
            let union = visibility[i].len() + visibility[j].len() - inter;
            let iou = if union == 0 {
                0.0
            } else {
                inter as f64 / union as f64
            };
            overlap_schedule[i * n + j] = iou;
            overlap_schedule[j * n + i] = iou;
        }
    }

    for (i, v) in visibility.iter().enumerate() {
        if v.len() < 3 {
            return Err(SceneError::GenerationFailure(format!(
                "frame {i} sees only {} landmarks",
                v.len()
            )));
        }
    }
    for i in 0..n - 1 {
        let o = overlap_schedule[i * n + i + 1];
        if o < cfg.min_overlap {
            return Err(SceneError::GenerationFailure(format!(
                "frames {i} and {} overlap {o:.3} < {}",
                i + 1,
                cfg.min_overlap
            )));
        }
    }

    Ok(SyntheticScene {
        config: *cfg,
        landmarks,
        descriptors,
        trajectory,
        intrinsics: cfg.intrinsics,
        visibility,
        overlap_schedule,
    })
}

/// Observes a frame; see [`observe_frame_labeled`].
pub fn observe_frame(
    scene: &SyntheticScene,
    frame: usize,
    corruption: &CorruptionSpec,
) -> Result<FeaturePointcloud, SceneError> {
    observe_frame_labeled(scene, frame, corruption).map(|(cloud, _)| cloud)
}

/// Observes a frame and also returns the landmark index behind every point.
///
/// Pixels are exact projections; depth noise moves points along their
/// viewing ray, so the pixel is unchanged.
pub fn observe_frame_labeled(
    scene: &SyntheticScene,
    frame: usize,
    corruption: &CorruptionSpec,
) -> Result<(FeaturePointcloud, Vec<usize>), SceneError> {
    if frame >= scene.n_frames() {
        return Err(SceneError::FrameOutOfRange {
            frame,
            n_frames: scene.n_frames(),
        });
    }
    corruption.validate()?;
    let dim = scene.config.descriptor_dim;
    let pose = &scene.trajectory[frame];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(corruption.seed, &[frame as u64]));

    let visible = &scene.visibility[frame];
    let n_drop = (corruption.drop_fraction * visible.len() as f64).round() as usize;
    let dropped = index::sample(&mut rng, visible.len(), n_drop.min(visible.len()));
    let mut keep = vec![true; visible.len()];
    dropped.iter().for_each(|k| keep[k] = false);
    let labels: Vec<usize> = visible
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&l, _)| l)
        .collect();

    let depth_noise = Normal::new(0.0, corruption.depth_sigma).expect("validated sigma");
    let desc_noise = Normal::new(0.0, corruption.descriptor_sigma).expect("validated sigma");
    let mut points = Vec::with_capacity(labels.len());
    let mut pixels = Vec::with_capacity(labels.len());
    let mut descriptors = Vec::with_capacity(labels.len() * dim);
    for &l in &labels {
        let pc = pose.transform_point(&scene.landmarks[l]);
        let px = scene
            .intrinsics
            .project(&pc)
            .expect("visible landmarks are in front");
        pixels.push(Vector2::new(px.x, px.y));
        if corruption.depth_sigma > 0.0 {
            let n = depth_noise.sample(&mut rng);
            points.push(pc + pc.normalize() * n);
        } else {
            points.push(pc);
        }
        let d = scene.descriptor(l);
        if corruption.descriptor_sigma > 0.0 {
            let start = descriptors.len();
            let mut norm = 0.0;
            for &v in d {
                let x = v + desc_noise.sample(&mut rng);
                norm += x * x;
                descriptors.push(x);
            }
            let norm = norm.sqrt();
            descriptors[start..].iter_mut().for_each(|v| *v /= norm);
        } else {
            descriptors.extend_from_slice(d);
        }
    }

    let n_outliers = (corruption.outlier_fraction * labels.len() as f64).round() as usize;
    let outliers = index::sample(&mut rng, labels.len(), n_outliers.min(labels.len()));
    let mut fresh = Vec::with_capacity(dim);
    for k in outliers.iter() {
        fresh.clear();
        random_unit(&mut rng, dim, &mut fresh);
        descriptors[k * dim..(k + 1) * dim].copy_from_slice(&fresh);
    }

    let cloud = FeaturePointcloud::new(points, pixels, descriptors, dim)
        .map_err(|e| SceneError::GenerationFailure(e.to_string()))?;
    Ok((cloud, labels))
}

/// Noiseless depth map of the landmarks seen from `frame`.
pub fn render_frame_depth(scene: &SyntheticScene, frame: usize) -> Result<DepthMap, SceneError> {
    let pose = scene
        .trajectory
        .get(frame)
        .ok_or(SceneError::FrameOutOfRange {
            frame,
            n_frames: scene.n_frames(),
        })?;
    let visible: Vec<Vector3<f64>> = scene.visibility[frame]
        .iter()
        .map(|&l| scene.landmarks[l])
        .collect();
    Ok(render_depth(&visible, pose, &scene.intrinsics))
}

/// Rotation drawn uniformly from SO(3) (normalized Gaussian quaternion),
/// translation uniform in `[-extent, extent]^3`.
pub fn random_rigid(rng: &mut impl Rng, extent: f64) -> RigidTransform {
    let q = nalgebra::Quaternion::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    let rotation = nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix();
    let translation = Vector3::from_fn(|_, _| rng.random_range(-extent..=extent));
    RigidTransform::new(*rotation.matrix(), translation).expect("unit quaternion")
}

/// Applies a random rotation of angle `N(0, rot_sigma)` about a uniform axis
/// and `N(0, trans_sigma)` per-axis translation noise after `t`.
pub fn perturb_transform(
    t: &RigidTransform,
    rot_sigma: f64,
    trans_sigma: f64,
    rng: &mut impl Rng,
) -> RigidTransform {
    let axis: Vector3<f64> = Vector3::from_fn(|_, _| rng.sample(StandardNormal));
    let angle: f64 = rng.sample::<f64, _>(StandardNormal) * rot_sigma;
    let noise_t: Vector3<f64> =
        Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * trans_sigma);
    let axis = if axis.norm() > 0.0 {
        axis.normalize()
    } else {
        Vector3::x()
    };
    t.compose(&RigidTransform::from_axis_angle(axis * angle, noise_t))
}

/// Fully connected graph of relative transforms `T_i^-1 T_j` with unit
/// confidence, each edge passed through `edit`.
pub fn relative_pose_graph(
    poses: &[RigidTransform],
    mut edit: impl FnMut(usize, usize, RigidTransform) -> RigidTransform,
) -> PoseGraph {
    let n = poses.len();
    let mut graph = PoseGraph::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let t = edit(i, j, poses[i].inverse().compose(&poses[j]));
            graph.add_edge(i, j, t, 1.0).expect("valid rigid edge");
        }
    }
    graph
}
