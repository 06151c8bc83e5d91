//! Two-stage multiview registration.
//!
//! Stage 1 matches pairs by descriptor, aligns them, and synchronizes the
//! pairwise transforms. Stage 2 re-matches every pair with the
//! geometry-aware distance under the stage-1 poses, re-aligns, and
//! synchronizes again. The windowed variant bootstraps stage 1 from the
//! adjacent chain and restricts stage 2 to pairs closer than the window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{wp_ransac, AlignmentResult, RansacConfig};
use crate::correspondence::{
    match_gart, match_ratio_test, CorrespondenceSet, FeaturePointcloud, DEFAULT_GART_LAMBDA,
    DEFAULT_TOP_K,
};
use crate::derive_seed;
use crate::geometry::RigidTransform;
use crate::synchronization::{
    pairwise_confidence, rescale_confidence, synchronize_naive, synchronize_power, PoseGraph,
    SyncError, SyncResult, DEFAULT_GAMMA,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("adjacent pair ({i}, {j}) failed in stage {stage}: {reason}")]
    AdjacentPairFailure {
        i: usize,
        j: usize,
        stage: u8,
        reason: String,
    },
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error("invalid pipeline input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneInput {
    pub frames: Vec<FeaturePointcloud>,
    /// Source-sequence frames between consecutive inputs; informational.
    pub adjacency_stride: usize,
}

impl SceneInput {
    pub fn new(frames: Vec<FeaturePointcloud>) -> Self {
        Self {
            frames,
            adjacency_stride: 20,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    FullPairwise,
    Windowed,
}

impl std::str::FromStr for PipelineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" | "full_pairwise" | "full-pairwise" => Ok(PipelineMode::FullPairwise),
            "windowed" => Ok(PipelineMode::Windowed),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    /// Stage 2 in windowed mode only evaluates pairs with `j - i < window`.
    pub window: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub k_keep: usize,
    pub ransac: RansacConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: PipelineMode::FullPairwise,
            window: 10,
            gamma: DEFAULT_GAMMA,
            lambda: DEFAULT_GART_LAMBDA,
            k_keep: DEFAULT_TOP_K,
            ransac: RansacConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.mode == PipelineMode::Windowed && self.window < 2 {
            return Err(PipelineError::InvalidInput(format!(
                "window must be at least 2, got {}",
                self.window
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(PipelineError::InvalidInput(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(PipelineError::InvalidInput(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.k_keep == 0 {
            return Err(PipelineError::InvalidInput(
                "k_keep must be positive".into(),
            ));
        }
        self.ransac
            .validate()
            .map_err(|e| PipelineError::InvalidInput(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostic {
    pub stage: u8,
    pub i: usize,
    pub j: usize,
    pub correspondence_count: usize,
    /// Mean match weight before thresholding.
    pub raw_confidence: f64,
    /// Confidence used as the edge weight; 0 for failed pairs.
    pub confidence: f64,
    pub inlier_count: usize,
    /// Weighted residual under the stage's synchronized poses, meters.
    pub registration_loss: f64,
    /// Why matching or alignment failed, if it did.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRegistration {
    /// Final (stage 2) poses.
    pub poses: SyncResult,
    /// Stage 1 poses used to seed the geometry-aware matching.
    pub initial_poses: SyncResult,
    pub pair_diagnostics: Vec<PairDiagnostic>,
    pub refined: bool,
    /// Matching plus alignment runs across both stages.
    pub pair_evaluations: usize,
}

impl SceneRegistration {
    pub fn stage_diagnostics(&self, stage: u8) -> impl Iterator<Item = &PairDiagnostic> {
        self.pair_diagnostics
            .iter()
            .filter(move |d| d.stage == stage)
    }
}

/// `sum w |x_q T_j^-1 - x_p T_i^-1|`: weighted distance between matched
/// points after moving both into the world frame. References outside
/// either cloud are skipped.
pub fn registration_loss(
    corr: &CorrespondenceSet,
    src: &FeaturePointcloud,
    dst: &FeaturePointcloud,
    t_i: &RigidTransform,
    t_j: &RigidTransform,
) -> f64 {
    let (inv_i, inv_j) = (t_i.inverse(), t_j.inverse());
    corr.matches
        .iter()
        .filter_map(|m| {
            let p = src.points().get(m.source_index)?;
            let q = dst.points().get(m.target_index)?;
            Some(m.weight * (inv_j.transform_point(q) - inv_i.transform_point(p)).norm())
        })
        .sum()
}

struct PairOutcome {
    i: usize,
    j: usize,
    corr: CorrespondenceSet,
    raw_confidence: f64,
    confidence: f64,
    alignment: Result<AlignmentResult, String>,
}

fn evaluate_pair(
    frames: &[FeaturePointcloud],
    (i, j): (usize, usize),
    stage: u8,
    stage1_poses: Option<&[RigidTransform]>,
    cfg: &PipelineConfig,
) -> PairOutcome {
    let matched = match stage1_poses {
        None => match_ratio_test(&frames[i], &frames[j], cfg.k_keep),
        Some(p) => match_gart(&frames[i], &frames[j], &p[i], &p[j], cfg.lambda, cfg.k_keep),
    };
    let corr = match matched {
        Ok(c) => c.with_frame_pair(i, j),
        Err(e) => {
            return PairOutcome {
                i,
                j,
                corr: CorrespondenceSet::new((i, j), Vec::new()),
                raw_confidence: 0.0,
                confidence: 0.0,
                alignment: Err(e.to_string()),
            }
        }
    };
    let raw_confidence = pairwise_confidence(&corr);
    let confidence = rescale_confidence(raw_confidence, j == i + 1, cfg.gamma);
    let ransac = RansacConfig {
        seed: derive_seed(cfg.seed, &[stage as u64, i as u64, j as u64]),
        ..cfg.ransac
    };
    let alignment = wp_ransac(&corr, &frames[i], &frames[j], &ransac).map_err(|e| e.to_string());
    PairOutcome {
        i,
        j,
        corr,
        raw_confidence,
        confidence,
        alignment,
    }
}

/// Evaluates `pairs` in parallel; the output order follows `pairs`.
fn evaluate_pairs(
    frames: &[FeaturePointcloud],
    pairs: &[(usize, usize)],
    stage: u8,
    stage1_poses: Option<&[RigidTransform]>,
    cfg: &PipelineConfig,
) -> Vec<PairOutcome> {
    pairs
        .par_iter()
        .map(|&pair| evaluate_pair(frames, pair, stage, stage1_poses, cfg))
        .collect()
}

/// Pose graph over the successful pairs. Failed non-adjacent pairs are left
/// out (confidence 0); a failed adjacent pair aborts.
fn build_graph(n: usize, outcomes: &[PairOutcome], stage: u8) -> Result<PoseGraph, PipelineError> {
    let mut graph = PoseGraph::new(n);
    for o in outcomes {
        match &o.alignment {
            Ok(a) => graph.add_edge(o.i, o.j, a.transform, o.confidence)?,
            Err(reason) if o.j == o.i + 1 => {
                return Err(PipelineError::AdjacentPairFailure {
                    i: o.i,
                    j: o.j,
                    stage,
                    reason: reason.clone(),
                })
            }
            Err(_) => {}
        }
    }
    Ok(graph)
}

fn diagnostics(
    frames: &[FeaturePointcloud],
    outcomes: &[PairOutcome],
    stage: u8,
    poses: &[RigidTransform],
) -> Vec<PairDiagnostic> {
    outcomes
        .iter()
        .map(|o| {
            let (inlier_count, confidence, failure) = match &o.alignment {
                Ok(a) => (a.inlier_count, o.confidence, None),
                Err(reason) => (0, 0.0, Some(reason.clone())),
            };
            PairDiagnostic {
                stage,
                i: o.i,
                j: o.j,
                correspondence_count: o.corr.len(),
                raw_confidence: o.raw_confidence,
                confidence,
                inlier_count,
                registration_loss: registration_loss(
                    &o.corr,
                    &frames[o.i],
                    &frames[o.j],
                    &poses[o.i],
                    &poses[o.j],
                ),
                failure,
            }
        })
        .collect()
}

fn check_input(input: &SceneInput, cfg: &PipelineConfig) -> Result<(), PipelineError> {
    cfg.validate()?;
    if input.len() < 2 {
        return Err(PipelineError::InvalidInput(format!(
            "need at least 2 frames, got {}",
            input.len()
        )));
    }
    Ok(())
}

fn all_pairs(n: usize, max_gap: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n.min(i + max_gap)).map(move |j| (i, j)))
        .collect()
}

fn refine(
    input: &SceneInput,
    cfg: &PipelineConfig,
    initial: SyncResult,
    mut pair_diagnostics: Vec<PairDiagnostic>,
    stage1_evaluations: usize,
    max_gap: usize,
) -> Result<SceneRegistration, PipelineError> {
    let n = input.len();
    let pairs = all_pairs(n, max_gap);
    let outcomes = evaluate_pairs(
        &input.frames,
        &pairs,
        2,
        Some(&initial.world_to_camera),
        cfg,
    );
    let graph = build_graph(n, &outcomes, 2)?;
    let poses = synchronize_power(&graph)?;
    pair_diagnostics.extend(diagnostics(
        &input.frames,
        &outcomes,
        2,
        &poses.world_to_camera,
    ));
    Ok(SceneRegistration {
        poses,
        initial_poses: initial,
        pair_diagnostics,
        refined: true,
        pair_evaluations: stage1_evaluations + pairs.len(),
    })
}

/// Registers all `N (N - 1) / 2` pairs in both stages.
pub fn register_scene(
    input: &SceneInput,
    cfg: &PipelineConfig,
) -> Result<SceneRegistration, PipelineError> {
    check_input(input, cfg)?;
    let n = input.len();
    let pairs = all_pairs(n, n);
    let outcomes = evaluate_pairs(&input.frames, &pairs, 1, None, cfg);
    let graph = build_graph(n, &outcomes, 1)?;
    let initial = synchronize_power(&graph)?;
    let diags = diagnostics(&input.frames, &outcomes, 1, &initial.world_to_camera);
    refine(input, cfg, initial, diags, pairs.len(), n)
}

/// Chains the `N - 1` adjacent pairs for stage 1, then refines pairs with
/// `j - i < window`. Pair evaluations total at most `N * window`.
pub fn register_sequence_windowed(
    input: &SceneInput,
    cfg: &PipelineConfig,
) -> Result<SceneRegistration, PipelineError> {
    check_input(input, cfg)?;
    if cfg.window < 2 {
        return Err(PipelineError::InvalidInput(format!(
            "window must be at least 2, got {}",
            cfg.window
        )));
    }
    let n = input.len();
    let pairs = all_pairs(n, 2);
    let outcomes = evaluate_pairs(&input.frames, &pairs, 1, None, cfg);
    let graph = build_graph(n, &outcomes, 1)?;
    let initial = synchronize_naive(&graph)?;
    let diags = diagnostics(&input.frames, &outcomes, 1, &initial.world_to_camera);
    refine(input, cfg, initial, diags, pairs.len(), cfg.window)
}

/// Dispatches on `cfg.mode`.
pub fn register(
    input: &SceneInput,
    cfg: &PipelineConfig,
) -> Result<SceneRegistration, PipelineError> {
    match cfg.mode {
        PipelineMode::FullPairwise => register_scene(input, cfg),
        PipelineMode::Windowed => register_sequence_windowed(input, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::Correspondence;
    use crate::metrics::pose_errors;
    use crate::synthetic::{
        generate_scene, observe_frame, CorruptionSpec, Motion, SceneConfig, SyntheticScene,
    };
    use nalgebra::{Vector2, Vector3};

    fn observe_all(scene: &SyntheticScene, c: &CorruptionSpec) -> SceneInput {
        SceneInput::new(
            (0..scene.n_frames())
                .map(|f| observe_frame(scene, f, c).unwrap())
                .collect(),
        )
    }

    fn max_errors(est: &[RigidTransform], gt: &[RigidTransform]) -> (f64, f64) {
        pose_errors(est, gt)
            .unwrap()
            .iter()
            .fold((0.0f64, 0.0f64), |(r, t), e| (r.max(e.0), t.max(e.1)))
    }

    fn tiny_cloud(points: Vec<Vector3<f64>>) -> FeaturePointcloud {
        let n = points.len();
        let mut desc = vec![0.0; n * n];
        (0..n).for_each(|k| desc[k * n + k] = 1.0);
        FeaturePointcloud::new(points, vec![Vector2::zeros(); n], desc, n).unwrap()
    }

    #[test]
    fn two_noiseless_frames_are_exact() {
        let scene = generate_scene(2, 300, Motion::Orbit, 1).unwrap();
        let input = observe_all(&scene, &CorruptionSpec::none());
        let reg = register_scene(&input, &PipelineConfig::default()).unwrap();
        let (r, t) = max_errors(&reg.poses.world_to_camera, &scene.trajectory);
        assert!(r.to_radians() < 1e-6 && t < 1e-6, "{r} {t}");
        assert!(reg.refined);
        assert_eq!(reg.pair_evaluations, 2);
        assert_eq!(reg.pair_diagnostics.len(), 2);
    }

    #[test]
    fn windowed_with_two_frames_matches_full() {
        let scene = generate_scene(2, 300, Motion::Orbit, 2).unwrap();
        let c = CorruptionSpec {
            descriptor_sigma: 0.05,
            depth_sigma: 0.005,
            seed: 3,
            ..Default::default()
        };
        let input = observe_all(&scene, &c);
        let full = register_scene(&input, &PipelineConfig::default()).unwrap();
        let cfg = PipelineConfig {
            mode: PipelineMode::Windowed,
            window: 2,
            ..Default::default()
        };
        let win = register(&input, &cfg).unwrap();
        let (r, t) = max_errors(&full.poses.world_to_camera, &win.poses.world_to_camera);
        assert!(r < 1e-6 && t < 1e-9);
    }

    #[test]
    fn moderate_corruption_six_frames() {
        let scene = generate_scene(6, 600, Motion::Orbit, 4).unwrap();
        let c = CorruptionSpec {
            descriptor_sigma: 0.05,
            outlier_fraction: 0.2,
            depth_sigma: 0.005,
            drop_fraction: 0.1,
            seed: 5,
        };
        let input = observe_all(&scene, &c);
        let reg = register_scene(&input, &PipelineConfig::default()).unwrap();
        let errs = pose_errors(&reg.poses.world_to_camera, &scene.trajectory).unwrap();
        let mean_r = errs.iter().map(|e| e.0).sum::<f64>() / errs.len() as f64;
        let mean_t = errs.iter().map(|e| e.1).sum::<f64>() / errs.len() as f64;
        assert!(mean_r < 2.0 && mean_t < 0.05, "{mean_r} {mean_t}");
        assert_eq!(reg.stage_diagnostics(1).count(), 15);
        assert_eq!(reg.stage_diagnostics(2).count(), 15);
        assert!(reg
            .pair_diagnostics
            .iter()
            .all(|d| d.registration_loss >= 0.0));
    }

    #[test]
    fn deterministic_under_seed() {
        let scene = generate_scene(4, 400, Motion::Orbit, 6).unwrap();
        let c = CorruptionSpec {
            descriptor_sigma: 0.1,
            outlier_fraction: 0.3,
            depth_sigma: 0.01,
            seed: 1,
            ..Default::default()
        };
        let input = observe_all(&scene, &c);
        let cfg = PipelineConfig {
            seed: 11,
            ..Default::default()
        };
        assert_eq!(
            register_scene(&input, &cfg).unwrap(),
            register_scene(&input, &cfg).unwrap()
        );
    }

    /// Pairs with no shared landmarks must fall to zero confidence while
    /// the adjacency chain keeps the solution connected.
    #[test]
    fn non_overlapping_pairs_are_zeroed() {
        let mut cfg = SceneConfig::new(6, 3000, Motion::LateralPan, 7);
        cfg.pan_step = 1.2;
        let scene = crate::synthetic::generate_scene_with(&cfg).unwrap();
        let input = observe_all(&scene, &CorruptionSpec::none());
        let reg = register_scene(&input, &PipelineConfig::default()).unwrap();
        let mut disjoint = 0;
        for d in reg.pair_diagnostics.iter() {
            if scene.overlap(d.i, d.j) == 0.0 {
                disjoint += 1;
                assert_eq!(d.confidence, 0.0, "pair ({}, {})", d.i, d.j);
            }
        }
        assert!(disjoint >= 6);
        let (r, t) = max_errors(&reg.poses.world_to_camera, &scene.trajectory);
        assert!(r < 0.1 && t < 0.01, "{r} {t}");
    }

    #[test]
    fn windowed_pair_budget() {
        let scene = generate_scene(12, 1500, Motion::Corridor, 8).unwrap();
        let input = observe_all(&scene, &CorruptionSpec::none());
        let cfg = PipelineConfig {
            mode: PipelineMode::Windowed,
            window: 3,
            ..Default::default()
        };
        let reg = register(&input, &cfg).unwrap();
        assert_eq!(reg.pair_evaluations, 11 + 11 + 10);
        assert!(reg.pair_evaluations <= 12 * 3);
        assert!(reg.stage_diagnostics(2).all(|d| d.j - d.i < 3));
    }

    #[test]
    fn adjacent_failure_aborts() {
        let scene = generate_scene(3, 300, Motion::Orbit, 9).unwrap();
        let mut input = observe_all(&scene, &CorruptionSpec::none());
        input.frames[1] = tiny_cloud(vec![
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.1, 0.0, 1.0),
        ]);
        let err = register_scene(&input, &PipelineConfig::default()).unwrap_err();
        assert!(
            matches!(
                err,
                PipelineError::AdjacentPairFailure {
                    i: 0,
                    j: 1,
                    stage: 1,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn invalid_inputs() {
        let scene = generate_scene(2, 100, Motion::Orbit, 1).unwrap();
        let input = observe_all(&scene, &CorruptionSpec::none());
        let one = SceneInput::new(vec![input.frames[0].clone()]);
        assert!(matches!(
            register_scene(&one, &PipelineConfig::default()),
            Err(PipelineError::InvalidInput(_))
        ));
        let cfg = PipelineConfig {
            mode: PipelineMode::Windowed,
            window: 1,
            ..Default::default()
        };
        assert!(matches!(
            register(&input, &cfg),
            Err(PipelineError::InvalidInput(_))
        ));
    }

    #[test]
    fn registration_loss_cases() {
        let src = tiny_cloud(vec![
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(1.0, 0.0, 2.0),
            Vector3::new(0.0, 1.0, 3.0),
        ]);
        let t_j = RigidTransform::from_axis_angle(
            Vector3::new(0.1, -0.2, 0.3),
            Vector3::new(0.5, 0.0, -0.2),
        );
        let dst = src.transformed(&t_j);
        let one = |w: f64| {
            CorrespondenceSet::new(
                (0, 1),
                vec![Correspondence {
                    source_index: 0,
                    target_index: 0,
                    weight: w,
                }],
            )
        };
        let id = RigidTransform::identity();
        assert!(registration_loss(&one(1.0), &src, &dst, &id, &t_j) < 1e-12);

        let shifted = tiny_cloud(vec![Vector3::new(0.0, 0.03, 1.0)]);
        let single = one(1.0);
        assert!((registration_loss(&single, &src, &shifted, &id, &id) - 0.03).abs() < 1e-12);

        // Perturbing T_j's translation by dt moves every x_q T_j^-1 by R_j^T dt
        // in row form, so each term becomes |R_j^-1 dt|.
        let all = CorrespondenceSet::new(
            (0, 1),
            (0..3)
                .map(|k| Correspondence {
                    source_index: k,
                    target_index: k,
                    weight: 0.5 + k as f64,
                })
                .collect(),
        );
        let dt = Vector3::new(0.01, 0.0, 0.0);
        let perturbed = RigidTransform::new(*t_j.rotation(), t_j.translation() + dt).unwrap();
        let expected = all.weights().iter().sum::<f64>() * (t_j.rotation().transpose() * dt).norm();
        assert!((registration_loss(&all, &src, &dst, &id, &perturbed) - expected).abs() < 1e-12);
    }
}
