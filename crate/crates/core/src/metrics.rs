//! Correspondence precision, pose error AUC, and the synchronization benchmark.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspondence::{CorrespondenceSet, FeaturePointcloud, DEFAULT_TOP_K};
use crate::derive_seed;
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::synchronization::{
    gauge_fix, synchronize_eig, synchronize_naive, synchronize_power, PoseGraph, SyncError,
    SyncResult,
};
use crate::synthetic::{perturb_transform, random_rigid, relative_pose_graph};

pub const THRESHOLDS_3D: [f64; 3] = [0.01, 0.05, 0.10];
pub const THRESHOLDS_2D: [f64; 3] = [1.0, 2.0, 5.0];
pub const AUC_ROTATION_DEG: f64 = 5.0;
pub const AUC_TRANSLATION_M: f64 = 0.10;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no errors to summarize")]
    EmptyReport,
    #[error("input mismatch: {0}")]
    InputMismatch(String),
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("benchmark needs at least one trial and two frames")]
    InvalidBenchmark,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPrecision {
    pub threshold: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceErrorReport {
    /// Meters.
    pub precision_3d: Vec<ThresholdPrecision>,
    /// Pixels.
    pub precision_2d: Vec<ThresholdPrecision>,
    /// Matches with valid depth on both sides after the top-k budget.
    pub evaluated: usize,
}

impl CorrespondenceErrorReport {
    /// Precision tables over `(3D, 2D)` error pairs, e.g. pooled over many
    /// frame pairs.
    pub fn from_values(values: &[(f64, f64)]) -> Self {
        let e3: Vec<f64> = values.iter().map(|v| v.0).collect();
        let e2: Vec<f64> = values.iter().map(|v| v.1).collect();
        Self {
            precision_3d: precision_table(&e3, &THRESHOLDS_3D),
            precision_2d: precision_table(&e2, &THRESHOLDS_2D),
            evaluated: values.len(),
        }
    }

    pub fn precision_3d_at(&self, threshold: f64) -> Option<f64> {
        self.precision_3d
            .iter()
            .find(|p| p.threshold == threshold)
            .map(|p| p.precision)
    }

    pub fn precision_2d_at(&self, threshold: f64) -> Option<f64> {
        self.precision_2d
            .iter()
            .find(|p| p.threshold == threshold)
            .map(|p| p.precision)
    }
}

fn valid_depth(p: &nalgebra::Vector3<f64>) -> bool {
    p.z.is_finite() && p.z > 0.0
}

fn precision_table(errors: &[f64], thresholds: &[f64]) -> Vec<ThresholdPrecision> {
    thresholds
        .iter()
        .map(|&threshold| ThresholdPrecision {
            threshold,
            precision: if errors.is_empty() {
                0.0
            } else {
                errors.iter().filter(|&&e| e < threshold).count() as f64 / errors.len() as f64
            },
        })
        .collect()
}

/// Per-match 3D and 2D errors under ground truth, restricted to the top-k
/// budget and to matches whose source and target depths are valid.
///
/// The 2D error is infinite when the aligned source point falls behind the
/// target camera.
pub fn correspondence_error_values(
    corr: &CorrespondenceSet,
    src: &FeaturePointcloud,
    dst: &FeaturePointcloud,
    gt_src: &RigidTransform,
    gt_dst: &RigidTransform,
    intrinsics: &CameraIntrinsics,
) -> Vec<(f64, f64)> {
    let src_to_dst = gt_src.inverse().compose(gt_dst);
    corr.truncated(DEFAULT_TOP_K)
        .matches
        .iter()
        .filter_map(|m| {
            let p = src.points().get(m.source_index)?;
            let q = dst.points().get(m.target_index)?;
            let q_px = dst.pixels().get(m.target_index)?;
            if !(valid_depth(p) && valid_depth(q)) {
                return None;
            }
            let aligned = src_to_dst.transform_point(p);
            let e3 = (aligned - q).norm();
            let e2 = intrinsics
                .project(&aligned)
                .map_or(f64::INFINITY, |px| (px - q_px).norm());
            Some((e3, e2))
        })
        .collect()
}

pub fn correspondence_errors(
    corr: &CorrespondenceSet,
    src: &FeaturePointcloud,
    dst: &FeaturePointcloud,
    gt_src: &RigidTransform,
    gt_dst: &RigidTransform,
    intrinsics: &CameraIntrinsics,
) -> CorrespondenceErrorReport {
    let values = correspondence_error_values(corr, src, dst, gt_src, gt_dst, intrinsics);
    CorrespondenceErrorReport::from_values(&values)
}

/// Area under the recall curve of `errors` on `[0, threshold]`, divided by
/// `threshold`.
///
/// The curve starts at `(0, 0)`, steps to `(i + 1) / n` at the i-th smallest
/// error, and is integrated with the trapezoid rule up to the last error
/// below the threshold, then held flat to the threshold. NaN counts as
/// above every threshold.
pub fn auc(errors: &[f64], threshold: f64) -> Result<f64, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::EmptyReport);
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(MetricsError::InvalidThreshold(threshold));
    }
    let mut sorted: Vec<f64> = errors
        .iter()
        .map(|e| if e.is_nan() { f64::INFINITY } else { *e })
        .collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut area = 0.0;
    let (mut prev_e, mut prev_r) = (0.0, 0.0);
    for (i, &e) in sorted.iter().enumerate() {
        if e >= threshold {
            break;
        }
        let e = e.max(0.0);
        let r = (i + 1) as f64 / n;
        area += (e - prev_e) * (r + prev_r) / 2.0;
        prev_e = e;
        prev_r = r;
    }
    area += (threshold - prev_e) * prev_r;
    Ok(area / threshold)
}

pub fn pose_auc(
    errors: &[(f64, f64)],
    rot_threshold_deg: f64,
    trans_threshold_m: f64,
) -> Result<(f64, f64), MetricsError> {
    let rot: Vec<f64> = errors.iter().map(|e| e.0).collect();
    let trans: Vec<f64> = errors.iter().map(|e| e.1).collect();
    Ok((
        auc(&rot, rot_threshold_deg)?,
        auc(&trans, trans_threshold_m)?,
    ))
}

/// Rotation (degrees) and translation (meters) error of every frame after
/// frame 0, with both trajectories gauge-fixed to frame 0.
pub fn pose_errors(
    estimated: &[RigidTransform],
    ground_truth: &[RigidTransform],
) -> Result<Vec<(f64, f64)>, MetricsError> {
    if estimated.len() != ground_truth.len() {
        return Err(MetricsError::InputMismatch(format!(
            "{} estimated poses vs {} ground-truth poses",
            estimated.len(),
            ground_truth.len()
        )));
    }
    if estimated.len() < 2 {
        return Err(MetricsError::EmptyReport);
    }
    let est = gauge_fix(estimated.to_vec());
    let gt = gauge_fix(ground_truth.to_vec());
    Ok(est
        .iter()
        .zip(&gt)
        .skip(1)
        .map(|(e, g)| {
            (
                e.rotation_distance(g).to_degrees(),
                e.translation_distance(g),
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorReport {
    pub rotation_error_deg: Vec<f64>,
    pub translation_error_m: Vec<f64>,
    pub mean_rotation_deg: f64,
    pub mean_translation_m: f64,
    pub auc_rot_5deg: f64,
    pub auc_trans_10cm: f64,
}

pub fn pose_error_report(
    estimated: &[RigidTransform],
    ground_truth: &[RigidTransform],
) -> Result<PoseErrorReport, MetricsError> {
    let errors = pose_errors(estimated, ground_truth)?;
    let (auc_rot_5deg, auc_trans_10cm) = pose_auc(&errors, AUC_ROTATION_DEG, AUC_TRANSLATION_M)?;
    let n = errors.len() as f64;
    Ok(PoseErrorReport {
        rotation_error_deg: errors.iter().map(|e| e.0).collect(),
        translation_error_m: errors.iter().map(|e| e.1).collect(),
        mean_rotation_deg: errors.iter().map(|e| e.0).sum::<f64>() / n,
        mean_translation_m: errors.iter().map(|e| e.1).sum::<f64>() / n,
        auc_rot_5deg,
        auc_trans_10cm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncBackend {
    Naive,
    Eig,
    Power,
}

impl SyncBackend {
    pub const ALL: [SyncBackend; 3] = [SyncBackend::Naive, SyncBackend::Eig, SyncBackend::Power];

    pub fn name(self) -> &'static str {
        match self {
            SyncBackend::Naive => "naive",
            SyncBackend::Eig => "eig",
            SyncBackend::Power => "power",
        }
    }

    pub fn run(self, graph: &PoseGraph) -> Result<SyncResult, SyncError> {
        match self {
            SyncBackend::Naive => synchronize_naive(graph),
            SyncBackend::Eig => synchronize_eig(graph),
            SyncBackend::Power => synchronize_power(graph),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub rot_sigma_deg: f64,
    pub trans_sigma_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub rot_sigma_deg: f64,
    pub trans_sigma_m: f64,
    pub n_frames: usize,
    pub backend: SyncBackend,
    pub trials: usize,
    /// Trials where the backend returned an error; excluded from the means.
    pub failures: usize,
    pub mean_rot_err_deg: f64,
    pub mean_trans_err_m: f64,
    pub mean_runtime_s: f64,
}

/// Mean per-frame rotation (degrees) and translation (meters) error of one
/// backend on one graph, plus its wall time in seconds.
pub fn benchmark_backend(
    backend: SyncBackend,
    graph: &PoseGraph,
    ground_truth: &[RigidTransform],
) -> Result<(f64, f64, f64), SyncError> {
    let start = Instant::now();
    let result = backend.run(graph)?;
    let elapsed = start.elapsed().as_secs_f64();
    let errors = pose_errors(&result.world_to_camera, ground_truth)
        .expect("graph and ground truth share N ≥ 2");
    let n = errors.len() as f64;
    Ok((
        errors.iter().map(|e| e.0).sum::<f64>() / n,
        errors.iter().map(|e| e.1).sum::<f64>() / n,
        elapsed,
    ))
}

/// Random fully connected graph with every edge perturbed at `level`.
pub fn benchmark_instance(
    n_frames: usize,
    level: &NoiseLevel,
    seed: u64,
) -> (Vec<RigidTransform>, PoseGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses: Vec<_> = (0..n_frames).map(|_| random_rigid(&mut rng, 2.0)).collect();
    let rot_sigma = level.rot_sigma_deg.to_radians();
    let graph = relative_pose_graph(&poses, |_, _, t| {
        perturb_transform(&t, rot_sigma, level.trans_sigma_m, &mut rng)
    });
    (poses, graph)
}

/// Runs every backend on `trials` perturbed random graphs per noise level.
/// Trials are run one after another so runtimes are not contended.
pub fn sync_benchmark(
    grid: &[NoiseLevel],
    n_frames: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<BenchmarkRow>, MetricsError> {
    if trials == 0 || n_frames < 2 {
        return Err(MetricsError::InvalidBenchmark);
    }
    let mut rows = Vec::with_capacity(grid.len() * SyncBackend::ALL.len());
    for (cell, level) in grid.iter().enumerate() {
        let mut sums = [[0.0f64; 3]; 3];
        let mut failures = [0usize; 3];
        for trial in 0..trials {
            let (poses, graph) = benchmark_instance(
                n_frames,
                level,
                derive_seed(seed, &[cell as u64, trial as u64]),
            );
            for (b, backend) in SyncBackend::ALL.iter().enumerate() {
                match benchmark_backend(*backend, &graph, &poses) {
                    Ok((r, t, s)) => {
                        sums[b][0] += r;
                        sums[b][1] += t;
                        sums[b][2] += s;
                    }
                    Err(_) => failures[b] += 1,
                }
            }
        }
        for (b, backend) in SyncBackend::ALL.iter().enumerate() {
            let ok = (trials - failures[b]).max(1) as f64;
            rows.push(BenchmarkRow {
                rot_sigma_deg: level.rot_sigma_deg,
                trans_sigma_m: level.trans_sigma_m,
                n_frames,
                backend: *backend,
                trials,
                failures: failures[b],
                mean_rot_err_deg: sums[b][0] / ok,
                mean_trans_err_m: sums[b][1] / ok,
                mean_runtime_s: sums[b][2] / ok,
            });
        }
    }
    Ok(rows)
}

/// One CSV row per noise level and backend, with a header.
pub fn write_benchmark_csv<W: Write>(rows: &[BenchmarkRow], writer: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::Correspondence;
    use nalgebra::{Vector2, Vector3};

    fn cloud(points: Vec<Vector3<f64>>, k: &CameraIntrinsics) -> FeaturePointcloud {
        let pixels: Vec<Vector2<f64>> = points
            .iter()
            .map(|p| k.project(p).unwrap_or_else(|| Vector2::new(-1.0, -1.0)))
            .collect();
        let n = points.len();
        let mut desc = vec![0.0; n * 2];
        desc.chunks_mut(2).for_each(|c| c[0] = 1.0);
        FeaturePointcloud::new(points, pixels, desc, 2).unwrap()
    }

    fn identity_set(n: usize) -> CorrespondenceSet {
        CorrespondenceSet::new(
            (0, 1),
            (0..n)
                .map(|i| Correspondence {
                    source_index: i,
                    target_index: i,
                    weight: 1.0,
                })
                .collect(),
        )
    }

    fn intrinsics() -> CameraIntrinsics {
        crate::synthetic::default_intrinsics()
    }

    #[test]
    fn perfect_correspondences_give_full_precision() {
        let k = intrinsics();
        let pts: Vec<_> = (0..20)
            .map(|i| Vector3::new(0.05 * i as f64 - 0.5, 0.1, 2.0 + 0.05 * i as f64))
            .collect();
        let gt_dst = RigidTransform::from_axis_angle(
            Vector3::new(0.0, 0.05, 0.0),
            Vector3::new(0.1, 0.0, 0.0),
        );
        let dst_pts: Vec<_> = pts.iter().map(|p| gt_dst.transform_point(p)).collect();
        let r = correspondence_errors(
            &identity_set(20),
            &cloud(pts, &k),
            &cloud(dst_pts, &k),
            &RigidTransform::identity(),
            &gt_dst,
            &k,
        );
        assert_eq!(r.evaluated, 20);
        assert!(r
            .precision_3d
            .iter()
            .chain(&r.precision_2d)
            .all(|p| p.precision == 1.0));
    }

    #[test]
    fn three_centimeter_offsets() {
        let k = intrinsics();
        let pts: Vec<_> = (0..10)
            .map(|i| Vector3::new(0.1 * i as f64 - 0.5, 0.0, 3.0))
            .collect();
        let dst: Vec<_> = pts
            .iter()
            .map(|p| p + Vector3::new(0.0, 0.0, 0.03))
            .collect();
        let id = RigidTransform::identity();
        let r = correspondence_errors(
            &identity_set(10),
            &cloud(pts, &k),
            &cloud(dst, &k),
            &id,
            &id,
            &k,
        );
        assert_eq!(r.precision_3d_at(0.01), Some(0.0));
        assert_eq!(r.precision_3d_at(0.05), Some(1.0));
        assert_eq!(r.precision_3d_at(0.10), Some(1.0));
    }

    #[test]
    fn invalid_depth_is_excluded() {
        let k = intrinsics();
        let pts = vec![
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.1, 0.0, 2.0),
        ];
        let id = RigidTransform::identity();
        let r = correspondence_errors(
            &identity_set(3),
            &cloud(pts.clone(), &k),
            &cloud(pts, &k),
            &id,
            &id,
            &k,
        );
        assert_eq!(r.evaluated, 2);
    }

    #[test]
    fn budget_keeps_top_500() {
        let k = intrinsics();
        let pts: Vec<_> = (0..600)
            .map(|i| Vector3::new(0.001 * i as f64, 0.0, 2.0))
            .collect();
        let id = RigidTransform::identity();
        let r = correspondence_errors(
            &identity_set(600),
            &cloud(pts.clone(), &k),
            &cloud(pts, &k),
            &id,
            &id,
            &k,
        );
        assert_eq!(r.evaluated, 500);
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(auc(&[0.0, 0.0, 0.0], 5.0).unwrap(), 1.0);
        assert_eq!(auc(&[6.0, 7.0], 5.0).unwrap(), 0.0);
        assert_eq!(auc(&[5.0], 5.0).unwrap(), 0.0);
        assert!(matches!(auc(&[], 5.0), Err(MetricsError::EmptyReport)));
        assert!(matches!(
            auc(&[1.0], 0.0),
            Err(MetricsError::InvalidThreshold(_))
        ));
        assert!(matches!(
            pose_auc(&[], 5.0, 0.1),
            Err(MetricsError::EmptyReport)
        ));
    }

    /// One error at half the threshold: recall rises linearly to 1 at t/2,
    /// then holds, so the area is t/4 + t/2.
    #[test]
    fn auc_single_error_closed_form() {
        assert!((auc(&[2.5], 5.0).unwrap() - 0.75).abs() < 1e-15);
    }

    /// Evenly spaced errors `t i / n` give `(n + 1) / (2n)` minus the final
    /// missing step, computed in closed form.
    #[test]
    fn auc_uniform_grid_closed_form() {
        let n = 100;
        let t = 10.0;
        let errs: Vec<f64> = (1..=n).map(|i| t * i as f64 / (n as f64 + 1.0)).collect();
        // Trapezoids between consecutive points: sum over k of h (2k+1)/(2n)
        // with h = t/(n+1), then the flat tail of width h at recall 1.
        let h = t / (n as f64 + 1.0);
        let expected = ((0..n)
            .map(|k| h * (2 * k + 1) as f64 / (2.0 * n as f64))
            .sum::<f64>()
            + h)
            / t;
        assert!((auc(&errs, t).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.5).abs() < 0.01);
    }

    #[test]
    fn pose_errors_are_gauge_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt: Vec<_> = (0..5).map(|_| random_rigid(&mut rng, 2.0)).collect();
        let g = random_rigid(&mut rng, 2.0);
        let shifted: Vec<_> = gt.iter().map(|p| g.compose(p)).collect();
        let errs = pose_errors(&shifted, &gt).unwrap();
        assert_eq!(errs.len(), 4);
        assert!(errs.iter().all(|e| e.0 < 1e-6 && e.1 < 1e-9));
        assert!(matches!(
            pose_errors(&gt[..3], &gt),
            Err(MetricsError::InputMismatch(_))
        ));
    }

    #[test]
    fn translation_error_of_known_offset() {
        let gt = vec![
            RigidTransform::identity(),
            RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0)),
        ];
        let est = vec![
            RigidTransform::identity(),
            RigidTransform::from_translation(Vector3::new(1.0, 0.03, 0.04)),
        ];
        let r = pose_error_report(&est, &gt).unwrap();
        assert!((r.mean_translation_m - 0.05).abs() < 1e-12);
        assert!(r.mean_rotation_deg.abs() < 1e-12);
        assert!((r.auc_trans_10cm - 0.75).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_benchmark_is_exact_and_deterministic() {
        let grid = [NoiseLevel {
            rot_sigma_deg: 0.0,
            trans_sigma_m: 0.0,
        }];
        let rows = sync_benchmark(&grid, 6, 3, 1).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert_eq!(r.failures, 0);
            assert!(
                r.mean_rot_err_deg < 1e-6 && r.mean_trans_err_m < 1e-6,
                "{r:?}"
            );
        }
        let again = sync_benchmark(&grid, 6, 3, 1).unwrap();
        for (a, b) in rows.iter().zip(&again) {
            assert_eq!(
                (a.mean_rot_err_deg, a.mean_trans_err_m),
                (b.mean_rot_err_deg, b.mean_trans_err_m)
            );
        }
    }

    #[test]
    fn power_beats_naive_at_five_degrees() {
        let grid = [NoiseLevel {
            rot_sigma_deg: 5.0,
            trans_sigma_m: 0.02,
        }];
        let rows = sync_benchmark(&grid, 6, 20, 2).unwrap();
        let get = |b: SyncBackend| {
            rows.iter()
                .find(|r| r.backend == b)
                .unwrap()
                .mean_rot_err_deg
        };
        assert!(get(SyncBackend::Power) <= get(SyncBackend::Naive));
    }

    #[test]
    fn csv_has_header_and_one_row_per_backend() {
        let grid = [NoiseLevel {
            rot_sigma_deg: 1.0,
            trans_sigma_m: 0.01,
        }];
        let rows = sync_benchmark(&grid, 4, 2, 0).unwrap();
        let mut buf = Vec::new();
        write_benchmark_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("rot_sigma_deg,trans_sigma_m,n_frames,backend"));
        assert!(lines[3].contains(",power,"));
    }

    #[test]
    fn invalid_benchmark_arguments() {
        assert!(matches!(
            sync_benchmark(&[], 6, 0, 0),
            Err(MetricsError::InvalidBenchmark)
        ));
        assert!(matches!(
            sync_benchmark(&[], 1, 1, 0),
            Err(MetricsError::InvalidBenchmark)
        ));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn auc_is_bounded_by_precision_at_threshold(
            errors in proptest::collection::vec(0.0f64..0.3, 1..120),
            threshold in 0.01f64..0.2,
        ) {
            let a = auc(&errors, threshold).unwrap();
            let recall = errors.iter().filter(|&&e| e < threshold).count() as f64 / errors.len() as f64;
            proptest::prop_assert!((0.0..=1.0).contains(&a));
            proptest::prop_assert!(a <= recall + 1e-12, "auc {} recall {}", a, recall);
        }

        #[test]
        fn precision_curves_are_monotone(
            offsets in proptest::collection::vec((-0.2f64..0.2, -0.2f64..0.2, -0.2f64..0.2), 1..100),
        ) {
            let k = CameraIntrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480).unwrap();
            let n = offsets.len();
            let src: Vec<_> = (0..n).map(|i| Vector3::new(0.01 * i as f64 - 0.5, 0.2, 2.0 + 0.01 * i as f64)).collect();
            let dst: Vec<_> = src.iter().zip(&offsets).map(|(p, o)| p + Vector3::new(o.0, o.1, o.2)).collect();
            let report = correspondence_errors(
                &identity_set(n),
                &cloud(src, &k),
                &cloud(dst, &k),
                &RigidTransform::identity(),
                &RigidTransform::identity(),
                &k,
            );
            for table in [&report.precision_3d, &report.precision_2d] {
                proptest::prop_assert!(table.windows(2).all(|w| w[0].precision <= w[1].precision));
                proptest::prop_assert!(table.iter().all(|p| (0.0..=1.0).contains(&p.precision)));
            }
        }
    }
}
