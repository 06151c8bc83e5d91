//! Weighted Procrustes and its RANSAC wrapper.
//!
//! Hypotheses are scored by inlier count; the winning inlier mask zeroes the
//! weights of outlying matches before the final weighted fit over the full
//! set.

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample_weighted;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspondence::{CorrespondenceSet, FeaturePointcloud};
use crate::geometry::RigidTransform;

/// Second singular value of the normalized cross-covariance below which the
/// support is treated as collinear.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("need at least {required} supporting correspondences, got {got}")]
    InsufficientSupport { required: usize, got: usize },
    #[error("support is degenerate (second singular value {singular_value:e})")]
    DegenerateGeometry { singular_value: f64 },
    #[error("no hypothesis produced any inlier")]
    NoConsensus,
    #[error("input lengths differ (src {src}, dst {dst}, weights {weights})")]
    LengthMismatch {
        src: usize,
        dst: usize,
        weights: usize,
    },
    #[error("weight {0} is negative or not finite")]
    InvalidWeight(f64),
    #[error("correspondence references point {index} but the cloud has {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid RANSAC configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub hypotheses: usize,
    pub sample_size: usize,
    /// Residual bound for inliers, meters.
    pub inlier_threshold: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            hypotheses: 128,
            sample_size: 8,
            inlier_threshold: 0.05,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        if self.hypotheses < 1 {
            return Err(AlignError::InvalidConfig(
                "hypotheses must be at least 1".into(),
            ));
        }
        if self.sample_size < 3 {
            return Err(AlignError::InvalidConfig(
                "sample_size must be at least 3".into(),
            ));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(AlignError::InvalidConfig(
                "inlier_threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub transform: RigidTransform,
    /// Original weight times the winning hypothesis' inlier indicator.
    pub inlier_weights: Vec<f64>,
    pub inlier_count: usize,
    /// Weighted RMS residual over inliers under the final transform, meters.
    pub residual_rms: f64,
    pub selected_hypothesis: usize,
    /// Inlier count of every sampled hypothesis, in sampling order.
    pub hypothesis_inliers: Vec<usize>,
}

/// Closed-form minimizer of `sum w |dst - src * T|^2` over SE(3).
pub fn weighted_procrustes(
    src_points: &[Vector3<f64>],
    dst_points: &[Vector3<f64>],
    weights: &[f64],
) -> Result<RigidTransform, AlignError> {
    if src_points.len() != dst_points.len() || src_points.len() != weights.len() {
        return Err(AlignError::LengthMismatch {
            src: src_points.len(),
            dst: dst_points.len(),
            weights: weights.len(),
        });
    }
    if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(AlignError::InvalidWeight(w));
    }
    let support = weights.iter().filter(|&&w| w > 0.0).count();
    if support < 3 {
        return Err(AlignError::InsufficientSupport {
            required: 3,
            got: support,
        });
    }
    let total: f64 = weights.iter().sum();

    let mut src_mean = Vector3::zeros();
    let mut dst_mean = Vector3::zeros();
    for ((p, q), &w) in src_points.iter().zip(dst_points).zip(weights) {
        src_mean += p * (w / total);
        dst_mean += q * (w / total);
    }
    let mut cov = Matrix3::zeros();
    for ((p, q), &w) in src_points.iter().zip(dst_points).zip(weights) {
        if w > 0.0 {
            cov += (p - src_mean) * (q - dst_mean).transpose() * (w / total);
        }
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested u"), svd.v_t.expect("requested v_t"));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let second = svd.singular_values[order[1]];
    if !(second >= DEGENERACY_THRESHOLD) {
        return Err(AlignError::DegenerateGeometry {
            singular_value: second,
        });
    }
    // Column form: q = Q p + t with Q = V D U^T.
    let mut d = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        d[order[2]] = -1.0;
    }
    let q_col = v_t.transpose() * Matrix3::from_diagonal(&d) * u.transpose();
    let translation = dst_mean - q_col * src_mean;
    Ok(RigidTransform::from_parts_unchecked(
        q_col.transpose(),
        translation,
    ))
}

fn gather(
    corr: &CorrespondenceSet,
    src: &FeaturePointcloud,
    dst: &FeaturePointcloud,
) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>, Vec<f64>), AlignError> {
    let mut ps = Vec::with_capacity(corr.len());
    let mut qs = Vec::with_capacity(corr.len());
    let mut ws = Vec::with_capacity(corr.len());
    for m in &corr.matches {
        if m.source_index >= src.len() {
            return Err(AlignError::IndexOutOfRange {
                index: m.source_index,
                len: src.len(),
            });
        }
        if m.target_index >= dst.len() {
            return Err(AlignError::IndexOutOfRange {
                index: m.target_index,
                len: dst.len(),
            });
        }
        ps.push(src.points()[m.source_index]);
        qs.push(dst.points()[m.target_index]);
        ws.push(m.weight);
    }
    Ok((ps, qs, ws))
}

/// Draws `amount` distinct indices, favouring larger weights. Falls back to
/// uniform draws when fewer than `amount` weights are positive.
fn draw_sample(rng: &mut ChaCha8Rng, weights: &[f64], amount: usize) -> Vec<usize> {
    let positive = weights.iter().filter(|&&w| w > 0.0).count();
    let drawn = if positive >= amount {
        sample_weighted(rng, weights.len(), |i| weights[i], amount).ok()
    } else {
        sample_weighted(rng, weights.len(), |_| 1.0, amount).ok()
    };
    drawn.map(|v| v.into_vec()).unwrap_or_default()
}

pub fn wp_ransac(
    corr: &CorrespondenceSet,
    src: &FeaturePointcloud,
    dst: &FeaturePointcloud,
    cfg: &RansacConfig,
) -> Result<AlignmentResult, AlignError> {
    cfg.validate()?;
    if corr.len() < cfg.sample_size {
        return Err(AlignError::InsufficientSupport {
            required: cfg.sample_size,
            got: corr.len(),
        });
    }
    let (ps, qs, ws) = gather(corr, src, dst)?;
    if let Some(&w) = ws.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(AlignError::InvalidWeight(w));
    }
    let threshold = cfg.inlier_threshold;
    let is_inlier =
        |t: &RigidTransform, k: usize| (qs[k] - t.transform_point(&ps[k])).norm() < threshold;

    // One ChaCha stream per hypothesis keeps draws independent of evaluation order.
    let hypothesis_inliers: Vec<usize> = (0..cfg.hypotheses)
        .into_par_iter()
        .map(|h| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(h as u64);
            let sample = draw_sample(&mut rng, &ws, cfg.sample_size);
            let sp: Vec<_> = sample.iter().map(|&k| ps[k]).collect();
            let sq: Vec<_> = sample.iter().map(|&k| qs[k]).collect();
            let sw: Vec<_> = sample
                .iter()
                .map(|&k| ws[k].max(f64::MIN_POSITIVE))
                .collect();
            match weighted_procrustes(&sp, &sq, &sw) {
                Ok(t) => (0..ps.len()).filter(|&k| is_inlier(&t, k)).count(),
                Err(_) => 0,
            }
        })
        .collect();

    // Rebuild the winner rather than keeping every hypothesis transform around.
    let (selected, &best) =
        hypothesis_inliers
            .iter()
            .enumerate()
            .fold(
                (0, &0usize),
                |acc, (h, c)| if *c > *acc.1 { (h, c) } else { acc },
            );
    if best == 0 {
        return Err(AlignError::NoConsensus);
    }
    let winner = {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(selected as u64);
        let sample = draw_sample(&mut rng, &ws, cfg.sample_size);
        let sp: Vec<_> = sample.iter().map(|&k| ps[k]).collect();
        let sq: Vec<_> = sample.iter().map(|&k| qs[k]).collect();
        let sw: Vec<_> = sample
            .iter()
            .map(|&k| ws[k].max(f64::MIN_POSITIVE))
            .collect();
        weighted_procrustes(&sp, &sq, &sw)?
    };

    let inlier_weights: Vec<f64> = ws
        .iter()
        .enumerate()
        .map(|(k, &w)| if is_inlier(&winner, k) { w } else { 0.0 })
        .collect();
    let transform = weighted_procrustes(&ps, &qs, &inlier_weights)?;
    let inlier_count = inlier_weights.iter().filter(|&&w| w > 0.0).count();

    let (mut sse, mut wsum) = (0.0, 0.0);
    for k in 0..ps.len() {
        let w = inlier_weights[k];
        if w > 0.0 {
            sse += w * (qs[k] - transform.transform_point(&ps[k])).norm_squared();
            wsum += w;
        }
    }
    Ok(AlignmentResult {
        transform,
        inlier_weights,
        inlier_count,
        residual_rms: (sse / wsum).sqrt(),
        selected_hypothesis: selected,
        hypothesis_inliers,
    })
}
