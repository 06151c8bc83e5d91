//! Descriptor matching with the ratio test, and its geometry-aware variant.
//!
//! Each source point is matched to its nearest target under a distance
//! function; the match weight is `1 - d1 / d2` where `d1`, `d2` are the
//! first and second nearest distances. Matches from all source points are
//! pooled, sorted by weight, and truncated to the top `k`.

use std::cmp::Ordering;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RigidTransform;

/// Descriptor dimension used by the synthetic generator and CLI defaults.
pub const DEFAULT_DESCRIPTOR_DIM: usize = 128;

/// Number of correspondences kept per pair.
pub const DEFAULT_TOP_K: usize = 500;

/// Weight on the Euclidean term of the refined distance, in 1/m.
pub const DEFAULT_GART_LAMBDA: f64 = 10.0;

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("target cloud has {0} points, at least 2 are needed for a ratio test")]
    InsufficientTargets(usize),
    #[error("second neighbor distance {second} is smaller than first {first}")]
    InvalidNeighborOrder { first: f64, second: f64 },
    #[error("descriptor dimensions differ ({src} vs {dst})")]
    DimensionMismatch { src: usize, dst: usize },
    #[error("point cloud fields have mismatched lengths (points {points}, pixels {pixels}, descriptors {descriptors})")]
    LengthMismatch {
        points: usize,
        pixels: usize,
        descriptors: usize,
    },
    #[error("descriptor {index} has norm {norm}, expected unit norm")]
    NotUnitNorm { index: usize, norm: f64 },
    #[error("non-finite value in point cloud at index {0}")]
    NonFinite(usize),
    #[error("top-k budget must be at least 1")]
    ZeroBudget,
}

/// Per-frame points with unit descriptors and source pixels.
///
/// Descriptors are stored contiguously, `dim` values per point.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePointcloud {
    points: Vec<Vector3<f64>>,
    pixels: Vec<Vector2<f64>>,
    descriptors: Vec<f64>,
    dim: usize,
}

impl FeaturePointcloud {
    pub fn new(
        points: Vec<Vector3<f64>>,
        pixels: Vec<Vector2<f64>>,
        descriptors: Vec<f64>,
        dim: usize,
    ) -> Result<Self, MatchError> {
        let n_desc = if dim == 0 { 0 } else { descriptors.len() / dim };
        if dim == 0
            || descriptors.len() % dim != 0
            || n_desc != points.len()
            || pixels.len() != points.len()
        {
            return Err(MatchError::LengthMismatch {
                points: points.len(),
                pixels: pixels.len(),
                descriptors: n_desc,
            });
        }
        for (i, (p, px)) in points.iter().zip(&pixels).enumerate() {
            if !p.iter().chain(px.iter()).all(|v| v.is_finite()) {
                return Err(MatchError::NonFinite(i));
            }
        }
        for (i, d) in descriptors.chunks_exact(dim).enumerate() {
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
                return Err(MatchError::NotUnitNorm { index: i, norm });
            }
        }
        Ok(Self {
            points,
            pixels,
            descriptors,
            dim,
        })
    }

    /// Normalizes descriptors before validating. Used when loading f32 data.
    pub fn new_normalized(
        points: Vec<Vector3<f64>>,
        pixels: Vec<Vector2<f64>>,
        mut descriptors: Vec<f64>,
        dim: usize,
    ) -> Result<Self, MatchError> {
        if dim > 0 {
            for d in descriptors.chunks_exact_mut(dim) {
                let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    d.iter_mut().for_each(|v| *v /= norm);
                }
            }
        }
        Self::new(points, pixels, descriptors, dim)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn pixels(&self) -> &[Vector2<f64>] {
        &self.pixels
    }

    pub fn descriptor(&self, index: usize) -> &[f64] {
        &self.descriptors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn descriptors(&self) -> &[f64] {
        &self.descriptors
    }

    /// Copy with every point mapped through `transform`.
    pub fn transformed(&self, transform: &RigidTransform) -> FeaturePointcloud {
        FeaturePointcloud {
            points: self
                .points
                .iter()
                .map(|p| transform.transform_point(p))
                .collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub source_index: usize,
    pub target_index: usize,
    pub weight: f64,
}

/// Weighted matches between frames `frame_pair.0` (source) and
/// `frame_pair.1` (target), sorted by weight, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub frame_pair: (usize, usize),
    pub matches: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(frame_pair: (usize, usize), matches: Vec<Correspondence>) -> Self {
        Self {
            frame_pair,
            matches,
        }
    }

    pub fn with_frame_pair(mut self, i: usize, j: usize) -> Self {
        self.frame_pair = (i, j);
        self
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.matches.iter().map(|m| m.weight).collect()
    }

    /// Keeps the first `k` (highest weight) matches.
    pub fn truncated(&self, k: usize) -> CorrespondenceSet {
        CorrespondenceSet {
            frame_pair: self.frame_pair,
            matches: self.matches.iter().take(k).copied().collect(),
        }
    }
}

/// `1 - a.b`, clamped to `[0, 2]` against rounding.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot).clamp(0.0, 2.0)
}

pub fn ratio_weight(d_first: f64, d_second: f64) -> Result<f64, MatchError> {
    if d_second < d_first {
        return Err(MatchError::InvalidNeighborOrder {
            first: d_first,
            second: d_second,
        });
    }
    if d_second == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - d_first / d_second).clamp(0.0, 1.0))
}

/// Feature distance plus `lambda` times the Euclidean distance of the points.
pub fn gart_distance(
    f_p: &[f64],
    f_q: &[f64],
    x_p: &Vector3<f64>,
    x_q: &Vector3<f64>,
    lambda: f64,
) -> f64 {
    cosine_distance(f_p, f_q) + lambda * (x_p - x_q).norm()
}

pub fn match_ratio_test(
    src: &FeaturePointcloud,
    dst: &FeaturePointcloud,
    k_keep: usize,
) -> Result<CorrespondenceSet, MatchError> {
    check_inputs(src, dst, k_keep)?;
    ratio_test_with(src.len(), dst.len(), k_keep, |i, j| {
        cosine_distance(src.descriptor(i), dst.descriptor(j))
    })
}

/// Ratio-test matching under the geometry-aware distance.
///
/// Both clouds are moved into the shared frame with the inverses of their
/// world-to-camera estimates; both neighbors and the ratio use the combined
/// distance.
pub fn match_gart(
    src: &FeaturePointcloud,
    dst: &FeaturePointcloud,
    src_world_to_camera: &RigidTransform,
    dst_world_to_camera: &RigidTransform,
    lambda: f64,
    k_keep: usize,
) -> Result<CorrespondenceSet, MatchError> {
    check_inputs(src, dst, k_keep)?;
    let src_world: Vec<_> = {
        let to_world = src_world_to_camera.inverse();
        src.points
            .iter()
            .map(|p| to_world.transform_point(p))
            .collect()
    };
    let dst_world: Vec<_> = {
        let to_world = dst_world_to_camera.inverse();
        dst.points
            .iter()
            .map(|p| to_world.transform_point(p))
            .collect()
    };
    ratio_test_with(src.len(), dst.len(), k_keep, |i, j| {
        gart_distance(
            src.descriptor(i),
            dst.descriptor(j),
            &src_world[i],
            &dst_world[j],
            lambda,
        )
    })
}

fn check_inputs(
    src: &FeaturePointcloud,
    dst: &FeaturePointcloud,
    k_keep: usize,
) -> Result<(), MatchError> {
    if k_keep == 0 {
        return Err(MatchError::ZeroBudget);
    }
    if dst.len() < 2 {
        return Err(MatchError::InsufficientTargets(dst.len()));
    }
    if src.dim != dst.dim {
        return Err(MatchError::DimensionMismatch {
            src: src.dim,
            dst: dst.dim,
        });
    }
    Ok(())
}

/// Shared matcher: two nearest targets per source (ties to the lower target
/// index), ratio weight, global sort, top-k.
fn ratio_test_with<F>(
    n_src: usize,
    n_dst: usize,
    k_keep: usize,
    distance: F,
) -> Result<CorrespondenceSet, MatchError>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let mut matches = (0..n_src)
        .into_par_iter()
        .map(|i| {
            let (mut best, mut best_d) = (usize::MAX, f64::INFINITY);
            let mut second_d = f64::INFINITY;
            for j in 0..n_dst {
                let d = distance(i, j);
                if d < best_d {
                    second_d = best_d;
                    best_d = d;
                    best = j;
                } else if d < second_d {
                    second_d = d;
                }
            }
            Ok(Correspondence {
                source_index: i,
                target_index: best,
                weight: ratio_weight(best_d, second_d)?,
            })
        })
        .collect::<Result<Vec<_>, MatchError>>()?;
    sort_matches(&mut matches);
    matches.truncate(k_keep);
    Ok(CorrespondenceSet::new((0, 1), matches))
}

/// Weight descending, then source index ascending.
pub(crate) fn sort_matches(matches: &mut [Correspondence]) {
    matches.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap_or(Ordering::Equal)
            .then(a.source_index.cmp(&b.source_index))
    });
}
