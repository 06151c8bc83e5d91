//! SE(3) transformation synchronization.
//!
//! Pairwise estimates `T_ij` (camera `i` to camera `j`) with confidences
//! `c_ij` are stacked into a `4N x 4N` block matrix `A` whose block `(i, j)`
//! is `c_ij * T_ij` and whose diagonal block is `c_i * I` with
//! `c_i = sum_{k != i} c_ik`. For a consistent set of world-to-camera poses
//! `T_ij = T_i^-1 T_j`, so after row normalization `A` is similar to a lazy
//! Markov kernel and its powers converge to blocks `pi_j T_i^-1 T_j`.
//!
//! [`synchronize_power`] squares the row-normalized matrix `ceil(log2 N) + 2`
//! times and reads the poses off the first block row: block `(0, j)` of the
//! limit is `pi_j T_0^-1 T_j`, camera `j` relative to camera 0, with no
//! inversion. The other two
//! backends are baselines: a spectral solve of the rotation blocks followed
//! by linear least squares for translations, and chaining adjacent edges.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspondence::CorrespondenceSet;
use crate::geometry::{nearest_rotation, GeometryError, RigidTransform, ScaledTransform};

/// Confidence threshold for non-adjacent pairs.
pub const DEFAULT_GAMMA: f64 = 0.4;

/// Bottom-right scale below which a frame is considered cut off.
pub const COLLAPSE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("frame {frame} has no positive-confidence edge")]
    DisconnectedGraph { frame: usize },
    #[error("synchronization collapsed at frame {frame} (scale {scale:e})")]
    SynchronizationCollapse { frame: usize, scale: f64 },
    #[error("invalid edge ({i}, {j}): {reason}")]
    InvalidEdge { i: usize, j: usize, reason: String },
    #[error("pose graph needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEdge {
    pub transform: RigidTransform,
    pub confidence: f64,
}

/// Pairwise transforms keyed by `(i, j)` with `i < j`. The reverse edge is
/// implied: `T_ji = T_ij^-1`, `c_ji = c_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseGraph {
    n_frames: usize,
    edges: BTreeMap<(usize, usize), PoseEdge>,
}

impl PoseGraph {
    pub fn new(n_frames: usize) -> Self {
        Self {
            n_frames,
            edges: BTreeMap::new(),
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    /// Inserts or replaces the edge between `i` and `j`. `transform` maps
    /// camera `i` coordinates to camera `j` coordinates.
    pub fn add_edge(
        &mut self,
        i: usize,
        j: usize,
        transform: RigidTransform,
        confidence: f64,
    ) -> Result<(), SyncError> {
        let invalid = |reason: &str| SyncError::InvalidEdge {
            i,
            j,
            reason: reason.to_string(),
        };
        if i == j {
            return Err(invalid("self loop"));
        }
        if i >= self.n_frames || j >= self.n_frames {
            return Err(invalid("frame index out of range"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(invalid("confidence outside [0, 1]"));
        }
        let (key, transform) = if i < j {
            ((i, j), transform)
        } else {
            ((j, i), transform.inverse())
        };
        self.edges.insert(
            key,
            PoseEdge {
                transform,
                confidence,
            },
        );
        Ok(())
    }

    /// Edge in the requested direction, derived from the stored one.
    pub fn edge(&self, i: usize, j: usize) -> Option<PoseEdge> {
        if i < j {
            self.edges.get(&(i, j)).copied()
        } else {
            self.edges.get(&(j, i)).map(|e| PoseEdge {
                transform: e.transform.inverse(),
                confidence: e.confidence,
            })
        }
    }

    pub fn confidence(&self, i: usize, j: usize) -> f64 {
        self.edge(i, j).map_or(0.0, |e| e.confidence)
    }

    /// Stored edges, `i < j`, in key order.
    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), &PoseEdge)> {
        self.edges.iter().map(|(k, e)| (*k, e))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_adjacency_chain(&self) -> bool {
        (0..self.n_frames.saturating_sub(1)).all(|i| self.edges.contains_key(&(i, i + 1)))
    }

    /// `c_i`: confidence mass of all edges incident to `i`.
    pub fn degree(&self, i: usize) -> f64 {
        (0..self.n_frames)
            .filter(|&k| k != i)
            .map(|k| self.confidence(i, k))
            .sum()
    }

    fn check_size(&self) -> Result<(), SyncError> {
        if self.n_frames < 2 {
            return Err(SyncError::TooFewFrames(self.n_frames));
        }
        Ok(())
    }

    /// First frame not reachable from frame 0 over positive-confidence edges.
    fn unreachable_frame(&self) -> Option<usize> {
        let mut seen = vec![false; self.n_frames];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for k in 0..self.n_frames {
                if !seen[k] && self.confidence(i, k) > 0.0 {
                    seen[k] = true;
                    queue.push_back(k);
                }
            }
        }
        seen.iter().position(|s| !s)
    }
}

/// Synchronized world-to-camera poses with frame 0 pinned to the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncResult {
    pub world_to_camera: Vec<RigidTransform>,
    /// Number of squarings (zero for the non-iterative backends).
    pub iterations: usize,
}

/// Mean match weight, 0 for an empty set.
pub fn pairwise_confidence(corr: &CorrespondenceSet) -> f64 {
    if corr.is_empty() {
        return 0.0;
    }
    corr.matches.iter().map(|m| m.weight).sum::<f64>() / corr.len() as f64
}

/// Thresholds non-adjacent confidences at `gamma` and stretches the rest
/// back onto `[0, 1]`. Adjacent pairs pass through.
pub fn rescale_confidence(c_hat: f64, adjacent: bool, gamma: f64) -> f64 {
    if adjacent {
        c_hat
    } else {
        (c_hat - gamma).max(0.0) / (1.0 - gamma)
    }
}

/// `N x N` grid of scaled transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    n: usize,
    blocks: Vec<ScaledTransform>,
}

impl BlockMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block(&self, i: usize, j: usize) -> &ScaledTransform {
        &self.blocks[i * self.n + j]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(4 * self.n, 4 * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.fixed_view_mut::<4, 4>(4 * i, 4 * j)
                    .copy_from(self.block(i, j).matrix());
            }
        }
        m
    }
}

pub fn build_block_matrix(graph: &PoseGraph) -> Result<BlockMatrix, SyncError> {
    let n = graph.n_frames;
    let mut blocks = vec![ScaledTransform::zero(); n * n];
    for i in 0..n {
        let degree = graph.degree(i);
        if !(degree > 0.0) {
            return Err(SyncError::DisconnectedGraph { frame: i });
        }
        blocks[i * n + i] = ScaledTransform::scaled_identity(degree);
    }
    for (&(i, j), e) in &graph.edges {
        // Zero-confidence edges stay exact zero blocks.
        if e.confidence > 0.0 {
            blocks[i * n + j] = ScaledTransform::from_rigid(&e.transform, e.confidence);
            blocks[j * n + i] = ScaledTransform::from_rigid(&e.transform.inverse(), e.confidence);
        }
    }
    Ok(BlockMatrix { n, blocks })
}

/// Squarings used by [`synchronize_power`]: `ceil(log2 n) + 2`.
pub fn power_iterations(n: usize) -> usize {
    let ceil_log2 = if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    };
    ceil_log2 + 2
}

/// Left-multiplies every pose by the inverse of the first, pinning frame 0
/// to the identity.
pub fn gauge_fix(mut poses: Vec<RigidTransform>) -> Vec<RigidTransform> {
    if poses.is_empty() {
        return poses;
    }
    let g = poses[0].inverse();
    for p in poses.iter_mut().skip(1) {
        *p = g.compose(p);
    }
    poses[0] = RigidTransform::identity();
    poses
}

pub fn synchronize_power(graph: &PoseGraph) -> Result<SyncResult, SyncError> {
    graph.check_size()?;
    let a = build_block_matrix(graph)?;
    let n = a.n;
    let mut m = a.to_dense();
    // Row sums are 2 c_i because the diagonal repeats the off-diagonal mass.
    for i in 0..n {
        let row_mass = 2.0 * a.block(i, i).scale();
        m.rows_mut(4 * i, 4).scale_mut(1.0 / row_mass);
    }
    let t = power_iterations(n);
    for _ in 1..t {
        m = &m * &m;
    }
    // The last squaring is only needed for the first block row.
    let first_row = m.rows(0, 4) * &m;

    let mut poses = Vec::with_capacity(n);
    for j in 0..n {
        let block: Matrix4<f64> = first_row.fixed_view::<4, 4>(0, 4 * j).into_owned();
        let scale = block[(3, 3)];
        if !(scale >= COLLAPSE_THRESHOLD) {
            return Err(SyncError::SynchronizationCollapse { frame: j, scale });
        }
        // Block (0, j) estimates camera 0 -> camera j.
        poses.push(ScaledTransform::from_matrix(block).project_to_se3()?);
    }
    Ok(SyncResult {
        world_to_camera: gauge_fix(poses),
        iterations: t,
    })
}

/// Spectral baseline: top-3 eigenvectors of the rotation blocks, then
/// translations by weighted linear least squares on
/// `c_ij |t_j - t_i R_ij - t_ij|^2` with `t_0 = 0`.
pub fn synchronize_eig(graph: &PoseGraph) -> Result<SyncResult, SyncError> {
    graph.check_size()?;
    let n = graph.n_frames;
    for i in 0..n {
        if !(graph.degree(i) > 0.0) {
            return Err(SyncError::DisconnectedGraph { frame: i });
        }
    }
    if let Some(frame) = graph.unreachable_frame() {
        return Err(SyncError::SynchronizationCollapse { frame, scale: 0.0 });
    }

    let mut a_rot = DMatrix::<f64>::zeros(3 * n, 3 * n);
    for i in 0..n {
        a_rot
            .fixed_view_mut::<3, 3>(3 * i, 3 * i)
            .copy_from(&(Matrix3::identity() * graph.degree(i)));
    }
    for (&(i, j), e) in &graph.edges {
        if e.confidence > 0.0 {
            let r = e.transform.rotation() * e.confidence;
            a_rot.fixed_view_mut::<3, 3>(3 * i, 3 * j).copy_from(&r);
            a_rot
                .fixed_view_mut::<3, 3>(3 * j, 3 * i)
                .copy_from(&r.transpose());
        }
    }
    let eig = a_rot.symmetric_eigen();
    let mut order: Vec<usize> = (0..3 * n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut basis = DMatrix::<f64>::zeros(3 * n, 3);
    for (c, &k) in order.iter().take(3).enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(k));
    }
    let det_sum: f64 = (0..n)
        .map(|i| {
            basis
                .fixed_view::<3, 3>(3 * i, 0)
                .into_owned()
                .determinant()
        })
        .sum();
    if det_sum < 0.0 {
        basis.neg_mut();
    }
    // Block i is proportional to R_i^T Q for a common Q.
    let mut rotations = Vec::with_capacity(n);
    for i in 0..n {
        let u_i: Matrix3<f64> = basis.fixed_view::<3, 3>(3 * i, 0).into_owned();
        rotations.push(nearest_rotation(&u_i)?.transpose());
    }
    let r0_t = rotations[0].transpose();
    for r in rotations.iter_mut() {
        *r = r0_t * *r;
    }

    // Normal equations over t_1..t_{N-1}.
    let dim = 3 * (n - 1);
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    for (&(i, j), e) in &graph.edges {
        let c = e.confidence;
        if c <= 0.0 {
            continue;
        }
        let r = e.transform.rotation();
        let t_ij = e.transform.translation();
        let identity = Matrix3::identity() * c;
        if j > 0 {
            let oj = 3 * (j - 1);
            add_block(&mut h, oj, oj, &identity);
            let mut bj = b.fixed_rows_mut::<3>(oj);
            bj += t_ij * c;
        }
        if i > 0 {
            let oi = 3 * (i - 1);
            add_block(&mut h, oi, oi, &identity);
            let mut bi = b.fixed_rows_mut::<3>(oi);
            bi -= r * t_ij * c;
        }
        if i > 0 && j > 0 {
            let (oi, oj) = (3 * (i - 1), 3 * (j - 1));
            add_block(&mut h, oi, oj, &(-r * c));
            add_block(&mut h, oj, oi, &(-r.transpose() * c));
        }
    }
    let solution =
        h.cholesky()
            .map(|ch| ch.solve(&b))
            .ok_or(SyncError::SynchronizationCollapse {
                frame: 1,
                scale: 0.0,
            })?;

    let mut poses = Vec::with_capacity(n);
    poses.push(RigidTransform::identity());
    for i in 1..n {
        let t = solution.fixed_rows::<3>(3 * (i - 1)).into_owned();
        poses.push(RigidTransform::from_parts_unchecked(rotations[i], t));
    }
    Ok(SyncResult {
        world_to_camera: poses,
        iterations: 0,
    })
}

fn add_block(h: &mut DMatrix<f64>, row: usize, col: usize, block: &Matrix3<f64>) {
    let mut view = h.fixed_view_mut::<3, 3>(row, col);
    view += block;
}

/// Chains adjacent edges: `T_{i+1} = T_i * T_{i,i+1}` from `T_0 = I`.
pub fn synchronize_naive(graph: &PoseGraph) -> Result<SyncResult, SyncError> {
    graph.check_size()?;
    let mut poses = Vec::with_capacity(graph.n_frames);
    poses.push(RigidTransform::identity());
    for i in 0..graph.n_frames - 1 {
        let edge = graph
            .edges
            .get(&(i, i + 1))
            .ok_or(SyncError::DisconnectedGraph { frame: i + 1 })?;
        let next = poses[i].compose(&edge.transform);
        poses.push(next);
    }
    Ok(SyncResult {
        world_to_camera: poses,
        iterations: 0,
    })
}
