//! Rigid transforms, the scaled-SE(3) cone, and pinhole depth backprojection.
//!
//! Transforms use the row-vector homogeneous convention: a point is the row
//! `(x, y, z, 1)` and a transform acts by right multiplication,
//!
//! ```text
//!            | R  0 |
//! x' = x  *  |      |   =>  x' = x R + t
//!            | t  1 |
//! ```
//!
//! so `compose(a, b)` is the matrix product `a * b` and applies `a` first.
//! Column-vector callers convert at the boundary with [`RigidTransform::from_column_form`].

use std::ops::{Add, Mul};

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when validating that a rotation block is orthonormal.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Smallest singular value accepted by the SO(3) projection.
pub const MIN_SINGULAR_VALUE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation block is not orthonormal with determinant +1 (deviation {deviation:e})")]
    NotARotation { deviation: f64 },
    #[error("scaled transform has non-positive scale {scale}")]
    DegenerateScale { scale: f64 },
    #[error("rotation block is rank deficient (smallest singular value {singular_value:e})")]
    AmbiguousProjection { singular_value: f64 },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("depth map has a non-finite value at pixel ({u}, {v})")]
    NonFiniteDepth { u: usize, v: usize },
    #[error("depth map holds {got} values, expected {expected}")]
    DepthSizeMismatch { expected: usize, got: usize },
    #[error("depth map is {depth_width}x{depth_height} but intrinsics describe {width}x{height}")]
    DimensionMismatch {
        depth_width: usize,
        depth_height: usize,
        width: usize,
        height: usize,
    },
    #[error("backprojection stride must be at least 1")]
    InvalidStride,
    #[error("depth map has no valid pixels on the sampling grid")]
    EmptyPointcloud,
}

/// An element of SE(3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Builds a transform from a row-convention rotation block and translation row.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let deviation = rotation_deviation(&rotation);
        if !(deviation <= ROTATION_TOLERANCE) {
            return Err(GeometryError::NotARotation { deviation });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation block given as an axis-angle vector (radians); the block is
    /// the matrix that right-multiplies row vectors.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: Rotation3::new(axis_angle).into_inner(),
            translation,
        }
    }

    /// Converts from the column-vector form `x' = R x + t`.
    pub fn from_column_form(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        Self::new(rotation.transpose(), translation)
    }

    /// Projects an arbitrary 4x4 matrix in the row layout onto SE(3).
    ///
    /// The bottom-right entry is treated as the scale and divided out.
    pub fn from_matrix(matrix: &Matrix4<f64>) -> Result<Self, GeometryError> {
        ScaledTransform::from_matrix(*matrix).project_to_se3()
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Rotation block in the row-vector convention.
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// Translation row.
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// The 4x4 matrix `[[R, 0], [t, 1]]`.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<1, 3>(3, 0)
            .copy_from(&self.translation.transpose());
        m[(3, 3)] = 1.0;
        m
    }

    /// `x * T` for a point `x`.
    pub fn transform_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.tr_mul(point) + self.translation
    }

    /// Applies `self`, then `other`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: other.rotation.tr_mul(&self.translation) + other.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.transpose(),
            translation: -(self.rotation * self.translation),
        }
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// Angle of the relative rotation between `self` and `other`, radians.
    pub fn rotation_distance(&self, other: &RigidTransform) -> f64 {
        rotation_angle(&(self.rotation.transpose() * other.rotation))
    }

    pub fn translation_distance(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Largest elementwise difference between the two 4x4 matrices.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        (self.to_matrix() - other.to_matrix()).abs().max()
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

/// Free-function form of [`RigidTransform::compose`].
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

/// Frobenius distance of `R^T R` from the identity, or infinity when the
/// determinant is not positive.
pub fn rotation_deviation(rotation: &Matrix3<f64>) -> f64 {
    if !(rotation.determinant() > 0.0) {
        return f64::INFINITY;
    }
    (rotation.transpose() * rotation - Matrix3::identity())
        .abs()
        .max()
}

/// Angle of a rotation in radians, accurate near zero and near pi.
pub fn rotation_angle(rotation: &Matrix3<f64>) -> f64 {
    let cos = (rotation.trace() - 1.0) / 2.0;
    let skew = rotation - rotation.transpose();
    let sin = Vector3::new(skew[(2, 1)], skew[(0, 2)], skew[(1, 0)]).norm() / 2.0;
    sin.atan2(cos)
}

/// Nearest rotation to `m` in Frobenius norm.
///
/// If the plain SVD product is a reflection, the direction of the smallest
/// singular value is flipped.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Result<Matrix3<f64>, GeometryError> {
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => {
            return Err(GeometryError::AmbiguousProjection {
                singular_value: f64::NAN,
            })
        }
    };
    let sv = svd.singular_values;
    let min_idx = sv.imin();
    if !(sv[min_idx] >= MIN_SINGULAR_VALUE) {
        return Err(GeometryError::AmbiguousProjection {
            singular_value: sv[min_idx],
        });
    }
    let mut d = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        d[min_idx] = -1.0;
    }
    Ok(u * Matrix3::from_diagonal(&d) * v_t)
}

/// Element of the cone `alpha * [[R, 0], [t, 1]]` with `alpha >= 0` and `R`
/// an arbitrary 3x3 block.
///
/// Closed under addition, multiplication, and nonnegative scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledTransform {
    matrix: Matrix4<f64>,
}

impl ScaledTransform {
    pub fn zero() -> Self {
        Self {
            matrix: Matrix4::zeros(),
        }
    }

    pub fn from_rigid(transform: &RigidTransform, scale: f64) -> Self {
        Self {
            matrix: transform.to_matrix() * scale,
        }
    }

    /// `scale * I_4`.
    pub fn scaled_identity(scale: f64) -> Self {
        Self {
            matrix: Matrix4::identity() * scale,
        }
    }

    /// Wraps a raw 4x4 matrix. The last column is taken as is; use
    /// [`ScaledTransform::is_structurally_valid`] to check membership.
    pub fn from_matrix(matrix: Matrix4<f64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn scale(&self) -> f64 {
        self.matrix[(3, 3)]
    }

    /// Last column equals `(0, 0, 0, alpha)` with `alpha >= 0`.
    pub fn is_structurally_valid(&self) -> bool {
        self.matrix[(0, 3)] == 0.0
            && self.matrix[(1, 3)] == 0.0
            && self.matrix[(2, 3)] == 0.0
            && self.scale() >= 0.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: self.matrix * factor,
        }
    }

    /// Divides out the scale and projects the rotation block onto SO(3).
    pub fn project_to_se3(&self) -> Result<RigidTransform, GeometryError> {
        let scale = self.scale();
        if !(scale > 0.0) {
            return Err(GeometryError::DegenerateScale { scale });
        }
        let block: Matrix3<f64> = self.matrix.fixed_view::<3, 3>(0, 0) / scale;
        let rotation = nearest_rotation(&block)?;
        let translation: Vector3<f64> = self.matrix.fixed_view::<1, 3>(3, 0).transpose() / scale;
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }
}

impl Add for ScaledTransform {
    type Output = ScaledTransform;

    fn add(self, rhs: ScaledTransform) -> ScaledTransform {
        ScaledTransform {
            matrix: self.matrix + rhs.matrix,
        }
    }
}

impl Mul for ScaledTransform {
    type Output = ScaledTransform;

    fn mul(self, rhs: ScaledTransform) -> ScaledTransform {
        ScaledTransform {
            matrix: self.matrix * rhs.matrix,
        }
    }
}

pub fn project_to_se3(m: &ScaledTransform) -> Result<RigidTransform, GeometryError> {
    m.project_to_se3()
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64)
            || !(self.cy >= 0.0 && self.cy < self.height as f64)
        {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside a {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Pixel coordinates of a camera-frame point, `None` behind the camera.
    pub fn project(&self, point: &Vector3<f64>) -> Option<Vector2<f64>> {
        if point.z <= 0.0 {
            return None;
        }
        Some(Vector2::new(
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        ))
    }

    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        Vector3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        )
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x <= (self.width - 1) as f64
            && pixel.y <= (self.height - 1) as f64
    }
}

/// Row-major depth image in meters. Depth `<= 0` marks a missing pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, GeometryError> {
        if values.len() != width * height {
            return Err(GeometryError::DepthSizeMismatch {
                expected: width * height,
                got: values.len(),
            });
        }
        if let Some(idx) = values.iter().position(|d| !d.is_finite()) {
            return Err(GeometryError::NonFiniteDepth {
                u: idx % width,
                v: idx / width,
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// All-missing map.
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.values[v * self.width + u]
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.get(u, v) > 0.0
    }

    pub fn set(&mut self, u: usize, v: usize, depth: f32) {
        assert!(depth.is_finite(), "depth must be finite");
        self.values[v * self.width + u] = depth;
    }
}

/// A valid pixel on the sampling grid and its camera-frame point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackprojectedPoint {
    pub pixel: (usize, usize),
    pub point: Vector3<f64>,
}

/// Default sampling stride, a quarter-resolution grid.
pub const DEFAULT_STRIDE: usize = 4;

/// Lifts every valid pixel on a `stride` grid to a camera-frame point.
pub fn backproject(
    depth: &DepthMap,
    intrinsics: &CameraIntrinsics,
    stride: usize,
) -> Result<Vec<BackprojectedPoint>, GeometryError> {
    if stride == 0 {
        return Err(GeometryError::InvalidStride);
    }
    if depth.width != intrinsics.width || depth.height != intrinsics.height {
        return Err(GeometryError::DimensionMismatch {
            depth_width: depth.width,
            depth_height: depth.height,
            width: intrinsics.width,
            height: intrinsics.height,
        });
    }
    let mut out = Vec::new();
    for v in (0..depth.height).step_by(stride) {
        for u in (0..depth.width).step_by(stride) {
            let d = depth.get(u, v);
            if d > 0.0 {
                out.push(BackprojectedPoint {
                    pixel: (u, v),
                    point: intrinsics.unproject(u as f64, v as f64, d as f64),
                });
            }
        }
    }
    if out.is_empty() {
        return Err(GeometryError::EmptyPointcloud);
    }
    Ok(out)
}

/// Z-buffer render of world points into a depth map. Each point lands on
/// its nearest pixel; the closest point wins.
pub fn render_depth(
    points: &[Vector3<f64>],
    world_to_camera: &RigidTransform,
    intrinsics: &CameraIntrinsics,
) -> DepthMap {
    let mut depth = DepthMap::empty(intrinsics.width, intrinsics.height);
    for p in points {
        let pc = world_to_camera.transform_point(p);
        let Some(px) = intrinsics.project(&pc) else {
            continue;
        };
        let (u, v) = (px.x.round(), px.y.round());
        if u < 0.0 || v < 0.0 || u >= intrinsics.width as f64 || v >= intrinsics.height as f64 {
            continue;
        }
        let (u, v) = (u as usize, v as usize);
        let z = pc.z as f32;
        let current = depth.get(u, v);
        if current <= 0.0 || z < current {
            depth.set(u, v, z);
        }
    }
    depth
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut impl Rng) -> RigidTransform {
        let w = Vector3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        );
        let t = Vector3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        RigidTransform::from_axis_angle(w, t)
    }

    fn row_apply(p: &Vector3<f64>, m: &Matrix4<f64>) -> Vector3<f64> {
        let row = nalgebra::RowVector4::new(p.x, p.y, p.z, 1.0) * m;
        Vector3::new(row[0] / row[3], row[1] / row[3], row[2] / row[3])
    }

    #[test]
    fn identity_compose() {
        let i = RigidTransform::identity();
        assert_eq!(compose(&i, &i), i);
    }

    #[test]
    fn transform_point_matches_row_multiplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_transform(&mut rng);
        let p = Vector3::new(0.3, -1.2, 2.0);
        assert_abs_diff_eq!(
            t.transform_point(&p),
            row_apply(&p, &t.to_matrix()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn compose_applies_left_operand_first_on_100_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_transform(&mut rng);
        let b = random_transform(&mut rng);
        let ab = a.to_matrix() * b.to_matrix();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let p = Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let via_product = row_apply(&p, &ab);
            let sequential = row_apply(&row_apply(&p, &a.to_matrix()), &b.to_matrix());
            let composed = a.compose(&b).transform_point(&p);
            worst = worst
                .max((via_product - sequential).norm())
                .max((composed - sequential).norm());
        }
        assert!(worst < 1e-9, "max deviation {worst}");
    }

    #[test]
    fn new_rejects_reflections() {
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            RigidTransform::new(reflection, Vector3::zeros()),
            Err(GeometryError::NotARotation { .. })
        ));
    }

    #[test]
    fn projection_cancels_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_transform(&mut rng);
        let m = ScaledTransform::from_rigid(&t, 2.5);
        let p = m.project_to_se3().unwrap();
        assert!(p.max_abs_diff(&t) < 1e-12);
    }

    #[test]
    fn projection_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_transform(&mut rng);
        let p = ScaledTransform::from_rigid(&t, 1.0)
            .project_to_se3()
            .unwrap();
        assert!(p.max_abs_diff(&t) < 1e-14);
    }

    #[test]
    fn projection_errors() {
        assert!(matches!(
            ScaledTransform::zero().project_to_se3(),
            Err(GeometryError::DegenerateScale { .. })
        ));
        let mut m = Matrix4::identity();
        m[(2, 2)] = 0.0;
        assert!(matches!(
            ScaledTransform::from_matrix(m).project_to_se3(),
            Err(GeometryError::AmbiguousProjection { .. })
        ));
    }

    #[test]
    fn projection_guards_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 0.5, -0.1));
        let r = nearest_rotation(&m).unwrap();
        assert!(rotation_deviation(&r) < 1e-12);
        assert_abs_diff_eq!(r, Matrix3::identity(), epsilon = 1e-12);
    }

    /// Local search around the SVD answer: no sampled rotation nearby is closer
    /// to the perturbed block.
    #[test]
    fn projection_is_local_frobenius_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let t = random_transform(&mut rng);
            let noisy = t.rotation() + Matrix3::from_fn(|_, _| rng.random_range(-0.01..0.01));
            let r = nearest_rotation(&noisy).unwrap();
            let best = (r - noisy).norm();
            for _ in 0..2000 {
                let scale = 10f64.powf(rng.random_range(-4.0..-1.0));
                let w = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ) * scale;
                let candidate = r * Rotation3::new(w).into_inner();
                assert!((candidate - noisy).norm() >= best - 1e-15);
            }
        }
    }

    #[test]
    fn scaled_cone_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = ScaledTransform::from_rigid(&random_transform(&mut rng), 0.7);
        let b = ScaledTransform::from_rigid(&random_transform(&mut rng), 1.9);
        assert!((a + b).is_structurally_valid());
        assert!((a * b).is_structurally_valid());
        assert!(a.scaled(3.0).is_structurally_valid());
        assert_abs_diff_eq!((a * b).scale(), 0.7 * 1.9, epsilon = 1e-12);
    }

    #[test]
    fn backproject_principal_point() {
        let k = CameraIntrinsics::new(500.0, 500.0, 4.0, 3.0, 8, 6).unwrap();
        let mut d = DepthMap::empty(8, 6);
        d.set(4, 3, 2.0);
        let pts = backproject(&d, &k, 1).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].pixel, (4, 3));
        assert_abs_diff_eq!(pts[0].point, Vector3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn backproject_pinhole_formula() {
        let k = CameraIntrinsics::new(100.0, 100.0, 0.0, 0.0, 64, 8).unwrap();
        let mut d = DepthMap::empty(64, 8);
        d.set(50, 0, 1.0);
        let pts = backproject(&d, &k, 1).unwrap();
        assert_abs_diff_eq!(pts[0].point, Vector3::new(0.5, 0.0, 1.0));
    }

    #[test]
    fn backproject_skips_missing_and_off_grid() {
        let k = CameraIntrinsics::new(100.0, 100.0, 4.0, 4.0, 8, 8).unwrap();
        let mut d = DepthMap::empty(8, 8);
        d.set(4, 4, 1.0);
        d.set(5, 4, 1.0);
        d.set(0, 0, -1.0);
        let pts = backproject(&d, &k, 4).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].pixel, (4, 4));
    }

    #[test]
    fn backproject_errors() {
        let k = CameraIntrinsics::new(100.0, 100.0, 4.0, 4.0, 8, 8).unwrap();
        assert_eq!(
            backproject(&DepthMap::empty(8, 8), &k, 1).unwrap_err(),
            GeometryError::EmptyPointcloud
        );
        assert_eq!(
            backproject(&DepthMap::empty(8, 8), &k, 0).unwrap_err(),
            GeometryError::InvalidStride
        );
        assert!(matches!(
            backproject(&DepthMap::empty(4, 8), &k, 1),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn depth_map_rejects_nan() {
        assert!(matches!(
            DepthMap::new(2, 1, vec![1.0, f32::NAN]),
            Err(GeometryError::NonFiniteDepth { u: 1, v: 0 })
        ));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 3.9, 4, 4).is_ok());
    }

    /// Points placed on stride-grid pixels survive render -> backproject ->
    /// camera-to-world, and reproject onto their pixels.
    #[test]
    fn render_backproject_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = CameraIntrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480).unwrap();
        let pose = random_transform(&mut rng);
        let mut world = Vec::new();
        for v in (0..480).step_by(4 * 7) {
            for u in (0..640).step_by(4 * 9) {
                let d = rng.random_range(0.5..6.0);
                let pc = k.unproject(u as f64, v as f64, d);
                world.push(pose.inverse().transform_point(&pc));
            }
        }
        let depth = render_depth(&world, &pose, &k);
        let pts = backproject(&depth, &k, DEFAULT_STRIDE).unwrap();
        assert_eq!(pts.len(), world.len());
        let cam_to_world = pose.inverse();
        for bp in &pts {
            let recovered = cam_to_world.transform_point(&bp.point);
            let nearest = world
                .iter()
                .map(|w| (w - recovered).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-6, "round trip error {nearest}");
            let px = k.project(&bp.point).unwrap();
            assert!((px - Vector2::new(bp.pixel.0 as f64, bp.pixel.1 as f64)).norm() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(
            wx in -3.0..3.0f64, wy in -3.0..3.0f64, wz in -3.0..3.0f64,
            tx in -10.0..10.0f64, ty in -10.0..10.0f64, tz in -10.0..10.0f64,
        ) {
            let t = RigidTransform::from_axis_angle(Vector3::new(wx, wy, wz), Vector3::new(tx, ty, tz));
            prop_assert!(t.compose(&t.inverse()).max_abs_diff(&RigidTransform::identity()) < 1e-9);
            prop_assert!(t.inverse().compose(&t).max_abs_diff(&RigidTransform::identity()) < 1e-9);
        }

        #[test]
        fn compositions_stay_in_so3(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut acc = RigidTransform::identity();
            for _ in 0..50 {
                acc = acc.compose(&random_transform(&mut rng));
            }
            prop_assert!(rotation_deviation(acc.rotation()) < 1e-9);
        }
    }
}
