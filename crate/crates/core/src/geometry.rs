//! Rigid-body geometry, the pinhole camera and triangle meshes.
//!
//! Lengths are millimeters, image coordinates are pixels. Pixel `(i, j)` has
//! its center at the continuous coordinate `(i, j)`.

use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Model-to-camera rigid transform `x_cam = R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    /// Builds a pose, rejecting matrices that are not proper rotations within
    /// [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        Self::with_tolerance(rotation, translation, ROTATION_TOLERANCE)
    }

    pub fn with_tolerance(rotation: Mat3, translation: Vec3, tol: f64) -> Result<Self> {
        let gram = rotation.transpose() * rotation - Mat3::identity();
        if gram.iter().any(|v| v.abs() > tol || !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "rotation is not orthonormal (max deviation {:e})",
                gram.amax()
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > tol {
            return Err(Error::Invalid(format!("rotation determinant is {det}")));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("translation is not finite".into()));
        }
        Ok(Self { rotation, translation })
    }

    /// Builds a pose without validation. Callers guarantee a proper rotation.
    pub fn from_parts_unchecked(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    /// Rotation vector (axis times angle) parameterization.
    pub fn from_rotation_vector(omega: &Vec3, translation: Vec3) -> Self {
        Self {
            rotation: *Rotation3::new(*omega).matrix(),
            translation,
        }
    }

    pub fn transform(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidPose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Re-orthonormalizes the rotation (nearest proper rotation via SVD).
    pub fn orthonormalized(&self) -> Self {
        Self {
            rotation: nearest_rotation(&self.rotation),
            translation: self.translation,
        }
    }
}

/// Nearest proper rotation in the Frobenius sense.
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Mat3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]` (Kabsch).
/// `None` for fewer than three pairs or mismatched lengths.
pub fn absolute_orientation(src: &[Vec3], dst: &[Vec3]) -> Option<RigidPose> {
    if src.len() != dst.len() || src.len() < 3 {
        return None;
    }
    let cs = vertex_centroid(src);
    let cd = vertex_centroid(dst);
    let mut h = Mat3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let v = v_t.transpose();
    let mut d = Mat3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    Some(RigidPose { rotation, translation: cd - rotation * cs })
}

/// Applies `pose` to `x`.
pub fn transform_point(x: &Vec3, pose: &RigidPose) -> Vec3 {
    pose.transform(x)
}

/// Pinhole intrinsics without distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Invalid(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::Invalid(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Projects a point given in camera coordinates.
    pub fn project_camera_point(&self, p: &Vec3) -> Result<Vec2> {
        if p.z <= 0.0 {
            return Err(Error::NonPositiveDepth(p.z));
        }
        Ok(Vec2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Camera-frame point at depth `z` seen at pixel `uv`.
    pub fn back_project(&self, uv: &Vec2, z: f64) -> Vec3 {
        Vec3::new((uv.x - self.cx) / self.fx * z, (uv.y - self.cy) / self.fy * z, z)
    }

    /// Ray direction through `uv` with unit Z component.
    pub fn ray(&self, uv: &Vec2) -> Vec3 {
        Vec3::new((uv.x - self.cx) / self.fx, (uv.y - self.cy) / self.fy, 1.0)
    }

    pub fn k_matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// Projects model point `x` seen in `pose` through `cam`.
pub fn project(x: &Vec3, pose: &RigidPose, cam: &CameraIntrinsics) -> Result<Vec2> {
    cam.project_camera_point(&pose.transform(x))
}

/// Indexed triangle mesh in millimeters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub normals: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self { vertices, triangles, normals: None };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(bad) = self.triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::DegenerateMesh(format!(
                "triangle {bad:?} references a vertex beyond {n}"
            )));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::DegenerateMesh(format!(
                    "{} normals for {} vertices",
                    normals.len(),
                    n
                )));
            }
        }
        Ok(())
    }

    pub fn centroid(&self) -> Vec3 {
        vertex_centroid(&self.vertices)
    }

    pub fn transformed(&self, pose: &RigidPose) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| pose.transform(v)).collect(),
            triangles: self.triangles.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| pose.rotation * n).collect()),
        }
    }

    /// Axis-aligned bounding box `(min, max)`; `None` for an empty mesh.
    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        bounding_box(&self.vertices)
    }
}

pub fn vertex_centroid(points: &[Vec3]) -> Vec3 {
    if points.is_empty() {
        return Vec3::zeros();
    }
    points.iter().sum::<Vec3>() / points.len() as f64
}

pub fn bounding_box(points: &[Vec3]) -> Option<(Vec3, Vec3)> {
    let first = points.first()?;
    Some(points.iter().fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
}

/// Largest distance between two vertices of `mesh`.
///
/// Exact. Pairs are visited in decreasing order of their distance bound
/// `|a - c| + |b - c|` around the centroid `c`, so the scan stops as soon as no
/// remaining pair can beat the current maximum.
pub fn mesh_diameter(mesh: &TriangleMesh) -> Result<f64> {
    point_set_diameter(&mesh.vertices)
}

pub fn point_set_diameter(points: &[Vec3]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::DegenerateMesh(format!(
            "diameter needs at least 2 vertices, got {}",
            points.len()
        )));
    }
    let c = vertex_centroid(points);
    let mut order: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| ((p - c).norm(), i)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut best_sq = 0.0f64;
    for (ii, &(ri, i)) in order.iter().enumerate() {
        // Every later pair has bound <= 2 * ri.
        if 2.0 * ri <= best_sq.sqrt() {
            break;
        }
        for &(rj, j) in &order[ii + 1..] {
            if ri + rj <= best_sq.sqrt() {
                break;
            }
            let d = (points[i] - points[j]).norm_squared();
            if d > best_sq {
                best_sq = d;
            }
        }
    }
    Ok(best_sq.sqrt())
}

/// Per-pixel Z-depth map, row-major, zero meaning "no data".
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Invalid(format!(
                "{} values for a {width}x{height} map",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }
}

/// Per-pixel distance from the camera center to the surface (mm), row-major.
/// Zero means no surface / missing measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DistanceMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Invalid(format!(
                "{} values for a {width}x{height} map",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Invalid(format!("distance {v} is not a finite non-negative value")));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn covered_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0.0).count()
    }
}

/// Converts a Z-depth map to a camera-center distance map.
pub fn depth_to_distance(depth: &DepthMap, cam: &CameraIntrinsics) -> Result<DistanceMap> {
    if (depth.width, depth.height) != (cam.width, cam.height) {
        return Err(Error::DimensionMismatch {
            expected: (cam.width, cam.height),
            actual: (depth.width, depth.height),
        });
    }
    let mut data = Vec::with_capacity(depth.data.len());
    for v in 0..depth.height {
        let y = (v as f64 - cam.cy) / cam.fy;
        for u in 0..depth.width {
            let z = depth.data[v * depth.width + u];
            let x = (u as f64 - cam.cx) / cam.fx;
            data.push(if z == 0.0 { 0.0 } else { z * (x * x + y * y + 1.0).sqrt() });
        }
    }
    Ok(DistanceMap { width: depth.width, height: depth.height, data })
}

/// Rotation angle between two rotation matrices, in radians. Uses
/// `atan2(sin, cos)` so small and near-half-turn angles stay accurate.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    let m = a * b.transpose();
    let cos = (m.trace() - 1.0) / 2.0;
    let sin = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm() / 2.0;
    sin.atan2(cos)
}
