//! Software rendering of meshes into distance maps, and the visibility masks
//! used by the visible-surface discrepancy.
//!
//! A sample is covered iff its center lies inside a projected triangle; edges
//! shared by two triangles follow the top-left convention so every sample is
//! owned by exactly one of them. Back faces are not culled. The stored value is
//! the exact distance from the camera center to the intersection of the
//! sample's viewing ray with the triangle plane.

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DistanceMap, RigidPose, TriangleMesh, Vec2, Vec3};

pub const DEFAULT_VISIBILITY_TOLERANCE: f64 = 15.0;

/// Triangles with a vertex closer than this to the camera plane are skipped.
const NEAR_PLANE: f64 = 1e-3;

/// Boolean per-pixel mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }
}

/// Positions at which a render is sampled: sample `(i, j)` looks through the
/// pixel coordinate `(i * stride + offset, j * stride + offset)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrid {
    pub width: usize,
    pub height: usize,
    pub stride: f64,
    pub offset: f64,
}

impl SampleGrid {
    /// One sample per image pixel.
    pub fn full(cam: &CameraIntrinsics) -> Self {
        Self { width: cam.width, height: cam.height, stride: 1.0, offset: 0.0 }
    }

    /// One sample at the center of every `stride x stride` block.
    pub fn strided(cam: &CameraIntrinsics, stride: usize) -> Self {
        Self {
            width: cam.width.div_ceil(stride),
            height: cam.height.div_ceil(stride),
            stride: stride as f64,
            offset: (stride as f64 - 1.0) / 2.0,
        }
    }

    pub fn pixel(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(i as f64 * self.stride + self.offset, j as f64 * self.stride + self.offset)
    }
}

/// Full render output: distance, winning triangle and the model-space surface
/// point per sample.
#[derive(Debug, Clone)]
pub struct Raster {
    pub grid: SampleGrid,
    pub distance: Vec<f64>,
    pub triangle: Vec<Option<u32>>,
    pub model_point: Vec<Vec3>,
}

impl Raster {
    pub fn into_distance_map(self) -> DistanceMap {
        DistanceMap { width: self.grid.width, height: self.grid.height, data: self.distance }
    }
}

#[inline]
fn edge(a: &Vec2, b: &Vec2, p: &Vec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

#[inline]
fn is_top_left(a: &Vec2, b: &Vec2) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

#[inline]
fn inside(e: f64, top_left: bool) -> bool {
    e > 0.0 || (e == 0.0 && top_left)
}

/// Renders `mesh` seen in `pose` at the samples of `grid`.
pub fn rasterize(mesh: &TriangleMesh, pose: &RigidPose, cam: &CameraIntrinsics, grid: SampleGrid) -> Raster {
    let n = grid.width * grid.height;
    let mut raster = Raster {
        grid,
        distance: vec![0.0; n],
        triangle: vec![None; n],
        model_point: vec![Vec3::zeros(); n],
    };
    let mut depth = vec![f64::INFINITY; n];
    let cam_pts: Vec<Vec3> = mesh.vertices.iter().map(|v| pose.transform(v)).collect();
    let inv = pose.inverse();

    for (ti, tri) in mesh.triangles.iter().enumerate() {
        let p = [cam_pts[tri[0]], cam_pts[tri[1]], cam_pts[tri[2]]];
        if p.iter().any(|q| q.z < NEAR_PLANE) {
            continue;
        }
        // Projected vertices in sample-index space.
        let mut s = p.map(|q| {
            let u = cam.fx * q.x / q.z + cam.cx;
            let v = cam.fy * q.y / q.z + cam.cy;
            Vec2::new((u - grid.offset) / grid.stride, (v - grid.offset) / grid.stride)
        });
        let area = edge(&s[0], &s[1], &s[2]);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        if area < 0.0 {
            s.swap(1, 2);
        }
        let tl = [is_top_left(&s[0], &s[1]), is_top_left(&s[1], &s[2]), is_top_left(&s[2], &s[0])];

        let min_x = s.iter().map(|q| q.x).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_x = s.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max).floor();
        let min_y = s.iter().map(|q| q.y).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_y = s.iter().map(|q| q.y).fold(f64::NEG_INFINITY, f64::max).floor();
        if max_x < 0.0 || max_y < 0.0 {
            continue;
        }
        let max_x = max_x.min(grid.width as f64 - 1.0);
        let max_y = max_y.min(grid.height as f64 - 1.0);
        if min_x > max_x || min_y > max_y {
            continue;
        }
        let normal = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let plane_d = normal.dot(&p[0]);

        for j in min_y as usize..=max_y as usize {
            for i in min_x as usize..=max_x as usize {
                let q = Vec2::new(i as f64, j as f64);
                if !(inside(edge(&s[0], &s[1], &q), tl[0])
                    && inside(edge(&s[1], &s[2], &q), tl[1])
                    && inside(edge(&s[2], &s[0], &q), tl[2]))
                {
                    continue;
                }
                let ray = cam.ray(&grid.pixel(i, j));
                let denom = normal.dot(&ray);
                if denom == 0.0 {
                    continue;
                }
                let z = plane_d / denom;
                let k = j * grid.width + i;
                if z > 0.0 && z < depth[k] {
                    depth[k] = z;
                    let hit = ray * z;
                    raster.distance[k] = hit.norm();
                    raster.triangle[k] = Some(ti as u32);
                    raster.model_point[k] = inv.transform(&hit);
                }
            }
        }
    }
    raster
}

/// Distance map of `mesh` in `pose`, one sample per image pixel.
pub fn render_distance_map(mesh: &TriangleMesh, pose: &RigidPose, cam: &CameraIntrinsics) -> DistanceMap {
    rasterize(mesh, pose, cam, SampleGrid::full(cam)).into_distance_map()
}

fn check_dims(maps: &[&DistanceMap]) -> Result<()> {
    let first = maps[0].dims();
    for m in &maps[1..] {
        if m.dims() != first {
            return Err(Error::DimensionMismatch { expected: first, actual: m.dims() });
        }
    }
    Ok(())
}

/// Visibility masks of the estimated (`est`) and ground-truth (`gt`)
/// renderings against the scene distance map, with tolerance `delta` (mm).
///
/// Returns `(V_est, V_gt)`. Pixels with unknown scene distance count as
/// visible; `V_est` also contains every covered pixel of `V_gt`.
pub fn visibility_masks(
    est: &DistanceMap,
    gt: &DistanceMap,
    scene: &DistanceMap,
    delta: f64,
) -> Result<(PixelMask, PixelMask)> {
    check_dims(&[est, gt, scene])?;
    let (w, h) = est.dims();
    let mut v_gt = PixelMask::new(w, h);
    let mut v_est = PixelMask::new(w, h);
    for k in 0..w * h {
        let di = scene.data[k];
        let dg = gt.data[k];
        v_gt.data[k] = dg > 0.0 && (dg - di <= delta || di == 0.0);
        let de = est.data[k];
        v_est.data[k] = de > 0.0 && (de - di <= delta || di == 0.0 || v_gt.data[k]);
    }
    Ok((v_est, v_gt))
}

/// Fraction of the projected surface that is visible.
pub fn visible_fraction(visible: &PixelMask, rendered: &DistanceMap) -> Result<f64> {
    if (visible.width, visible.height) != rendered.dims() {
        return Err(Error::DimensionMismatch {
            expected: rendered.dims(),
            actual: (visible.width, visible.height),
        });
    }
    let covered = rendered.covered_count();
    if covered == 0 {
        return Err(Error::EmptyProjection);
    }
    let visible = visible
        .data
        .iter()
        .zip(&rendered.data)
        .filter(|(&v, &d)| v && d > 0.0)
        .count();
    Ok(visible as f64 / covered as f64)
}
