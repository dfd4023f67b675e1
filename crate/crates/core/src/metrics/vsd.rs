//! Visible surface discrepancy.

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DistanceMap, RigidPose, TriangleMesh};
use crate::rasterizer::{render_distance_map, visibility_masks};

/// Misalignment tolerance of the 2017 protocol (mm).
pub const DEFAULT_VSD_TAU: f64 = 20.0;
/// Visibility tolerance (mm).
pub const DEFAULT_VSD_DELTA: f64 = 15.0;
/// Correctness threshold on `e_vsd` of the 2017 protocol.
pub const SISO_VSD_THETA: f64 = 0.3;

/// `e_vsd` from rendered distance maps, one value per entry of `taus`.
pub fn vsd_from_maps(
    est: &DistanceMap,
    gt: &DistanceMap,
    scene: &DistanceMap,
    taus: &[f64],
    delta: f64,
) -> Result<Vec<f64>> {
    let (v_est, v_gt) = visibility_masks(est, gt, scene, delta)?;
    let mut union = 0usize;
    let mut both = Vec::new();
    for k in 0..v_est.data.len() {
        let (a, b) = (v_est.data[k], v_gt.data[k]);
        if a || b {
            union += 1;
        }
        if a && b {
            both.push((est.data[k] - gt.data[k]).abs());
        }
    }
    if union == 0 {
        return Ok(vec![1.0; taus.len()]);
    }
    Ok(taus
        .iter()
        .map(|&tau| {
            let matched = both.iter().filter(|&&d| d < tau).count();
            (union - matched) as f64 / union as f64
        })
        .collect())
}

/// `e_vsd` for several tolerances `taus` with a single pair of renderings.
pub fn e_vsd_multi(
    est: &RigidPose,
    gt: &RigidPose,
    mesh: &TriangleMesh,
    cam: &CameraIntrinsics,
    scene: &DistanceMap,
    taus: &[f64],
    delta: f64,
) -> Result<Vec<f64>> {
    if scene.dims() != (cam.width, cam.height) {
        return Err(Error::DimensionMismatch { expected: (cam.width, cam.height), actual: scene.dims() });
    }
    let d_est = render_distance_map(mesh, est, cam);
    let d_gt = render_distance_map(mesh, gt, cam);
    vsd_from_maps(&d_est, &d_gt, scene, taus, delta)
}

/// Fraction of the visible surface union where the estimate is either not
/// visible in both renderings or off by at least `tau` (mm). `scene` holds the
/// test image distances (0 = unknown).
pub fn e_vsd(
    est: &RigidPose,
    gt: &RigidPose,
    mesh: &TriangleMesh,
    cam: &CameraIntrinsics,
    scene: &DistanceMap,
    tau: f64,
    delta: f64,
) -> Result<f64> {
    Ok(e_vsd_multi(est, gt, mesh, cam, scene, &[tau], delta)?[0])
}
