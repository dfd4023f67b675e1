use nalgebra::{SMatrix, SVector};

use super::{reprojection_error, Correspondence};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidPose, Vec3};

const MAX_ITERATIONS: usize = 50;
const RELATIVE_TOLERANCE: f64 = 1e-9;

type Mat6 = SMatrix<f64, 6, 6>;
type Vec6 = SVector<f64, 6>;

/// Sum of squared re-projection errors; infinite if any point is behind the camera.
pub fn reprojection_cost(pose: &RigidPose, corrs: &[Correspondence], cam: &CameraIntrinsics) -> f64 {
    corrs
        .iter()
        .map(|c| {
            let e = reprojection_error(c, pose, cam);
            e * e
        })
        .sum()
}

fn apply_update(pose: &RigidPose, delta: &Vec6) -> RigidPose {
    let omega = Vec3::new(delta[0], delta[1], delta[2]);
    let dr = RigidPose::from_rotation_vector(&omega, Vec3::zeros()).rotation;
    RigidPose::from_parts_unchecked(dr * pose.rotation, pose.translation + Vec3::new(delta[3], delta[4], delta[5]))
        .orthonormalized()
}

/// Levenberg-Marquardt minimization of the squared re-projection error over
/// the pose, with a left-multiplied rotation-vector update. Never returns a
/// pose with a higher cost than the input.
pub fn lm_refine(pose: &RigidPose, corrs: &[Correspondence], cam: &CameraIntrinsics) -> Result<RigidPose> {
    if corrs.len() < 3 {
        return Err(Error::TooFewPoints { required: 3, available: corrs.len() });
    }
    let mut current = *pose;
    let mut cost = reprojection_cost(&current, corrs, cam);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        if cost == 0.0 {
            break;
        }
        let mut jtj = Mat6::zeros();
        let mut jtr = Vec6::zeros();
        for c in corrs {
            let rx = current.rotation * c.point;
            let p = rx + current.translation;
            if p.z <= 0.0 {
                continue;
            }
            let iz = 1.0 / p.z;
            let ru = cam.fx * p.x * iz + cam.cx - c.pixel.x;
            let rv = cam.fy * p.y * iz + cam.cy - c.pixel.y;
            // d(u, v)/dp
            let du = Vec3::new(cam.fx * iz, 0.0, -cam.fx * p.x * iz * iz);
            let dv = Vec3::new(0.0, cam.fy * iz, -cam.fy * p.y * iz * iz);
            // dp/d(omega) = -[R x]_x (columns below), dp/dt = I
            let ju = Vec6::from_column_slice(&[
                du.dot(&Vec3::new(0.0, -rx.z, rx.y)),
                du.dot(&Vec3::new(rx.z, 0.0, -rx.x)),
                du.dot(&Vec3::new(-rx.y, rx.x, 0.0)),
                du.x,
                du.y,
                du.z,
            ]);
            let jv = Vec6::from_column_slice(&[
                dv.dot(&Vec3::new(0.0, -rx.z, rx.y)),
                dv.dot(&Vec3::new(rx.z, 0.0, -rx.x)),
                dv.dot(&Vec3::new(-rx.y, rx.x, 0.0)),
                dv.x,
                dv.y,
                dv.z,
            ]);
            jtj += ju * ju.transpose() + jv * jv.transpose();
            jtr += ju * ru + jv * rv;
        }

        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for k in 0..6 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = apply_update(&current, &step);
            let new_cost = reprojection_cost(&candidate, corrs, cam);
            if new_cost < cost {
                let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                current = candidate;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                improved = rel >= RELATIVE_TOLERANCE;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok(current)
}
