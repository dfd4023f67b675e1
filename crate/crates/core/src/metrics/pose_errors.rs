use crate::error::{Error, Result};
use crate::geometry::{rotation_angle_between, CameraIntrinsics, Mat3, RigidPose, Vec3};
use crate::spatial::KdTree;

/// Translational error (mm).
pub fn e_te(t_est: &Vec3, t_gt: &Vec3) -> f64 {
    (t_gt - t_est).norm()
}

/// Rotational error (rad), the angle of `R_est * R_gt^-1`.
pub fn e_re(r_est: &Mat3, r_gt: &Mat3) -> f64 {
    rotation_angle_between(r_est, r_gt)
}

fn non_empty(vertices: &[Vec3]) -> Result<()> {
    if vertices.is_empty() {
        Err(Error::EmptyModel)
    } else {
        Ok(())
    }
}

fn symmetries(syms: &[RigidPose]) -> Result<()> {
    if syms.is_empty() {
        Err(Error::Invalid("empty symmetry set".into()))
    } else {
        Ok(())
    }
}

/// Average distance between corresponding model vertices.
pub fn e_add(est: &RigidPose, gt: &RigidPose, vertices: &[Vec3]) -> Result<f64> {
    non_empty(vertices)?;
    let sum: f64 = vertices.iter().map(|x| (gt.transform(x) - est.transform(x)).norm()).sum();
    Ok(sum / vertices.len() as f64)
}

/// Average distance from each ground-truth vertex to the closest estimated one.
pub fn e_adi(est: &RigidPose, gt: &RigidPose, vertices: &[Vec3]) -> Result<f64> {
    non_empty(vertices)?;
    let moved: Vec<Vec3> = vertices.iter().map(|x| est.transform(x)).collect();
    let tree = KdTree::new(&moved);
    let sum: f64 = vertices
        .iter()
        .map(|x| tree.nearest(&gt.transform(x)).map_or(0.0, |(_, d2)| d2.sqrt()))
        .sum();
    Ok(sum / vertices.len() as f64)
}

/// Maximum symmetric surface distance (mm).
pub fn e_mssd(est: &RigidPose, gt: &RigidPose, syms: &[RigidPose], vertices: &[Vec3]) -> Result<f64> {
    non_empty(vertices)?;
    symmetries(syms)?;
    let est_pts: Vec<Vec3> = vertices.iter().map(|x| est.transform(x)).collect();
    let mut best = f64::INFINITY;
    for s in syms {
        let g = gt.compose(s);
        let mut worst = 0.0f64;
        for (x, e) in vertices.iter().zip(&est_pts) {
            worst = worst.max((e - g.transform(x)).norm());
            if worst >= best {
                break;
            }
        }
        best = best.min(worst);
    }
    Ok(best)
}

/// Maximum symmetric projection distance (px). A symmetry candidate that puts
/// any vertex behind the camera in either pose scores `+inf`.
pub fn e_mspd(
    est: &RigidPose,
    gt: &RigidPose,
    syms: &[RigidPose],
    vertices: &[Vec3],
    cam: &CameraIntrinsics,
) -> Result<f64> {
    non_empty(vertices)?;
    symmetries(syms)?;
    let est_px: Option<Vec<_>> =
        vertices.iter().map(|x| cam.project_camera_point(&est.transform(x)).ok()).collect();
    let Some(est_px) = est_px else { return Ok(f64::INFINITY) };
    let mut best = f64::INFINITY;
    for s in syms {
        let g = gt.compose(s);
        let mut worst = 0.0f64;
        for (x, e) in vertices.iter().zip(&est_px) {
            let Ok(p) = cam.project_camera_point(&g.transform(x)) else {
                worst = f64::INFINITY;
                break;
            };
            worst = worst.max((e - p).norm());
            if worst >= best {
                break;
            }
        }
        best = best.min(worst);
    }
    Ok(best)
}
