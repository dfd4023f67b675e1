//! EPnP: the model points are expressed as barycentric combinations of four
//! control points whose camera coordinates lie in the null space of a 2n x 12
//! system. The null-space weights are approximated linearly for one, two and
//! three kernel vectors, polished by Gauss-Newton on the control-point
//! distances, and the candidate with the lowest re-projection error wins.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, SymmetricEigen};

use super::{reprojection_error, Correspondence};
use crate::error::{Error, Result};
use crate::geometry::{absolute_orientation, vertex_centroid, CameraIntrinsics, RigidPose, Vec3};

/// Smallest/largest covariance eigenvalue ratio below which the model points
/// are treated as planar.
pub const PLANARITY_RATIO: f64 = 1e-8;

type Mat12 = SMatrix<f64, 12, 12>;
type Vec12 = SVector<f64, 12>;
type Mat6x10 = SMatrix<f64, 6, 10>;
type Vec6 = SVector<f64, 6>;
type Vec4 = SVector<f64, 4>;

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

pub fn epnp_solve(corrs: &[Correspondence], cam: &CameraIntrinsics) -> Result<RigidPose> {
    let n = corrs.len();
    if n < 4 {
        return Err(Error::TooFewPoints { required: 4, available: n });
    }
    let world: Vec<Vec3> = corrs.iter().map(|c| c.point).collect();

    let centroid = vertex_centroid(&world);
    let mut cov = Matrix3::zeros();
    for p in &world {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n as f64;
    let eig = SymmetricEigen::new(cov);
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    let ratio = if max_ev > 0.0 { min_ev / max_ev } else { 0.0 };
    if ratio < PLANARITY_RATIO {
        return Err(Error::NearPlanarConfiguration(ratio));
    }

    let mut control_w = [centroid; 4];
    for k in 0..3 {
        control_w[k + 1] = centroid + eig.eigenvectors.column(k).into_owned() * eig.eigenvalues[k].sqrt();
    }
    let basis = Matrix3::from_columns(&[
        control_w[1] - control_w[0],
        control_w[2] - control_w[0],
        control_w[3] - control_w[0],
    ]);
    let basis_inv = basis.try_inverse().ok_or(Error::NearPlanarConfiguration(ratio))?;
    let alphas: Vec<[f64; 4]> = world
        .iter()
        .map(|p| {
            let b = basis_inv * (p - control_w[0]);
            [1.0 - b.x - b.y - b.z, b.x, b.y, b.z]
        })
        .collect();

    // M^T M accumulated row pair by row pair.
    let mut mtm = Mat12::zeros();
    for (a, c) in alphas.iter().zip(corrs) {
        let mut r0 = Vec12::zeros();
        let mut r1 = Vec12::zeros();
        for j in 0..4 {
            r0[3 * j] = a[j] * cam.fx;
            r0[3 * j + 2] = a[j] * (cam.cx - c.pixel.x);
            r1[3 * j + 1] = a[j] * cam.fy;
            r1[3 * j + 2] = a[j] * (cam.cy - c.pixel.y);
        }
        mtm += r0 * r0.transpose() + r1 * r1.transpose();
    }
    let eig = SymmetricEigen::new(mtm);
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let kernel: Vec<Vec12> = order[..4].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();

    let l = compute_l(&kernel);
    let rho = Vec6::from_iterator(PAIRS.iter().map(|&(i, j)| (control_w[i] - control_w[j]).norm_squared()));

    let mut best: Option<(f64, RigidPose)> = None;
    for approx in [approx_one, approx_two, approx_three] {
        let Some(mut betas) = approx(&l, &rho) else { continue };
        gauss_newton(&l, &rho, &mut betas);
        let Some(pose) = pose_from_betas(&kernel, &betas, &alphas, &world) else { continue };
        let err: f64 = corrs.iter().map(|c| reprojection_error(c, &pose, cam)).sum::<f64>() / n as f64;
        if err.is_finite() && best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, pose));
        }
    }
    best.map(|(_, p)| p).ok_or(Error::NoSolution)
}

fn control_point(v: &Vec12, j: usize) -> Vec3 {
    Vec3::new(v[3 * j], v[3 * j + 1], v[3 * j + 2])
}

/// Rows: control-point pairs. Columns: the products
/// b11 b12 b22 b13 b23 b33 b14 b24 b34 b44.
fn compute_l(kernel: &[Vec12]) -> Mat6x10 {
    let mut l = Mat6x10::zeros();
    for (row, &(i, j)) in PAIRS.iter().enumerate() {
        let dv: Vec<Vec3> = kernel.iter().map(|v| control_point(v, i) - control_point(v, j)).collect();
        let vals = [
            dv[0].dot(&dv[0]),
            2.0 * dv[0].dot(&dv[1]),
            dv[1].dot(&dv[1]),
            2.0 * dv[0].dot(&dv[2]),
            2.0 * dv[1].dot(&dv[2]),
            dv[2].dot(&dv[2]),
            2.0 * dv[0].dot(&dv[3]),
            2.0 * dv[1].dot(&dv[3]),
            2.0 * dv[2].dot(&dv[3]),
            dv[3].dot(&dv[3]),
        ];
        for (c, v) in vals.iter().enumerate() {
            l[(row, c)] = *v;
        }
    }
    l
}

fn least_squares(l: &Mat6x10, cols: &[usize], rho: &Vec6) -> Option<DVector<f64>> {
    let mut a = DMatrix::zeros(6, cols.len());
    for (k, &c) in cols.iter().enumerate() {
        a.set_column(k, &l.column(c));
    }
    let b = DVector::from_iterator(6, rho.iter().copied());
    a.svd(true, true).solve(&b, 1e-12).ok()
}

fn approx_one(l: &Mat6x10, rho: &Vec6) -> Option<Vec4> {
    let b = least_squares(l, &[0, 1, 3, 6], rho)?;
    let b0 = b[0].abs().sqrt();
    if b0 == 0.0 {
        return None;
    }
    Some(if b[0] < 0.0 {
        Vec4::new(b0, -b[1] / b0, -b[2] / b0, -b[3] / b0)
    } else {
        Vec4::new(b0, b[1] / b0, b[2] / b0, b[3] / b0)
    })
}

fn approx_two(l: &Mat6x10, rho: &Vec6) -> Option<Vec4> {
    let b = least_squares(l, &[0, 1, 2], rho)?;
    let (mut b0, b1) = if b[0] < 0.0 {
        ((-b[0]).sqrt(), if b[2] < 0.0 { (-b[2]).sqrt() } else { 0.0 })
    } else {
        (b[0].sqrt(), if b[2] > 0.0 { b[2].sqrt() } else { 0.0 })
    };
    if b[1] < 0.0 {
        b0 = -b0;
    }
    Some(Vec4::new(b0, b1, 0.0, 0.0))
}

fn approx_three(l: &Mat6x10, rho: &Vec6) -> Option<Vec4> {
    let b = least_squares(l, &[0, 1, 2, 3, 4], rho)?;
    let (mut b0, b1) = if b[0] < 0.0 {
        ((-b[0]).sqrt(), if b[2] < 0.0 { (-b[2]).sqrt() } else { 0.0 })
    } else {
        (b[0].sqrt(), if b[2] > 0.0 { b[2].sqrt() } else { 0.0 })
    };
    if b[1] < 0.0 {
        b0 = -b0;
    }
    if b0 == 0.0 {
        return None;
    }
    Some(Vec4::new(b0, b1, b[3] / b0, 0.0))
}

fn beta_products(b: &Vec4) -> SVector<f64, 10> {
    SVector::<f64, 10>::from_column_slice(&[
        b[0] * b[0],
        b[0] * b[1],
        b[1] * b[1],
        b[0] * b[2],
        b[1] * b[2],
        b[2] * b[2],
        b[0] * b[3],
        b[1] * b[3],
        b[2] * b[3],
        b[3] * b[3],
    ])
}

fn gauss_newton(l: &Mat6x10, rho: &Vec6, betas: &mut Vec4) {
    for _ in 0..10 {
        let b = *betas;
        let residual = l * beta_products(&b) - rho;
        let mut jac = SMatrix::<f64, 6, 4>::zeros();
        for r in 0..6 {
            let row = l.row(r);
            jac[(r, 0)] = 2.0 * row[0] * b[0] + row[1] * b[1] + row[3] * b[2] + row[6] * b[3];
            jac[(r, 1)] = row[1] * b[0] + 2.0 * row[2] * b[1] + row[4] * b[2] + row[7] * b[3];
            jac[(r, 2)] = row[3] * b[0] + row[4] * b[1] + 2.0 * row[5] * b[2] + row[8] * b[3];
            jac[(r, 3)] = row[6] * b[0] + row[7] * b[1] + row[8] * b[2] + 2.0 * row[9] * b[3];
        }
        let Some(step) = jac.svd(true, true).solve(&residual, 1e-15).ok() else { return };
        let next = b - step;
        let next_res = l * beta_products(&next) - rho;
        if next_res.norm_squared() >= residual.norm_squared() {
            return;
        }
        *betas = next;
    }
}

fn pose_from_betas(kernel: &[Vec12], betas: &Vec4, alphas: &[[f64; 4]], world: &[Vec3]) -> Option<RigidPose> {
    let mut ccam = Vec12::zeros();
    for (v, b) in kernel.iter().zip(betas.iter()) {
        ccam += v * *b;
    }
    let mut cam_pts: Vec<Vec3> = alphas
        .iter()
        .map(|a| (0..4).map(|j| control_point(&ccam, j) * a[j]).sum())
        .collect();
    if cam_pts.iter().map(|p| p.z).sum::<f64>() < 0.0 {
        cam_pts.iter_mut().for_each(|p| *p = -*p);
    }
    let pose = absolute_orientation(world, &cam_pts)?;
    pose.rotation.iter().all(|v| v.is_finite()).then_some(pose)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_generating_pose() {
        let cam = camera();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let pose = random_pose(&mut rng);
            let corrs: Vec<Correspondence> = (0..6).map(|_| exact(&pose, model_point(&mut rng), &cam)).collect();
            let est = epnp_solve(&corrs, &cam).unwrap();
            assert!(rotation_error(&est, &pose) < 1e-6, "{}", rotation_error(&est, &pose));
            assert!(translation_error(&est, &pose) < 1e-3);
            assert!((est.rotation.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let cam = camera();
        let pose = RigidPose::from_axis_angle(&Vec3::x(), 0.5, Vec3::new(0.0, 0.0, 700.0));
        let three: Vec<Correspondence> = (0..3)
            .map(|i| exact(&pose, Vec3::new(i as f64, (i * i) as f64, 1.0), &cam))
            .collect();
        assert_eq!(epnp_solve(&three, &cam), Err(Error::TooFewPoints { required: 4, available: 3 }));
        let planar: Vec<Correspondence> = [(0.0, 0.0), (40.0, 0.0), (0.0, 30.0), (25.0, 35.0), (-20.0, 10.0)]
            .iter()
            .map(|&(x, y)| exact(&pose, Vec3::new(x, y, 5.0), &cam))
            .collect();
        assert!(matches!(epnp_solve(&planar, &cam), Err(Error::NearPlanarConfiguration(_))));
    }
}
