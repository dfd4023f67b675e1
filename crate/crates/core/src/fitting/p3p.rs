//! Minimal three-point absolute pose.
//!
//! Depth ratios along the three viewing rays are eliminated into a quartic
//! (Grunert's formulation), whose real roots are found from the companion
//! matrix and polished by Newton steps. The depths are then refined by
//! Gauss-Newton on the three distance constraints and the pose is recovered
//! from the two point triplets.

use nalgebra::{DMatrix, Matrix3};

use super::{reprojection_error, Correspondence};
use crate::error::{Error, Result};
use crate::geometry::{nearest_rotation, CameraIntrinsics, RigidPose, Vec3};

/// Maximum re-projection error (px) of an accepted solution.
const RESIDUAL_BOUND: f64 = 1e-6;

type Poly = Vec<f64>; // coefficients, lowest degree first

fn poly_mul(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, x) in b.iter().enumerate() {
        out[i] += x;
    }
    out
}

fn poly_scale(a: &[f64], s: f64) -> Poly {
    a.iter().map(|x| x * s).collect()
}

fn poly_eval(a: &[f64], x: f64) -> f64 {
    a.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn poly_derivative(a: &[f64]) -> Poly {
    a.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect()
}

/// Real roots of a polynomial of degree <= 4.
fn real_roots(poly: &[f64]) -> Vec<f64> {
    let scale = poly.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let mut p: Vec<f64> = poly.iter().map(|c| c / scale).collect();
    while p.len() > 1 && p.last().unwrap().abs() < 1e-14 {
        p.pop();
    }
    let degree = p.len() - 1;
    let mut roots = Vec::new();
    match degree {
        0 => {}
        1 => roots.push(-p[0] / p[1]),
        _ => {
            let lead = p[degree];
            let mut comp = DMatrix::<f64>::zeros(degree, degree);
            for i in 0..degree {
                comp[(0, i)] = -p[degree - 1 - i] / lead;
            }
            for i in 1..degree {
                comp[(i, i - 1)] = 1.0;
            }
            for z in comp.complex_eigenvalues().iter() {
                if z.im.abs() <= 1e-6 * (1.0 + z.re.abs()) {
                    roots.push(z.re);
                }
            }
        }
    }
    let dp = poly_derivative(&p);
    for r in roots.iter_mut() {
        for _ in 0..8 {
            let f = poly_eval(&p, *r);
            let d = poly_eval(&dp, *r);
            if d == 0.0 || f == 0.0 {
                break;
            }
            let step = f / d;
            *r -= step;
            if step.abs() < 1e-15 * (1.0 + r.abs()) {
                break;
            }
        }
    }
    roots
}

fn refine_depths(depths: &mut Vec3, bearings: &[Vec3; 3], dist_sq: &[f64; 3], pairs: &[(usize, usize); 3]) {
    for _ in 0..10 {
        let mut jac = Matrix3::zeros();
        let mut res = Vec3::zeros();
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let d = bearings[i] * depths[i] - bearings[j] * depths[j];
            res[k] = d.norm_squared() - dist_sq[k];
            jac[(k, i)] = 2.0 * d.dot(&bearings[i]);
            jac[(k, j)] = -2.0 * d.dot(&bearings[j]);
        }
        if res.amax() < 1e-14 * dist_sq.iter().fold(0.0f64, |m, v| m.max(*v)) {
            break;
        }
        match jac.try_inverse() {
            Some(inv) => {
                let step = inv * res;
                let next = *depths - step;
                let next_res: f64 = pairs
                    .iter()
                    .enumerate()
                    .map(|(k, &(i, j))| {
                        ((bearings[i] * next[i] - bearings[j] * next[j]).norm_squared() - dist_sq[k]).abs()
                    })
                    .sum();
                if next_res >= res.abs().sum() {
                    break;
                }
                *depths = next;
            }
            None => break,
        }
    }
}

fn collinear(a: &Vec3, b: &Vec3, c: &Vec3) -> bool {
    let ab = b - a;
    let ac = c - a;
    let scale = ab.norm_squared().max(ac.norm_squared());
    scale == 0.0 || ab.cross(&ac).norm() < 1e-9 * scale
}

/// Solves the absolute pose from three correspondences. Returns every proper,
/// cheiral pose that reprojects the three points within 1e-6 px.
pub fn p3p_solve(corrs: &[Correspondence; 3], cam: &CameraIntrinsics) -> Result<Vec<RigidPose>> {
    let x = [corrs[0].point, corrs[1].point, corrs[2].point];
    if collinear(&x[0], &x[1], &x[2]) {
        return Err(Error::DegenerateSample);
    }
    let f = [
        cam.ray(&corrs[0].pixel).normalize(),
        cam.ray(&corrs[1].pixel).normalize(),
        cam.ray(&corrs[2].pixel).normalize(),
    ];
    if (f[0] - f[1]).norm() < 1e-12 || (f[0] - f[2]).norm() < 1e-12 || (f[1] - f[2]).norm() < 1e-12 {
        return Err(Error::DegenerateSample);
    }

    let a2 = (x[1] - x[2]).norm_squared();
    let b2 = (x[0] - x[2]).norm_squared();
    let c2 = (x[0] - x[1]).norm_squared();
    let cos_a = f[1].dot(&f[2]);
    let cos_b = f[0].dot(&f[2]);
    let cos_g = f[0].dot(&f[1]);

    // With u = s2/s1 and v = s3/s1, the depth system reduces to
    //   b2 u^2 - 2 b2 cos_g u + b2 - c2 q(v) = 0,  q(v) = 1 + v^2 - 2 v cos_b,
    // and subtracting the (s2, s3) equation makes u = N(v) / D(v).
    let q = vec![1.0, -2.0 * cos_b, 1.0];
    let numer = poly_add(&[-b2, 0.0, b2], &poly_scale(&q, -(a2 - c2)));
    let denom = vec![-2.0 * b2 * cos_g, 2.0 * b2 * cos_a];
    let quartic = poly_add(
        &poly_add(
            &poly_scale(&poly_mul(&numer, &numer), b2),
            &poly_scale(&poly_mul(&numer, &denom), -2.0 * b2 * cos_g),
        ),
        &poly_mul(&poly_add(&[b2], &poly_scale(&q, -c2)), &poly_mul(&denom, &denom)),
    );

    let basis_model = Matrix3::from_columns(&[x[0] - x[1], x[0] - x[2], (x[0] - x[1]).cross(&(x[0] - x[2]))]);
    let basis_model_inv = basis_model.try_inverse().ok_or(Error::DegenerateSample)?;

    let pairs = [(0, 1), (0, 2), (1, 2)];
    let dist_sq = [c2, b2, a2];
    let mut solutions: Vec<RigidPose> = Vec::new();
    for v in real_roots(&quartic) {
        if v <= 0.0 {
            continue;
        }
        let d = poly_eval(&denom, v);
        if d.abs() < 1e-12 * b2 {
            continue;
        }
        let u = poly_eval(&numer, v) / d;
        if u <= 0.0 {
            continue;
        }
        let qv = poly_eval(&q, v);
        if qv <= 0.0 {
            continue;
        }
        let s1 = (b2 / qv).sqrt();
        let mut depths = Vec3::new(s1, u * s1, v * s1);
        refine_depths(&mut depths, &f, &dist_sq, &pairs);
        if depths.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            continue;
        }
        let p = [f[0] * depths[0], f[1] * depths[1], f[2] * depths[2]];
        let basis_cam = Matrix3::from_columns(&[p[0] - p[1], p[0] - p[2], (p[0] - p[1]).cross(&(p[0] - p[2]))]);
        let rotation = nearest_rotation(&(basis_cam * basis_model_inv));
        if rotation.determinant() <= 0.0 {
            continue;
        }
        let centroid_m = (x[0] + x[1] + x[2]) / 3.0;
        let centroid_c = (p[0] + p[1] + p[2]) / 3.0;
        let pose = RigidPose::from_parts_unchecked(rotation, centroid_c - rotation * centroid_m);
        let ok = corrs
            .iter()
            .all(|c| pose.transform(&c.point).z > 0.0 && reprojection_error(c, &pose, cam) < RESIDUAL_BOUND);
        let duplicate = solutions.iter().any(|s| {
            (s.rotation - pose.rotation).amax() < 1e-9 && (s.translation - pose.translation).amax() < 1e-6
        });
        if ok && !duplicate {
            solutions.push(pose);
        }
    }
    if solutions.is_empty() {
        return Err(Error::NoSolution);
    }
    Ok(solutions)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roots_of_known_polynomials() {
        // (x - 1)(x - 2)(x + 3)(x - 0.5)
        let p = poly_mul(&poly_mul(&[-1.0, 1.0], &[-2.0, 1.0]), &poly_mul(&[3.0, 1.0], &[-0.5, 1.0]));
        let mut r = real_roots(&p);
        r.sort_by(f64::total_cmp);
        let expect = [-3.0, 0.5, 1.0, 2.0];
        for (a, b) in r.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(real_roots(&[1.0, 0.0, 1.0]).len(), 0);
    }

    #[test]
    fn recovers_generating_pose() {
        let cam = camera();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut found = 0;
        for _ in 0..300 {
            let pose = random_pose(&mut rng);
            let corrs = [
                exact(&pose, model_point(&mut rng), &cam),
                exact(&pose, model_point(&mut rng), &cam),
                exact(&pose, model_point(&mut rng), &cam),
            ];
            let sols = p3p_solve(&corrs, &cam).unwrap();
            assert!(sols.len() <= 4);
            for s in &sols {
                assert!((s.rotation.determinant() - 1.0).abs() < 1e-9);
                for c in &corrs {
                    assert!(s.transform(&c.point).z > 0.0);
                    assert!(reprojection_error(c, s, &cam) < 1e-6);
                }
            }
            if sols
                .iter()
                .any(|s| rotation_error(s, &pose) < 1e-6 && translation_error(s, &pose) < 1e-3)
            {
                found += 1;
            }
        }
        assert_eq!(found, 300);
    }

    #[test]
    fn collinear_sample_is_degenerate() {
        let cam = camera();
        let pose = RigidPose::from_axis_angle(&Vec3::z(), 0.1, Vec3::new(0.0, 0.0, 800.0));
        let corrs = [
            exact(&pose, Vec3::new(0.0, 0.0, 0.0), &cam),
            exact(&pose, Vec3::new(10.0, 10.0, 10.0), &cam),
            exact(&pose, Vec3::new(20.0, 20.0, 20.0), &cam),
        ];
        assert_eq!(p3p_solve(&corrs, &cam), Err(Error::DegenerateSample));
    }
}
