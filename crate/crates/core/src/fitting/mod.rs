//! Robust 6D pose fitting from many-to-many 2D-3D correspondences.
//!
//! Minimal (P3P) and non-minimal (EPnP + Levenberg-Marquardt) solvers feed a
//! graph-cut RANSAC for single instances, and a progressive multi-instance
//! scheme that keeps a consolidated set of hypotheses.

mod epnp;
mod gc_ransac;
mod graph;
mod lm;
mod maxflow;
mod p3p;
mod pearl;
mod progressive_x;
mod prosac;

use std::collections::HashMap;

use crate::geometry::{CameraIntrinsics, RigidPose, Vec2, Vec3};

pub use epnp::{epnp_solve, PLANARITY_RATIO};
pub use gc_ransac::{degeneracy_check, gc_local_optimize, gc_ransac, gc_ransac_with_rng, labeling_energy, LocalOptimum};
pub use graph::{build_neighborhood_graph, NeighborhoodGraph};
pub use lm::{lm_refine, reprojection_cost};
pub use maxflow::MaxFlow;
pub use p3p::p3p_solve;
pub use pearl::{pearl_consolidate, pearl_energy, PearlOutcome};
pub use progressive_x::{jaccard_inliers, progressive_x};
pub use prosac::{prosac_sample, ProsacSampler};

/// A pixel linked to a 3D model point, with a confidence in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub pixel: Vec2,
    pub point: Vec3,
    pub confidence: f64,
}

impl Correspondence {
    pub fn new(pixel: Vec2, point: Vec3, confidence: f64) -> Self {
        Self { pixel, point, confidence }
    }
}

/// A pose with its quality and the indices of its inliers.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseHypothesis {
    pub pose: RigidPose,
    pub quality: f64,
    pub inliers: Vec<usize>,
}

/// Fitting parameters. Defaults follow the published method settings;
/// `lambda_gc` and `label_cost_fraction` are not given there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    /// Inlier threshold on the re-projection error (px).
    pub tau_r: f64,
    /// Maximum RANSAC iterations.
    pub tau_i: usize,
    /// Quality at which RANSAC stops early.
    pub tau_q: f64,
    /// Minimum 2D triangle area of a minimal sample (px^2).
    pub tau_t: f64,
    /// Neighborhood radius in the (px, px, cm, cm, cm) descriptor space.
    pub tau_d: f64,
    /// Jaccard similarity above which a proposal duplicates the current set.
    pub tau_j: f64,
    /// Probability of another instance below which fitting stops.
    pub tau_p: f64,
    /// Potts weight of the spatial-coherence term.
    pub lambda_gc: f64,
    /// Per-hypothesis label cost as a fraction of the correspondence count.
    pub label_cost_fraction: f64,
    pub max_instances: Option<usize>,
    pub seed: u64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            tau_r: 4.0,
            tau_i: 400,
            tau_q: 0.5,
            tau_t: 100.0,
            tau_d: 20.0,
            tau_j: 0.8,
            tau_p: 0.5,
            lambda_gc: 0.1,
            label_cost_fraction: 0.05,
            max_instances: None,
            seed: 0,
        }
    }
}

/// Euclidean distance between `u` and the projection of `x` under `pose`;
/// `+inf` when the point lies behind the camera.
pub fn reprojection_error(c: &Correspondence, pose: &RigidPose, cam: &CameraIntrinsics) -> f64 {
    reprojection_error_raw(&c.pixel, &c.point, pose, cam)
}

#[inline]
pub(crate) fn reprojection_error_raw(pixel: &Vec2, point: &Vec3, pose: &RigidPose, cam: &CameraIntrinsics) -> f64 {
    let p = pose.transform(point);
    if p.z <= 0.0 {
        return f64::INFINITY;
    }
    let du = cam.fx * p.x / p.z + cam.cx - pixel.x;
    let dv = cam.fy * p.y / p.z + cam.cy - pixel.y;
    (du * du + dv * dv).sqrt()
}

/// Truncated quadratic kernel `max(0, 1 - e^2 / tau^2)`.
#[inline]
pub fn kernel(e: f64, tau_r: f64) -> f64 {
    (1.0 - e * e / (tau_r * tau_r)).max(0.0)
}

/// Correspondences with their grouping by pixel.
#[derive(Debug, Clone)]
pub struct CorrespondenceSet {
    pub items: Vec<Correspondence>,
    /// Correspondence indices per distinct pixel, in first-seen order.
    pub groups: Vec<Vec<usize>>,
    /// Group index of every correspondence.
    pub group_of: Vec<usize>,
}

impl CorrespondenceSet {
    pub fn new(items: Vec<Correspondence>) -> Self {
        let mut index: HashMap<(u64, u64), usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut group_of = Vec::with_capacity(items.len());
        for (i, c) in items.iter().enumerate() {
            let key = (c.pixel.x.to_bits(), c.pixel.y.to_bits());
            let g = *index.entry(key).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
            group_of.push(g);
        }
        Self { items, groups, group_of }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn pixel_count(&self) -> usize {
        self.groups.len()
    }

    pub fn errors(&self, pose: &RigidPose, cam: &CameraIntrinsics) -> Vec<f64> {
        self.items.iter().map(|c| reprojection_error(c, pose, cam)).collect()
    }

    pub fn inliers(&self, pose: &RigidPose, cam: &CameraIntrinsics, tau_r: f64) -> Vec<usize> {
        (0..self.items.len())
            .filter(|&i| reprojection_error(&self.items[i], pose, cam) < tau_r)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<Correspondence> {
        indices.iter().map(|&i| self.items[i]).collect()
    }
}

/// Pose quality: mean over pixels of the best truncated-quadratic score among
/// that pixel's correspondences. Zero for an empty set.
pub fn quality_single(pose: &RigidPose, set: &CorrespondenceSet, cam: &CameraIntrinsics, tau_r: f64) -> f64 {
    quality_from_scores(set, |i| kernel(reprojection_error(&set.items[i], pose, cam), tau_r))
}

/// Quality that only rewards correspondences not yet explained by `others`:
/// each score is capped by `e'^2 / tau_r^2`, `e'` being the smallest error
/// under any pose of `others`.
pub fn quality_multi(
    pose: &RigidPose,
    set: &CorrespondenceSet,
    others: &[RigidPose],
    cam: &CameraIntrinsics,
    tau_r: f64,
) -> f64 {
    let explained = explained_errors(set, others, cam);
    quality_multi_cached(pose, set, &explained, cam, tau_r)
}

/// `e'` per correspondence: the minimum error over `others` (`+inf` if empty).
pub fn explained_errors(set: &CorrespondenceSet, others: &[RigidPose], cam: &CameraIntrinsics) -> Vec<f64> {
    set.items
        .iter()
        .map(|c| others.iter().map(|p| reprojection_error(c, p, cam)).fold(f64::INFINITY, f64::min))
        .collect()
}

pub(crate) fn quality_multi_cached(
    pose: &RigidPose,
    set: &CorrespondenceSet,
    explained: &[f64],
    cam: &CameraIntrinsics,
    tau_r: f64,
) -> f64 {
    let tau2 = tau_r * tau_r;
    quality_from_scores(set, |i| {
        let e = reprojection_error(&set.items[i], pose, cam);
        let ep = explained[i];
        (1.0 - e * e / tau2).min(ep * ep / tau2).max(0.0)
    })
}

fn quality_from_scores(set: &CorrespondenceSet, score: impl Fn(usize) -> f64) -> f64 {
    if set.groups.is_empty() {
        return 0.0;
    }
    let total: f64 = set
        .groups
        .iter()
        .map(|g| g.iter().map(|&i| score(i)).fold(0.0, f64::max))
        .sum();
    total / set.groups.len() as f64
}
