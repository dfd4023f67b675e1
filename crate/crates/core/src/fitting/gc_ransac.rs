//! Single-instance fitting: PROSAC-sampled P3P hypotheses, each new best one
//! locally optimized by alternating a graph-cut inlier labeling with a
//! refit on the selected inliers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{build_neighborhood_graph, NeighborhoodGraph};
use super::maxflow::MaxFlow;
use super::prosac::ProsacSampler;
use super::{
    epnp_solve, kernel, lm_refine, p3p_solve, quality_multi_cached, quality_single, reprojection_cost, Correspondence,
    CorrespondenceSet, FitParams, PoseHypothesis,
};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidPose};

const MAX_LOCAL_ROUNDS: usize = 10;

/// Accepts a minimal sample unless its image triangle is smaller than `tau_t`
/// (px^2) or its model points are collinear.
pub fn degeneracy_check(sample: &[Correspondence; 3], tau_t: f64) -> bool {
    let (a, b, c) = (sample[0].pixel, sample[1].pixel, sample[2].pixel);
    let area = 0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs();
    if area < tau_t {
        return false;
    }
    let ab = sample[1].point - sample[0].point;
    let ac = sample[2].point - sample[0].point;
    let scale = ab.norm_squared().max(ac.norm_squared());
    scale > 0.0 && ab.cross(&ac).norm() >= 1e-9 * scale
}

/// Result of the graph-cut local optimization.
#[derive(Debug, Clone)]
pub struct LocalOptimum {
    pub pose: RigidPose,
    pub inliers: Vec<usize>,
    pub quality: f64,
    /// Labeling energy of every accepted round, starting with the input pose.
    pub energies: Vec<f64>,
}

/// Energy of a binary inlier labeling under per-correspondence errors.
pub fn labeling_energy(labels: &[bool], errors: &[f64], graph: &NeighborhoodGraph, tau_r: f64, lambda: f64) -> f64 {
    let unary: f64 = labels
        .iter()
        .zip(errors)
        .map(|(&inlier, &e)| {
            let k = kernel(e, tau_r);
            if inlier {
                1.0 - k
            } else {
                k
            }
        })
        .sum();
    let cut = graph.edges.iter().filter(|&&(i, j)| labels[i] != labels[j]).count();
    unary + lambda * cut as f64
}

/// Minimum-energy inlier labeling by an s-t cut.
fn label_inliers(errors: &[f64], graph: &NeighborhoodGraph, tau_r: f64, lambda: f64) -> Vec<bool> {
    let n = errors.len();
    let (s, t) = (n, n + 1);
    let mut g = MaxFlow::new(n + 2);
    for (p, &e) in errors.iter().enumerate() {
        let k = kernel(e, tau_r);
        // Source side = inlier. Cutting s->p labels p outlier (cost k),
        // cutting p->t labels it inlier (cost 1 - k).
        g.add_edge(s, p, k, 0.0);
        g.add_edge(p, t, 1.0 - k, 0.0);
    }
    if lambda > 0.0 {
        for &(i, j) in &graph.edges {
            g.add_edge(i, j, lambda, lambda);
        }
    }
    g.max_flow(s, t);
    let side = g.source_side(s);
    side[..n].to_vec()
}

fn indices(labels: &[bool]) -> Vec<usize> {
    labels.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

/// Refits a pose to `subset`: EPnP followed by LM, and LM from `current`;
/// the candidate with the lower re-projection cost wins.
pub(crate) fn refit(subset: &[Correspondence], current: &RigidPose, cam: &CameraIntrinsics) -> Option<RigidPose> {
    if subset.len() < 3 {
        return None;
    }
    let mut candidates = Vec::with_capacity(2);
    if let Ok(p) = lm_refine(current, subset, cam) {
        candidates.push(p);
    }
    if let Ok(p) = epnp_solve(subset, cam).and_then(|p| lm_refine(&p, subset, cam)) {
        candidates.push(p);
    }
    candidates
        .into_iter()
        .map(|p| (reprojection_cost(&p, subset, cam), p))
        .filter(|(c, _)| c.is_finite())
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p)| p)
}

pub(crate) fn local_optimize_with(
    pose: &RigidPose,
    set: &CorrespondenceSet,
    graph: &NeighborhoodGraph,
    cam: &CameraIntrinsics,
    tau_r: f64,
    lambda: f64,
    quality: &dyn Fn(&RigidPose) -> f64,
) -> LocalOptimum {
    let errors = set.errors(pose, cam);
    let labels = label_inliers(&errors, graph, tau_r, lambda);
    let mut energy = labeling_energy(&labels, &errors, graph, tau_r, lambda);
    let mut state = (*pose, labels);
    let mut best = LocalOptimum { pose: *pose, inliers: indices(&state.1), quality: quality(pose), energies: vec![energy] };

    for _ in 0..MAX_LOCAL_ROUNDS {
        let inliers = indices(&state.1);
        let Some(next_pose) = refit(&set.subset(&inliers), &state.0, cam) else { break };
        let next_errors = set.errors(&next_pose, cam);
        let next_labels = label_inliers(&next_errors, graph, tau_r, lambda);
        let next_energy = labeling_energy(&next_labels, &next_errors, graph, tau_r, lambda);
        if next_energy > energy {
            break;
        }
        energy = next_energy;
        best.energies.push(energy);
        let q = quality(&next_pose);
        if q >= best.quality {
            best.pose = next_pose;
            best.quality = q;
            best.inliers = indices(&next_labels);
        }
        let repeated = next_labels == state.1;
        state = (next_pose, next_labels);
        if repeated {
            break;
        }
    }
    best
}

/// Graph-cut local optimization of `pose` scored with the single-instance
/// quality.
pub fn gc_local_optimize(
    pose: &RigidPose,
    set: &CorrespondenceSet,
    graph: &NeighborhoodGraph,
    cam: &CameraIntrinsics,
    params: &FitParams,
) -> LocalOptimum {
    let q = |p: &RigidPose| quality_single(p, set, cam, params.tau_r);
    local_optimize_with(pose, set, graph, cam, params.tau_r, params.lambda_gc, &q)
}

/// Single-instance robust fit seeded with `params.seed`.
pub fn gc_ransac(corrs: &[Correspondence], cam: &CameraIntrinsics, params: &FitParams) -> Result<PoseHypothesis> {
    let set = CorrespondenceSet::new(corrs.to_vec());
    let graph = build_neighborhood_graph(corrs, params.tau_d);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    gc_ransac_with_rng(&set, &graph, cam, params, None, &mut rng)
}

/// Single-instance fit. When `explained` holds per-correspondence errors under
/// already accepted hypotheses, proposals are scored with the multi-instance
/// quality.
pub fn gc_ransac_with_rng(
    set: &CorrespondenceSet,
    graph: &NeighborhoodGraph,
    cam: &CameraIntrinsics,
    params: &FitParams,
    explained: Option<&[f64]>,
    rng: &mut impl Rng,
) -> Result<PoseHypothesis> {
    let n = set.len();
    if n < 3 {
        return Err(Error::TooFewPoints { required: 3, available: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.items[b].confidence.total_cmp(&set.items[a].confidence).then(a.cmp(&b)));
    let sorted_conf: Vec<f64> = order.iter().map(|&i| set.items[i].confidence).collect();
    let mut sampler = ProsacSampler::new(&sorted_conf, params.tau_i)?;

    let quality = |p: &RigidPose| match explained {
        Some(e) => quality_multi_cached(p, set, e, cam, params.tau_r),
        None => quality_single(p, set, cam, params.tau_r),
    };

    let mut best: Option<(RigidPose, f64)> = None;
    for _ in 0..params.tau_i {
        let ranks = sampler.sample(rng);
        let sample = [set.items[order[ranks[0]]], set.items[order[ranks[1]]], set.items[order[ranks[2]]]];
        if !degeneracy_check(&sample, params.tau_t) {
            continue;
        }
        let Ok(solutions) = p3p_solve(&sample, cam) else { continue };
        for pose in solutions {
            let q = quality(&pose);
            if best.as_ref().is_some_and(|(_, bq)| q <= *bq) {
                continue;
            }
            let lo = local_optimize_with(&pose, set, graph, cam, params.tau_r, params.lambda_gc, &quality);
            best = Some((lo.pose, lo.quality));
        }
        if best.as_ref().is_some_and(|(_, q)| *q >= params.tau_q) {
            break;
        }
    }
    let (pose, quality) = best.ok_or(Error::NoHypothesis)?;
    Ok(PoseHypothesis { pose, quality, inliers: set.inliers(&pose, cam, params.tau_r) })
}
