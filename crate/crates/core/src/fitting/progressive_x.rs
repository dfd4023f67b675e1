//! Multi-instance fitting: proposals from the single-instance fitter are
//! scored against what the current hypotheses already explain, gated by
//! Jaccard similarity and consolidated after every addition.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gc_ransac::gc_ransac_with_rng;
use super::graph::build_neighborhood_graph;
use super::pearl::pearl_consolidate;
use super::{explained_errors, Correspondence, CorrespondenceSet, FitParams, PoseHypothesis};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidPose};

/// Consecutive duplicate proposals after which fitting stops.
const MAX_REJECTIONS: usize = 3;

/// Jaccard similarity between `proposal` and the union of the inlier sets of
/// `hypotheses`; 0 when both are empty.
pub fn jaccard_inliers(proposal: &[usize], hypotheses: &[PoseHypothesis]) -> f64 {
    let a: HashSet<usize> = proposal.iter().copied().collect();
    let b: HashSet<usize> = hypotheses.iter().flat_map(|h| h.inliers.iter().copied()).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Probability of drawing an all-inlier minimal sample at least once in
/// `iterations` tries when a fraction `w` of the data supports an instance.
fn instance_probability(w: f64, iterations: usize) -> f64 {
    1.0 - (1.0 - w.powi(3)).powi(iterations as i32)
}

pub fn progressive_x(
    corrs: &[Correspondence],
    cam: &CameraIntrinsics,
    params: &FitParams,
) -> Result<Vec<PoseHypothesis>> {
    if corrs.len() < 3 {
        return Err(Error::TooFewPoints { required: 3, available: corrs.len() });
    }
    let set = CorrespondenceSet::new(corrs.to_vec());
    let graph = build_neighborhood_graph(corrs, params.tau_d);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let limit = params.max_instances.unwrap_or(usize::MAX);
    let mut hypotheses: Vec<PoseHypothesis> = Vec::new();
    let mut rejections = 0;

    while hypotheses.len() < limit {
        let poses: Vec<RigidPose> = hypotheses.iter().map(|h| h.pose).collect();
        let explained = (!poses.is_empty()).then(|| explained_errors(&set, &poses, cam));
        let proposal = match gc_ransac_with_rng(&set, &graph, cam, params, explained.as_deref(), &mut rng) {
            Ok(p) => p,
            Err(Error::NoHypothesis) => break,
            Err(e) => return Err(e),
        };
        if let Some(explained) = &explained {
            let fresh = proposal.inliers.iter().filter(|&&i| explained[i] >= params.tau_r).count();
            let w = fresh as f64 / set.len() as f64;
            if instance_probability(w, params.tau_i) < params.tau_p {
                break;
            }
            if jaccard_inliers(&proposal.inliers, &hypotheses) >= params.tau_j {
                rejections += 1;
                if rejections >= MAX_REJECTIONS {
                    break;
                }
                continue;
            }
        }
        rejections = 0;
        hypotheses.push(proposal);
        if hypotheses.len() >= 2 {
            hypotheses = pearl_consolidate(&hypotheses, &set, &graph, cam, params).hypotheses;
        }
    }
    Ok(hypotheses)
}
