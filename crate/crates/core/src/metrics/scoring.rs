//! Matching of estimates to ground truth, recall and Average Recall.

use crate::geometry::RigidPose;

/// Minimum visible fraction for a ground-truth instance to be evaluated.
pub const DEFAULT_VISIBILITY_CUTOFF: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthInstance {
    pub object_id: u32,
    pub pose: RigidPose,
    pub visible_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub object_id: u32,
    pub pose: RigidPose,
    pub score: f64,
}

/// Errors of every estimate against every ground-truth instance of one image;
/// `+inf` for pairs of different objects.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMatrix {
    pub estimates: Vec<PoseEstimate>,
    pub ground_truth: Vec<GroundTruthInstance>,
    /// `errors[e][g]`.
    pub errors: Vec<Vec<f64>>,
}

impl ErrorMatrix {
    pub fn new(
        estimates: Vec<PoseEstimate>,
        ground_truth: Vec<GroundTruthInstance>,
        error: impl Fn(&PoseEstimate, &GroundTruthInstance) -> f64,
    ) -> Self {
        let errors = estimates
            .iter()
            .map(|e| {
                ground_truth
                    .iter()
                    .map(|g| if e.object_id == g.object_id { error(e, g) } else { f64::INFINITY })
                    .collect()
            })
            .collect();
        Self { estimates, ground_truth, errors }
    }

    /// Same pairs with every error mapped through `f`.
    pub fn map(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let errors = self
            .errors
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().enumerate().map(|(j, &e)| f(i, j, e)).collect())
            .collect();
        Self { estimates: self.estimates.clone(), ground_truth: self.ground_truth.clone(), errors }
    }

    /// `(correct, eligible)` under the greedy matching. Estimates are visited
    /// by decreasing score (ties by index); each claims the unmatched eligible
    /// instance with the smallest error below `threshold` (ties by index).
    pub fn count_correct(&self, threshold: f64, visibility_cutoff: f64) -> (usize, usize) {
        let eligible: Vec<bool> =
            self.ground_truth.iter().map(|g| g.visible_fraction >= visibility_cutoff).collect();
        let mut order: Vec<usize> = (0..self.estimates.len()).collect();
        order.sort_by(|&a, &b| self.estimates[b].score.total_cmp(&self.estimates[a].score).then(a.cmp(&b)));
        let mut taken = vec![false; self.ground_truth.len()];
        let mut correct = 0;
        for e in order {
            let best = (0..self.ground_truth.len())
                .filter(|&g| eligible[g] && !taken[g] && self.errors[e][g] < threshold)
                .min_by(|&a, &b| self.errors[e][a].total_cmp(&self.errors[e][b]).then(a.cmp(&b)));
            if let Some(g) = best {
                taken[g] = true;
                correct += 1;
            }
        }
        (correct, eligible.iter().filter(|&&b| b).count())
    }
}

/// Recall over several images: correct matches divided by eligible instances
/// (0 when nothing is eligible).
pub fn recall(images: &[ErrorMatrix], threshold: f64, visibility_cutoff: f64) -> f64 {
    let (c, n) = images.iter().fold((0, 0), |(c, n), m| {
        let (ci, ni) = m.count_correct(threshold, visibility_cutoff);
        (c + ci, n + ni)
    });
    if n == 0 {
        0.0
    } else {
        c as f64 / n as f64
    }
}

/// Recall of one image's estimates against its ground truth.
pub fn match_and_recall(
    estimates: &[PoseEstimate],
    ground_truth: &[GroundTruthInstance],
    error: impl Fn(&PoseEstimate, &GroundTruthInstance) -> f64,
    threshold: f64,
    visibility_cutoff: f64,
) -> f64 {
    let m = ErrorMatrix::new(estimates.to_vec(), ground_truth.to_vec(), error);
    recall(std::slice::from_ref(&m), threshold, visibility_cutoff)
}

/// Mean of per-setting recalls (0 for none).
pub fn average_recall(recalls: &[f64]) -> f64 {
    if recalls.is_empty() {
        0.0
    } else {
        recalls.iter().sum::<f64>() / recalls.len() as f64
    }
}

/// `0.05, 0.10, ..., 0.50`.
pub fn five_to_fifty_percent() -> Vec<f64> {
    (1..=10).map(|k| k as f64 * 0.05).collect()
}

/// Misalignment tolerance used by VSD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VsdTau {
    /// Fraction of the object diameter.
    DiameterFraction(f64),
    /// Absolute value (mm).
    Millimeters(f64),
}

impl VsdTau {
    pub fn resolve(&self, diameter: f64) -> f64 {
        match *self {
            VsdTau::DiameterFraction(f) => f * diameter,
            VsdTau::Millimeters(mm) => mm,
        }
    }
}

/// Evaluation settings of a scoring protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringProtocol {
    pub vsd_taus: Vec<VsdTau>,
    pub vsd_thetas: Vec<f64>,
    pub vsd_delta: f64,
    /// MSSD thresholds as fractions of the object diameter.
    pub mssd_thresholds: Vec<f64>,
    /// MSPD thresholds as multiples of `r = width / 640`.
    pub mspd_thresholds: Vec<f64>,
    pub visibility_cutoff: f64,
}

impl ScoringProtocol {
    /// Multi-setting protocol: 10 x 10 VSD settings, 10 MSSD and 10 MSPD thresholds.
    pub fn bop() -> Self {
        Self {
            vsd_taus: five_to_fifty_percent().into_iter().map(VsdTau::DiameterFraction).collect(),
            vsd_thetas: five_to_fifty_percent(),
            vsd_delta: super::vsd::DEFAULT_VSD_DELTA,
            mssd_thresholds: five_to_fifty_percent(),
            mspd_thresholds: (1..=10).map(|k| 5.0 * k as f64).collect(),
            visibility_cutoff: DEFAULT_VISIBILITY_CUTOFF,
        }
    }

    /// Single VSD setting of the 2017 challenge.
    pub fn siso2017() -> Self {
        Self {
            vsd_taus: vec![VsdTau::Millimeters(super::vsd::DEFAULT_VSD_TAU)],
            vsd_thetas: vec![super::vsd::SISO_VSD_THETA],
            ..Self::bop()
        }
    }
}

/// Average Recall scores of one dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArScores {
    pub vsd: f64,
    pub mssd: f64,
    pub mspd: f64,
}

impl ArScores {
    /// Mean of the three scores.
    pub fn ar_d(&self) -> f64 {
        (self.vsd + self.mssd + self.mspd) / 3.0
    }
}

/// Per-image error matrices for one dataset. `vsd[k]` holds VSD errors under
/// `protocol.vsd_taus[k]`; MSSD errors are divided by the object diameter and
/// MSPD errors by `r`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetErrors {
    pub vsd: Vec<Vec<ErrorMatrix>>,
    pub mssd: Vec<ErrorMatrix>,
    pub mspd: Vec<ErrorMatrix>,
}

pub fn ar_scores(errors: &DatasetErrors, protocol: &ScoringProtocol) -> ArScores {
    let cutoff = protocol.visibility_cutoff;
    let mut vsd = Vec::new();
    for per_tau in &errors.vsd {
        for &theta in &protocol.vsd_thetas {
            vsd.push(recall(per_tau, theta, cutoff));
        }
    }
    let mssd: Vec<f64> = protocol.mssd_thresholds.iter().map(|&t| recall(&errors.mssd, t, cutoff)).collect();
    let mspd: Vec<f64> = protocol.mspd_thresholds.iter().map(|&t| recall(&errors.mspd, t, cutoff)).collect();
    ArScores { vsd: average_recall(&vsd), mssd: average_recall(&mssd), mspd: average_recall(&mspd) }
}

/// Mean of per-dataset `AR_D` values.
pub fn ar_core(per_dataset: &[ArScores]) -> f64 {
    average_recall(&per_dataset.iter().map(ArScores::ar_d).collect::<Vec<_>>())
}
