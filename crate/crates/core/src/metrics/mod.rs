//! Pose-error functions and benchmark scoring.

mod pose_errors;
mod scoring;
mod symmetry;
mod vsd;

pub use pose_errors::{e_add, e_adi, e_mspd, e_mssd, e_re, e_te};
pub use scoring::{
    ar_core, ar_scores, average_recall, five_to_fifty_percent, match_and_recall, recall, ArScores, DatasetErrors,
    ErrorMatrix, GroundTruthInstance, PoseEstimate, ScoringProtocol, VsdTau, DEFAULT_VISIBILITY_CUTOFF,
};
pub use symmetry::{discover_symmetries, symmetry_epsilon, vertex_hausdorff, SymmetryParams, SymmetrySet};
pub use vsd::{e_vsd, e_vsd_multi, vsd_from_maps, DEFAULT_VSD_DELTA, DEFAULT_VSD_TAU, SISO_VSD_THETA};
