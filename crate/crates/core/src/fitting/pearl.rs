//! Multi-hypothesis consolidation: labels every correspondence with one
//! hypothesis or as an outlier by alpha-expansion, refits the hypotheses on
//! their labels and drops the ones left without support.

use super::gc_ransac::refit;
use super::graph::NeighborhoodGraph;
use super::maxflow::MaxFlow;
use super::{quality_single, CorrespondenceSet, FitParams, PoseHypothesis};
use crate::geometry::{CameraIntrinsics, RigidPose};

const MAX_SWEEPS: usize = 5;
const MAX_ROUNDS: usize = 5;

#[derive(Debug, Clone)]
pub struct PearlOutcome {
    /// Surviving hypotheses; `inliers` holds the correspondences labeled with each.
    pub hypotheses: Vec<PoseHypothesis>,
    /// Final label per correspondence, `None` for outliers.
    pub labels: Vec<Option<usize>>,
    /// Energy after the initial labeling and after every accepted move or refit.
    pub energies: Vec<f64>,
}

/// Data costs `min(1, e^2 / tau_r^2)`, one row per hypothesis.
fn data_costs(poses: &[RigidPose], set: &CorrespondenceSet, cam: &CameraIntrinsics, tau_r: f64) -> Vec<Vec<f64>> {
    poses
        .iter()
        .map(|p| set.errors(p, cam).into_iter().map(|e| (e * e / (tau_r * tau_r)).min(1.0)).collect())
        .collect()
}

struct Problem<'a> {
    costs: Vec<Vec<f64>>,
    graph: &'a NeighborhoodGraph,
    lambda: f64,
    beta: f64,
}

impl Problem<'_> {
    fn unary(&self, p: usize, label: Option<usize>) -> f64 {
        label.map_or(1.0, |h| self.costs[h][p])
    }

    fn energy(&self, labels: &[Option<usize>]) -> f64 {
        let data: f64 = labels.iter().enumerate().map(|(p, &l)| self.unary(p, l)).sum();
        let cut = self.graph.edges.iter().filter(|&&(i, j)| labels[i] != labels[j]).count();
        let mut used = vec![false; self.costs.len()];
        labels.iter().flatten().for_each(|&h| used[h] = true);
        let active = used.iter().filter(|&&u| u).count();
        data + self.lambda * cut as f64 + self.beta * active as f64
    }

    /// Optimal expansion of `alpha` over the data and smoothness terms.
    fn expand(&self, labels: &[Option<usize>], alpha: Option<usize>) -> Vec<Option<usize>> {
        let n = labels.len();
        let (s, t) = (n, n + 1);
        let mut g = MaxFlow::new(n + 2);
        // x_p = 1 (sink side) switches p to alpha.
        let mut linear: Vec<f64> = (0..n).map(|p| self.unary(p, alpha) - self.unary(p, labels[p])).collect();
        for &(p, q) in &self.graph.edges {
            let potts = |a: Option<usize>, b: Option<usize>| if a == b { 0.0 } else { self.lambda };
            let e00 = potts(labels[p], labels[q]);
            let e01 = potts(labels[p], alpha);
            let e10 = potts(alpha, labels[q]);
            let e11 = 0.0;
            linear[p] += e10 - e00;
            linear[q] += e11 - e10;
            let pair = e01 + e10 - e00 - e11;
            if pair > 0.0 {
                g.add_edge(p, q, pair, 0.0);
            }
        }
        for (p, &c) in linear.iter().enumerate() {
            if c > 0.0 {
                g.add_edge(s, p, c, 0.0);
            } else if c < 0.0 {
                g.add_edge(p, t, -c, 0.0);
            }
        }
        g.max_flow(s, t);
        // Ties keep the current label.
        let sink = g.sink_side(t);
        (0..n).map(|p| if sink[p] { alpha } else { labels[p] }).collect()
    }

    /// Relabels every correspondence of hypothesis `h` to its cheapest other
    /// active label.
    fn remove(&self, labels: &[Option<usize>], h: usize) -> Vec<Option<usize>> {
        let mut active: Vec<Option<usize>> = vec![None];
        let mut used = vec![false; self.costs.len()];
        labels.iter().flatten().for_each(|&k| used[k] = true);
        active.extend((0..self.costs.len()).filter(|&k| k != h && used[k]).map(Some));
        labels
            .iter()
            .enumerate()
            .map(|(p, &l)| {
                if l != Some(h) {
                    return l;
                }
                active
                    .iter()
                    .copied()
                    .min_by(|&a, &b| self.unary(p, a).total_cmp(&self.unary(p, b)))
                    .unwrap_or(None)
            })
            .collect()
    }

    /// Alpha-expansion plus label-removal moves; every accepted move lowers
    /// the energy.
    fn minimize(&self, labels: &mut Vec<Option<usize>>, energy: &mut f64, trace: &mut Vec<f64>) {
        let m = self.costs.len();
        for _ in 0..MAX_SWEEPS {
            let mut changed = false;
            let candidates = (0..m).map(Some).chain(std::iter::once(None));
            for alpha in candidates {
                let next = self.expand(labels, alpha);
                let e = self.energy(&next);
                if e < *energy - 1e-12 {
                    *labels = next;
                    *energy = e;
                    trace.push(e);
                    changed = true;
                }
            }
            for h in 0..m {
                if !labels.contains(&Some(h)) {
                    continue;
                }
                let next = self.remove(labels, h);
                let e = self.energy(&next);
                if e < *energy - 1e-12 {
                    *labels = next;
                    *energy = e;
                    trace.push(e);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
}

/// Energy of a labeling: data costs, Potts smoothness over the graph and a
/// label cost per hypothesis in use.
pub fn pearl_energy(
    labels: &[Option<usize>],
    poses: &[RigidPose],
    set: &CorrespondenceSet,
    graph: &NeighborhoodGraph,
    cam: &CameraIntrinsics,
    params: &FitParams,
) -> f64 {
    let problem = Problem {
        costs: data_costs(poses, set, cam, params.tau_r),
        graph,
        lambda: params.lambda_gc,
        beta: params.label_cost_fraction * set.len() as f64,
    };
    problem.energy(labels)
}

/// Alternates labeling and refitting until neither lowers the energy.
pub fn pearl_consolidate(
    hypotheses: &[PoseHypothesis],
    set: &CorrespondenceSet,
    graph: &NeighborhoodGraph,
    cam: &CameraIntrinsics,
    params: &FitParams,
) -> PearlOutcome {
    let n = set.len();
    let mut poses: Vec<RigidPose> = hypotheses.iter().map(|h| h.pose).collect();
    let mut problem = Problem {
        costs: data_costs(&poses, set, cam, params.tau_r),
        graph,
        lambda: params.lambda_gc,
        beta: params.label_cost_fraction * n as f64,
    };
    // Start from the cheapest label per correspondence.
    let mut labels: Vec<Option<usize>> = (0..n)
        .map(|p| {
            (0..poses.len())
                .filter(|&h| problem.costs[h][p] < 1.0)
                .min_by(|&a, &b| problem.costs[a][p].total_cmp(&problem.costs[b][p]))
        })
        .collect();
    let mut energy = problem.energy(&labels);
    let mut trace = vec![energy];

    for _ in 0..MAX_ROUNDS {
        problem.minimize(&mut labels, &mut energy, &mut trace);
        let mut refitted = false;
        for h in 0..poses.len() {
            let members: Vec<usize> = (0..n).filter(|&p| labels[p] == Some(h)).collect();
            let Some(pose) = refit(&set.subset(&members), &poses[h], cam) else { continue };
            let mut trial = poses.clone();
            trial[h] = pose;
            let costs = data_costs(&trial[h..h + 1], set, cam, params.tau_r).remove(0);
            let saved = std::mem::replace(&mut problem.costs[h], costs);
            let e = problem.energy(&labels);
            if e < energy - 1e-12 {
                poses[h] = pose;
                energy = e;
                trace.push(e);
                refitted = true;
            } else {
                problem.costs[h] = saved;
            }
        }
        if !refitted {
            break;
        }
    }

    // Drop unsupported hypotheses and compact the labels.
    let mut remap = vec![None; poses.len()];
    let mut kept = Vec::new();
    for (h, pose) in poses.iter().enumerate() {
        let inliers: Vec<usize> = (0..n).filter(|&p| labels[p] == Some(h)).collect();
        if inliers.is_empty() {
            continue;
        }
        remap[h] = Some(kept.len());
        kept.push(PoseHypothesis { pose: *pose, quality: quality_single(pose, set, cam, params.tau_r), inliers });
    }
    let labels = labels.into_iter().map(|l| l.and_then(|h| remap[h])).collect();
    PearlOutcome { hypotheses: kept, labels, energies: trace }
}
