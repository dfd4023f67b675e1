//! Global symmetry discovery: rigid transforms that map the model's vertex
//! set onto itself within a Hausdorff tolerance.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{absolute_orientation, point_set_diameter, rotation_angle_between, vertex_centroid, RigidPose, TriangleMesh, Vec3};
use crate::spatial::KdTree;

const ICP_ITERATIONS: usize = 30;

/// Symmetry transforms of a model; always contains the identity first.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrySet {
    pub transforms: Vec<RigidPose>,
}

impl SymmetrySet {
    pub fn identity() -> Self {
        Self { transforms: vec![RigidPose::identity()] }
    }

    /// Adds the identity in front unless some transform already is one.
    pub fn from_transforms(transforms: Vec<RigidPose>) -> Self {
        let is_identity =
            |p: &RigidPose| rotation_angle_between(&p.rotation, &crate::geometry::Mat3::identity()) < 1e-9 && p.translation.norm() < 1e-9;
        let mut out = vec![RigidPose::identity()];
        out.extend(transforms.into_iter().filter(|p| !is_identity(p)));
        Self { transforms: out }
    }

    /// Rotations about the axis through `point` with direction `axis`, in
    /// `steps` equal increments over a full turn.
    pub fn continuous(axis: &Vec3, point: &Vec3, steps: usize) -> Self {
        let transforms = (1..steps.max(1))
            .map(|k| {
                let angle = std::f64::consts::TAU * k as f64 / steps as f64;
                let r = RigidPose::from_axis_angle(axis, angle, Vec3::zeros()).rotation;
                RigidPose::from_parts_unchecked(r, point - r * point)
            })
            .collect();
        Self::from_transforms(transforms)
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryParams {
    /// Hausdorff tolerance (mm); `None` uses `max(15, 0.1 * diameter)`.
    pub epsilon: Option<f64>,
    /// Number of rotation axes sampled over a hemisphere.
    pub axis_samples: usize,
    /// In-plane angle step (degrees).
    pub angle_step_deg: f64,
    /// Transforms whose relative rotation is below this angle are merged (degrees).
    pub dedup_deg: f64,
}

impl Default for SymmetryParams {
    fn default() -> Self {
        Self { epsilon: None, axis_samples: 312, angle_step_deg: 6.0, dedup_deg: 3.0 }
    }
}

/// Default Hausdorff tolerance for a model of diameter `d`.
pub fn symmetry_epsilon(diameter: f64) -> f64 {
    15f64.max(0.1 * diameter)
}

/// Largest distance from a point of `moved` to its nearest point in the tree,
/// giving up once it exceeds `limit`.
fn directed_hausdorff(moved: &[Vec3], tree: &KdTree, limit: f64) -> f64 {
    let mut worst = 0.0f64;
    for p in moved {
        let d = tree.nearest(p).map_or(f64::INFINITY, |(_, d2)| d2.sqrt());
        worst = worst.max(d);
        if worst > limit {
            break;
        }
    }
    worst
}

/// Symmetric Hausdorff distance between `pose(vertices)` and `vertices`.
pub fn vertex_hausdorff(pose: &RigidPose, vertices: &[Vec3]) -> f64 {
    let tree = KdTree::new(vertices);
    hausdorff_with(pose, vertices, &tree, f64::INFINITY)
}

fn hausdorff_with(pose: &RigidPose, vertices: &[Vec3], tree: &KdTree, limit: f64) -> f64 {
    let moved: Vec<Vec3> = vertices.iter().map(|x| pose.transform(x)).collect();
    let forward = directed_hausdorff(&moved, tree, limit);
    if forward > limit {
        return forward;
    }
    let back_tree = KdTree::new(&moved);
    forward.max(directed_hausdorff(vertices, &back_tree, limit))
}

/// Nearly uniform unit directions over the upper hemisphere (z >= 0).
fn hemisphere_axes(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

fn icp(start: &RigidPose, vertices: &[Vec3], tree: &KdTree) -> RigidPose {
    let mut pose = *start;
    for _ in 0..ICP_ITERATIONS {
        let moved: Vec<Vec3> = vertices.iter().map(|x| pose.transform(x)).collect();
        let targets: Vec<Vec3> = moved.iter().map(|p| vertices[tree.nearest(p).map_or(0, |(i, _)| i)]).collect();
        let Some(next) = absolute_orientation(vertices, &targets) else { break };
        let step = rotation_angle_between(&next.rotation, &pose.rotation) + (next.translation - pose.translation).norm();
        pose = next;
        if step < 1e-12 {
            break;
        }
    }
    pose
}

/// Discovers the global symmetries of `mesh` by sampling rotations about its
/// vertex centroid, refining each plausible candidate by ICP on the vertex
/// set and keeping those within the Hausdorff tolerance.
pub fn discover_symmetries(mesh: &TriangleMesh, params: &SymmetryParams) -> Result<SymmetrySet> {
    let vertices = &mesh.vertices;
    let d = point_set_diameter(vertices)?;
    if d <= 0.0 {
        return Err(Error::DegenerateMesh("all vertices coincide".into()));
    }
    let eps = params.epsilon.unwrap_or_else(|| symmetry_epsilon(d));
    let c = vertex_centroid(vertices);
    let tree = KdTree::new(vertices);

    let steps = (360.0 / params.angle_step_deg).round().max(1.0) as usize;
    let candidates: Vec<(Vec3, f64)> = hemisphere_axes(params.axis_samples)
        .into_iter()
        .flat_map(|a| (1..steps).map(move |k| (a, (k as f64 * 360.0 / steps as f64).to_radians())))
        .collect();

    let mut accepted: Vec<(f64, RigidPose)> = candidates
        .par_iter()
        .filter_map(|(axis, angle)| {
            let r = RigidPose::from_axis_angle(axis, *angle, Vec3::zeros()).rotation;
            let start = RigidPose::from_parts_unchecked(r, c - r * c);
            // Coarse samples sit within a few degrees of a true symmetry; skip
            // candidates far from any.
            if hausdorff_with(&start, vertices, &tree, 3.0 * eps) > 3.0 * eps {
                return None;
            }
            let refined = icp(&start, vertices, &tree);
            let h = hausdorff_with(&refined, vertices, &tree, eps);
            (h < eps).then_some((h, refined))
        })
        .collect();
    accepted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let dedup = params.dedup_deg.to_radians();
    let mut kept = vec![RigidPose::identity()];
    for (_, pose) in accepted {
        if kept.iter().all(|k| rotation_angle_between(&k.rotation, &pose.rotation) >= dedup) {
            kept.push(pose);
        }
    }
    Ok(SymmetrySet { transforms: kept })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn continuous_and_explicit_sets() {
        let s = SymmetrySet::continuous(&Vec3::z(), &Vec3::new(1.0, 2.0, 0.0), 36);
        assert_eq!(s.len(), 36);
        assert_eq!(s.transforms[0], RigidPose::identity());
        let p = Vec3::new(1.0, 2.0, 7.0);
        assert!(s.transforms.iter().all(|t| (t.transform(&p) - p).norm() < 1e-9));
        let s = SymmetrySet::from_transforms(vec![RigidPose::identity()]);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn hemisphere_axes_are_unit_and_upward() {
        let a = hemisphere_axes(312);
        assert_eq!(a.len(), 312);
        assert!(a.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12 && v.z >= 0.0));
    }

    #[test]
    fn square_plate_has_eight_symmetries() {
        // Box 100 x 100 x 60: dihedral group of order 8. The height stays well
        // above epsilon so that tilted alignments do not pass as symmetries.
        let mut v = Vec::new();
        for &x in &[-50.0, 50.0] {
            for &y in &[-50.0, 50.0] {
                for &z in &[-30.0, 30.0] {
                    v.push(Vec3::new(x, y, z));
                }
            }
        }
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap();
        let s = discover_symmetries(&mesh, &SymmetryParams::default()).unwrap();
        assert_eq!(s.len(), 8);
        for t in &s.transforms {
            assert!(vertex_hausdorff(t, &mesh.vertices) < 1e-6);
        }
    }

    #[test]
    fn degenerate_mesh_is_rejected() {
        let mesh = TriangleMesh { vertices: vec![Vec3::zeros(); 3], triangles: vec![[0, 1, 2]], normals: None };
        assert!(discover_symmetries(&mesh, &SymmetryParams::default()).is_err());
    }
}
