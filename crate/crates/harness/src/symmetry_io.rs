//! Symmetry annotations, keyed by object id:
//!
//! ```json
//! {"1": {"discrete": [{"R": [9 values], "t": [3 values]}],
//!        "continuous": [{"axis": [3 values], "point": [3 values], "steps": 72}]}}
//! ```
//!
//! The expanded set holds every discrete transform (and the identity)
//! composed with every discretized continuous rotation.

use std::collections::BTreeMap;
use std::path::Path;

use pose_forge::geometry::Vec3;
use pose_forge::metrics::SymmetrySet;
use pose_forge::RigidPose;
use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, HarnessError, Result};
use crate::scene::{pose_from_rows, rotation_rows};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSymmetry {
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSymmetry {
    pub axis: Vec<f64>,
    #[serde(default = "origin")]
    pub point: Vec<f64>,
    pub steps: usize,
}

fn origin() -> Vec<f64> {
    vec![0.0; 3]
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectSymmetries {
    #[serde(default)]
    pub discrete: Vec<DiscreteSymmetry>,
    #[serde(default)]
    pub continuous: Vec<ContinuousSymmetry>,
}

impl ObjectSymmetries {
    pub fn from_set(set: &SymmetrySet) -> Self {
        let discrete = set
            .transforms
            .iter()
            .map(|p| DiscreteSymmetry {
                r: rotation_rows(&p.rotation).to_vec(),
                t: p.translation.iter().copied().collect(),
            })
            .collect();
        Self { discrete, continuous: Vec::new() }
    }

    pub fn expand(&self, context: &str) -> Result<SymmetrySet> {
        let mut discrete = vec![RigidPose::identity()];
        for (k, d) in self.discrete.iter().enumerate() {
            let ctx = format!("{context} discrete[{k}]");
            if d.r.len() != 9 || d.t.len() != 3 {
                return Err(HarnessError::Validation(format!("{ctx}: expected 9 rotation and 3 translation values")));
            }
            discrete.push(pose_from_rows(&ctx, &d.r, &d.t)?);
        }
        let mut continuous = vec![RigidPose::identity()];
        for (k, c) in self.continuous.iter().enumerate() {
            let ctx = format!("{context} continuous[{k}]");
            let axis = vec3(&ctx, "axis", &c.axis)?;
            let point = vec3(&ctx, "point", &c.point)?;
            if axis.norm() < 1e-12 || c.steps == 0 {
                return Err(HarnessError::Validation(format!("{ctx}: axis must be non-zero and steps positive")));
            }
            let rotations = SymmetrySet::continuous(&axis, &point, c.steps).transforms;
            continuous = continuous.iter().flat_map(|a| rotations.iter().map(move |b| a.compose(b))).collect();
        }
        let all = discrete.iter().flat_map(|d| continuous.iter().map(move |c| d.compose(c))).collect();
        Ok(SymmetrySet::from_transforms(all))
    }
}

fn vec3(ctx: &str, name: &str, v: &[f64]) -> Result<Vec3> {
    if v.len() != 3 || v.iter().any(|x| !x.is_finite()) {
        return Err(HarnessError::Validation(format!("{ctx}: `{name}` must hold 3 finite values")));
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

pub type SymmetryAnnotations = BTreeMap<u32, ObjectSymmetries>;

pub fn parse_symmetries(bytes: &[u8], context: &str) -> Result<SymmetryAnnotations> {
    let raw: BTreeMap<String, ObjectSymmetries> = serde_json::from_slice(bytes)
        .map_err(|e| HarnessError::parse_at_line(context, e.line(), e.to_string()))?;
    raw.into_iter()
        .map(|(k, v)| {
            let id = k
                .trim()
                .parse()
                .map_err(|_| HarnessError::Validation(format!("{context}: object key `{k}` is not an integer")))?;
            Ok((id, v))
        })
        .collect()
}

pub fn load_symmetries(path: &Path) -> Result<SymmetryAnnotations> {
    parse_symmetries(&read_file(path)?, &path.display().to_string())
}

pub fn write_symmetries(ann: &SymmetryAnnotations) -> Vec<u8> {
    let map: BTreeMap<String, &ObjectSymmetries> = ann.iter().map(|(k, v)| (k.to_string(), v)).collect();
    let mut out = serde_json::to_vec_pretty(&map).unwrap_or_default();
    out.push(b'\n');
    out
}

pub fn save_symmetries(path: &Path, ann: &SymmetryAnnotations) -> Result<()> {
    write_file(path, &write_symmetries(ann))
}
