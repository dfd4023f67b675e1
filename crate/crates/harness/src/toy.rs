//! The bundled toy dataset: a cube and a cylinder seen in four images.
//!
//! Layout (BOP style):
//!
//! ```text
//! models/obj_000001.ply        cube, ASCII
//! models/obj_000002.ply        cylinder, binary
//! models/symmetries.json
//! test/000001/scene_camera.json
//! test/000001/scene_gt.json
//! test/000001/scene_gt_info.json
//! test/000001/depth/000000.png ... 000003.png
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use pose_forge::geometry::{depth_to_distance, Mat3, Vec3};
use pose_forge::metrics::{GroundTruthInstance, SymmetrySet};
use pose_forge::rasterizer::{render_distance_map, visibility_masks, visible_fraction};
use pose_forge::shapes::regular_prism;
use pose_forge::{CameraIntrinsics, RigidPose, TriangleMesh};

use crate::depth::{distance_to_depth, load_depth, save_depth};
use crate::error::{write_file, Result};
use crate::ply::{save_model, PlyFormat};
use crate::scene::{cameras_json, ground_truth_info_json, ground_truth_json};
use crate::symmetry_io::{save_symmetries, ContinuousSymmetry, DiscreteSymmetry, ObjectSymmetries};

pub const CUBE_ID: u32 = 1;
pub const CYLINDER_ID: u32 = 2;
pub const SCENE_ID: u32 = 1;
pub const DEPTH_SCALE: f64 = 0.1;
pub const CUBE_EDGE: f64 = 100.0;
pub const CYLINDER_RADIUS: f64 = 30.0;
pub const CYLINDER_HEIGHT: f64 = 80.0;
pub const CYLINDER_SIDES: usize = 72;
/// Faces of the cube are split into this many cells per side (26 vertices).
/// Finer grids make near-symmetries pass the vertex Hausdorff test.
const CUBE_CELLS: usize = 2;

pub fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).expect("valid toy camera")
}

/// 100 mm cube centered at the origin with every face split into a 2 x 2 grid.
pub fn cube_model() -> TriangleMesh {
    let n = CUBE_CELLS as i64;
    let step = CUBE_EDGE / CUBE_CELLS as f64;
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut vertex = |p: [i64; 3], vertices: &mut Vec<Vec3>| {
        *index.entry(p).or_insert_with(|| {
            vertices.push(Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) * step - Vec3::repeat(CUBE_EDGE / 2.0));
            vertices.len() - 1
        })
    };
    // Each face: fixed axis, fixed side, and an in-plane basis (u, v) with
    // u x v pointing outward.
    for axis in 0..3 {
        for side in [0, n] {
            let (mut u, mut v) = ((axis + 1) % 3, (axis + 2) % 3);
            if side == 0 {
                std::mem::swap(&mut u, &mut v);
            }
            for a in 0..n {
                for b in 0..n {
                    let corner = |da: i64, db: i64| {
                        let mut p = [0; 3];
                        p[axis] = side;
                        p[u] = a + da;
                        p[v] = b + db;
                        p
                    };
                    let q = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)].map(|p| vertex(p, &mut vertices));
                    triangles.push([q[0], q[1], q[2]]);
                    triangles.push([q[0], q[2], q[3]]);
                }
            }
        }
    }
    TriangleMesh { vertices, triangles, normals: None }
}

/// 72-sided prism standing in for a cylinder (diameter 100 mm).
pub fn cylinder_model() -> TriangleMesh {
    regular_prism(CYLINDER_SIDES, CYLINDER_RADIUS, CYLINDER_HEIGHT)
}

/// The 24 proper rotations that map the axis-aligned cube onto itself.
pub fn cube_rotations() -> Vec<Mat3> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::new();
    for p in perms {
        for signs in 0..8 {
            let mut m = Mat3::zeros();
            for (row, &col) in p.iter().enumerate() {
                m[(row, col)] = if signs >> row & 1 == 0 { 1.0 } else { -1.0 };
            }
            if m.determinant() > 0.0 {
                out.push(m);
            }
        }
    }
    out
}

/// Exact symmetry annotations of the two toy models.
pub fn symmetry_annotations() -> BTreeMap<u32, ObjectSymmetries> {
    let cube = SymmetrySet::from_transforms(
        cube_rotations().into_iter().map(|r| RigidPose::from_parts_unchecked(r, Vec3::zeros())).collect(),
    );
    let flip = Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let cylinder = ObjectSymmetries {
        discrete: vec![DiscreteSymmetry { r: crate::scene::rotation_rows(&flip).to_vec(), t: vec![0.0; 3] }],
        continuous: vec![ContinuousSymmetry { axis: vec![0.0, 0.0, 1.0], point: vec![0.0; 3], steps: CYLINDER_SIDES }],
    };
    [(CUBE_ID, ObjectSymmetries::from_set(&cube)), (CYLINDER_ID, cylinder)].into()
}

fn pose(axis: [f64; 3], angle_deg: f64, t: [f64; 3]) -> RigidPose {
    RigidPose::from_axis_angle(&Vec3::from(axis), angle_deg.to_radians(), Vec3::from(t))
}

/// Ground truth per image. Image 2 shows two cubes; in image 3 the cylinder
/// is hidden behind the cube.
pub fn ground_truth() -> BTreeMap<u32, Vec<GroundTruthInstance>> {
    let gt = |object_id, pose| GroundTruthInstance { object_id, pose, visible_fraction: 1.0 };
    [
        (0, vec![
            gt(CUBE_ID, pose([1.0, 1.0, 0.0], 30.0, [-90.0, 0.0, 700.0])),
            gt(CYLINDER_ID, pose([1.0, 0.0, 0.0], 60.0, [100.0, 10.0, 750.0])),
        ]),
        (1, vec![
            gt(CUBE_ID, pose([0.2, 1.0, 0.5], 75.0, [70.0, -50.0, 800.0])),
            gt(CYLINDER_ID, pose([0.0, 1.0, 1.0], 110.0, [-80.0, 60.0, 650.0])),
        ]),
        (2, vec![
            gt(CUBE_ID, pose([1.0, -1.0, 1.0], 20.0, [-140.0, -30.0, 750.0])),
            gt(CUBE_ID, pose([0.0, 0.0, 1.0], 45.0, [150.0, 40.0, 900.0])),
            gt(CYLINDER_ID, pose([1.0, 0.3, 0.0], 35.0, [0.0, 100.0, 700.0])),
        ]),
        (3, vec![
            gt(CUBE_ID, pose([0.0, 1.0, 0.0], 10.0, [0.0, 0.0, 600.0])),
            gt(CYLINDER_ID, pose([1.0, 0.0, 0.0], 90.0, [0.0, 0.0, 950.0])),
        ]),
    ]
    .into()
}

pub fn model(object_id: u32) -> TriangleMesh {
    if object_id == CUBE_ID {
        cube_model()
    } else {
        cylinder_model()
    }
}

/// Distance map of all instances (nearest surface wins).
pub fn render_scene(instances: &[GroundTruthInstance], cam: &CameraIntrinsics) -> pose_forge::geometry::DistanceMap {
    let mut scene = pose_forge::geometry::DistanceMap::zeros(cam.width, cam.height);
    for g in instances {
        let d = render_distance_map(&model(g.object_id), &g.pose, cam);
        for (s, v) in scene.data.iter_mut().zip(&d.data) {
            if *v > 0.0 && (*s == 0.0 || *v < *s) {
                *s = *v;
            }
        }
    }
    scene
}

/// Writes the toy dataset under `root`. Output is byte-for-byte reproducible.
pub fn write_toy_dataset(root: &Path) -> Result<()> {
    let models = root.join("models");
    save_model(&models.join("obj_000001.ply"), &cube_model(), PlyFormat::Ascii)?;
    save_model(&models.join("obj_000002.ply"), &cylinder_model(), PlyFormat::BinaryLittleEndian)?;
    save_symmetries(&models.join("symmetries.json"), &symmetry_annotations())?;

    let scene_dir = root.join("test").join(format!("{SCENE_ID:06}"));
    let cam = camera();
    let gt = ground_truth();
    let mut cams = BTreeMap::new();
    let mut info = BTreeMap::new();
    for (&im_id, instances) in &gt {
        cams.insert(im_id, (cam, DEPTH_SCALE));
        let depth_path = scene_dir.join("depth").join(format!("{im_id:06}.png"));
        save_depth(&depth_path, &distance_to_depth(&render_scene(instances, &cam), &cam), DEPTH_SCALE)?;
        // Visibility against the stored (quantized) depth, as an evaluator sees it.
        let scene = depth_to_distance(&load_depth(&depth_path, DEPTH_SCALE)?, &cam)?;
        let fractions = instances
            .iter()
            .map(|g| {
                let d = render_distance_map(&model(g.object_id), &g.pose, &cam);
                let (_, v_gt) = visibility_masks(&d, &d, &scene, pose_forge::metrics::DEFAULT_VSD_DELTA)?;
                Ok(round_fraction(visible_fraction(&v_gt, &d)?))
            })
            .collect::<Result<Vec<f64>>>()?;
        info.insert(im_id, fractions);
    }
    let pretty = |v: serde_json::Value| {
        let mut s = serde_json::to_vec_pretty(&v).unwrap_or_default();
        s.push(b'\n');
        s
    };
    write_file(&scene_dir.join("scene_camera.json"), &pretty(cameras_json(&cams)))?;
    write_file(&scene_dir.join("scene_gt.json"), &pretty(ground_truth_json(&gt)))?;
    write_file(&scene_dir.join("scene_gt_info.json"), &pretty(ground_truth_info_json(&info)))?;
    Ok(())
}

fn round_fraction(f: f64) -> f64 {
    (f * 1e6).round() / 1e6
}
