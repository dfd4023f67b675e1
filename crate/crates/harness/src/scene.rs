//! Scene annotations in the BOP layout: `scene_camera.json`, `scene_gt.json`
//! and the optional `scene_gt_info.json`, all keyed by image id.

use std::collections::BTreeMap;
use std::path::Path;

use pose_forge::geometry::{Mat3, Vec3};
use pose_forge::metrics::GroundTruthInstance;
use pose_forge::{CameraIntrinsics, RigidPose};
use serde::Deserialize;

use crate::error::{read_file, HarnessError, Result};

/// Tolerance on `R^T R - I` for annotated rotations.
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-3;

/// One annotated image.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub scene_id: u32,
    pub im_id: u32,
    pub camera: CameraIntrinsics,
    /// Millimeters per stored depth unit.
    pub depth_scale: f64,
    pub instances: Vec<GroundTruthInstance>,
    /// False until visible fractions have been loaded or computed; until then
    /// every `visible_fraction` is 1.
    pub visibility_known: bool,
}

#[derive(Deserialize)]
struct CameraEntry {
    #[serde(rename = "cam_K")]
    cam_k: Option<Vec<f64>>,
    depth_scale: Option<f64>,
    width: Option<usize>,
    height: Option<usize>,
}

#[derive(Deserialize)]
struct GtEntry {
    #[serde(rename = "cam_R_m2c")]
    cam_r_m2c: Option<Vec<f64>>,
    cam_t_m2c: Option<Vec<f64>>,
    obj_id: Option<u32>,
}

#[derive(Deserialize)]
struct GtInfoEntry {
    visib_fract: Option<f64>,
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| HarnessError::parse_at_line(path.display().to_string(), e.line(), e.to_string()))
}

fn im_key(path: &Path, key: &str) -> Result<u32> {
    key.trim()
        .parse()
        .map_err(|_| HarnessError::Validation(format!("{}: image key `{key}` is not an integer", path.display())))
}

fn exact_len<'a>(ctx: &str, field: &str, v: &'a Option<Vec<f64>>, n: usize) -> Result<&'a [f64]> {
    let v = v.as_deref().ok_or_else(|| HarnessError::missing(ctx, field))?;
    if v.len() != n {
        return Err(HarnessError::Validation(format!("{ctx}: `{field}` has {} values, expected {n}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(HarnessError::Validation(format!("{ctx}: `{field}` holds a non-finite value")));
    }
    Ok(v)
}

/// Builds a pose from a row-major rotation and a translation, checking
/// orthonormality within [`ORTHONORMALITY_TOLERANCE`].
pub fn pose_from_rows(ctx: &str, r: &[f64], t: &[f64]) -> Result<RigidPose> {
    let rot = Mat3::from_row_slice(r);
    RigidPose::with_tolerance(rot, Vec3::new(t[0], t[1], t[2]), ORTHONORMALITY_TOLERANCE)
        .map_err(|e| HarnessError::Validation(format!("{ctx}: {e}")))
}

/// Per-image cameras: `(camera, depth_scale)`. Images without `width` and
/// `height` use `default_size`.
pub fn load_cameras(path: &Path, default_size: Option<(usize, usize)>) -> Result<BTreeMap<u32, (CameraIntrinsics, f64)>> {
    let raw: BTreeMap<String, CameraEntry> = parse_json(path)?;
    let mut out = BTreeMap::new();
    for (key, e) in raw {
        let id = im_key(path, &key)?;
        let ctx = format!("{} [{key}]", path.display());
        let k = exact_len(&ctx, "cam_K", &e.cam_k, 9)?;
        let (w, h) = match (e.width, e.height, default_size) {
            (Some(w), Some(h), _) => (w, h),
            (_, _, Some(size)) => size,
            _ => return Err(HarnessError::missing(ctx, "width/height")),
        };
        let cam = CameraIntrinsics::new(k[0], k[4], k[2], k[5], w, h)
            .map_err(|err| HarnessError::Validation(format!("{ctx}: {err}")))?;
        let scale = e.depth_scale.unwrap_or(1.0);
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(HarnessError::Validation(format!("{ctx}: depth_scale must be positive, got {scale}")));
        }
        out.insert(id, (cam, scale));
    }
    Ok(out)
}

/// Per-image ground-truth poses.
pub fn load_ground_truth(path: &Path) -> Result<BTreeMap<u32, Vec<GroundTruthInstance>>> {
    let raw: BTreeMap<String, Vec<GtEntry>> = parse_json(path)?;
    let mut out = BTreeMap::new();
    for (key, entries) in raw {
        let id = im_key(path, &key)?;
        let mut instances = Vec::with_capacity(entries.len());
        for (k, e) in entries.iter().enumerate() {
            let ctx = format!("{} [{key}][{k}]", path.display());
            let r = exact_len(&ctx, "cam_R_m2c", &e.cam_r_m2c, 9)?;
            let t = exact_len(&ctx, "cam_t_m2c", &e.cam_t_m2c, 3)?;
            let object_id = e.obj_id.ok_or_else(|| HarnessError::missing(&ctx, "obj_id"))?;
            instances.push(GroundTruthInstance { object_id, pose: pose_from_rows(&ctx, r, t)?, visible_fraction: 1.0 });
        }
        out.insert(id, instances);
    }
    Ok(out)
}

/// Per-image visible fractions, in instance order.
pub fn load_ground_truth_info(path: &Path) -> Result<BTreeMap<u32, Vec<f64>>> {
    let raw: BTreeMap<String, Vec<GtInfoEntry>> = parse_json(path)?;
    let mut out = BTreeMap::new();
    for (key, entries) in raw {
        let id = im_key(path, &key)?;
        let mut v = Vec::with_capacity(entries.len());
        for (k, e) in entries.iter().enumerate() {
            let ctx = format!("{} [{key}][{k}]", path.display());
            let f = e.visib_fract.ok_or_else(|| HarnessError::missing(&ctx, "visib_fract"))?;
            if !(0.0..=1.0).contains(&f) {
                return Err(HarnessError::Validation(format!("{ctx}: visib_fract {f} outside [0, 1]")));
            }
            v.push(f);
        }
        out.insert(id, v);
    }
    Ok(out)
}

/// Joins ground truth and cameras into one record per annotated image.
pub fn load_scene(
    gt_path: &Path,
    camera_path: &Path,
    scene_id: u32,
    default_size: Option<(usize, usize)>,
) -> Result<Vec<SceneRecord>> {
    let gt = load_ground_truth(gt_path)?;
    let cams = load_cameras(camera_path, default_size)?;
    gt.into_iter()
        .map(|(im_id, instances)| {
            let &(camera, depth_scale) = cams.get(&im_id).ok_or_else(|| {
                HarnessError::missing(camera_path.display().to_string(), format!("image {im_id}"))
            })?;
            Ok(SceneRecord { scene_id, im_id, camera, depth_scale, instances, visibility_known: false })
        })
        .collect()
}

/// Loads a scene directory, attaching `scene_gt_info.json` when present. The
/// scene id is the directory name.
pub fn load_scene_dir(dir: &Path, default_size: Option<(usize, usize)>) -> Result<Vec<SceneRecord>> {
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let scene_id = name
        .parse()
        .map_err(|_| HarnessError::Validation(format!("{}: scene directory name is not an integer", dir.display())))?;
    let mut records = load_scene(&dir.join("scene_gt.json"), &dir.join("scene_camera.json"), scene_id, default_size)?;
    let info_path = dir.join("scene_gt_info.json");
    if info_path.exists() {
        let info = load_ground_truth_info(&info_path)?;
        for r in &mut records {
            let Some(v) = info.get(&r.im_id) else { continue };
            if v.len() != r.instances.len() {
                return Err(HarnessError::Validation(format!(
                    "{}: image {} lists {} entries for {} instances",
                    info_path.display(),
                    r.im_id,
                    v.len(),
                    r.instances.len()
                )));
            }
            for (inst, &f) in r.instances.iter_mut().zip(v) {
                inst.visible_fraction = f;
            }
            r.visibility_known = true;
        }
    }
    Ok(records)
}

/// Row-major rotation values.
pub fn rotation_rows(r: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = r[(i, j)];
        }
    }
    out
}

/// Serializes ground truth in the `scene_gt.json` layout.
pub fn ground_truth_json(images: &BTreeMap<u32, Vec<GroundTruthInstance>>) -> serde_json::Value {
    let map = images
        .iter()
        .map(|(id, insts)| {
            let list = insts
                .iter()
                .map(|g| {
                    serde_json::json!({
                        "cam_R_m2c": rotation_rows(&g.pose.rotation),
                        "cam_t_m2c": [g.pose.translation.x, g.pose.translation.y, g.pose.translation.z],
                        "obj_id": g.object_id,
                    })
                })
                .collect();
            (id.to_string(), serde_json::Value::Array(list))
        })
        .collect();
    serde_json::Value::Object(map)
}

/// Serializes cameras in the `scene_camera.json` layout (with width/height).
pub fn cameras_json(cams: &BTreeMap<u32, (CameraIntrinsics, f64)>) -> serde_json::Value {
    let map = cams
        .iter()
        .map(|(id, (c, scale))| {
            let k = rotation_rows(&c.k_matrix());
            (
                id.to_string(),
                serde_json::json!({ "cam_K": k, "depth_scale": scale, "width": c.width, "height": c.height }),
            )
        })
        .collect();
    serde_json::Value::Object(map)
}

/// Serializes visible fractions in the `scene_gt_info.json` layout.
pub fn ground_truth_info_json(info: &BTreeMap<u32, Vec<f64>>) -> serde_json::Value {
    let map = info
        .iter()
        .map(|(id, v)| {
            let list = v.iter().map(|f| serde_json::json!({ "visib_fract": f })).collect();
            (id.to_string(), serde_json::Value::Array(list))
        })
        .collect();
    serde_json::Value::Object(map)
}
