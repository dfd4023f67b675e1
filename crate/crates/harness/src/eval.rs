//! Dataset evaluation: error matrices for every image, Average Recall per
//! dataset and object, and the report in table and JSON form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pose_forge::geometry::{depth_to_distance, mesh_diameter, DistanceMap};
use pose_forge::metrics::{
    ar_scores, discover_symmetries, e_mspd, e_mssd, vsd_from_maps, ArScores, DatasetErrors, ErrorMatrix,
    GroundTruthInstance, PoseEstimate, ScoringProtocol, SymmetryParams, SymmetrySet,
};
use pose_forge::rasterizer::{render_distance_map, visibility_masks, visible_fraction};
use pose_forge::TriangleMesh;
use rayon::prelude::*;
use serde::Serialize;

use crate::depth::load_depth;
use crate::error::{HarnessError, Result};
use crate::fit::load_models;
use crate::results::ResultRecord;
use crate::scene::{load_scene_dir, SceneRecord};
use crate::symmetry_io::load_symmetries;

/// MSPD thresholds are multiples of `width / REFERENCE_WIDTH` px.
pub const REFERENCE_WIDTH: f64 = 640.0;

pub struct ModelData {
    pub mesh: TriangleMesh,
    pub diameter: f64,
    pub symmetries: SymmetrySet,
}

pub struct ImageData {
    pub record: SceneRecord,
    /// Scene distances; all zero when the image has no depth file.
    pub scene: DistanceMap,
}

pub struct Dataset {
    pub name: String,
    pub models: BTreeMap<u32, ModelData>,
    pub images: Vec<ImageData>,
}

/// Loads `root/models` (with `symmetries.json` when present; missing objects
/// get discovered symmetries) and every scene under `root/test`.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let name = root.file_name().and_then(|n| n.to_str()).unwrap_or("dataset").to_string();
    let models_dir = root.join("models");
    let meshes = load_models(&models_dir)?;
    let sym_path = models_dir.join("symmetries.json");
    let annotations = if sym_path.exists() { load_symmetries(&sym_path)? } else { BTreeMap::new() };
    let models = meshes
        .into_par_iter()
        .map(|(id, mesh)| {
            let diameter = mesh_diameter(&mesh)?;
            let symmetries = match annotations.get(&id) {
                Some(a) => a.expand(&format!("{} [{id}]", sym_path.display()))?,
                None => discover_symmetries(&mesh, &SymmetryParams::default())?,
            };
            Ok((id, ModelData { mesh, diameter, symmetries }))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;

    let test_dir = root.join("test");
    let mut scene_dirs: Vec<PathBuf> = std::fs::read_dir(&test_dir)
        .map_err(|e| HarnessError::io(&test_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    scene_dirs.sort();
    let mut images = Vec::new();
    for dir in scene_dirs {
        for record in load_scene_dir(&dir, None)? {
            let depth_path = dir.join("depth").join(format!("{:06}.png", record.im_id));
            let cam = record.camera;
            let scene = if depth_path.exists() {
                depth_to_distance(&load_depth(&depth_path, record.depth_scale)?, &cam)
                    .map_err(|e| HarnessError::Validation(format!("{}: {e}", depth_path.display())))?
            } else {
                DistanceMap::zeros(cam.width, cam.height)
            };
            images.push(ImageData { record, scene });
        }
    }
    for img in &images {
        for g in &img.record.instances {
            if !models.contains_key(&g.object_id) {
                return Err(HarnessError::Validation(format!(
                    "scene {} image {}: no model for object {}",
                    img.record.scene_id, img.record.im_id, g.object_id
                )));
            }
        }
    }
    Ok(Dataset { name, models, images })
}

/// Keeps, per (image, object), the `n` highest-scoring estimates where `n` is
/// the number of annotated instances of that object. Ties keep file order.
pub fn top_n_per_object(results: &[ResultRecord], image: &SceneRecord) -> Vec<PoseEstimate> {
    let mut by_obj: BTreeMap<u32, Vec<&ResultRecord>> = BTreeMap::new();
    for r in results.iter().filter(|r| r.scene_id == image.scene_id && r.im_id == image.im_id) {
        by_obj.entry(r.obj_id).or_default().push(r);
    }
    let mut out = Vec::new();
    for (obj, mut list) in by_obj {
        let n = image.instances.iter().filter(|g| g.object_id == obj).count();
        list.sort_by(|a, b| b.score.total_cmp(&a.score));
        out.extend(list.into_iter().take(n).map(|r| PoseEstimate { object_id: obj, pose: r.pose, score: r.score }));
    }
    out
}

struct ImageErrors {
    vsd: Vec<ErrorMatrix>,
    mssd: ErrorMatrix,
    mspd: ErrorMatrix,
}

fn image_errors(
    img: &ImageData,
    ground_truth: Vec<GroundTruthInstance>,
    estimates: Vec<PoseEstimate>,
    models: &BTreeMap<u32, ModelData>,
    protocol: &ScoringProtocol,
) -> Result<ImageErrors> {
    let cam = &img.record.camera;
    let r = cam.width as f64 / REFERENCE_WIDTH;
    let gt_maps: Vec<DistanceMap> = ground_truth
        .iter()
        .map(|g| render_distance_map(&models[&g.object_id].mesh, &g.pose, cam))
        .collect();
    let ntau = protocol.vsd_taus.len();
    let mut vsd = vec![vec![vec![f64::INFINITY; ground_truth.len()]; estimates.len()]; ntau];
    let mut mssd = vec![vec![f64::INFINITY; ground_truth.len()]; estimates.len()];
    let mut mspd = mssd.clone();
    for (e, est) in estimates.iter().enumerate() {
        let model = &models[&est.object_id];
        let mut est_map = None;
        for (g, gt) in ground_truth.iter().enumerate() {
            if gt.object_id != est.object_id {
                continue;
            }
            let taus: Vec<f64> = protocol.vsd_taus.iter().map(|t| t.resolve(model.diameter)).collect();
            let d_est = est_map.get_or_insert_with(|| render_distance_map(&model.mesh, &est.pose, cam));
            let errs = vsd_from_maps(d_est, &gt_maps[g], &img.scene, &taus, protocol.vsd_delta)?;
            for (k, v) in errs.into_iter().enumerate() {
                vsd[k][e][g] = v;
            }
            let syms = &model.symmetries.transforms;
            mssd[e][g] = e_mssd(&est.pose, &gt.pose, syms, &model.mesh.vertices)? / model.diameter;
            mspd[e][g] = e_mspd(&est.pose, &gt.pose, syms, &model.mesh.vertices, cam)? / r;
        }
    }
    let table = |errors| ErrorMatrix { estimates: estimates.clone(), ground_truth: ground_truth.clone(), errors };
    Ok(ImageErrors { vsd: vsd.into_iter().map(table).collect(), mssd: table(mssd), mspd: table(mspd) })
}

/// Visible fractions of the ground-truth instances against the scene.
pub fn compute_visibility(img: &ImageData, models: &BTreeMap<u32, ModelData>, delta: f64) -> Result<Vec<f64>> {
    img.record
        .instances
        .iter()
        .map(|g| {
            let d = render_distance_map(&models[&g.object_id].mesh, &g.pose, &img.record.camera);
            let (_, v) = visibility_masks(&d, &d, &img.scene, delta)?;
            Ok(match visible_fraction(&v, &d) {
                Ok(f) => f,
                Err(pose_forge::Error::EmptyProjection) => 0.0,
                Err(e) => return Err(e.into()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub ar: f64,
    pub ar_vsd: f64,
    pub ar_mssd: f64,
    pub ar_mspd: f64,
    pub instances: usize,
    pub eligible: usize,
    pub estimates: usize,
}

impl ScoreRow {
    fn new(s: ArScores, instances: usize, eligible: usize, estimates: usize) -> Self {
        Self {
            ar: round4(s.ar_d()),
            ar_vsd: round4(s.vsd),
            ar_mssd: round4(s.mssd),
            ar_mspd: round4(s.mspd),
            instances,
            eligible,
            estimates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub dataset: String,
    pub images: usize,
    pub overall: ScoreRow,
    /// Keyed by object id.
    pub objects: BTreeMap<u32, ScoreRow>,
    /// Unrounded dataset scores.
    #[serde(skip)]
    pub scores: ArScores,
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn restrict(m: &ErrorMatrix, obj: u32) -> ErrorMatrix {
    let es: Vec<usize> = (0..m.estimates.len()).filter(|&i| m.estimates[i].object_id == obj).collect();
    let gs: Vec<usize> = (0..m.ground_truth.len()).filter(|&j| m.ground_truth[j].object_id == obj).collect();
    ErrorMatrix {
        estimates: es.iter().map(|&i| m.estimates[i]).collect(),
        ground_truth: gs.iter().map(|&j| m.ground_truth[j]).collect(),
        errors: es.iter().map(|&i| gs.iter().map(|&j| m.errors[i][j]).collect()).collect(),
    }
}

fn counts(errors: &DatasetErrors, cutoff: f64) -> (usize, usize, usize) {
    errors.mssd.iter().fold((0, 0, 0), |(n, el, est), m| {
        let eligible = m.ground_truth.iter().filter(|g| g.visible_fraction >= cutoff).count();
        (n + m.ground_truth.len(), el + eligible, est + m.estimates.len())
    })
}

/// Evaluates `results` on `dataset`. Work is spread over the current rayon
/// pool; the report does not depend on the number of workers.
pub fn evaluate(dataset: &Dataset, results: &[ResultRecord], protocol: &ScoringProtocol) -> Result<Report> {
    let per_image: Vec<ImageErrors> = dataset
        .images
        .par_iter()
        .map(|img| {
            let mut ground_truth = img.record.instances.clone();
            if !img.record.visibility_known {
                let v = compute_visibility(img, &dataset.models, protocol.vsd_delta)?;
                for (g, f) in ground_truth.iter_mut().zip(v) {
                    g.visible_fraction = f;
                }
            }
            let estimates: Vec<PoseEstimate> = top_n_per_object(results, &img.record)
                .into_iter()
                .filter(|e| dataset.models.contains_key(&e.object_id))
                .collect();
            image_errors(img, ground_truth, estimates, &dataset.models, protocol)
        })
        .collect::<Result<_>>()?;

    let mut all = DatasetErrors { vsd: vec![Vec::new(); protocol.vsd_taus.len()], ..Default::default() };
    for im in per_image {
        for (k, m) in im.vsd.into_iter().enumerate() {
            all.vsd[k].push(m);
        }
        all.mssd.push(im.mssd);
        all.mspd.push(im.mspd);
    }
    let cutoff = protocol.visibility_cutoff;
    let scores = ar_scores(&all, protocol);
    let (n, el, est) = counts(&all, cutoff);
    let mut objects = BTreeMap::new();
    for &obj in dataset.models.keys() {
        let sub = DatasetErrors {
            vsd: all.vsd.iter().map(|per| per.iter().map(|m| restrict(m, obj)).collect()).collect(),
            mssd: all.mssd.iter().map(|m| restrict(m, obj)).collect(),
            mspd: all.mspd.iter().map(|m| restrict(m, obj)).collect(),
        };
        let (n, el, est) = counts(&sub, cutoff);
        if n > 0 {
            objects.insert(obj, ScoreRow::new(ar_scores(&sub, protocol), n, el, est));
        }
    }
    Ok(Report {
        dataset: dataset.name.clone(),
        images: dataset.images.len(),
        overall: ScoreRow::new(scores, n, el, est),
        objects,
        scores,
    })
}

impl Report {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dataset: {} ({} images)", self.dataset, self.images);
        let _ = writeln!(
            s,
            "{:<8} {:>8} {:>8} {:>8} {:>8} {:>9} {:>8} {:>9}",
            "object", "AR", "AR_VSD", "AR_MSSD", "AR_MSPD", "instances", "eligible", "estimates"
        );
        let mut row = |name: &str, r: &ScoreRow| {
            let _ = writeln!(
                s,
                "{:<8} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>9} {:>8} {:>9}",
                name, r.ar, r.ar_vsd, r.ar_mssd, r.ar_mspd, r.instances, r.eligible, r.estimates
            );
        };
        for (obj, r) in &self.objects {
            row(&obj.to_string(), r);
        }
        row("all", &self.overall);
        s
    }

    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).unwrap_or_default();
        s.push('\n');
        s
    }
}
