//! Batch pose fitting: prediction maps -> correspondences -> Progressive-X ->
//! result records.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use pose_forge::fitting::{progressive_x, FitParams};
use pose_forge::fragments::{select_correspondences, FragmentAtlas, DEFAULT_FRAGMENT_THRESHOLD, DEFAULT_OBJECT_THRESHOLD};
use pose_forge::{CameraIntrinsics, TriangleMesh};
use rayon::prelude::*;

use crate::error::{HarnessError, Result};
use crate::ply::load_model;
use crate::predictions::{load_predictions, PredictionFile};
use crate::results::{sort_results, ResultRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub params: FitParams,
    pub tau_a: f64,
    pub tau_b: f64,
    /// Record wall-clock time per image; otherwise time is 0 so repeated runs
    /// produce identical files.
    pub timing: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            params: FitParams::default(),
            tau_a: DEFAULT_OBJECT_THRESHOLD,
            tau_b: DEFAULT_FRAGMENT_THRESHOLD,
            timing: false,
        }
    }
}

/// Models keyed by object id, read from `obj_XXXXXX.ply` files in `dir`.
pub fn load_models(dir: &Path) -> Result<BTreeMap<u32, TriangleMesh>> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for e in entries {
        paths.push(e.map_err(|e| HarnessError::io(dir, e))?.path());
    }
    paths.sort();
    let mut out = BTreeMap::new();
    for p in paths {
        let Some(id) = object_id_from_path(&p) else { continue };
        out.insert(id, load_model(&p)?);
    }
    if out.is_empty() {
        return Err(HarnessError::Validation(format!("{}: no obj_*.ply models", dir.display())));
    }
    Ok(out)
}

pub fn object_id_from_path(p: &Path) -> Option<u32> {
    let name = p.file_name()?.to_str()?;
    name.strip_prefix("obj_")?.strip_suffix(".ply")?.parse().ok()
}

/// One fitting job: maps plus the camera of their image.
pub struct FitInput {
    pub maps: PredictionFile,
    pub camera: CameraIntrinsics,
}

/// Fits every input; output is in canonical order. Fragment atlases are built
/// once per (object, fragment count).
pub fn fit_all(
    inputs: &[FitInput],
    models: &BTreeMap<u32, TriangleMesh>,
    options: &FitOptions,
) -> Result<Vec<ResultRecord>> {
    let atlases: Mutex<BTreeMap<(u32, usize), std::sync::Arc<FragmentAtlas>>> = Mutex::new(BTreeMap::new());
    let atlas_for = |obj: u32, n: usize| -> Result<std::sync::Arc<FragmentAtlas>> {
        if let Some(a) = atlases.lock().expect("atlas cache").get(&(obj, n)) {
            return Ok(a.clone());
        }
        let mesh = models
            .get(&obj)
            .ok_or_else(|| HarnessError::Validation(format!("no model for object {obj}")))?;
        let atlas = std::sync::Arc::new(FragmentAtlas::build(mesh, n)?);
        atlases.lock().expect("atlas cache").insert((obj, n), atlas.clone());
        Ok(atlas)
    };
    let per_input: Vec<Vec<ResultRecord>> = inputs
        .par_iter()
        .map(|input| {
            let m = &input.maps.maps;
            if (m.width, m.height) != (input.camera.width, input.camera.height) {
                return Err(HarnessError::Validation(format!(
                    "maps are {}x{}, camera is {}x{}",
                    m.width, m.height, input.camera.width, input.camera.height
                )));
            }
            let start = Instant::now();
            let atlas = atlas_for(m.object_id, m.fragment_count)?;
            let corrs = select_correspondences(m, &atlas, options.tau_a, options.tau_b)?;
            let hyps = if corrs.len() < 3 { Vec::new() } else { progressive_x(&corrs, &input.camera, &options.params)? };
            let time = if options.timing { start.elapsed().as_secs_f64() } else { 0.0 };
            Ok(hyps
                .into_iter()
                .map(|h| ResultRecord {
                    scene_id: input.maps.scene_id.unwrap_or(0),
                    im_id: input.maps.im_id.unwrap_or(0),
                    obj_id: m.object_id,
                    score: h.quality,
                    pose: h.pose,
                    time,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<ResultRecord> = per_input.into_iter().flatten().collect();
    sort_results(&mut out);
    Ok(out)
}

/// Loads prediction files and pairs each with its camera. A camera file with
/// a single image serves maps without an image id.
pub fn load_inputs(
    paths: &[PathBuf],
    cameras: &BTreeMap<u32, (CameraIntrinsics, f64)>,
) -> Result<Vec<FitInput>> {
    paths
        .iter()
        .map(|p| {
            let maps = load_predictions(p)?;
            let camera = match maps.im_id {
                Some(id) => cameras.get(&id).map(|c| c.0),
                None if cameras.len() == 1 => cameras.values().next().map(|c| c.0),
                None => None,
            }
            .ok_or_else(|| {
                HarnessError::Validation(format!("{}: no camera for image {:?}", p.display(), maps.im_id))
            })?;
            Ok(FitInput { maps, camera })
        })
        .collect()
}
