//! Prediction-map files: one JSON header line, then little-endian `f32`
//! planes in the order `a`, `b_0..b_n-1`, `r` (3 planes per fragment).

use std::path::Path;

use pose_forge::fragments::{FragmentAtlas, PredictionMaps};
use pose_forge::rasterizer::{rasterize, SampleGrid};
use pose_forge::{CameraIntrinsics, RigidPose, TriangleMesh};
use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapsHeader {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
    pub object_id: u32,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im_id: Option<u32>,
}

/// Maps with the image they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFile {
    pub maps: PredictionMaps,
    pub scene_id: Option<u32>,
    pub im_id: Option<u32>,
}

pub fn write_predictions(file: &PredictionFile) -> Vec<u8> {
    let m = &file.maps;
    let header = MapsHeader {
        width: m.width,
        height: m.height,
        stride: m.stride,
        object_id: m.object_id,
        n: m.fragment_count,
        scene_id: file.scene_id,
        im_id: file.im_id,
    };
    let mut out = serde_json::to_vec(&header).unwrap_or_default();
    out.push(b'\n');
    for plane in std::iter::once(&m.object_prob).chain(&m.fragment_prob).chain(&m.fragment_coord) {
        for v in plane {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn parse_predictions(bytes: &[u8], context: &str) -> Result<PredictionFile> {
    let Some(nl) = bytes.iter().position(|&b| b == b'\n') else {
        return Err(HarnessError::parse_at_byte(context, bytes.len(), "missing header line"));
    };
    let header: MapsHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| HarnessError::parse_at_byte(context, e.column().saturating_sub(1), e.to_string()))?;
    if header.stride == 0 || header.width == 0 || header.height == 0 || header.n == 0 {
        return Err(HarnessError::Validation(format!("{context}: width, height, stride and n must be positive")));
    }
    let (gw, gh) = PredictionMaps::grid_dims(header.width, header.height, header.stride);
    let plane = gw * gh;
    let planes = 1 + 4 * header.n;
    let body = &bytes[nl + 1..];
    let expected = plane
        .checked_mul(planes)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| HarnessError::Validation(format!("{context}: map dimensions overflow")))?;
    if body.len() != expected {
        let at = nl + 1 + body.len().min(expected);
        return Err(HarnessError::parse_at_byte(
            context,
            at,
            format!("body holds {} bytes, header implies {expected}", body.len()),
        ));
    }
    let mut values = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut take = || (&mut values).take(plane).collect::<Vec<f32>>();
    let object_prob = take();
    let fragment_prob = (0..header.n).map(|_| take()).collect();
    let fragment_coord = (0..3 * header.n).map(|_| take()).collect();
    let maps = PredictionMaps {
        width: header.width,
        height: header.height,
        stride: header.stride,
        object_id: header.object_id,
        fragment_count: header.n,
        object_prob,
        fragment_prob,
        fragment_coord,
    };
    maps.validate().map_err(|e| HarnessError::Validation(format!("{context}: {e}")))?;
    Ok(PredictionFile { maps, scene_id: header.scene_id, im_id: header.im_id })
}

pub fn load_predictions(path: &Path) -> Result<PredictionFile> {
    parse_predictions(&read_file(path)?, &path.display().to_string())
}

pub fn save_predictions(path: &Path, file: &PredictionFile) -> Result<()> {
    write_file(path, &write_predictions(file))
}

/// Ideal network output for `mesh` seen in `pose`: object probability 1 on
/// the rendered surface, a one-hot fragment label from the nearest center and
/// the exact fragment coordinates of the surface point.
pub fn render_prediction_maps(
    mesh: &TriangleMesh,
    atlas: &FragmentAtlas,
    pose: &RigidPose,
    cam: &CameraIntrinsics,
    stride: usize,
    object_id: u32,
) -> Result<PredictionMaps> {
    let n = atlas.fragment_count();
    let mut maps = PredictionMaps::empty(cam.width, cam.height, stride, object_id, n);
    let raster = rasterize(mesh, pose, cam, SampleGrid::strided(cam, stride));
    for (k, tri) in raster.triangle.iter().enumerate() {
        if tri.is_none() {
            continue;
        }
        let x = raster.model_point[k];
        let f = atlas.nearest_fragment(&x);
        let r = atlas.encode(&x, f)?;
        maps.object_prob[k] = 1.0;
        maps.fragment_prob[f][k] = 1.0;
        for c in 0..3 {
            maps.fragment_coord[3 * f + c][k] = r[c] as f32;
        }
    }
    Ok(maps)
}
