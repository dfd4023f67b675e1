//! Surface fragments: farthest-point-sampled centers, nearest-center
//! partition of the model vertices, per-fragment coordinate frames, and the
//! selection of many-to-many 2D-3D correspondences from dense prediction maps.

use crate::error::{Error, Result};
use crate::fitting::Correspondence;
use crate::geometry::{bounding_box, vertex_centroid, TriangleMesh, Vec2, Vec3};

pub const DEFAULT_FRAGMENT_COUNT: usize = 64;
pub const DEFAULT_STRIDE: usize = 4;
pub const DEFAULT_OBJECT_THRESHOLD: f64 = 0.1;
pub const DEFAULT_FRAGMENT_THRESHOLD: f64 = 0.5;
/// Lower bound on a fragment normalizer (mm).
pub const MIN_NORMALIZER: f64 = 1.0;

/// Fragment centers, normalizers and the vertex partition of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentAtlas {
    pub centers: Vec<Vec3>,
    pub normalizers: Vec<f64>,
    pub vertex_assignment: Vec<usize>,
}

impl FragmentAtlas {
    /// Samples `n` centers, partitions the vertices and computes the frames.
    pub fn build(mesh: &TriangleMesh, n: usize) -> Result<Self> {
        let centers = farthest_point_sampling(mesh, n)?;
        let vertex_assignment = assign_fragments(mesh, &centers);
        let normalizers = fragment_frames(mesh, &centers, &vertex_assignment)?;
        Ok(Self { centers, normalizers, vertex_assignment })
    }

    pub fn fragment_count(&self) -> usize {
        self.centers.len()
    }

    /// Normalized coordinates of `x` in the frame of fragment `f`.
    pub fn encode(&self, x: &Vec3, f: usize) -> Result<Vec3> {
        self.check(f)?;
        Ok((x - self.centers[f]) / self.normalizers[f])
    }

    pub fn decode(&self, r: &Vec3, f: usize) -> Result<Vec3> {
        decode_fragment_coord(r, f, self)
    }

    /// Fragment whose center is nearest to `x` (ties to the lowest index).
    pub fn nearest_fragment(&self, x: &Vec3) -> usize {
        nearest_center(x, &self.centers)
    }

    fn check(&self, f: usize) -> Result<()> {
        if f >= self.centers.len() {
            return Err(Error::BadFragmentIndex { index: f, count: self.centers.len() });
        }
        Ok(())
    }
}

/// Greedy farthest point sampling seeded at the vertex centroid, which is
/// dropped from the output. Ties go to the lowest vertex index.
pub fn farthest_point_sampling(mesh: &TriangleMesh, n: usize) -> Result<Vec<Vec3>> {
    let verts = &mesh.vertices;
    if n == 0 {
        return Err(Error::Invalid("fragment count must be at least 1".into()));
    }
    if verts.len() < n {
        return Err(Error::TooFewVertices { required: n, available: verts.len() });
    }
    let seed = vertex_centroid(verts);
    let mut min_dist: Vec<f64> = verts.iter().map(|v| (v - seed).norm_squared()).collect();
    let mut centers = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick = 0;
        for (i, &d) in min_dist.iter().enumerate() {
            if d > min_dist[pick] {
                pick = i;
            }
        }
        let c = verts[pick];
        centers.push(c);
        for (d, v) in min_dist.iter_mut().zip(verts) {
            *d = d.min((v - c).norm_squared());
        }
    }
    Ok(centers)
}

fn nearest_center(x: &Vec3, centers: &[Vec3]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (f, c) in centers.iter().enumerate() {
        let d = (x - c).norm_squared();
        if d < best.1 {
            best = (f, d);
        }
    }
    best.0
}

/// Assigns each vertex to its nearest center, ties to the lowest fragment.
pub fn assign_fragments(mesh: &TriangleMesh, centers: &[Vec3]) -> Vec<usize> {
    if centers.is_empty() {
        return Vec::new();
    }
    mesh.vertices.iter().map(|v| nearest_center(v, centers)).collect()
}

/// Normalizer of every fragment: the longest side of the axis-aligned box
/// around its vertices, clamped below at [`MIN_NORMALIZER`].
pub fn fragment_frames(mesh: &TriangleMesh, centers: &[Vec3], assignment: &[usize]) -> Result<Vec<f64>> {
    let mut members: Vec<Vec<Vec3>> = vec![Vec::new(); centers.len()];
    for (v, &f) in mesh.vertices.iter().zip(assignment) {
        members
            .get_mut(f)
            .ok_or(Error::BadFragmentIndex { index: f, count: centers.len() })?
            .push(*v);
    }
    members
        .iter()
        .enumerate()
        .map(|(f, pts)| {
            let (lo, hi) = bounding_box(pts).ok_or(Error::EmptyFragment(f))?;
            Ok((hi - lo).max().max(MIN_NORMALIZER))
        })
        .collect()
}

/// `h_f * r + g_f`.
pub fn decode_fragment_coord(r: &Vec3, f: usize, atlas: &FragmentAtlas) -> Result<Vec3> {
    atlas.check(f)?;
    Ok(r * atlas.normalizers[f] + atlas.centers[f])
}

/// Dense per-object network outputs sampled on a strided pixel grid.
///
/// Planes are row-major over the `grid_width x grid_height` grid. Sample
/// `(i, j)` sits at the center of its `stride x stride` pixel block.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMaps {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
    pub object_id: u32,
    pub fragment_count: usize,
    /// Object probability per grid location.
    pub object_prob: Vec<f32>,
    /// `fragment_count` planes of fragment probabilities.
    pub fragment_prob: Vec<Vec<f32>>,
    /// `3 * fragment_count` planes: x, y, z of fragment 0, then fragment 1, ...
    pub fragment_coord: Vec<Vec<f32>>,
}

impl PredictionMaps {
    pub fn grid_dims(width: usize, height: usize, stride: usize) -> (usize, usize) {
        (width.div_ceil(stride), height.div_ceil(stride))
    }

    /// All-zero maps.
    pub fn empty(width: usize, height: usize, stride: usize, object_id: u32, fragment_count: usize) -> Self {
        let (gw, gh) = Self::grid_dims(width, height, stride);
        let plane = vec![0f32; gw * gh];
        Self {
            width,
            height,
            stride,
            object_id,
            fragment_count,
            object_prob: plane.clone(),
            fragment_prob: vec![plane.clone(); fragment_count],
            fragment_coord: vec![plane; 3 * fragment_count],
        }
    }

    pub fn plane_len(&self) -> usize {
        let (gw, gh) = Self::grid_dims(self.width, self.height, self.stride);
        gw * gh
    }

    /// Pixel coordinates of grid location `(i, j)`.
    pub fn pixel(&self, i: usize, j: usize) -> Vec2 {
        let half = (self.stride as f64 - 1.0) / 2.0;
        Vec2::new((i * self.stride) as f64 + half, (j * self.stride) as f64 + half)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Invalid("stride must be positive".into()));
        }
        let len = self.plane_len();
        let planes_ok = self.object_prob.len() == len
            && self.fragment_prob.len() == self.fragment_count
            && self.fragment_coord.len() == 3 * self.fragment_count
            && self.fragment_prob.iter().chain(&self.fragment_coord).all(|p| p.len() == len);
        if !planes_ok {
            return Err(Error::Invalid("prediction plane sizes do not match the grid".into()));
        }
        let prob_ok = self
            .fragment_prob
            .iter()
            .chain(std::iter::once(&self.object_prob))
            .flatten()
            .all(|p| (0.0..=1.0).contains(p));
        if !prob_ok {
            return Err(Error::Invalid("probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Links every grid location to all fragments whose probability is high
/// relative to the most probable fragment at that location.
///
/// A location qualifies when `a > tau_a`; fragment `f` is linked when
/// `b_f / max_i b_i > tau_b`. The confidence is `a * b_f`.
pub fn select_correspondences(
    maps: &PredictionMaps,
    atlas: &FragmentAtlas,
    tau_a: f64,
    tau_b: f64,
) -> Result<Vec<Correspondence>> {
    maps.validate()?;
    if maps.fragment_count != atlas.fragment_count() {
        return Err(Error::Invalid(format!(
            "maps carry {} fragments, atlas has {}",
            maps.fragment_count,
            atlas.fragment_count()
        )));
    }
    let (gw, gh) = PredictionMaps::grid_dims(maps.width, maps.height, maps.stride);
    let mut out = Vec::new();
    for j in 0..gh {
        for i in 0..gw {
            let k = j * gw + i;
            let a = maps.object_prob[k] as f64;
            if a <= tau_a {
                continue;
            }
            let b_max = maps.fragment_prob.iter().map(|p| p[k] as f64).fold(0.0, f64::max);
            if b_max <= 0.0 {
                continue;
            }
            let pixel = maps.pixel(i, j);
            for f in 0..maps.fragment_count {
                let b = maps.fragment_prob[f][k] as f64;
                if b / b_max <= tau_b {
                    continue;
                }
                let r = Vec3::new(
                    maps.fragment_coord[3 * f][k] as f64,
                    maps.fragment_coord[3 * f + 1][k] as f64,
                    maps.fragment_coord[3 * f + 2][k] as f64,
                );
                out.push(Correspondence {
                    pixel,
                    point: decode_fragment_coord(&r, f, atlas)?,
                    confidence: a * b,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube_vertices() -> Vec<Vec3> {
        (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { -1.0 } else { 1.0 },
                    if i & 2 == 0 { -1.0 } else { 1.0 },
                    if i & 4 == 0 { -1.0 } else { 1.0 },
                )
            })
            .collect()
    }

    fn cloud(vertices: Vec<Vec3>) -> TriangleMesh {
        TriangleMesh::new(vertices, vec![]).unwrap()
    }

    #[test]
    fn fps_single_center_on_cube_is_first_corner() {
        let c = farthest_point_sampling(&cloud(cube_vertices()), 1).unwrap();
        assert_eq!(c, vec![cube_vertices()[0]]);
    }

    #[test]
    fn fps_collinear_trace() {
        let mesh = cloud((0..=10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect());
        let c = farthest_point_sampling(&mesh, 2).unwrap();
        assert_eq!(c, vec![Vec3::zeros(), Vec3::new(10.0, 0.0, 0.0)]);
    }

    #[test]
    fn fps_exhaustion_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let verts: Vec<Vec3> = (0..30).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let c = farthest_point_sampling(&cloud(verts.clone()), 30).unwrap();
        let mut picked: Vec<usize> = c.iter().map(|p| verts.iter().position(|v| v == p).unwrap()).collect();
        picked.sort();
        assert_eq!(picked, (0..30).collect::<Vec<_>>());
        assert!(matches!(
            farthest_point_sampling(&cloud(verts), 31),
            Err(Error::TooFewVertices { required: 31, available: 30 })
        ));
    }

    #[test]
    fn fps_min_spacing_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let verts: Vec<Vec3> = (0..400)
            .map(|_| Vec3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-20.0..20.0), rng.gen_range(0.0..30.0)))
            .collect();
        let c = farthest_point_sampling(&cloud(verts), 40).unwrap();
        let mut prev = f64::INFINITY;
        for k in 2..=c.len() {
            let mut m = f64::INFINITY;
            for a in 0..k {
                for b in a + 1..k {
                    m = m.min((c[a] - c[b]).norm());
                }
            }
            assert!(m <= prev + 1e-12);
            prev = m;
        }
    }

    #[test]
    fn assignment_rules() {
        let centers = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(5.0, 5.0, 5.0),
            Vec3::new(1.0, 0.0, 0.0),
        ];
        let mesh = cloud(vec![Vec3::new(5.0, 5.0, 5.0), Vec3::new(0.0, 3.0, 0.0), Vec3::new(0.0, 0.0, 0.0)]);
        assert_eq!(assign_fragments(&mesh, &centers), vec![2, 0, 0]);
        // Equidistant from centers 1 and 3 only.
        let centers = vec![
            Vec3::new(0.0, 10.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, -10.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
        ];
        assert_eq!(assign_fragments(&cloud(vec![Vec3::zeros()]), &centers), vec![1]);
    }

    #[test]
    fn assignment_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let verts: Vec<Vec3> = (0..300).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let centers: Vec<Vec3> = (0..12).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let got = assign_fragments(&cloud(verts.clone()), &centers);
        for (v, f) in verts.iter().zip(got) {
            let mut best = 0;
            for k in 1..centers.len() {
                if (v - centers[k]).norm() < (v - centers[best]).norm() {
                    best = k;
                }
            }
            assert_eq!(f, best);
        }
    }

    #[test]
    fn frames_bbox_and_clamp() {
        let verts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(10.0, 4.0, 2.0),
            Vec3::new(3.0, 1.0, 1.0),
            Vec3::new(100.0, 100.0, 100.0),
        ];
        let h = fragment_frames(&cloud(verts), &[Vec3::zeros(), Vec3::repeat(100.0)], &[0, 0, 0, 1]).unwrap();
        assert_eq!(h, vec![10.0, MIN_NORMALIZER]);
        let err = fragment_frames(&cloud(vec![Vec3::zeros()]), &[Vec3::zeros(), Vec3::x()], &[0]);
        assert_eq!(err, Err(Error::EmptyFragment(1)));
    }

    #[test]
    fn frames_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let verts: Vec<Vec3> = (0..200)
            .map(|_| Vec3::new(rng.gen_range(0.0..90.0), rng.gen_range(0.0..40.0), rng.gen_range(0.0..20.0)))
            .collect();
        let atlas = FragmentAtlas::build(&cloud(verts.clone()), 8).unwrap();
        for f in 0..8 {
            let mut side: f64 = 0.0;
            for axis in 0..3 {
                let vals: Vec<f64> = verts
                    .iter()
                    .zip(&atlas.vertex_assignment)
                    .filter(|(_, &a)| a == f)
                    .map(|(v, _)| v[axis])
                    .collect();
                let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
                side = side.max(hi - lo);
            }
            assert_eq!(atlas.normalizers[f], side.max(MIN_NORMALIZER));
        }
        // Round trip through every fragment frame.
        for (v, &f) in verts.iter().zip(&atlas.vertex_assignment) {
            let back = atlas.decode(&atlas.encode(v, f).unwrap(), f).unwrap();
            assert!((back - v).norm() < 1e-9);
        }
    }

    #[test]
    fn decode_examples() {
        let atlas = FragmentAtlas {
            centers: vec![Vec3::new(10.0, 20.0, 30.0)],
            normalizers: vec![4.0],
            vertex_assignment: vec![],
        };
        assert_eq!(atlas.decode(&Vec3::zeros(), 0).unwrap(), Vec3::new(10.0, 20.0, 30.0));
        assert_eq!(atlas.decode(&Vec3::new(0.5, -0.25, 0.0), 0).unwrap(), Vec3::new(12.0, 19.0, 30.0));
        assert_eq!(
            atlas.decode(&Vec3::zeros(), 1),
            Err(Error::BadFragmentIndex { index: 1, count: 1 })
        );
    }

    fn toy_atlas(n: usize) -> FragmentAtlas {
        FragmentAtlas {
            centers: (0..n).map(|f| Vec3::new(f as f64, 0.0, 0.0)).collect(),
            normalizers: vec![2.0; n],
            vertex_assignment: vec![],
        }
    }

    #[test]
    fn selection_hand_example() {
        let mut maps = PredictionMaps::empty(4, 4, 4, 1, 3);
        maps.object_prob[0] = 0.6;
        maps.fragment_prob[0][0] = 0.5;
        maps.fragment_prob[1][0] = 0.4;
        maps.fragment_prob[2][0] = 0.1;
        maps.fragment_coord[3] = vec![0.5];
        let corrs = select_correspondences(&maps, &toy_atlas(3), 0.1, 0.5).unwrap();
        assert_eq!(corrs.len(), 2);
        assert!((corrs[0].confidence - 0.30).abs() < 1e-7);
        assert!((corrs[1].confidence - 0.24).abs() < 1e-7);
        assert_eq!(corrs[0].pixel, Vec2::new(1.5, 1.5));
        assert_eq!(corrs[1].point, Vec3::new(2.0, 0.0, 0.0));

        let empty = PredictionMaps::empty(4, 4, 4, 1, 3);
        assert!(select_correspondences(&empty, &toy_atlas(3), 0.1, 0.5).unwrap().is_empty());
    }

    #[test]
    fn selection_monotone_in_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut maps = PredictionMaps::empty(40, 30, 4, 1, 5);
        for p in maps.object_prob.iter_mut() {
            *p = rng.gen();
        }
        for plane in maps.fragment_prob.iter_mut() {
            for p in plane.iter_mut() {
                *p = rng.gen();
            }
        }
        let atlas = toy_atlas(5);
        let count = |a: f64, b: f64| select_correspondences(&maps, &atlas, a, b).unwrap().len();
        let grid = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9];
        for w in grid.windows(2) {
            assert!(count(w[1], 0.5) <= count(w[0], 0.5));
            if w[0] > 0.0 {
                assert!(count(0.1, w[1]) <= count(0.1, w[0]));
            }
        }
        for c in select_correspondences(&maps, &atlas, 0.1, 0.5).unwrap() {
            assert!(c.confidence > 0.0 && c.confidence <= 1.0);
        }
    }
}
