//! Simple closed meshes centred at the origin.

use crate::geometry::{TriangleMesh, Vec3};

/// Axis-aligned box with the given edge lengths (mm), outward-facing triangles.
pub fn box_mesh(sx: f64, sy: f64, sz: f64) -> TriangleMesh {
    let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
    let vertices: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -hx } else { hx },
                if i & 2 == 0 { -hy } else { hy },
                if i & 4 == 0 { -hz } else { hz },
            )
        })
        .collect();
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let triangles = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    TriangleMesh { vertices, triangles, normals: None }
}

/// Right prism over a regular `n`-gon with circumradius `radius`, axis along z.
/// Caps are fans around their centre vertices.
pub fn regular_prism(n: usize, radius: f64, height: f64) -> TriangleMesh {
    let h = height / 2.0;
    let mut vertices = Vec::with_capacity(2 * n + 2);
    for z in [-h, h] {
        for k in 0..n {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            vertices.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let (bottom, top) = (2 * n, 2 * n + 1);
    vertices.push(Vec3::new(0.0, 0.0, -h));
    vertices.push(Vec3::new(0.0, 0.0, h));
    let mut triangles = Vec::with_capacity(4 * n);
    for k in 0..n {
        let k1 = (k + 1) % n;
        triangles.push([k, k1, n + k1]);
        triangles.push([k, n + k1, n + k]);
        triangles.push([bottom, k1, k]);
        triangles.push([top, n + k, n + k1]);
    }
    TriangleMesh { vertices, triangles, normals: None }
}
