use super::Correspondence;

/// Undirected spatial-coherence graph over correspondences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodGraph {
    /// Sorted neighbour lists, one per correspondence.
    pub adjacency: Vec<Vec<usize>>,
    /// Every edge once, as `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl NeighborhoodGraph {
    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }
}

/// 5D descriptor: pixel coordinates in px, model coordinates in cm.
pub(crate) fn descriptor(c: &Correspondence) -> [f64; 5] {
    [c.pixel.x, c.pixel.y, c.point.x / 10.0, c.point.y / 10.0, c.point.z / 10.0]
}

/// Links correspondences whose descriptors are closer than `tau_d`.
pub fn build_neighborhood_graph(corrs: &[Correspondence], tau_d: f64) -> NeighborhoodGraph {
    let desc: Vec<[f64; 5]> = corrs.iter().map(descriptor).collect();
    let mut order: Vec<usize> = (0..corrs.len()).collect();
    order.sort_by(|&a, &b| desc[a][0].total_cmp(&desc[b][0]).then(a.cmp(&b)));
    let tau2 = tau_d * tau_d;
    let mut edges = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if desc[j][0] - desc[i][0] >= tau_d {
                break;
            }
            let d2: f64 = (0..5).map(|a| (desc[i][a] - desc[j][a]).powi(2)).sum();
            if d2 < tau2 {
                edges.push((i.min(j), i.max(j)));
            }
        }
    }
    edges.sort_unstable();
    let mut adjacency = vec![Vec::new(); corrs.len()];
    for &(i, j) in &edges {
        adjacency[i].push(j);
        adjacency[j].push(i);
    }
    adjacency.iter_mut().for_each(|a| a.sort_unstable());
    NeighborhoodGraph { adjacency, edges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Vec2, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corr(u: f64, v: f64, x: f64) -> Correspondence {
        Correspondence::new(Vec2::new(u, v), Vec3::new(x, 0.0, 0.0), 1.0)
    }

    #[test]
    fn threshold_cases() {
        let g = build_neighborhood_graph(&[corr(5.0, 5.0, 1.0), corr(5.0, 5.0, 1.0)], 20.0);
        assert_eq!(g.edges, vec![(0, 1)]);
        // 3D offset of 199 mm = 19.9 cm.
        let g = build_neighborhood_graph(&[corr(0.0, 0.0, 0.0), corr(0.0, 0.0, 199.0)], 20.0);
        assert_eq!(g.edges.len(), 1);
        let g = build_neighborhood_graph(&[corr(0.0, 0.0, 0.0), corr(20.1, 0.0, 0.0)], 20.0);
        assert!(g.edges.is_empty());
        let g = build_neighborhood_graph(&[corr(0.0, 0.0, 0.0), corr(12.0, 0.0, 159.0)], 20.0);
        assert_eq!(g.edges.len(), 1, "sqrt(12^2 + 15.9^2) = 19.92");
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let corrs: Vec<Correspondence> = (0..300)
            .map(|_| {
                Correspondence::new(
                    Vec2::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0)),
                    Vec3::new(rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0)),
                    1.0,
                )
            })
            .collect();
        let g = build_neighborhood_graph(&corrs, 20.0);
        let mut brute = Vec::new();
        for i in 0..corrs.len() {
            for j in i + 1..corrs.len() {
                let (a, b) = (descriptor(&corrs[i]), descriptor(&corrs[j]));
                let d: f64 = (0..5).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
                if d < 20.0 {
                    brute.push((i, j));
                }
            }
        }
        assert!(!brute.is_empty());
        assert_eq!(g.edges, brute);
        for (i, nbrs) in g.adjacency.iter().enumerate() {
            assert!(!nbrs.contains(&i));
            for &j in nbrs {
                assert!(g.adjacency[j].contains(&i));
            }
        }
    }
}
