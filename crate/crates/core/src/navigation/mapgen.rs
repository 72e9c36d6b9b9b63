use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64;

use super::{DestinationInfo, NavGraph, NodeId};
use crate::geom::Point3;
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub width: u32,
    pub height: u32,
    pub spacing_m: f64,
    pub seed: u64,
    /// Fraction of corridor edges removed, as long as the map stays connected.
    pub deletion_fraction: f64,
}

impl GridSpec {
    pub fn new(width: u32, height: u32, spacing_m: f64, seed: u64) -> Self {
        Self {
            width,
            height,
            spacing_m,
            seed,
            deletion_fraction: 0.2,
        }
    }
}

/// Grid of corridors with seeded random deletions.
///
/// Node `r * width + c` sits at `(c * spacing, r * spacing, 0)`. Node 0 is
/// the entrance; destinations are the far corner and the last node of the
/// first row.
pub fn generate_grid_map(spec: GridSpec) -> NavGraph {
    let mut g = NavGraph::new();
    let (w, h) = (spec.width.max(1), spec.height.max(1));
    for r in 0..h {
        for c in 0..w {
            let p = Point3::new(c as f64 * spec.spacing_m, r as f64 * spec.spacing_m, 0.0);
            g.add_node(r * w + c, p).expect("ids unique by construction");
        }
    }
    let mut edges = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let id = r * w + c;
            if c + 1 < w {
                edges.push((id, id + 1));
            }
            if r + 1 < h {
                edges.push((id, id + w));
            }
        }
    }
    for &(a, b) in &edges {
        g.add_edge(a, b, None).expect("grid edges valid");
    }
    let mut rng = Pcg64::seed_from_u64(spec.seed);
    edges.shuffle(&mut rng);
    let target = (edges.len() as f64 * spec.deletion_fraction).round() as usize;
    let mut deleted = 0;
    for (a, b) in edges {
        if deleted == target {
            break;
        }
        let weight = g.edge_weight(a, b);
        g.remove_edge(a, b);
        if g.is_connected() {
            deleted += 1;
        } else {
            g.add_edge(a, b, weight).expect("restoring a removed edge");
        }
    }
    let corner = w * h - 1;
    for id in [corner, w - 1] {
        if id != 0 && g.destination(id).is_none() {
            g.set_destination(
                id,
                DestinationInfo {
                    name: format!("room-{id}"),
                    image: sign_image(id),
                },
            )
            .expect("destination node exists");
        }
    }
    g
}

/// The standard demo floor: 6x4 corridors, 5 m apart.
pub fn demo_map() -> NavGraph {
    generate_grid_map(GridSpec::new(6, 4, 5.0, 7))
}

/// 64x48 placard with a per-destination stripe pattern.
fn sign_image(id: NodeId) -> GrayImage {
    let (w, h) = (64, 48);
    let period = 4 + (id as usize % 7);
    let pixels = (0..h)
        .flat_map(|y| {
            (0..w).map(move |x| {
                if y < 6 || y >= h - 6 || x < 4 || x >= w - 4 {
                    255
                } else if (x / period + y / period) % 2 == 0 {
                    40
                } else {
                    200
                }
            })
        })
        .collect();
    GrayImage::new(w, h, pixels).expect("fixed dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_connected() {
        let a = generate_grid_map(GridSpec::new(8, 5, 3.0, 99));
        let b = generate_grid_map(GridSpec::new(8, 5, 3.0, 99));
        assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
        assert!(a.is_connected());
        let full = 7 * 5 + 8 * 4;
        assert_eq!(a.edges().count(), full - (full as f64 * 0.2).round() as usize);
    }

    #[test]
    fn demo_map_has_destinations() {
        let g = demo_map();
        assert_eq!(g.node_count(), 24);
        assert!(g.destination(23).is_some());
        assert!(g.destination(5).is_some());
    }
}
