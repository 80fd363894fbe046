use crate::mesh::TriMesh;
use crate::paint::{TexelFlag, TextureAtlas};
use crate::scalar::Real;

use super::canvas::face_mean_colors;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExtrapolateReport {
    /// Texels of partly textured faces filled with their own face's mean.
    pub own_mean_texels: usize,
    /// Texels filled from neighboring faces.
    pub propagated_texels: usize,
    pub layers: usize,
    /// Texels on components without any textured face.
    pub fallback_texels: usize,
}

fn rgb(c: [f64; 3]) -> [u8; 3] {
    c.map(|v| v.round().clamp(0.0, 255.0) as u8)
}

/// Fills every remaining untextured texel.
///
/// Faces with some textured texels fill the rest with their own mean color.
/// Then, layer by layer over edge adjacency, each face without color takes
/// the area-weighted mean color of its already colored neighbors. Faces on
/// components without any texture get the global mean (mid gray when the
/// atlas is entirely untextured).
pub fn extrapolate<T: Real>(mesh: &TriMesh<T>, atlas: &TextureAtlas<T>) -> (TextureAtlas<T>, ExtrapolateReport) {
    let mut out = atlas.clone();
    let mut report = ExtrapolateReport::default();
    let own = face_mean_colors(atlas);
    let mut color = own.clone();
    let fill = |out: &mut TextureAtlas<T>, f: usize, c: [u8; 3]| -> usize {
        let texels: Vec<(u32, u32)> = out.face_texels(f).collect();
        let mut n = 0;
        for (x, y) in texels {
            if out.flags[out.index(x, y)] == TexelFlag::Untextured {
                out.set_texel(x, y, c);
                n += 1;
            }
        }
        n
    };
    for f in 0..mesh.num_faces() {
        if let Some(c) = color[f] {
            report.own_mean_texels += fill(&mut out, f, rgb(c));
        }
    }

    let areas = mesh.face_areas();
    let adj = mesh.face_neighbors();
    let mut frontier: Vec<usize> = (0..mesh.num_faces())
        .filter(|&f| color[f].is_none() && adj[f].iter().any(|&g| color[g].is_some()))
        .collect();
    while !frontier.is_empty() {
        report.layers += 1;
        let layer: Vec<(usize, [f64; 3])> = frontier
            .iter()
            .map(|&f| {
                let known: Vec<(usize, [f64; 3])> = adj[f].iter().filter_map(|&g| color[g].map(|c| (g, c))).collect();
                let wsum: f64 = known.iter().map(|&(g, _)| areas[g].to_f64_lossy()).sum();
                let mut acc = [0.0; 3];
                for &(g, c) in &known {
                    let w = if wsum > 0.0 { areas[g].to_f64_lossy() / wsum } else { 1.0 / known.len() as f64 };
                    for k in 0..3 {
                        acc[k] += w * c[k];
                    }
                }
                (f, acc)
            })
            .collect();
        for &(f, c) in &layer {
            color[f] = Some(c);
            report.propagated_texels += fill(&mut out, f, rgb(c));
        }
        let mut next: Vec<usize> = layer
            .iter()
            .flat_map(|&(f, _)| adj[f].iter().copied())
            .filter(|&g| color[g].is_none())
            .collect();
        next.sort_unstable();
        next.dedup();
        frontier = next;
    }

    let (mut acc, mut wsum) = ([0.0; 3], 0.0);
    for f in 0..mesh.num_faces() {
        if let Some(c) = own[f] {
            let w = areas[f].to_f64_lossy();
            for k in 0..3 {
                acc[k] += w * c[k];
            }
            wsum += w;
        }
    }
    let fallback = if wsum > 0.0 { rgb(acc.map(|v| v / wsum)) } else { [128; 3] };
    for f in 0..mesh.num_faces() {
        if color[f].is_none() {
            report.fallback_texels += fill(&mut out, f, fallback);
        }
    }
    (out, report)
}
