use carvepaint::attend::{aggregate_regions, replicate_hidden, FeatureTensor, RegionLayout};
use carvepaint::mesh::{shapes, TriMesh};
use carvepaint::occlude::{mask_regions, HarmonicInpainter};
use carvepaint::paint::{AtlasParams, TexelFlag, TextureAtlas, NO_FACE};
use carvepaint::remesh::tri::{equalize_valences, valence_deviation};
use carvepaint::Vec3;
use image::{GrayImage, Luma, Rgba, RgbaImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn jittered_plane(nx: usize, ny: usize, seed: u64, amp: f64) -> TriMesh<f64> {
    let mut m = shapes::plane_grid(nx, ny, 1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in &mut m.vertices {
        p.x += rng.gen_range(-amp..amp);
        p.y += rng.gen_range(-amp..amp);
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flips_never_raise_valence_deviation(nx in 3usize..9, ny in 3usize..9, seed in any::<u64>()) {
        let m = jittered_plane(nx, ny, seed, 0.02);
        let before = valence_deviation(&m);
        let out = equalize_valences(&m);
        prop_assert!(valence_deviation(&out) <= before);
        prop_assert_eq!(out.num_faces(), m.num_faces());
        prop_assert_eq!(out.num_vertices(), m.num_vertices());
    }

    #[test]
    fn flips_keep_sphere_topology(rings in 4usize..10, segs in 5usize..14) {
        let m = shapes::uv_sphere(Vec3::zero(), 1.0, rings, segs);
        let out = equalize_valences(&m);
        prop_assert!(valence_deviation(&out) <= valence_deviation(&m));
        prop_assert!(out.topology().is_closed_manifold());
        prop_assert_eq!(out.euler_characteristic(), 2);
    }

    #[test]
    fn replicate_then_aggregate_shapes(half in 1usize..5, w in 2usize..12, h in 2usize..12, n in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = FeatureTensor::<f64>::random(2 * half, w, h, &mut rng);
        let rep = replicate_hidden(&t, n).unwrap();
        prop_assert_eq!((rep.channels, rep.width, rep.height), (2 * half * n, w, h));
        prop_assert_eq!(rep.data.len(), rep.channels * w * h);
        if let Ok(layout) = RegionLayout::grid(n, w, h) {
            layout.validate().unwrap();
            // Every group holds a copy of the input, so aggregation gives it back.
            let agg = aggregate_regions(&rep, &layout).unwrap();
            prop_assert_eq!(agg, t);
        }
    }

    #[test]
    fn harmonic_fill_respects_region_bounds(w in 3u32..20, h in 3u32..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tile = RgbaImage::from_fn(w, h, |_, _| {
            if rng.gen_bool(0.1) {
                Rgba([0, 0, 0, 0])
            } else {
                Rgba([rng.gen(), rng.gen(), rng.gen(), 255])
            }
        });
        let mask = GrayImage::from_fn(w, h, |x, y| Luma([if tile.get_pixel(x, y)[3] == 255 && rng.gen_bool(0.4) { 255 } else { 0 }]));
        let (out, report) = HarmonicInpainter::default().fill(&tile, &mask).unwrap();
        let regions = mask_regions(&tile, &mask);
        prop_assert_eq!(report.regions, regions.len());
        for r in regions.iter().filter(|r| !r.boundary.is_empty()) {
            for c in 0..3 {
                let vals = r.boundary.iter().map(|&i| tile.as_raw()[4 * i + c]);
                let (lo, hi) = vals.fold((255u8, 0u8), |(lo, hi), v| (lo.min(v), hi.max(v)));
                for &i in &r.pixels {
                    let v = out.as_raw()[4 * i + c];
                    prop_assert!(lo <= v && v <= hi, "channel {} value {} outside [{}, {}]", c, v, lo, hi);
                }
            }
        }
        for (i, (a, b)) in tile.pixels().zip(out.pixels()).enumerate() {
            if mask.as_raw()[i] == 0 {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn atlas_blocks_are_disjoint_and_complete(rings in 3usize..8, segs in 3usize..10, density in 4.0f64..80.0, padding in 0u32..4) {
        let m = shapes::uv_sphere(Vec3::zero(), 1.0, rings, segs);
        let a = TextureAtlas::build(&m, &AtlasParams { texel_density: density, padding, ..AtlasParams::default() }).unwrap();
        let mut owned = vec![0usize; m.num_faces()];
        for (i, &f) in a.texel_face.iter().enumerate() {
            if f == NO_FACE {
                prop_assert_eq!(a.flags[i], TexelFlag::Background);
            } else {
                owned[f as usize] += 1;
                prop_assert_eq!(a.flags[i], TexelFlag::Untextured);
            }
        }
        for (f, &n) in owned.iter().enumerate() {
            let s = a.blocks[f].size as usize;
            prop_assert_eq!(n, s * (s + 1) / 2);
        }
    }
}
