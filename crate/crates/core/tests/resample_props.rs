use proptest::prelude::*;

use panoalign::geometry::CameraModel;
use panoalign::grid::Grid;
use panoalign::resample::{downsample, face_id_map, merge_depth_to_erp, upsample, CubemapFaces};
use panoalign::{ErpGrid, FACE_COUNT};

fn faces(n: usize, seed: u64) -> CubemapFaces<f64> {
    let mut state = seed | 1;
    let grids = (0..FACE_COUNT)
        .map(|_| {
            Grid::from_fn(n, n, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                0.5 + (state >> 40) as f64 / (1u64 << 24) as f64 * 5.0
            })
        })
        .collect();
    CubemapFaces::new(grids, CameraModel::new(n)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_is_homogeneous_per_face(
        n in 2usize..24,
        h in 2usize..32,
        face in 0usize..FACE_COUNT,
        s in 0.1..10.0f64,
        seed in any::<u64>(),
    ) {
        let base = faces(n, seed);
        let mut scaled = base.clone();
        for d in scaled.faces[face].data_mut() {
            *d *= s;
        }
        let a = merge_depth_to_erp(&base, h);
        let b = merge_depth_to_erp(&scaled, h);
        prop_assert_eq!(&a.face_id, &b.face_id);
        for i in 0..a.depth.len() {
            let (da, db) = (a.depth.data()[i], b.depth.data()[i]);
            if a.face_id.data()[i] as usize == face {
                prop_assert!((db - s * da).abs() <= 1e-12 * db);
            } else {
                prop_assert_eq!(da.to_bits(), db.to_bits());
            }
        }
    }

    #[test]
    fn every_pixel_has_one_face(n in 1usize..64, h in 1usize..64) {
        let map = face_id_map(&CameraModel::new(n), h);
        prop_assert!(map.data().iter().all(|&c| (c as usize) < FACE_COUNT));
        let merged = merge_depth_to_erp(&faces(n, 3), h);
        prop_assert_eq!(&merged.face_id, &map);
        prop_assert_eq!(merged.invalid_count(), 0);
    }

    #[test]
    fn constant_survives_resampling(h in 1usize..16, factor in 1usize..4, c in 0.01..100.0f64) {
        let h = h * factor;
        let grid = ErpGrid::filled(h, c);
        let down = downsample(&grid, factor);
        prop_assert!(down.data().iter().all(|v| (v - c).abs() <= 1e-12 * c));
        let up = upsample(&down, h);
        prop_assert!(up.data().iter().all(|v| (v - c).abs() <= 1e-12 * c));
    }

    #[test]
    fn resampling_commutes_with_whole_block_rolls(h in 1usize..12, factor in 1usize..4, k in -30isize..30, seed in any::<u64>()) {
        let h = h * factor;
        let mut state = seed | 1;
        let grid = ErpGrid::from_fn(h, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 1000) as f64
        });
        let shift = k * factor as isize;
        let a = downsample(&grid.roll_x(shift), factor);
        let b = downsample(&grid, factor).roll_x(k);
        prop_assert_eq!(a, b);
    }
}
