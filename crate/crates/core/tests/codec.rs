//! Reversibility of the spectral image codec: dB map, normalization and the
//! colormap with its RGB2SC inversion.

use mtt_core::colormap::{apply_colormap, rgb2sc, Colormap, RgbImage};
use mtt_core::reconstruct::{denormalize, from_db};
use mtt_core::spectral::{
    denoise_mask, normalize01, to_db, Grid, MagnitudeSpectrogram, NormalizedImage, SignalInfo, StftParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn info() -> SignalInfo {
    SignalInfo { sample_rate: 22_050, num_samples: 4096, input_peak: 0.5 }
}

fn magnitude_grid(values: Vec<f64>, rows: usize, cols: usize) -> MagnitudeSpectrogram {
    MagnitudeSpectrogram { grid: Grid::from_vec(rows, cols, values).unwrap(), params: StftParams::default(), info: info() }
}

fn image(values: Vec<f64>) -> NormalizedImage {
    let n = values.len();
    NormalizedImage { grid: Grid::from_vec(1, n, values).unwrap() }
}

/// A valid colormap whose channel sums are the given strictly increasing
/// values in `[0, 3]`, filling R, then G, then B.
fn ramp(sums: &[f64]) -> Colormap {
    let entries = sums
        .iter()
        .map(|&s| [s.clamp(0.0, 1.0), (s - 1.0).clamp(0.0, 1.0), (s - 2.0).clamp(0.0, 1.0)])
        .collect();
    Colormap::new("ramp", entries).unwrap()
}

fn random_ramp(n: usize, seed: u64) -> Colormap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaps: Vec<f64> = (0..n - 1).map(|_| rng.random_range(1.0..4.0)).collect();
    let total: f64 = gaps.iter().sum();
    let start = rng.random_range(0.0..0.2);
    let span = rng.random_range(2.0..2.8 - start);
    let mut sums = vec![start];
    for g in gaps {
        let last = *sums.last().unwrap();
        sums.push(last + g / total * span);
    }
    ramp(&sums)
}

/// Index of the entry whose channel sum is nearest the pixel's.
fn nearest_entry(cm: &Colormap, px: [f32; 3]) -> usize {
    let s = px.iter().map(|&v| v as f64).sum::<f64>();
    let sums = cm.channel_sums();
    (0..sums.len())
        .min_by(|&a, &b| (sums[a] - s).abs().total_cmp(&(sums[b] - s).abs()))
        .unwrap()
}

#[test]
fn exact_entries_decode_to_their_level() {
    let maps = [Colormap::grayscale(), Colormap::fire(), random_ramp(2, 1), random_ramp(17, 2), random_ramp(300, 3)];
    for cm in &maps {
        let n = cm.len();
        let mut data = vec![0.0f32; 3 * n];
        for (i, e) in cm.entries().iter().enumerate() {
            for c in 0..3 {
                data[c * n + i] = e[c] as f32;
            }
        }
        let img = RgbImage::new(1, n, data).unwrap();
        let out = rgb2sc(&img, cm);
        let mut agree = 0;
        for i in 0..n {
            let want = nearest_entry(cm, img.pixel(0, i));
            assert_eq!(want, i);
            if out.grid.data[i] == i as f64 / (n - 1) as f64 {
                agree += 1;
            }
        }
        assert_eq!(agree, n, "{} agreed on {agree}/{n}", cm.name());
    }
}

#[test]
fn dense_grid_round_trip_is_the_nearest_level_quantizer() {
    let values: Vec<f64> = (0..=10_000).map(|i| i as f64 / 10_000.0).collect();
    for cm in [Colormap::grayscale(), Colormap::fire()] {
        let n = cm.len();
        let out = rgb2sc(&apply_colormap(&image(values.clone()), &cm), &cm);
        let bound = 1.0 / (2.0 * (n - 1) as f64);
        for (v, o) in values.iter().zip(&out.grid.data) {
            assert!((v - o).abs() <= bound + 1e-12, "{v} -> {o}");
            let level = (v * (n - 1) as f64).round() / (n - 1) as f64;
            assert_eq!(*o, level);
        }
    }
}

#[test]
fn mask_count_is_non_increasing_in_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mag = magnitude_grid((0..400).map(|_| rng.random_range(0.0..1.0f64).powi(6)).collect(), 20, 20);
    let db = to_db(&mag).unwrap();
    let min = db.min();
    let mut last = usize::MAX;
    for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let count = db.grid.data.iter().filter(|&&v| v < lambda * min).count();
        let masked = denoise_mask(&db, lambda).unwrap();
        let changed = masked.grid.data.iter().zip(&db.grid.data).filter(|(a, b)| a != b).count();
        assert!(changed <= count);
        assert!(count <= last);
        last = count;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn from_db_inverts_to_db(values in prop::collection::vec(1e-4f64..10.0, 2..200)) {
        let n = values.len();
        let mag = magnitude_grid(values.clone(), 1, n);
        let back = from_db(&to_db(&mag).unwrap());
        for (a, b) in values.iter().zip(&back.grid.data) {
            prop_assert!((a - b).abs() <= 1e-6 * a);
        }
    }

    #[test]
    fn to_db_inverts_from_db(db in prop::collection::vec(-99.0f64..0.0, 2..200)) {
        let n = db.len();
        let mut db = db;
        db[0] = 0.0;
        let mag = magnitude_grid(db.iter().map(|v| 3.0 * 10f64.powf(v / 20.0)).collect(), 1, n);
        let again = to_db(&mag).unwrap();
        for (a, b) in db.iter().zip(&again.grid.data) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn to_db_is_monotone(values in prop::collection::vec(0.0f64..10.0, 2..100)) {
        let n = values.len();
        let mut values = values;
        values[0] = 10.0;
        let db = to_db(&magnitude_grid(values.clone(), 1, n)).unwrap();
        for i in 0..n {
            for j in 0..n {
                if values[i] <= values[j] {
                    prop_assert!(db.grid.data[i] <= db.grid.data[j]);
                }
            }
        }
    }

    #[test]
    fn mask_is_idempotent(values in prop::collection::vec(0.0f64..1.0, 4..100), lambda in 0.0f64..=1.0) {
        let n = values.len();
        let mut values = values;
        values[0] = 1.0;
        let db = to_db(&magnitude_grid(values, 1, n)).unwrap();
        let once = denoise_mask(&db, lambda).unwrap();
        let twice = denoise_mask(&once, lambda).unwrap();
        prop_assert_eq!(&once.grid, &twice.grid);
        prop_assert_eq!(once.min(), db.min());
    }

    #[test]
    fn normalize_and_denormalize_are_inverse(values in prop::collection::vec(1e-5f64..1.0, 2..200)) {
        let n = values.len();
        let mut values = values;
        values[0] = 1.0;
        values[1] = 1e-5;
        let db = to_db(&magnitude_grid(values, 1, n)).unwrap();
        let (img, meta) = normalize01(&db).unwrap();
        let back = denormalize(&img, &meta).unwrap();
        for (a, b) in db.grid.data.iter().zip(&back.grid.data) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
        let (img2, _) = normalize01(&back).unwrap();
        for (a, b) in img.grid.data.iter().zip(&img2.grid.data) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn exact_entries_of_random_maps(n in 2usize..400, seed in any::<u64>()) {
        let cm = random_ramp(n, seed);
        let levels: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let out = rgb2sc(&apply_colormap(&image(levels.clone()), &cm), &cm);
        prop_assert_eq!(out.grid.data, levels);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn rgb2sc_after_apply_is_nearest_level(v in 0.0f64..=1.0, pick in 0usize..3) {
        let cm = match pick {
            0 => Colormap::grayscale(),
            1 => Colormap::fire(),
            _ => random_ramp(33, 5),
        };
        let n = cm.len();
        let out = rgb2sc(&apply_colormap(&image(vec![v]), &cm), &cm).grid.data[0];
        let k = (out * (n - 1) as f64).round();
        prop_assert_eq!(out, k / (n - 1) as f64);
        prop_assert!((out - v).abs() <= 1.0 / (2.0 * (n - 1) as f64) + 1e-12);
    }
}
