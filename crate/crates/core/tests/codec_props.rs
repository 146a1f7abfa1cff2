use pixnorm::imageio::{self, GrayImage, SurfaceGrid};
use pixnorm::normcodec::{self, NormMode, PIXEL_MAX, PIXEL_MIN};
use proptest::prelude::*;

/// `(values, rows, cols)` with entries drawn from a random affine range.
fn matrix() -> impl Strategy<Value = (Vec<f64>, usize, usize)> {
    (1usize..40, 1usize..12, -1e6f64..1e6, 1e-3f64..1e6).prop_flat_map(|(rows, cols, offset, scale)| {
        proptest::collection::vec(-1.0f64..1.0, rows * cols)
            .prop_map(move |v| (v.into_iter().map(|u| offset + scale * u).collect(), rows, cols))
    })
}

fn mode() -> impl Strategy<Value = NormMode> {
    prop_oneof![Just(NormMode::Global), Just(NormMode::PerColumn)]
}

proptest! {
    #[test]
    fn normalized_entries_stay_in_range((values, rows, cols) in matrix(), mode in mode(),
                                        a in -100.0f64..100.0, width in 1e-3f64..1e3) {
        let b = a + width;
        let n = normcodec::normalize_values(&values, rows, cols, mode, a, b).unwrap();
        for &v in &n.values {
            prop_assert!(v >= a - 1e-9 && v <= b + 1e-9, "{v} outside [{a}, {b}]");
        }
    }

    #[test]
    fn order_is_preserved_within_columns((values, rows, cols) in matrix(), mode in mode()) {
        let n = normcodec::normalize_values(&values, rows, cols, mode, PIXEL_MIN, PIXEL_MAX).unwrap();
        for j in 0..cols {
            for r1 in 0..rows {
                for r2 in 0..rows {
                    let (x1, x2) = (values[r1 * cols + j], values[r2 * cols + j]);
                    if x1 <= x2 {
                        prop_assert!(n.get(r1, j) <= n.get(r2, j));
                    }
                }
            }
        }
    }

    #[test]
    fn global_order_holds_across_columns((values, rows, cols) in matrix()) {
        let n = normcodec::normalize_values(&values, rows, cols, NormMode::Global, PIXEL_MIN, PIXEL_MAX).unwrap();
        for i in 0..values.len() {
            for k in 0..values.len() {
                if values[i] <= values[k] {
                    prop_assert!(n.values[i] <= n.values[k]);
                }
            }
        }
    }

    #[test]
    fn continuous_round_trip((values, rows, cols) in matrix(), mode in mode()) {
        let n = normcodec::normalize_values(&values, rows, cols, mode, PIXEL_MIN, PIXEL_MAX).unwrap();
        let back = normcodec::denormalize(&n).unwrap();
        for (k, (&x, &y)) in values.iter().zip(&back).enumerate() {
            let (lo, hi) = n.params.column_bounds(k % cols);
            if hi - lo >= 1e-6 {
                let scale = x.abs().max(lo.abs()).max(hi.abs());
                prop_assert!((x - y).abs() / scale <= 1e-9);
            }
        }
    }

    #[test]
    fn quantized_round_trip_within_half_step((values, rows, cols) in matrix(), mode in mode()) {
        let n = normcodec::normalize_values(&values, rows, cols, mode, PIXEL_MIN, PIXEL_MAX).unwrap();
        let img = normcodec::quantize(&n).unwrap();
        let back = normcodec::dequantize(&img, &n.params).unwrap();
        for (k, (&x, &y)) in values.iter().zip(&back).enumerate() {
            let (lo, hi) = n.params.column_bounds(k % cols);
            prop_assert!((x - y).abs() <= (hi - lo) / 510.0 + 1e-9);
        }
    }

    #[test]
    fn modes_agree_when_columns_share_bounds(rows in 2usize..30, cols in 1usize..8,
                                             lo in -1e3f64..1e3, span in 1e-3f64..1e3,
                                             seed in any::<u64>()) {
        let mut rng = pixnorm::rng::SplitMix64::new(seed);
        let hi = lo + span;
        let mut values: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(lo, hi)).collect();
        // Pin every column's extrema to the same pair.
        for j in 0..cols {
            values[j] = lo;
            values[cols + j] = hi;
        }
        let g = normcodec::normalize_values(&values, rows, cols, NormMode::Global, PIXEL_MIN, PIXEL_MAX).unwrap();
        let p = normcodec::normalize_values(&values, rows, cols, NormMode::PerColumn, PIXEL_MIN, PIXEL_MAX).unwrap();
        prop_assert_eq!(g.values, p.values);
    }

    #[test]
    fn sidecar_json_round_trips((values, rows, cols) in matrix(), mode in mode()) {
        let n = normcodec::normalize_values(&values, rows, cols, mode, PIXEL_MIN, PIXEL_MAX).unwrap();
        let back = normcodec::NormParams::from_json(&n.params.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, n.params);
    }

    #[test]
    fn pgm_round_trips(width in 1usize..64, height in 1usize..64, seed in any::<u64>()) {
        let mut rng = pixnorm::rng::SplitMix64::new(seed);
        let pixels: Vec<u8> = (0..width * height).map(|_| rng.below(256) as u8).collect();
        let img = GrayImage::new(width, height, pixels).unwrap();
        let bytes = imageio::encode_pgm(&img);
        prop_assert_eq!(bytes.len(), imageio::pgm_header(width, height).len() + width * height);
        let decoded = imageio::decode_pgm(&bytes).unwrap();
        prop_assert_eq!(&decoded, &img);
        prop_assert_eq!(imageio::encode_pgm(&decoded), bytes);
    }

    #[test]
    fn surface_keeps_every_intensity(width in 1usize..32, height in 1usize..32, seed in any::<u64>()) {
        let mut rng = pixnorm::rng::SplitMix64::new(seed);
        let pixels: Vec<u8> = (0..width * height).map(|_| rng.below(256) as u8).collect();
        let img = GrayImage::new(width, height, pixels).unwrap();
        let grid = SurfaceGrid::from(&img);
        prop_assert_eq!(grid.triples().count(), width * height);
        for (x, y, z) in grid.triples() {
            prop_assert_eq!(z, f64::from(img.get(y, x)));
        }
    }
}

#[test]
fn pgm_file_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("img.pgm");
    let img = GrayImage::new(3, 2, vec![0, 128, 255, 1, 2, 3]).unwrap();
    imageio::write_pgm(&img, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
    assert_eq!(bytes.len(), 11 + 6);
    assert_eq!(imageio::read_pgm(&path).unwrap(), img);
}
