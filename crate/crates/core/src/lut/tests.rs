use super::*;
use crate::image::ImageF;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent brute-force trilinear oracle: plain eight-corner weighted sum
/// in f64, no identity-residual rewrite.
fn oracle_lookup(lut: &Lut3d, px: [f32; 3]) -> [f64; 3] {
    let d = lut.size();
    let dmin = lut.domain_min();
    let dmax = lut.domain_max();
    let mut u = [0.0f64; 3];
    for c in 0..3 {
        let v = (px[c] as f64 - dmin[c] as f64) / (dmax[c] as f64 - dmin[c] as f64);
        u[c] = v.clamp(0.0, 1.0);
    }
    let mut i0 = [0usize; 3];
    let mut f = [0.0f64; 3];
    for c in 0..3 {
        let t = u[c] * (d - 1) as f64;
        let i = (t.floor() as usize).min(d - 2);
        i0[c] = i;
        f[c] = t - i as f64;
    }
    let mut out = [0.0f64; 3];
    for db in 0..2 {
        for dg in 0..2 {
            for dr in 0..2 {
                let w = (if dr == 1 { f[0] } else { 1.0 - f[0] })
                    * (if dg == 1 { f[1] } else { 1.0 - f[1] })
                    * (if db == 1 { f[2] } else { 1.0 - f[2] });
                let e = lut.entry(i0[0] + dr, i0[1] + dg, i0[2] + db);
                for c in 0..3 {
                    out[c] += w * e[c] as f64;
                }
            }
        }
    }
    for v in out.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

fn random_lut(rng: &mut ChaCha8Rng, size: usize) -> Lut3d {
    let lattice: Vec<f32> = (0..3 * size * size * size).map(|_| rng.gen::<f32>()).collect();
    Lut3d::new(size, lattice).unwrap()
}

/// Smooth LUT sampled from a mild per-channel curve with cross-channel mixing.
fn smooth_lut(rng: &mut ChaCha8Rng, size: usize) -> Lut3d {
    let gamma: Vec<f64> = (0..3).map(|_| rng.gen_range(0.7..1.4)).collect();
    let gain: Vec<f64> = (0..3).map(|_| rng.gen_range(0.8..1.1)).collect();
    let mix: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.08..0.08)).collect();
    let mut lattice = Vec::with_capacity(3 * size * size * size);
    for b in 0..size {
        for g in 0..size {
            for r in 0..size {
                let x = [
                    r as f64 / (size - 1) as f64,
                    g as f64 / (size - 1) as f64,
                    b as f64 / (size - 1) as f64,
                ];
                for c in 0..3 {
                    let v = gain[c] * x[c].powf(gamma[c]) + mix[c] * (x[(c + 1) % 3] - 0.5);
                    lattice.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
    }
    Lut3d::new(size, lattice).unwrap()
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageF {
    ImageF::from_data(w, h, (0..3 * w * h).map(|_| rng.gen::<f32>()).collect())
}

#[test]
fn identity_size_2_corners() {
    let lut = identity_lut(2).unwrap();
    assert_eq!(lut.entry(0, 0, 0), [0.0, 0.0, 0.0]);
    assert_eq!(lut.entry(1, 0, 0), [1.0, 0.0, 0.0]);
    assert_eq!(lut.entry(0, 1, 0), [0.0, 1.0, 0.0]);
    assert_eq!(lut.entry(1, 1, 1), [1.0, 1.0, 1.0]);
}

#[test]
fn identity_size_33_midpoint() {
    let lut = identity_lut(33).unwrap();
    assert_eq!(lut.entry(16, 16, 16), [0.5, 0.5, 0.5]);
}

#[test]
fn identity_apply_is_noop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lut = identity_lut(17).unwrap();
    let img = random_image(&mut rng, 32, 16);
    let out = lut.apply(&img).unwrap();
    assert!(img.max_abs_diff(&out) <= 1e-6);
    // residual interpolation makes it a bit-level no-op
    assert_eq!(img.data, out.data);
}

#[test]
fn identity_rejects_size_below_2() {
    assert!(matches!(identity_lut(1), Err(Error::LutSize(1))));
    assert!(matches!(identity_lut(0), Err(Error::LutSize(0))));
}

#[test]
fn apply_identity_pixel() {
    let lut = identity_lut(33).unwrap();
    let out = lut.lookup([0.2, 0.4, 0.6]);
    assert!((out[0] - 0.2).abs() <= 1e-6);
    assert!((out[1] - 0.4).abs() <= 1e-6);
    assert!((out[2] - 0.6).abs() <= 1e-6);
}

#[test]
fn apply_constant_lut() {
    let size = 5;
    let mut lattice = Vec::new();
    for _ in 0..size * size * size {
        lattice.extend_from_slice(&[1.0, 0.0, 0.0]);
    }
    let lut = Lut3d::new(size, lattice).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = random_image(&mut rng, 8, 8);
    let out = lut.apply(&img).unwrap();
    for px in out.data.chunks_exact(3) {
        assert!((px[0] - 1.0).abs() <= 1e-6 && px[1].abs() <= 1e-6 && px[2].abs() <= 1e-6);
    }
}

#[test]
fn apply_matches_oracle_on_random_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lut = random_lut(&mut rng, 4);
    for _ in 0..1000 {
        let px = [rng.gen::<f32>(), rng.gen::<f32>(), rng.gen::<f32>()];
        let got = lut.lookup(px);
        let want = oracle_lookup(&lut, px);
        for c in 0..3 {
            assert!((got[c] as f64 - want[c]).abs() <= 1e-6, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn apply_exact_at_lattice_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lut = random_lut(&mut rng, 7);
    let d = lut.size();
    for b in 0..d {
        for g in 0..d {
            for r in 0..d {
                let px = [
                    r as f32 / (d - 1) as f32,
                    g as f32 / (d - 1) as f32,
                    b as f32 / (d - 1) as f32,
                ];
                let got = lut.lookup(px);
                let want = lut.entry(r, g, b);
                for c in 0..3 {
                    assert!((got[c] - want[c]).abs() <= 1e-6);
                }
            }
        }
    }
}

#[test]
fn nan_pixel_is_an_error() {
    let lut = identity_lut(4).unwrap();
    let img = ImageF::from_data(1, 1, vec![0.1, f32::NAN, 0.3]);
    assert!(matches!(lut.apply(&img), Err(Error::NanPixel)));
}

#[test]
fn out_of_domain_pixels_clamp() {
    let lut = identity_lut(4).unwrap();
    let img = ImageF::from_data(1, 1, vec![-0.5, 1.5, 0.5]);
    let out = lut.apply(&img).unwrap();
    assert_eq!(out.get(0, 0), [0.0, 1.0, 0.5]);
}

#[test]
fn threaded_apply_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lut = random_lut(&mut rng, 9);
    let img = random_image(&mut rng, 31, 23);
    let one = lut.apply_threaded(&img, 1).unwrap();
    for threads in [2, 3, 8] {
        let many = lut.apply_threaded(&img, threads).unwrap();
        assert_eq!(one.data, many.data);
    }
}

#[test]
fn parse_smallest_legal_cube() {
    let text = "LUT_3D_SIZE 2\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n0 0 1\n1 0 1\n0 1 1\n1 1 1\n";
    let lut = parse_cube(text).unwrap();
    assert_eq!(lut.size(), 2);
    assert_eq!(lut.lattice(), identity_lut(2).unwrap().lattice());
}

#[test]
fn parse_domain_rescales_by_affine_map() {
    let mut text = String::from("LUT_3D_SIZE 2\nDOMAIN_MIN 0 0 0\nDOMAIN_MAX 2 2 2\n");
    text.push_str("0 0 0\n1 0 0\n0 1 0\n1 1 0\n0 0 1\n1 0 1\n0 1 1\n1 1 1\n");
    let lut = parse_cube(&text).unwrap();
    let plain = identity_lut(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let px = [
            rng.gen_range(0.0..2.0f32),
            rng.gen_range(0.0..2.0f32),
            rng.gen_range(0.0..2.0f32),
        ];
        let got = lut.lookup(px);
        // oracle: pre-divide the pixel by 2 and use the default-domain LUT
        let want = plain.lookup([px[0] / 2.0, px[1] / 2.0, px[2] / 2.0]);
        for c in 0..3 {
            assert!((got[c] - want[c]).abs() <= 1e-6);
        }
    }
}

#[test]
fn parse_missing_rows_reports_eof_line() {
    let text = "LUT_3D_SIZE 2\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n0 0 1\n1 0 1\n0 1 1\n";
    match parse_cube(text) {
        Err(Error::CubeParse { line, .. }) => assert_eq!(line, 9),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn parse_missing_size_is_an_error() {
    match parse_cube("TITLE \"x\"\n0 0 0\n") {
        Err(Error::CubeParse { line, msg }) => {
            assert_eq!(line, 2);
            assert!(msg.contains("LUT_3D_SIZE"), "{msg}");
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn parse_non_numeric_token_reports_line() {
    let text = "LUT_3D_SIZE 2\n0 0 0\n1 0 zebra\n";
    match parse_cube(text) {
        Err(Error::CubeParse { line, msg }) => {
            assert_eq!(line, 3);
            assert!(msg.contains("zebra"), "{msg}");
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn parse_accepts_crlf_and_comments() {
    let text = "# a comment\r\nLUT_3D_SIZE 2\r\n0 0 0 # inline\r\n1 0 0\r\n0 1 0\r\n1 1 0\r\n0 0 1\r\n1 0 1\r\n0 1 1\r\n1 1 1\r\n";
    assert_eq!(parse_cube(text).unwrap().size(), 2);
}

#[test]
fn write_identity_round_trips_bit_identically() {
    let lut = identity_lut(2).unwrap();
    let text = write_cube(&lut);
    let back = parse_cube(&text).unwrap();
    assert_eq!(lut.lattice(), back.lattice());
}

#[test]
fn write_random_round_trips_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let lut = random_lut(&mut rng, 9);
    let back = parse_cube(&write_cube(&lut)).unwrap();
    assert_eq!(lut.lattice(), back.lattice());
}

#[test]
fn write_line_count_is_header_plus_entries() {
    let lut = identity_lut(3).unwrap();
    let text = write_cube(&lut);
    assert_eq!(text.lines().count(), 1 + 27);
}

#[test]
fn materialize_zero_weights_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let size = 5;
    let basis: Vec<Vec<f32>> = (0..4)
        .map(|_| (0..3 * size * size * size).map(|_| rng.gen_range(-0.5..0.5f32)).collect())
        .collect();
    let bank = ClutBank::new(size, basis).unwrap();
    let lut = materialize_clut(&bank, &LutWeights(vec![0.0; 4])).unwrap();
    assert_eq!(lut.lattice(), identity_lut(size).unwrap().lattice());
}

#[test]
fn materialize_unit_vector_adds_single_basis() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let size = 4;
    let basis: Vec<Vec<f32>> = (0..3)
        .map(|_| (0..3 * size * size * size).map(|_| rng.gen_range(-0.5..0.5f32)).collect())
        .collect();
    let bank = ClutBank::new(size, basis.clone()).unwrap();
    let lut = materialize_clut(&bank, &LutWeights(vec![0.0, 1.0, 0.0])).unwrap();
    let id = identity_lut(size).unwrap();
    for ((got, idv), b) in lut.lattice().iter().zip(id.lattice()).zip(&basis[1]) {
        let want = (idv + b).clamp(0.0, 1.0);
        assert!((got - want).abs() <= 1e-6);
    }
}

#[test]
fn materialize_matches_naive_accumulation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let size = 9;
    let k = 8;
    let n = 3 * size * size * size;
    let basis: Vec<Vec<f32>> =
        (0..k).map(|_| (0..n).map(|_| rng.gen_range(-0.3..0.3f32)).collect()).collect();
    let w: Vec<f32> = (0..k).map(|_| rng.gen_range(-1.0..1.0f32)).collect();
    let bank = ClutBank::new(size, basis.clone()).unwrap();
    let lut = materialize_clut(&bank, &LutWeights(w.clone())).unwrap();
    // naive triple-loop accumulation oracle
    let id = identity_lut(size).unwrap();
    for idx in 0..n {
        let mut v = id.lattice()[idx];
        for kk in 0..k {
            v += w[kk] * basis[kk][idx];
        }
        let want = v.clamp(0.0, 1.0);
        assert!((lut.lattice()[idx] - want).abs() <= 1e-6);
    }
}

#[test]
fn materialize_rejects_weight_length_mismatch() {
    let bank = ClutBank::new(2, vec![vec![0.0; 24]]).unwrap();
    assert!(matches!(
        materialize_clut(&bank, &LutWeights(vec![0.0, 1.0])),
        Err(Error::WeightCount { expected: 1, got: 2 })
    ));
}

#[test]
fn compose_identity_then_lut_equals_lut_at_lattice_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let lut = random_lut(&mut rng, 5);
    let id = identity_lut(5).unwrap();
    let composed = compose_luts(&id, &lut).unwrap();
    let d = 5;
    for b in 0..d {
        for g in 0..d {
            for r in 0..d {
                let got = composed.entry(r, g, b);
                let want = lut.entry(r, g, b);
                for c in 0..3 {
                    assert!((got[c] - want[c]).abs() <= 1e-6);
                }
            }
        }
    }
}

#[test]
fn compose_lut_then_identity_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let lut = random_lut(&mut rng, 6);
    let id = identity_lut(6).unwrap();
    let composed = compose_luts(&lut, &id).unwrap();
    assert_eq!(composed.lattice(), lut.lattice());
}

#[test]
fn compose_rejects_size_mismatch() {
    let a = identity_lut(4).unwrap();
    let b = identity_lut(5).unwrap();
    assert!(matches!(compose_luts(&a, &b), Err(Error::LutSizeMismatch(4, 5))));
}

#[test]
fn composed_apply_close_to_sequential_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let first = smooth_lut(&mut rng, 33);
    let second = smooth_lut(&mut rng, 33);
    let composed = compose_luts(&first, &second).unwrap();
    let img = random_image(&mut rng, 100, 100);
    let one_shot = composed.apply(&img).unwrap();
    // sequential-application oracle
    let sequential = second.apply(&first.apply(&img).unwrap()).unwrap();
    let max = one_shot.max_abs_diff(&sequential);
    println!("compose max abs err over 10k pixels: {max}");
    assert!(max <= 0.02, "max abs err {max} > 0.02");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Raising one lattice channel never decreases any output on that channel.
    #[test]
    fn apply_is_monotone_in_lattice_values(
        seed in 0u64..1000,
        idx in 0usize..(4 * 4 * 4),
        ch in 0usize..3,
        bump in 0.01f32..0.5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lut = random_lut(&mut rng, 4);
        let img = random_image(&mut rng, 6, 6);
        let base = lut.apply(&img).unwrap();
        let mut lattice = lut.lattice().to_vec();
        lattice[3 * idx + ch] = (lattice[3 * idx + ch] + bump).min(1.0);
        let raised = Lut3d::new(4, lattice).unwrap();
        let out = raised.apply(&img).unwrap();
        for (p, q) in base.data.chunks_exact(3).zip(out.data.chunks_exact(3)) {
            prop_assert!(q[ch] >= p[ch] - 1e-6);
        }
    }

    #[test]
    fn cube_round_trip_preserves_entries(seed in 0u64..1000, size in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lut = random_lut(&mut rng, size);
        let back = parse_cube(&write_cube(&lut)).unwrap();
        prop_assert_eq!(back.size(), lut.size());
        for (a, b) in lut.lattice().iter().zip(back.lattice()) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }
}
