use std::f64::consts::PI;

use adaptherm_core::mesh::{FaceMesh, SpacecraftConfig, Surface, SurfaceKind, build_mesh};
use adaptherm_core::resample::{downsample_loads, downsample_temperature, upsample_temperature};
use proptest::prelude::*;

fn surface(index: usize, width: f64, height: f64) -> Surface {
    let mut s = SpacecraftConfig::default_spacecraft().surfaces[index].clone();
    if s.kind == SurfaceKind::Rectangular2D {
        s.width = width;
    }
    s.height = height;
    s
}

fn sinusoid(m: &FaceMesh) -> Vec<f64> {
    // smooth in normalized face coordinates
    let n = m.n as f64;
    (0..m.node_count())
        .map(|k| {
            let (r, c) = if m.kind.is_2d() { (k / m.n, k % m.n) } else { (0, k) };
            let (u, v) = ((c as f64 + 0.5) / n, (r as f64 + 0.5) / n);
            300.0 + 10.0 * (PI * u).sin() * (0.5 * PI * v).cos()
        })
        .collect()
}

fn round_trip_error(s: &Surface, n: usize) -> f64 {
    let dense = build_mesh(s, 10).unwrap();
    let sparse = build_mesh(s, n).unwrap();
    let t = sinusoid(&dense);
    let down = downsample_temperature(&dense, &sparse, &t).unwrap();
    let up = upsample_temperature(&sparse, &dense, &down).unwrap();
    up.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum::<f64>() / t.len() as f64
}

#[test]
fn smooth_round_trip_improves_with_resolution() {
    for index in [0, 6] {
        let s = surface(index, 1.0, 0.5);
        let errs: Vec<f64> = [2, 4, 6, 8, 10].iter().map(|&n| round_trip_error(&s, n)).collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "surface {index}: {errs:?}");
        }
        assert!(errs[4] < 1e-12);
    }
}

#[test]
fn thousand_random_triples_conserve_flux() {
    let start = std::time::Instant::now();
    let mut state = 0x2545f4914f6cdd1du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let index = (next() * 11.0) as usize;
        let s = surface(index, 0.2 + 2.0 * next(), 0.2 + 2.0 * next());
        let n = 2 + (next() * 9.0) as usize;
        let dense = build_mesh(&s, 10).unwrap();
        let sparse = build_mesh(&s, n).unwrap();
        let q: Vec<f64> = (0..dense.node_count()).map(|_| 50.0 * next()).collect();
        let qs = downsample_loads(&dense, &sparse, &q).unwrap();
        let (a, b): (f64, f64) = (qs.iter().sum(), q.iter().sum());
        worst = worst.max((a - b).abs() / b);
    }
    assert!(worst <= 1e-9, "{worst}");
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

fn kinds() -> impl Strategy<Value = usize> {
    prop_oneof![Just(0usize), Just(5), Just(6), Just(9)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loads_conserve_total(index in kinds(), w in 0.1f64..3.0, h in 0.1f64..3.0, n in 2usize..=10, seed in any::<u64>()) {
        let s = surface(index, w, h);
        let dense = build_mesh(&s, 10).unwrap();
        let sparse = build_mesh(&s, n).unwrap();
        let q: Vec<f64> = (0..dense.node_count()).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 40) as f64).collect();
        let total: f64 = q.iter().sum();
        let qs = downsample_loads(&dense, &sparse, &q).unwrap();
        prop_assert!((qs.iter().sum::<f64>() - total).abs() <= 1e-9 * total.max(1e-300));
    }

    #[test]
    fn constants_are_fixed_points(index in kinds(), n in 2usize..=10, c in 1.0f64..500.0) {
        let s = surface(index, 1.0, 1.0);
        let dense = build_mesh(&s, 10).unwrap();
        let sparse = build_mesh(&s, n).unwrap();
        let down = downsample_temperature(&dense, &sparse, &vec![c; dense.node_count()]).unwrap();
        prop_assert!(down.iter().all(|v| (v - c).abs() <= 2.0 * f64::EPSILON * c));
        let up = upsample_temperature(&sparse, &dense, &vec![c; sparse.node_count()]).unwrap();
        prop_assert!(up.iter().all(|v| (v - c).abs() <= 1e-13 * c));
        // constant flux density maps to constant flux density
        let qd: Vec<f64> = dense.areas.iter().map(|a| c * a).collect();
        let qs = downsample_loads(&dense, &sparse, &qd).unwrap();
        for (q, a) in qs.iter().zip(&sparse.areas) {
            prop_assert!((q / a - c).abs() <= 1e-12 * c);
        }
    }

    #[test]
    fn load_downsampling_is_linear(index in kinds(), n in 2usize..=10, a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let s = surface(index, 1.3, 0.7);
        let dense = build_mesh(&s, 10).unwrap();
        let sparse = build_mesh(&s, n).unwrap();
        let len = dense.node_count();
        let q1: Vec<f64> = (0..len).map(|i| ((seed >> (i % 50)) & 0xff) as f64).collect();
        let q2: Vec<f64> = (0..len).map(|i| ((seed.rotate_left(i as u32) >> 7) & 0xff) as f64).collect();
        let mix: Vec<f64> = q1.iter().zip(&q2).map(|(x, y)| a * x + b * y).collect();
        let f1 = downsample_loads(&dense, &sparse, &q1).unwrap();
        let f2 = downsample_loads(&dense, &sparse, &q2).unwrap();
        let fm = downsample_loads(&dense, &sparse, &mix).unwrap();
        for i in 0..fm.len() {
            let expect = a * f1[i] + b * f2[i];
            prop_assert!((fm[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()) * len as f64);
        }
    }
}
