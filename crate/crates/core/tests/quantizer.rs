use fdkg_core::keygen::{align_keys, key_generation_ratio, quantize_guardband, Party, QuantizerConfig};
use fdkg_core::rng::StreamRng;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = StreamRng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn cfg(epsilon: f64) -> QuantizerConfig {
    QuantizerConfig { epsilon }
}

#[test]
fn guard_band_drops_twenty_percent() {
    let x = normals(11, 100_000);
    let k = quantize_guardband(&x, &cfg(0.1), Party::Alice).unwrap();
    let dropped = 1.0 - k.retained() as f64 / x.len() as f64;
    assert!((dropped - 0.2).abs() <= 0.01, "dropped {dropped}");
}

#[test]
fn kgr_non_increasing_in_epsilon() {
    let mut rng = StreamRng::seed_from_u64(5);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..200)
        .map(|i| {
            let a = normals(1000 + i, 128);
            let b = a
                .iter()
                .map(|v| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    v + 0.3 * n
                })
                .collect();
            (a, b)
        })
        .collect();
    let mut last = f64::INFINITY;
    for eps in [0.0, 0.05, 0.1, 0.2, 0.4] {
        let mut aligned = 0;
        for (a, b) in &pairs {
            let ka = quantize_guardband(a, &cfg(eps), Party::Alice).unwrap();
            let kb = quantize_guardband(b, &cfg(eps), Party::Bob).unwrap();
            aligned += align_keys(&ka, &kb).unwrap().len();
        }
        let kgr = key_generation_ratio(aligned, 64 * pairs.len());
        assert!(kgr <= last, "eps {eps}: {kgr} > {last}");
        last = kgr;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_and_scale_equivariance(seed in 0u64..10_000, shift in -8i32..8, scale_exp in -4i32..5) {
        let x = normals(seed, 128);
        let scale = 2f64.powi(scale_exp);
        let y: Vec<f64> = x.iter().map(|v| v * scale + shift as f64).collect();
        let c = cfg(0.1);
        let kx = quantize_guardband(&x, &c, Party::Alice).unwrap();
        let ky = quantize_guardband(&y, &c, Party::Alice).unwrap();
        prop_assert_eq!(kx.bits, ky.bits);
        prop_assert_eq!(kx.retained_mask, ky.retained_mask);
    }

    #[test]
    fn bits_follow_the_side_of_the_mean(seed in 0u64..10_000, eps in 0.0f64..0.45) {
        let x = normals(seed, 64);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let k = quantize_guardband(&x, &cfg(eps), Party::Bob).unwrap();
        let kept: Vec<f64> = x.iter().zip(&k.retained_mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
        for (v, b) in kept.iter().zip(&k.bits) {
            prop_assert_eq!(*b == 1, *v > mean);
        }
    }
}
