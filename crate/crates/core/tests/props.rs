//! Property tests for the invariants that hold on whole input families.

use mvda_kit::dataio::{generate_synthetic, split_by_class, MultiViewDataset, SynthesisConfig};
use mvda_kit::gep::chordal_distance;
use mvda_kit::kernels::{gram, KernelSpec};
use mvda_kit::subspace::{gap_metric, orthonormalize, principal_angles};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn finite_pair() -> impl Strategy<Value = (f64, f64)> {
    (-50.0f64..50.0, -50.0f64..50.0).prop_filter("nonzero pair", |(a, b)| a.hypot(*b) > 1e-6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chordal_distance_is_symmetric_scale_invariant_and_bounded(
        p1 in finite_pair(),
        p2 in finite_pair(),
        c in 0.1f64..10.0,
    ) {
        let d12 = chordal_distance(p1, p2).unwrap();
        let d21 = chordal_distance(p2, p1).unwrap();
        prop_assert!((d12 - d21).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d12));
        let scaled = chordal_distance((c * p1.0, c * p1.1), p2).unwrap();
        prop_assert!((d12 - scaled).abs() < 1e-9);
        let orth = chordal_distance(p1, (p1.1, -p1.0)).unwrap();
        prop_assert!((orth - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rbf_gram_is_shift_invariant(seed in 0u64..500, shift in -20.0f64..20.0) {
        let mut rng_seed = seed;
        let x = DMatrix::from_fn(6, 3, |r, c| {
            rng_seed = rng_seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_seed >> 33) as f64 / (1u64 << 31) as f64 - 1.0) * (1.0 + (r + c) as f64 * 0.1)
        });
        let spec = KernelSpec::Rbf { sigma: 1.3 };
        let k = gram(&x, &x, &spec).unwrap();
        let mut shifted = x.clone();
        for v in shifted.iter_mut() {
            *v += shift;
        }
        let k2 = gram(&shifted, &shifted, &spec).unwrap();
        let max_diff = (&k2 - &k).iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        prop_assert!(max_diff <= 1e-12);
    }

    #[test]
    fn layout_identities_survive_generation_and_split(
        classes in 2usize..6,
        views in 1usize..4,
        per_class in 1usize..5,
        seed in 0u64..1000,
    ) {
        let cfg = SynthesisConfig {
            classes,
            views,
            per_class,
            dims: (0..views).map(|j| 2 + j).collect(),
            latent_dim: 2,
            noise: 0.2,
            nonlinear: seed % 2 == 0,
            seed,
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let check = |d: &MultiViewDataset| {
            let l = &d.layout;
            assert_eq!(l.total, l.per_view.iter().sum::<usize>());
            assert_eq!(l.total, l.per_class.iter().sum::<usize>());
            for i in 0..l.classes {
                assert_eq!(l.per_class[i], l.per_class_view[i].iter().sum::<usize>());
            }
        };
        check(&ds);
        if classes >= 3 {
            let (train, test) = split_by_class(&ds, classes - 1).unwrap();
            check(&train);
            check(&test);
            prop_assert_eq!(train.layout.total + test.layout.total, ds.layout.total);
        }
    }

    #[test]
    fn canonicalization_is_idempotent(seed in 0u64..300) {
        let cfg = SynthesisConfig {
            classes: 3,
            views: 2,
            per_class: 3,
            dims: vec![3, 2],
            latent_dim: 2,
            noise: 0.3,
            nonlinear: false,
            seed,
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let again = MultiViewDataset::from_parts(ds.views.clone(), ds.labels.clone()).unwrap();
        prop_assert_eq!(ds, again);
    }

    #[test]
    fn sin_theta_is_basis_invariant_and_symmetric(seed in 0u64..200) {
        let n = 9;
        let l = 3;
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let z1 = DMatrix::from_fn(n, l, |_, _| next());
        let z2 = DMatrix::from_fn(n, l, |_, _| next());
        let rot_raw = DMatrix::from_fn(l, l, |_, _| next());
        let b1 = orthonormalize(&z1).unwrap();
        let b2 = orthonormalize(&z2).unwrap();
        // re-express b1 in a rotated basis of the same span
        let rot = rot_raw.qr().q();
        let b1_rot = orthonormalize(&(b1.matrix() * rot)).unwrap();

        let a = principal_angles(&b1, &b2).unwrap();
        let b = principal_angles(&b1_rot, &b2).unwrap();
        let c = principal_angles(&b2, &b1).unwrap();
        prop_assert!((a.sin_spectral - b.sin_spectral).abs() <= 1e-10);
        prop_assert!((a.sin_frobenius - b.sin_frobenius).abs() <= 1e-10);
        prop_assert!((a.sin_spectral - c.sin_spectral).abs() <= 1e-10);
        let g12 = gap_metric(&b1, &b2).unwrap();
        let g21 = gap_metric(&b2, &b1).unwrap();
        prop_assert!((g12 - g21).abs() <= 1e-12);
        prop_assert!((g12 - a.sin_spectral).abs() <= 1e-10);
    }
}
