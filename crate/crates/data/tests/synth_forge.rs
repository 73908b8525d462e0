use benet_data::forge::forge_with_region;
use benet_data::synth::derive_seed;
use benet_data::{forge, generate_real, Domain, ForgeryStrengths};
use proptest::prelude::*;


#[test]
fn generation_is_deterministic_and_bounded() {
    let a = generate_real(3, 20, 32);
    let b = generate_real(3, 20, 32);
    assert_eq!(a, b);
    for s in &a {
        assert_eq!(s.image.shape(), &[3, 32, 32]);
        assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(s.domain, Domain::Real);
        assert!(s.is_consistent());
    }
}

#[test]
fn different_seeds_differ_in_at_least_one_percent_of_pixels() {
    for pair in 0..100u64 {
        let a = &generate_real(pair, 1, 32)[0];
        let b = &generate_real(pair + 1000, 1, 32)[0];
        let n = a.image.len();
        let differ = a.image.data().iter().zip(b.image.data()).filter(|(x, y)| x != y).count();
        assert!(differ * 100 >= n, "pair {pair}: {differ}/{n}");
    }
}

#[test]
fn forgeries_are_local_and_strong_enough() {
    let strengths = ForgeryStrengths::default();
    let reals = generate_real(11, 100, 32);
    for domain in Domain::FORGERIES {
        let mut inside_mean = 0.0;
        for (i, real) in reals.iter().enumerate() {
            let (fake, region) = forge_with_region(real, domain, derive_seed(5, &[i as u64]), &strengths).unwrap();
            assert_eq!(fake.domain, domain);
            assert_eq!(fake.label, benet_core::Label::Fake);
            assert!(fake.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
            let (mut inside, mut count) = (0.0f64, 0usize);
            for ch in 0..3 {
                for y in 0..32 {
                    for x in 0..32 {
                        let k = (ch * 32 + y) * 32 + x;
                        let d = (fake.image.data()[k] - real.image.data()[k]).abs();
                        if region.contains(y, x) {
                            inside += d as f64;
                            count += 1;
                        } else {
                            assert_eq!(d, 0.0, "{domain} sample {i} changed outside its region");
                        }
                    }
                }
            }
            assert_eq!(count, 3 * region.area());
            inside_mean += inside / count as f64;
        }
        inside_mean /= reals.len() as f64;
        assert!(inside_mean > 0.02, "{domain}: mean in-region difference {inside_mean}");
    }
}

#[test]
fn forging_is_deterministic_under_seed() {
    let real = &generate_real(2, 1, 32)[0];
    let s = ForgeryStrengths::default();
    for domain in Domain::FORGERIES {
        assert_eq!(forge(real, domain, 9, &s).unwrap(), forge(real, domain, 9, &s).unwrap());
        assert_ne!(forge(real, domain, 9, &s).unwrap().image, forge(real, domain, 10, &s).unwrap().image);
    }
}

#[test]
fn zero_noise_amplitude_is_identity() {
    let s = ForgeryStrengths {
        noise_amplitude: 0.0,
        ..ForgeryStrengths::default()
    };
    for real in generate_real(4, 10, 32) {
        let fake = forge(&real, Domain::NoiseC, 1, &s).unwrap();
        assert_eq!(fake.image, real.image);
        assert_eq!(fake.label, benet_core::Label::Fake);
    }
}

#[test]
fn forging_rejects_real_target_and_fake_source() {
    let real = &generate_real(5, 1, 32)[0];
    let s = ForgeryStrengths::default();
    assert!(forge(real, Domain::Real, 1, &s).is_err());
    let fake = forge(real, Domain::BlurB, 1, &s).unwrap();
    assert!(forge(&fake, Domain::SpliceA, 1, &s).is_err());
    let bad = ForgeryStrengths {
        region_min: 0.6,
        region_max: 0.4,
        ..s
    };
    assert!(bad.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forged_labels_follow_domains(seed in any::<u64>(), d in 0usize..4) {
        let real = &generate_real(seed, 1, 16)[0];
        let domain = Domain::FORGERIES[d];
        let fake = forge(real, domain, seed, &ForgeryStrengths::default()).unwrap();
        prop_assert!(fake.is_consistent());
        prop_assert_eq!(fake.image.shape(), real.image.shape());
    }
}
