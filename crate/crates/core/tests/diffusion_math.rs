use gdmopt::diffusion::{cfg_epsilon, forward_noising, reverse_update, NoiseSchedule, SampleConfig, VarianceMode};
use gdmopt::neural::{DenoiserArch, DenoiserNet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn cosine_target(t: usize, steps: usize) -> f64 {
    let f = |u: f64| (((u / steps as f64 + 0.008) / 1.008) * std::f64::consts::PI / 2.0).cos().powi(2);
    f(t as f64) / f(0.0)
}

proptest! {
    #[test]
    fn schedule_invariants(steps in 2usize..400) {
        let s = NoiseSchedule::cosine(steps).unwrap();
        prop_assert_eq!(s.alpha_bar(0), 1.0);
        let mut prod = 1.0;
        for t in 1..=steps {
            let a = s.alpha(t);
            prop_assert!((0.001..=0.9999).contains(&a));
            prod *= a;
            prop_assert!((s.alpha_bar(t) - prod).abs() <= 1e-15);
            prop_assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            prop_assert!(s.alpha_bar(t) > 0.0);
        }
    }

    #[test]
    fn guidance_is_affine_in_omega(seed in any::<u64>(), omega in 0.0f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DenoiserNet::init(&DenoiserArch::new(2, 3), &mut rng);
        let y: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
        let c: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let cond = net.forward(&y, 4, Some(&c)).unwrap();
        let uncond = net.forward(&y, 4, None).unwrap();
        let guided = cfg_epsilon(&net, &y, 4, &c, omega).unwrap();
        for j in 0..2 {
            let expect = (1.0 + omega) * cond[j] - omega * uncond[j];
            prop_assert!((guided[j] - expect).abs() <= 1e-12 * (1.0 + omega) * (cond[j].abs() + uncond[j].abs()).max(1.0));
        }
        prop_assert_eq!(cfg_epsilon(&net, &y, 4, &c, 0.0).unwrap(), cond);
    }
}

#[test]
fn schedule_follows_the_cosine_curve_where_unclipped() {
    for steps in [5, 20, 100] {
        let s = NoiseSchedule::cosine(steps).unwrap();
        for t in 1..steps {
            assert!((s.alpha_bar(t) - cosine_target(t, steps)).abs() < 1e-12, "T={steps} t={t}");
        }
        assert!(s.alpha_bar(steps) < 1e-3);
    }
}

#[test]
fn forward_noising_moments() {
    let s = NoiseSchedule::cosine(20).unwrap();
    let y0 = [0.7, -1.2];
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in [1, 7, 20] {
        let draws: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let eps: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
                forward_noising(&y0, t, &eps, &s)
            })
            .collect();
        for j in 0..2 {
            let mean = draws.iter().map(|d| d[j]).sum::<f64>() / n as f64;
            let var = draws.iter().map(|d| (d[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let (mu, sigma2) = (s.alpha_bar(t).sqrt() * y0[j], 1.0 - s.alpha_bar(t));
            assert!((mean - mu).abs() <= 3.0 * (sigma2 / n as f64).sqrt(), "t={t} mean {mean} vs {mu}");
            // SE of the sample variance of a normal: σ²·√(2/(n−1)).
            assert!((var - sigma2).abs() <= 3.0 * sigma2 * (2.0 / (n - 1) as f64).sqrt(), "t={t} var {var} vs {sigma2}");
        }
    }
}

#[test]
fn exact_noise_estimate_walks_back_to_the_clean_state() {
    for steps in [5, 20, 100] {
        for mode in [VarianceMode::DdpmPosterior, VarianceMode::PaperEq13] {
            let s = NoiseSchedule::cosine(steps).unwrap();
            let cfg = SampleConfig {
                normalize_first_k: 0,
                variance_mode: mode,
                ..SampleConfig::default()
            };
            let y0 = [0.4, -0.1, 0.9, -0.6];
            let mut rng = ChaCha8Rng::seed_from_u64(steps as u64);
            let eps0: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let mut y = forward_noising(&y0, steps, &eps0, &s);
            for t in (1..=steps).rev() {
                let eps: Vec<f64> = y
                    .iter()
                    .zip(&y0)
                    .map(|(v, c)| (v - s.alpha_bar(t).sqrt() * c) / (1.0 - s.alpha_bar(t)).sqrt())
                    .collect();
                y = reverse_update(&y, t, &eps, &[0.0; 4], &s, &cfg);
            }
            for (a, b) in y.iter().zip(&y0) {
                assert!((a - b).abs() < 1e-9, "T={steps} {mode:?}: {y:?}");
            }
        }
    }
}
