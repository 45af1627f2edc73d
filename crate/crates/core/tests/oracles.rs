//! Library results against independent oracles: dense trapezoid grids,
//! rejection sampling and simulated AR(1) chains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use spectral_langevin::analysis::iact;
use spectral_langevin::score::ConditionalMoments;
use spectral_langevin::{
    conditional_log_partition, gaussian_posterior, kl_gaussian_1d, kl_nongaussian_1d, posterior_density_1d,
    reversion_rate, run, stationary_law, ErrorConvention, ErrorField, Integrator, ModeSpectrum, Observation,
    PotentialSpec, SamplerConfig, ScalarPotential, ScoreError, ScoreModel,
};

/// `∫ f` over `[a, b]` on a uniform grid.
fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
    h * (inner + 0.5 * (f(a) + f(b)))
}

/// Mean, variance and log-normalizer of `exp(log_p)` on a dense grid.
fn grid_moments(log_p: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> (f64, f64, f64) {
    let shift = (0..=1000).map(|i| log_p(a + (b - a) * i as f64 / 1000.0)).fold(f64::MIN, f64::max);
    let p = |x: f64| (log_p(x) - shift).exp();
    let z = trapezoid(p, a, b, n);
    let m = trapezoid(|x| x * p(x), a, b, n) / z;
    let v = trapezoid(|x| (x - m) * (x - m) * p(x), a, b, n) / z;
    (m, v, z.ln() + shift)
}

fn quartic() -> ScalarPotential {
    ScalarPotential::Quartic { c: 1.0 }
}

#[test]
fn gaussian_posterior_matches_brute_force_bayes() {
    let spec = ModeSpectrum::new(vec![2.0, 0.3], vec![0.7], 0.4).unwrap();
    let y = Observation::new(vec![1.3]);
    let post = gaussian_posterior(&spec, &y).unwrap();
    let (m, v, _) = grid_moments(|x| -0.5 * x * x / 2.0 - 0.5 * (0.7 * x - 1.3f64).powi(2) / 0.16, -15.0, 15.0, 400_000);
    assert!((post.means[0] - m).abs() < 1e-8, "{} vs {m}", post.means[0]);
    assert!((post.vars[0] - v).abs() < 1e-8, "{} vs {v}", post.vars[0]);
    // unobserved mode keeps the prior
    assert_eq!((post.means[1], post.vars[1]), (0.0, 0.3));
}

#[test]
fn quartic_posterior_moments_match_rejection_sampling() {
    let spec = ModeSpectrum::new(vec![1.5], vec![1.0], 0.8).unwrap();
    let y = Observation::new(vec![1.2]);
    let phi = PotentialSpec::uniform(quartic(), 1);
    let density = posterior_density_1d(&spec, &y, &phi, 0).unwrap();
    let (qm, qv) = density.moments().unwrap();

    // propose from the φ = 0 posterior, accept with probability e^{-φ(x)}
    let (gm, gv) = density.reference_moments();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut xs = Vec::with_capacity(2_000_000);
    while xs.len() < 2_000_000 {
        let z: f64 = StandardNormal.sample(&mut rng);
        let x = gm + gv.sqrt() * z;
        if rng.random::<f64>() < (-quartic().value(x)).exp() {
            xs.push(x);
        }
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let (se_m, se_v) = ((v / n).sqrt(), ((m4 - v * v) / n).sqrt());
    assert!((qm - m).abs() < 4.0 * se_m, "mean {qm} vs {m} ± {se_m}");
    assert!((qv - v).abs() < 4.0 * se_v, "variance {qv} vs {v} ± {se_v}");
}

#[test]
fn smoothed_potential_matches_grid_integral() {
    let (mu, lambda, tau) = (0.8, 0.5, 0.3);
    let cond = ConditionalMoments::new(mu, lambda, tau);
    for x in [-2.0, -0.4, 0.0, 0.9, 2.5] {
        let (value, deriv) = conditional_log_partition(&quartic(), mu, lambda, tau, x).unwrap();
        let oracle = |x: f64| {
            let (m, s) = (cond.mean(x), cond.var.sqrt());
            let e = trapezoid(
                |z| (-quartic().value(z) - 0.5 * ((z - m) / s).powi(2)).exp(),
                m - 12.0 * s,
                m + 12.0 * s,
                200_000,
            ) / (s * (2.0 * std::f64::consts::PI).sqrt());
            -e.ln()
        };
        let h = 1e-4;
        let fd = (oracle(x + h) - oracle(x - h)) / (2.0 * h);
        assert!((value - oracle(x)).abs() < 1e-8, "x = {x}: {value} vs {}", oracle(x));
        assert!((deriv - fd).abs() < 1e-6, "x = {x}: {deriv} vs {fd}");
    }
}

#[test]
fn gaussian_kl_matches_grid_integral() {
    let (m1, v1, m2, v2) = (0.3, 0.5, -0.2, 1.7);
    let log_n = |x: f64, m: f64, v: f64| -0.5 * (x - m).powi(2) / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln();
    let kl = trapezoid(|x| log_n(x, m1, v1).exp() * (log_n(x, m1, v1) - log_n(x, m2, v2)), -15.0, 15.0, 200_000);
    assert!((kl_gaussian_1d(m1, v1, m2, v2) - kl).abs() < 1e-10);
}

#[test]
fn nongaussian_kl_matches_grid_integral() {
    let spec = ModeSpectrum::new(vec![1.0], vec![1.0], 0.7).unwrap();
    let y = Observation::new(vec![0.6]);
    let phi = PotentialSpec::uniform(quartic(), 1);
    let err = ScoreError::new(ErrorField::Constant { value: 0.05 }, ErrorField::Constant { value: 0.03 });
    let model = ScoreModel::new(spec.clone(), vec![0.5], 0.05, err, Some(phi.clone()), ErrorConvention::PotentialAware)
        .unwrap();
    let law = stationary_law(&model, &y).unwrap().mode_density(0);
    let post = posterior_density_1d(&spec, &y, &phi, 0).unwrap();
    let kl = kl_nongaussian_1d(&law, &post).unwrap();

    let (a, b) = (-8.0, 8.0);
    let (_, _, zp) = grid_moments(|x| law.log_density(x), a, b, 20_000);
    let (_, _, zq) = grid_moments(|x| post.log_density(x), a, b, 20_000);
    let oracle = trapezoid(
        |x| {
            let lp = law.log_density(x) - zp;
            lp.exp() * (lp - post.log_density(x) + zq)
        },
        a,
        b,
        20_000,
    );
    assert!(kl > 0.0);
    assert!((kl - oracle).abs() < 1e-7 * oracle.max(1e-3), "{kl} vs {oracle}");
}

#[test]
fn euler_variance_carries_the_discretization_factor() {
    // three modes, exact score; the Euler chain's stationary variance of an
    // OU mode with rate κ is v·2/(2 - hκ)
    let spec = ModeSpectrum::new(vec![1.0, 0.25, 1.0 / 9.0], vec![1.0, 0.5], 0.5).unwrap();
    let y = Observation::new(vec![0.4, -0.3]);
    let lambda = vec![1.0; 3];
    let model = ScoreModel::gaussian(spec.clone(), lambda.clone(), 1e-3, ScoreError::zero()).unwrap();
    let law = stationary_law(&model, &y).unwrap();
    let kappa = reversion_rate(&spec, &lambda, 1e-3, &[0.0; 3]).unwrap();
    let h = 0.05;
    let mut cfg = SamplerConfig::new(h, 400_000, 4, 21);
    cfg.burn_in = 1_000;
    let moments = run(&model, &y, &cfg).unwrap().mode_moments();
    for j in 0..3 {
        let hk = h * kappa[j];
        let want = law.vars[j] * 2.0 / (2.0 - hk);
        let m = moments[j];
        assert!((m.mean - law.means[j]).abs() < 4.0 * m.mean_se, "mode {j} mean {} vs {}", m.mean, law.means[j]);
        assert!((m.var - want).abs() < 4.0 * m.var_se, "mode {j} variance {} vs {want} (hκ = {hk})", m.var);
    }

    cfg.integrator = Integrator::ExactOu;
    cfg.step_size = 0.5;
    let moments = run(&model, &y, &cfg).unwrap().mode_moments();
    for j in 0..3 {
        let m = moments[j];
        assert!((m.var - law.vars[j]).abs() < 4.0 * m.var_se, "exact mode {j}: {} vs {}", m.var, law.vars[j]);
    }
}

#[test]
fn iact_of_ar1_chains() {
    let a: f64 = 0.8;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let chains: Vec<Vec<f64>> = (0..8)
        .map(|_| {
            let mut x: f64 = StandardNormal.sample(&mut rng);
            (0..50_000)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x = a * x + (1.0 - a * a).sqrt() * z;
                    x
                })
                .collect()
        })
        .collect();
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    let t = iact(&refs).unwrap();
    let want = (1.0 + a) / (1.0 - a);
    assert!((t / want - 1.0).abs() < 0.1, "IACT {t} vs {want}");
}

#[test]
fn small_tau_drift_rate_is_inverse_prior_variance() {
    // λ = 1 and μ_j = j⁻²: unobserved modes revert at rate ≈ j² as τ → 0
    let spec = ModeSpectrum::new((1..=60).map(|j| (j as f64).powi(-2)).collect(), vec![], 1.0).unwrap();
    let kappa = reversion_rate(&spec, &[1.0; 60], 1e-10, &[0.0; 60]).unwrap();
    for (j, k) in kappa.iter().enumerate() {
        let want = ((j + 1) as f64).powi(2);
        assert!((k / want - 1.0).abs() < 1e-6, "mode {j}: {k} vs {want}");
    }
}
