//! Thin sampling helpers with explicit rate parameterizations, plus the
//! inverse-Gaussian generator used by the slab-scale conditional.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Gamma(shape, rate) draw. rand_distr's Gamma takes a scale, which is an
/// easy sign error; every gamma draw in this crate goes through here.
pub fn gamma_rate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0, "gamma({shape}, {rate})");
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters validated upstream")
        .sample(rng)
}

/// Exponential(rate) draw.
pub fn exp_rate<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    debug_assert!(rate > 0.0, "exp({rate})");
    let u: f64 = rng.random();
    // random() is in [0, 1); flip to (0, 1] so the log is finite.
    -(1.0 - u).ln() / rate
}

/// Inverse-gamma(shape, rate) draw via the reciprocal of a gamma variate.
pub fn inverse_gamma_rate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    1.0 / gamma_rate(shape, rate, rng)
}

/// Beta(a, b) draw.
pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    rand_distr::Beta::new(a, b)
        .expect("beta parameters validated upstream")
        .sample(rng)
}

/// One InverseGaussian(mu, lambda) draw by the chi-square transformation
/// with a uniform choice between the two roots. Always positive and finite.
///
/// The small root is evaluated as mu * t / (1 + sqrt(1 + t))^2 with
/// t = 4 lambda / (mu y), which is algebraically identical to the textbook
/// mu + mu^2 y / (2 lambda) - (mu / (2 lambda)) sqrt(4 mu lambda y + ...)
/// but free of the cancellation that corrupts it once mu >> lambda.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mu: f64, lambda: f64, rng: &mut R) -> f64 {
    debug_assert!(mu > 0.0 && lambda > 0.0, "inverse_gaussian({mu}, {lambda})");
    let z: f64 = rng.sample(StandardNormal);
    let y = z * z;
    let t = 4.0 * lambda / (mu * y);
    let s = (1.0 + t).sqrt();
    // y = 0 gives t = inf and the correct limit x = mu.
    let x = if t.is_finite() {
        mu * t / ((1.0 + s) * (1.0 + s))
    } else {
        mu
    };
    let u: f64 = rng.random();
    let draw = if u <= mu / (mu + x) { x } else { mu * mu / x };
    draw.clamp(f64::MIN_POSITIVE, f64::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_var(samples: &[f64]) -> (f64, f64) {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn inverse_gaussian_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let draws: Vec<f64> = (0..1_000_000)
            .map(|_| sample_inverse_gaussian(1.0, 1.0, &mut rng))
            .collect();
        let (mean, _) = mean_var(&draws);
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!(draws.iter().all(|&x| x > 0.0 && x.is_finite()));
    }

    #[test]
    fn inverse_gaussian_variance() {
        // Var = mu^3 / lambda = 8 / 4 = 2.
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let draws: Vec<f64> = (0..1_000_000)
            .map(|_| sample_inverse_gaussian(2.0, 4.0, &mut rng))
            .collect();
        let (mean, var) = mean_var(&draws);
        assert!((mean - 2.0).abs() < 0.01, "mean {mean}");
        assert!((var - 2.0).abs() < 0.06, "var {var}");
    }

    #[test]
    fn inverse_gaussian_deterministic_under_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..32).map(|_| sample_inverse_gaussian(1.3, 0.8, &mut a)).collect();
        let ys: Vec<f64> = (0..32).map(|_| sample_inverse_gaussian(1.3, 0.8, &mut b)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn gamma_rate_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let draws: Vec<f64> = (0..200_000).map(|_| gamma_rate(2.0, 4.0, &mut rng)).collect();
        let (mean, var) = mean_var(&draws);
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        assert!((var - 0.125).abs() < 0.01, "var {var}");
    }

    #[test]
    fn exp_rate_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let draws: Vec<f64> = (0..200_000).map(|_| exp_rate(2.0, &mut rng)).collect();
        let (mean, _) = mean_var(&draws);
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }
}
