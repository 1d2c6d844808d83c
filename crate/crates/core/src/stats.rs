//! Estimators with error bars and a few distribution checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Fewest batches accepted by [`batch_means`].
pub const MIN_BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub method: String,
}

impl Estimate {
    pub fn exact(value: f64, method: &str) -> Self {
        Self { value, std_error: 0.0, n_samples: 0, method: method.to_string() }
    }

    /// `|value - reference|` in units of the standard error.
    pub fn sigmas_from(&self, reference: f64) -> f64 {
        let diff = (self.value - reference).abs();
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<CompensatedSum>().value() / xs.len() as f64
}

/// Mean with a standard error from `batches` contiguous batch means. A tail
/// of fewer than `batches` samples is dropped so all batches are equal.
pub fn batch_means(samples: &[f64], batches: usize) -> Result<Estimate> {
    if batches < MIN_BATCHES {
        return Err(Error::param("batches", format!("need at least {MIN_BATCHES}, got {batches}")));
    }
    let size = samples.len() / batches;
    if size == 0 {
        return Err(Error::InsufficientSamples(format!("{} samples for {batches} batches", samples.len())));
    }
    let used = &samples[..size * batches];
    let means: Vec<f64> = used.chunks_exact(size).map(mean).collect();
    let grand = mean(&means);
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok(Estimate {
        value: grand,
        std_error: (var / batches as f64).sqrt(),
        n_samples: used.len(),
        method: format!("batch_means/{batches}"),
    })
}

pub fn median(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InsufficientSamples("median of an empty sample".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

/// Least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch { expected: xs.len(), actual: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples("a line needs two points".into()));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_std_error = if xs.len() > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (xs.len() - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit { slope, intercept, slope_std_error })
}

/// Pearson correlation; 0 when either sample is constant.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch { expected: xs.len(), actual: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples("correlation needs two pairs".into()));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = CompensatedSum::new();
    let mut sxx = CompensatedSum::new();
    let mut syy = CompensatedSum::new();
    for (x, y) in xs.iter().zip(ys) {
        sxy.add((x - mx) * (y - my));
        sxx.add((x - mx).powi(2));
        syy.add((y - my).powi(2));
    }
    let denom = (sxx.value() * syy.value()).sqrt();
    Ok(if denom > 0.0 { sxy.value() / denom } else { 0.0 })
}

/// One-sample Kolmogorov–Smirnov distance against a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples("KS distance of an empty sample".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    Ok(v.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    }))
}

/// KS distance against the unit-mean exponential law.
pub fn ks_exponential(samples: &[f64]) -> Result<f64> {
    ks_distance(samples, |x| if x <= 0.0 { 0.0 } else { -(-x).exp_m1() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1, Uniform};

    #[test]
    fn batch_means_of_iid_uniforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..64_000).map(|_| rng.random::<f64>()).collect();
        let est = batch_means(&xs, 32).unwrap();
        let ideal = (1.0 / 12.0f64 / 64_000.0).sqrt();
        assert!((est.std_error / ideal - 1.0).abs() < 0.5);
        assert!(est.sigmas_from(0.5) < 4.0);
        assert_eq!(est.n_samples, 64_000);
    }

    #[test]
    fn batch_means_sees_autocorrelation() {
        // AR(1) with rho = 0.95 inflates the variance of the mean by (1 + rho)/(1 - rho)
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = 0.0;
        let xs: Vec<f64> = (0..200_000)
            .map(|_| {
                x = 0.95 * x + rng.random::<f64>() - 0.5;
                x
            })
            .collect();
        let est = batch_means(&xs, 32).unwrap();
        let naive = (xs.iter().map(|v| v * v).sum::<f64>() / xs.len() as f64 / xs.len() as f64).sqrt();
        assert!(est.std_error > 3.0 * naive);
    }

    #[test]
    fn batch_means_needs_enough_data() {
        assert!(batch_means(&[1.0; 10], 32).is_err());
        assert!(batch_means(&[1.0; 100], 10).is_err());
    }

    #[test]
    fn median_and_fit() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
        assert!(median(&[]).is_err());
        let xs = [1.0, 2.0, 3.0, 4.0];
        let fit = linear_fit(&xs, &xs.map(|x| 0.5 - 2.0 * x)).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-14 && (fit.intercept - 0.5).abs() < 1e-14);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn correlation_bounds() {
        let xs = [1.0, 2.0, 3.0, 5.0];
        assert!((correlation(&xs, &xs).unwrap() - 1.0).abs() < 1e-14);
        assert!((correlation(&xs, &xs.map(|x| -x)).unwrap() + 1.0).abs() < 1e-14);
        assert_eq!(correlation(&xs, &[1.0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn ks_on_matching_and_mismatched_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..20_000).map(|_| Exp1.sample(&mut rng)).collect();
        assert!(ks_exponential(&xs).unwrap() < 0.015);
        let scaled: Vec<f64> = xs.iter().map(|x| 1.3 * x).collect();
        assert!(ks_exponential(&scaled).unwrap() > 0.05);
        let u = Uniform::new(0.0, 1.0).unwrap();
        let us: Vec<f64> = (0..20_000).map(|_| u.sample(&mut rng)).collect();
        assert!(ks_distance(&us, |x| x.clamp(0.0, 1.0)).unwrap() < 0.015);
    }
}
