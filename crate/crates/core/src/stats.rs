//! Summary statistics used by the Monte Carlo driver.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Linearly interpolated quantile (Hyndman-Fan type 7).
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Column means of the rows.
pub fn mean_vector(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows.first().map_or(0, Vec::len);
    (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect()
}

/// Unbiased sample covariance of the rows.
pub fn covariance(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.first().map_or(0, Vec::len);
    let n = rows.len();
    let m = mean_vector(rows);
    let mut c = DMatrix::zeros(d, d);
    if n < 2 {
        c.fill(f64::NAN);
        return c;
    }
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                c[(i, j)] += (r[i] - m[i]) * (r[j] - m[j]);
            }
        }
    }
    c / (n - 1) as f64
}

/// `||a - b||_F / ||b||_F`.
pub fn frobenius_rel_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// One-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// `P(K > lambda)` for the Kolmogorov distribution.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS test of `xs` against `N(mu, sd^2)`; the p-value uses the asymptotic
/// distribution with Stephens' small-sample correction.
pub fn ks_normal(xs: &[f64], mu: f64, sd: f64) -> KsTest {
    let n = xs.len();
    if n == 0 || !(sd > 0.0) {
        return KsTest { statistic: f64::NAN, p_value: f64::NAN };
    }
    let dist = Normal::new(mu, sd).expect("sd checked positive");
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    let sq = nf.sqrt();
    KsTest { statistic: d, p_value: kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d) }
}

/// Percentile bootstrap confidence interval of `stat`.
pub fn bootstrap_ci<F>(xs: &[f64], stat: F, resamples: usize, level: f64, seed: u64) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    if xs.is_empty() || resamples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; xs.len()];
    let values: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = xs[rng.random_range(0..xs.len())];
            }
            stat(&buf)
        })
        .collect();
    let alpha = (1.0 - level) / 2.0;
    (quantile(&values, alpha), quantile(&values, 1.0 - alpha))
}

/// Estimate with confidence bounds.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

/// Trend check along a ladder: at most `allowed` decreases, each of which
/// must stay inside the previous point's interval.
pub fn nondecreasing_within_ci(points: &[Interval], allowed: usize) -> bool {
    let mut inversions = 0;
    for w in points.windows(2) {
        if w[1].estimate < w[0].estimate {
            inversions += 1;
            if w[1].estimate < w[0].low {
                return false;
            }
        }
    }
    inversions <= allowed
}
