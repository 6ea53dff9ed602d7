//! Log-domain accumulation and small statistics helpers.

/// `log Σ exp(values)` with max-shifted summation.
///
/// Empty input and all-`-inf` input give `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// `log(exp(a) + exp(b))`
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log Σ_E count_E · exp(−β E)` from an integer energy histogram.
pub fn log_partition_from_histogram<I>(hist: I, beta: f64) -> f64
where
    I: IntoIterator<Item = (i64, u64)>,
{
    let terms: Vec<f64> = hist
        .into_iter()
        .filter(|&(_, c)| c > 0)
        .map(|(e, c)| (c as f64).ln() - beta * e as f64)
        .collect();
    log_sum_exp(&terms)
}

/// Mean and batch-means standard error of a (possibly autocorrelated) series.
///
/// The series is cut into `batches` contiguous blocks; the standard error is the
/// standard deviation of block means divided by `√batches`. With fewer samples
/// than batches every sample is its own block.
pub fn batch_means(samples: &[f64], batches: usize) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let b = batches.max(2).min(n);
    if b < 2 {
        return (mean, 0.0);
    }
    let size = n / b;
    let means: Vec<f64> = (0..b)
        .map(|k| {
            let chunk = &samples[k * size..(k + 1) * size];
            chunk.iter().sum::<f64>() / size as f64
        })
        .collect();
    let bm = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// Effective sample size `(Σw)² / Σw²` of a set of nonnegative weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Least-squares slope of `y` against `x`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Format a float with 17 significant digits, independent of locale.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_basics() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        // no overflow at large magnitudes
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_add_exp(-1000.0, -1000.0) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
    }

    #[test]
    fn histogram_partition() {
        let lz = log_partition_from_histogram([(0, 1), (4, 2)], 1.0);
        assert!((lz - (1.0 + 2.0 * (-4f64).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn batch_means_of_constant_series() {
        let (m, se) = batch_means(&[2.0; 100], 10);
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn ess_bounds() {
        assert_eq!(effective_sample_size(&[1.0; 50]), 50.0);
        assert!((effective_sample_size(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn float_format_round_trips() {
        let v = 0.1 + 0.2;
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }
}
