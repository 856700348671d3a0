use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};

/// One-sided upper confidence limit on a Poisson mean given `observed`
/// counts (Garwood): `0.5 * chi2_inv(cl, 2n + 2)`.
pub fn poisson_upper_limit(observed: u64, cl: f64) -> f64 {
    let dof = 2.0 * observed as f64 + 2.0;
    let chi2 = ChiSquared::new(dof).expect("positive dof");
    // polish the library quantile with Newton steps on the CDF
    let mut x = chi2.inverse_cdf(cl);
    for _ in 0..4 {
        let pdf = chi2.pdf(x);
        if !(pdf > 0.0) {
            break;
        }
        x -= (chi2.cdf(x) - cl) / pdf;
    }
    0.5 * x
}

/// Kolmogorov-Smirnov statistic of `sorted` samples against `cdf`.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` for `n` samples, with the
/// Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Full width at half maximum of a (circular) histogram by linear
/// interpolation between the bins straddling half the peak on each side.
/// Returns `None` for an empty histogram or one that never falls below half
/// its peak.
pub fn fwhm_from_histogram(hist: &[u64], bin_width: f64) -> Option<f64> {
    let n = hist.len();
    let (peak, &max) = hist.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
    if max == 0 {
        return None;
    }
    let half = max as f64 / 2.0;
    let at = |i: isize| hist[i.rem_euclid(n as isize) as usize] as f64;

    let mut right = None;
    for step in 1..n as isize {
        let i = peak as isize + step;
        if at(i) < half {
            let (hi, lo) = (at(i - 1), at(i));
            right = Some((i - 1) as f64 + (hi - half) / (hi - lo));
            break;
        }
    }
    let mut left = None;
    for step in 1..n as isize {
        let i = peak as isize - step;
        if at(i) < half {
            let (hi, lo) = (at(i + 1), at(i));
            left = Some((i + 1) as f64 - (hi - half) / (hi - lo));
            break;
        }
    }
    let width = right? - left?;
    (width > 0.0 && width < n as f64).then_some(width * bin_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn garwood_reference_values() {
        // n = 0: -ln(0.05) = 2.9957
        assert_relative_eq!(poisson_upper_limit(0, 0.95), 2.995732, epsilon = 1e-5);
        // tabulated one-sided 95 % upper limits
        assert_relative_eq!(poisson_upper_limit(1, 0.95), 4.743865, epsilon = 1e-4);
        assert_relative_eq!(poisson_upper_limit(10, 0.95), 16.962, epsilon = 0.01);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&xs, |x| x);
        assert!(d <= 0.5 / n as f64 + 1e-12);
        assert!(ks_p_value(d, n) > 0.99);
    }

    #[test]
    fn ks_p_value_reference() {
        // critical value at alpha = 0.05 is ~1.358 / sqrt(n)
        let n = 10_000;
        let p = ks_p_value(1.358 / (n as f64).sqrt(), n);
        assert!((p - 0.05).abs() < 0.003, "{p}");
    }

    #[test]
    fn single_bin_fwhm_is_one_bin() {
        let mut h = vec![0u64; 16];
        h[5] = 100;
        assert_relative_eq!(fwhm_from_histogram(&h, 2.0).unwrap(), 2.0);
    }

    #[test]
    fn triangle_fwhm() {
        let h = [0, 2, 4, 6, 8, 6, 4, 2, 0];
        // half max 4 is hit exactly at bins 2 and 6
        assert_relative_eq!(fwhm_from_histogram(&h, 1.0).unwrap(), 4.0);
    }

    #[test]
    fn wraps_around_the_period() {
        let mut h = vec![0u64; 10];
        h[9] = 10;
        h[0] = 10;
        assert_relative_eq!(fwhm_from_histogram(&h, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn degenerate_histograms() {
        assert_eq!(fwhm_from_histogram(&[0, 0, 0], 1.0), None);
        assert_eq!(fwhm_from_histogram(&[5, 5, 5], 1.0), None);
        assert_eq!(fwhm_from_histogram(&[], 1.0), None);
    }
}
