//! Small statistical helpers shared by the diagnostics and the study harness.

use crate::error::{Error, Result};

/// Median; the mean of the two central values for even lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("median of an empty sequence"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Sample mean and standard error of the mean.
pub fn mean_and_standard_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One-based ranks `(l, u)` of the order statistics bracketing the median
/// with coverage at least `level`: the largest `l` with
/// `P(Bin(n, ½) ≤ l − 1) ≤ (1 − level)/2`, and `u = n + 1 − l`.
/// Falls back to `(1, n)` when the sample is too small.
pub fn median_ci_ranks(n: usize, level: f64) -> (usize, usize) {
    assert!(n >= 1);
    let tail = 0.5 * (1.0 - level);
    let mut cdf = 0.0;
    let mut l = 1;
    // cdf tracks P(B ≤ r) for r = 0, 1, ...
    for r in 0..n {
        cdf += binomial_half_pmf(n, r);
        if cdf <= tail {
            l = r + 1;
        } else {
            break;
        }
    }
    let l = l.min(n.div_ceil(2));
    (l, n + 1 - l)
}

fn binomial_half_pmf(n: usize, r: usize) -> f64 {
    // exp(ln C(n, r) − n ln 2)
    let ln_choose: f64 = (0..r)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum();
    (ln_choose - n as f64 * std::f64::consts::LN_2).exp()
}

/// Kolmogorov distribution tail `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::invalid("KS test needs at least one sample"));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q((sn + 0.12 + 0.11 / sn) * d),
    })
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS test needs non-empty samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q((ne + 0.12 + 0.11 / ne) * d),
    })
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[1.0, 9.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert!(median(&[]).is_err());
    }

    /// Exact binomial enumeration with integer arithmetic.
    fn coverage(n: usize, l: usize, u: usize) -> f64 {
        let mut c = vec![1u128; 1];
        for _ in 0..n {
            let mut next = vec![1u128; c.len() + 1];
            for k in 1..c.len() {
                next[k] = c[k - 1] + c[k];
            }
            c = next;
        }
        let total: u128 = c.iter().sum();
        let inside: u128 = c[l..u].iter().sum();
        inside as f64 / total as f64
    }

    #[test]
    fn median_ci_ranks_for_twenty() {
        assert_eq!(median_ci_ranks(20, 0.9), (6, 15));
        assert!(coverage(20, 6, 15) >= 0.9);
        // one step tighter would undercover
        assert!(coverage(20, 7, 14) < 0.9);
    }

    #[test]
    fn median_ci_ranks_are_maximal_with_coverage() {
        for n in 1..=60 {
            let (l, u) = median_ci_ranks(n, 0.9);
            assert_eq!(l + u, n + 1);
            if l > 1 {
                assert!(coverage(n, l, u) >= 0.9 - 1e-12, "n={n}");
            }
            if l + 1 < u && l < n.div_ceil(2) {
                assert!(coverage(n, l + 1, u - 1) < 0.9, "n={n}");
            }
        }
        assert_eq!(median_ci_ranks(3, 0.9), (1, 3));
    }

    #[test]
    fn kolmogorov_tail_reference_values() {
        // Q(1.358) ≈ 0.05, Q(1.628) ≈ 0.01
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn ks_detects_mismatch() {
        let u: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_one_sample(&u, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.statistic < 1e-3 && r.p_value > 0.99);
        let r = ks_one_sample(&u, |x| (x * x).clamp(0.0, 1.0)).unwrap();
        assert!(r.p_value < 1e-6);
        let r = ks_two_sample(&u, &u).unwrap();
        assert_eq!(r.statistic, 0.0);
        let shifted: Vec<f64> = u.iter().map(|x| x + 0.2).collect();
        assert!(ks_two_sample(&u, &shifted).unwrap().p_value < 1e-6);
    }

    #[test]
    fn slope() {
        let x = [1.0, 2.0, 3.0];
        assert!((ols_slope(&x, &[2.0, 4.0, 6.0]) - 2.0).abs() < 1e-15);
    }
}
