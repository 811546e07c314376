//! Markov-chain convergence diagnostics and error propagation.

use crate::error::{Error, Result};

/// Variance floor below which chains are treated as constant.
const DEGENERATE_VARIANCE: f64 = 1e-14;

/// Equal-length data series stacked for between/within-chain statistics.
#[derive(Debug, Clone)]
pub struct ChainMatrix {
    series: Vec<Vec<f64>>,
}

impl ChainMatrix {
    pub fn new(series: Vec<Vec<f64>>) -> Result<Self> {
        if series.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 series, got {}",
                series.len()
            )));
        }
        let len = series[0].len();
        if len < 2 {
            return Err(Error::InsufficientData(
                "series shorter than 2 steps".into(),
            ));
        }
        if series.iter().any(|s| s.len() != len) {
            return Err(Error::InvalidPartition("series lengths differ".into()));
        }
        Ok(Self { series })
    }

    pub fn n_series(&self) -> usize {
        self.series.len()
    }

    pub fn n_steps(&self) -> usize {
        self.series[0].len()
    }

    pub fn series(&self) -> &[Vec<f64>] {
        &self.series
    }
}

/// Potential scale reduction factor.
#[derive(Debug, Clone, Copy)]
pub struct GelmanRubin {
    pub r_hat: f64,
    /// All chains constant: within-chain variance under the floor, treated
    /// as trivially converged.
    pub degenerate: bool,
}

impl GelmanRubin {
    pub fn converged(&self) -> bool {
        self.degenerate || self.r_hat <= 1.1
    }
}

/// R_hat = sqrt(V_hat / W) with V_hat = ((n-1)/n) W + B/n, where W and B are
/// the within- and between-chain variances.
pub fn gelman_rubin(chains: &ChainMatrix) -> GelmanRubin {
    let m = chains.n_series() as f64;
    let n = chains.n_steps() as f64;
    let means: Vec<f64> = chains
        .series()
        .iter()
        .map(|s| s.iter().sum::<f64>() / n)
        .collect();
    let grand = means.iter().sum::<f64>() / m;

    let within = chains
        .series()
        .iter()
        .zip(&means)
        .map(|(s, mean)| s.iter().map(|x| (x - mean).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (n * (m - 1.0));
    let between = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();

    if within < DEGENERATE_VARIANCE {
        return GelmanRubin {
            r_hat: 1.0,
            degenerate: true,
        };
    }
    let v_hat = (n - 1.0) / n * within + between / n;
    GelmanRubin {
        r_hat: (v_hat / within).sqrt(),
        degenerate: false,
    }
}

/// Smallest tested burn-in window after which two chains started from
/// qualitatively different states become statistically indistinguishable.
///
/// For each window size w in `schedule`, steps w..2w of both series form the
/// retained ensemble; the first window with R_hat <= 1.1 wins.
pub fn find_relaxation(series_a: &[f64], series_b: &[f64], schedule: &[usize]) -> Result<usize> {
    let mut last_report = (0usize, f64::NAN);
    for &window in schedule {
        if window < 2 || 2 * window > series_a.len() || 2 * window > series_b.len() {
            continue;
        }
        let a = series_a[window..2 * window].to_vec();
        let b = series_b[window..2 * window].to_vec();
        let stat = gelman_rubin(&ChainMatrix::new(vec![a, b])?);
        last_report = (window, stat.r_hat);
        if stat.converged() {
            return Ok(window);
        }
    }
    Err(Error::NonConverged(format!(
        "no window in schedule passed R_hat <= 1.1 (last: window {} with R_hat {:.4})",
        last_report.0, last_report.1
    )))
}

/// Jackknife mean and standard error with bin size `s_bin`.
///
/// The series is trimmed to a multiple of the bin size; each leave-one-bin-out
/// mean contributes one pseudo-observation and the standard error is
/// sqrt((M_b - 1)(<f^2> - <f>^2)).
pub fn jackknife(series: &[f64], s_bin: usize) -> Result<(f64, f64)> {
    if s_bin == 0 {
        return Err(Error::InvalidPartition("bin size must be positive".into()));
    }
    let n_bins = series.len() / s_bin;
    if n_bins < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 bins, got {} (len {}, s_bin {s_bin})",
            n_bins,
            series.len()
        )));
    }
    let used = n_bins * s_bin;
    let total: f64 = series[..used].iter().sum();
    let mut leave_out = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let bin_sum: f64 = series[b * s_bin..(b + 1) * s_bin].iter().sum();
        leave_out.push((total - bin_sum) / (used - s_bin) as f64);
    }
    let mean = leave_out.iter().sum::<f64>() / n_bins as f64;
    let second = leave_out.iter().map(|x| x * x).sum::<f64>() / n_bins as f64;
    let stderr = ((n_bins as f64 - 1.0) * (second - mean * mean).max(0.0)).sqrt();
    Ok((mean, stderr))
}

/// Integrated autocorrelation time from jackknife-stderr saturation.
#[derive(Debug, Clone, Copy)]
pub struct TauEstimate {
    pub tau: f64,
    /// False when the stderr never stabilized before s_bin = len/4; `tau` is
    /// then a lower bound.
    pub saturated: bool,
}

/// Double the jackknife bin size until the standard error stabilizes
/// (successive relative change < 10% over two doublings); the integrated
/// autocorrelation time is s_bin/2 at the first stable size.
pub fn autocorrelation_time(series: &[f64]) -> Result<TauEstimate> {
    if series.len() < 64 {
        return Err(Error::InsufficientData(format!(
            "need at least 64 samples, got {}",
            series.len()
        )));
    }
    let max_bin = series.len() / 4;
    let mut sizes = Vec::new();
    let mut errors = Vec::new();
    let mut s = 1usize;
    while s <= max_bin {
        let (_, stderr) = jackknife(series, s)?;
        sizes.push(s);
        errors.push(stderr);
        s *= 2;
    }
    for idx in 0..errors.len().saturating_sub(2) {
        let e0 = errors[idx];
        let e1 = errors[idx + 1];
        let e2 = errors[idx + 2];
        if e0 <= 0.0 {
            // constant series: no correlation structure at all
            return Ok(TauEstimate {
                tau: 0.5,
                saturated: true,
            });
        }
        let c1 = ((e1 - e0) / e0).abs();
        let c2 = ((e2 - e1) / e1.max(1e-300)).abs();
        if c1 < 0.10 && c2 < 0.10 {
            return Ok(TauEstimate {
                tau: sizes[idx] as f64 / 2.0,
                saturated: true,
            });
        }
    }
    Ok(TauEstimate {
        tau: *sizes.last().unwrap() as f64 / 2.0,
        saturated: false,
    })
}

/// Median of `n_block` equal block means (robust mean estimator).
pub fn median_of_means(samples: &[f64], n_block: usize) -> Result<f64> {
    if n_block == 0 || n_block > samples.len() {
        return Err(Error::InvalidPartition(format!(
            "n_block {} incompatible with {} samples",
            n_block,
            samples.len()
        )));
    }
    let size = samples.len() / n_block;
    if size == 0 {
        return Err(Error::InvalidPartition("blocks would be empty".into()));
    }
    let mut means: Vec<f64> = (0..n_block)
        .map(|b| samples[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = n_block / 2;
    Ok(if n_block % 2 == 1 {
        means[mid]
    } else {
        0.5 * (means[mid - 1] + means[mid])
    })
}

/// First-order standard error of a ratio r = num/den.
#[derive(Debug, Clone, Copy)]
pub struct RatioError {
    pub stderr: f64,
    /// Denominator within 3 sigma of zero: the ratio is unreliable.
    pub indeterminate: bool,
}

/// |r| sqrt((s_n/n)^2 + (s_d/d)^2); numerator/denominator covariance is
/// ignored.
pub fn ratio_error(num: (f64, f64), den: (f64, f64)) -> Result<RatioError> {
    let (n_mean, n_err) = num;
    let (d_mean, d_err) = den;
    if d_mean == 0.0 {
        return Err(Error::IndeterminateEstimate(
            "denominator mean is zero".into(),
        ));
    }
    let ratio = n_mean / d_mean;
    let rel_n = n_err / n_mean;
    let rel = if n_mean == 0.0 {
        // pure numerator noise around zero
        (n_err / d_mean).abs()
    } else {
        (ratio * (rel_n.powi(2) + (d_err / d_mean).powi(2)).sqrt()).abs()
    };
    Ok(RatioError {
        stderr: rel,
        indeterminate: d_mean.abs() < 3.0 * d_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn normal(rng: &mut impl Rng) -> f64 {
        // Box-Muller
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn gelman_rubin_identical_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let chain: Vec<f64> = (0..500).map(|_| normal(&mut rng)).collect();
        let stat = gelman_rubin(&ChainMatrix::new(vec![chain.clone(), chain]).unwrap());
        let n = 500.0f64;
        assert!((stat.r_hat - ((n - 1.0) / n).sqrt()).abs() < 1e-12);
        assert!(stat.converged());
    }

    #[test]
    fn gelman_rubin_iid_chains_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..10_000).map(|_| normal(&mut rng)).collect();
        let b: Vec<f64> = (0..10_000).map(|_| normal(&mut rng)).collect();
        let stat = gelman_rubin(&ChainMatrix::new(vec![a, b]).unwrap());
        assert!(
            stat.r_hat >= 0.99 && stat.r_hat <= 1.05,
            "R_hat = {}",
            stat.r_hat
        );
    }

    #[test]
    fn gelman_rubin_flags_separated_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..2000).map(|_| normal(&mut rng)).collect();
        let b: Vec<f64> = (0..2000).map(|_| normal(&mut rng) + 5.0).collect();
        let stat = gelman_rubin(&ChainMatrix::new(vec![a, b]).unwrap());
        assert!(stat.r_hat > 1.1);
        assert!(!stat.converged());
    }

    #[test]
    fn gelman_rubin_degenerate_chains() {
        let stat = gelman_rubin(&ChainMatrix::new(vec![vec![2.0; 100], vec![2.0; 100]]).unwrap());
        assert!(stat.degenerate);
        assert!(stat.converged());
    }

    #[test]
    fn relaxation_iid_passes_first_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..4000).map(|_| normal(&mut rng)).collect();
        let b: Vec<f64> = (0..4000).map(|_| normal(&mut rng)).collect();
        let schedule = [5, 10, 20, 40, 80];
        let n = find_relaxation(&a, &b, &schedule).unwrap();
        assert_eq!(n, 5);
    }

    #[test]
    fn relaxation_detects_slow_drift() {
        // Chain b starts far away and relaxes over ~100 steps.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..4000).map(|_| normal(&mut rng)).collect();
        let b: Vec<f64> = (0..4000)
            .map(|i| normal(&mut rng) + 30.0 * (-(i as f64) / 100.0).exp())
            .collect();
        let schedule = [5, 10, 20, 40, 80, 160, 320, 640];
        let n = find_relaxation(&a, &b, &schedule).unwrap();
        assert!(n > 5, "drift should not pass immediately (got {n})");
    }

    #[test]
    fn relaxation_errors_when_never_converged() {
        let a = vec![0.0; 2000];
        let b = vec![5.0; 2000];
        // constant-but-different chains: between-variance dominates, and the
        // within variance of chain means is zero -> degenerate... use noisy
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a: Vec<f64> = a.iter().map(|_| normal(&mut rng) * 0.1).collect();
        let b: Vec<f64> = b.iter().map(|x| x + normal(&mut rng) * 0.1).collect();
        let schedule = [5, 10, 20, 40];
        assert!(matches!(
            find_relaxation(&a, &b, &schedule),
            Err(Error::NonConverged(_))
        ));
    }

    #[test]
    fn jackknife_constant_series() {
        let (mean, stderr) = jackknife(&[3.0; 64], 4).unwrap();
        assert!((mean - 3.0).abs() < 1e-14);
        assert!(stderr.abs() < 1e-14);
    }

    #[test]
    fn jackknife_mean_equals_plain_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..96).map(|_| rng.gen::<f64>()).collect();
        let plain = xs.iter().sum::<f64>() / xs.len() as f64;
        for s_bin in [1usize, 2, 4, 8, 16, 48] {
            let (mean, _) = jackknife(&xs, s_bin).unwrap();
            assert!((mean - plain).abs() < 1e-12, "s_bin={s_bin}");
        }
    }

    #[test]
    fn jackknife_two_bin_hand_computation() {
        let xs = [1.0, 2.0, 3.0, 7.0];
        let (mean, stderr) = jackknife(&xs, 2).unwrap();
        // leave-out means: drop bin {1,2} -> 5.0; drop bin {3,7} -> 1.5
        assert!((mean - 3.25).abs() < 1e-14);
        // sqrt((2-1) * var over {5.0, 1.5}) with population variance
        let expect = ((5.0f64 - 3.25).powi(2) + (1.5f64 - 3.25).powi(2)) / 2.0;
        assert!((stderr - expect.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn jackknife_iid_stderr_stable_in_bin_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..16384).map(|_| normal(&mut rng)).collect();
        let (_, base) = jackknife(&xs, 1).unwrap();
        for s_bin in [2usize, 8, 64, 256] {
            let (_, stderr) = jackknife(&xs, s_bin).unwrap();
            assert!(
                (stderr / base - 1.0).abs() < 0.25,
                "s_bin {s_bin}: {stderr} vs {base}"
            );
        }
    }

    #[test]
    fn jackknife_needs_two_bins() {
        assert!(jackknife(&[1.0, 2.0, 3.0], 3).is_err());
    }

    #[test]
    fn tau_iid_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..8192).map(|_| normal(&mut rng)).collect();
        let est = autocorrelation_time(&xs).unwrap();
        assert!(est.saturated);
        assert!((est.tau - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tau_ar1_within_factor_two() {
        let rho: f64 = 0.8;
        let expect = (1.0 + rho) / (2.0 * (1.0 - rho)); // 4.5
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut xs = Vec::with_capacity(1 << 17);
        let mut x = 0.0;
        for _ in 0..(1 << 17) {
            x = rho * x + (1.0 - rho * rho).sqrt() * normal(&mut rng);
            xs.push(x);
        }
        let est = autocorrelation_time(&xs).unwrap();
        assert!(
            est.tau >= expect / 2.0 && est.tau <= expect * 2.0,
            "tau {} vs AR(1) value {expect}",
            est.tau
        );
    }

    #[test]
    fn tau_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut xs = Vec::with_capacity(8192);
        let mut x = 0.0;
        for _ in 0..8192 {
            x = 0.6 * x + normal(&mut rng);
            xs.push(x);
        }
        let scaled: Vec<f64> = xs.iter().map(|v| 7.0 * v - 3.0).collect();
        let t1 = autocorrelation_time(&xs).unwrap();
        let t2 = autocorrelation_time(&scaled).unwrap();
        assert_eq!(t1.tau, t2.tau);
        assert_eq!(t1.saturated, t2.saturated);
    }

    #[test]
    fn mom_single_block_is_plain_mean() {
        let xs = [1.0, 2.0, 4.0, 9.0];
        let mom = median_of_means(&xs, 1).unwrap();
        assert!((mom - 4.0).abs() < 1e-14);
    }

    #[test]
    fn mom_equal_blocks_equal_mean() {
        let xs = [2.0; 40];
        assert_eq!(median_of_means(&xs, 8).unwrap(), 2.0);
    }

    #[test]
    fn mom_beats_plain_mean_under_contamination() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let trials = 1000;
        let mut wins = 0usize;
        for _ in 0..trials {
            let xs: Vec<f64> = (0..400)
                .map(|_| {
                    if rng.gen::<f64>() < 0.01 {
                        // symmetric heavy-tailed outliers
                        let magnitude = 200.0 + 200.0 * rng.gen::<f64>();
                        if rng.gen::<bool>() {
                            magnitude
                        } else {
                            -magnitude
                        }
                    } else {
                        normal(&mut rng)
                    }
                })
                .collect();
            let plain = xs.iter().sum::<f64>() / xs.len() as f64;
            let mom = median_of_means(&xs, 20).unwrap();
            if mom.abs() < plain.abs() {
                wins += 1;
            }
        }
        assert!(
            wins >= 950,
            "median-of-means beat the mean in only {wins}/{trials} trials"
        );
    }

    #[test]
    fn mom_deviation_bound_respected() {
        // Prob(|MoM - mu| > eps) <= exp(-2 n_block (1/2 - sigma^2/(n_size eps^2))^2)
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n_block = 10;
        let n_size = 50;
        let eps = 0.6;
        let sigma_sq = 1.0;
        let bound =
            (-2.0 * n_block as f64 * (0.5 - sigma_sq / (n_size as f64 * eps * eps)).powi(2)).exp();
        let trials = 4000;
        let mut exceed = 0usize;
        for _ in 0..trials {
            let xs: Vec<f64> = (0..n_block * n_size).map(|_| normal(&mut rng)).collect();
            if median_of_means(&xs, n_block).unwrap().abs() > eps {
                exceed += 1;
            }
        }
        let rate = exceed as f64 / trials as f64;
        assert!(rate <= bound, "empirical {rate} above bound {bound}");
    }

    #[test]
    fn mom_rejects_bad_partition() {
        assert!(median_of_means(&[1.0, 2.0], 3).is_err());
        assert!(median_of_means(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn ratio_error_zero_denominator_noise() {
        let r = ratio_error((2.0, 0.1), (4.0, 0.0)).unwrap();
        assert!((r.stderr - 0.1 / 4.0 * 0.5 / 0.5).abs() < 1e-12);
        assert!(!r.indeterminate);
    }

    #[test]
    fn ratio_error_pinned_example() {
        let r = ratio_error((2.0, 0.1), (4.0, 0.2)).unwrap();
        assert!((r.stderr - 0.5 * (0.0025f64 + 0.0025).sqrt()).abs() < 1e-12);
        assert!((r.stderr - 0.035355339059327376).abs() < 1e-12);
    }

    #[test]
    fn ratio_error_scale_invariant() {
        let a = ratio_error((2.0, 0.1), (4.0, 0.2)).unwrap();
        let b = ratio_error((20.0, 1.0), (40.0, 2.0)).unwrap();
        assert!((a.stderr - b.stderr).abs() < 1e-12);
    }

    #[test]
    fn ratio_error_indeterminate_flag() {
        let r = ratio_error((1.0, 0.1), (0.5, 0.4)).unwrap();
        assert!(r.indeterminate);
    }
}
