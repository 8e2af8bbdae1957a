//! Statistical utilities for the correctness harness: Kolmogorov–Smirnov
//! comparisons, quadrature oracles for one-dimensional densities, and
//! autocorrelation-aware effective sample sizes.

/// Two-sided KS statistic of sorted samples against a reference CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Asymptotic KS critical value at the given significance level.
pub fn ks_critical_value(n: usize, level: f64) -> f64 {
    (-(level / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

const QUAD_GRID: usize = 200_000;

/// Mean of the density `exp(log_pdf)` (unnormalized) on [lo, hi] by
/// trapezoid quadrature.
pub fn quadrature_mean<F: Fn(f64) -> f64>(log_pdf: F, lo: f64, hi: f64) -> f64 {
    let mut norm = 0.0;
    let mut first = 0.0;
    let h = (hi - lo) / QUAD_GRID as f64;
    let mut max_lp = f64::NEG_INFINITY;
    let lps: Vec<f64> = (0..=QUAD_GRID)
        .map(|i| {
            let lp = log_pdf(lo + i as f64 * h);
            if lp > max_lp {
                max_lp = lp;
            }
            lp
        })
        .collect();
    for (i, lp) in lps.iter().enumerate() {
        let w = if i == 0 || i == QUAD_GRID { 0.5 } else { 1.0 };
        let x = lo + i as f64 * h;
        let dens = (lp - max_lp).exp() * w;
        norm += dens;
        first += dens * x;
    }
    first / norm
}

/// Numeric CDF of an unnormalized log density on a finite bracket.
pub struct NumericCdf {
    lo: f64,
    step: f64,
    cum: Vec<f64>,
}

impl NumericCdf {
    pub fn build<F: Fn(f64) -> f64>(log_pdf: F, lo: f64, hi: f64) -> Self {
        let step = (hi - lo) / QUAD_GRID as f64;
        let mut max_lp = f64::NEG_INFINITY;
        let lps: Vec<f64> = (0..=QUAD_GRID)
            .map(|i| {
                let lp = log_pdf(lo + i as f64 * step);
                if lp > max_lp {
                    max_lp = lp;
                }
                lp
            })
            .collect();
        let mut cum = Vec::with_capacity(QUAD_GRID + 1);
        cum.push(0.0);
        for i in 1..=QUAD_GRID {
            let a = (lps[i - 1] - max_lp).exp();
            let b = (lps[i] - max_lp).exp();
            cum.push(cum[i - 1] + 0.5 * (a + b));
        }
        let total = *cum.last().unwrap();
        for v in &mut cum {
            *v /= total;
        }
        NumericCdf { lo, step, cum }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.step;
        if pos <= 0.0 {
            return 0.0;
        }
        let idx = pos.floor() as usize;
        if idx >= self.cum.len() - 1 {
            return 1.0;
        }
        let frac = pos - idx as f64;
        self.cum[idx] + frac * (self.cum[idx + 1] - self.cum[idx])
    }
}

pub fn mean_and_var(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

/// Effective sample size by the initial-positive-sequence estimator:
/// pairwise autocorrelation sums are accumulated until a pair goes
/// non-positive.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return n as f64;
    }
    let (mean, var) = mean_and_var(series);
    if var <= 0.0 {
        return n as f64;
    }
    let autocorr = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..n - lag {
            acc += (series[i] - mean) * (series[i + lag] - mean);
        }
        acc / ((n - lag) as f64 * var)
    };
    let mut sum_rho = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = autocorr(lag) + autocorr(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum_rho += pair;
        lag += 2;
    }
    (n as f64 / (1.0 + 2.0 * sum_rho)).min(n as f64).max(1.0)
}

/// Standardized difference of means with autocorrelation-corrected
/// standard errors on both sides.
pub fn geweke_z(forward: &[f64], gibbs: &[f64]) -> f64 {
    let (mf, vf) = mean_and_var(forward);
    let (mg, vg) = mean_and_var(gibbs);
    let ef = effective_sample_size(forward);
    let eg = effective_sample_size(gibbs);
    (mf - mg) / (vf / ef + vg / eg).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use approx::assert_relative_eq;

    #[test]
    fn ks_accepts_true_distribution_rejects_wrong_one() {
        let mut rng = RandomStream::new(7);
        let mut samples: Vec<f64> = (0..5000).map(|_| rng.uniform()).collect();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(ks_statistic(&samples, |x| x) < ks_critical_value(5000, 0.01));
        assert!(ks_statistic(&samples, |x| x * x) > ks_critical_value(5000, 0.01));
    }

    #[test]
    fn quadrature_recovers_exponential_moments() {
        // Exp(3): mean 1/3
        let mean = quadrature_mean(|x| -3.0 * x, 0.0, 30.0);
        assert_relative_eq!(mean, 1.0 / 3.0, max_relative = 1e-4);

        let cdf = NumericCdf::build(|x| -3.0 * x, 0.0, 30.0);
        assert_relative_eq!(cdf.eval(1.0), 1.0 - (-3.0_f64).exp(), epsilon = 1e-4);
    }

    #[test]
    fn ess_near_n_for_iid_and_small_for_correlated() {
        let mut rng = RandomStream::new(8);
        let iid: Vec<f64> = (0..4000).map(|_| rng.standard_normal()).collect();
        assert!(effective_sample_size(&iid) > 2500.0);

        let mut ar = vec![0.0; 4000];
        for i in 1..4000 {
            ar[i] = 0.95 * ar[i - 1] + rng.standard_normal();
        }
        assert!(effective_sample_size(&ar) < 500.0);
    }
}
