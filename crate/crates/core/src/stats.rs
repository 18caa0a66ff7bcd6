//! Sample summaries used when aggregating replications.

use crate::math::sqrt;

/// Streaming mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        sqrt(self.variance())
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            sqrt(self.variance() / self.n as f64)
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// `(mean, standard error)` of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let s: RunningStats = xs.iter().copied().collect();
    (s.mean(), s.std_err())
}

/// `(mean, standard error)` of the paired differences `a[i] − b[i]`.
pub fn paired_diff(a: &[f64], b: &[f64]) -> (f64, f64) {
    let s: RunningStats = a.iter().zip(b).map(|(x, y)| x - y).collect();
    (s.mean(), s.std_err())
}

/// Binomial standard deviation of an empirical frequency at level `p`.
pub fn binomial_sd(p: f64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    sqrt((p * (1.0 - p)).max(0.0) / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0];
        let (m, se) = mean_se(&xs);
        assert_abs_diff_eq!(m, 4.0, epsilon = 1e-15);
        // variance 7.5
        assert_abs_diff_eq!(se, sqrt(7.5 / 5.0), epsilon = 1e-14);
        assert_eq!(mean_se(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn paired_differences() {
        let (m, se) = paired_diff(&[3.0, 5.0], &[1.0, 3.0]);
        assert_eq!((m, se), (2.0, 0.0));
    }

    #[test]
    fn binomial() {
        assert_abs_diff_eq!(
            binomial_sd(0.81, 400),
            sqrt(0.81 * 0.19 / 400.0),
            epsilon = 1e-15
        );
    }
}
