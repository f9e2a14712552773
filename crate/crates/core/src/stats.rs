//! Small sample-statistics helpers shared by the Monte Carlo estimators.

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl MeanEstimate {
    /// Mean and standard error (sample standard deviation / sqrt(count)).
    pub fn from_samples(xs: &[f64]) -> Self {
        let count = xs.len();
        if count == 0 {
            return MeanEstimate { mean: f64::NAN, se: f64::NAN, count };
        }
        let n = count as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = if count > 1 {
            let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        MeanEstimate { mean, se, count }
    }

    /// Binomial proportion `hits / count` with standard error sqrt(q(1-q)/count).
    pub fn proportion(hits: usize, count: usize) -> Self {
        if count == 0 {
            return MeanEstimate { mean: f64::NAN, se: f64::NAN, count };
        }
        let q = hits as f64 / count as f64;
        MeanEstimate {
            mean: q,
            se: (q * (1.0 - q) / count as f64).sqrt(),
            count,
        }
    }

    /// `|mean - target| <= k * se`, with a floor so that a zero-variance sample
    /// still compares equal to its exact value.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se + 1e-12
    }
}

/// Ordinary least squares fit `y = intercept + slope * x`; returns
/// `(intercept, slope, slope_se)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some((intercept, slope, slope_se))
}

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se() {
        let e = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3, se = sqrt(5/12)
        assert!((e.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 - 0.25 * x).collect();
        let (c, s, se) = linear_fit(&xs, &ys).unwrap();
        assert!((c - 1.5).abs() < 1e-12 && (s + 0.25).abs() < 1e-12 && se < 1e-12);
    }

    #[test]
    fn log_add_exp_large() {
        let v = log_add_exp(1000.0, 1000.0);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-9);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
    }
}
