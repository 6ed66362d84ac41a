//! Connected two-point count correlators estimated across independent runs.

use serde::{Deserialize, Serialize};

/// `G_c(i, j) = ⟨n_i n_j⟩ − ⟨n_i⟩⟨n_j⟩` over bins, with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    /// Bin centres (log-size or size, depending on the producer).
    pub centers: Vec<f64>,
    /// Mean count per bin.
    pub mean: Vec<f64>,
    pub gc: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub runs: usize,
}

impl CorrelationEstimate {
    /// Sample covariance (denominator `R − 1`) of per-run count vectors.
    ///
    /// The standard error of each entry is `sd(d_i d_j)/√R` with `d` the
    /// centred counts.
    pub fn from_samples(centers: Vec<f64>, samples: &[Vec<f64>]) -> Self {
        let r = samples.len();
        let m = centers.len();
        assert!(r >= 2, "need at least two runs");
        assert!(samples.iter().all(|s| s.len() == m), "bin count mismatch");
        let mut mean = vec![0.0; m];
        for s in samples {
            for (a, v) in mean.iter_mut().zip(s) {
                *a += v;
            }
        }
        for a in &mut mean {
            *a /= r as f64;
        }
        let mut sum = vec![vec![0.0; m]; m];
        let mut sum_sq = vec![vec![0.0; m]; m];
        let mut d = vec![0.0; m];
        for s in samples {
            for i in 0..m {
                d[i] = s[i] - mean[i];
            }
            for i in 0..m {
                if d[i] == 0.0 {
                    continue;
                }
                for j in i..m {
                    let prod = d[i] * d[j];
                    sum[i][j] += prod;
                    sum_sq[i][j] += prod * prod;
                }
            }
        }
        let rf = r as f64;
        let mut gc = vec![vec![0.0; m]; m];
        let mut stderr = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i..m {
                let mu = sum[i][j] / rf;
                let var = (sum_sq[i][j] / rf - mu * mu).max(0.0) * rf / (rf - 1.0);
                let g = sum[i][j] / (rf - 1.0);
                let se = (var / rf).sqrt();
                gc[i][j] = g;
                gc[j][i] = g;
                stderr[i][j] = se;
                stderr[j][i] = se;
            }
        }
        Self {
            centers,
            mean,
            gc,
            stderr,
            runs: r,
        }
    }

    /// Deterministic correlator with zero standard errors.
    pub fn exact(centers: Vec<f64>, gc: Vec<Vec<f64>>) -> Self {
        let m = centers.len();
        Self {
            centers,
            mean: vec![0.0; m],
            gc,
            stderr: vec![vec![0.0; m]; m],
            runs: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_of_known_samples() {
        let samples = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![2.0, 5.0]];
        let c = CorrelationEstimate::from_samples(vec![0.0, 1.0], &samples);
        assert_eq!(c.mean, vec![2.0, 3.0]);
        assert!((c.gc[0][0] - 1.0).abs() < 1e-15);
        assert!((c.gc[1][1] - 3.0).abs() < 1e-15);
        assert!((c.gc[0][1] - 0.0).abs() < 1e-15);
        assert_eq!(c.gc[0][1], c.gc[1][0]);
    }

    #[test]
    fn constant_samples_have_zero_covariance() {
        let samples = vec![vec![4.0, 0.0, 1.0]; 10];
        let c = CorrelationEstimate::from_samples(vec![0.0; 3], &samples);
        assert!(c.gc.iter().flatten().all(|&g| g == 0.0));
        assert!(c.stderr.iter().flatten().all(|&g| g == 0.0));
    }
}
