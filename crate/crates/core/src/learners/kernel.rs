//! Nadaraya–Watson regression with a product Gaussian kernel.

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MIN_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    /// (column index, bandwidth) for every non-constant column.
    pub bandwidths: Vec<(usize, f64)>,
    train: Vec<Vec<f64>>,
    y: Vec<f64>,
    mean: f64,
}

/// Robust scale `min(sd, IQR/1.34)`, or the sd when the IQR is zero.
fn spread(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let q = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let iqr = q(0.75) - q(0.25);
    if iqr > 0.0 {
        sd.min(iqr / 1.34)
    } else {
        sd
    }
}

/// Silverman's normal-reference factor `{4/((d+2)n)}^{1/(d+4)}` for a
/// d-dimensional product kernel; equals `1.06·n^(−1/5)` when d = 1.
fn silverman_factor(n: usize, d: usize) -> f64 {
    let (n, d) = (n as f64, d as f64);
    (4.0 / ((d + 2.0) * n)).powf(1.0 / (d + 4.0))
}

/// Bandwidth per column is the column's robust scale times the
/// d-dimensional Silverman factor, d counting non-constant columns only.
/// Constant columns are dropped.
pub fn fit_kernel_smoother(x: &DMatrix<f64>, y: &[f64]) -> Result<KernelModel> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidInput("kernel: length mismatch".into()));
    }
    if n < MIN_ROWS {
        return Err(Error::InsufficientData { needed: MIN_ROWS, got: n });
    }
    let mut scales = Vec::new();
    for j in 0..d {
        let mut v: Vec<f64> = x.column(j).iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let s = spread(&v);
        if s > 0.0 && s.is_finite() {
            scales.push((j, s));
        } else {
            warn!("kernel smoother: column {j} is constant, dropped");
        }
    }
    let factor = silverman_factor(n, scales.len());
    let bandwidths: Vec<(usize, f64)> = scales.into_iter().map(|(j, s)| (j, s * factor)).collect();
    let train = (0..n)
        .map(|i| bandwidths.iter().map(|&(j, h)| x[(i, j)] / h).collect())
        .collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    Ok(KernelModel { bandwidths, train, y: y.to_vec(), mean })
}

impl KernelModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut logw = vec![0.0; self.train.len()];
        let mut point = vec![0.0; self.bandwidths.len()];
        (0..x.nrows())
            .map(|i| {
                for (k, &(j, h)) in self.bandwidths.iter().enumerate() {
                    point[k] = x[(i, j)] / h;
                }
                let mut max = f64::NEG_INFINITY;
                for (lw, t) in logw.iter_mut().zip(&self.train) {
                    let d2: f64 = t.iter().zip(&point).map(|(a, b)| (a - b) * (a - b)).sum();
                    *lw = -0.5 * d2;
                    max = max.max(*lw);
                }
                if !max.is_finite() {
                    return self.mean;
                }
                let mut num = 0.0;
                let mut den = 0.0;
                for (lw, yi) in logw.iter().zip(&self.y) {
                    let w = (lw - max).exp();
                    num += w * yi;
                    den += w;
                }
                num / den
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn constant_response() {
        let mut rng = seed::rng(1);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.random::<f64>());
        let m = fit_kernel_smoother(&x, &[2.5; 30]).unwrap();
        let grid = DMatrix::from_fn(5, 2, |i, _| i as f64 * 10.0 - 20.0);
        for p in m.predict(&grid) {
            assert!((p - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn drops_constant_column() {
        let mut rng = seed::rng(2);
        let x = DMatrix::from_fn(40, 2, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() });
        let m = fit_kernel_smoother(&x, &[0.0; 40]).unwrap();
        assert_eq!(m.bandwidths.len(), 1);
        assert_eq!(m.bandwidths[0].0, 1);
    }

    #[test]
    fn silverman_value() {
        // sd = sqrt(2.5), IQR = 2 → min(1.5811, 1.4925) = 1.4925
        let h = spread(&[1.0, 2.0, 3.0, 4.0, 5.0]) * silverman_factor(5, 1);
        let expect = (2.0 / 1.34) * (4.0 / 15.0f64).powf(0.2);
        assert!((h - expect).abs() < 1e-12);
        assert!((silverman_factor(1000, 1) - 1.0592 * 1000f64.powf(-0.2)).abs() < 1e-4);
    }

    #[test]
    fn smooths_toward_local_mean() {
        let mut rng = seed::rng(4);
        let n = 500;
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..n).map(|i| f64::from(x[(i, 0)] > 0.5)).collect();
        let m = fit_kernel_smoother(&x, &y).unwrap();
        let p = m.predict(&DMatrix::from_row_slice(2, 1, &[0.1, 0.9]));
        assert!(p[0] < 0.05 && p[1] > 0.95);
    }

    #[test]
    fn far_points_stay_finite() {
        let x = DMatrix::from_fn(20, 1, |i, _| i as f64);
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let m = fit_kernel_smoother(&x, &y).unwrap();
        let p = m.predict(&DMatrix::from_element(1, 1, 1e6));
        assert!(p[0].is_finite());
        assert!((p[0] - 19.0).abs() < 1e-9);
    }
}
