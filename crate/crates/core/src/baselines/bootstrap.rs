//! Nonparametric bootstrap intervals, including the m-out-of-n variant for
//! stage-1 parameters whose estimator is non-regular.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::normal_quantile;
use crate::seed;

/// Replicate failures above this fraction abort the bootstrap.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootstrapVariant {
    NOfN,
    MOfN,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSpec {
    pub variant: BootstrapVariant,
    /// Only read by [`BootstrapVariant::MOfN`]; in [0, 1).
    pub kappa: f64,
    pub n_boot: usize,
    pub seed: u64,
    pub ci_level: f64,
}

impl BootstrapSpec {
    pub fn n_of_n(n_boot: usize, seed: u64) -> Self {
        BootstrapSpec { variant: BootstrapVariant::NOfN, kappa: 0.0, n_boot, seed, ci_level: 0.95 }
    }

    pub fn m_of_n(kappa: f64, n_boot: usize, seed: u64) -> Self {
        BootstrapSpec { variant: BootstrapVariant::MOfN, kappa, n_boot, seed, ci_level: 0.95 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_boot < 50 {
            return Err(Error::InvalidInput(format!("bootstrap needs n_boot >= 50, got {}", self.n_boot)));
        }
        if !(0.0..1.0).contains(&self.kappa) {
            return Err(Error::InvalidInput(format!("kappa {} must lie in [0, 1)", self.kappa)));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidInput(format!("confidence level {} must lie in (0, 1)", self.ci_level)));
        }
        Ok(())
    }

    /// Resample size for a sample of `n` with non-regularity estimate `p_hat`.
    pub fn resample_size(&self, n: usize, p_hat: f64) -> usize {
        match self.variant {
            BootstrapVariant::NOfN => n,
            BootstrapVariant::MOfN => resample_size_m(n, self.kappa, p_hat),
        }
    }
}

/// `m = ⌊n^{(1 + κ(1 − p̂))/(1 + κ)}⌋`, kept within [2, n].
pub fn resample_size_m(n: usize, kappa: f64, p_hat: f64) -> usize {
    let p = p_hat.clamp(0.0, 1.0);
    let exponent = (1.0 + kappa * (1.0 - p)) / (1.0 + kappa);
    if exponent >= 1.0 {
        return n;
    }
    // Guard the floor against n^1 landing a hair below n.
    let m = ((n as f64).powf(exponent) + 1e-9).floor() as usize;
    m.clamp(2.min(n), n)
}

/// Fraction of rows whose plug-in interval for `Sᵢᵀβ̂₂` contains zero. Rows
/// with `S = 0` have a blip of exactly zero and always count.
pub fn estimate_p_hat(s: &DMatrix<f64>, beta2: &DVector<f64>, cov2: &DMatrix<f64>, level: f64) -> f64 {
    let n = s.nrows();
    if n == 0 {
        return 0.0;
    }
    let z = normal_quantile(0.5 + level / 2.0);
    let fitted = s * beta2;
    let var = (s * cov2).component_mul(s).column_sum();
    let hits = (0..n).filter(|&i| fitted[i].abs() <= z * var[i].max(0.0).sqrt()).count();
    hits as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub intervals: Vec<(f64, f64)>,
    pub resample_size: usize,
    pub failed: usize,
    pub replicates: usize,
}

/// Bootstrap intervals for every coordinate `estimator` returns.
///
/// Replicate `b` draws its rows from `rng_at(seed, [b])` and calls the
/// estimator with seed `derive(seed, [b, 1])`, so results do not depend on
/// thread scheduling. n-of-n intervals are percentile intervals; m-of-n
/// intervals invert the quantiles of `√m(β̂* − β̂)` around `β̂` at rate `√n`.
pub fn bootstrap_ci<F>(estimator: F, data: &Dataset, spec: &BootstrapSpec, p_hat: f64) -> Result<BootstrapResult>
where
    F: Fn(&Dataset, u64) -> Result<Vec<f64>> + Sync,
{
    spec.validate()?;
    let n = data.n();
    let m = spec.resample_size(n, p_hat);
    let full = estimator(data, seed::derive(spec.seed, &[u64::MAX]))?;
    let reps: Vec<Option<Vec<f64>>> = (0..spec.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng_at(spec.seed, &[b as u64]);
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
            estimator(&data.select(&idx), seed::derive(spec.seed, &[b as u64, 1]))
                .ok()
                .filter(|v| v.len() == full.len() && v.iter().all(|x| x.is_finite()))
        })
        .collect();
    let failed = reps.iter().filter(|r| r.is_none()).count();
    if failed as f64 > MAX_FAILURE_RATE * spec.n_boot as f64 {
        return Err(Error::BootstrapFailures { failed, total: spec.n_boot });
    }
    if failed > 0 {
        log::warn!("bootstrap: dropped {failed} of {} failed resamples", spec.n_boot);
    }
    let ok: Vec<Vec<f64>> = reps.into_iter().flatten().collect();
    let lo_p = (1.0 - spec.ci_level) / 2.0;
    let hi_p = 1.0 - lo_p;
    let intervals = (0..full.len())
        .map(|j| {
            let mut draws: Vec<f64> = ok.iter().map(|r| r[j]).collect();
            draws.sort_by(f64::total_cmp);
            match spec.variant {
                BootstrapVariant::NOfN => (quantile(&draws, lo_p), quantile(&draws, hi_p)),
                BootstrapVariant::MOfN => {
                    let root_m = (m as f64).sqrt();
                    let root_n = (n as f64).sqrt();
                    let xi: Vec<f64> = draws.iter().map(|d| root_m * (d - full[j])).collect();
                    (full[j] - quantile(&xi, hi_p) / root_n, full[j] - quantile(&xi, lo_p) / root_n)
                }
            }
        })
        .collect();
    Ok(BootstrapResult { intervals, resample_size: m, failed, replicates: ok.len() })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Trajectory;
    use rand_distr::{Distribution, StandardNormal};

    fn mean_data(y: &[f64]) -> Dataset {
        let rows: Vec<Trajectory> = y
            .iter()
            .map(|&y| Trajectory { x1: vec![0.0], a1: 0, x2: vec![0.0], a2: None, y, r: None })
            .collect();
        Dataset::from_rows(&rows).unwrap()
    }

    fn sample_mean(d: &Dataset, _: u64) -> Result<Vec<f64>> {
        Ok(vec![d.y().iter().sum::<f64>() / d.n() as f64])
    }

    #[test]
    fn resample_size_values() {
        assert_eq!(resample_size_m(2000, 0.05, 0.0), 2000);
        assert_eq!(resample_size_m(2000, 0.05, 1.0), 1392);
        for p in [0.0, 0.3, 1.0] {
            assert_eq!(resample_size_m(517, 0.0, p), 517);
        }
    }

    #[test]
    fn p_hat_extremes() {
        let s = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, -0.5, 1.0, 0.0]);
        let tiny = DMatrix::identity(2, 2) * 1e-12;
        assert_eq!(estimate_p_hat(&s, &DVector::from_vec(vec![100.0, 0.0]), &tiny, 0.95), 0.0);
        assert_eq!(estimate_p_hat(&s, &DVector::zeros(2), &(DMatrix::identity(2, 2) * 5.0), 0.95), 1.0);
    }

    #[test]
    fn constant_data_zero_width() {
        let data = mean_data(&[3.0; 40]);
        for spec in [BootstrapSpec::n_of_n(100, 1), BootstrapSpec::m_of_n(0.05, 100, 1)] {
            let r = bootstrap_ci(sample_mean, &data, &spec, 1.0).unwrap();
            assert_eq!(r.intervals[0], (3.0, 3.0));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = seed::rng(4);
        let y: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut rng)).collect();
        let data = mean_data(&y);
        let spec = BootstrapSpec::m_of_n(0.05, 200, 9);
        let a = bootstrap_ci(sample_mean, &data, &spec, 0.5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| bootstrap_ci(sample_mean, &data, &spec, 0.5).unwrap());
        assert_eq!(a, b);
        assert!(a.resample_size < 100);
    }

    #[test]
    fn too_many_failures_abort() {
        let data = mean_data(&[1.0; 30]);
        let flaky = |d: &Dataset, s: u64| if s % 5 == 0 { Err(Error::DegenerateLabels) } else { sample_mean(d, s) };
        let spec = BootstrapSpec::n_of_n(200, 2);
        // The full-sample call uses its own seed; retry on a spec whose full fit succeeds.
        let spec = (0..20u64)
            .map(|k| BootstrapSpec { seed: k, ..spec.clone() })
            .find(|s| seed::derive(s.seed, &[u64::MAX]) % 5 != 0)
            .unwrap();
        assert!(matches!(bootstrap_ci(flaky, &data, &spec, 0.0), Err(Error::BootstrapFailures { .. })));
    }

    #[test]
    fn percentile_coverage_for_a_mean() {
        let mut covered = 0;
        let outer = 200;
        for rep in 0..outer {
            let mut rng = seed::rng_at(77, &[rep]);
            let y: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
            let r = bootstrap_ci(sample_mean, &mean_data(&y), &BootstrapSpec::n_of_n(500, rep), 0.0).unwrap();
            let (lo, hi) = r.intervals[0];
            covered += usize::from(lo <= 0.0 && 0.0 <= hi);
        }
        let rate = covered as f64 / outer as f64;
        assert!((rate - 0.95).abs() <= 0.03, "coverage {rate}");
    }
}
