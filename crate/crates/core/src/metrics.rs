//! Quality metrics and Monte-Carlo distribution checks.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::latent::Latent;
use crate::math::{exp, log10, sqrt};

/// PSNR reported for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub mse: f64,
    pub n: usize,
}

impl MetricReport {
    /// Averages per-trial metrics.
    pub fn mean_of(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let k = reports.len() as f64;
        Some(MetricReport {
            psnr_db: reports.iter().map(|r| r.psnr_db).sum::<f64>() / k,
            ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / k,
            mse: reports.iter().map(|r| r.mse).sum::<f64>() / k,
            n: reports.iter().map(|r| r.n).sum(),
        })
    }
}

pub fn mse(a: &Latent, b: &Latent) -> Result<f64> {
    a.check_same_shape(b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(s / a.len() as f64)
}

/// `10 log10(peak^2 / mse)`, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * log10(peak * peak / mse)).min(PSNR_CAP_DB)
}

pub fn psnr(a: &Latent, b: &Latent, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::Domain {
            what: "peak",
            expected: "positive",
            value: peak,
        });
    }
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
    /// Standard deviation of the Gaussian window weights.
    pub sigma: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 7,
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
            sigma: 1.5,
        }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let mut w = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            let (di, dj) = (i as f64 - c, j as f64 - c);
            w[i * size + j] = exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Mean SSIM over Gaussian-weighted windows, computed per `w x h` channel
/// slice (valid positions only) and averaged over channels.
pub fn ssim(a: &Latent, b: &Latent, params: SsimParams) -> Result<f64> {
    a.check_same_shape(b)?;
    let shape = a.shape();
    let win = params.window;
    if win < 3 || win.is_multiple_of(2) {
        return Err(Error::Domain {
            what: "ssim window",
            expected: "odd and at least 3",
            value: win as f64,
        });
    }
    if win > shape.w || win > shape.h {
        return Err(Error::WindowTooLarge {
            window: win,
            width: shape.w,
            height: shape.h,
        });
    }
    let (l1, l2) = (params.k1 * params.peak, params.k2 * params.peak);
    let (c1, c2) = (l1 * l1, l2 * l2);
    let weights = gaussian_window(win, params.sigma);
    let plane = shape.w * shape.h;
    let (xa, xb) = (a.as_slice(), b.as_slice());

    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..shape.c {
        let base = ch * plane;
        for r0 in 0..=(shape.h - win) {
            for c0 in 0..=(shape.w - win) {
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..win {
                    for j in 0..win {
                        let wt = weights[i * win + j];
                        let idx = base + (r0 + i) * shape.w + c0 + j;
                        ma += wt * xa[idx];
                        mb += wt * xb[idx];
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..win {
                    for j in 0..win {
                        let wt = weights[i * win + j];
                        let idx = base + (r0 + i) * shape.w + c0 + j;
                        let (da, db) = (xa[idx] - ma, xb[idx] - mb);
                        va += wt * da * da;
                        vb += wt * db * db;
                        cov += wt * da * db;
                    }
                }
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    Mean,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentFailure {
    pub index: usize,
    pub kind: MomentKind,
    /// Deviation in standard errors.
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianityReport {
    pub draws: usize,
    pub sample_mean: Vec<f64>,
    pub sample_var: Vec<f64>,
    /// Largest |deviation| in standard errors over all checks.
    pub max_z: f64,
    pub failures: Vec<MomentFailure>,
}

impl GaussianityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Minimum draws accepted by [`gaussianity_check`].
pub const MIN_DRAWS: usize = 1000;

/// Per-element streaming moments for draws of a fixed-length vector.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    n: usize,
    sum: Vec<f64>,
    // Shifted by the first draw to limit cancellation.
    shift: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
    s4: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        MomentAccumulator {
            n: 0,
            sum: vec![0.0; dim],
            shift: vec![0.0; dim],
            s2: vec![0.0; dim],
            s3: vec![0.0; dim],
            s4: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, draw: &[f64]) {
        if self.n == 0 {
            self.shift.copy_from_slice(draw);
        }
        self.n += 1;
        for (i, &x) in draw.iter().enumerate() {
            let d = x - self.shift[i];
            self.sum[i] += d;
            self.s2[i] += d * d;
            self.s3[i] += d * d * d;
            self.s4[i] += d * d * d * d;
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Compares sample moments against `N(mu, sigma2)` per element.
    ///
    /// The mean passes when within `tol_se * sqrt(var / n)`; the variance
    /// passes when within `tol_se * sqrt((m4 - var^2) / n)`, both using the
    /// sample moments.
    pub fn check(&self, mu: &[f64], sigma2: &[f64], tol_se: f64) -> Result<GaussianityReport> {
        if self.n < MIN_DRAWS {
            return Err(Error::TooFewSamples {
                required: MIN_DRAWS,
                actual: self.n,
            });
        }
        let dim = self.sum.len();
        crate::error::ensure_len(dim, mu.len())?;
        crate::error::ensure_len(dim, sigma2.len())?;
        let n = self.n as f64;
        let mut report = GaussianityReport {
            draws: self.n,
            sample_mean: Vec::with_capacity(dim),
            sample_var: Vec::with_capacity(dim),
            max_z: 0.0,
            failures: Vec::new(),
        };
        for i in 0..dim {
            let m1 = self.sum[i] / n;
            let m2 = self.s2[i] / n;
            let m3 = self.s3[i] / n;
            let m4 = self.s4[i] / n;
            let var = m2 - m1 * m1;
            let c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1 * m1 * m1 * m1;
            let mean = m1 + self.shift[i];
            let var_unbiased = var * n / (n - 1.0);
            report.sample_mean.push(mean);
            report.sample_var.push(var_unbiased);

            let se_mean = sqrt(var / n);
            let se_var = sqrt(((c4 - var * var) / n).max(0.0));
            for (kind, dev, se) in [
                (MomentKind::Mean, mean - mu[i], se_mean),
                (MomentKind::Variance, var_unbiased - sigma2[i], se_var),
            ] {
                let z = if se > 0.0 {
                    dev / se
                } else if dev == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                report.max_z = report.max_z.max(z.abs());
                if !(z.abs() <= tol_se) {
                    report.failures.push(MomentFailure {
                        index: i,
                        kind,
                        z_score: z,
                    });
                }
            }
        }
        Ok(report)
    }
}

/// Checks that each column of `samples` (one row per draw) has mean `mu` and
/// variance `sigma2` within `tol_se` standard errors.
pub fn gaussianity_check(
    samples: &[Vec<f64>],
    mu: &[f64],
    sigma2: &[f64],
    tol_se: f64,
) -> Result<GaussianityReport> {
    let mut acc = MomentAccumulator::new(mu.len());
    for row in samples {
        crate::error::ensure_len(mu.len(), row.len())?;
        acc.push(row);
    }
    acc.check(mu, sigma2, tol_se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, stream};
    use crate::Shape;

    fn image(seed: u64, w: usize, h: usize) -> Latent {
        let mut r = stream(seed);
        let s = Shape::new(w, h, 1).unwrap();
        Latent::new((0..s.len()).map(|_| normal(&mut r)).collect(), s).unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = image(1, 4, 4);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = Latent::from_parts(a.as_slice().iter().map(|x| x + 0.5).collect(), a.shape());
        assert!((mse(&a, &b).unwrap() - 0.25).abs() < 1e-15);
        let c = image(2, 4, 4);
        // Two-pass: differences first, then the mean of squares.
        let diffs: Vec<f64> = a.as_slice().iter().zip(c.as_slice()).map(|(x, y)| x - y).collect();
        let mut acc = 0.0;
        for d in &diffs {
            acc += d * d;
        }
        assert!((mse(&a, &c).unwrap() - acc / 16.0).abs() < 1e-14);
        assert!(mse(&a, &Latent::from_vec(vec![0.0; 3])).is_err());
    }

    #[test]
    fn psnr_examples() {
        let a = image(1, 4, 4);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-12);
        assert_eq!(psnr_from_mse(1.0, 1.0), 0.0);
        let b = image(2, 4, 4);
        assert_eq!(psnr(&a, &b, 2.0).unwrap(), psnr(&b, &a, 2.0).unwrap());
        assert!(psnr(&a, &b, 0.0).is_err());
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = image(3, 9, 9);
        assert!((ssim(&a, &a, SsimParams::default()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_negation_is_negative() {
        // Checkerboard-modulated pattern: local means are ~0.
        let s = Shape::new(9, 9, 1).unwrap();
        let data: Vec<f64> = (0..81)
            .map(|i| {
                let (r, c) = (i / 9, i % 9);
                let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
                sign * (1.0 + 0.3 * libm::sin(r as f64 * 0.7 + c as f64 * 0.4))
            })
            .collect();
        let a = Latent::new(data.clone(), s).unwrap();
        let b = Latent::new(data.iter().map(|x| -x).collect(), s).unwrap();
        let v = ssim(&a, &b, SsimParams::default()).unwrap();
        assert!((-1.0..0.0).contains(&v), "{v}");
    }

    #[test]
    fn ssim_matches_scalar_reference_on_one_window() {
        // Independent single-window evaluation with the textbook formula.
        let a = image(11, 7, 7);
        let b = image(12, 7, 7);
        let p = SsimParams::default();
        let mut wts = [[0.0f64; 7]; 7];
        let mut total = 0.0;
        for (i, row) in wts.iter_mut().enumerate() {
            for (j, w) in row.iter_mut().enumerate() {
                let d2 = ((i as f64) - 3.0).powi(2) + ((j as f64) - 3.0).powi(2);
                *w = libm::exp(-d2 / 4.5);
                total += *w;
            }
        }
        let at = |x: &Latent, i: usize, j: usize| x.as_slice()[i * 7 + j];
        let wsum = |f: &dyn Fn(usize, usize) -> f64| {
            let mut acc = 0.0;
            for i in 0..7 {
                for j in 0..7 {
                    acc += wts[i][j] / total * f(i, j);
                }
            }
            acc
        };
        let ma = wsum(&|i, j| at(&a, i, j));
        let mb = wsum(&|i, j| at(&b, i, j));
        let va = wsum(&|i, j| (at(&a, i, j) - ma).powi(2));
        let vb = wsum(&|i, j| (at(&b, i, j) - mb).powi(2));
        let cov = wsum(&|i, j| (at(&a, i, j) - ma) * (at(&b, i, j) - mb));
        let (c1, c2) = (1e-4, 9e-4);
        let reference = (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        assert!((ssim(&a, &b, p).unwrap() - reference).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_constants_is_luminance_term() {
        let s = Shape::new(7, 7, 2).unwrap();
        let a = Latent::new(vec![0.2; s.len()], s).unwrap();
        let b = Latent::new(vec![0.6; s.len()], s).unwrap();
        let p = SsimParams::default();
        let c1 = (p.k1 * p.peak).powi(2);
        let expected = (2.0 * 0.2 * 0.6 + c1) / (0.04 + 0.36 + c1);
        assert!((ssim(&a, &b, p).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ssim_errors() {
        let a = image(1, 5, 5);
        assert!(matches!(
            ssim(&a, &a, SsimParams::default()),
            Err(Error::WindowTooLarge { .. })
        ));
        let p = SsimParams {
            window: 4,
            ..SsimParams::default()
        };
        assert!(ssim(&a, &a, p).is_err());
    }

    fn draws(seed: u64, n: usize, mu: &[f64], sd: &[f64]) -> Vec<Vec<f64>> {
        let mut r = stream(seed);
        (0..n)
            .map(|_| mu.iter().zip(sd).map(|(m, s)| m + s * normal(&mut r)).collect())
            .collect()
    }

    #[test]
    fn gaussianity_passes_on_target() {
        let mu = [0.0, 1.5, -2.0];
        let sd = [1.0, 0.5, 2.0];
        let var: Vec<f64> = sd.iter().map(|s| s * s).collect();
        let mut passes = 0;
        for seed in 0..20 {
            let rep = gaussianity_check(&draws(seed, 2000, &mu, &sd), &mu, &var, 4.0).unwrap();
            passes += rep.passed() as usize;
        }
        assert_eq!(passes, 20);
    }

    #[test]
    fn gaussianity_detects_violations() {
        let mu = [0.0, 1.0];
        let sd = [1.0, 1.0];
        let s = draws(5, 4000, &mu, &sd);
        let shifted = [10.0 / sqrt(4000.0), 1.0];
        let rep = gaussianity_check(&s, &shifted, &[1.0, 1.0], 4.0).unwrap();
        assert!(rep.failures.iter().any(|f| f.index == 0 && f.kind == MomentKind::Mean));
        let rep = gaussianity_check(&s, &mu, &[2.0, 1.0], 4.0).unwrap();
        assert!(rep.failures.iter().any(|f| f.index == 0 && f.kind == MomentKind::Variance));
        assert!(matches!(
            gaussianity_check(&s[..10], &mu, &[1.0, 1.0], 4.0),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn report_mean() {
        let r = MetricReport::mean_of(&[
            MetricReport { psnr_db: 10.0, ssim: 0.5, mse: 0.1, n: 1 },
            MetricReport { psnr_db: 20.0, ssim: 0.7, mse: 0.3, n: 1 },
        ])
        .unwrap();
        assert_eq!((r.psnr_db, r.n), (15.0, 2));
        assert!(MetricReport::mean_of(&[]).is_none());
    }
}
