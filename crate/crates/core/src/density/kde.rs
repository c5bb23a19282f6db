//! Gaussian kernel density estimate with Scott's-rule bandwidth.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest per-feature bandwidth.
pub const BANDWIDTH_FLOOR: f64 = 1e-3;

/// Diagonal jitter for full bandwidth matrices, relative to their mean variance.
pub const FULL_JITTER: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthKind {
    /// Product kernel, one bandwidth per feature.
    Diagonal,
    /// Kernel covariance proportional to the sample covariance.
    #[default]
    Full,
}

/// Lower-triangular factor `L` of the kernel covariance `H = L L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidth {
    pub kind: BandwidthKind,
    pub chol: DMatrix<f64>,
}

impl Bandwidth {
    pub fn diagonal(h: &[f64]) -> Self {
        Bandwidth {
            kind: BandwidthKind::Diagonal,
            chol: DMatrix::from_diagonal(&DVector::from_column_slice(h)),
        }
    }

    pub fn dim(&self) -> usize {
        self.chol.nrows()
    }

    fn log_det_chol(&self) -> f64 {
        self.chol.diagonal().iter().map(|v| v.ln()).sum()
    }

    fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(x);
        match self.kind {
            BandwidthKind::Diagonal => v
                .iter()
                .zip(self.chol.diagonal().iter())
                .map(|(a, h)| a / h)
                .collect(),
            BandwidthKind::Full => self
                .chol
                .solve_lower_triangular(&v)
                .expect("bandwidth factor has a positive diagonal")
                .iter()
                .copied()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    points: Vec<Vec<f64>>,
    whitened: Vec<Vec<f64>>,
    pub bandwidth: Bandwidth,
    log_norm: f64,
}

fn scott_factor(n: usize, d: usize) -> f64 {
    (n as f64).powf(-1.0 / (d as f64 + 4.0))
}

fn check_rows(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().ok_or(Error::Empty("KDE support"))?.len();
    for p in points {
        if p.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite KDE support point".into()));
        }
    }
    Ok(d)
}

impl KdeModel {
    /// Fits on normalized joint vectors.
    pub fn fit(points: Vec<Vec<f64>>, kind: BandwidthKind) -> Result<Self> {
        let d = check_rows(&points)?;
        let n = points.len();
        if n < 2 {
            return Err(Error::Config("KDE needs at least two points".into()));
        }
        let factor = scott_factor(n, d);
        let mean: Vec<f64> = (0..d)
            .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let cov = DMatrix::from_fn(d, d, |a, b| {
            points
                .iter()
                .map(|p| (p[a] - mean[a]) * (p[b] - mean[b]))
                .sum::<f64>()
                / (n as f64 - 1.0)
        });
        let bandwidth = match kind {
            BandwidthKind::Diagonal => {
                let h: Vec<f64> = (0..d)
                    .map(|j| (factor * cov[(j, j)].sqrt()).max(BANDWIDTH_FLOOR))
                    .collect();
                Bandwidth::diagonal(&h)
            }
            BandwidthKind::Full => {
                let mut h = cov * (factor * factor);
                for j in 0..d {
                    h[(j, j)] = h[(j, j)].max(BANDWIDTH_FLOOR * BANDWIDTH_FLOOR);
                }
                // exact linear relations in the data make `h` singular
                let jitter = FULL_JITTER * h.trace() / d as f64;
                for j in 0..d {
                    h[(j, j)] += jitter;
                }
                let chol = h
                    .cholesky()
                    .ok_or_else(|| Error::Numeric("bandwidth matrix is not positive definite".into()))?
                    .l();
                Bandwidth {
                    kind: BandwidthKind::Full,
                    chol,
                }
            }
        };
        Self::with_bandwidth(points, bandwidth)
    }

    pub fn with_bandwidth(points: Vec<Vec<f64>>, bandwidth: Bandwidth) -> Result<Self> {
        let d = check_rows(&points)?;
        if bandwidth.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                got: bandwidth.dim(),
            });
        }
        if bandwidth.chol.diagonal().iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Numeric("bandwidth must be positive".into()));
        }
        let whitened = points.iter().map(|p| bandwidth.whiten(p)).collect();
        let log_norm = -(points.len() as f64).ln()
            - 0.5 * d as f64 * (2.0 * PI).ln()
            - bandwidth.log_det_chol();
        Ok(KdeModel {
            points,
            whitened,
            bandwidth,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.bandwidth.dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite KDE query".into()));
        }
        let y = self.bandwidth.whiten(x);
        let exps: Vec<f64> = self
            .whitened
            .iter()
            .map(|p| -0.5 * p.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .collect();
        let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = exps.iter().map(|e| (e - max).exp()).sum();
        Ok(self.log_norm + max + sum.ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    // Direct summation of N(x; p_i, H) with an explicit inverse and
    // determinant of H.
    fn brute_force(points: &[Vec<f64>], h: &DMatrix<f64>, x: &[f64]) -> f64 {
        let d = x.len();
        let inv = h.clone().try_inverse().unwrap();
        let det = h.determinant();
        let norm = ((2.0 * PI).powi(d as i32) * det).sqrt();
        let total: f64 = points
            .iter()
            .map(|p| {
                let diff = DVector::from_fn(d, |j, _| x[j] - p[j]);
                (-0.5 * (diff.transpose() * &inv * &diff)[(0, 0)]).exp() / norm
            })
            .sum();
        (total / points.len() as f64).ln()
    }

    fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn unit_kernel_at_mode() {
        for d in [1, 3, 9] {
            let m = KdeModel::with_bandwidth(vec![vec![0.0; d]], Bandwidth::diagonal(&vec![1.0; d])).unwrap();
            let want = -(d as f64 / 2.0) * (2.0 * PI).ln();
            assert!((m.log_density(&vec![0.0; d]).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn three_points_by_hand() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]];
        let h = [0.5, 0.8];
        let m = KdeModel::with_bandwidth(pts.clone(), Bandwidth::diagonal(&h)).unwrap();
        let x = [0.3, 0.4];
        let mut total = 0.0;
        for p in &pts {
            let mut k = 1.0;
            for j in 0..2 {
                let u = (x[j] - p[j]) / h[j];
                k *= (-0.5 * u * u).exp() / ((2.0 * PI).sqrt() * h[j]);
            }
            total += k;
        }
        assert!((m.log_density(&x).unwrap() - (total / 3.0).ln()).abs() < 1e-13);
    }

    #[test]
    fn matches_brute_force_both_kinds() {
        for (seed, n, d) in [(1, 100, 3), (2, 57, 5), (3, 10, 1)] {
            let pts = random_points(n, d, seed);
            for kind in [BandwidthKind::Diagonal, BandwidthKind::Full] {
                let m = KdeModel::fit(pts.clone(), kind).unwrap();
                let h = &m.bandwidth.chol * m.bandwidth.chol.transpose();
                for x in random_points(20, d, seed + 100) {
                    let got = m.log_density(&x).unwrap();
                    let want = brute_force(&pts, &h, &x);
                    assert!((got - want).abs() <= 1e-12, "{kind:?}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn far_query_is_below_training_minimum() {
        let pts = random_points(50, 4, 4);
        let m = KdeModel::fit(pts.clone(), BandwidthKind::Diagonal).unwrap();
        let min = pts
            .iter()
            .map(|p| m.log_density(p).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(m.log_density(&[50.0; 4]).unwrap() < min);
    }

    #[test]
    fn training_point_at_least_own_kernel() {
        let pts = random_points(40, 3, 5);
        for kind in [BandwidthKind::Diagonal, BandwidthKind::Full] {
            let m = KdeModel::fit(pts.clone(), kind).unwrap();
            let h = &m.bandwidth.chol * m.bandwidth.chol.transpose();
            let peak = 1.0 / ((2.0 * PI).powi(3) * h.determinant()).sqrt();
            for p in &pts {
                assert!(m.log_density(p).unwrap() >= (peak / 40.0).ln() - 1e-12);
            }
        }
    }

    #[test]
    fn scott_bandwidth_and_floor() {
        // second feature is constant
        let pts: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64, 2.0]).collect();
        let m = KdeModel::fit(pts.clone(), BandwidthKind::Diagonal).unwrap();
        let sd = (pts.iter().map(|p| (p[0] - 7.5).powi(2)).sum::<f64>() / 15.0).sqrt();
        let factor = 16f64.powf(-1.0 / 6.0);
        assert!((m.bandwidth.chol[(0, 0)] - factor * sd).abs() < 1e-12);
        assert_eq!(m.bandwidth.chol[(1, 1)], BANDWIDTH_FLOOR);
        assert!(m.log_density(&[3.0, 2.0]).unwrap().is_finite());
        let full = KdeModel::fit(pts, BandwidthKind::Full).unwrap();
        assert!((full.bandwidth.chol[(1, 1)] - BANDWIDTH_FLOOR).abs() < 1e-5);
        assert!((full.bandwidth.chol[(0, 0)] - factor * sd).abs() < 1e-6);
    }

    #[test]
    fn full_bandwidth_on_collinear_data() {
        // third feature is an exact linear function of the first two
        let pts: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let (a, b) = ((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos());
                vec![a, b, a + 0.02 * b]
            })
            .collect();
        let m = KdeModel::fit(pts.clone(), BandwidthKind::Full).unwrap();
        let on = m.log_density(&pts[7]).unwrap();
        let mut off = pts[7].clone();
        off[2] += 1e-3;
        // the kernel is thin across the relation, so a small step off it costs a lot
        assert!(on - m.log_density(&off).unwrap() > 5.0);
    }

    #[test]
    fn integrates_to_one_in_1d() {
        let pts = random_points(30, 1, 6);
        let m = KdeModel::fit(pts, BandwidthKind::Diagonal).unwrap();
        let (lo, hi, steps) = (-6.0, 6.0, 20_000);
        let dx = (hi - lo) / steps as f64;
        let total: f64 = (0..steps)
            .map(|i| m.log_density(&[lo + (i as f64 + 0.5) * dx]).unwrap().exp() * dx)
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn integrates_to_one_in_2d_monte_carlo() {
        let pts = random_points(20, 2, 7);
        let m = KdeModel::fit(pts, BandwidthKind::Full).unwrap();
        let mut rng = rng_from_seed(8);
        let n = 200_000;
        let side = 8.0;
        let total: f64 = (0..n)
            .map(|_| {
                let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
                m.log_density(&x).unwrap().exp()
            })
            .sum::<f64>()
            * side
            * side
            / n as f64;
        assert!((total - 1.0).abs() < 0.02, "{total}");
    }

    #[test]
    fn rejects_bad_queries() {
        let m = KdeModel::fit(random_points(5, 2, 9), BandwidthKind::Diagonal).unwrap();
        assert!(matches!(m.log_density(&[0.0]), Err(Error::Dimension { .. })));
        assert!(matches!(m.log_density(&[0.0, f64::NAN]), Err(Error::Numeric(_))));
        assert!(KdeModel::fit(vec![vec![0.0]], BandwidthKind::Diagonal).is_err());
    }
}
