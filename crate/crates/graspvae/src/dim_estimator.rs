//! Kernel-PCA intrinsic-dimension estimation of the grasp space: build a
//! kernel matrix over the gripper configurations, double-center it, take the
//! eigenvalue spectrum and report the number of components needed to reach a
//! cumulative information threshold (default 90%).

use serde::{Deserialize, Serialize};

use crate::par;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpcaConfig {
    pub kernel: Kernel,
    /// RBF bandwidth; `None` selects the median heuristic
    /// gamma = 1 / (2 * median(pairwise distance)^2).
    pub gamma: Option<f64>,
    /// Cumulative-information fraction defining the dimension, in (0, 1].
    pub threshold: f64,
}

impl Default for KpcaConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Rbf,
            gamma: None,
            threshold: 0.9,
        }
    }
}

impl KpcaConfig {
    fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Usage(format!(
                "threshold {} outside (0, 1]",
                self.threshold
            )));
        }
        if let Some(g) = self.gamma {
            if g <= 0.0 {
                return Err(Error::Usage(format!("gamma {g} must be > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Eigenvalues of the centered kernel matrix, sorted descending,
    /// negatives clipped to zero.
    pub eigenvalues: Vec<f64>,
    /// Nondecreasing cumulative fractions of the eigenvalue sum.
    pub cumulative: Vec<f64>,
    /// Smallest m with cumulative[m - 1] >= threshold.
    pub dimension: usize,
    /// True when the centered kernel matrix vanished (all points identical).
    pub degenerate: bool,
    /// The gamma actually used for the RBF kernel, if any.
    pub gamma: Option<f64>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median-heuristic RBF bandwidth over all pairwise distances.
pub fn median_heuristic_gamma(points: &[Vec<f64>]) -> Result<f64> {
    let mut dists = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            dists.push(squared_distance(&points[i], &points[j]).sqrt());
        }
    }
    let m = median(&mut dists);
    if m <= 0.0 {
        // identical points; any bandwidth gives a constant kernel matrix
        return Ok(1.0);
    }
    Ok(1.0 / (2.0 * m * m))
}

/// Builds the (uncentered) kernel matrix, row-parallel with the `parallel`
/// feature.
pub fn kernel_matrix(points: &[Vec<f64>], kernel: Kernel, gamma: f64) -> Vec<Vec<f64>> {
    let indices: Vec<usize> = (0..points.len()).collect();
    par::map(&indices, |&i| kernel_row(points, kernel, gamma, i))
}

/// Sequential twin of `kernel_matrix`, kept for the benches.
pub fn kernel_matrix_seq(points: &[Vec<f64>], kernel: Kernel, gamma: f64) -> Vec<Vec<f64>> {
    let indices: Vec<usize> = (0..points.len()).collect();
    par::map_seq(&indices, |&i| kernel_row(points, kernel, gamma, i))
}

fn kernel_row(points: &[Vec<f64>], kernel: Kernel, gamma: f64, i: usize) -> Vec<f64> {
    points
        .iter()
        .map(|p| match kernel {
            Kernel::Rbf => (-gamma * squared_distance(&points[i], p)).exp(),
            Kernel::Linear => points[i].iter().zip(p.iter()).map(|(a, b)| a * b).sum(),
        })
        .collect()
}

/// K <- K - 1K - K1 + 1K1, with 1 the all-1/n matrix.
fn double_center(k: &mut [Vec<f64>]) {
    let n = k.len();
    let row_means: Vec<f64> = k.iter().map(|row| row.iter().sum::<f64>() / n as f64).collect();
    let total_mean = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            k[i][j] += total_mean - row_means[i] - row_means[j];
        }
    }
}

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations. Good for
/// the few-hundred-point matrices this module sees.
pub fn symmetric_eigenvalues(matrix: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for row in &a {
        if row.len() != n {
            return Err(Error::Shape("eigensolver requires a square matrix".into()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite kernel matrix entry".into()));
        }
    }
    const MAX_SWEEPS: usize = 50;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() < 1e-12 * (1.0 + frobenius(&a)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    Ok((0..n).map(|i| a[i][i]).collect())
}

fn frobenius(a: &[Vec<f64>]) -> f64 {
    a.iter()
        .flat_map(|r| r.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Estimates the intrinsic dimension of a point cloud (typically normalized
/// 8-parameter gripper configurations).
pub fn estimate_dimension(configs: &[Vec<f64>], config: &KpcaConfig) -> Result<SpectrumReport> {
    config.validate()?;
    if configs.len() < 3 {
        return Err(Error::Usage(format!(
            "kernel-PCA needs at least 3 points, got {}",
            configs.len()
        )));
    }
    let width = configs[0].len();
    if configs.iter().any(|c| c.len() != width) {
        return Err(Error::Shape("inconsistent point widths".into()));
    }
    let gamma = match config.kernel {
        Kernel::Rbf => Some(match config.gamma {
            Some(g) => g,
            None => median_heuristic_gamma(configs)?,
        }),
        Kernel::Linear => None,
    };
    let mut k = kernel_matrix(configs, config.kernel, gamma.unwrap_or(0.0));
    if k.iter().flat_map(|r| r.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite kernel matrix entry".into()));
    }
    double_center(&mut k);
    let mut eigenvalues = symmetric_eigenvalues(&k)?;
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    let lambda_max = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let clip = -1e-10 * lambda_max;
    for v in &mut eigenvalues {
        if *v < 0.0 {
            debug_assert!(*v >= clip - 1e-6 * (1.0 + lambda_max));
            *v = 0.0;
        }
    }
    let total: f64 = eigenvalues.iter().sum();
    let degenerate = total <= 1e-12;
    let mut cumulative = Vec::with_capacity(eigenvalues.len());
    let mut acc = 0.0;
    for v in &eigenvalues {
        acc += v;
        cumulative.push(if degenerate { 1.0 } else { acc / total });
    }
    let dimension = if degenerate {
        0
    } else {
        cumulative
            .iter()
            .position(|&c| c >= config.threshold - 1e-12)
            .map(|i| i + 1)
            .unwrap_or(eigenvalues.len())
    };
    Ok(SpectrumReport {
        eigenvalues,
        cumulative,
        dimension,
        degenerate,
        gamma,
    })
}
