use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub dimension: usize,
    /// Singular values of the centred point cloud, descending.
    pub singular_values: Vec<f64>,
    /// `σ_i / σ_1`.
    pub ratios: Vec<f64>,
    /// Principal directions as rows, matching `singular_values`.
    pub components: Mat,
    pub mean: Vec<f64>,
}

impl DimensionReport {
    /// Coordinates of `points` in the leading `k` principal directions.
    pub fn project(&self, points: &Mat, k: usize) -> Mat {
        let mut out = Mat::zeros(points.rows(), k);
        for i in 0..points.rows() {
            for c in 0..k {
                out[(i, c)] = points
                    .row(i)
                    .iter()
                    .zip(&self.mean)
                    .zip(self.components.row(c))
                    .map(|((x, m), u)| (x - m) * u)
                    .sum();
            }
        }
        out
    }
}

/// Centred PCA of a point cloud (one point per row). The effective dimension
/// counts singular values with `σ_i/σ_1 > tol`.
pub fn effective_dimension(points: &Mat, tol: f64) -> Result<DimensionReport> {
    let (n, d) = points.shape();
    if d == 0 || n < 10 * d {
        return Err(Error::invalid(format!(
            "need at least {} points for {d}-dimensional PCA, got {n}",
            10 * d
        )));
    }
    pca(points, tol)
}

pub(crate) fn pca(points: &Mat, tol: f64) -> Result<DimensionReport> {
    let (n, d) = points.shape();
    let mut mean = vec![0.0; d];
    for row in points.iter_rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x / n as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in points.iter_rows() {
        for a in 0..d {
            let xa = row[a] - mean[a];
            for b in 0..d {
                cov[(a, b)] += xa * (row[b] - mean[b]);
            }
        }
    }
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let s1 = singular_values[0];
    let scale = points.max_abs().max(f64::MIN_POSITIVE);
    if !(s1 > 1e-12 * scale * (n as f64).sqrt()) {
        return Err(Error::invalid("degenerate point cloud: all points coincide"));
    }
    let ratios: Vec<f64> = singular_values.iter().map(|s| s / s1).collect();
    let dimension = ratios.iter().filter(|&&r| r > tol).count();
    let mut components = Mat::zeros(d, d);
    for (r, &i) in order.iter().enumerate() {
        for c in 0..d {
            components[(r, c)] = eig.eigenvectors[(c, i)];
        }
    }
    Ok(DimensionReport {
        dimension,
        singular_values,
        ratios,
        components,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn planar_ellipse_in_three_dimensions() {
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|k| {
                let t = k as f64 * 0.05;
                let (a, b) = (2.0 * t.cos(), 0.7 * t.sin());
                vec![a + b, a - b, 0.5 * a]
            })
            .collect();
        let r = effective_dimension(&Mat::from_rows(&pts), 0.05).unwrap();
        assert_eq!(r.dimension, 2);
        assert!(r.ratios[2] < 1e-6);
    }

    #[test]
    fn isotropic_cloud_is_full_dimensional() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts: Vec<Vec<f64>> = (0..500)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        assert_eq!(effective_dimension(&Mat::from_rows(&pts), 0.05).unwrap().dimension, 3);
    }

    #[test]
    fn degenerate_and_small_inputs_rejected() {
        let same = Mat::from_rows(&vec![vec![1.0, 2.0]; 40]);
        assert!(effective_dimension(&same, 0.05).is_err());
        let few = Mat::from_rows(&vec![vec![1.0, 2.0, 3.0]; 5]);
        assert!(effective_dimension(&few, 0.05).is_err());
    }

    #[test]
    fn projection_recovers_plane_coordinates() {
        let pts: Vec<Vec<f64>> = (0..50).map(|k| vec![k as f64, 0.0]).collect();
        let m = Mat::from_rows(&pts);
        let r = pca(&m, 0.05).unwrap();
        let proj = r.project(&m, 1);
        assert!((proj[(49, 0)] - proj[(0, 0)]).abs() - 49.0 < 1e-9);
    }
}
