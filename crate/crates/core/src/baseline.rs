//! Classical (metric) multidimensional scaling.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::cad::TargetDim;
use crate::embed::Embedding;
use crate::error::{CpmError, Result};
use crate::metricspace::DistanceMatrix;

/// Top-`d` principal coordinates of the double-centered squared distances.
///
/// Negative eigenvalues are clamped to zero. Each eigenvector's sign is fixed
/// so that its largest-magnitude entry (first on ties) is positive.
pub fn classical_mds(dist: &DistanceMatrix, d: TargetDim) -> Result<Embedding> {
    let n = dist.len();
    let d = d.get();
    if d >= n {
        return Err(CpmError::InvalidParameter(format!(
            "MDS target dimension {d} must be below the number of points {n}"
        )));
    }
    let b = double_centered_gram(dist);
    let eig = SymmetricEigen::try_new(b, 1e-14, 10_000 * n.max(10)).ok_or_else(|| {
        CpmError::Numerical("symmetric eigendecomposition did not converge".into())
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut coords = Array2::<f64>::zeros((n, d));
    for (col, &k) in order.iter().take(d).enumerate() {
        let lambda = eig.eigenvalues[k].max(0.0);
        let v = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for i in 1..n {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let s = sign * lambda.sqrt();
        for i in 0..n {
            coords[[i, col]] = s * v[i];
        }
    }
    Embedding::new(coords)
}

/// `B = -1/2 J D^2 J` with `J = I - 11^T / N`.
fn double_centered_gram(dist: &DistanceMatrix) -> DMatrix<f64> {
    let n = dist.len();
    let sq = DMatrix::from_fn(n, n, |i, j| {
        let v = dist.get(i, j);
        v * v
    });
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand)
    })
}
