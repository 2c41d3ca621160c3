use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const DEFAULT_PCA_DIMS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// `D × k`, orthonormal columns ordered by descending variance.
    pub basis: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
    /// `N × k` projection of the centred data.
    pub projected: DMatrix<f64>,
}

impl Pca {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut x = &self.projected * self.basis.transpose();
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        x
    }
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Extends orthonormal columns `0..filled` of `basis` with standard basis
/// vectors (Gram-Schmidt) until every column is set.
fn complete_basis(basis: &mut DMatrix<f64>, filled: usize) {
    let (d, k) = basis.shape();
    let mut col = filled;
    for e in 0..d {
        if col == k {
            break;
        }
        let mut v = DVector::zeros(d);
        v[e] = 1.0;
        for _ in 0..2 {
            for j in 0..col {
                let proj = basis.column(j).dot(&v);
                v -= basis.column(j) * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.set_column(col, &(v / norm));
            col += 1;
        }
    }
}

/// Principal component analysis of the rows of `x`, keeping
/// `min(dims, D, N)` components. Uses the `N × N` Gram matrix when there
/// are fewer samples than features.
pub fn pca_reduce(x: &DMatrix<f64>, dims: usize) -> Result<Pca> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::DegenerateInput(format!("PCA needs at least 2 samples, got {n}")));
    }
    if dims == 0 {
        return Err(Error::Config("PCA needs at least one output dimension".into()));
    }
    let k = dims.min(d).min(n);
    let mean = x.row_mean().transpose();
    let mut centred = x.clone();
    for mut row in centred.row_iter_mut() {
        row -= mean.transpose();
    }
    let total_var: f64 = centred.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
    if total_var <= 0.0 {
        return Err(Error::DegenerateInput("data has zero variance".into()));
    }
    let scale = 1.0 / (n - 1) as f64;
    let (explained_variance, mut basis) = if d <= n {
        let (values, vectors) = sorted_eigen(centred.transpose() * &centred * scale);
        (values[..k].to_vec(), vectors.columns(0, k).into_owned())
    } else {
        let (values, u) = sorted_eigen(&centred * centred.transpose() * scale);
        let mut basis = DMatrix::zeros(d, k);
        let mut filled = 0;
        for c in 0..k {
            let v = centred.transpose() * u.column(c);
            let norm = v.norm();
            if values[c] <= total_var * 1e-12 || norm == 0.0 {
                break;
            }
            basis.set_column(c, &(v / norm));
            filled += 1;
        }
        complete_basis(&mut basis, filled);
        (values[..k].to_vec(), basis)
    };
    // fix the sign so the largest-magnitude entry of each component is positive
    for mut col in basis.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    let projected = &centred * &basis;
    Ok(Pca { mean, basis, explained_variance, projected })
}
