use super::AlignmentRow;
use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// `n × F` features from convolving the previous alignment with `F` filters.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationFeatures<S>(pub Matrix<S>);

fn check_filters<S: Scalar>(filters: &Matrix<S>) -> Result<()> {
    if filters.cols() % 2 == 0 {
        return Err(Error::InvalidInput(format!(
            "location filter width must be odd, got {}",
            filters.cols()
        )));
    }
    Ok(())
}

/// Same-padded 1-D correlation: `f[j][c] = Σ_k w[c][k] · α'[j + k − W/2]`.
pub fn location_features<S: Scalar>(
    prev: &AlignmentRow<S>,
    filters: &Matrix<S>,
) -> Result<LocationFeatures<S>> {
    check_filters(filters)?;
    let n = prev.len();
    let width = filters.cols();
    let half = width / 2;
    let a = prev.weights();
    let mut out = Matrix::zeros(n, filters.rows());
    for j in 0..n {
        for c in 0..filters.rows() {
            let w = filters.row(c);
            let mut acc = S::zero();
            for (k, &wk) in w.iter().enumerate() {
                let pos = j + k;
                if pos >= half && pos - half < n {
                    acc += wk * a[pos - half];
                }
            }
            out.set(j, c, acc);
        }
    }
    Ok(LocationFeatures(out))
}

/// Returns `(d prev, d filters)`.
pub fn location_features_adjoint<S: Scalar>(
    prev: &AlignmentRow<S>,
    filters: &Matrix<S>,
    grad_features: &Matrix<S>,
) -> Result<(Vec<S>, Matrix<S>)> {
    check_filters(filters)?;
    let n = prev.len();
    check_len("location gradient rows", n, grad_features.rows())?;
    check_len("location gradient channels", filters.rows(), grad_features.cols())?;
    let half = filters.cols() / 2;
    let a = prev.weights();
    let mut d_prev = vec![S::zero(); n];
    let mut d_filters = Matrix::zeros(filters.rows(), filters.cols());
    for j in 0..n {
        for c in 0..filters.rows() {
            let g = grad_features.get(j, c);
            if g == S::zero() {
                continue;
            }
            for k in 0..filters.cols() {
                let pos = j + k;
                if pos >= half && pos - half < n {
                    let src = pos - half;
                    d_prev[src] += g * filters.get(c, k);
                    let cur = d_filters.get(c, k);
                    d_filters.set(c, k, cur + g * a[src]);
                }
            }
        }
    }
    Ok((d_prev, d_filters))
}
