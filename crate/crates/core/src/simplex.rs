//! Euclidean projection onto the probability simplex.

use crate::error::{Error, Result};

/// Projects `y` onto the probability simplex in the Euclidean norm.
///
/// Sort-based threshold method: with u the entries of `y` sorted in
/// decreasing order, the projection equals `(y + lambda)_+` where
/// `lambda = (1 - sum_{i<=j} u_i) / j` for the largest prefix length j whose
/// candidate keeps `u_j + lambda > 0`. O(n log n), deterministic.
pub fn project_simplex(y: &[f64]) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(Error::Dimension("project_simplex needs length >= 1".into()));
    }
    if y.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("project_simplex input".into()));
    }
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("entries are finite"));
    let mut cumsum = 0.0;
    let mut lambda = 1.0 - u[0];
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let cand = (1.0 - cumsum) / (i as f64 + 1.0);
        if ui + cand > 0.0 {
            lambda = cand;
        } else {
            break;
        }
    }
    Ok(y.iter().map(|&x| (x + lambda).max(0.0)).collect())
}
