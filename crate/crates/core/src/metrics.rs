//! Prediction accuracy of the feature mapping.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Samples whose target energy falls below this are left out of the NMSE.
pub const NMSE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nmse {
    pub value: f64,
    pub used: usize,
    pub excluded: usize,
}

/// Mean over samples of `||pred - act||^2 / ||act||^2`, one sample per row.
pub fn nmse(predicted: &Matrix, actual: &Matrix) -> Result<Nmse> {
    Error::check_dim(actual.rows(), predicted.rows())?;
    Error::check_dim(actual.cols(), predicted.cols())?;
    if actual.rows() == 0 {
        return Err(Error::Empty("nmse sample set"));
    }
    let (mut sum, mut used) = (0.0, 0usize);
    for (p, a) in predicted.row_iter().zip(actual.row_iter()) {
        let energy: f64 = a.iter().map(|v| v * v).sum();
        if energy < NMSE_FLOOR {
            continue;
        }
        let err: f64 = p.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum();
        sum += err / energy;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Domain("every nmse target has zero energy".into()));
    }
    let value = sum / used as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite("nmse"));
    }
    Ok(Nmse { value, used, excluded: actual.rows() - used })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn hand_cases() {
        let a = m(&[[0.3, -1.0], [2.0, 0.5]]);
        assert_eq!(nmse(&a, &a).unwrap().value, 0.0);
        let doubled = a.map(|v| 2.0 * v);
        assert!((nmse(&doubled, &a).unwrap().value - 1.0).abs() < 1e-15);
        assert_eq!(nmse(&m(&[[1.0, 0.0]]), &m(&[[0.0, 1.0]])).unwrap().value, 2.0);
    }

    #[test]
    fn zero_targets_are_excluded() {
        let r = nmse(&m(&[[1.0, 0.0], [5.0, 5.0]]), &m(&[[0.0, 1.0], [0.0, 0.0]])).unwrap();
        assert_eq!((r.value, r.used, r.excluded), (2.0, 1, 1));
        assert!(nmse(&m(&[[1.0, 1.0]]), &m(&[[0.0, 0.0]])).is_err());
        assert!(nmse(&Matrix::zeros(0, 2), &Matrix::zeros(0, 2)).is_err());
    }
}
