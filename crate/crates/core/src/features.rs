//! Real-valued channel features and min-max normalization.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Columns whose training range is narrower than this map to 0.
pub const EPS_GUARD: f64 = 1e-12;

/// `[Re(h_0) .. Re(h_{L-1}), Im(h_0) .. Im(h_{L-1})]`.
pub fn complex_to_features(h: &[Complex64]) -> Vec<f64> {
    h.iter().map(|v| v.re).chain(h.iter().map(|v| v.im)).collect()
}

/// Per-dimension min-max statistics of a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub col_min: Vec<f64>,
    pub col_max: Vec<f64>,
    pub eps_guard: f64,
}

impl Normalizer {
    pub fn from_bounds(col_min: Vec<f64>, col_max: Vec<f64>) -> Result<Self> {
        Error::check_dim(col_min.len(), col_max.len())?;
        if col_min.iter().zip(&col_max).any(|(lo, hi)| !(hi >= lo)) {
            return Err(Error::Domain("normalizer column max below min".into()));
        }
        Ok(Self { col_min, col_max, eps_guard: EPS_GUARD })
    }

    pub fn dim(&self) -> usize {
        self.col_min.len()
    }

    /// Indices of columns that collapse to 0 under [`Normalizer::normalize`].
    pub fn degenerate_columns(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.col_max[j] - self.col_min[j] < self.eps_guard).collect()
    }

    pub fn normalize(&self, x_raw: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), x_raw.len())?;
        let mut out = x_raw.to_vec();
        self.normalize_in_place(&mut out);
        Ok(out)
    }

    /// Normalizes every row. Values outside the training range are not clamped.
    pub fn normalize_matrix(&self, raw: &Matrix) -> Result<Matrix> {
        Error::check_dim(self.dim(), raw.cols())?;
        let mut out = raw.clone();
        for i in 0..out.rows() {
            self.normalize_in_place(out.row_mut(i));
        }
        Ok(out)
    }

    fn normalize_in_place(&self, x: &mut [f64]) {
        for ((v, &lo), &hi) in x.iter_mut().zip(&self.col_min).zip(&self.col_max) {
            let range = hi - lo;
            *v = if range < self.eps_guard { 0.0 } else { (*v - lo) / range };
        }
    }
}

pub fn fit_normalizer(train: &Matrix) -> Result<Normalizer> {
    if train.rows() == 0 {
        return Err(Error::Empty("normalizer training set"));
    }
    let mut col_min = train.row(0).to_vec();
    let mut col_max = col_min.clone();
    for row in train.row_iter().skip(1) {
        for ((lo, hi), &v) in col_min.iter_mut().zip(col_max.iter_mut()).zip(row) {
            *lo = lo.min(v);
            *hi = hi.max(v);
        }
    }
    if col_min.iter().chain(&col_max).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("normalizer training set"));
    }
    Normalizer::from_bounds(col_min, col_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_real_then_imaginary() {
        let h = [Complex64::new(1.0, 2.0), Complex64::new(3.0, -1.0)];
        assert_eq!(complex_to_features(&h), [1.0, 3.0, 2.0, -1.0]);
        assert_eq!(complex_to_features(&[Complex64::new(0.0, 0.0); 3]), [0.0; 6]);
        assert_eq!(complex_to_features(&[Complex64::new(0.5, 0.5); 64]).len(), 128);
    }

    #[test]
    fn fit_and_normalize_column() {
        let train = Matrix::from_rows(&[[2.0], [4.0], [6.0]]).unwrap();
        let n = fit_normalizer(&train).unwrap();
        assert_eq!((n.col_min[0], n.col_max[0]), (2.0, 6.0));
        assert_eq!(n.normalize(&[4.0]).unwrap(), [0.5]);
        assert_eq!(n.normalize(&[2.0]).unwrap(), [0.0]);
        assert_eq!(n.normalize(&[6.0]).unwrap(), [1.0]);
        // test-time values are not clamped
        assert_eq!(n.normalize(&[8.0]).unwrap(), [1.5]);
        assert!(matches!(n.normalize(&[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn single_sample_and_constant_columns_are_degenerate() {
        let train = Matrix::from_rows(&[[3.0, 1.0]]).unwrap();
        let n = fit_normalizer(&train).unwrap();
        assert_eq!(n.col_min, n.col_max);
        assert_eq!(n.degenerate_columns(), [0, 1]);
        assert_eq!(n.normalize(&[3.0, 7.0]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        assert!(matches!(fit_normalizer(&Matrix::zeros(0, 4)), Err(Error::Empty(_))));
    }

    proptest! {
        #[test]
        fn training_set_lands_in_unit_cube(rows in proptest::collection::vec(
            proptest::collection::vec(-1e3f64..1e3, 5), 1..40)) {
            let m = Matrix::from_rows(&rows).unwrap();
            let n = fit_normalizer(&m).unwrap();
            let z = n.normalize_matrix(&m).unwrap();
            prop_assert!(z.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn normalize_preserves_order(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let n = Normalizer::from_bounds(alloc::vec![-3.0], alloc::vec![5.0]).unwrap();
            let (za, zb) = (n.normalize(&[a]).unwrap()[0], n.normalize(&[b]).unwrap()[0]);
            prop_assert_eq!(a < b, za < zb);
        }
    }
}
