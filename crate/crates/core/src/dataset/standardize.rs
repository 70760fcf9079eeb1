use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::{Error, Result};

/// Lower bound applied to column standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Column-wise z-scoring fitted on one set of rows and reusable on others.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Array1<f64>,
    pub stds: Array1<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation per column.
    pub fn fit(rows: ArrayView2<f64>) -> Result<Self> {
        let n = rows.nrows();
        if n < 2 {
            return Err(Error::argument(format!(
                "standardizer needs at least 2 rows, got {n}"
            )));
        }
        let means = rows.mean_axis(Axis(0)).expect("non-empty");
        let mut stds = Array1::zeros(rows.ncols());
        for (j, col) in rows.columns().into_iter().enumerate() {
            let m = means[j];
            let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            stds[j] = var.sqrt().max(STD_FLOOR);
        }
        Ok(Standardizer { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    fn check(&self, rows: &ArrayView2<f64>) -> Result<()> {
        if rows.ncols() != self.dim() {
            return Err(Error::argument(format!(
                "standardizer fitted on {} columns, got {}",
                self.dim(),
                rows.ncols()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&rows)?;
        let mut out = rows.to_owned();
        out -= &self.means;
        out /= &self.stds;
        Ok(out)
    }

    pub fn invert(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&rows)?;
        let mut out = rows.to_owned();
        out *= &self.stds;
        out += &self.means;
        Ok(out)
    }
}
