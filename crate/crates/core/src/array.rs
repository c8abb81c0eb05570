//! Dense row-major `f64` matrices and the handful of kernels the tape needs.

use crate::error::{Error, Result};

/// Dense matrix with row-major storage. All parameters, activations and
/// adjoints in this crate are held in this type.
#[derive(Debug, Clone, PartialEq)]
pub struct Array2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Array2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Array2D {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Array2D {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                detail: format!("{} values for a {rows}x{cols} matrix", data.len()),
            });
        }
        Ok(Array2D { rows, cols, data })
    }

    /// 1 x n row vector.
    pub fn row_vector(values: &[f64]) -> Self {
        Array2D {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    /// n x 1 column vector.
    pub fn column(values: &[f64]) -> Self {
        Array2D {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Array2D {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Value of a 1x1 matrix.
    pub fn scalar_value(&self) -> Result<f64> {
        if self.rows * self.cols != 1 {
            return Err(Error::ShapeMismatch {
                op: "scalar_value",
                detail: format!("matrix is {}x{}", self.rows, self.cols),
            });
        }
        Ok(self.data[0])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array2D {
        Array2D {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Squared Frobenius norm.
    pub fn sum_of_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        for x in &mut self.data {
            *x *= factor;
        }
    }

    /// self += factor * other. Shapes must match.
    pub fn axpy_in_place(&mut self, factor: f64, other: &Array2D) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op: "axpy",
                detail: format!("{:?} vs {:?}", self.shape(), other.shape()),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }
}

/// c = a @ b for a: m x k, b: k x n.
pub fn matmul(a: &Array2D, b: &Array2D) -> Result<Array2D> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            detail: format!("{}x{} @ {}x{}", a.rows, a.cols, b.rows, b.cols),
        });
    }
    let mut c = Array2D::zeros(a.rows, b.cols);
    let n = b.cols;
    for i in 0..a.rows {
        let a_row = a.row(i);
        let c_row = c.row_mut(i);
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * n..(k + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aik * bv;
            }
        }
    }
    Ok(c)
}

/// out = a^T @ g for a: m x k, g: m x n, out: k x n. Used for weight adjoints.
pub fn matmul_at_b(a: &Array2D, g: &Array2D) -> Result<Array2D> {
    if a.rows != g.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul_at_b",
            detail: format!("{}x{} vs {}x{}", a.rows, a.cols, g.rows, g.cols),
        });
    }
    let mut out = Array2D::zeros(a.cols, g.cols);
    let n = g.cols;
    for i in 0..a.rows {
        let a_row = a.row(i);
        let g_row = g.row(i);
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let out_row = &mut out.data[k * n..(k + 1) * n];
            for (ov, &gv) in out_row.iter_mut().zip(g_row) {
                *ov += aik * gv;
            }
        }
    }
    Ok(out)
}

/// out = g @ b^T for g: m x n, b: k x n, out: m x k. Used for input adjoints.
pub fn matmul_a_bt(g: &Array2D, b: &Array2D) -> Result<Array2D> {
    if g.cols != b.cols {
        return Err(Error::ShapeMismatch {
            op: "matmul_a_bt",
            detail: format!("{}x{} vs {}x{}", g.rows, g.cols, b.rows, b.cols),
        });
    }
    let mut out = Array2D::zeros(g.rows, b.rows);
    for i in 0..g.rows {
        let g_row = g.row(i);
        let out_row = out.row_mut(i);
        for (k, ov) in out_row.iter_mut().enumerate() {
            let b_row = b.row(k);
            let mut acc = 0.0;
            for (&gv, &bv) in g_row.iter().zip(b_row) {
                acc += gv * bv;
            }
            *ov += acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Array2D::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Array2D::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.as_slice(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_transposed_variants_agree() {
        let a = Array2D::from_vec(3, 2, vec![1.0, -2.0, 0.5, 4.0, -1.0, 2.0]).unwrap();
        let g = Array2D::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        // a^T @ g by definition
        let atb = matmul_at_b(&a, &g).unwrap();
        for k in 0..2 {
            for j in 0..4 {
                let mut expect = 0.0;
                for i in 0..3 {
                    expect += a.at(i, k) * g.at(i, j);
                }
                assert!((atb.at(k, j) - expect).abs() < 1e-12);
            }
        }
        // g @ a^T by definition (g: 3x4 won't fit; use fresh shapes)
        let b = Array2D::from_vec(5, 4, (0..20).map(|i| (i as f64).sin()).collect()).unwrap();
        let abt = matmul_a_bt(&g, &b).unwrap();
        for i in 0..3 {
            for k in 0..5 {
                let mut expect = 0.0;
                for j in 0..4 {
                    expect += g.at(i, j) * b.at(k, j);
                }
                assert!((abt.at(i, k) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let a = Array2D::zeros(2, 3);
        let b = Array2D::zeros(2, 3);
        assert!(matmul(&a, &b).is_err());
        assert!(Array2D::from_vec(2, 2, vec![1.0]).is_err());
    }
}
