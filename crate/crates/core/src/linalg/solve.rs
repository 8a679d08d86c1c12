use super::matrix::norm_inf;
use super::Matrix;
use crate::{Error, Result};

/// Condition estimates above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// LU factorization with partial pivoting, `PA = LU`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::validation(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (piv, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax == 0.0 {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                });
            }
            if piv != k {
                perm.swap(piv, k);
                let data = lu.as_mut_slice();
                for j in 0..n {
                    data.swap(k * n + j, piv * n + j);
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        let v = lu[(k, j)];
                        lu[(i, j)] -= f * v;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = (0..i).map(|j| row[j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = (i + 1..n).map(|j| row[j] * x[j]).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solve `Aᵀx = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        let mut y = b.to_vec();
        // Uᵀ w = b
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(j, i)] * y[j]).sum();
            y[i] = (y[i] - s) / self.lu[(i, i)];
        }
        // Lᵀ v = w
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[(j, i)] * y[j]).sum();
            y[i] -= s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Hager's estimate of `‖A⁻¹‖₁`.
    pub fn inverse_norm_one_estimate(&self) -> f64 {
        let n = self.lu.rows();
        if n == 0 {
            return 0.0;
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            let new_est: f64 = y.iter().map(|v| v.abs()).sum();
            let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, -1.0), |b, (i, v)| if v.abs() > b.1 { (i, v.abs()) } else { b });
            let zx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if new_est <= est || zmax <= zx {
                est = est.max(new_est);
                break;
            }
            est = new_est;
            x = vec![0.0; n];
            x[j] = 1.0;
        }
        est
    }
}

/// Solve `Ax = b` by LU with partial pivoting.
///
/// Fails with [`Error::Singular`] when a zero pivot appears or the 1-norm
/// condition estimate exceeds [`MAX_CONDITION`].
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::validation(format!(
            "right-hand side has length {}, matrix is {}x{}",
            b.len(),
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("solve_linear input has non-finite entries"));
    }
    let lu = Lu::factor(a)?;
    let condition = a.norm_one() * lu.inverse_norm_one_estimate();
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    let mut x = lu.solve(b);
    // One step of iterative refinement.
    let ax = a.matvec(&x)?;
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
    if norm_inf(&r) > 0.0 {
        let dx = lu.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
    }
    Ok(x)
}
