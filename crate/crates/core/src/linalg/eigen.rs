//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use super::Matrix;
use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenpairs of a symmetric matrix.
///
/// `values` is sorted non-increasing and column `i` of `vectors` belongs to
/// `values[i]`. Each eigenvector has its largest-magnitude component positive
/// (the lowest index wins a tie).
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Matrix,
    pub sweeps: usize,
}

/// Eigendecomposition of a symmetric matrix `S = V Λ Vᵀ`.
pub fn sym_eig(s: &Matrix) -> Result<SymEig> {
    let n = s.rows();
    if !s.is_square() {
        return Err(Error::validation(format!(
            "sym_eig needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    if !s.is_finite() {
        return Err(Error::validation("sym_eig input has non-finite entries"));
    }
    let scale = s.max_abs();
    for i in 0..n {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::validation(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    s[(i, j)],
                    s[(j, i)]
                )));
            }
        }
    }
    if n == 0 {
        return Ok(SymEig {
            values: vec![],
            vectors: Matrix::zeros(0, 0),
            sweeps: 0,
        });
    }

    // Work on the symmetrized copy; `vt` holds eigenvectors as rows so the
    // rotation updates touch contiguous memory.
    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let mut vt = Matrix::identity(n);
    let target = OFF_TOL * a.frobenius();

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a);
        if off <= target {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numerical(format!(
                "Jacobi did not converge in {MAX_SWEEPS} sweeps (off-diagonal norm {off:.3e})"
            )));
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut a, &mut vt, p, q);
            }
        }
    }

    let diag = a.diag();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps lower original index first on exact ties.
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));

    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut v = vt.row(i).to_vec();
        normalize_sign(&mut v);
        vectors.set_col(k, &v);
    }
    Ok(SymEig {
        values,
        vectors,
        sweeps,
    })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for (j, v) in a.row(i).iter().enumerate() {
            if i != j {
                acc += v * v;
            }
        }
    }
    acc.sqrt()
}

/// Annihilate `a[p][q]` with a plane rotation, accumulating into `vt`.
fn rotate(a: &mut Matrix, vt: &mut Matrix, p: usize, q: usize) {
    let n = a.rows();
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.is_finite() {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    } else {
        // |theta| overflowed: the rotation is negligible.
        0.5 / theta
    };
    if t == 0.0 {
        a[(p, q)] = 0.0;
        a[(q, p)] = 0.0;
        return;
    }
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let data = a.as_mut_slice();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = data[k * n + p];
        let akq = data[k * n + q];
        let new_p = c * akp - s * akq;
        let new_q = s * akp + c * akq;
        data[k * n + p] = new_p;
        data[p * n + k] = new_p;
        data[k * n + q] = new_q;
        data[q * n + k] = new_q;
    }
    data[p * n + p] = app - t * apq;
    data[q * n + q] = aqq + t * apq;
    data[p * n + q] = 0.0;
    data[q * n + p] = 0.0;

    let v = vt.as_mut_slice();
    let (head, tail) = v.split_at_mut(q * n);
    let vp = &mut head[p * n..(p + 1) * n];
    let vq = &mut tail[..n];
    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Flip `v` so its largest-magnitude entry is positive; the first index wins ties.
pub(crate) fn normalize_sign(v: &mut [f64]) -> bool {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        a.add(&a.transpose()).unwrap()
    }

    fn check_invariants(s: &Matrix, e: &SymEig) {
        let n = s.rows();
        for w in e.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let vtv = e.vectors.transpose().matmul(&e.vectors).unwrap();
        let orth = vtv.sub(&Matrix::identity(n)).unwrap().max_abs();
        assert!(orth <= 1e-10, "orthonormality error {orth}");
        let sv = s.matmul(&e.vectors).unwrap();
        let vl = e.vectors.matmul(&Matrix::from_diag(&e.values)).unwrap();
        let res = sv.sub(&vl).unwrap().max_abs();
        assert!(res <= 1e-8 * s.max_abs(), "residual {res}");
    }

    #[test]
    fn identity() {
        let e = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        assert_eq!(e.vectors, Matrix::identity(3));
    }

    #[test]
    fn correlated_pair() {
        let s = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        let e = sym_eig(&s).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-15);
        assert!(e.values[1].abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[(0, 0)] - h).abs() < 1e-15);
        assert!((e.vectors[(1, 0)] - h).abs() < 1e-15);
    }

    #[test]
    fn diagonal_reordered() {
        let e = sym_eig(&Matrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vectors.col(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(e.vectors.col(1), vec![0.0, 0.0, 1.0]);
        assert_eq!(e.vectors.col(2), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            sym_eig(&Matrix::zeros(2, 3)),
            Err(Error::Validation(_))
        ));
        let s = Matrix::from_rows(&[[1.0, 2.0], [2.1, 1.0]]);
        assert!(matches!(sym_eig(&s), Err(Error::Validation(_))));
    }

    #[test]
    fn random_invariants() {
        for (n, seed) in [(1, 1), (2, 2), (5, 3), (17, 4), (40, 5)] {
            let s = random_symmetric(n, seed);
            let e = sym_eig(&s).unwrap();
            check_invariants(&s, &e);
            let trace: f64 = s.diag().iter().sum();
            let sum: f64 = e.values.iter().sum();
            assert!((trace - sum).abs() < 1e-10 * (1.0 + trace.abs()));
        }
    }

    #[test]
    fn psd_spectrum_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = Matrix::from_fn(6, 12, |_, _| rng.gen_range(-1.0..1.0));
        let s = m.outer_gram().add(&m.outer_gram()).unwrap().scale(0.5);
        let rank_deficient = m.gram();
        for s in [s, rank_deficient] {
            let e = sym_eig(&s).unwrap();
            let trace: f64 = s.diag().iter().sum();
            assert!(e.values.iter().all(|&l| l >= -1e-10 * trace));
        }
    }

    #[test]
    fn deterministic() {
        let s = random_symmetric(12, 77);
        let a = sym_eig(&s).unwrap();
        let b = sym_eig(&s).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn sign_convention() {
        let s = random_symmetric(8, 3);
        let e = sym_eig(&s).unwrap();
        for k in 0..8 {
            let v = e.vectors.col(k);
            let big = v.iter().cloned().fold(0.0, |m: f64, x| m.max(x.abs()));
            let first = v.iter().position(|x| x.abs() == big).unwrap();
            assert!(v[first] > 0.0);
        }
    }
}
