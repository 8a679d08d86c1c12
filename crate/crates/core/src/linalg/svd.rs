//! Thin SVD through the eigendecomposition of the smaller Gram matrix.
//!
//! For an `N×d` matrix `M` the Gram matrix is `MᵀM` when `N ≥ d` and `MMᵀ`
//! otherwise, so the eigenproblem size is `min(N, d)`. Singular vectors on the
//! other side are recovered as `Mv/σ` (or `Mᵀu/σ`) and re-orthonormalized.

use super::eigen::{normalize_sign, sym_eig};
use super::matrix::{axpy, dot, norm2};
use super::Matrix;
use crate::{Error, Result};

/// Relative cutoff below which a singular value is treated as zero.
pub const RANK_TOL: f64 = 1e-12;

/// `M = U diag(σ) Vᵀ` with `r = min(N, d)` columns on each side.
///
/// Right singular vectors follow the eigenvector sign convention (largest
/// component positive); the left vectors carry the matching sign.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
    /// Number of singular values above `RANK_TOL · σ_max`.
    pub rank: usize,
}

impl ThinSvd {
    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.singular_values.len()
    }
}

pub fn thin_svd(m: &Matrix) -> Result<ThinSvd> {
    let (n, d) = m.shape();
    if n == 0 || d == 0 {
        return Err(Error::validation("thin_svd of an empty matrix"));
    }
    if !m.is_finite() {
        return Err(Error::validation("thin_svd input has non-finite entries"));
    }
    let tall = n >= d;
    let r = n.min(d);

    // `basis` are the eigenvectors of the Gram matrix (orthonormal, r of them);
    // `mapped` are M·basis (or Mᵀ·basis) whose norms are the singular values.
    let (gram, op) = if tall {
        (m.gram(), m.clone())
    } else {
        (m.outer_gram(), m.transpose())
    };
    let eig = sym_eig(&gram)?;
    let basis = eig.vectors;
    let mapped = op.matmul(&basis)?;

    let mut sigma: Vec<f64> = (0..r).map(|k| norm2(&mapped.col(k))).collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    sigma = order.iter().map(|&k| sigma[k]).collect();

    let smax = sigma[0];
    let rank = if smax > 0.0 {
        sigma.iter().take_while(|&&s| s > RANK_TOL * smax).count()
    } else {
        0
    };

    // Columns of the "other" side, as rows for contiguous access.
    let other_dim = op.rows();
    let mut others: Vec<Vec<f64>> = Vec::with_capacity(r);
    for &k in order.iter().take(rank) {
        let s = norm2(&mapped.col(k));
        let mut col = mapped.col(k);
        col.iter_mut().for_each(|x| *x /= s);
        others.push(col);
    }
    reorthonormalize(&mut others);
    complete_basis(&mut others, other_dim, r);
    for s in sigma.iter_mut().skip(rank) {
        *s = 0.0;
    }

    let mut gram_side = Matrix::zeros(basis.rows(), r);
    let mut other_side = Matrix::zeros(other_dim, r);
    for (slot, &k) in order.iter().enumerate() {
        gram_side.set_col(slot, &basis.col(k));
        other_side.set_col(slot, &others[slot]);
    }

    let (mut u, mut v) = if tall {
        (other_side, gram_side)
    } else {
        (gram_side, other_side)
    };
    for k in 0..r {
        let mut vk = v.col(k);
        if normalize_sign(&mut vk) {
            v.set_col(k, &vk);
            let uk: Vec<f64> = u.col(k).iter().map(|x| -x).collect();
            u.set_col(k, &uk);
        }
    }
    Ok(ThinSvd {
        u,
        singular_values: sigma,
        v,
        rank,
    })
}

/// Two passes of modified Gram–Schmidt over `vecs` in order.
fn reorthonormalize(vecs: &mut [Vec<f64>]) {
    for _ in 0..2 {
        for i in 0..vecs.len() {
            let (done, rest) = vecs.split_at_mut(i);
            let v = &mut rest[0];
            for w in done.iter() {
                let c = dot(v, w);
                axpy(-c, w, v);
            }
            let nv = norm2(v);
            if nv > 0.0 {
                v.iter_mut().for_each(|x| *x /= nv);
            }
        }
    }
}

/// Extend an orthonormal set to `target` vectors with Gram–Schmidt on the
/// standard basis.
///
/// Residual energies of all candidates sum to `dim − k`, so rejecting below
/// `1/(2·dim)` never exhausts the candidates before `target` is reached.
fn complete_basis(vecs: &mut Vec<Vec<f64>>, dim: usize, target: usize) {
    let accept = (0.5 / dim as f64).sqrt();
    let mut candidate = 0;
    while vecs.len() < target && candidate < dim {
        let mut e = vec![0.0; dim];
        e[candidate] = 1.0;
        candidate += 1;
        for _ in 0..2 {
            for w in vecs.iter() {
                let c = dot(&e, w);
                axpy(-c, w, &mut e);
            }
        }
        let ne = norm2(&e);
        if ne > accept {
            e.iter_mut().for_each(|x| *x /= ne);
            vecs.push(e);
        }
    }
    debug_assert_eq!(vecs.len(), target);
}
