//! Jacobi-based dense factorizations.
//!
//! * [`svd`]: one-sided (Hestenes) Jacobi on the orientation with fewer
//!   columns.
//! * [`sym_eig`]: cyclic two-sided Jacobi on the symmetrized input.
//! * [`qr_orthonormalize`]: modified Gram-Schmidt with one re-orthogonalization
//!   pass.
//! * [`cholesky`]: lower-triangular factor of an SPD matrix.
//!
//! Orthonormal factors follow one column-sign convention: the entry of largest
//! magnitude in each column is made nonnegative (first such entry on ties).
//! For the SVD the convention is applied to the right singular vectors and the
//! matching left vectors are flipped with them.

use super::DenseMatrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 60;

#[derive(Clone, Debug)]
pub struct SvdTriple {
    /// `n x r`, orthonormal columns.
    pub u: DenseMatrix,
    /// Length `r`, nonnegative, descending.
    pub s: Vec<f64>,
    /// `m x r`, orthonormal columns.
    pub v: DenseMatrix,
}

impl SvdTriple {
    /// `u * diag(s) * v^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.s.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.v.t())
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    /// Orthogonal `d x d`; column `k` pairs with `values[k]`.
    pub vectors: DenseMatrix,
    /// Descending.
    pub values: Vec<f64>,
}

impl EigenPair {
    /// `vectors * diag(f(values)) * vectors^T`, a spectral matrix function.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let q = &self.vectors;
        let mut scaled = q.clone();
        for i in 0..q.rows() {
            for (j, &lambda) in self.values.iter().enumerate() {
                scaled[(i, j)] *= f(lambda);
            }
        }
        scaled.matmul(&q.t())
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.apply(|x| x)
    }
}

fn check_finite(a: &DenseMatrix) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput("non-finite entry".into()))
    }
}

/// Flip `col` so its largest-magnitude entry is nonnegative; returns whether it flipped.
fn canonical_sign(col: &mut [f64]) -> bool {
    let mut best = 0;
    for (k, v) in col.iter().enumerate() {
        if v.abs() > col[best].abs() {
            best = k;
        }
    }
    if col[best] < 0.0 {
        col.iter_mut().for_each(|v| *v = -*v);
        true
    } else {
        false
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn project_out(e: &mut [f64], basis: &[&Vec<f64>]) {
    for _ in 0..2 {
        for c in basis {
            let p = dot(e, c);
            e.iter_mut().zip(c.iter()).for_each(|(x, y)| *x -= p * y);
        }
    }
}

/// Fill `cols[k]` for every `k` in `missing` with unit vectors orthogonal to all
/// other columns. Each one is the standard basis vector with the largest residual
/// after projection, which is at least `1/sqrt(n)` when `cols` fits in `n` dims.
fn complete_orthonormal(cols: &mut [Vec<f64>], missing: &[usize]) {
    let n = cols.first().map_or(0, Vec::len);
    let mut filled: Vec<bool> = (0..cols.len()).map(|k| !missing.contains(&k)).collect();
    for &k in missing {
        let basis: Vec<&Vec<f64>> = cols
            .iter()
            .zip(&filled)
            .filter(|(_, &f)| f)
            .map(|(c, _)| c)
            .collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            project_out(&mut e, &basis);
            let nrm = norm(&e);
            if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
                best = Some((nrm, e));
            }
        }
        let (nrm, mut e) = best.expect("n >= 1");
        assert!(nrm > 0.0, "cannot complete orthonormal basis");
        e.iter_mut().for_each(|x| *x /= nrm);
        cols[k] = e;
        filled[k] = true;
    }
}

/// Thin singular value decomposition `a = u diag(s) v^T` with `r = min(n, m)`.
pub fn svd(a: &DenseMatrix) -> Result<SvdTriple> {
    check_finite(a)?;
    if a.rows() >= a.cols() {
        let (u, s, v) = one_sided_jacobi(a);
        Ok(SvdTriple { u, s, v })
    } else {
        let (u, s, v) = one_sided_jacobi(&a.t());
        Ok(SvdTriple { u: v, s, v: u })
    }
}

/// Hestenes Jacobi for `n >= m`; returns `(u n x m, s, v m x m)` sorted and sign-normalized.
fn one_sided_jacobi(a: &DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let (n, m) = a.shape();
    debug_assert!(n >= m);
    // column-major working copies
    let mut w: Vec<Vec<f64>> = (0..m).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();

    let tol = 1e-15;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = w.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    let mut u_cols: Vec<Vec<f64>> = order.iter().map(|&k| w[k].clone()).collect();
    let mut v_cols: Vec<Vec<f64>> = order.iter().map(|&k| v[k].clone()).collect();
    sigma = order.iter().map(|&k| sigma[k]).collect();

    let smax = sigma.first().copied().unwrap_or(0.0);
    let cutoff = smax * (n as f64) * f64::EPSILON;
    let mut missing = Vec::new();
    for k in 0..m {
        if sigma[k] > cutoff && sigma[k] > 0.0 {
            let s = sigma[k];
            u_cols[k].iter_mut().for_each(|x| *x /= s);
            // Small singular values leave their directions poorly orthogonalized;
            // re-orthogonalize against the larger ones (a no-op when well separated).
            let (done, rest) = u_cols.split_at_mut(k);
            let basis: Vec<&Vec<f64>> = done
                .iter()
                .enumerate()
                .filter(|(j, _)| !missing.contains(j))
                .map(|(_, c)| c)
                .collect();
            project_out(&mut rest[0], &basis);
            let nrm = norm(&rest[0]);
            if nrm > 0.5 {
                rest[0].iter_mut().for_each(|x| *x /= nrm);
            } else {
                missing.push(k);
            }
        } else {
            missing.push(k);
        }
    }
    if !missing.is_empty() {
        complete_orthonormal(&mut u_cols, &missing);
    }
    for k in 0..m {
        if canonical_sign(&mut v_cols[k]) {
            u_cols[k].iter_mut().for_each(|x| *x = -*x);
        }
    }

    let u = DenseMatrix::from_fn(n, m, |i, j| u_cols[j][i]);
    let vm = DenseMatrix::from_fn(m, m, |i, j| v_cols[j][i]);
    (u, sigma, vm)
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Eigendecomposition of a symmetric matrix (input symmetrized as `(a + a^T)/2`).
pub fn sym_eig(a: &DenseMatrix) -> Result<EigenPair> {
    if !a.is_square() {
        return Err(Error::shape(format!(
            "sym_eig needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    check_finite(a)?;
    let n = a.rows();
    let mut s = a.symmetrized();
    let mut q = DenseMatrix::identity(n);
    let total = s.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[(i, j)] * s[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = s[(p, r)];
                if apr == 0.0 || apr.abs() < 1e-300 {
                    continue;
                }
                let theta = (s[(r, r)] - s[(p, p)]) / (2.0 * apr);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                // S <- J^T S J with J acting on (p, r)
                for k in 0..n {
                    let skp = s[(k, p)];
                    let skr = s[(k, r)];
                    s[(k, p)] = c * skp - sn * skr;
                    s[(k, r)] = sn * skp + c * skr;
                }
                for k in 0..n {
                    let spk = s[(p, k)];
                    let srk = s[(r, k)];
                    s[(p, k)] = c * spk - sn * srk;
                    s[(r, k)] = sn * spk + c * srk;
                }
                s[(p, r)] = 0.0;
                s[(r, p)] = 0.0;
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = c * qkp - sn * qkr;
                    q[(k, r)] = sn * qkp + c * qkr;
                }
            }
        }
    }

    let diag = s.diag();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&k| diag[k]).collect();
    let mut cols: Vec<Vec<f64>> = order.iter().map(|&k| q.col(k)).collect();
    for c in &mut cols {
        canonical_sign(c);
    }
    let vectors = DenseMatrix::from_fn(n, n, |i, j| cols[j][i]);
    Ok(EigenPair { vectors, values })
}

/// Orthonormal basis for the column space of a full-column-rank matrix.
///
/// Fails with [`Error::DegenerateBasis`] when a column's residual after
/// orthogonalization falls to `1e-12 * ||a||_F` or below.
pub fn qr_orthonormalize(a: &DenseMatrix) -> Result<DenseMatrix> {
    check_finite(a)?;
    let (n, m) = a.shape();
    if m > n {
        return Err(Error::shape(format!(
            "qr_orthonormalize needs rows >= cols, got {n}x{m}"
        )));
    }
    let tol = 1e-12 * a.frobenius_norm();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    for j in 0..m {
        let mut c = a.col(j);
        for _ in 0..2 {
            for prev in &cols {
                let p = dot(&c, prev);
                c.iter_mut().zip(prev).for_each(|(x, y)| *x -= p * y);
            }
        }
        let nrm = norm(&c);
        if !(nrm > tol) {
            return Err(Error::DegenerateBasis { column: j });
        }
        c.iter_mut().for_each(|x| *x /= nrm);
        cols.push(c);
    }
    for c in &mut cols {
        canonical_sign(c);
    }
    Ok(DenseMatrix::from_fn(n, m, |i, j| cols[j][i]))
}

/// Lower-triangular `c` with `c c^T = a`.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::shape(format!(
            "cholesky needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    check_finite(a)?;
    let n = a.rows();
    let floor = 1e-12 * a.frobenius_norm();
    let mut c = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= c[(j, k)] * c[(j, k)];
        }
        if !(d > floor) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        c[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= c[(i, k)] * c[(j, k)];
            }
            c[(i, j)] = s / d;
        }
    }
    Ok(c)
}

/// Kronecker product; with row-major `vec`, `(a ⊗ b) vec(x) = vec(a x b^T)`.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DenseMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rng_gaussian, Rng};

    fn orth_defect(q: &DenseMatrix) -> f64 {
        q.gram_cols()
            .sub(&DenseMatrix::identity(q.cols()))
            .frobenius_norm()
    }

    fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.sub(b).frobenius_norm() / b.frobenius_norm().max(1e-300)
    }

    #[test]
    fn svd_identity() {
        let s = svd(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(s.s, vec![1.0, 1.0, 1.0]);
        assert_eq!(s.u, DenseMatrix::identity(3));
        assert_eq!(s.v, DenseMatrix::identity(3));
    }

    #[test]
    fn svd_diagonal_sorted() {
        let s = svd(&DenseMatrix::from_diag(&[3.0, 4.0])).unwrap();
        assert_eq!(s.s, vec![4.0, 3.0]);
        let neg = svd(&DenseMatrix::from_diag(&[-3.0, 0.5])).unwrap();
        assert_eq!(neg.s, vec![3.0, 0.5]);
    }

    #[test]
    fn svd_random_rectangular() {
        let mut rng = Rng::new(11);
        for &(n, m) in &[(5, 3), (3, 5), (1, 4), (4, 1), (12, 12)] {
            let a = rng_gaussian(&mut rng, n, m);
            let t = svd(&a).unwrap();
            assert!(rel(&t.reconstruct(), &a) <= 1e-9);
            assert!(orth_defect(&t.u) <= 1e-10);
            assert!(orth_defect(&t.v) <= 1e-10);
            assert!(t.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn svd_rank_deficient_and_zero() {
        let u = DenseMatrix::column(&[1.0, 2.0, -1.0, 0.5]);
        let v = DenseMatrix::column(&[0.3, -1.0, 2.0]);
        let a = u.matmul(&v.t());
        let t = svd(&a).unwrap();
        assert!(rel(&t.reconstruct(), &a) <= 1e-9);
        assert!(orth_defect(&t.u) <= 1e-10);
        assert!(t.s[1] <= 1e-12 * t.s[0]);

        let z = svd(&DenseMatrix::zeros(3, 2)).unwrap();
        assert_eq!(z.s, vec![0.0, 0.0]);
        assert!(orth_defect(&z.u) <= 1e-12);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut a = DenseMatrix::identity(2);
        a[(0, 1)] = f64::INFINITY;
        assert!(matches!(svd(&a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sym_eig_diagonal() {
        let e = sym_eig(&DenseMatrix::from_diag(&[5.0, 2.0, 9.0])).unwrap();
        assert_eq!(e.values, vec![9.0, 5.0, 2.0]);
        let expect =
            DenseMatrix::from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        assert_eq!(e.vectors, expect);
    }

    #[test]
    fn sym_eig_of_gram() {
        let g = DenseMatrix::from_diag(&[1.0, 2.0]);
        let e = sym_eig(&g.gram_rows()).unwrap();
        assert_eq!(e.values, vec![4.0, 1.0]);
    }

    #[test]
    fn sym_eig_random_symmetric() {
        let mut rng = Rng::new(5);
        let b = rng_gaussian(&mut rng, 9, 9);
        let a = b.add(&b.t());
        let e = sym_eig(&a).unwrap();
        assert!(rel(&e.reconstruct(), &a) <= 1e-9);
        assert!(orth_defect(&e.vectors) <= 1e-10);
    }

    #[test]
    fn sym_eig_rejects_non_square() {
        assert!(matches!(
            sym_eig(&DenseMatrix::zeros(2, 3)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn qr_cases() {
        let q = qr_orthonormalize(&DenseMatrix::from_diag(&[2.0, 3.0])).unwrap();
        assert_eq!(q, DenseMatrix::identity(2));

        let mut rng = Rng::new(3);
        let a = rng_gaussian(&mut rng, 6, 6);
        let q = qr_orthonormalize(&a).unwrap();
        assert!(orth_defect(&q) <= 1e-10);
        // fixed point up to column signs, which the convention pins
        let q2 = qr_orthonormalize(&q).unwrap();
        assert!(q2.max_abs_diff(&q) <= 1e-12);

        let dep = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0], &[0.0, 0.0]]);
        assert!(matches!(
            qr_orthonormalize(&dep),
            Err(Error::DegenerateBasis { column: 1 })
        ));
    }

    #[test]
    fn cholesky_cases() {
        assert_eq!(
            cholesky(&DenseMatrix::identity(3)).unwrap(),
            DenseMatrix::identity(3)
        );
        let c = cholesky(&DenseMatrix::from_diag(&[4.0, 9.0])).unwrap();
        assert_eq!(c, DenseMatrix::from_diag(&[2.0, 3.0]));

        let mut rng = Rng::new(8);
        let b = rng_gaussian(&mut rng, 9, 9);
        let a = b.gram_cols().add(&DenseMatrix::identity(9));
        let c = cholesky(&a).unwrap();
        assert!(rel(&c.gram_rows(), &a) <= 1e-9);
        for i in 0..9 {
            for j in (i + 1)..9 {
                assert_eq!(c[(i, j)], 0.0);
            }
        }
        let indef = DenseMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(
            cholesky(&indef),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn kron_cases() {
        assert_eq!(
            kron(&DenseMatrix::identity(2), &DenseMatrix::identity(3)),
            DenseMatrix::identity(6)
        );
        let mut rng = Rng::new(1);
        let b = rng_gaussian(&mut rng, 3, 3);
        assert_eq!(kron(&DenseMatrix::from_rows(&[&[2.0]]), &b), b.scale(2.0));

        let a = rng_gaussian(&mut rng, 2, 2);
        let x = rng_gaussian(&mut rng, 2, 3);
        let lhs = kron(&a, &b).matmul(&DenseMatrix::column(x.data()));
        let rhs = a.matmul(&x).matmul(&b.t());
        let bound = 1e-12 * a.frobenius_norm() * b.frobenius_norm() * x.frobenius_norm();
        let diff = lhs
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= bound);
    }
}
