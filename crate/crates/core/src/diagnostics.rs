//! Weighted dual norms, nuclear rank and the spectral-coordinate identities
//! behind the matrix optimizers, used both as run diagnostics and as oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron, svd, sym_eig, DenseMatrix};
use crate::msign::msign_exact;

fn check_shapes(a: &DenseMatrix, b: &DenseMatrix, what: &str) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )))
    }
}

/// `sum_i gamma_i |s_i|`.
pub fn weighted_l1(s: &DenseMatrix, gamma: &DenseMatrix) -> Result<f64> {
    check_shapes(s, gamma, "weighted_l1")?;
    Ok(s.data()
        .iter()
        .zip(gamma.data())
        .map(|(si, gi)| gi * si.abs())
        .sum())
}

/// Weighted inner product `<S, X>_Gamma = sum Gamma ⊙ S ⊙ X`.
pub fn weighted_inner(s: &DenseMatrix, x: &DenseMatrix, gamma: &DenseMatrix) -> Result<f64> {
    check_shapes(s, x, "weighted_inner")?;
    check_shapes(s, gamma, "weighted_inner")?;
    Ok(s.data()
        .iter()
        .zip(x.data())
        .zip(gamma.data())
        .map(|((a, b), g)| a * b * g)
        .sum())
}

/// Sum of singular values.
pub fn nuclear_norm(s: &DenseMatrix) -> f64 {
    svd(s).map(|t| t.s.iter().sum()).unwrap_or(f64::NAN)
}

/// Nuclear norm of `Gamma ⊙ S`.
pub fn weighted_nuclear(s: &DenseMatrix, gamma: &DenseMatrix) -> Result<f64> {
    check_shapes(s, gamma, "weighted_nuclear")?;
    Ok(nuclear_norm(&gamma.hadamard(s)))
}

/// `||S||_*^2 / ||S||_F^2`, in `[1, min(n, m)]`.
pub fn nuclear_rank(s: &DenseMatrix) -> Result<f64> {
    let t = svd(s)?;
    let sum: f64 = t.s.iter().sum();
    let sq: f64 = t.s.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        return Err(Error::UndefinedForZero);
    }
    Ok(sum * sum / sq)
}

/// How the adaptive weights relate to the Hessian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// Coordinate-wise `gamma` over a flattened parameter.
    Vector,
    /// Spectral `Gamma` with the parameter's shape.
    Matrix,
}

/// Weighted Hessian norm `||H||_{1,Gamma}` for the current adaptive weights.
///
/// Vector kind: `sum_{i,j} gamma_ij^2 H_ii`, the `gamma^2`-weighted l1 norm of the
/// Hessian diagonal lifted to the parameter (the row-major Hessian of
/// `½ Tr(X^T H X)` is `H ⊗ I`). Matrix kind: `weighted_nuclear(H, Gamma)`, which
/// requires `Gamma` to have the shape of `H`.
pub fn h_weighted_norm(h: &DenseMatrix, gamma: &DenseMatrix, kind: WeightKind) -> Result<f64> {
    if !h.is_square() {
        return Err(Error::shape(format!(
            "Hessian must be square, got {:?}",
            h.shape()
        )));
    }
    match kind {
        WeightKind::Vector => {
            if gamma.rows() != h.rows() {
                return Err(Error::shape(format!(
                    "gamma has {} rows, Hessian is {}x{}",
                    gamma.rows(),
                    h.rows(),
                    h.cols()
                )));
            }
            Ok((0..gamma.rows())
                .map(|i| h[(i, i)] * gamma.row(i).iter().map(|g| g * g).sum::<f64>())
                .sum())
        }
        WeightKind::Matrix => weighted_nuclear(h, gamma),
    }
}

/// One diagnostic sample along a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormTrace {
    pub step: usize,
    pub h_weighted: f64,
    pub gamma_mean: f64,
    pub gamma_sq_mean: f64,
    /// Nuclear rank of the gradient; `None` for a zero gradient.
    pub nuclear_rank: Option<f64>,
}

/// Diagnostic entry from the Hessian, the current weights and the current gradient.
pub fn h_alignment_trace(
    step: usize,
    h: &DenseMatrix,
    gamma: &DenseMatrix,
    grad: &DenseMatrix,
    kind: WeightKind,
) -> Result<NormTrace> {
    let n = gamma.len() as f64;
    Ok(NormTrace {
        step,
        h_weighted: h_weighted_norm(h, gamma, kind)?,
        gamma_mean: gamma.sum() / n,
        gamma_sq_mean: gamma.data().iter().map(|g| g * g).sum::<f64>() / n,
        nuclear_rank: match nuclear_rank(grad) {
            Ok(v) => Some(v),
            Err(Error::UndefinedForZero) => None,
            Err(e) => return Err(e),
        },
    })
}

/// Largest problem the brute-force Kronecker oracle accepts.
pub const ORACLE_MAX_ENTRIES: usize = 64;

/// Relative eigenvalue cutoff treated as zero by the oracles.
const EIG_CUTOFF: f64 = 1e-12;

/// Eigenvalues below this fraction of the largest count as zero in [`eigen_row_norm_check`].
const RANK_CUTOFF: f64 = 1e-10;

fn sqrt_eigs(values: &[f64]) -> Vec<f64> {
    let top = values.iter().fold(0.0f64, |m, &v| m.max(v));
    values
        .iter()
        .map(|&v| if v > EIG_CUTOFF * top { v.sqrt() } else { 0.0 })
        .collect()
}

/// Both sides of the spectral coordinate-wise identity for one `G` and a fixed
/// positive matrix `expect` standing in for `E[sigma_i sigma_j]`.
#[derive(Clone, Debug)]
pub struct SpectralCoordinateReport {
    /// `E[(L⊗R)^{1/2}]^{-1/2} (L⊗R)^{1/4} vec(msign G)`, reshaped.
    pub brute_force: DenseMatrix,
    /// `Q_L (Ẽ^{-1/2} ⊙ msign(Q_L^T G Q_R)) Q_R^T`, `Ẽ = expect / (sigma_i sigma_j)`.
    pub coordinate: DenseMatrix,
    pub max_abs_deviation: f64,
}

/// Brute-force Kronecker update vs the coordinate-wise form.
///
/// `L = G G^T`, `R = G^T G` with eigenbases `Q_L`, `Q_R`; the expectation is
/// `(Q_L ⊗ Q_R) diag(vec expect) (Q_L ⊗ Q_R)^T`. Directions with `sigma = 0`
/// get weight 0 in the coordinate form and are annihilated by `(L⊗R)^{1/4}` in
/// the brute-force form.
pub fn spectral_coordinate_report(
    g: &DenseMatrix,
    expect: &DenseMatrix,
) -> Result<SpectralCoordinateReport> {
    check_shapes(g, expect, "spectral_coordinate_oracle")?;
    let (n, m) = g.shape();
    if n * m > ORACLE_MAX_ENTRIES {
        return Err(Error::InvalidInput(format!(
            "oracle limited to n*m <= {ORACLE_MAX_ENTRIES}, got {n}x{m}"
        )));
    }
    if expect.data().iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidInput(
            "expectation entries must be > 0".into(),
        ));
    }
    let l = g.gram_rows();
    let r = g.gram_cols();
    let el = sym_eig(&l)?;
    let er = sym_eig(&r)?;
    let (q_l, q_r) = (&el.vectors, &er.vectors);
    let q = kron(q_l, q_r);

    // E^{-1/2} through an explicit eigendecomposition of the synthesized expectation
    let p = q
        .matmul(&DenseMatrix::from_diag(expect.data()))
        .matmul(&q.t());
    let p_inv_sqrt = sym_eig(&p)?.apply(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
    let lr_quarter = sym_eig(&kron(&l, &r))?.apply(|v| v.max(0.0).powf(0.25));
    let vec_msign = DenseMatrix::column(msign_exact(g).data());
    let brute = p_inv_sqrt.matmul(&lr_quarter).matmul(&vec_msign);
    let brute_force = DenseMatrix::new(n, m, brute.into_data())?;

    let sig_l = sqrt_eigs(&el.values);
    let sig_r = sqrt_eigs(&er.values);
    let rotated = msign_exact(&q_l.t().matmul(g).matmul(q_r));
    let weights = DenseMatrix::from_fn(n, m, |i, j| {
        let s = sig_l[i] * sig_r[j];
        if s > 0.0 {
            (s / expect[(i, j)]).sqrt()
        } else {
            0.0
        }
    });
    let coordinate = q_l.matmul(&weights.hadamard(&rotated)).matmul(&q_r.t());
    let max_abs_deviation = brute_force.max_abs_diff(&coordinate);
    Ok(SpectralCoordinateReport {
        brute_force,
        coordinate,
        max_abs_deviation,
    })
}

/// Max abs deviation between the two forms of [`spectral_coordinate_report`].
pub fn spectral_coordinate_oracle(g: &DenseMatrix, expect: &DenseMatrix) -> Result<f64> {
    spectral_coordinate_report(g, expect).map(|r| r.max_abs_deviation)
}

/// Eigenvalues of `G G^T` / `G^T G` against the squared row / column norms of
/// `G' = Q_L^T G Q_R`. Returns the max deviation relative to each eigenvalue;
/// eigenvalues below `1e-10 lambda_max` (the null space of a rectangular `G`)
/// are compared against `lambda_max` instead.
pub fn eigen_row_norm_check(g: &DenseMatrix) -> Result<f64> {
    let el = sym_eig(&g.gram_rows())?;
    let er = sym_eig(&g.gram_cols())?;
    let rotated = el.vectors.t().matmul(g).matmul(&er.vectors);
    let rows: Vec<f64> = rotated.row_norms().iter().map(|v| v * v).collect();
    let cols: Vec<f64> = rotated.col_norms().iter().map(|v| v * v).collect();
    let top = el.values.first().copied().unwrap_or(0.0).max(0.0);
    if top == 0.0 {
        return Ok(rows.iter().chain(&cols).fold(0.0, |m, v| m.max(v.abs())));
    }
    // beyond the numerical rank only absolute agreement (relative to lambda_max) is meaningful
    let dev = |norms: &[f64], eigs: &[f64]| {
        norms
            .iter()
            .zip(eigs)
            .map(|(a, b)| {
                let denom = if *b > RANK_CUTOFF * top { *b } else { top };
                (a - b).abs() / denom
            })
            .fold(0.0f64, f64::max)
    };
    Ok(dev(&rows, &el.values).max(dev(&cols, &er.values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rng_gaussian, Rng};

    #[test]
    fn weighted_l1_examples() {
        let s = DenseMatrix::column(&[1.0, -2.0]);
        assert_eq!(
            weighted_l1(&s, &DenseMatrix::column(&[3.0, 0.5])).unwrap(),
            4.0
        );
        assert_eq!(
            weighted_l1(&s, &DenseMatrix::filled(2, 1, 1.0)).unwrap(),
            3.0
        );
        assert_eq!(weighted_l1(&DenseMatrix::zeros(2, 1), &s).unwrap(), 0.0);
        assert!(weighted_l1(&s, &DenseMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn weighted_nuclear_examples() {
        let u = DenseMatrix::column(&[1.0, 2.0, 2.0]);
        let v = DenseMatrix::column(&[3.0, 4.0]);
        let s = u.matmul(&v.t());
        let ones = DenseMatrix::filled(3, 2, 1.0);
        assert!((weighted_nuclear(&s, &ones).unwrap() - 15.0).abs() < 1e-12);

        let mut rng = Rng::new(3);
        let s = rng_gaussian(&mut rng, 9, 9);
        let gamma = rng_gaussian(&mut rng, 9, 9).map(|v| v.abs() + 0.1);
        let w = gamma.hadamard(&s);
        let gram_root: f64 = sym_eig(&w.gram_cols())
            .unwrap()
            .values
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .sum();
        assert!((weighted_nuclear(&s, &gamma).unwrap() - gram_root).abs() < 1e-8);
    }

    #[test]
    fn nuclear_rank_examples() {
        assert!((nuclear_rank(&DenseMatrix::identity(5)).unwrap() - 5.0).abs() < 1e-12);
        let r1 =
            DenseMatrix::column(&[1.0, 2.0]).matmul(&DenseMatrix::column(&[3.0, 1.0, 1.0]).t());
        assert!((nuclear_rank(&r1).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            nuclear_rank(&DenseMatrix::zeros(2, 2)),
            Err(Error::UndefinedForZero)
        ));
        let g = rng_gaussian(&mut Rng::new(8), 9, 9);
        let nr = nuclear_rank(&g).unwrap();
        assert!(nr > 1.0 && nr <= 9.0);
        assert!((nuclear_rank(&g.scale(-3.5)).unwrap() - nr).abs() < 1e-12);
    }

    #[test]
    fn h_norm_baselines() {
        let h = DenseMatrix::from_diag(&[1.0, 2.0, 3.0]);
        let ones = DenseMatrix::filled(3, 3, 1.0);
        assert!((h_weighted_norm(&h, &ones, WeightKind::Matrix).unwrap() - 6.0).abs() < 1e-12);
        assert_eq!(
            h_weighted_norm(&h, &ones, WeightKind::Vector).unwrap(),
            18.0
        );
        let col = DenseMatrix::filled(3, 1, 1.0);
        assert_eq!(h_weighted_norm(&h, &col, WeightKind::Vector).unwrap(), 6.0);
        assert!(h_weighted_norm(&h, &col, WeightKind::Matrix).is_err());
        assert!(h_weighted_norm(&h, &DenseMatrix::filled(2, 1, 1.0), WeightKind::Vector).is_err());
    }

    #[test]
    fn spectral_coordinate_unit_adaptation() {
        let g = rng_gaussian(&mut Rng::new(12), 3, 2);
        let sig: Vec<f64> = svd(&g).unwrap().s;
        let mut s3 = sig.clone();
        s3.push(0.0);
        // e_ij = sigma_i sigma_j where defined; entries touching the null row are arbitrary
        let e = DenseMatrix::from_fn(3, 2, |i, j| if s3[i] > 0.0 { s3[i] * sig[j] } else { 1.0 });
        let rep = spectral_coordinate_report(&g, &e).unwrap();
        assert!(rep.max_abs_deviation <= 1e-10);
        assert!(rep.coordinate.max_abs_diff(&msign_exact(&g)) <= 1e-10);
    }

    #[test]
    fn spectral_coordinate_random_and_diagonal() {
        let mut rng = Rng::new(2);
        let g = rng_gaussian(&mut rng, 3, 2);
        let e = rng_gaussian(&mut rng, 3, 2).map(|v| v.abs() + 0.2);
        assert!(spectral_coordinate_oracle(&g, &e).unwrap() <= 1e-8);
        let d = DenseMatrix::from_diag(&[4.0, 3.0, 2.0, 1.0]);
        let e = rng_gaussian(&mut rng, 4, 4).map(|v| v.abs() + 0.2);
        assert!(spectral_coordinate_oracle(&d, &e).unwrap() <= 1e-10);
        assert!(spectral_coordinate_oracle(
            &DenseMatrix::zeros(9, 9),
            &DenseMatrix::filled(9, 9, 1.0)
        )
        .is_err());
    }

    #[test]
    fn eigen_row_norm_examples() {
        assert!(eigen_row_norm_check(&DenseMatrix::identity(3)).unwrap() < 1e-14);
        assert!(eigen_row_norm_check(&DenseMatrix::from_diag(&[3.0, 4.0])).unwrap() < 1e-14);
        assert!(eigen_row_norm_check(&rng_gaussian(&mut Rng::new(1), 7, 4)).unwrap() <= 1e-8);
    }

    #[test]
    fn sandwich_and_maximizer() {
        let mut rng = Rng::new(77);
        let s = rng_gaussian(&mut rng, 5, 4);
        let gamma = rng_gaussian(&mut rng, 5, 4).map(|v| v.abs() + 0.05);
        let lower = gamma.min() * nuclear_norm(&s);
        let mid = weighted_inner(&s, &msign_exact(&s), &gamma).unwrap();
        let upper = weighted_nuclear(&s, &gamma).unwrap();
        assert!(lower <= mid + 1e-8 && mid <= upper + 1e-8);
        let at_max = weighted_inner(&s, &msign_exact(&gamma.hadamard(&s)), &gamma).unwrap();
        assert!((at_max - upper).abs() <= 1e-8);
    }
}
