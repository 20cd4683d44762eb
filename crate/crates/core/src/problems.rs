//! Quadratic benchmark objectives `f(X) = ½ Tr(X^T H X)` with exact and
//! Kaczmarz (row-sampled) gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, rng_gaussian, sym_eig, DenseMatrix, Rng};

/// Eigenvalues of the 9-dimensional instances, grouped per 3x3 block.
pub const HOMOGENEOUS_BLOCKS: [[f64; 3]; 3] = [
    [1.0, 2.0, 3.0],
    [99.0, 100.0, 101.0],
    [4998.0, 4999.0, 5000.0],
];
pub const HETEROGENEOUS_BLOCKS: [[f64; 3]; 3] = [
    [1.0, 99.0, 4998.0],
    [2.0, 100.0, 4999.0],
    [3.0, 101.0, 5000.0],
];

/// Stream id for problem construction; keeps it independent of the sampling stream.
pub const PROBLEM_STREAM: u64 = 0x7072_6f62;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadraticKind {
    /// Each block holds eigenvalues of one magnitude.
    Homogeneous,
    /// Each block mixes small, medium and large eigenvalues.
    Heterogeneous,
    /// Diagonal Hessian with a vector (`d x 1`) parameter.
    Vector,
}

impl QuadraticKind {
    pub fn short_name(self) -> &'static str {
        match self {
            Self::Homogeneous => "hom",
            Self::Heterogeneous => "het",
            Self::Vector => "vec",
        }
    }
}

/// `f(X) = ½ Tr(X^T H X)` with `H = A^T A`. Rows of `A` are the Kaczmarz samples.
#[derive(Clone, Debug)]
pub struct TraceQuadratic {
    pub h: DenseMatrix,
    pub a: DenseMatrix,
    pub kind: QuadraticKind,
    /// Columns of the parameter (`d` for the trace quadratic, 1 for vector problems).
    pub param_cols: usize,
}

/// Loss and gradient at one iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct GradSample {
    pub value: f64,
    pub grad: DenseMatrix,
    /// Rows used for a stochastic gradient; empty for the full gradient.
    pub batch_rows: Vec<usize>,
}

fn block_rotation(rng: &mut Rng) -> DenseMatrix {
    let a3 = rng_gaussian(rng, 3, 3);
    sym_eig(&a3.gram_rows())
        .expect("3x3 Gram matrix is finite")
        .vectors
}

/// Block-diagonal 9x9 instance.
///
/// Each block is `Q diag(lambda) Q^T` with `Q` the eigenvectors of `A3 A3^T` for
/// Gaussian `A3`. Rotations are drawn in the same order for both kinds, so
/// instances built from the same rng state share rotations.
pub fn build_trace_quadratic(kind: QuadraticKind, rng: &mut Rng) -> Result<TraceQuadratic> {
    let blocks = match kind {
        QuadraticKind::Homogeneous => HOMOGENEOUS_BLOCKS,
        QuadraticKind::Heterogeneous => HETEROGENEOUS_BLOCKS,
        QuadraticKind::Vector => {
            return Err(Error::InvalidInput(
                "use quadratic_vector_problem for the vector kind".into(),
            ))
        }
    };
    let mut h = DenseMatrix::zeros(9, 9);
    for (b, eigs) in blocks.iter().enumerate() {
        let q = block_rotation(rng);
        let block = q
            .matmul(&DenseMatrix::from_diag(eigs))
            .matmul(&q.t())
            .symmetrized();
        for i in 0..3 {
            for j in 0..3 {
                h[(3 * b + i, 3 * b + j)] = block[(i, j)];
            }
        }
    }
    from_hessian(h, kind, 9)
}

/// `f(x) = ½ x^T diag(h) x` on a `d x 1` parameter. The rng is unused: the
/// instance is fully determined by `h`; it is accepted to mirror the matrix builder.
pub fn quadratic_vector_problem(h: &[f64], _rng: &mut Rng) -> Result<TraceQuadratic> {
    if h.is_empty() || h.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::InvalidInput(
            "spectrum must be nonempty and positive".into(),
        ));
    }
    from_hessian(DenseMatrix::from_diag(h), QuadraticKind::Vector, 1)
}

fn from_hessian(h: DenseMatrix, kind: QuadraticKind, param_cols: usize) -> Result<TraceQuadratic> {
    let a = cholesky(&h)?.t();
    Ok(TraceQuadratic {
        h,
        a,
        kind,
        param_cols,
    })
}

impl TraceQuadratic {
    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    pub fn param_shape(&self) -> (usize, usize) {
        (self.dim(), self.param_cols)
    }

    fn check_param(&self, x: &DenseMatrix) -> Result<()> {
        if x.shape() != self.param_shape() {
            return Err(Error::shape(format!(
                "parameter is {:?}, problem expects {:?}",
                x.shape(),
                self.param_shape()
            )));
        }
        Ok(())
    }

    /// `½ Tr(X^T H X)`.
    pub fn loss(&self, x: &DenseMatrix) -> Result<f64> {
        self.check_param(x)?;
        Ok(0.5 * x.inner(&self.h.matmul(x)))
    }

    /// Exact gradient `H X`.
    pub fn full_gradient(&self, x: &DenseMatrix) -> Result<GradSample> {
        self.check_param(x)?;
        let grad = self.h.matmul(x);
        Ok(GradSample {
            value: 0.5 * x.inner(&grad),
            grad,
            batch_rows: Vec::new(),
        })
    }

    /// Unbiased row-sampled gradient `(d / |batch|) sum_i a_i (a_i^T X)`.
    pub fn kaczmarz_gradient(&self, x: &DenseMatrix, batch: &[usize]) -> Result<GradSample> {
        self.check_param(x)?;
        let d = self.dim();
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty Kaczmarz batch".into()));
        }
        if let Some(&bad) = batch.iter().find(|&&i| i >= d) {
            return Err(Error::InvalidInput(format!(
                "row index {bad} out of range for d = {d}"
            )));
        }
        let cols = x.cols();
        let mut grad = DenseMatrix::zeros(d, cols);
        let scale = d as f64 / batch.len() as f64;
        for &i in batch {
            let a_i = self.a.row(i);
            // w = a_i^T X
            let mut w = vec![0.0; cols];
            for (k, &aik) in a_i.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (wj, &xkj) in w.iter_mut().zip(x.row(k)) {
                    *wj += aik * xkj;
                }
            }
            for (r, &air) in a_i.iter().enumerate() {
                if air == 0.0 {
                    continue;
                }
                for (j, &wj) in w.iter().enumerate() {
                    grad[(r, j)] += scale * air * wj;
                }
            }
        }
        Ok(GradSample {
            value: self.loss(x)?,
            grad,
            batch_rows: batch.to_vec(),
        })
    }

    /// Draw `batch_size` rows uniformly with replacement and return the Kaczmarz gradient.
    pub fn sample_gradient(
        &self,
        x: &DenseMatrix,
        batch_size: usize,
        rng: &mut Rng,
    ) -> Result<GradSample> {
        let d = self.dim();
        let batch: Vec<usize> = (0..batch_size).map(|_| rng.below(d)).collect();
        self.kaczmarz_gradient(x, &batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_eigs(h: &DenseMatrix) -> Vec<f64> {
        let mut v = sym_eig(h).unwrap().values;
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    const SPECTRUM: [f64; 9] = [1.0, 2.0, 3.0, 99.0, 100.0, 101.0, 4998.0, 4999.0, 5000.0];

    #[test]
    fn spectra_match_for_both_kinds() {
        for kind in [QuadraticKind::Homogeneous, QuadraticKind::Heterogeneous] {
            let p = build_trace_quadratic(kind, &mut Rng::new(3)).unwrap();
            for (got, want) in sorted_eigs(&p.h).iter().zip(SPECTRUM) {
                assert!((got - want).abs() <= 1e-6 * want, "{got} vs {want}");
            }
            let aa = p.a.t().matmul(&p.a);
            assert!(aa.sub(&p.h).frobenius_norm() <= 1e-9 * p.h.frobenius_norm());
        }
    }

    #[test]
    fn identity_loss_is_half_trace() {
        let p = build_trace_quadratic(QuadraticKind::Heterogeneous, &mut Rng::new(1)).unwrap();
        let s = p.full_gradient(&DenseMatrix::identity(9)).unwrap();
        // half the sum of the nine eigenvalues
        assert!((s.value - 7651.5).abs() < 1e-9 * 7651.5, "{}", s.value);
        let z = p.full_gradient(&DenseMatrix::zeros(9, 9)).unwrap();
        assert_eq!(z.value, 0.0);
        assert_eq!(z.grad, DenseMatrix::zeros(9, 9));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let p = build_trace_quadratic(QuadraticKind::Homogeneous, &mut rng).unwrap();
        let x = rng_gaussian(&mut rng, 9, 9);
        let g = p.full_gradient(&x).unwrap().grad;
        let h = 1e-4;
        for (i, j) in [(0, 0), (3, 7), (8, 2), (6, 6)] {
            let mut xp = x.clone();
            xp[(i, j)] += h;
            let mut xm = x.clone();
            xm[(i, j)] -= h;
            let fd = (p.loss(&xp).unwrap() - p.loss(&xm).unwrap()) / (2.0 * h);
            assert!((fd - g[(i, j)]).abs() <= 1e-5 * g[(i, j)].abs().max(1.0));
        }
    }

    #[test]
    fn kaczmarz_full_batch_and_average() {
        let mut rng = Rng::new(11);
        let p = build_trace_quadratic(QuadraticKind::Heterogeneous, &mut rng).unwrap();
        let x = rng_gaussian(&mut rng, 9, 9);
        let full = p.full_gradient(&x).unwrap().grad;
        let all: Vec<usize> = (0..9).collect();
        let batch = p.kaczmarz_gradient(&x, &all).unwrap().grad;
        assert!(batch.max_abs_diff(&full) <= 1e-10 * full.max_abs().max(1.0));
        let mut avg = DenseMatrix::zeros(9, 9);
        for i in 0..9 {
            avg = avg.add(&p.kaczmarz_gradient(&x, &[i]).unwrap().grad);
        }
        assert!(avg.scale(1.0 / 9.0).max_abs_diff(&full) <= 1e-10 * full.max_abs().max(1.0));
        let zero = p
            .kaczmarz_gradient(&DenseMatrix::zeros(9, 9), &[4])
            .unwrap();
        assert_eq!(zero.grad, DenseMatrix::zeros(9, 9));
    }

    #[test]
    fn kaczmarz_errors() {
        let p = build_trace_quadratic(QuadraticKind::Homogeneous, &mut Rng::new(0)).unwrap();
        let x = DenseMatrix::zeros(9, 9);
        assert!(matches!(
            p.kaczmarz_gradient(&x, &[9]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            p.kaczmarz_gradient(&x, &[]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            p.full_gradient(&DenseMatrix::zeros(9, 1)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn vector_problem() {
        let p = quadratic_vector_problem(&[1.0, 1.0], &mut Rng::new(0)).unwrap();
        let g = p.full_gradient(&DenseMatrix::column(&[1.0, 1.0])).unwrap();
        assert_eq!(g.grad.data(), &[1.0, 1.0]);
        assert!(quadratic_vector_problem(&[1.0, 0.0], &mut Rng::new(0)).is_err());

        let p = quadratic_vector_problem(&[0.5, 2.0, 7.0], &mut Rng::new(0)).unwrap();
        let x = DenseMatrix::column(&[0.3, -1.2, 0.8]);
        let g = p.full_gradient(&x).unwrap().grad;
        for i in 0..3 {
            let h = 1e-5;
            let mut xp = x.clone();
            xp[(i, 0)] += h;
            let mut xm = x.clone();
            xm[(i, 0)] -= h;
            let fd = (p.loss(&xp).unwrap() - p.loss(&xm).unwrap()) / (2.0 * h);
            assert!((fd - g[(i, 0)]).abs() <= 1e-6);
        }
    }

    #[test]
    fn same_rng_state_same_instance() {
        let a = build_trace_quadratic(QuadraticKind::Heterogeneous, &mut Rng::new(42)).unwrap();
        let b = build_trace_quadratic(QuadraticKind::Heterogeneous, &mut Rng::new(42)).unwrap();
        assert_eq!(a.h, b.h);
        assert_eq!(a.a, b.a);
    }
}
