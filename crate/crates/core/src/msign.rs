//! Matrix sign (polar factor) of a rectangular matrix.
//!
//! `msign(G) = U V^T` for the thin SVD `G = U S V^T`. [`msign_exact`] computes
//! it through the Jacobi SVD and serves as the reference; [`msign_newton_schulz`]
//! is the matmul-only odd-polynomial iteration used inside the optimizers.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::linalg::{svd, DenseMatrix};

/// Relative cutoff below which singular directions are dropped by [`msign_exact`].
pub const SINGULAR_CUTOFF: f64 = 1e-12;

/// Default iteration count for [`msign_newton_schulz`].
pub const DEFAULT_NS_ITERS: usize = 5;

/// Polar factor via the SVD. The zero matrix maps to the zero matrix.
pub fn msign_exact(g: &DenseMatrix) -> DenseMatrix {
    let (n, m) = g.shape();
    let t = match svd(g) {
        Ok(t) => t,
        Err(_) => return DenseMatrix::zeros(n, m),
    };
    let smax = t.s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return DenseMatrix::zeros(n, m);
    }
    let keep =
        t.s.iter()
            .take_while(|&&s| s > SINGULAR_CUTOFF * smax)
            .count();
    let mut out = DenseMatrix::zeros(n, m);
    for k in 0..keep {
        for i in 0..n {
            let u = t.u[(i, k)];
            if u == 0.0 {
                continue;
            }
            for j in 0..m {
                out[(i, j)] += u * t.v[(j, k)];
            }
        }
    }
    out
}

/// Coefficients `(a, b, c)` of one quintic step `X <- aX + b(XX^T)X + c(XX^T)^2 X`.
pub type Quintic = (f64, f64, f64);

/// Fixed quintic used by the Muon reference implementation.
pub const MUON_QUINTIC: Quintic = (3.4445, -4.7750, 2.0315);

/// Newton-Schulz settings.
///
/// `coefficients[k]` is used at iteration `k`; iterations past the end of the
/// list reuse the last entry. The input is pre-scaled by `1 / (||G||_F * safety)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonSchulz {
    pub iters: usize,
    pub coefficients: Vec<Quintic>,
    pub safety: f64,
    /// Accepted for configuration compatibility; currently has no effect.
    pub sign_trick: bool,
}

impl NewtonSchulz {
    /// The Muon reference iteration: one fixed quintic, Frobenius pre-scaling.
    pub fn muon(iters: usize) -> Self {
        Self {
            iters,
            coefficients: vec![MUON_QUINTIC],
            safety: 1.0,
            sign_trick: false,
        }
    }

    pub fn with_iters(mut self, iters: usize) -> Self {
        self.iters = iters;
        self
    }

    fn coefficient(&self, k: usize) -> Quintic {
        self.coefficients[k.min(self.coefficients.len() - 1)]
    }

    /// Run the iteration on `g`.
    pub fn apply(&self, g: &DenseMatrix) -> DenseMatrix {
        if self.sign_trick {
            warn_sign_trick_once();
        }
        let norm = g.frobenius_norm();
        if norm == 0.0 {
            return DenseMatrix::zeros(g.rows(), g.cols());
        }
        let transpose = g.rows() > g.cols();
        let mut x = if transpose { g.t() } else { g.clone() };
        x = x.scale(1.0 / (norm * self.safety));
        for k in 0..self.iters {
            let (a, b, c) = self.coefficient(k);
            let gram = x.gram_rows();
            let poly = gram.scale(b).add(&gram.matmul(&gram).scale(c));
            x = x.scale(a).add(&poly.matmul(&x));
        }
        if transpose {
            x.t()
        } else {
            x
        }
    }
}

impl Default for NewtonSchulz {
    fn default() -> Self {
        Self::muon(DEFAULT_NS_ITERS)
    }
}

fn warn_sign_trick_once() {
    static WARNED: AtomicBool = AtomicBool::new(false);
    if !WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("sign_trick is not implemented; msign is computed without it");
    }
}

/// Approximate polar factor with `iters` steps of the default schedule.
pub fn msign_newton_schulz(g: &DenseMatrix, iters: usize) -> DenseMatrix {
    NewtonSchulz::default().with_iters(iters).apply(g)
}

/// Update scale `0.2 * sqrt(max(n, m))` matching an Adam-like update RMS.
pub fn rms_alignment_scale(n: usize, m: usize) -> f64 {
    0.2 * (n.max(m) as f64).sqrt()
}
