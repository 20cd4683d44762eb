//! Randomized property oracles, shared by the `check` command and the
//! acceptance tests. Each check draws its inputs from a fixed seed.

use std::fmt;

use crate::diagnostics::{
    eigen_row_norm_check, nuclear_norm, spectral_coordinate_oracle, weighted_inner,
    weighted_nuclear,
};
use crate::linalg::{rng_gaussian, svd, sym_eig, DenseMatrix, Rng};
use crate::msign::{msign_exact, msign_newton_schulz, DEFAULT_NS_ITERS};
use crate::optimizers::{
    adam_step, deva_linf_step, deva_sinf_inst_step, deva_sinf_step, soap_lite_step, HyperParams,
    MatrixOptState, VectorOptState,
};
use crate::problems::{build_trace_quadratic, QuadraticKind};

/// Result of one property check.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn bound(name: &'static str, worst: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name,
            passed: worst <= tolerance,
            worst,
            tolerance,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{tag} {}: worst {:.3e} (tol {:.1e})",
            self.name, self.worst, self.tolerance
        )?;
        if !self.detail.is_empty() {
            write!(f, "; {}", self.detail)?;
        }
        Ok(())
    }
}

fn positive_matrix(rng: &mut Rng, n: usize, m: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, m, |_, _| rng.uniform_in(0.1, 2.0))
}

fn dim(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

/// Spectral coordinate-wise form vs brute-force Kronecker update.
pub fn spectral_coordinate(trials: usize, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(seed);
    let shapes = [(3, 2), (2, 3), (4, 4), (5, 3)];
    let mut worst = 0.0f64;
    for k in 0..trials {
        let (n, m) = shapes[k % shapes.len()];
        let g = rng_gaussian(&mut rng, n, m);
        let e = positive_matrix(&mut rng, n, m);
        let dev = spectral_coordinate_oracle(&g, &e).unwrap_or(f64::INFINITY);
        worst = worst.max(dev);
    }
    CheckOutcome::bound(
        "spectral coordinate-wise form",
        worst,
        1e-8,
        format!("{trials} draws"),
    )
}

/// `(G G^T)^{-1/4} G (G^T G)^{-1/4} = msign(G)`.
pub fn polar_identity(trials: usize, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(seed);
    let root = |a: &DenseMatrix| {
        let e = sym_eig(a).expect("finite Gram matrix");
        let top = e.values[0];
        e.apply(|v| if v > 1e-12 * top { v.powf(-0.25) } else { 0.0 })
    };
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (n, m) = (dim(&mut rng, 1, 16), dim(&mut rng, 1, 16));
        let g = rng_gaussian(&mut rng, n, m);
        let lhs = root(&g.gram_rows())
            .matmul(&g)
            .matmul(&root(&g.gram_cols()));
        worst = worst.max(lhs.sub(&msign_exact(&g)).frobenius_norm());
    }
    CheckOutcome::bound(
        "polar identity",
        worst,
        1e-6,
        format!("{trials} draws up to 16x16"),
    )
}

/// Eigenvalues of the Kronecker factors vs row/column norms of the rotated gradient.
pub fn eigen_row_norms(trials: usize, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (n, m) = (dim(&mut rng, 1, 16), dim(&mut rng, 1, 16));
        let g = rng_gaussian(&mut rng, n, m);
        worst = worst.max(eigen_row_norm_check(&g).unwrap_or(f64::INFINITY));
    }
    CheckOutcome::bound(
        "eigenvalue/row-norm match",
        worst,
        1e-8,
        format!("{trials} draws up to 16x16"),
    )
}

fn zero_betas() -> HyperParams {
    HyperParams {
        lr: 0.1,
        beta1: 0.0,
        beta2: 0.0,
        beta3: 0.0,
        eps: 0.0,
        ..HyperParams::default()
    }
}

/// DeVA-S∞ update is unchanged by positive rescaling of the gradient.
pub fn scale_invariance(trials: usize, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(seed);
    let hp = zero_betas();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (n, m) = (dim(&mut rng, 2, 8), dim(&mut rng, 2, 8));
        let g = rng_gaussian(&mut rng, n, m);
        let x = rng_gaussian(&mut rng, n, m);
        let step = |c: f64| {
            deva_sinf_step(&mut MatrixOptState::new(n, m, 10), &x, &g.scale(c), &hp)
                .expect("finite step")
        };
        let base = step(1.0);
        for c in [1e-3, 1e3] {
            worst = worst.max(step(c).max_abs_diff(&base));
        }
    }
    CheckOutcome::bound(
        "positive-scale invariance",
        worst,
        1e-6,
        format!("{trials} draws, c in {{1e-3, 1, 1e3}}"),
    )
}

/// DeVA-ℓ∞ with `beta1 = 0`: `gamma ⊙ sign(m)` vs `m / sqrt(v)`, slack `sqrt(eps / v)`.
pub fn linf_decomposition(trials: usize, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(seed);
    let hp = HyperParams {
        lr: 1.0,
        beta1: 0.0,
        beta2: 0.999,
        eps: 1e-8,
        ..HyperParams::default()
    };
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mut state = VectorOptState::new(6, 1);
        let x = DenseMatrix::zeros(6, 1);
        for _ in 0..20 {
            let g = rng_gaussian(&mut rng, 6, 1);
            let d = deva_linf_step(&mut state, &x, &g, &hp)
                .expect("finite")
                .scale(-1.0);
            for i in 0..6 {
                let (m, v) = (state.m[(i, 0)], state.v[(i, 0)]);
                let slack = (hp.eps / v).sqrt() + 1e-12;
                // excess over the allowed eps-level slack
                worst = worst.max((d[(i, 0)] - m / v.sqrt()).abs() - slack);
            }
        }
    }
    CheckOutcome::bound(
        "sign-magnitude decomposition",
        worst.max(0.0),
        0.0,
        "excess over sqrt(eps/v) slack",
    )
}

/// SOAP-lite with frozen identity bases and frozen factors vs Adam on `vec(G)`.
pub fn soap_adam_equivalence(trials: usize, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for k in 0..trials {
        let hp = HyperParams {
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            beta3: 1.0,
            eps: 1e-8,
            bias_correction: k % 2 == 0,
            ..HyperParams::default()
        };
        let mut soap = MatrixOptState::new(3, 3, 1)
            .with_frozen_bases(DenseMatrix::identity(3), DenseMatrix::identity(3));
        let mut adam = VectorOptState::new(9, 1);
        let mut xs = rng_gaussian(&mut rng, 3, 3);
        let mut xa = DenseMatrix::column(xs.data());
        for _ in 0..10 {
            let g = rng_gaussian(&mut rng, 3, 3);
            xs = soap_lite_step(&mut soap, &xs, &g, &hp).expect("finite");
            xa = adam_step(&mut adam, &xa, &DenseMatrix::column(g.data()), &hp).expect("finite");
            worst = worst.max(DenseMatrix::column(xs.data()).max_abs_diff(&xa));
        }
    }
    CheckOutcome::bound("frozen-basis SOAP equals Adam", worst, 1e-10, "")
}

/// Instantaneous variant coincides with the base algorithm when `beta1 = 0`.
pub fn instantaneous_equivalence(trials: usize, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(seed);
    let hp = HyperParams {
        beta1: 0.0,
        freq: 3,
        ..HyperParams::default()
    };
    let mut mismatches = 0usize;
    for _ in 0..trials {
        let (n, m) = (dim(&mut rng, 2, 6), dim(&mut rng, 2, 6));
        let mut a = MatrixOptState::new(n, m, hp.freq);
        let mut b = MatrixOptState::new(n, m, hp.freq);
        let mut xa = rng_gaussian(&mut rng, n, m);
        let mut xb = xa.clone();
        for _ in 0..12 {
            let g = rng_gaussian(&mut rng, n, m);
            xa = deva_sinf_step(&mut a, &xa, &g, &hp).expect("finite");
            xb = deva_sinf_inst_step(&mut b, &xb, &g, &hp).expect("finite");
            if xa
                .data()
                .iter()
                .zip(xb.data())
                .any(|(p, q)| p.to_bits() != q.to_bits())
            {
                mismatches += 1;
            }
        }
    }
    CheckOutcome::bound(
        "instantaneous variant bit-identical",
        mismatches as f64,
        0.0,
        "mismatching steps",
    )
}

/// Exhaustive average of single-row Kaczmarz gradients vs the full gradient,
/// relative to the largest gradient entry.
pub fn kaczmarz_unbiased(trials: usize, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for k in 0..trials {
        let kind = if k % 2 == 0 {
            QuadraticKind::Homogeneous
        } else {
            QuadraticKind::Heterogeneous
        };
        let p = build_trace_quadratic(kind, &mut rng).expect("valid instance");
        let x = rng_gaussian(&mut rng, 9, 9);
        let full = p.full_gradient(&x).expect("shape").grad;
        let mut avg = DenseMatrix::zeros(9, 9);
        for i in 0..9 {
            avg = avg.add(&p.kaczmarz_gradient(&x, &[i]).expect("valid row").grad);
        }
        let dev = avg.scale(1.0 / 9.0).max_abs_diff(&full) / full.max_abs().max(1.0);
        worst = worst.max(dev);
    }
    CheckOutcome::bound(
        "Kaczmarz unbiasedness",
        worst,
        1e-10,
        format!("{trials} instances"),
    )
}

/// `min(Gamma) ||S||_* <= <S, msign S>_Gamma <= ||Gamma ⊙ S||_*` and
/// `<S, msign(Gamma ⊙ S)>_Gamma = ||Gamma ⊙ S||_*`.
pub fn weighted_sandwich(trials: usize, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (n, m) = (dim(&mut rng, 1, 8), dim(&mut rng, 1, 8));
        let s = rng_gaussian(&mut rng, n, m);
        let gamma = positive_matrix(&mut rng, n, m);
        let lower = gamma.min() * nuclear_norm(&s);
        let mid = weighted_inner(&s, &msign_exact(&s), &gamma).expect("shapes");
        let upper = weighted_nuclear(&s, &gamma).expect("shapes");
        let at_max = weighted_inner(&s, &msign_exact(&gamma.hadamard(&s)), &gamma).expect("shapes");
        worst = worst
            .max(lower - mid)
            .max(mid - upper)
            .max((at_max - upper).abs());
    }
    CheckOutcome::bound(
        "weighted sandwich and maximizer",
        worst.max(0.0),
        1e-8,
        format!("{trials} pairs"),
    )
}

/// Newton-Schulz output vs the exact polar factor on random Gaussian inputs up to 64x32.
///
/// Passes when every draw is within `0.05 sqrt(min(n, m))` Frobenius and every
/// singular value whose normalized input value exceeds `1e-3` maps into `[0.6, 1.2]`.
pub fn newton_schulz_quality(trials: usize, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(seed);
    let mut worst_ratio = 0.0f64;
    let mut over = 0usize;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..trials {
        let (n, m) = (dim(&mut rng, 2, 64), dim(&mut rng, 2, 32));
        let g = rng_gaussian(&mut rng, n, m);
        let approx = msign_newton_schulz(&g, DEFAULT_NS_ITERS);
        let dist = approx.sub(&msign_exact(&g)).frobenius_norm();
        let ratio = dist / (0.05 * (n.min(m) as f64).sqrt());
        if ratio > 1.0 {
            over += 1;
        }
        worst_ratio = worst_ratio.max(ratio);
        let t = svd(&g).expect("finite");
        let fro = g.frobenius_norm();
        for (k, &s) in t.s.iter().enumerate() {
            if s / fro <= 1e-3 {
                continue;
            }
            let u = DenseMatrix::column(&t.u.col(k));
            let v = DenseMatrix::column(&t.v.col(k));
            let out = u.t().matmul(&approx).matmul(&v)[(0, 0)];
            lo = lo.min(out);
            hi = hi.max(out);
        }
    }
    let in_range = lo >= 0.6 && hi <= 1.2;
    CheckOutcome {
        name: "Newton-Schulz quality",
        passed: over == 0 && in_range,
        worst: worst_ratio,
        tolerance: 1.0,
        detail: format!(
            "distance/(0.05 sqrt(min)) worst {worst_ratio:.3}, {over}/{trials} over; singular values in [{lo:.3}, {hi:.3}]"
        ),
    }
}

/// All randomized oracles at their acceptance sizes.
pub fn all(seed: u64) -> Vec<CheckOutcome> {
    vec![
        spectral_coordinate(200, seed),
        polar_identity(200, seed + 1),
        eigen_row_norms(200, seed + 2),
        scale_invariance(100, seed + 3),
        linf_decomposition(50, seed + 4),
        soap_adam_equivalence(20, seed + 5),
        instantaneous_equivalence(20, seed + 6),
        kaczmarz_unbiased(20, seed + 7),
        weighted_sandwich(200, seed + 8),
        newton_schulz_quality(200, seed + 9),
    ]
}
