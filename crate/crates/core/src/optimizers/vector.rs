//! Coordinate-wise optimizers: GD, Signum, Adam and DeVA-ℓ∞.
//!
//! Matrix-shaped parameters are treated as flat vectors here.

use super::{apply_update, check_same_shape, HyperParams};
use crate::error::Result;
use crate::linalg::DenseMatrix;

/// First/second moment state shared by the vector methods.
#[derive(Clone, Debug)]
pub struct VectorOptState {
    pub m: DenseMatrix,
    pub v: DenseMatrix,
    pub t: usize,
    /// Adaptive weights of the latest step (DeVA-ℓ∞ only).
    pub gamma: Option<DenseMatrix>,
}

impl VectorOptState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: DenseMatrix::zeros(rows, cols),
            v: DenseMatrix::zeros(rows, cols),
            t: 0,
            gamma: None,
        }
    }

    fn check(&self, x: &DenseMatrix, g: &DenseMatrix) -> Result<()> {
        check_same_shape("x", x, "g", g)?;
        check_same_shape("x", x, "state", &self.m)
    }
}

#[inline]
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `sqrt(fresh / second_moment)` with the dead-coordinate guard: a zero second
/// moment yields weight 0 instead of `0/0` or `x/0`.
#[inline]
pub(crate) fn adaptive_weight(second_moment: f64, fresh: f64) -> f64 {
    if second_moment > 0.0 {
        (fresh / second_moment).sqrt()
    } else {
        0.0
    }
}

/// Argument of the sign/msign map: `m`, or `beta1 m + (1 - beta1) g` with Nesterov.
pub(crate) fn lookahead(m: &DenseMatrix, g: &DenseMatrix, hp: &HyperParams) -> DenseMatrix {
    if hp.nesterov {
        m.zip_map(g, |mi, gi| hp.beta1 * mi + (1.0 - hp.beta1) * gi)
    } else {
        m.clone()
    }
}

pub(crate) fn bias_corrections(hp: &HyperParams, t: usize) -> (f64, f64) {
    if hp.bias_correction {
        let t = t as i32;
        (1.0 - hp.beta1.powi(t), 1.0 - hp.beta2.powi(t))
    } else {
        (1.0, 1.0)
    }
}

/// `m_hat / (sqrt(v_hat) + eps)` with optional bias correction; shared with SOAP.
pub(crate) fn adam_direction(
    numer: &DenseMatrix,
    v: &DenseMatrix,
    t: usize,
    hp: &HyperParams,
) -> DenseMatrix {
    let (c1, c2) = bias_corrections(hp, t);
    numer.zip_map(v, |mi, vi| {
        let m_hat = mi / c1;
        let v_hat = vi / c2;
        let denom = v_hat.sqrt() + hp.eps;
        if denom > 0.0 {
            m_hat / denom
        } else {
            0.0
        }
    })
}

/// `x' = x - lr g` after optional decoupled weight decay.
pub fn gd_step(x: &DenseMatrix, g: &DenseMatrix, hp: &HyperParams) -> Result<DenseMatrix> {
    check_same_shape("x", x, "g", g)?;
    apply_update(x, g, hp, 0)
}

/// Signum: sign of the gradient EMA.
pub fn signum_step(
    state: &mut VectorOptState,
    x: &DenseMatrix,
    g: &DenseMatrix,
    hp: &HyperParams,
) -> Result<DenseMatrix> {
    state.check(x, g)?;
    state.t += 1;
    state.m.ema_assign(hp.beta1, g);
    let d = lookahead(&state.m, g, hp).map(sign);
    apply_update(x, &d, hp, state.t)
}

/// Adam with second moment tracking `g^2` and optional bias correction.
pub fn adam_step(
    state: &mut VectorOptState,
    x: &DenseMatrix,
    g: &DenseMatrix,
    hp: &HyperParams,
) -> Result<DenseMatrix> {
    state.check(x, g)?;
    state.t += 1;
    state.m.ema_assign(hp.beta1, g);
    state.v.ema_assign(hp.beta2, &g.map(|gi| gi * gi));
    let numer = lookahead(&state.m, g, hp);
    let d = adam_direction(&numer, &state.v, state.t, hp);
    apply_update(x, &d, hp, state.t)
}

/// DeVA-ℓ∞: the second moment accumulates `m^2` (not `g^2`) and the step is
/// `gamma ⊙ sign(m)` with `gamma = sqrt((m^2 + eps) / v)`.
pub fn deva_linf_step(
    state: &mut VectorOptState,
    x: &DenseMatrix,
    g: &DenseMatrix,
    hp: &HyperParams,
) -> Result<DenseMatrix> {
    state.check(x, g)?;
    state.t += 1;
    state.m.ema_assign(hp.beta1, g);
    let m_sq = state.m.map(|mi| mi * mi);
    state.v.ema_assign(hp.beta2, &m_sq);

    let (c1, c2) = bias_corrections(hp, state.t);
    let gamma = m_sq.zip_map(&state.v, |msq, vi| {
        adaptive_weight(vi / c2, msq / (c1 * c1) + hp.eps)
    });
    let d = gamma.hadamard(&lookahead(&state.m, g, hp).map(sign));
    state.gamma = Some(gamma);
    apply_update(x, &d, hp, state.t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(lr: f64, beta1: f64, beta2: f64, eps: f64) -> HyperParams {
        HyperParams {
            lr,
            beta1,
            beta2,
            eps,
            bias_correction: false,
            ..HyperParams::default()
        }
    }

    fn col(v: &[f64]) -> DenseMatrix {
        DenseMatrix::column(v)
    }

    fn step_of(x: &DenseMatrix, x_new: &DenseMatrix) -> Vec<f64> {
        x_new.sub(x).data().to_vec()
    }

    #[test]
    fn gd_cases() {
        let h = hp(0.5, 0.0, 0.0, 0.0);
        let x = gd_step(&col(&[1.0, 1.0]), &col(&[1.0, 0.0]), &h).unwrap();
        assert_eq!(x.data(), &[0.5, 1.0]);
        let x0 = col(&[0.3, -2.0]);
        assert_eq!(gd_step(&x0, &col(&[0.0, 0.0]), &h).unwrap(), x0);

        // f = x^2/2: x <- 0.9 x
        let h = hp(0.1, 0.0, 0.0, 0.0);
        let mut x = col(&[1.0]);
        for _ in 0..10 {
            let g = x.clone();
            x = gd_step(&x, &g, &h).unwrap();
        }
        assert!((x[(0, 0)] - 0.9f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn gd_weight_decay_first() {
        let h = HyperParams {
            lr: 0.1,
            weight_decay: 0.5,
            ..hp(0.1, 0.0, 0.0, 0.0)
        };
        let x = gd_step(&col(&[2.0]), &col(&[1.0]), &h).unwrap();
        assert!((x[(0, 0)] - (2.0 * 0.95 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn gd_shape_mismatch() {
        let h = hp(0.1, 0.0, 0.0, 0.0);
        assert!(gd_step(&col(&[1.0]), &col(&[1.0, 2.0]), &h).is_err());
    }

    #[test]
    fn signum_cases() {
        let h = hp(0.1, 0.0, 0.0, 0.0);
        let x = col(&[0.0; 3]);
        let mut s = VectorOptState::new(3, 1);
        let x1 = signum_step(&mut s, &x, &col(&[4.0, -9.0, 0.0]), &h).unwrap();
        assert_eq!(step_of(&x, &x1), vec![-0.1, 0.1, 0.0]);

        let h = hp(0.1, 0.9, 0.0, 0.0);
        let mut s = VectorOptState::new(1, 1);
        s.m = col(&[1.0]);
        let x1 = signum_step(&mut s, &col(&[0.0]), &col(&[-1.0]), &h).unwrap();
        assert!((s.m[(0, 0)] - 0.8).abs() < 1e-15);
        assert_eq!(x1[(0, 0)], -0.1);

        let mut s = VectorOptState::new(2, 1);
        let mut x = col(&[0.0, 0.0]);
        for _ in 0..5 {
            let prev = x.clone();
            x = signum_step(&mut s, &x, &col(&[3.0, -0.01]), &h).unwrap();
            let st = step_of(&prev, &x);
            assert!((st[0] + 0.1).abs() < 1e-15 && (st[1] - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_cases() {
        let h = hp(0.1, 0.0, 0.0, 0.0);
        let mut s = VectorOptState::new(2, 1);
        let x = col(&[0.0, 0.0]);
        let x1 = adam_step(&mut s, &x, &col(&[4.0, -9.0]), &h).unwrap();
        assert_eq!(step_of(&x, &x1), vec![-0.1, 0.1]);

        let h = HyperParams {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            bias_correction: true,
            ..HyperParams::default()
        };
        let mut s = VectorOptState::new(1, 1);
        let x1 = adam_step(&mut s, &col(&[0.0]), &col(&[1.0]), &h).unwrap();
        let expect = -0.1 / (1.0 + 1e-8);
        assert!((x1[(0, 0)] - expect).abs() < 1e-12);

        let mut s = VectorOptState::new(2, 1);
        let x1 = adam_step(&mut s, &x, &col(&[0.0, 0.0]), &h).unwrap();
        assert_eq!(x1, x);
    }

    #[test]
    fn deva_linf_cases() {
        let h = hp(0.1, 0.0, 0.0, 0.0);
        let mut s = VectorOptState::new(2, 1);
        let x = col(&[0.0, 0.0]);
        let x1 = deva_linf_step(&mut s, &x, &col(&[4.0, -9.0]), &h).unwrap();
        assert_eq!(step_of(&x, &x1), vec![-0.1, 0.1]);

        // m = 0.1, v = 0.01 * 0.01, gamma = 10
        let h = hp(0.1, 0.9, 0.99, 0.0);
        let mut s = VectorOptState::new(1, 1);
        let x1 = deva_linf_step(&mut s, &col(&[0.0]), &col(&[1.0]), &h).unwrap();
        assert!((s.m[(0, 0)] - 0.1).abs() < 1e-15);
        assert!((s.v[(0, 0)] - 1e-4).abs() < 1e-18);
        assert!((x1[(0, 0)] + 1.0).abs() < 1e-12, "{}", x1[(0, 0)]);

        // zero gradient from zero state: guard keeps the step at 0
        let mut s = VectorOptState::new(2, 1);
        let x1 = deva_linf_step(&mut s, &x, &col(&[0.0, 0.0]), &h).unwrap();
        assert_eq!(x1, x);
        assert!(s.gamma.unwrap().data().iter().all(|&g| g == 0.0));
    }
}
