//! Matrix optimizers: Muon, SOAP-lite and the DeVA-S∞ family.
//!
//! All of them keep Kronecker-factor EMAs `L = ema[G G^T]`, `R = ema[G^T G]`
//! (except Muon) and work in the rotated frame `G' = Q_L^T G Q_R` spanned by
//! the eigenbases of those factors. Updates are rotated back with
//! `Q_L (.) Q_R^T` before being applied to the parameter.

use super::vector::{adam_direction, adaptive_weight, bias_corrections, lookahead};
use super::{apply_update, check_same_shape, HyperParams};
use crate::error::{Error, Result};
use crate::linalg::{qr_orthonormalize, sym_eig, DenseMatrix};
use crate::msign::{rms_alignment_scale, NewtonSchulz};

/// What a call to [`KroneckerBases::refresh`] did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefreshOutcome {
    /// Bases held fixed by the caller.
    Frozen,
    /// Not a refresh step.
    Skipped,
    /// Full eigendecomposition (first refresh).
    Full,
    /// One power-iteration step followed by QR on both sides.
    PowerQr,
    /// Power-iteration QR was rank deficient on at least one side; that side kept its basis.
    Stale,
}

/// Kronecker factors and their (approximate) eigenbases.
#[derive(Clone, Debug)]
pub struct KroneckerBases {
    pub l: DenseMatrix,
    pub r: DenseMatrix,
    pub q_l: Option<DenseMatrix>,
    pub q_r: Option<DenseMatrix>,
    pub freq: usize,
    pub frozen: bool,
    /// Refreshes that fell back to the previous basis.
    pub stale_refreshes: usize,
}

impl KroneckerBases {
    pub fn new(n: usize, m: usize, freq: usize) -> Self {
        Self {
            l: DenseMatrix::zeros(n, n),
            r: DenseMatrix::zeros(m, m),
            q_l: None,
            q_r: None,
            freq: freq.max(1),
            frozen: false,
            stale_refreshes: 0,
        }
    }

    pub fn accumulate(&mut self, g: &DenseMatrix, beta3: f64) {
        self.l.ema_assign(beta3, &g.gram_rows());
        self.r.ema_assign(beta3, &g.gram_cols());
    }

    /// Refresh at step `t` (1-based).
    ///
    /// With no basis yet, a full eigendecomposition is taken regardless of `t`.
    /// Afterwards, on steps with `t % freq == 0`, each basis advances by one
    /// power-iteration step `Q <- qr(F Q)`.
    pub fn refresh(&mut self, t: usize) -> RefreshOutcome {
        if self.frozen {
            return RefreshOutcome::Frozen;
        }
        let (Some(q_l), Some(q_r)) = (&self.q_l, &self.q_r) else {
            // factors are finite by construction, so sym_eig cannot fail here
            self.q_l = Some(sym_eig(&self.l).expect("finite square factor").vectors);
            self.q_r = Some(sym_eig(&self.r).expect("finite square factor").vectors);
            return RefreshOutcome::Full;
        };
        if !t.is_multiple_of(self.freq) {
            return RefreshOutcome::Skipped;
        }
        let next_l = qr_orthonormalize(&self.l.matmul(q_l));
        let next_r = qr_orthonormalize(&self.r.matmul(q_r));
        let mut stale = false;
        match next_l {
            Ok(q) => self.q_l = Some(q),
            Err(e) => {
                self.report_stale("left", t, &e);
                stale = true;
            }
        }
        match next_r {
            Ok(q) => self.q_r = Some(q),
            Err(e) => {
                self.report_stale("right", t, &e);
                stale = true;
            }
        }
        if stale {
            self.stale_refreshes += 1;
            RefreshOutcome::Stale
        } else {
            RefreshOutcome::PowerQr
        }
    }

    /// Warn on the first stale refresh of this state; later ones go to debug
    /// (rank-deficient factors are routine with single-row gradients).
    fn report_stale(&self, side: &str, t: usize, e: &Error) {
        if self.stale_refreshes == 0 {
            log::warn!("{side} eigenbasis refresh at step {t} kept previous basis: {e}");
        } else {
            log::debug!("{side} eigenbasis refresh at step {t} kept previous basis: {e}");
        }
    }

    fn bases(&self) -> (&DenseMatrix, &DenseMatrix) {
        (
            self.q_l.as_ref().expect("refresh before rotating"),
            self.q_r.as_ref().expect("refresh before rotating"),
        )
    }

    /// `Q_L^T g Q_R`.
    pub fn rotate_in(&self, g: &DenseMatrix) -> DenseMatrix {
        let (q_l, q_r) = self.bases();
        q_l.t().matmul(g).matmul(q_r)
    }

    /// `Q_L d Q_R^T`.
    pub fn rotate_out(&self, d: &DenseMatrix) -> DenseMatrix {
        let (q_l, q_r) = self.bases();
        q_l.matmul(d).matmul(&q_r.t())
    }
}

/// State for SOAP-lite, DeVA-S∞ and its instantaneous variant.
#[derive(Clone, Debug)]
pub struct MatrixOptState {
    pub bases: KroneckerBases,
    /// EMA of the rotated gradient.
    pub m: DenseMatrix,
    /// Second moment, `n x m`.
    pub v: DenseMatrix,
    pub t: usize,
    /// Adaptive weights of the latest step (DeVA variants).
    pub gamma: Option<DenseMatrix>,
}

impl MatrixOptState {
    pub fn new(n: usize, m: usize, freq: usize) -> Self {
        Self {
            bases: KroneckerBases::new(n, m, freq),
            m: DenseMatrix::zeros(n, m),
            v: DenseMatrix::zeros(n, m),
            t: 0,
            gamma: None,
        }
    }

    /// Pin the eigenbases; refreshes become no-ops.
    pub fn with_frozen_bases(mut self, q_l: DenseMatrix, q_r: DenseMatrix) -> Self {
        self.bases.q_l = Some(q_l);
        self.bases.q_r = Some(q_r);
        self.bases.frozen = true;
        self
    }

    pub fn freq(&self) -> usize {
        self.bases.freq
    }

    pub fn second_moment_len(&self) -> usize {
        self.v.len()
    }
}

/// State for the memory-efficient DeVA-S∞: the `n x m` second moment is
/// replaced by a row factor of length `n` and a column factor of length `m`.
#[derive(Clone, Debug)]
pub struct EffMatrixOptState {
    pub bases: KroneckerBases,
    pub m: DenseMatrix,
    pub v_r: Vec<f64>,
    pub v_c: Vec<f64>,
    pub t: usize,
    pub gamma: Option<DenseMatrix>,
}

impl EffMatrixOptState {
    pub fn new(n: usize, m: usize, freq: usize) -> Self {
        Self {
            bases: KroneckerBases::new(n, m, freq),
            m: DenseMatrix::zeros(n, m),
            v_r: vec![0.0; n],
            v_c: vec![0.0; m],
            t: 0,
            gamma: None,
        }
    }

    pub fn with_frozen_bases(mut self, q_l: DenseMatrix, q_r: DenseMatrix) -> Self {
        self.bases.q_l = Some(q_l);
        self.bases.q_r = Some(q_r);
        self.bases.frozen = true;
        self
    }

    pub fn second_moment_len(&self) -> usize {
        self.v_r.len() + self.v_c.len()
    }
}

/// First-moment-only state used by Muon.
#[derive(Clone, Debug)]
pub struct MomentumState {
    pub m: DenseMatrix,
    pub t: usize,
}

impl MomentumState {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            m: DenseMatrix::zeros(n, m),
            t: 0,
        }
    }
}

/// Matrix methods need a genuine matrix: both dimensions at least 2.
pub(crate) fn check_matrix_param(
    x: &DenseMatrix,
    g: &DenseMatrix,
    state: &DenseMatrix,
) -> Result<()> {
    check_same_shape("x", x, "g", g)?;
    check_same_shape("x", x, "state", state)?;
    if x.is_vector_shaped() {
        return Err(Error::shape(format!(
            "matrix optimizers need a 2-D parameter, got {:?}; route it to a vector optimizer",
            x.shape()
        )));
    }
    Ok(())
}

fn newton_schulz(hp: &HyperParams) -> NewtonSchulz {
    let mut ns = NewtonSchulz::default().with_iters(hp.ns_iters);
    ns.sign_trick = hp.sign_trick;
    ns
}

/// Muon: `X' = X - lr * 0.2 sqrt(max(n, m)) * msign(M)`.
pub fn muon_step(
    state: &mut MomentumState,
    x: &DenseMatrix,
    g: &DenseMatrix,
    hp: &HyperParams,
) -> Result<DenseMatrix> {
    check_matrix_param(x, g, &state.m)?;
    state.t += 1;
    state.m.ema_assign(hp.beta1, g);
    let (n, m) = x.shape();
    let dir = newton_schulz(hp).apply(&lookahead(&state.m, g, hp));
    apply_update(x, &dir.scale(rms_alignment_scale(n, m)), hp, state.t)
}

/// SOAP-lite: Adam run in the rotated frame, then rotated back.
pub fn soap_lite_step(
    state: &mut MatrixOptState,
    x: &DenseMatrix,
    g: &DenseMatrix,
    hp: &HyperParams,
) -> Result<DenseMatrix> {
    check_matrix_param(x, g, &state.m)?;
    state.t += 1;
    state.bases.accumulate(g, hp.beta3);
    state.bases.refresh(state.t);
    let g_rot = state.bases.rotate_in(g);
    state.m.ema_assign(hp.beta1, &g_rot);
    state.v.ema_assign(hp.beta2, &g_rot.map(|v| v * v));
    let numer = lookahead(&state.m, &g_rot, hp);
    let d = adam_direction(&numer, &state.v, state.t, hp);
    apply_update(x, &state.bases.rotate_out(&d), hp, state.t)
}

/// Which moment the row/column norms are taken from.
#[derive(Clone, Copy, PartialEq, Eq)]
enum NormSource {
    /// EMA of the rotated gradient (base algorithm and memory-efficient variant).
    Momentum,
    /// Current rotated sample gradient (instantaneous variant).
    Sample,
}

fn outer(r: &[f64], c: &[f64]) -> DenseMatrix {
    DenseMatrix::from_fn(r.len(), c.len(), |i, j| r[i] * c[j])
}

/// Steps shared by all DeVA-S∞ variants up to the row/column norms.
/// Returns `(rotated gradient, r, c)` with any bias correction folded into `r`, `c`.
fn rotated_moments(
    bases: &mut KroneckerBases,
    m_state: &mut DenseMatrix,
    t: usize,
    g: &DenseMatrix,
    hp: &HyperParams,
    source: NormSource,
) -> (DenseMatrix, Vec<f64>, Vec<f64>) {
    bases.accumulate(g, hp.beta3);
    bases.refresh(t);
    let g_rot = bases.rotate_in(g);
    m_state.ema_assign(hp.beta1, &g_rot);
    let (c1, _) = bias_corrections(hp, t);
    let (mut r, mut c) = match source {
        NormSource::Momentum => (m_state.row_norms(), m_state.col_norms()),
        NormSource::Sample => (g_rot.row_norms(), g_rot.col_norms()),
    };
    if source == NormSource::Momentum && c1 != 1.0 {
        r.iter_mut().for_each(|v| *v /= c1);
        c.iter_mut().for_each(|v| *v /= c1);
    }
    (g_rot, r, c)
}

/// `X' = X - lr * 0.2 sqrt(max(n, m)) * Q_L (Gamma ⊙ msign(M)) Q_R^T`.
fn finish_spectral_step(
    bases: &KroneckerBases,
    m_state: &DenseMatrix,
    g_rot: &DenseMatrix,
    gamma: &DenseMatrix,
    x: &DenseMatrix,
    hp: &HyperParams,
    t: usize,
) -> Result<DenseMatrix> {
    let (n, m) = x.shape();
    let orth = newton_schulz(hp).apply(&lookahead(m_state, g_rot, hp));
    let d = gamma.hadamard(&orth).scale(rms_alignment_scale(n, m));
    apply_update(x, &bases.rotate_out(&d), hp, t)
}

fn deva_sinf_full(
    state: &mut MatrixOptState,
    x: &DenseMatrix,
    g: &DenseMatrix,
    hp: &HyperParams,
    source: NormSource,
) -> Result<DenseMatrix> {
    check_matrix_param(x, g, &state.m)?;
    state.t += 1;
    let t = state.t;
    let (g_rot, r, c) = rotated_moments(&mut state.bases, &mut state.m, t, g, hp, source);
    let rc = outer(&r, &c);
    state.v.ema_assign(hp.beta2, &rc);
    let (_, c2) = bias_corrections(hp, t);
    let gamma = rc.zip_map(&state.v, |f, v| adaptive_weight(v / c2, f + hp.eps));
    let out = finish_spectral_step(&state.bases, &state.m, &g_rot, &gamma, x, hp, t);
    state.gamma = Some(gamma);
    out
}

/// DeVA-S∞ with the second moment `V = ema[r c^T]` of the row/column norms of `M`.
pub fn deva_sinf_step(
    state: &mut MatrixOptState,
    x: &DenseMatrix,
    g: &DenseMatrix,
    hp: &HyperParams,
) -> Result<DenseMatrix> {
    deva_sinf_full(state, x, g, hp, NormSource::Momentum)
}

/// DeVA-S∞ with `r`, `c` taken from the current rotated gradient instead of `M`.
pub fn deva_sinf_inst_step(
    state: &mut MatrixOptState,
    x: &DenseMatrix,
    g: &DenseMatrix,
    hp: &HyperParams,
) -> Result<DenseMatrix> {
    deva_sinf_full(state, x, g, hp, NormSource::Sample)
}

/// DeVA-S∞ with factored second moment `V_r V_c^T` (`n + m` scalars).
pub fn deva_sinf_eff_step(
    state: &mut EffMatrixOptState,
    x: &DenseMatrix,
    g: &DenseMatrix,
    hp: &HyperParams,
) -> Result<DenseMatrix> {
    check_matrix_param(x, g, &state.m)?;
    state.t += 1;
    let t = state.t;
    let (g_rot, r, c) = rotated_moments(
        &mut state.bases,
        &mut state.m,
        t,
        g,
        hp,
        NormSource::Momentum,
    );
    for (v, ri) in state.v_r.iter_mut().zip(&r) {
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * ri;
    }
    for (v, ci) in state.v_c.iter_mut().zip(&c) {
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * ci;
    }
    // each factor is its own EMA, so each carries a correction
    let (_, c2) = bias_corrections(hp, t);
    let (v_r, v_c) = (&state.v_r, &state.v_c);
    let gamma = DenseMatrix::from_fn(r.len(), c.len(), |i, j| {
        adaptive_weight(v_r[i] * v_c[j] / (c2 * c2), r[i] * c[j] + hp.eps)
    });
    let out = finish_spectral_step(&state.bases, &state.m, &g_rot, &gamma, x, hp, t);
    state.gamma = Some(gamma);
    out
}

/// Refresh the eigenbases of a matrix state for its current step counter.
pub fn refresh_eigenbases(state: &mut MatrixOptState) -> RefreshOutcome {
    let t = state.t;
    state.bases.refresh(t)
}
