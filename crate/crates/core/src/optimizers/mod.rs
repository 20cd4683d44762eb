//! Optimizer state machines and the learning-rate schedule.

mod matrix;
mod vector;

pub use matrix::{
    deva_sinf_eff_step, deva_sinf_inst_step, deva_sinf_step, muon_step, refresh_eigenbases,
    soap_lite_step, EffMatrixOptState, KroneckerBases, MatrixOptState, MomentumState,
    RefreshOutcome,
};
pub use vector::{adam_step, deva_linf_step, gd_step, signum_step, VectorOptState};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::msign::DEFAULT_NS_ITERS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Gd,
    Signum,
    Adam,
    DevaLinf,
    Muon,
    Soap,
    DevaSinf,
    DevaSinfEff,
    DevaSinfInst,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 9] = [
        Self::Gd,
        Self::Signum,
        Self::Adam,
        Self::DevaLinf,
        Self::Muon,
        Self::Soap,
        Self::DevaSinf,
        Self::DevaSinfEff,
        Self::DevaSinfInst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gd => "gd",
            Self::Signum => "signum",
            Self::Adam => "adam",
            Self::DevaLinf => "deva_linf",
            Self::Muon => "muon",
            Self::Soap => "soap",
            Self::DevaSinf => "deva_sinf",
            Self::DevaSinfEff => "deva_sinf_eff",
            Self::DevaSinfInst => "deva_sinf_inst",
        }
    }

    /// Needs a genuine 2-D parameter.
    pub fn is_matrix(self) -> bool {
        matches!(
            self,
            Self::Muon | Self::Soap | Self::DevaSinf | Self::DevaSinfEff | Self::DevaSinfInst
        )
    }

    /// Exposes adaptive weights for diagnostics.
    pub fn is_deva(self) -> bool {
        matches!(
            self,
            Self::DevaLinf | Self::DevaSinf | Self::DevaSinfEff | Self::DevaSinfInst
        )
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters shared by every optimizer; each one ignores what it doesn't use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub freq: usize,
    pub nesterov: bool,
    pub ns_iters: usize,
    pub bias_correction: bool,
    /// Accepted but has no effect (logs a warning once).
    pub sign_trick: bool,
}

impl Default for HyperParams {
    /// Matrix-method defaults.
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.95,
            beta2: 0.95,
            beta3: 0.95,
            eps: 1e-8,
            weight_decay: 0.0,
            freq: 10,
            nesterov: false,
            ns_iters: DEFAULT_NS_ITERS,
            bias_correction: false,
            sign_trick: false,
        }
    }
}

impl HyperParams {
    /// Desk-benchmark defaults for `kind`.
    pub fn defaults_for(kind: OptimizerKind) -> Self {
        let base = Self::default();
        match kind {
            OptimizerKind::Gd | OptimizerKind::Signum | OptimizerKind::DevaLinf => Self {
                beta1: 0.9,
                beta2: 0.999,
                ..base
            },
            OptimizerKind::Adam => Self {
                beta1: 0.9,
                beta2: 0.999,
                bias_correction: true,
                ..base
            },
            OptimizerKind::Soap => Self {
                bias_correction: true,
                ..base
            },
            _ => base,
        }
    }

    /// Trace-quadratic settings: no first moment, `beta2 = 0.99`.
    pub fn trace_quadratic(kind: OptimizerKind) -> Self {
        Self {
            beta1: 0.0,
            beta2: 0.99,
            ..Self::defaults_for(kind)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        // beta3 = 1 freezes the Kronecker factors; allowed for oracle setups
        if !(0.0..=1.0).contains(&self.beta3) {
            return bad(format!("beta3 must lie in [0, 1], got {}", self.beta3));
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return bad(format!("eps must be >= 0, got {}", self.eps));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            ));
        }
        if self.freq == 0 {
            return bad("freq must be >= 1".into());
        }
        if self.ns_iters == 0 {
            return bad("ns_iters must be >= 1".into());
        }
        Ok(())
    }
}

pub(crate) fn check_same_shape(
    a_name: &str,
    a: &DenseMatrix,
    b_name: &str,
    b: &DenseMatrix,
) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "{a_name} is {:?} but {b_name} is {:?}",
            a.shape(),
            b.shape()
        )))
    }
}

/// `x (1 - lr wd) - lr d`; fails with the step index if anything is non-finite.
pub(crate) fn apply_update(
    x: &DenseMatrix,
    d: &DenseMatrix,
    hp: &HyperParams,
    t: usize,
) -> Result<DenseMatrix> {
    let shrink = 1.0 - hp.lr * hp.weight_decay;
    let out = x.zip_map(d, |xi, di| xi * shrink - hp.lr * di);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::NumericalBreakdown { step: t })
    }
}

/// Learning-rate schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant,
    /// Constant for the first `warmup_frac` of the run, then linear decay to 0.
    WarmupLinear {
        warmup_frac: f64,
    },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if let Self::WarmupLinear { warmup_frac } = *self {
            if !(0.0..=1.0).contains(&warmup_frac) {
                return Err(Error::InvalidConfig(format!(
                    "warmup_frac must lie in [0, 1], got {warmup_frac}"
                )));
            }
        }
        Ok(())
    }

    pub fn lr(&self, t: usize, total: usize, base_lr: f64) -> Result<f64> {
        match *self {
            Self::Constant => {
                if total == 0 {
                    Err(Error::InvalidConfig("total steps must be >= 1".into()))
                } else {
                    Ok(base_lr)
                }
            }
            Self::WarmupLinear { warmup_frac } => schedule_lr(t, total, warmup_frac, base_lr),
        }
    }
}

/// `base_lr` for `t <= warmup_frac * T`, then `base_lr (T - t) / (T - ceil(warmup_frac T))`.
pub fn schedule_lr(t: usize, total: usize, warmup_frac: f64, base_lr: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::InvalidConfig("total steps must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&warmup_frac) {
        return Err(Error::InvalidConfig(format!(
            "warmup_frac must lie in [0, 1], got {warmup_frac}"
        )));
    }
    let t = t.min(total);
    let warm = warmup_frac * total as f64;
    if t as f64 <= warm {
        return Ok(base_lr);
    }
    let decay_len = total as f64 - warm.ceil();
    if decay_len <= 0.0 {
        return Ok(0.0);
    }
    Ok(base_lr * (total - t) as f64 / decay_len)
}

#[derive(Clone, Debug)]
enum State {
    Gd,
    Vector(VectorOptState),
    Momentum(MomentumState),
    Matrix(MatrixOptState),
    Eff(EffMatrixOptState),
}

/// Any optimizer behind one interface, for the harness.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    hp: HyperParams,
    state: State,
    t: usize,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, hp: HyperParams, shape: (usize, usize)) -> Result<Self> {
        hp.validate()?;
        let (n, m) = shape;
        if kind.is_matrix() && (n == 1 || m == 1) {
            return Err(Error::InvalidConfig(format!(
                "{kind} needs a 2-D parameter, got {n}x{m}"
            )));
        }
        let state = match kind {
            OptimizerKind::Gd => State::Gd,
            OptimizerKind::Signum | OptimizerKind::Adam | OptimizerKind::DevaLinf => {
                State::Vector(VectorOptState::new(n, m))
            }
            OptimizerKind::Muon => State::Momentum(MomentumState::new(n, m)),
            OptimizerKind::Soap | OptimizerKind::DevaSinf | OptimizerKind::DevaSinfInst => {
                State::Matrix(MatrixOptState::new(n, m, hp.freq))
            }
            OptimizerKind::DevaSinfEff => State::Eff(EffMatrixOptState::new(n, m, hp.freq)),
        };
        Ok(Self {
            kind,
            hp,
            state,
            t: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hp
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    /// One step with learning rate `lr` (overrides `hp.lr`, for schedules).
    pub fn step(&mut self, x: &DenseMatrix, g: &DenseMatrix, lr: f64) -> Result<DenseMatrix> {
        let hp = HyperParams { lr, ..self.hp };
        self.t += 1;

        match &mut self.state {
            State::Gd => gd_step(x, g, &hp).map_err(|e| match e {
                Error::NumericalBreakdown { .. } => Error::NumericalBreakdown { step: self.t },
                e => e,
            }),
            State::Vector(s) => match self.kind {
                OptimizerKind::Signum => signum_step(s, x, g, &hp),
                OptimizerKind::Adam => adam_step(s, x, g, &hp),
                _ => deva_linf_step(s, x, g, &hp),
            },
            State::Momentum(s) => muon_step(s, x, g, &hp),
            State::Matrix(s) => match self.kind {
                OptimizerKind::Soap => soap_lite_step(s, x, g, &hp),
                OptimizerKind::DevaSinfInst => deva_sinf_inst_step(s, x, g, &hp),
                _ => deva_sinf_step(s, x, g, &hp),
            },
            State::Eff(s) => deva_sinf_eff_step(s, x, g, &hp),
        }
    }

    /// Adaptive weights `gamma` / `Gamma` of the latest step, for DeVA methods.
    pub fn adaptive_weights(&self) -> Option<&DenseMatrix> {
        match &self.state {
            State::Vector(s) => s.gamma.as_ref(),
            State::Matrix(s) if self.kind != OptimizerKind::Soap => s.gamma.as_ref(),
            State::Eff(s) => s.gamma.as_ref(),
            _ => None,
        }
    }

    /// Scalars held as second-moment state.
    pub fn second_moment_len(&self) -> usize {
        match &self.state {
            State::Gd | State::Momentum(_) => 0,
            State::Vector(s) => s.v.len(),
            State::Matrix(s) => s.second_moment_len(),
            State::Eff(s) => s.second_moment_len(),
        }
    }

    /// Power-iteration refreshes that kept a stale basis.
    pub fn stale_refreshes(&self) -> usize {
        match &self.state {
            State::Matrix(s) => s.bases.stale_refreshes,
            State::Eff(s) => s.bases.stale_refreshes,
            _ => 0,
        }
    }
}
