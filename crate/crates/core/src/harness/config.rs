use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optimizers::{HyperParams, OptimizerKind, Schedule};
use crate::problems::QuadraticKind;

/// Benchmark objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub dim: usize,
    /// Diagonal Hessian for `vector_quadratic`; defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    TraceQuadraticHom,
    TraceQuadraticHet,
    VectorQuadratic,
}

impl ProblemKind {
    pub fn quadratic_kind(self) -> QuadraticKind {
        match self {
            Self::TraceQuadraticHom => QuadraticKind::Homogeneous,
            Self::TraceQuadraticHet => QuadraticKind::Heterogeneous,
            Self::VectorQuadratic => QuadraticKind::Vector,
        }
    }

    /// Short name used in output file names.
    pub fn file_tag(self) -> &'static str {
        match self {
            Self::TraceQuadraticHom => "hom",
            Self::TraceQuadraticHet => "het",
            Self::VectorQuadratic => "vec",
        }
    }
}

/// Optimizer kind plus any hyperparameters overriding the defaults.
///
/// Unset fields fall back to [`HyperParams::defaults_for`], or to
/// [`HyperParams::trace_quadratic`] on trace-quadratic problems.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub kind: Option<OptimizerKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freq: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nesterov: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_correction: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ns_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign_trick: Option<bool>,
}

impl OptimizerSpec {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind: Some(kind),
            ..Self::default()
        }
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = Some(lr);
        self
    }

    pub fn kind(&self) -> Result<OptimizerKind> {
        self.kind
            .ok_or_else(|| Error::InvalidConfig("optimizer.kind is required".into()))
    }

    /// Fill unset fields from the defaults for this kind and problem.
    pub fn resolve(&self, problem: ProblemKind) -> Result<HyperParams> {
        let kind = self.kind()?;
        let base = match problem {
            ProblemKind::VectorQuadratic => HyperParams::defaults_for(kind),
            _ => HyperParams::trace_quadratic(kind),
        };
        Ok(HyperParams {
            lr: self.lr.unwrap_or(base.lr),
            beta1: self.beta1.unwrap_or(base.beta1),
            beta2: self.beta2.unwrap_or(base.beta2),
            beta3: self.beta3.unwrap_or(base.beta3),
            eps: self.eps.unwrap_or(base.eps),
            weight_decay: self.weight_decay.unwrap_or(base.weight_decay),
            freq: self.freq.unwrap_or(base.freq),
            nesterov: self.nesterov.unwrap_or(base.nesterov),
            bias_correction: self.bias_correction.unwrap_or(base.bias_correction),
            ns_iters: self.ns_iters.unwrap_or(base.ns_iters),
            sign_trick: self.sign_trick.unwrap_or(base.sign_trick),
        })
    }
}

/// Explicit list or a contiguous range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Range { start, count } => (*start..start.saturating_add(*count)).collect(),
        }
    }
}

/// Rows per Kaczmarz sample, or the exact gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchSize {
    Rows(usize),
    Full,
}

impl Serialize for BatchSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Rows(n) => s.serialize_u64(*n as u64),
            Self::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Rows(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Rows(n) => Ok(Self::Rows(n)),
            Raw::Word(w) if w == "full" => Ok(Self::Full),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "batch_size must be a positive integer or \"full\", got {w:?}"
            ))),
        }
    }
}

/// Distribution of the first iterate; it is always scaled to unit Frobenius norm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// I.i.d. Gaussian entries.
    #[default]
    Gaussian,
    /// Random orthogonal matrix (a random unit vector for vector problems).
    Orthogonal,
}

fn default_batch() -> BatchSize {
    BatchSize::Rows(1)
}

fn default_schedule() -> Schedule {
    Schedule::WarmupLinear { warmup_frac: 0.5 }
}

fn default_log_every() -> usize {
    10
}

fn default_true() -> bool {
    true
}

/// Complete description of one seed-replicated experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerSpec,
    pub steps: usize,
    pub seeds: SeedSpec,
    #[serde(default = "default_batch")]
    pub batch_size: BatchSize,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default = "default_true")]
    pub diagnostics: bool,
    #[serde(default)]
    pub init: InitSpec,
}

impl RunConfig {
    /// Benchmark defaults: 2,000 steps, one Kaczmarz row per step, 50% warmup.
    pub fn trace_quadratic(
        problem: ProblemKind,
        optimizer: OptimizerSpec,
        seeds: SeedSpec,
    ) -> Self {
        Self {
            problem: ProblemSpec {
                kind: problem,
                dim: 9,
                spectrum: None,
            },
            optimizer,
            steps: 2000,
            seeds,
            batch_size: default_batch(),
            schedule: default_schedule(),
            log_every: default_log_every(),
            diagnostics: true,
            init: InitSpec::Gaussian,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if self.seeds.seeds().is_empty() {
            return bad("seed list is empty".into());
        }
        if self.log_every == 0 {
            return bad("log_every must be >= 1".into());
        }
        if self.batch_size == BatchSize::Rows(0) {
            return bad("batch_size must be >= 1".into());
        }
        self.schedule.validate()?;
        match self.problem.kind {
            ProblemKind::TraceQuadraticHom | ProblemKind::TraceQuadraticHet => {
                if self.problem.dim != 9 {
                    return bad(format!(
                        "trace quadratic is 9-dimensional, got dim {}",
                        self.problem.dim
                    ));
                }
                if self.problem.spectrum.is_some() {
                    return bad("spectrum only applies to vector_quadratic".into());
                }
            }
            ProblemKind::VectorQuadratic => {
                if self.problem.dim == 0 {
                    return bad("dim must be >= 1".into());
                }
                if let Some(s) = &self.problem.spectrum {
                    if s.len() != self.problem.dim {
                        return bad(format!(
                            "spectrum has {} entries, dim is {}",
                            s.len(),
                            self.problem.dim
                        ));
                    }
                    if s.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                        return bad("spectrum entries must be positive".into());
                    }
                }
            }
        }
        let kind = self.optimizer.kind()?;
        if kind.is_matrix() && self.problem.kind == ProblemKind::VectorQuadratic {
            return bad(format!(
                "{kind} needs a matrix parameter; vector_quadratic has a vector one"
            ));
        }
        self.optimizer.resolve(self.problem.kind)?.validate()
    }

    pub fn kind(&self) -> OptimizerKind {
        self.optimizer
            .kind
            .expect("validated config has an optimizer kind")
    }

    pub fn hyper_params(&self) -> Result<HyperParams> {
        self.optimizer.resolve(self.problem.kind)
    }

    /// `trace_<optimizer>_<problem>`.
    pub fn label(&self) -> String {
        format!("{}_{}", self.kind(), self.problem.kind.file_tag())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"kind": "trace_quadratic_het", "dim": 9},
        "optimizer": {"kind": "deva_sinf", "lr": 0.003},
        "steps": 100,
        "seeds": {"start": 0, "count": 4}
    }"#;

    #[test]
    fn parses_minimal_with_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.seeds.seeds(), vec![0, 1, 2, 3]);
        assert_eq!(cfg.batch_size, BatchSize::Rows(1));
        assert_eq!(cfg.schedule, Schedule::WarmupLinear { warmup_frac: 0.5 });
        let hp = cfg.hyper_params().unwrap();
        assert_eq!((hp.lr, hp.beta1, hp.beta2), (0.003, 0.0, 0.99));
        assert_eq!(cfg.label(), "deva_sinf_het");
    }

    #[test]
    fn batch_and_seed_forms() {
        let text = MINIMAL.replace(r#""steps": 100"#, r#""steps": 100, "batch_size": "full""#);
        assert_eq!(
            RunConfig::from_json(&text).unwrap().batch_size,
            BatchSize::Full
        );
        let text = MINIMAL.replace(r#"{"start": 0, "count": 4}"#, "[7, 9]");
        assert_eq!(
            RunConfig::from_json(&text).unwrap().seeds.seeds(),
            vec![7, 9]
        );
        let text = MINIMAL.replace(r#""steps": 100"#, r#""steps": 100, "batch_size": "half""#);
        assert!(matches!(
            RunConfig::from_json(&text),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn rejects_invalid() {
        for (from, to) in [
            (r#""steps": 100"#, r#""steps": 0"#),
            (r#"{"start": 0, "count": 4}"#, "[]"),
            (r#""dim": 9"#, r#""dim": 4"#),
            (r#""lr": 0.003"#, r#""lr": -1"#),
            (r#""kind": "deva_sinf""#, r#""kind": "lion""#),
            (r#""steps": 100"#, r#""steps": 100, "colour": 1"#),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(
                matches!(RunConfig::from_json(&text), Err(Error::InvalidConfig(_))),
                "{to}"
            );
        }
        let vec_matrix = r#"{"problem": {"kind": "vector_quadratic", "dim": 3},
            "optimizer": {"kind": "muon"}, "steps": 5, "seeds": [1]}"#;
        assert!(RunConfig::from_json(vec_matrix).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::from_json(MINIMAL).unwrap();
        let b = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.steps = 101;
        assert_ne!(a.hash(), c.hash());
    }
}
