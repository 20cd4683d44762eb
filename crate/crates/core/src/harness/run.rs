use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{BatchSize, InitSpec, ProblemKind, RunConfig};
use crate::diagnostics::{h_weighted_norm, nuclear_norm, WeightKind};
use crate::error::{Error, Result};
use crate::linalg::{qr_orthonormalize, rng_gaussian, DenseMatrix, Rng};
use crate::optimizers::{Optimizer, OptimizerKind};
use crate::problems::{
    build_trace_quadratic, quadratic_vector_problem, TraceQuadratic, PROBLEM_STREAM,
};

/// Stream for the first iterate.
const INIT_STREAM: u64 = 0x696e_6974;
/// Stream for Kaczmarz row sampling.
const SAMPLE_STREAM: u64 = 0x7361_6d70;

/// One logged step of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seed: u64,
    pub step: usize,
    /// Loss after the update of this step.
    pub loss: f64,
    pub lr: f64,
    /// `||H||_{1,Gamma}` for methods with adaptive weights.
    pub h_weighted: Option<f64>,
    /// Nuclear norm of the gradient used at this step.
    pub grad_nuclear: Option<f64>,
}

/// Problem instance for one seed. Hom and het instances of the same seed share
/// their block rotations because both are drawn from the same problem stream.
pub fn build_problem(cfg: &RunConfig, seed: u64) -> Result<TraceQuadratic> {
    let mut rng = Rng::with_stream(seed, PROBLEM_STREAM);
    match cfg.problem.kind {
        ProblemKind::VectorQuadratic => {
            let ones = vec![1.0; cfg.problem.dim];
            let h = cfg.problem.spectrum.as_deref().unwrap_or(&ones);
            quadratic_vector_problem(h, &mut rng)
        }
        kind => build_trace_quadratic(kind.quadratic_kind(), &mut rng),
    }
}

/// First iterate, scaled to unit Frobenius norm.
pub fn initial_iterate(init: InitSpec, shape: (usize, usize), seed: u64) -> DenseMatrix {
    let mut rng = Rng::with_stream(seed, INIT_STREAM);
    let (n, m) = shape;
    let x = match init {
        InitSpec::Orthogonal if n > 1 && m > 1 => {
            let q = qr_orthonormalize(&rng_gaussian(&mut rng, n.max(m), n.min(m)))
                .expect("Gaussian matrix has full column rank");
            if n >= m {
                q
            } else {
                q.t()
            }
        }
        _ => rng_gaussian(&mut rng, n, m),
    };
    let norm = x.frobenius_norm();
    x.scale(1.0 / norm)
}

fn weight_kind(kind: OptimizerKind) -> WeightKind {
    if kind.is_matrix() {
        WeightKind::Matrix
    } else {
        WeightKind::Vector
    }
}

fn is_logged(t: usize, steps: usize, log_every: usize) -> bool {
    t == 1 || t.is_multiple_of(log_every) || t == steps
}

/// Run the optimization loop for one seed.
///
/// The loop is: gradient at `X_t` (exact or Kaczmarz), scheduled step, loss of
/// `X_{t+1}`. A non-finite loss aborts with the step index.
pub fn run_single(cfg: &RunConfig, seed: u64) -> Result<Vec<TraceRecord>> {
    cfg.validate()?;
    let kind = cfg.kind();
    let hp = cfg.hyper_params()?;
    let problem = build_problem(cfg, seed)?;
    let shape = problem.param_shape();
    let mut opt = Optimizer::new(kind, hp, shape)?;
    let mut sampler = Rng::with_stream(seed, SAMPLE_STREAM);
    let mut x = initial_iterate(cfg.init, shape, seed);
    let wk = weight_kind(kind);

    let mut records = Vec::new();
    for t in 1..=cfg.steps {
        let sample = match cfg.batch_size {
            BatchSize::Full => problem.full_gradient(&x)?,
            BatchSize::Rows(b) => problem.sample_gradient(&x, b, &mut sampler)?,
        };
        let lr = cfg.schedule.lr(t, cfg.steps, hp.lr)?;
        x = opt.step(&x, &sample.grad, lr).map_err(|e| match e {
            Error::NumericalBreakdown { .. } => Error::NumericalBreakdown { step: t },
            e => e,
        })?;
        let loss = problem.loss(&x)?;
        if !loss.is_finite() {
            return Err(Error::NumericalBreakdown { step: t });
        }
        if is_logged(t, cfg.steps, cfg.log_every) {
            let (h_weighted, grad_nuclear) = if cfg.diagnostics {
                let hw = match opt.adaptive_weights() {
                    Some(gamma) => Some(h_weighted_norm(&problem.h, gamma, wk)?),
                    None => None,
                };
                (hw, Some(nuclear_norm(&sample.grad)))
            } else {
                (None, None)
            };
            records.push(TraceRecord {
                seed,
                step: t,
                loss,
                lr,
                h_weighted,
                grad_nuclear,
            });
        }
    }
    if opt.stale_refreshes() > 0 {
        log::debug!(
            "seed {seed}: {} eigenbasis refreshes kept a stale basis",
            opt.stale_refreshes()
        );
    }
    Ok(records)
}

/// How seeds are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

/// Outcome of one seed.
pub type SeedOutcome = (u64, Result<Vec<TraceRecord>>);

/// Run every seed of `cfg`; the output keeps seed order whatever the execution mode.
pub fn run_seeds(cfg: &RunConfig, exec: Execution) -> Vec<SeedOutcome> {
    let seeds = cfg.seeds.seeds();
    match exec {
        Execution::Sequential => seeds.into_iter().map(|s| (s, run_single(cfg, s))).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            seeds
                .into_par_iter()
                .map(|s| (s, run_single(cfg, s)))
                .collect()
        }
    }
}

/// `q25`, median and `q75` with linear interpolation between order statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            q25: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q75: quantile_sorted(&v, 0.75),
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Cross-seed statistics at one logged step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub loss: Quantiles,
    pub hnorm: Option<Quantiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    /// Step of a numerical breakdown, if that was the cause.
    pub step: Option<usize>,
    pub message: String,
}

/// Aggregate over seeds; failed seeds are listed, quantiles use the survivors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub optimizer: OptimizerKind,
    pub problem: ProblemKind,
    pub lr: f64,
    pub seeds_total: usize,
    pub seeds_ok: usize,
    pub failures: Vec<SeedFailure>,
    pub steps: Vec<StepStats>,
    /// Final loss per surviving seed, in seed order.
    pub final_losses: Vec<f64>,
    /// First and last logged `||H||_{1,Gamma}` per surviving seed.
    pub hnorm_endpoints: Vec<(f64, f64)>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl Summary {
    pub fn final_loss(&self) -> Option<Quantiles> {
        Quantiles::of(&self.final_losses)
    }

    /// Median final loss; `inf` when every seed failed.
    pub fn median_final_loss(&self) -> f64 {
        self.final_loss().map_or(f64::INFINITY, |q| q.median)
    }

    pub fn all_failed(&self) -> bool {
        self.seeds_ok == 0
    }
}

/// Reduce per-seed outcomes into a [`Summary`].
pub fn summarize(
    cfg: &RunConfig,
    outcomes: Vec<SeedOutcome>,
    wall_clock_secs: f64,
) -> Result<Summary> {
    let hp = cfg.hyper_params()?;
    let seeds_total = outcomes.len();
    let mut failures = Vec::new();
    let mut runs = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(records) => runs.push(records),
            Err(e @ Error::NumericalBreakdown { step }) => {
                log::warn!("seed {seed}: {e}");
                failures.push(SeedFailure {
                    seed,
                    step: Some(step),
                    message: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let mut steps = Vec::new();
    if let Some(first) = runs.first() {
        for (k, rec) in first.iter().enumerate() {
            let losses: Vec<f64> = runs.iter().map(|r| r[k].loss).collect();
            let hn: Vec<f64> = runs.iter().filter_map(|r| r[k].h_weighted).collect();
            steps.push(StepStats {
                step: rec.step,
                loss: Quantiles::of(&losses).expect("at least one run"),
                hnorm: if hn.len() == runs.len() {
                    Quantiles::of(&hn)
                } else {
                    None
                },
            });
        }
    }
    let final_losses = runs
        .iter()
        .map(|r| r.last().expect("steps >= 1").loss)
        .collect();
    let hnorm_endpoints = runs
        .iter()
        .filter_map(|r| Some((r.first()?.h_weighted?, r.last()?.h_weighted?)))
        .collect();
    Ok(Summary {
        label: cfg.label(),
        optimizer: cfg.kind(),
        problem: cfg.problem.kind,
        lr: hp.lr,
        seeds_total,
        seeds_ok: runs.len(),
        failures,
        steps,
        final_losses,
        hnorm_endpoints,
        wall_clock_secs,
    })
}

/// Run all seeds with the default execution mode and aggregate.
pub fn run_experiment(cfg: &RunConfig) -> Result<Summary> {
    run_experiment_with(cfg, Execution::default())
}

pub fn run_experiment_with(cfg: &RunConfig, exec: Execution) -> Result<Summary> {
    cfg.validate()?;
    let start = Instant::now();
    let outcomes = run_seeds(cfg, exec);
    summarize(cfg, outcomes, start.elapsed().as_secs_f64())
}

/// One row per learning rate, plus the index of the best (lowest median final loss).
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub runs: Vec<Summary>,
    pub best: usize,
}

impl SweepResult {
    pub fn best(&self) -> &Summary {
        &self.runs[self.best]
    }
}

/// Re-run `cfg` for each learning rate and keep the one with the lowest median final loss.
pub fn sweep(cfg: &RunConfig, lrs: &[f64]) -> Result<SweepResult> {
    if lrs.is_empty() {
        return Err(Error::InvalidConfig("empty learning-rate grid".into()));
    }
    let mut runs = Vec::with_capacity(lrs.len());
    for &lr in lrs {
        let mut c = cfg.clone();
        c.optimizer.lr = Some(lr);
        runs.push(run_experiment(&c)?);
    }
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.median_final_loss().total_cmp(&b.1.median_final_loss()))
        .map(|(i, _)| i)
        .expect("nonempty grid");
    Ok(SweepResult { runs, best })
}

/// One summary per config, sharing problem and step count.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub rows: Vec<Summary>,
    /// Indices into `rows`, ascending by median final loss.
    pub ordering: Vec<usize>,
}

impl Comparison {
    /// Whether row `a` has a strictly lower median final loss than row `b`.
    pub fn beats(&self, a: usize, b: usize) -> bool {
        self.rows[a].median_final_loss() < self.rows[b].median_final_loss()
    }
}

pub fn compare_suite(cfgs: &[RunConfig]) -> Result<Comparison> {
    let first = cfgs
        .first()
        .ok_or_else(|| Error::InvalidConfig("no configs to compare".into()))?;
    for c in &cfgs[1..] {
        if c.problem != first.problem || c.steps != first.steps {
            return Err(Error::InvalidConfig(format!(
                "compared configs must share problem and steps: {} vs {}",
                first.label(),
                c.label()
            )));
        }
    }
    let rows = cfgs
        .iter()
        .map(run_experiment)
        .collect::<Result<Vec<_>>>()?;
    let mut ordering: Vec<usize> = (0..rows.len()).collect();
    ordering.sort_by(|&a, &b| {
        rows[a]
            .median_final_loss()
            .total_cmp(&rows[b].median_final_loss())
    });
    Ok(Comparison { rows, ordering })
}
