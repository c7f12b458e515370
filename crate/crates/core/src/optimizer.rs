//! Design loop: moment-smoothed first-order steps on the control weights with
//! a backtracking guard, convergence detection and checkpoints.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::DesignProblem;
use crate::quantum::RowSuccess;
use crate::splines::ControlGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub learning_rate: f64,
    /// Moment decay rates.
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Step shrink factor after a rejected trial.
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Converged after `patience` consecutive accepted steps with `|ΔC|` below this.
    pub threshold: f64,
    pub patience: usize,
    /// Initial weights are drawn uniformly from `[-init_amplitude, init_amplitude]`.
    pub init_amplitude: f64,
    /// Set from the run configuration, not the optimizer table.
    #[serde(skip)]
    pub seed: u64,
    /// Checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
    /// Stop once every truth-table row reaches this success.
    pub stop_at_success: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            backtrack_factor: 0.5,
            max_backtracks: 6,
            threshold: 1e-5,
            patience: 10,
            init_amplitude: 1.0,
            seed: 1,
            checkpoint_every: 10,
            stop_at_success: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("learning_rate", self.learning_rate),
            ("epsilon", self.epsilon),
            ("threshold", self.threshold),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("optimizer {name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("backtrack_factor", self.backtrack_factor)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(format!("optimizer {name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.init_amplitude >= 0.0 && self.init_amplitude.is_finite()) {
            return Err(Error::config("init_amplitude must be non-negative"));
        }
        if self.threshold >= 1.0 {
            return Err(Error::config("convergence threshold must be below the cost scale of 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be at least 1"));
        }
        if let Some(s) = self.stop_at_success {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::config("stop_at_success must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Value and gradient of an objective over the control weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub cost: f64,
    pub gradient: Array2<f64>,
    pub rows: Vec<RowSuccess>,
    pub eta: f64,
}

pub trait Objective {
    fn sample(&mut self, weights: &Array2<f64>) -> Result<Sample>;
}

/// Gate design objective over a fixed spline layout.
pub struct GateObjective<'a> {
    pub problem: &'a DesignProblem,
    pub template: ControlGrid,
}

impl Objective for GateObjective<'_> {
    fn sample(&mut self, weights: &Array2<f64>) -> Result<Sample> {
        let control = self.template.with_weights(weights.clone())?;
        let ev = self.problem.evaluate(&control, None, true)?;
        Ok(Sample {
            cost: ev.cost.value,
            gradient: ev.gradient.expect("gradient requested"),
            rows: ev.cost.rows,
            eta: ev.delta.eta(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub cost: f64,
    pub min_success: f64,
    pub rows: Vec<f64>,
    pub gradient_norm: f64,
    pub step_scale: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationState {
    pub iteration: usize,
    pub control: ControlGrid,
    pub moment1: Vec<f64>,
    pub moment2: Vec<f64>,
    /// Number of moment updates since the last reset.
    pub moment_steps: u64,
    pub step_scale: f64,
    pub seed: u64,
    /// Consecutive accepted steps with `|ΔC|` below threshold.
    pub quiet_steps: usize,
    pub history: Vec<HistoryEntry>,
    #[serde(skip)]
    current: Option<Sample>,
}

/// Random initial design: weights uniform in `[-a, a]` from a seeded stream.
pub fn init_design(template: &ControlGrid, config: &OptimizerConfig) -> Result<OptimizationState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let a = config.init_amplitude;
    let (nx, ny) = template.shape();
    let w = Array2::from_shape_fn((nx, ny), |_| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 });
    let control = template.with_weights(w)?;
    let n = nx * ny;
    Ok(OptimizationState {
        iteration: 0,
        control,
        moment1: vec![0.0; n],
        moment2: vec![0.0; n],
        moment_steps: 0,
        step_scale: 1.0,
        seed: config.seed,
        quiet_steps: 0,
        history: Vec::new(),
        current: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepResult {
    Accepted,
    /// Every trial increased the cost; moments were reset.
    Rejected,
}

impl OptimizationState {
    pub fn last_cost(&self) -> Option<f64> {
        self.history.last().map(|h| h.cost)
    }

    fn record(&mut self, s: &Sample) {
        let gnorm = s.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
        self.history.push(HistoryEntry {
            iteration: self.iteration,
            cost: s.cost,
            min_success: if s.rows.is_empty() {
                0.0
            } else {
                s.rows.iter().map(|r| r.success).fold(f64::INFINITY, f64::min)
            },
            rows: s.rows.iter().map(|r| r.success).collect(),
            gradient_norm: gnorm,
            step_scale: self.step_scale,
            eta: s.eta,
        });
    }

    /// Evaluate the current design if needed, logging it as the first history entry.
    fn ensure_current<O: Objective>(&mut self, objective: &mut O) -> Result<()> {
        if self.current.is_none() {
            let s = objective.sample(self.control.weights())?;
            if self.history.is_empty() {
                self.record(&s);
            }
            self.current = Some(s);
        }
        Ok(())
    }
}

/// One iteration. On error the state is left as it was.
pub fn step<O: Objective>(state: &mut OptimizationState, objective: &mut O, config: &OptimizerConfig) -> Result<StepResult> {
    state.ensure_current(objective)?;
    let cur = state.current.clone().expect("current sample");
    let g = cur.gradient.as_slice().expect("standard layout");
    let t = state.moment_steps + 1;
    let m: Vec<f64> = state.moment1.iter().zip(g).map(|(m, g)| config.beta1 * m + (1.0 - config.beta1) * g).collect();
    let v: Vec<f64> = state.moment2.iter().zip(g).map(|(v, g)| config.beta2 * v + (1.0 - config.beta2) * g * g).collect();
    let c1 = 1.0 - config.beta1.powi(t as i32);
    let c2 = 1.0 - config.beta2.powi(t as i32);
    let dir: Vec<f64> = m.iter().zip(&v).map(|(m, v)| (m / c1) / ((v / c2).sqrt() + config.epsilon)).collect();

    let p0 = state.control.weights().clone();
    let mut scale = state.step_scale;
    for _ in 0..=config.max_backtracks {
        let lr = config.learning_rate * scale;
        let mut trial = p0.clone();
        for (p, d) in trial.iter_mut().zip(&dir) {
            *p -= lr * d;
        }
        let s = objective.sample(&trial)?;
        if s.cost <= cur.cost {
            let quiet = (cur.cost - s.cost).abs() < config.threshold;
            state.control.set_weights(trial)?;
            state.moment1 = m;
            state.moment2 = v;
            state.moment_steps = t;
            state.iteration += 1;
            state.step_scale = scale;
            state.quiet_steps = if quiet { state.quiet_steps + 1 } else { 0 };
            state.record(&s);
            // recover the nominal rate after a successful step
            state.step_scale = (scale / config.backtrack_factor).min(1.0);
            state.current = Some(s);
            return Ok(StepResult::Accepted);
        }
        scale *= config.backtrack_factor;
    }
    state.moment1.iter_mut().for_each(|x| *x = 0.0);
    state.moment2.iter_mut().for_each(|x| *x = 0.0);
    state.moment_steps = 0;
    state.iteration += 1;
    state.step_scale = scale.max(1e-6);
    Ok(StepResult::Rejected)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    MaxIterations,
    Converged,
    TargetReached,
    /// Several consecutive iterations found no decrease.
    Stalled,
    Failed(String),
}

#[derive(Debug)]
pub struct RunOutcome {
    pub state: OptimizationState,
    pub reason: StopReason,
}

const MAX_REJECTED: usize = 3;

/// Iterate from `state` until a stop condition. `checkpoint` is called at the
/// configured cadence and once more at the end.
pub fn run<O: Objective>(
    mut state: OptimizationState,
    objective: &mut O,
    config: &OptimizerConfig,
    checkpoint: &mut dyn FnMut(&OptimizationState) -> Result<()>,
) -> Result<RunOutcome> {
    config.validate()?;
    let mut rejected = 0;
    let reason = loop {
        if let (Some(target), Some(h)) = (config.stop_at_success, state.history.last()) {
            if h.min_success >= target {
                break StopReason::TargetReached;
            }
        }
        if state.quiet_steps >= config.patience {
            break StopReason::Converged;
        }
        if rejected >= MAX_REJECTED {
            break StopReason::Stalled;
        }
        if state.iteration >= config.max_iters {
            break StopReason::MaxIterations;
        }
        match step(&mut state, objective, config) {
            Ok(StepResult::Accepted) => rejected = 0,
            Ok(StepResult::Rejected) => rejected += 1,
            Err(e) => break StopReason::Failed(e.to_string()),
        }
        log::info!(
            "iteration {} cost {:.6} min success {:.4}",
            state.iteration,
            state.last_cost().unwrap_or(f64::NAN),
            state.history.last().map_or(f64::NAN, |h| h.min_success)
        );
        if config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0 {
            checkpoint(&state)?;
        }
    };
    // make sure the starting design is scored even with no iterations
    if state.history.is_empty() && !matches!(reason, StopReason::Failed(_)) {
        if let Err(e) = state.ensure_current(objective) {
            checkpoint(&state)?;
            return Ok(RunOutcome {
                state,
                reason: StopReason::Failed(e.to_string()),
            });
        }
    }
    checkpoint(&state)?;
    Ok(RunOutcome { state, reason })
}

/// Self-describing checkpoint document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub state: OptimizationState,
}

pub const CHECKPOINT_FORMAT: &str = "rwgate-checkpoint-v1";

impl Checkpoint {
    pub fn new(config: serde_json::Value, state: OptimizationState) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            tool_version: crate::TOOL_VERSION.into(),
            config,
            state,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(s).map_err(|e| Error::Format(format!("checkpoint: {e}")))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("unknown checkpoint format {:?}", ck.format)));
        }
        let (nx, ny) = ck.state.control.shape();
        if ck.state.moment1.len() != nx * ny || ck.state.moment2.len() != nx * ny {
            return Err(Error::Format("checkpoint moments do not match the control grid".into()));
        }
        Ok(ck)
    }
}

/// Clamped uniform control grid used by the optimizer.
pub fn control_template(nx: usize, ny: usize, degree: usize) -> Result<ControlGrid> {
    ControlGrid::clamped_uniform(nx, ny, degree, degree)
}
