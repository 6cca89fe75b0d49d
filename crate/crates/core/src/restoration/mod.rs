//! Recovering the clear scene from a degraded observation.
//!
//! With known water parameters and range the improved model can be inverted
//! in closed form ([`analytic_invert`]) or by minimising any restoration loss
//! between the re-synthesised and the observed image
//! ([`invert_by_gradient_descent`]). Parameter-free baselines live in
//! [`classical`].

pub mod classical;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use classical::{
    equalize_hist, estimate_transmission_udcp, gray_world_balance, recover_with_transmission,
    restore_udcp, UdcpConfig, UdcpEstimate,
};

use crate::error::{shape_mismatch, Error, Result};
use crate::image::{DepthMap, Image};
use crate::imaging::{forward_sensitivity, improved_backscatter, WaterParams};
use crate::losses::{self, LossKind, LossSpec};

/// Backtracking halvings tried before an iteration gives up.
pub const MAX_BACKTRACKS: usize = 30;

/// Ceiling on the adaptive step, as a multiple of [`InversionConfig::step_size`].
pub const MAX_STEP_GROWTH: f64 = 1024.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionConfig {
    /// Transmissions below this are replaced by it when dividing.
    pub transmission_floor: f64,
    pub max_iters: usize,
    /// Initial step along the preconditioned descent direction.
    pub step_size: f64,
    pub loss: LossSpec,
    /// Stop once an accepted step lowers the loss by less than this.
    pub stop_tol: f64,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
    /// Curvature pairs kept for quasi-Newton directions; 0 gives plain
    /// preconditioned gradient steps.
    pub history: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            transmission_floor: 0.05,
            max_iters: 500,
            step_size: 0.5,
            loss: LossSpec::new(LossKind::L2),
            stop_tol: 1e-8,
            grad_tol: 1e-12,
            history: 8,
        }
    }
}

impl InversionConfig {
    pub fn with_loss(loss: LossSpec) -> Self {
        Self {
            loss,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.transmission_floor > 0.0 && self.transmission_floor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "transmission floor must lie in (0, 1), got {}",
                self.transmission_floor
            )));
        }
        if !(self.step_size > 0.0) || !(self.stop_tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "step size, stop tolerance and iteration budget must be positive".into(),
            ));
        }
        self.loss.validate()
    }
}

/// Closed-form inversion result.
#[derive(Debug, Clone)]
pub struct AnalyticInversion {
    /// Recovered scene clamped to `[0, 1]`.
    pub image: Image,
    /// Recovered scene before clamping.
    pub unclamped: Image,
    /// Per value (interleaved), whether the transmission floor was used.
    pub floored: Vec<bool>,
}

impl AnalyticInversion {
    pub fn floored_fraction(&self) -> f64 {
        self.floored.iter().filter(|f| **f).count() as f64 / self.floored.len() as f64
    }
}

/// `J_c = (I_c - A_c T_c (1 - T')) / max(T_c, floor)`.
pub fn analytic_invert(
    observed: &Image,
    depth: &DepthMap,
    params: &WaterParams,
    cfg: &InversionConfig,
) -> Result<AnalyticInversion> {
    cfg.validate()?;
    check_dims(observed, depth)?;
    let t = forward_sensitivity(depth, params)?;
    let veil = improved_backscatter(depth, params);
    let floor = cfg.transmission_floor;
    let mut floored = Vec::with_capacity(veil.len());
    let raw: Vec<f64> = observed
        .data()
        .iter()
        .zip(t.data())
        .zip(&veil)
        .map(|((i, &tr), b)| {
            floored.push(tr < floor);
            (i - b) / tr.max(floor)
        })
        .collect();
    let unclamped = Image::new(observed.width(), observed.height(), raw)?;
    Ok(AnalyticInversion {
        image: unclamped.clamped(),
        unclamped,
        floored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Gradient norm below tolerance.
    Stationary,
    /// Accepted step improved the loss by less than the stop tolerance.
    Converged,
    /// No improving step within the backtracking budget.
    Stalled,
    MaxIterations,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StopReason::Stationary => "stationary",
            StopReason::Converged => "converged",
            StopReason::Stalled => "stalled",
            StopReason::MaxIterations => "max-iterations",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct DescentOutcome {
    /// Estimate clamped to `[0, 1]`.
    pub image: Image,
    /// Estimate before the final clamp.
    pub unclamped: Image,
    /// Loss before the first step and after every accepted step.
    pub trace: Vec<f64>,
    pub stop: StopReason,
    pub final_grad_norm: f64,
}

impl DescentOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }

    pub fn final_loss(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial loss")
    }
}

/// Minimises `loss(synthesize(J), observed)` over `J`, starting from the
/// observation.
pub fn invert_by_gradient_descent(
    observed: &Image,
    depth: &DepthMap,
    params: &WaterParams,
    cfg: &InversionConfig,
) -> Result<DescentOutcome> {
    descend_from(observed, depth, params, cfg, observed)
}

/// Loss of the improved model at `clear` against `observed`, with its
/// gradient with respect to `clear`.
pub fn inversion_objective(
    clear: &Image,
    observed: &Image,
    depth: &DepthMap,
    params: &WaterParams,
    loss: &LossSpec,
) -> Result<losses::LossResult> {
    let t = forward_sensitivity(depth, params)?;
    let veil = improved_backscatter(depth, params);
    Objective {
        observed,
        t: t.data(),
        veil: &veil,
        loss,
    }
    .eval(clear.data())
}

struct Objective<'a> {
    observed: &'a Image,
    t: &'a [f64],
    veil: &'a [f64],
    loss: &'a LossSpec,
}

impl Objective<'_> {
    fn eval(&self, clear: &[f64]) -> Result<losses::LossResult> {
        let synth: Vec<f64> = clear
            .iter()
            .zip(self.t)
            .zip(self.veil)
            .map(|((j, t), b)| j * t + b)
            .collect();
        let synth = Image::new(self.observed.width(), self.observed.height(), synth)?;
        let mut res = losses::evaluate(self.loss, &synth, self.observed)?;
        for (g, t) in res.gradient.iter_mut().zip(self.t) {
            *g *= t;
        }
        Ok(res)
    }
}

/// Gradient descent from an explicit starting point.
///
/// Directions are the gradient scaled per value by `n / max(T, floor)^2`,
/// where `n` is the number of values: a diagonal preconditioner that undoes
/// the model's per-pixel attenuation and the loss's `1/n` normalisation.
/// With `history > 0` the scaled gradient is refined by limited-memory BFGS
/// updates. Only loss-decreasing steps are accepted; the step is halved on
/// failure. Should a quasi-Newton direction find no decrease, the memory
/// is dropped and the plain scaled gradient is tried before stopping.
pub fn descend_from(
    observed: &Image,
    depth: &DepthMap,
    params: &WaterParams,
    cfg: &InversionConfig,
    init: &Image,
) -> Result<DescentOutcome> {
    cfg.validate()?;
    check_dims(observed, depth)?;
    init.ensure_same_dims(observed)?;
    let t = forward_sensitivity(depth, params)?;
    let veil = improved_backscatter(depth, params);
    let objective = Objective {
        observed,
        t: t.data(),
        veil: &veil,
        loss: &cfg.loss,
    };
    let n = observed.data().len() as f64;
    let precond: Vec<f64> = t
        .data()
        .iter()
        .map(|tr| n / tr.max(cfg.transmission_floor).powi(2))
        .collect();

    let mut clear = init.data().to_vec();
    let mut current = objective.eval(&clear)?;
    if !current.value.is_finite() {
        return Err(Error::DescentFailure {
            reason: "initial loss is not finite".into(),
            trace: vec![current.value],
        });
    }
    let mut trace = vec![current.value];
    let mut memory = Memory::new(cfg.history);
    // Step for plain scaled-gradient directions; quasi-Newton directions
    // carry their own scale and start from a unit step.
    let mut gd_step = cfg.step_size;
    let max_step = cfg.step_size * MAX_STEP_GROWTH;
    let mut stop = StopReason::MaxIterations;

    for iter in 0..cfg.max_iters {
        if norm(&current.gradient) < cfg.grad_tol {
            stop = StopReason::Stationary;
            break;
        }
        let mut accepted = None;
        let mut quasi_newton = !memory.is_empty();
        for _attempt in 0..2 {
            let (direction, mut step) = if quasi_newton {
                (memory.direction(&current.gradient, &precond), 1.0)
            } else {
                (scaled(&current.gradient, &precond), gd_step)
            };
            for _ in 0..MAX_BACKTRACKS {
                let trial: Vec<f64> = clear.iter().zip(&direction).map(|(j, d)| j + step * d).collect();
                let res = objective.eval(&trial)?;
                if res.value.is_finite() && res.value < current.value {
                    accepted = Some((trial, res, step));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() || !quasi_newton {
                break;
            }
            memory.clear();
            quasi_newton = false;
        }
        let Some((trial, res, step)) = accepted else {
            if iter == 0 {
                return Err(Error::DescentFailure {
                    reason: format!(
                        "no loss-decreasing step from the initial estimate within {MAX_BACKTRACKS} halvings"
                    ),
                    trace,
                });
            }
            stop = StopReason::Stalled;
            break;
        };
        if !quasi_newton {
            gd_step = (2.0 * step).min(max_step);
        }
        let decrease = current.value - res.value;
        memory.push(&trial, &clear, &res.gradient, &current.gradient);
        clear = trial;
        current = res;
        trace.push(current.value);
        if decrease < cfg.stop_tol {
            stop = StopReason::Converged;
            break;
        }
    }

    let unclamped = Image::new(observed.width(), observed.height(), clear)?;
    Ok(DescentOutcome {
        image: unclamped.clamped(),
        unclamped,
        trace,
        stop,
        final_grad_norm: norm(&current.gradient),
    })
}

fn scaled(gradient: &[f64], precond: &[f64]) -> Vec<f64> {
    gradient.iter().zip(precond).map(|(g, p)| -g * p).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS curvature pairs `(s, y, 1 / y.s)`, oldest first.
struct Memory {
    capacity: usize,
    pairs: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl Memory {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            pairs: std::collections::VecDeque::with_capacity(capacity),
        }
    }

    fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores the step if it has positive curvature.
    fn push(&mut self, x_new: &[f64], x_old: &[f64], g_new: &[f64], g_old: &[f64]) {
        if self.capacity == 0 {
            return;
        }
        let s: Vec<f64> = x_new.iter().zip(x_old).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(g_old).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * norm(&s) * norm(&y)) {
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion with the diagonal preconditioner, rescaled by the
    /// newest pair, as the initial inverse Hessian.
    fn direction(&self, gradient: &[f64], precond: &[f64]) -> Vec<f64> {
        let mut q = gradient.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let (s, y, _) = self.pairs.back().expect("direction needs at least one pair");
        let ypy: f64 = y.iter().zip(precond).map(|(yi, p)| yi * yi * p).sum();
        let gamma = dot(s, y) / ypy;
        for (qi, p) in q.iter_mut().zip(precond) {
            *qi *= gamma * p;
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_dims(observed: &Image, depth: &DepthMap) -> Result<()> {
    if observed.dims() != depth.dims() {
        return Err(shape_mismatch(observed.dims(), depth.dims()));
    }
    Ok(())
}

/// Restoration method names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Analytic,
    GradDesc,
    Udcp,
    He,
    GrayWorld,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Analytic,
        Method::GradDesc,
        Method::Udcp,
        Method::He,
        Method::GrayWorld,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::GradDesc => "graddesc",
            Method::Udcp => "udcp",
            Method::He => "he",
            Method::GrayWorld => "grayworld",
        }
    }

    /// Whether the method needs water parameters and a range map.
    pub fn is_model_based(self) -> bool {
        matches!(self, Method::Analytic | Method::GradDesc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown restoration method {s:?}")))
    }
}
