//! Online first-order updates and the offline oracle solver.
//!
//! The online updates are plain stochastic gradient steps and their proximal
//! composite variant x <- prox_{gamma R}(x - gamma g). Both share one forward
//! pass so that the proximal step with no regularizer reproduces the plain
//! step bit for bit. The offline solver runs deterministic proximal gradient
//! descent on a population or sample objective until the composite value
//! stops improving, and is used to compute per-round comparator values.

use crate::drift::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::losses::{population_grad, population_value, Loss, Regularizer};

/// Iterate norm beyond which the oracle solver reports divergence.
const DIVERGENCE_NORM: f64 = 1e8;

/// Step-size schedules gamma_t for 1-based rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// gamma_t = c / sqrt(T) for a fixed horizon T.
    ConstantOverSqrtHorizon { c: f64, horizon: u64 },
    /// gamma_t = c / sqrt(t).
    DecayingOverSqrtRound { c: f64 },
}

impl StepSchedule {
    pub fn constant_over_sqrt_horizon(c: f64, horizon: u64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::arg("schedule constant must be > 0"));
        }
        if horizon == 0 {
            return Err(Error::arg("schedule horizon must be >= 1"));
        }
        Ok(StepSchedule::ConstantOverSqrtHorizon { c, horizon })
    }

    pub fn decaying_over_sqrt_round(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::arg("schedule constant must be > 0"));
        }
        Ok(StepSchedule::DecayingOverSqrtRound { c })
    }

    /// Step size at round `t >= 1`.
    pub fn step_size(&self, t: u64) -> Result<f64> {
        if t == 0 {
            return Err(Error::arg("rounds are 1-based; got t = 0"));
        }
        Ok(match *self {
            StepSchedule::ConstantOverSqrtHorizon { c, horizon } => c / (horizon as f64).sqrt(),
            StepSchedule::DecayingOverSqrtRound { c } => c / (t as f64).sqrt(),
        })
    }
}

/// Step size at round `t` (operation form of [`StepSchedule::step_size`]).
pub fn step_size(schedule: &StepSchedule, t: u64) -> Result<f64> {
    schedule.step_size(t)
}

/// Online iterate, its 1-based round counter, and the step schedule.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub iterate: Vec<f64>,
    pub t: u64,
    pub schedule: StepSchedule,
}

impl OptimizerState {
    pub fn new(initial: Vec<f64>, schedule: StepSchedule) -> Result<Self> {
        if initial.is_empty() {
            return Err(Error::arg("iterate must be nonempty"));
        }
        if initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("iterate must be finite"));
        }
        schedule.step_size(1)?;
        Ok(OptimizerState {
            iterate: initial,
            t: 1,
            schedule,
        })
    }

    /// Step size the next update will use.
    pub fn current_step(&self) -> Result<f64> {
        self.schedule.step_size(self.t)
    }

    fn check_grad(&self, grad: &[f64]) -> Result<()> {
        if grad.len() != self.iterate.len() {
            return Err(Error::dim(format!(
                "gradient length {} does not match iterate length {}",
                grad.len(),
                self.iterate.len()
            )));
        }
        Ok(())
    }

    /// Plain update x <- x - gamma_t g, then advance the round.
    pub fn sgd_step(&mut self, grad: &[f64]) -> Result<()> {
        self.check_grad(grad)?;
        let gamma = self.current_step()?;
        self.iterate = forward(&self.iterate, grad, gamma);
        self.t += 1;
        Ok(())
    }

    /// Composite update x <- prox_{gamma_t R}(x - gamma_t g).
    pub fn prox_sgd_step(&mut self, grad: &[f64], regularizer: &Regularizer) -> Result<()> {
        self.check_grad(grad)?;
        regularizer.validate(self.iterate.len())?;
        let gamma = self.current_step()?;
        let fwd = forward(&self.iterate, grad, gamma);
        self.iterate = regularizer.prox(&fwd, gamma);
        self.t += 1;
        Ok(())
    }

    /// Composite update whose proximal map acts on the leading
    /// `applied_len` coordinates only; the tail takes the plain step.
    ///
    /// Used by the CVaR surrogate, where the regularizer constrains the
    /// predictor block but never the threshold coordinate.
    pub fn prox_sgd_step_partial(
        &mut self,
        grad: &[f64],
        regularizer: &Regularizer,
        applied_len: usize,
    ) -> Result<()> {
        self.check_grad(grad)?;
        if applied_len > self.iterate.len() {
            return Err(Error::dim(format!(
                "prox block length {applied_len} exceeds iterate length {}",
                self.iterate.len()
            )));
        }
        regularizer.validate(applied_len)?;
        let gamma = self.current_step()?;
        let mut fwd = forward(&self.iterate, grad, gamma);
        let head = regularizer.prox(&fwd[..applied_len], gamma);
        fwd[..applied_len].copy_from_slice(&head);
        self.iterate = fwd;
        self.t += 1;
        Ok(())
    }
}

/// Forward gradient step shared by the plain and proximal updates.
fn forward(x: &[f64], grad: &[f64], gamma: f64) -> Vec<f64> {
    x.iter().zip(grad).map(|(&xi, &gi)| xi - gamma * gi).collect()
}

/// Initial point policy for oracle solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum OracleInit {
    /// Start from the ground-truth parameter of the round.
    TrueTheta,
    /// Start from the origin.
    Origin,
}

/// Offline solver configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OracleSettings {
    pub step: f64,
    /// Stop when the composite objective improves by less than this.
    pub objective_tolerance: f64,
    pub max_iterations: usize,
    /// Fresh samples drawn per round for sample-based oracle objectives.
    pub oracle_sample_count: usize,
    pub init: OracleInit,
}

impl OracleSettings {
    /// Solver settings for the filtering comparator.
    pub fn filtering_default() -> Self {
        OracleSettings {
            step: 0.01,
            objective_tolerance: 1e-6,
            max_iterations: 1000,
            oracle_sample_count: 0,
            init: OracleInit::TrueTheta,
        }
    }

    /// Solver settings for the sample-based CVaR comparator.
    pub fn cvar_default() -> Self {
        OracleSettings {
            step: 0.01,
            objective_tolerance: 0.01,
            max_iterations: 1000,
            oracle_sample_count: 100,
            init: OracleInit::Origin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::arg("oracle step must be > 0"));
        }
        if !(self.objective_tolerance >= 0.0) {
            return Err(Error::arg("oracle tolerance must be >= 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::arg("oracle iteration cap must be >= 1"));
        }
        Ok(())
    }
}

/// Smooth objective interface for the offline solver.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
}

/// Population filtering objective ||theta - theta_true||^2 + sigma^2.
#[derive(Debug, Clone)]
pub struct FilteringObjective {
    pub theta_true: Vec<f64>,
    pub noise_variance: f64,
}

impl Objective for FilteringObjective {
    fn dim(&self) -> usize {
        self.theta_true.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let sq: f64 = x
            .iter()
            .zip(&self.theta_true)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        sq + self.noise_variance
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.theta_true)
            .map(|(&a, &b)| 2.0 * (a - b))
            .collect()
    }
}

/// Empirical average of a pointwise loss over a fixed sample set.
#[derive(Debug, Clone)]
pub struct SampleObjective<L: Loss> {
    pub loss: L,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

impl<L: Loss> SampleObjective<L> {
    pub fn new(loss: L, inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != outputs.len() {
            return Err(Error::arg("sample objective needs matching nonempty samples"));
        }
        let n = inputs[0].len();
        if inputs.iter().any(|u| u.len() != n) {
            return Err(Error::dim("sample inputs have mixed dimensions"));
        }
        Ok(SampleObjective {
            loss,
            inputs,
            outputs,
        })
    }
}

impl<L: Loss> Objective for SampleObjective<L> {
    fn dim(&self) -> usize {
        self.loss.param_len(self.inputs[0].len())
    }

    fn value(&self, x: &[f64]) -> f64 {
        let m = self.inputs.len() as f64;
        self.inputs
            .iter()
            .zip(&self.outputs)
            .map(|(u, &d)| self.loss.value(x, u, d))
            .sum::<f64>()
            / m
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let m = self.inputs.len() as f64;
        let mut g = vec![0.0; x.len()];
        for (u, &d) in self.inputs.iter().zip(&self.outputs) {
            for (gi, li) in g.iter_mut().zip(self.loss.grad(x, u, d)) {
                *gi += li / m;
            }
        }
        g
    }
}

/// Exact population objective under a discrete measure.
#[derive(Debug)]
pub struct DiscreteObjective<'a, L: Loss> {
    pub loss: &'a L,
    pub dist: &'a DiscreteDistribution,
}

impl<L: Loss> Objective for DiscreteObjective<'_, L> {
    fn dim(&self) -> usize {
        self.loss.param_len(self.dist.dimension() - 1)
    }

    fn value(&self, x: &[f64]) -> f64 {
        population_value(self.loss, x, self.dist).expect("dimensions checked at construction")
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        population_grad(self.loss, x, self.dist)
            .expect("dimensions checked at construction")
            .grad
    }
}

/// Result of an offline oracle solve.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub x: Vec<f64>,
    /// Composite objective value at `x`.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Proximal gradient descent on objective + regularizer from `init`.
///
/// Stops once the composite value improves by less than the tolerance,
/// reports non-convergence when the iteration cap is reached first, and
/// fails with a divergence error if the iterate or value blows up.
pub fn offline_solve<O: Objective>(
    objective: &O,
    regularizer: &Regularizer,
    init: &[f64],
    settings: &OracleSettings,
) -> Result<OracleOutcome> {
    offline_solve_partial(objective, regularizer, init.len(), init, settings)
}

/// [`offline_solve`] with the proximal map restricted to the leading
/// `prox_len` coordinates; the tail takes plain gradient steps.
pub fn offline_solve_partial<O: Objective>(
    objective: &O,
    regularizer: &Regularizer,
    prox_len: usize,
    init: &[f64],
    settings: &OracleSettings,
) -> Result<OracleOutcome> {
    settings.validate()?;
    if init.len() != objective.dim() {
        return Err(Error::dim(format!(
            "oracle init length {} does not match objective dimension {}",
            init.len(),
            objective.dim()
        )));
    }
    if prox_len > init.len() {
        return Err(Error::dim(format!(
            "prox block length {prox_len} exceeds iterate length {}",
            init.len()
        )));
    }
    regularizer.validate(prox_len)?;
    let composite =
        |x: &[f64]| -> f64 { objective.value(x) + regularizer.value(&x[..prox_len]) };
    let mut x = init.to_vec();
    let mut prev = composite(&x);
    let mut value = prev;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..settings.max_iterations {
        let g = objective.grad(&x);
        let mut fwd = forward(&x, &g, settings.step);
        let head = regularizer.prox(&fwd[..prox_len], settings.step);
        fwd[..prox_len].copy_from_slice(&head);
        x = fwd;
        iterations += 1;
        value = composite(&x);
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        if !value.is_finite() || !norm_sq.is_finite() || norm_sq > DIVERGENCE_NORM * DIVERGENCE_NORM
        {
            return Err(Error::Divergence(format!(
                "oracle solve diverged after {iterations} iterations"
            )));
        }
        if (prev - value).abs() < settings.objective_tolerance {
            converged = true;
            break;
        }
        prev = value;
    }
    Ok(OracleOutcome {
        x,
        value,
        iterations,
        converged,
    })
}

/// Minimizer of the filtering objective plus a regularizer.
///
/// Closed form for the identity and box cases; otherwise defers to the
/// offline solver started at the ground truth.
pub fn filtering_optimum(
    theta_true: &[f64],
    noise_variance: f64,
    regularizer: &Regularizer,
    settings: &OracleSettings,
) -> Result<OracleOutcome> {
    regularizer.validate(theta_true.len())?;
    match regularizer {
        Regularizer::None => Ok(OracleOutcome {
            x: theta_true.to_vec(),
            value: noise_variance,
            iterations: 0,
            converged: true,
        }),
        Regularizer::Box { lower, upper } => {
            let x: Vec<f64> = theta_true
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&l, &u))| v.clamp(l, u))
                .collect();
            let sq: f64 = x
                .iter()
                .zip(theta_true)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            Ok(OracleOutcome {
                x,
                value: sq + noise_variance,
                iterations: 0,
                converged: true,
            })
        }
        Regularizer::L1 { .. } => {
            let objective = FilteringObjective {
                theta_true: theta_true.to_vec(),
                noise_variance,
            };
            offline_solve(&objective, regularizer, theta_true, settings)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::SquaredLossModel;

    #[test]
    fn schedule_values() {
        let constant = StepSchedule::constant_over_sqrt_horizon(0.01, 500).unwrap();
        let g = constant.step_size(1).unwrap();
        assert!((g - 0.01 / 500f64.sqrt()).abs() < 1e-18);
        assert_eq!(constant.step_size(499).unwrap(), g);

        let decaying = StepSchedule::decaying_over_sqrt_round(0.01).unwrap();
        assert_eq!(decaying.step_size(1).unwrap(), 0.01);
        assert!((decaying.step_size(4).unwrap() - 0.005).abs() < 1e-18);

        assert!(decaying.step_size(0).is_err());
        assert!(StepSchedule::constant_over_sqrt_horizon(0.0, 10).is_err());
        assert!(StepSchedule::constant_over_sqrt_horizon(0.01, 0).is_err());
    }

    #[test]
    fn sgd_step_hand_value() {
        let schedule = StepSchedule::constant_over_sqrt_horizon(0.1, 1).unwrap();
        let mut state = OptimizerState::new(vec![1.0], schedule).unwrap();
        state.sgd_step(&[2.0]).unwrap();
        assert_eq!(state.iterate, vec![0.8]);
        assert_eq!(state.t, 2);
    }

    #[test]
    fn prox_step_with_no_regularizer_is_bit_identical_to_sgd() {
        let schedule = StepSchedule::decaying_over_sqrt_round(0.3).unwrap();
        let mut plain = OptimizerState::new(vec![0.1, -0.7, 2.3], schedule).unwrap();
        let mut proximal = plain.clone();
        let grads = [
            vec![0.11, -3.0, 0.5],
            vec![1e-3, 2.0, -0.25],
            vec![-7.5, 0.125, 9.0],
        ];
        for g in &grads {
            plain.sgd_step(g).unwrap();
            proximal.prox_sgd_step(g, &Regularizer::None).unwrap();
        }
        for (a, b) in plain.iterate.iter().zip(&proximal.iterate) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn prox_step_clamps_into_box() {
        let schedule = StepSchedule::constant_over_sqrt_horizon(1.0, 1).unwrap();
        let mut state = OptimizerState::new(vec![4.9, -4.9], schedule).unwrap();
        let cube = Regularizer::cube(2, -5.0, 5.0);
        state.prox_sgd_step(&[-1.0, 1.0], &cube).unwrap();
        assert_eq!(state.iterate, vec![5.0, -5.0]);
    }

    #[test]
    fn partial_prox_leaves_tail_coordinate_free() {
        let schedule = StepSchedule::constant_over_sqrt_horizon(1.0, 1).unwrap();
        let mut state = OptimizerState::new(vec![4.5, -10.0], schedule).unwrap();
        let cube = Regularizer::cube(1, -5.0, 5.0);
        // Forward point is (5.5, -12.0); only the first coordinate clamps.
        state
            .prox_sgd_step_partial(&[-1.0, 2.0], &cube, 1)
            .unwrap();
        assert_eq!(state.iterate, vec![5.0, -12.0]);
        assert!(state
            .prox_sgd_step_partial(&[0.0, 0.0], &cube, 3)
            .is_err());
    }

    #[test]
    fn gradient_length_mismatch_rejected() {
        let schedule = StepSchedule::decaying_over_sqrt_round(0.1).unwrap();
        let mut state = OptimizerState::new(vec![0.0, 0.0], schedule).unwrap();
        assert!(state.sgd_step(&[1.0]).is_err());
    }

    #[test]
    fn oracle_converges_on_quadratic() {
        let objective = FilteringObjective {
            theta_true: vec![1.0, -2.0],
            noise_variance: 0.25,
        };
        let settings = OracleSettings::filtering_default();
        let out = offline_solve(&objective, &Regularizer::None, &[0.0, 0.0], &settings).unwrap();
        assert!(out.converged, "no convergence in {} iterations", out.iterations);
        assert!((out.x[0] - 1.0).abs() < 1e-2);
        assert!((out.x[1] + 2.0).abs() < 1e-2);
        assert!((out.value - 0.25).abs() < 1e-3);
    }

    #[test]
    fn oracle_matches_soft_threshold_solution() {
        // min ||theta - c||^2 + |theta|_1 has solution soft(c, 1/2).
        let objective = FilteringObjective {
            theta_true: vec![1.0, 0.2],
            noise_variance: 0.0,
        };
        let l1 = Regularizer::l1(1.0).unwrap();
        let mut settings = OracleSettings::filtering_default();
        settings.objective_tolerance = 1e-10;
        let out = offline_solve(&objective, &l1, &[1.0, 0.2], &settings).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 0.5).abs() < 1e-3, "got {}", out.x[0]);
        assert!(out.x[1].abs() < 1e-3, "got {}", out.x[1]);
    }

    #[test]
    fn oracle_detects_divergence() {
        let objective = FilteringObjective {
            theta_true: vec![1.0],
            noise_variance: 0.0,
        };
        let settings = OracleSettings {
            step: 1e7,
            objective_tolerance: 0.0,
            max_iterations: 1000,
            oracle_sample_count: 0,
            init: OracleInit::Origin,
        };
        let err = offline_solve(&objective, &Regularizer::None, &[0.0], &settings).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
    }

    #[test]
    fn filtering_optimum_closed_forms() {
        let none = filtering_optimum(
            &[0.4, -0.9],
            0.5,
            &Regularizer::None,
            &OracleSettings::filtering_default(),
        )
        .unwrap();
        assert_eq!(none.x, vec![0.4, -0.9]);
        assert_eq!(none.value, 0.5);

        let cube = Regularizer::cube(2, -0.5, 0.5);
        let boxed = filtering_optimum(
            &[0.4, -0.9],
            0.5,
            &cube,
            &OracleSettings::filtering_default(),
        )
        .unwrap();
        assert_eq!(boxed.x, vec![0.4, -0.5]);
        let expected = 0.4 * 0.4 + 0.5;
        assert!((boxed.value - expected).abs() < 1e-15);

        let l1 = Regularizer::l1(1.0).unwrap();
        let lasso = filtering_optimum(
            &[1.0, 0.2],
            0.0,
            &l1,
            &OracleSettings {
                objective_tolerance: 1e-10,
                ..OracleSettings::filtering_default()
            },
        )
        .unwrap();
        assert!((lasso.x[0] - 0.5).abs() < 1e-3);
        assert!(lasso.x[1].abs() < 1e-3);
    }

    #[test]
    fn sample_objective_averages_pointwise_losses() {
        let obj = SampleObjective::new(
            SquaredLossModel,
            vec![vec![1.0], vec![1.0]],
            vec![1.0, 3.0],
        )
        .unwrap();
        // At theta = 2: losses are 1 and 1, average 1.
        assert!((obj.value(&[2.0]) - 1.0).abs() < 1e-15);
        // Gradients: -2(1-2) = 2 and -2(3-2) = -2, average 0.
        assert!(obj.grad(&[2.0])[0].abs() < 1e-15);
    }
}
