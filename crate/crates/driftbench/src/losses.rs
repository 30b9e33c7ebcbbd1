//! Loss models, population objectives, VaR/CVaR oracles, and regularizers.
//!
//! The base loss is squared regression error on a linear predictor. Its
//! CVaR surrogate augments the parameter vector with a scalar threshold h:
//! l_a(theta, h; u, d) = h + (1/alpha) * max(base(theta; u, d) - h, 0).
//! Population quantities are exact weighted sums over a discrete measure's
//! atoms; gradients use the strict-inequality event set, and atoms sitting
//! exactly on the threshold are reported as ties rather than silently
//! assigned a side.

use crate::drift::{dot, DiscreteDistribution, SampleBatch};
use crate::error::{Error, Result};

/// Squared regression loss (d - theta . u)^2 on the linear predictor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SquaredLossModel;

/// CVaR-augmented surrogate of the squared loss at level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CVaRLossModel {
    pub alpha: f64,
    pub base: SquaredLossModel,
}

impl CVaRLossModel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::arg(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(CVaRLossModel {
            alpha,
            base: SquaredLossModel,
        })
    }
}

/// Pointwise loss interface over regression samples `(u, d)`.
///
/// The parameter vector is model-specific: the raw predictor weights for the
/// squared loss, the weights plus a trailing threshold for the CVaR
/// surrogate. The predictor itself is fixed to `theta . u`; models generic
/// in the predictor can be added behind this trait.
pub trait Loss {
    /// Parameter-vector length for inputs of dimension `n`.
    fn param_len(&self, n: usize) -> usize;
    fn value(&self, x: &[f64], u: &[f64], d: f64) -> f64;
    /// Pointwise (sub)gradient with respect to the parameters.
    fn grad(&self, x: &[f64], u: &[f64], d: f64) -> Vec<f64>;
    /// True when the sample sits exactly on a nonsmooth kink at `x`.
    fn is_kink(&self, x: &[f64], u: &[f64], d: f64) -> bool {
        let _ = (x, u, d);
        false
    }
}

/// Loss value of the squared model.
pub fn squared_value(theta: &[f64], u: &[f64], d: f64) -> Result<f64> {
    if theta.len() != u.len() {
        return Err(Error::dim(format!(
            "theta has length {}, input has length {}",
            theta.len(),
            u.len()
        )));
    }
    let r = d - dot(theta, u);
    Ok(r * r)
}

/// Gradient of the squared model: -2 (d - theta . u) u.
pub fn squared_grad(theta: &[f64], u: &[f64], d: f64) -> Result<Vec<f64>> {
    if theta.len() != u.len() {
        return Err(Error::dim(format!(
            "theta has length {}, input has length {}",
            theta.len(),
            u.len()
        )));
    }
    let r = d - dot(theta, u);
    Ok(u.iter().map(|&ui| -2.0 * r * ui).collect())
}

impl Loss for SquaredLossModel {
    fn param_len(&self, n: usize) -> usize {
        n
    }

    fn value(&self, x: &[f64], u: &[f64], d: f64) -> f64 {
        let r = d - dot(x, u);
        r * r
    }

    fn grad(&self, x: &[f64], u: &[f64], d: f64) -> Vec<f64> {
        let r = d - dot(x, u);
        u.iter().map(|&ui| -2.0 * r * ui).collect()
    }
}

impl Loss for CVaRLossModel {
    fn param_len(&self, n: usize) -> usize {
        n + 1
    }

    fn value(&self, x: &[f64], u: &[f64], d: f64) -> f64 {
        let (theta, h) = split_params(x);
        cvar_pointwise_unchecked(theta, h, u, d, self.alpha)
    }

    fn grad(&self, x: &[f64], u: &[f64], d: f64) -> Vec<f64> {
        let (theta, h) = split_params(x);
        let mut g = vec![0.0; x.len()];
        let base = self.base.value(theta, u, d);
        if base - h > 0.0 {
            let inv = 1.0 / self.alpha;
            for (gi, bi) in g.iter_mut().zip(self.base.grad(theta, u, d)) {
                *gi = inv * bi;
            }
            g[x.len() - 1] = 1.0 - inv;
        } else {
            g[x.len() - 1] = 1.0;
        }
        g
    }

    fn is_kink(&self, x: &[f64], u: &[f64], d: f64) -> bool {
        let (theta, h) = split_params(x);
        self.base.value(theta, u, d) == h
    }
}

fn split_params(x: &[f64]) -> (&[f64], f64) {
    let n = x.len() - 1;
    (&x[..n], x[n])
}

/// CVaR surrogate loss at one sample.
pub fn cvar_pointwise(theta: &[f64], h: f64, u: &[f64], d: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if theta.len() != u.len() {
        return Err(Error::dim("theta and input lengths differ"));
    }
    Ok(cvar_pointwise_unchecked(theta, h, u, d, alpha))
}

fn cvar_pointwise_unchecked(theta: &[f64], h: f64, u: &[f64], d: f64, alpha: f64) -> f64 {
    let r = d - dot(theta, u);
    h + (r * r - h).max(0.0) / alpha
}

/// Samples whose base loss strictly exceeds the threshold.
#[derive(Debug, Clone)]
pub struct EventSet {
    pub theta: Vec<f64>,
    pub h: f64,
}

impl EventSet {
    pub fn new(theta: Vec<f64>, h: f64) -> Self {
        EventSet { theta, h }
    }

    /// Strict inequality: threshold ties are excluded.
    pub fn contains(&self, u: &[f64], d: f64) -> bool {
        SquaredLossModel.value(&self.theta, u, d) - self.h > 0.0
    }

    /// The sample sits exactly on the threshold.
    pub fn is_boundary(&self, u: &[f64], d: f64) -> bool {
        SquaredLossModel.value(&self.theta, u, d) == self.h
    }
}

/// Population gradient plus a count of atoms lying exactly on a kink.
#[derive(Debug, Clone)]
pub struct PopulationGrad {
    pub grad: Vec<f64>,
    /// Atoms whose base loss ties the threshold; nonzero means the one-sided
    /// value should be treated with care.
    pub tie_count: usize,
}

impl PopulationGrad {
    pub fn has_ties(&self) -> bool {
        self.tie_count > 0
    }
}

fn check_population_dims<L: Loss>(loss: &L, x: &[f64], p: &DiscreteDistribution) -> Result<usize> {
    let k = p.dimension();
    if k < 2 {
        return Err(Error::dim(
            "population losses need regression atoms [u..., d]",
        ));
    }
    let n = k - 1;
    if loss.param_len(n) != x.len() {
        return Err(Error::dim(format!(
            "parameter length {} does not match atoms with input dimension {n}",
            x.len()
        )));
    }
    Ok(n)
}

/// Exact population loss under a discrete measure on regression atoms.
pub fn population_value<L: Loss>(loss: &L, x: &[f64], p: &DiscreteDistribution) -> Result<f64> {
    check_population_dims(loss, x, p)?;
    let mut total = 0.0;
    for i in 0..p.len() {
        let (u, d) = p.regression_atom(i);
        total += p.weights()[i] * loss.value(x, u, d);
    }
    Ok(total)
}

/// Exact population gradient under a discrete measure, with tie reporting.
pub fn population_grad<L: Loss>(
    loss: &L,
    x: &[f64],
    p: &DiscreteDistribution,
) -> Result<PopulationGrad> {
    check_population_dims(loss, x, p)?;
    let mut grad = vec![0.0; x.len()];
    let mut tie_count = 0;
    for i in 0..p.len() {
        let (u, d) = p.regression_atom(i);
        if loss.is_kink(x, u, d) {
            tie_count += 1;
        }
        let w = p.weights()[i];
        for (gi, li) in grad.iter_mut().zip(loss.grad(x, u, d)) {
            *gi += w * li;
        }
    }
    Ok(PopulationGrad { grad, tie_count })
}

/// Indicator-based stochastic gradient of the CVaR surrogate on a batch.
///
/// Returns the length n+1 vector whose theta block averages the event-set
/// base gradients scaled by 1/alpha and whose last entry is
/// 1 - |event| / (alpha m). Threshold ties count as outside the event.
pub fn cvar_stochastic_grad(
    theta: &[f64],
    h: f64,
    batch: &SampleBatch,
    alpha: f64,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::arg("batch must be nonempty"));
    }
    let model = CVaRLossModel::new(alpha)?;
    let mut x = theta.to_vec();
    x.push(h);
    let mut g = vec![0.0; x.len()];
    let m = batch.len() as f64;
    for (u, &d) in batch.inputs.iter().zip(&batch.outputs) {
        if u.len() != theta.len() {
            return Err(Error::dim("batch input dimension mismatch"));
        }
        for (gi, li) in g.iter_mut().zip(model.grad(&x, u, d)) {
            *gi += li / m;
        }
    }
    Ok(g)
}

/// Left-side (1 - alpha)-quantile of a scalar discrete law.
pub fn var_discrete(z: &DiscreteDistribution, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let values = z.scalar_values()?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite atoms"));
    if alpha == 1.0 {
        // The (1 - alpha) = 0 quantile degenerates to the essential infimum.
        return Ok(values[order[0]]);
    }
    let target = 1.0 - alpha;
    let mut cum = 0.0;
    for &i in &order {
        cum += z.weights()[i];
        if cum >= target - 1e-12 {
            return Ok(values[i]);
        }
    }
    Ok(values[*order.last().expect("nonempty")])
}

/// CVaR of a scalar discrete law: the infimum of h + E(Z - h)_+ / alpha.
///
/// The objective is piecewise linear and convex in h with breakpoints at the
/// atoms, so scanning atom values is exact.
pub fn cvar_discrete(z: &DiscreteDistribution, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let values = z.scalar_values()?;
    let weights = z.weights();
    let objective = |h: f64| -> f64 {
        let excess: f64 = values
            .iter()
            .zip(weights)
            .map(|(&v, &w)| w * (v - h).max(0.0))
            .sum();
        h + excess / alpha
    };
    let mut best = f64::INFINITY;
    for &h in &values {
        best = best.min(objective(h));
    }
    Ok(best)
}

/// Proximal regularizers for the composite objectives.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    None,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    L1 { weight: f64 },
}

impl Regularizer {
    /// Axis-aligned cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Regularizer::Box {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn l1(weight: f64) -> Result<Self> {
        if !(weight >= 0.0) {
            return Err(Error::arg("l1 weight must be >= 0"));
        }
        Ok(Regularizer::L1 { weight })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Regularizer::None => Ok(()),
            Regularizer::Box { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::dim("box bounds do not match the dimension"));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                    return Err(Error::arg("box requires lower <= upper componentwise"));
                }
                Ok(())
            }
            Regularizer::L1 { weight } => {
                if !(*weight >= 0.0) {
                    return Err(Error::arg("l1 weight must be >= 0"));
                }
                Ok(())
            }
        }
    }

    /// Proximal map of `gamma * R` at `x`.
    ///
    /// Identity for no regularizer, componentwise clamp for the box
    /// indicator, componentwise soft threshold for l1.
    pub fn prox(&self, x: &[f64], gamma: f64) -> Vec<f64> {
        match self {
            Regularizer::None => x.to_vec(),
            Regularizer::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&l, &u))| v.clamp(l, u))
                .collect(),
            Regularizer::L1 { weight } => {
                let tau = gamma * weight;
                x.iter()
                    .map(|&v| v.signum() * (v.abs() - tau).max(0.0))
                    .collect()
            }
        }
    }

    /// Regularizer value, with `+inf` as the box indicator outside the box.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Regularizer::None => 0.0,
            Regularizer::Box { lower, upper } => {
                let inside = x
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(&v, (&l, &u))| l <= v && v <= u);
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Regularizer::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }
}

/// Proximal map of `gamma * R` (operation form of [`Regularizer::prox`]).
pub fn prox(regularizer: &Regularizer, x: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::arg("prox step gamma must be > 0"));
    }
    regularizer.validate(x.len())?;
    Ok(regularizer.prox(x, gamma))
}

/// Extended-real regularizer value (operation form of [`Regularizer::value`]).
pub fn regularizer_value(regularizer: &Regularizer, x: &[f64]) -> f64 {
    regularizer.value(x)
}
