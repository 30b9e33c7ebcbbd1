//! Regret accounting and closed-form regret-bound calculators.
//!
//! The ledger stores per-round realized and comparator losses and produces
//! cumulative regret Sum_t (F_t(x_t) - F_t*) along with the relative regret
//! (1/t) Regret(t) / Regret(1). Negative per-round gaps are kept signed;
//! clamping them would bias the regret upward. The bound calculators take
//! the problem constants and per-round drift/noise summaries and evaluate
//! the plain, variance-form, proximal, and CVaR regret bounds.

use crate::error::{Error, Result};

/// Per-round realized and comparator losses, recorded in round order.
#[derive(Debug, Clone, Default)]
pub struct RegretLedger {
    realized: Vec<f64>,
    optimal: Vec<f64>,
}

impl RegretLedger {
    pub fn new() -> Self {
        RegretLedger::default()
    }

    /// Record round `t`; rounds are 1-based and must arrive in order.
    pub fn record(&mut self, t: u64, realized_loss: f64, optimal_loss: f64) -> Result<()> {
        let expected = self.realized.len() as u64 + 1;
        if t != expected {
            return Err(Error::OutOfOrder { expected, got: t });
        }
        if !realized_loss.is_finite() || !optimal_loss.is_finite() {
            return Err(Error::arg(format!(
                "losses at round {t} must be finite, got {realized_loss} and {optimal_loss}"
            )));
        }
        self.realized.push(realized_loss);
        self.optimal.push(optimal_loss);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.realized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realized.is_empty()
    }

    pub fn realized(&self) -> &[f64] {
        &self.realized
    }

    pub fn optimal(&self) -> &[f64] {
        &self.optimal
    }

    /// Cumulative regret over rounds 1..=t.
    pub fn regret(&self, t: u64) -> Result<f64> {
        if t == 0 || t as usize > self.realized.len() {
            return Err(Error::arg(format!(
                "regret horizon {t} outside recorded rounds 1..={}",
                self.realized.len()
            )));
        }
        Ok(self
            .realized
            .iter()
            .zip(&self.optimal)
            .take(t as usize)
            .map(|(&r, &o)| r - o)
            .sum())
    }

    /// Relative regret (1/t) Regret(t) / Regret(1); equals 1 at t = 1.
    pub fn relative_regret(&self, t: u64) -> Result<f64> {
        let first = self.regret(1)?;
        if first == 0.0 {
            return Err(Error::ZeroFirstRoundRegret);
        }
        Ok(self.regret(t)? / (t as f64 * first))
    }

    /// Relative regret at every recorded round.
    pub fn relative_regret_series(&self) -> Result<Vec<f64>> {
        let first = self.regret(1)?;
        if first == 0.0 {
            return Err(Error::ZeroFirstRoundRegret);
        }
        let mut out = Vec::with_capacity(self.realized.len());
        let mut cum = 0.0;
        for (i, (&r, &o)) in self.realized.iter().zip(&self.optimal).enumerate() {
            cum += r - o;
            out.push(cum / ((i + 1) as f64 * first));
        }
        Ok(out)
    }
}

/// Problem constants and per-round summaries feeding the bound calculators.
///
/// The per-round lists cover rounds 1..T-1 and must share one length; the
/// horizon is implied as that length plus one.
#[derive(Debug, Clone)]
pub struct BoundInputs {
    pub mu: f64,
    pub beta: f64,
    pub lipschitz_k: f64,
    /// Comparator-path increments J(eta_t), one per round.
    pub j_values: Vec<f64>,
    /// Per-round drift radii eta_t.
    pub eta: Vec<f64>,
    /// Per-round gradient-noise second moments sigma_t^2.
    pub sigma_sq: Vec<f64>,
    pub gamma: f64,
    /// First-round optimality gap F_1(x_1) - F_1*.
    pub initial_gap: f64,
    /// CVaR curvature kappa = lambda * mu, required by the CVaR bound.
    pub kappa: Option<f64>,
    /// CVaR density bound C, required by the CVaR bound.
    pub c_constant: Option<f64>,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.beta > 0.0) {
            return Err(Error::arg("mu and beta must be > 0"));
        }
        if !(self.lipschitz_k > 0.0) {
            return Err(Error::arg("lipschitz constant must be > 0"));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::arg("gamma must be > 0"));
        }
        if !(self.initial_gap >= 0.0) {
            return Err(Error::arg("initial gap must be >= 0"));
        }
        let n = self.eta.len();
        if self.j_values.len() != n || self.sigma_sq.len() != n {
            return Err(Error::dim(
                "per-round lists eta, j_values, sigma_sq must share one length",
            ));
        }
        if self.eta.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::arg("eta entries must be >= 0"));
        }
        if self.sigma_sq.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::arg("sigma_sq entries must be >= 0"));
        }
        if self.j_values.iter().any(|j| !j.is_finite()) {
            return Err(Error::arg("j_values entries must be finite"));
        }
        Ok(())
    }

    fn sums(&self) -> (f64, f64, f64) {
        let sum_eta: f64 = self.eta.iter().sum();
        let sum_j_sq: f64 = self.j_values.iter().map(|j| j * j).sum();
        let sum_sigma_sq: f64 = self.sigma_sq.iter().sum();
        (sum_eta, sum_j_sq, sum_sigma_sq)
    }
}

fn zeta(gamma: f64, beta: f64) -> f64 {
    gamma - gamma * gamma * beta / 2.0
}

/// Regret bound for stochastic gradient descent under drift.
///
/// Requires gamma in (0, min(1/beta, 1/(2 mu))); see
/// [`theorem1_bound_relaxed`] for the wider admissible range.
pub fn theorem1_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let cap = (1.0 / inputs.beta).min(1.0 / (2.0 * inputs.mu));
    if !(inputs.gamma < cap) {
        return Err(Error::StepOutOfRange {
            gamma: inputs.gamma,
            range: format!("(0, {cap})"),
        });
    }
    theorem1_terms(inputs, false)
}

/// The same bound on the relaxed range where only zeta > 0 is required.
pub fn theorem1_bound_relaxed(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    theorem1_terms(inputs, false)
}

/// Variant with the tighter noise coefficient gamma^2 beta / (4 mu zeta).
///
/// Never exceeds [`theorem1_bound`] when gamma <= 1/beta, since then
/// zeta >= gamma/2.
pub fn theorem1_bound_tight(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let cap = (1.0 / inputs.beta).min(1.0 / (2.0 * inputs.mu));
    if !(inputs.gamma < cap) {
        return Err(Error::StepOutOfRange {
            gamma: inputs.gamma,
            range: format!("(0, {cap})"),
        });
    }
    theorem1_terms(inputs, true)
}

fn theorem1_terms(inputs: &BoundInputs, tight_noise: bool) -> Result<f64> {
    let z = zeta(inputs.gamma, inputs.beta);
    if !(z > 0.0) {
        return Err(Error::StepOutOfRange {
            gamma: inputs.gamma,
            range: format!("(0, {}) for positive zeta", 2.0 / inputs.beta),
        });
    }
    let (sum_eta, sum_j_sq, sum_sigma_sq) = inputs.sums();
    let mu = inputs.mu;
    let noise_coeff = if tight_noise {
        inputs.gamma * inputs.gamma * inputs.beta / (4.0 * mu * z)
    } else {
        inputs.gamma * inputs.beta / (2.0 * mu)
    };
    Ok(inputs.initial_gap / (2.0 * mu * z)
        + inputs.lipschitz_k * sum_eta / (mu * z)
        + sum_j_sq / (4.0 * mu * mu * z)
        + noise_coeff * sum_sigma_sq)
}

/// Variance-form bound at the tuned step gamma = Theta / sqrt(T).
///
/// `sigma` must dominate every per-round noise level sigma_t.
pub fn theorem1_variance_bound(inputs: &BoundInputs, sigma: f64, t_horizon: u64) -> Result<f64> {
    inputs.validate()?;
    if !(sigma >= 0.0) {
        return Err(Error::arg("sigma must be >= 0"));
    }
    if t_horizon == 0 {
        return Err(Error::arg("horizon must be >= 1"));
    }
    if inputs.eta.len() != (t_horizon - 1) as usize {
        return Err(Error::dim(format!(
            "per-round lists have length {}, expected horizon - 1 = {}",
            inputs.eta.len(),
            t_horizon - 1
        )));
    }
    let sigma_sq_cap = sigma * sigma;
    if inputs.sigma_sq.iter().any(|&s| s > sigma_sq_cap) {
        return Err(Error::arg(format!(
            "sigma = {sigma} does not dominate every per-round noise level"
        )));
    }
    let (sum_eta, sum_j_sq, _) = inputs.sums();
    let mu = inputs.mu;
    let theta = (1.0 / inputs.beta).min(1.0 / (2.0 * mu));
    let m1 = inputs.initial_gap / (mu * theta) + sigma_sq_cap / (2.0 * mu);
    let m2 = 2.0 * inputs.lipschitz_k / (mu * theta);
    let m3 = 1.0 / (2.0 * mu * mu * theta);
    let root_t = (t_horizon as f64).sqrt();
    Ok(m1 * root_t + m2 * root_t * sum_eta + m3 * root_t * sum_j_sq)
}

/// Regret bound for proximal stochastic gradient descent under drift.
///
/// Requires gamma in (0, 1/beta).
pub fn theorem2_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    if !(inputs.gamma < 1.0 / inputs.beta) {
        return Err(Error::StepOutOfRange {
            gamma: inputs.gamma,
            range: format!("(0, {})", 1.0 / inputs.beta),
        });
    }
    let (sum_eta, sum_j_sq, sum_sigma_sq) = inputs.sums();
    let mu = inputs.mu;
    let gamma = inputs.gamma;
    Ok(inputs.initial_gap / (2.0 * mu * gamma)
        + inputs.lipschitz_k * sum_eta / (mu * gamma)
        + sum_j_sq / (4.0 * mu * mu * gamma)
        + sum_sigma_sq / (4.0 * mu))
}

/// Regret bound for the CVaR surrogate with curvature kappa and density
/// bound C; `zeta` is supplied by the caller.
pub fn corollary_cvar_bound(inputs: &BoundInputs, zeta: f64) -> Result<f64> {
    inputs.validate()?;
    let kappa = inputs
        .kappa
        .ok_or_else(|| Error::arg("cvar bound requires kappa"))?;
    let c = inputs
        .c_constant
        .ok_or_else(|| Error::arg("cvar bound requires the density constant"))?;
    if !(kappa > 0.0) {
        return Err(Error::arg("kappa must be > 0"));
    }
    if !(c > 0.0) {
        return Err(Error::arg("density constant must be > 0"));
    }
    if !(zeta > 0.0) {
        return Err(Error::arg("zeta must be > 0"));
    }
    let (sum_eta, _, sum_sigma_sq) = inputs.sums();
    Ok(inputs.initial_gap / (2.0 * kappa * zeta)
        + (inputs.lipschitz_k + c / (4.0 * kappa)) * sum_eta / (kappa * zeta)
        + inputs.gamma * inputs.beta * sum_sigma_sq / (2.0 * kappa))
}
