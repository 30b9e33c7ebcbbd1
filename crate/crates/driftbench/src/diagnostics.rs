//! Empirical checks of the analytical assumptions on exact fixtures.
//!
//! Every check evaluates an inequality at supplied points and reports the
//! worst signed residual, where residual >= 0 means the inequality holds.
//! Checks run on discrete fixtures whose population values, gradients, and
//! optima are exactly computable; sampled scenes only get the constant
//! estimators, which are empirical lower estimates of the true suprema.

use rand::Rng;

use crate::drift::{dot, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::losses::{
    population_grad, population_value, CVaRLossModel, EventSet, Loss, Regularizer,
    SquaredLossModel,
};
use crate::rng::{self, substream};
use crate::transport::w1_discrete;

/// Residual tolerance for inequalities evaluated in closed form.
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-9;
/// Residual tolerance for inequalities involving an iterative oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-6;
/// Default lower-fraction parameter for the CVaR region.
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Outcome of one assumption check over a batch of points.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AssumptionReport {
    pub id: String,
    pub sample_count: usize,
    /// Worst signed residual; nonnegative residuals satisfy the inequality.
    pub worst_residual: f64,
    pub pass: bool,
    /// Worst violating point, when any point was evaluated.
    pub witness: Option<Vec<f64>>,
    /// Points excluded by the check's preconditions.
    pub skipped: usize,
    pub tolerance: f64,
}

impl AssumptionReport {
    fn from_residuals<I>(id: &str, tolerance: f64, residuals: I, skipped: usize) -> Self
    where
        I: IntoIterator<Item = (f64, Option<Vec<f64>>)>,
    {
        let mut worst = f64::INFINITY;
        let mut witness = None;
        let mut count = 0;
        for (r, point) in residuals {
            count += 1;
            if r < worst {
                worst = r;
                witness = point;
            }
        }
        AssumptionReport {
            id: id.to_string(),
            sample_count: count,
            worst_residual: worst,
            pass: worst >= -tolerance,
            witness,
            skipped,
            tolerance,
        }
    }
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} worst_residual={:.3e} samples={} skipped={}",
            self.id,
            if self.pass { "pass" } else { "FAIL" },
            self.worst_residual,
            self.sample_count,
            self.skipped
        )
    }
}

/// Discrete fixture with certified curvature constants and optimum.
///
/// The constants are trusted by the checks; fixtures built by the provided
/// constructors carry exact values, hand-built fixtures should be validated
/// with the checks before use elsewhere.
#[derive(Debug, Clone)]
pub struct PLFixture<L: Loss = SquaredLossModel> {
    pub loss: L,
    pub dist: DiscreteDistribution,
    pub mu: f64,
    pub beta: f64,
    pub lipschitz_k: f64,
    pub optimal_value: f64,
    pub optimizer: Vec<f64>,
}

impl<L: Loss> PLFixture<L> {
    /// Population objective at `x`.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        population_value(&self.loss, x, &self.dist)
    }

    /// Population gradient at `x`, with tie reporting.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(population_grad(&self.loss, x, &self.dist)?.grad)
    }
}

impl PLFixture<SquaredLossModel> {
    /// Regression fixture with identity second moment: the population loss
    /// is exactly ||theta - theta_true||^2 + noise_scale, so mu = beta = 2.
    ///
    /// Atoms are +-sqrt(n) e_k with equal weights and a common response
    /// offset sqrt(noise_scale), which keeps the input-noise cross moment
    /// zero. The Lipschitz constant is certified over the Euclidean ball of
    /// radius `domain_radius`, which must contain the optimizer.
    pub fn isotropic_regression(
        theta_true: &[f64],
        noise_scale: f64,
        domain_radius: f64,
    ) -> Result<Self> {
        let n = theta_true.len();
        if n == 0 {
            return Err(Error::arg("theta_true must be nonempty"));
        }
        if !(noise_scale >= 0.0) {
            return Err(Error::arg("noise_scale must be >= 0"));
        }
        let norm = theta_true.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(domain_radius >= norm) {
            return Err(Error::arg(
                "domain_radius must cover the optimizer".to_string(),
            ));
        }
        let root_n = (n as f64).sqrt();
        let root_s = noise_scale.sqrt();
        let mut inputs = Vec::with_capacity(2 * n);
        let mut outputs = Vec::with_capacity(2 * n);
        for k in 0..n {
            for sign in [1.0, -1.0] {
                let mut u = vec![0.0; n];
                u[k] = sign * root_n;
                let d = dot(theta_true, &u) + root_s;
                inputs.push(u);
                outputs.push(d);
            }
        }
        let dist = DiscreteDistribution::from_regression(
            &inputs,
            &outputs,
            vec![1.0 / (2.0 * n as f64); 2 * n],
        )?;
        let d_max = outputs.iter().fold(0.0f64, |a, &d| a.max(d.abs()));
        let m = domain_radius;
        let lipschitz_k = 2.0 * (d_max + m * root_n) * (m * m + 1.0).sqrt();
        Ok(PLFixture {
            loss: SquaredLossModel,
            dist,
            mu: 2.0,
            beta: 2.0,
            lipschitz_k,
            optimal_value: noise_scale,
            optimizer: theta_true.to_vec(),
        })
    }
}

fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Pointwise gradient-dominance residuals (1/2)||grad F||^2 - mu (F - F*).
pub fn pl_residual<L: Loss>(fixture: &PLFixture<L>, points: &[Vec<f64>]) -> Result<AssumptionReport> {
    let mut residuals = Vec::with_capacity(points.len());
    for x in points {
        let g = fixture.grad(x)?;
        let gap = fixture.value(x)? - fixture.optimal_value;
        residuals.push((0.5 * norm_sq(&g) - fixture.mu * gap, Some(x.clone())));
    }
    Ok(AssumptionReport::from_residuals(
        "pl_residual",
        CLOSED_FORM_TOLERANCE,
        residuals,
        0,
    ))
}

/// Forward-step gradient dominance quantity for composite objectives.
///
/// Evaluates -2 delta min_y { <g, y - x> + (delta/2)||y - x||^2 + R(y) - R(x) }
/// through the closed-form minimizer y* = prox_{R/delta}(x - g/delta). The
/// inner minimum is nonpositive since y = x is feasible, so the result is
/// clamped at zero against rounding.
pub fn proximal_pl_forward(
    grad_f: &[f64],
    x: &[f64],
    delta: f64,
    regularizer: &Regularizer,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::arg("delta must be > 0"));
    }
    if grad_f.len() != x.len() {
        return Err(Error::dim("gradient and point lengths differ"));
    }
    regularizer.validate(x.len())?;
    let r_x = regularizer.value(x);
    if !r_x.is_finite() {
        return Err(Error::arg(
            "regularizer must be finite at the evaluation point",
        ));
    }
    let shifted: Vec<f64> = x
        .iter()
        .zip(grad_f)
        .map(|(&xi, &gi)| xi - gi / delta)
        .collect();
    let y = regularizer.prox(&shifted, 1.0 / delta);
    let diff: Vec<f64> = y.iter().zip(x).map(|(&yi, &xi)| yi - xi).collect();
    let inner = dot(grad_f, &diff) + 0.5 * delta * norm_sq(&diff) + regularizer.value(&y) - r_x;
    Ok((-2.0 * delta * inner).max(0.0))
}

/// Checks |F_next(x) - F_cur(x)| <= K eta at each point, with eta the exact
/// transport distance between the two measures.
pub fn check_loss_shift<L: Loss>(
    p_cur: &DiscreteDistribution,
    p_next: &DiscreteDistribution,
    loss: &L,
    lipschitz_k: f64,
    points: &[Vec<f64>],
) -> Result<AssumptionReport> {
    if !(lipschitz_k >= 0.0) {
        return Err(Error::arg("lipschitz constant must be >= 0"));
    }
    let (eta, _) = w1_discrete(p_cur, p_next)?;
    let mut residuals = Vec::with_capacity(points.len());
    for x in points {
        let shift =
            (population_value(loss, x, p_next)? - population_value(loss, x, p_cur)?).abs();
        residuals.push((lipschitz_k * eta - shift, Some(x.clone())));
    }
    Ok(AssumptionReport::from_residuals(
        "loss_shift",
        CLOSED_FORM_TOLERANCE,
        residuals,
        0,
    ))
}

/// Checks the optimal-value shift F_cur* - F_next* <= K eta + J^2/(2 mu)
/// and the gradient shift ||grad F_next - grad F_cur|| <= J at each point.
pub fn check_optimal_value_shift<L: Loss>(
    fixture_cur: &PLFixture<L>,
    fixture_next: &PLFixture<L>,
    lipschitz_k: f64,
    j_eta: f64,
    mu: f64,
    points: &[Vec<f64>],
) -> Result<AssumptionReport> {
    if !(mu > 0.0) {
        return Err(Error::arg("mu must be > 0"));
    }
    if !(j_eta >= 0.0) {
        return Err(Error::arg("gradient-shift bound must be >= 0"));
    }
    let (eta, _) = w1_discrete(&fixture_cur.dist, &fixture_next.dist)?;
    let mut residuals = Vec::with_capacity(points.len() + 1);
    let value_drop = fixture_cur.optimal_value - fixture_next.optimal_value;
    residuals.push((
        lipschitz_k * eta + j_eta * j_eta / (2.0 * mu) - value_drop,
        None,
    ));
    for x in points {
        let gc = fixture_cur.grad(x)?;
        let gn = fixture_next.grad(x)?;
        residuals.push((j_eta - l2_dist(&gn, &gc), Some(x.clone())));
    }
    Ok(AssumptionReport::from_residuals(
        "optimal_value_shift",
        CLOSED_FORM_TOLERANCE,
        residuals,
        0,
    ))
}

/// Checks two-sided quadratic growth
/// (mu/2) d^2 <= F(x) - F* <= (beta/2) d^2 with d the distance to the
/// fixture optimizer.
pub fn check_quadratic_growth<L: Loss>(
    fixture: &PLFixture<L>,
    points: &[Vec<f64>],
) -> Result<AssumptionReport> {
    let mut residuals = Vec::with_capacity(points.len());
    for x in points {
        let gap = fixture.value(x)? - fixture.optimal_value;
        let dist_sq = x
            .iter()
            .zip(&fixture.optimizer)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<f64>();
        let lower = gap - 0.5 * fixture.mu * dist_sq;
        let upper = 0.5 * fixture.beta * dist_sq - gap;
        residuals.push((lower.min(upper), Some(x.clone())));
    }
    Ok(AssumptionReport::from_residuals(
        "quadratic_growth",
        CLOSED_FORM_TOLERANCE,
        residuals,
        0,
    ))
}

/// Checks F(y) <= F(x) + <grad F(x), y - x> + (beta/2)||y - x||^2 on pairs.
pub fn check_descent_lemma<L: Loss>(
    fixture: &PLFixture<L>,
    beta: f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<AssumptionReport> {
    if !(beta > 0.0) {
        return Err(Error::arg("beta must be > 0"));
    }
    let mut residuals = Vec::with_capacity(pairs.len());
    for (x, y) in pairs {
        if x.len() != y.len() {
            return Err(Error::dim("pair points have different lengths"));
        }
        let fx = fixture.value(x)?;
        let fy = fixture.value(y)?;
        let g = fixture.grad(x)?;
        let diff: Vec<f64> = y.iter().zip(x).map(|(&yi, &xi)| yi - xi).collect();
        let quad = fx + dot(&g, &diff) + 0.5 * beta * norm_sq(&diff);
        residuals.push((quad - fy, Some(y.clone())));
    }
    Ok(AssumptionReport::from_residuals(
        "descent_lemma",
        CLOSED_FORM_TOLERANCE,
        residuals,
        0,
    ))
}

/// Empirical estimates of the smoothness, Lipschitz, drift, and noise
/// constants from sampled points.
#[derive(Debug, Clone)]
pub struct ConstantEstimates {
    /// Max gradient-difference ratio over sampled point pairs.
    pub beta_hat: f64,
    /// Max loss-difference ratio over sampled sample-space pairs.
    pub k_hat: f64,
    /// Max gradient shift between consecutive measures over sampled points.
    pub j_hat: f64,
    /// Mean squared deviation of the m-sample gradient estimator, per round.
    pub sigma_hat_sq: Vec<f64>,
}

/// Estimates (beta, K, J, sigma_t^2) by deterministic sampling.
///
/// The first three are suprema over growing sample sets drawn from a fixed
/// substream, so they are nondecreasing in `budget`; sigma_hat_sq is an
/// empirical mean rather than a supremum. All three suprema are lower
/// estimates of the true constants. Zero-distance pairs are skipped.
pub fn estimate_constants<L: Loss>(
    loss: &L,
    dists: &[DiscreteDistribution],
    x_current: &[f64],
    domain_radius: f64,
    budget: usize,
    batch_size: usize,
    master_seed: u64,
) -> Result<ConstantEstimates> {
    if dists.is_empty() {
        return Err(Error::arg("need at least one distribution"));
    }
    if budget == 0 || batch_size == 0 {
        return Err(Error::arg("budget and batch size must be >= 1"));
    }
    if !(domain_radius > 0.0) {
        return Err(Error::arg("domain radius must be > 0"));
    }
    let n = dists[0].dimension() - 1;
    let dim = loss.param_len(n);
    if x_current.len() != dim {
        return Err(Error::dim("x_current does not match the loss dimension"));
    }

    let sample_point = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..dim)
            .map(|_| rng.gen_range(-domain_radius..domain_radius))
            .collect()
    };

    // Smoothness: gradient-difference ratios across random point pairs,
    // maximized over every supplied measure.
    let mut beta_hat = 0.0f64;
    let mut rng_beta = substream(master_seed, 0, 0, rng::salt::ESTIMATE);
    for _ in 0..budget {
        let x = sample_point(&mut rng_beta);
        let y = sample_point(&mut rng_beta);
        let d = l2_dist(&x, &y);
        if d == 0.0 {
            continue;
        }
        for dist in dists {
            let gx = population_grad(loss, &x, dist)?.grad;
            let gy = population_grad(loss, &y, dist)?.grad;
            beta_hat = beta_hat.max(l2_dist(&gx, &gy) / d);
        }
    }

    // Sample-space Lipschitz modulus: pointwise loss differences along
    // segments between atoms, evaluated at random parameter points.
    let mut k_hat = 0.0f64;
    let mut rng_k = substream(master_seed, 1, 0, rng::salt::ESTIMATE);
    for _ in 0..budget {
        let x = sample_point(&mut rng_k);
        for dist in dists {
            let i = rng_k.gen_range(0..dist.len());
            let j = rng_k.gen_range(0..dist.len());
            let (s, t) = (rng_k.gen_range(0.0..1.0), rng_k.gen_range(0.0..1.0));
            let wa = blend_atoms(dist, i, j, s);
            let wb = blend_atoms(dist, i, j, t);
            let dw = l2_dist(&wa, &wb);
            if dw == 0.0 {
                continue;
            }
            let (ua, da) = split_sample(&wa);
            let (ub, db) = split_sample(&wb);
            let diff = (loss.value(&x, ua, da) - loss.value(&x, ub, db)).abs();
            k_hat = k_hat.max(diff / dw);
        }
    }

    // Gradient shift between consecutive measures.
    let mut j_hat = 0.0f64;
    for w in dists.windows(2) {
        let mut rng_j = substream(master_seed, 2, 0, rng::salt::ESTIMATE);
        for _ in 0..budget {
            let x = sample_point(&mut rng_j);
            let ga = population_grad(loss, &x, &w[0])?.grad;
            let gb = population_grad(loss, &x, &w[1])?.grad;
            j_hat = j_hat.max(l2_dist(&ga, &gb));
        }
    }

    // Noise second moment of the m-sample averaged estimator at the
    // current iterate, one entry per measure.
    let mut sigma_hat_sq = Vec::with_capacity(dists.len());
    for (t, dist) in dists.iter().enumerate() {
        let exact = population_grad(loss, x_current, dist)?.grad;
        let mut rng_s = substream(master_seed, 3, t as u64, rng::salt::ESTIMATE);
        let mut acc = 0.0;
        for _ in 0..budget {
            let mut est = vec![0.0; dim];
            for _ in 0..batch_size {
                let idx = dist.sample_index(&mut rng_s);
                let (u, d) = dist.regression_atom(idx);
                for (e, gi) in est.iter_mut().zip(loss.grad(x_current, u, d)) {
                    *e += gi / batch_size as f64;
                }
            }
            acc += est
                .iter()
                .zip(&exact)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        sigma_hat_sq.push(acc / budget as f64);
    }

    Ok(ConstantEstimates {
        beta_hat,
        k_hat,
        j_hat,
        sigma_hat_sq,
    })
}

fn blend_atoms(dist: &DiscreteDistribution, i: usize, j: usize, s: f64) -> Vec<f64> {
    dist.atoms()[i]
        .iter()
        .zip(&dist.atoms()[j])
        .map(|(&a, &b)| (1.0 - s) * a + s * b)
        .collect()
}

fn split_sample(w: &[f64]) -> (&[f64], f64) {
    let n = w.len() - 1;
    (&w[..n], w[n])
}

/// Probability of the strict exceedance event, with threshold ties counted.
#[derive(Debug, Clone, Copy)]
pub struct EventMass {
    pub probability: f64,
    pub tie_count: usize,
}

/// Mass of { (u, d) : base loss at theta strictly exceeds h } under `p`.
pub fn event_probability(theta: &[f64], h: f64, p: &DiscreteDistribution) -> Result<EventMass> {
    if p.dimension() < 2 {
        return Err(Error::dim("event probability needs regression atoms"));
    }
    if theta.len() != p.dimension() - 1 {
        return Err(Error::dim("theta does not match the atom dimension"));
    }
    let event = EventSet::new(theta.to_vec(), h);
    let mut probability = 0.0;
    let mut tie_count = 0;
    for i in 0..p.len() {
        let (u, d) = p.regression_atom(i);
        if event.contains(u, d) {
            probability += p.weights()[i];
        } else if event.is_boundary(u, d) {
            tie_count += 1;
        }
    }
    Ok(EventMass {
        probability,
        tie_count,
    })
}

/// Membership of (theta, h) in the admissible region
/// lambda alpha <= P(A(theta, h)) <= alpha + 2 alpha mu (h* - h).
pub fn cvar_region_check(
    theta: &[f64],
    h: f64,
    p: &DiscreteDistribution,
    alpha: f64,
    mu: f64,
    lambda: f64,
    h_star: f64,
) -> Result<bool> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg("alpha must lie in (0, 1]"));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::arg("lambda must lie in (0, 1)"));
    }
    if !(mu > 0.0) {
        return Err(Error::arg("mu must be > 0"));
    }
    let mass = event_probability(theta, h, p)?;
    let lower = lambda * alpha;
    let upper = alpha + 2.0 * alpha * mu * (h_star - h);
    Ok(mass.probability >= lower && mass.probability <= upper)
}

/// Exact minimizer of the population CVaR objective on a discrete measure.
#[derive(Debug, Clone)]
pub struct CvarOptimum {
    pub theta: Vec<f64>,
    pub h: f64,
    pub value: f64,
}

/// Brute-force minimizer of L_alpha over (theta, h) for a discrete measure.
///
/// For scalar theta the objective theta -> min_h L_alpha is convex, so a
/// golden-section search over a certified bracket finds the global optimum;
/// higher dimensions use multi-start subgradient descent and are accurate
/// to oracle tolerance only. The threshold reported is the rightmost
/// minimizing atom value, which keeps the exceedance mass strictly below
/// alpha.
pub fn cvar_discrete_optimum(p: &DiscreteDistribution, alpha: f64) -> Result<CvarOptimum> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg("alpha must lie in (0, 1]"));
    }
    if p.dimension() < 2 {
        return Err(Error::dim("needs regression atoms [u..., d]"));
    }
    let n = p.dimension() - 1;
    let theta = if n == 1 {
        let mut u_min = f64::INFINITY;
        let mut d_max = 0.0f64;
        for i in 0..p.len() {
            let (u, d) = p.regression_atom(i);
            u_min = u_min.min(u[0].abs());
            d_max = d_max.max(d.abs());
        }
        if u_min < 1e-9 {
            return Err(Error::arg(
                "bracketed search needs inputs bounded away from zero",
            ));
        }
        // Outside |theta| <= 2 d_max / u_min + 1 every atom loss exceeds the
        // value at zero, so the bracket contains the minimizer.
        let b = 2.0 * d_max / u_min + 1.0;
        let objective = |th: f64| best_threshold_value(p, &[th], alpha).map(|(_, v)| v);
        vec![golden_section(objective, -b, b, 300)?]
    } else {
        descend_cvar(p, alpha, n)?
    };
    let (h, value) = best_threshold_value(p, &theta, alpha)?;
    Ok(CvarOptimum { theta, h, value })
}

/// Minimizes h -> h + E(loss - h)_+ / alpha over atom loss values and
/// returns the rightmost minimizer with its value.
fn best_threshold_value(p: &DiscreteDistribution, theta: &[f64], alpha: f64) -> Result<(f64, f64)> {
    let mut losses = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let (u, d) = p.regression_atom(i);
        losses.push(SquaredLossModel.value(theta, u, d));
    }
    let phi = |h: f64| -> f64 {
        let excess: f64 = losses
            .iter()
            .zip(p.weights())
            .map(|(&l, &w)| w * (l - h).max(0.0))
            .sum();
        h + excess / alpha
    };
    let mut best_value = f64::INFINITY;
    for &h in &losses {
        best_value = best_value.min(phi(h));
    }
    let slack = 1e-12 * best_value.abs().max(1.0);
    let mut best_h = f64::NEG_INFINITY;
    for &h in &losses {
        if phi(h) <= best_value + slack && h > best_h {
            best_h = h;
        }
    }
    Ok((best_h, phi(best_h)))
}

fn golden_section<F>(f: F, mut lo: f64, mut hi: f64, iterations: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = 0.618_033_988_749_894_9;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    for _ in 0..iterations {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn descend_cvar(p: &DiscreteDistribution, alpha: f64, n: usize) -> Result<Vec<f64>> {
    let model = CVaRLossModel::new(alpha)?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in [vec![0.0; n], p.mean()[..n].to_vec()] {
        let mut theta = start;
        let mut h = best_threshold_value(p, &theta, alpha)?.1;
        for k in 1..=4000usize {
            let mut x = theta.clone();
            x.push(best_threshold_value(p, &theta, alpha)?.0);
            let g = population_grad(&model, &x, p)?.grad;
            let step = 0.05 / (k as f64).sqrt();
            for (ti, gi) in theta.iter_mut().zip(&g) {
                *ti -= step * gi;
            }
            let v = best_threshold_value(p, &theta, alpha)?.1;
            if v < h {
                h = v;
            }
            match &mut best {
                Some((bv, bt)) if v < *bv => {
                    *bv = v;
                    *bt = theta.clone();
                }
                None => best = Some((v, theta.clone())),
                _ => {}
            }
        }
    }
    Ok(best.expect("at least one start").1)
}

/// Smallest gradient-dominance ratio (1/2)||grad||^2 / gap over tie-free
/// points with gap at least 1e-9, or None if no point qualifies.
///
/// Any kappa at or below this ratio makes [`cvar_pl_residual`] pass on the
/// same point set, since the accepted points are a subset of those measured.
pub fn measured_cvar_kappa(
    p: &DiscreteDistribution,
    alpha: f64,
    points: &[(Vec<f64>, f64)],
) -> Result<Option<f64>> {
    let optimum = cvar_discrete_optimum(p, alpha)?;
    let model = CVaRLossModel::new(alpha)?;
    let mut kappa: Option<f64> = None;
    for (theta, h) in points {
        if event_probability(theta, *h, p)?.tie_count > 0 {
            continue;
        }
        let mut x = theta.clone();
        x.push(*h);
        let gap = population_value(&model, &x, p)? - optimum.value;
        if gap < 1e-9 {
            continue;
        }
        let ratio = 0.5 * norm_sq(&population_grad(&model, &x, p)?.grad) / gap;
        kappa = Some(kappa.map_or(ratio, |k: f64| k.min(ratio)));
    }
    Ok(kappa)
}

/// Gradient-dominance residuals for the CVaR objective on region points.
///
/// Points with threshold ties or outside the admissible region are skipped
/// and counted. The comparison value L* comes from the brute-force optimum,
/// so residuals carry oracle tolerance.
pub fn cvar_pl_residual(
    p: &DiscreteDistribution,
    alpha: f64,
    kappa: f64,
    lambda: f64,
    points: &[(Vec<f64>, f64)],
) -> Result<AssumptionReport> {
    if !(kappa > 0.0) {
        return Err(Error::arg("kappa must be > 0"));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::arg("lambda must lie in (0, 1)"));
    }
    let optimum = cvar_discrete_optimum(p, alpha)?;
    let model = CVaRLossModel::new(alpha)?;
    let mu = kappa / lambda;
    let mut residuals = Vec::new();
    let mut skipped = 0;
    for (theta, h) in points {
        let mass = event_probability(theta, *h, p)?;
        if mass.tie_count > 0 {
            skipped += 1;
            continue;
        }
        if !cvar_region_check(theta, *h, p, alpha, mu, lambda, optimum.h)? {
            skipped += 1;
            continue;
        }
        let mut x = theta.clone();
        x.push(*h);
        let value = population_value(&model, &x, p)?;
        let grad = population_grad(&model, &x, p)?.grad;
        let residual = 0.5 * norm_sq(&grad) - kappa * (value - optimum.value);
        residuals.push((residual, Some(x)));
    }
    Ok(AssumptionReport::from_residuals(
        "cvar_pl_residual",
        ORACLE_TOLERANCE,
        residuals,
        skipped,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_points(dim: usize, count: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| (0..dim).map(|_| rng.gen_range(-radius..radius)).collect())
            .collect()
    }

    #[test]
    fn pl_residual_is_exact_on_isotropic_fixture() {
        let fixture = PLFixture::isotropic_regression(&[0.5, -1.0], 0.3, 3.0).unwrap();
        let mut points = sample_points(2, 50, 2.5, 7);
        points.push(fixture.optimizer.clone());
        let report = pl_residual(&fixture, &points).unwrap();
        assert!(report.pass, "{report}");
        // Gradient dominance holds with equality for this fixture.
        assert!(report.worst_residual.abs() < 1e-9);

        let mut inflated = fixture.clone();
        inflated.mu = 2.5;
        let bad = pl_residual(&inflated, &points).unwrap();
        assert!(!bad.pass);
        assert!(bad.witness.is_some());
    }

    #[test]
    fn proximal_forward_quantity_hand_values() {
        // No regularizer: the quantity is the squared gradient norm.
        let d = proximal_pl_forward(&[3.0, -4.0], &[0.2, 0.4], 2.5, &Regularizer::None).unwrap();
        assert!((d - 25.0).abs() < 1e-12);

        // Zero gradient at an interior point: nothing to gain.
        let cube = Regularizer::cube(1, 0.0, 1.0);
        let d0 = proximal_pl_forward(&[0.0], &[0.5], 1.0, &cube).unwrap();
        assert_eq!(d0, 0.0);

        // Active boundary: hand-computed inner minimum -0.25 at delta 2.
        let d1 = proximal_pl_forward(&[-1.0], &[0.5], 2.0, &cube).unwrap();
        assert!((d1 - 1.0).abs() < 1e-12);

        // Outside the box the indicator is infinite.
        assert!(proximal_pl_forward(&[0.0], &[2.0], 1.0, &cube).is_err());
    }

    #[test]
    fn loss_shift_bounded_by_transport_distance() {
        let p = DiscreteDistribution::from_regression(&[vec![1.0]], &[0.5], vec![1.0]).unwrap();
        let q = DiscreteDistribution::from_regression(&[vec![1.0]], &[0.9], vec![1.0]).unwrap();
        let points: Vec<Vec<f64>> = sample_points(1, 200, 1.0, 11);
        // K over |theta| <= 1, |u| = 1, |d| <= 0.9:
        // 2 (d_max + M) sqrt(M^2 + 1) with M = 1.
        let k = 2.0 * (0.9 + 1.0) * 2.0f64.sqrt();
        let report = check_loss_shift(&p, &q, &SquaredLossModel, k, &points).unwrap();
        assert!(report.pass, "{report}");

        let same = check_loss_shift(&p, &p, &SquaredLossModel, k, &points).unwrap();
        assert!(same.pass);
        assert!(same.worst_residual.abs() < 1e-12);
    }

    #[test]
    fn optimal_value_shift_on_closed_form_fixtures() {
        let cur = PLFixture::isotropic_regression(&[0.4], 0.1, 2.0).unwrap();
        let next = PLFixture::isotropic_regression(&[0.6], 0.1, 2.0).unwrap();
        let points = sample_points(1, 100, 1.5, 13);
        // Gradient shift is ||2(theta - a) - 2(theta - b)|| = 2|a - b| = 0.4.
        let j = 0.4 + 1e-12;
        let k = cur.lipschitz_k.max(next.lipschitz_k);
        let report = check_optimal_value_shift(&cur, &next, k, j, 2.0, &points).unwrap();
        assert!(report.pass, "{report}");

        let same = check_optimal_value_shift(&cur, &cur, k, 0.0, 2.0, &points).unwrap();
        assert!(same.pass);
    }

    #[test]
    fn quadratic_growth_tight_on_isotropic_fixture() {
        let fixture = PLFixture::isotropic_regression(&[1.0, 0.0, -0.5], 0.2, 3.0).unwrap();
        let points = sample_points(3, 100, 2.0, 17);
        let report = check_quadratic_growth(&fixture, &points).unwrap();
        assert!(report.pass, "{report}");
        assert!(report.worst_residual.abs() < 1e-9);
    }

    #[test]
    fn descent_lemma_exact_at_true_beta() {
        let fixture = PLFixture::isotropic_regression(&[0.3], 0.0, 2.0).unwrap();
        let xs = sample_points(1, 60, 1.5, 19);
        let ys = sample_points(1, 60, 1.5, 23);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = xs.into_iter().zip(ys).collect();
        let exact = check_descent_lemma(&fixture, 2.0, &pairs).unwrap();
        assert!(exact.pass, "{exact}");
        assert!(exact.worst_residual.abs() < 1e-9);

        let slack = check_descent_lemma(&fixture, 2.5, &pairs).unwrap();
        assert!(slack.pass);

        let tight = check_descent_lemma(&fixture, 1.5, &pairs).unwrap();
        assert!(!tight.pass);
    }

    #[test]
    fn equal_points_in_descent_lemma_give_zero_residual() {
        let fixture = PLFixture::isotropic_regression(&[0.3], 0.0, 2.0).unwrap();
        let pairs = vec![(vec![0.7], vec![0.7])];
        let report = check_descent_lemma(&fixture, 2.0, &pairs).unwrap();
        assert_eq!(report.worst_residual, 0.0);
    }

    #[test]
    fn estimated_smoothness_approaches_two() {
        let fixture = PLFixture::isotropic_regression(&[0.5, -0.2], 0.1, 2.0).unwrap();
        let dists = vec![fixture.dist.clone(), fixture.dist.clone()];
        let est =
            estimate_constants(&SquaredLossModel, &dists, &[0.0, 0.0], 2.0, 10_000, 1, 99).unwrap();
        assert!(
            (est.beta_hat - 2.0).abs() / 2.0 < 0.01,
            "beta_hat = {}",
            est.beta_hat
        );
        // Identical consecutive rounds carry no gradient shift.
        assert_eq!(est.j_hat, 0.0);
    }

    #[test]
    fn estimates_grow_with_budget() {
        let fixture = PLFixture::isotropic_regression(&[0.5], 0.2, 2.0).unwrap();
        let shifted = PLFixture::isotropic_regression(&[0.8], 0.2, 2.0).unwrap();
        let dists = vec![fixture.dist.clone(), shifted.dist.clone()];
        let small = estimate_constants(&SquaredLossModel, &dists, &[0.0], 2.0, 50, 2, 5).unwrap();
        let large = estimate_constants(&SquaredLossModel, &dists, &[0.0], 2.0, 500, 2, 5).unwrap();
        assert!(large.beta_hat >= small.beta_hat);
        assert!(large.k_hat >= small.k_hat);
        assert!(large.j_hat >= small.j_hat);
        assert!(large.j_hat > 0.0);
    }

    #[test]
    fn estimator_variance_scales_inversely_with_batch() {
        let fixture = PLFixture::isotropic_regression(&[0.4], 0.5, 2.0).unwrap();
        let dists = [fixture.dist.clone()];
        let m1 = estimate_constants(&SquaredLossModel, &dists, &[0.9], 2.0, 5000, 1, 31)
            .unwrap()
            .sigma_hat_sq[0];
        let m4 = estimate_constants(&SquaredLossModel, &dists, &[0.9], 2.0, 5000, 4, 31)
            .unwrap()
            .sigma_hat_sq[0];
        let ratio = m1 / m4;
        assert!((3.2..=4.8).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn event_probability_extremes() {
        let p = DiscreteDistribution::from_regression(
            &[vec![1.0], vec![1.0]],
            &[1.0, 2.0],
            vec![0.5, 0.5],
        )
        .unwrap();
        // Losses at theta = 0 are 1 and 4.
        let below = event_probability(&[0.0], 0.5, &p).unwrap();
        assert_eq!(below.probability, 1.0);
        let above = event_probability(&[0.0], 5.0, &p).unwrap();
        assert_eq!(above.probability, 0.0);
        assert!(!cvar_region_check(&[0.0], 5.0, &p, 0.5, 1.0, 0.5, 1.0).unwrap());

        let tie = event_probability(&[0.0], 1.0, &p).unwrap();
        assert_eq!(tie.tie_count, 1);
        assert_eq!(tie.probability, 0.5);
    }

    #[test]
    fn cvar_optimum_mass_stays_below_alpha() {
        let p = DiscreteDistribution::from_regression(
            &[vec![1.0], vec![0.8], vec![1.2], vec![-1.0], vec![-0.9], vec![1.1]],
            &[0.3, -0.2, 0.7, 0.1, -0.5, 0.4],
            vec![0.2, 0.15, 0.15, 0.2, 0.15, 0.15],
        )
        .unwrap();
        let alpha = 0.4;
        let optimum = cvar_discrete_optimum(&p, alpha).unwrap();
        let mass = event_probability(&optimum.theta, optimum.h, &p).unwrap();
        assert!(
            mass.probability < alpha,
            "mass {} vs alpha {alpha}",
            mass.probability
        );
    }

    #[test]
    fn cvar_pl_residual_zero_at_optimum_and_fails_for_huge_kappa() {
        let p = DiscreteDistribution::from_regression(
            &[vec![1.0], vec![0.8], vec![-1.2], vec![-0.7]],
            &[0.3, -0.4, 0.6, 0.2],
            vec![0.3, 0.2, 0.25, 0.25],
        )
        .unwrap();
        let alpha = 0.5;
        let optimum = cvar_discrete_optimum(&p, alpha).unwrap();
        let at_opt = vec![(optimum.theta.clone(), optimum.h)];
        let report = cvar_pl_residual(&p, alpha, 1e-6, 0.5, &at_opt).unwrap();
        if report.sample_count > 0 {
            assert!(report.pass, "{report}");
        }

        // Points around the optimum, small kappa passes, huge kappa fails.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut points = Vec::new();
        for _ in 0..400 {
            let theta = vec![optimum.theta[0] + rng.gen_range(-0.5..0.5)];
            let h = optimum.h + rng.gen_range(-0.3..0.3);
            points.push((theta, h));
        }
        let lenient = cvar_pl_residual(&p, alpha, 1e-4, 0.5, &points).unwrap();
        assert!(lenient.sample_count > 0, "no points survived the region filter");
        assert!(lenient.pass, "{lenient}");
        let strict = cvar_pl_residual(&p, alpha, 1e4, 0.5, &points).unwrap();
        assert!(!strict.pass, "{strict}");
    }
}
