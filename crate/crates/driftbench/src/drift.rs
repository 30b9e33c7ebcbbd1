//! Time-varying data distributions.
//!
//! Two families are generated here. The Gaussian regression stream follows a
//! drifting ground-truth parameter: at every round, inputs are standard
//! normal, responses are the ground-truth linear response plus noise, and the
//! ground truth itself takes a projected Gaussian step. The discrete family
//! produces short paths of finitely supported measures whose consecutive
//! Wasserstein drift is bounded by a prescribed schedule, for use as exactly
//! computable test fixtures.

use crate::error::{Error, Result};
use crate::rng::{self, salt};
use rand::Rng;
use rand_distr::StandardNormal;

/// How the drift-step variance evolves with the round index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftDecay {
    /// Variance `drift_scale / t` at round t.
    InverseT,
    /// Variance `drift_scale` at every round.
    Constant,
}

/// Feasible set the ground-truth parameter is projected onto.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionSet {
    Unbounded,
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl ProjectionSet {
    /// Axis-aligned cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        ProjectionSet::Box {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ProjectionSet::Unbounded => Ok(()),
            ProjectionSet::Box { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::dim(format!(
                        "box bounds have lengths {}/{}, expected {dim}",
                        lower.len(),
                        upper.len()
                    )));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                    return Err(Error::arg("box requires lower <= upper componentwise"));
                }
                Ok(())
            }
        }
    }

    /// Euclidean projection (componentwise clamp for boxes).
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ProjectionSet::Unbounded => x.to_vec(),
            ProjectionSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&l, &u))| v.clamp(l, u))
                .collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            ProjectionSet::Unbounded => true,
            ProjectionSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&v, (&l, &u))| l <= v && v <= u),
        }
    }
}

/// Ground-truth parameter path plus the per-round sampling law.
#[derive(Debug, Clone)]
pub struct DriftingScene {
    pub dimension: usize,
    pub initial_theta: Vec<f64>,
    pub drift_scale: f64,
    pub drift_decay: DriftDecay,
    pub projection_set: ProjectionSet,
    pub noise_variance: f64,
    pub horizon: usize,
}

impl DriftingScene {
    pub fn new(
        dimension: usize,
        initial_theta: Vec<f64>,
        drift_scale: f64,
        drift_decay: DriftDecay,
        projection_set: ProjectionSet,
        noise_variance: f64,
        horizon: usize,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::arg("dimension must be >= 1"));
        }
        if initial_theta.len() != dimension {
            return Err(Error::dim(format!(
                "initial theta has length {}, expected {dimension}",
                initial_theta.len()
            )));
        }
        if !(drift_scale >= 0.0) {
            return Err(Error::arg("drift_scale must be >= 0"));
        }
        if !(noise_variance >= 0.0) {
            return Err(Error::arg("noise_variance must be >= 0"));
        }
        if horizon == 0 {
            return Err(Error::arg("horizon must be >= 1"));
        }
        projection_set.validate(dimension)?;
        if !projection_set.contains(&initial_theta) {
            return Err(Error::arg("initial theta lies outside the projection set"));
        }
        Ok(DriftingScene {
            dimension,
            initial_theta,
            drift_scale,
            drift_decay,
            projection_set,
            noise_variance,
            horizon,
        })
    }
}

/// One round's worth of regression samples.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    /// Input vectors, one per sample.
    pub inputs: Vec<Vec<f64>>,
    /// Responses, aligned with `inputs`.
    pub outputs: Vec<f64>,
    /// Round the batch was drawn at.
    pub t: usize,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

/// Realized ground-truth parameters for rounds 1..=T.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPath {
    thetas: Vec<Vec<f64>>,
}

impl GroundTruthPath {
    pub fn from_thetas(thetas: Vec<Vec<f64>>, scene: &DriftingScene) -> Result<Self> {
        if thetas.len() != scene.horizon {
            return Err(Error::arg(format!(
                "path has {} rounds, scene horizon is {}",
                thetas.len(),
                scene.horizon
            )));
        }
        for theta in &thetas {
            if theta.len() != scene.dimension {
                return Err(Error::dim("path entry dimension mismatch"));
            }
            if !scene.projection_set.contains(theta) {
                return Err(Error::arg("path entry outside the projection set"));
            }
        }
        Ok(GroundTruthPath { thetas })
    }

    /// Parameter at round t (1-based).
    pub fn theta(&self, t: usize) -> &[f64] {
        &self.thetas[t - 1]
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

/// Finitely supported probability measure on real vectors.
///
/// Atoms may be plain points, scalars (length-1 atoms), or regression pairs
/// stored as `[u_1, ..., u_n, d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// Absolute slack allowed on the weight normalization.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

impl DiscreteDistribution {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::arg("a distribution needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::dim(format!(
                "{} atoms vs {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].len();
        if dim == 0 {
            return Err(Error::arg("atoms must have at least one coordinate"));
        }
        for atom in &atoms {
            if atom.len() != dim {
                return Err(Error::dim("atoms have inconsistent dimensions"));
            }
            if atom.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg("atom coordinates must be finite"));
            }
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::arg("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::arg(format!(
                "weights sum to {total}, expected 1 within {WEIGHT_SUM_TOLERANCE:e}"
            )));
        }
        Ok(DiscreteDistribution { atoms, weights })
    }

    /// Equal weights on the given atoms.
    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let n = atoms.len();
        if n == 0 {
            return Err(Error::arg("a distribution needs at least one atom"));
        }
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        // Absorb the rounding residue so the sum is exactly 1.
        let correction = 1.0 - weights.iter().sum::<f64>();
        weights[n - 1] += correction;
        DiscreteDistribution::new(atoms, weights)
    }

    /// Distribution on the real line from scalar values.
    pub fn scalars(values: &[f64], weights: Vec<f64>) -> Result<Self> {
        DiscreteDistribution::new(values.iter().map(|&v| vec![v]).collect(), weights)
    }

    pub fn uniform_scalars(values: &[f64]) -> Result<Self> {
        DiscreteDistribution::uniform(values.iter().map(|&v| vec![v]).collect())
    }

    /// Regression atoms `[u; d]` from inputs and responses.
    pub fn from_regression(inputs: &[Vec<f64>], outputs: &[f64], weights: Vec<f64>) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::dim(format!(
                "{} inputs vs {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        let atoms = inputs
            .iter()
            .zip(outputs)
            .map(|(u, &d)| {
                let mut a = u.clone();
                a.push(d);
                a
            })
            .collect();
        DiscreteDistribution::new(atoms, weights)
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Ambient dimension of the atoms.
    pub fn dimension(&self) -> usize {
        self.atoms[0].len()
    }

    /// Scalar atom values; the distribution must live on the real line.
    pub fn scalar_values(&self) -> Result<Vec<f64>> {
        if self.dimension() != 1 {
            return Err(Error::dim(format!(
                "expected scalar atoms, found dimension {}",
                self.dimension()
            )));
        }
        Ok(self.atoms.iter().map(|a| a[0]).collect())
    }

    /// Splits a regression atom into `(u, d)`.
    pub fn regression_atom(&self, i: usize) -> (&[f64], f64) {
        let atom = &self.atoms[i];
        let n = atom.len() - 1;
        (&atom[..n], atom[n])
    }

    /// Exact mean of the atoms under the weights.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dimension()];
        for (atom, &w) in self.atoms.iter().zip(&self.weights) {
            for (mi, &ai) in m.iter_mut().zip(atom) {
                *mi += w * ai;
            }
        }
        m
    }

    /// Draws one atom index according to the weights.
    pub fn sample_index(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Advances the ground-truth parameter by one projected Gaussian step.
///
/// The step has iid mean-zero entries with variance `drift_scale / t`
/// (or `drift_scale` under constant decay); the result is projected back
/// onto the scene's feasible set.
pub fn advance_ground_truth(
    theta: &[f64],
    t: usize,
    scene: &DriftingScene,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if theta.len() != scene.dimension {
        return Err(Error::dim(format!(
            "theta has length {}, scene dimension is {}",
            theta.len(),
            scene.dimension
        )));
    }
    if t == 0 {
        return Err(Error::arg("rounds are 1-based"));
    }
    let variance = match scene.drift_decay {
        DriftDecay::InverseT => scene.drift_scale / t as f64,
        DriftDecay::Constant => scene.drift_scale,
    };
    let std = variance.sqrt();
    let stepped: Vec<f64> = theta
        .iter()
        .map(|&v| v + std * standard_normal(rng))
        .collect();
    Ok(scene.projection_set.project(&stepped))
}

/// Generates the full ground-truth path for one run, one drift substream
/// per round.
pub fn generate_ground_truth_path(
    scene: &DriftingScene,
    master_seed: u64,
    run: u64,
) -> Result<GroundTruthPath> {
    let mut thetas = Vec::with_capacity(scene.horizon);
    thetas.push(scene.initial_theta.clone());
    for t in 1..scene.horizon {
        let mut rng = rng::substream(master_seed, run, t as u64, salt::DRIFT);
        let next = advance_ground_truth(&thetas[t - 1], t, scene, &mut rng)?;
        thetas.push(next);
    }
    GroundTruthPath::from_thetas(thetas, scene)
}

/// Draws one iid regression batch at the given ground truth.
///
/// Inputs are standard normal vectors; responses are the linear response
/// plus independent centered Gaussian noise.
pub fn sample_batch(
    theta_true: &[f64],
    m: usize,
    noise_variance: f64,
    t: usize,
    rng: &mut impl Rng,
) -> Result<SampleBatch> {
    if m == 0 {
        return Err(Error::arg("batch size must be >= 1"));
    }
    if !(noise_variance >= 0.0) {
        return Err(Error::arg("noise_variance must be >= 0"));
    }
    let n = theta_true.len();
    let noise_std = noise_variance.sqrt();
    let mut inputs = Vec::with_capacity(m);
    let mut outputs = Vec::with_capacity(m);
    for _ in 0..m {
        let u: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        let d = dot(theta_true, &u) + noise_std * standard_normal(rng);
        inputs.push(u);
        outputs.push(d);
    }
    Ok(SampleBatch { inputs, outputs, t })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds a path of discrete measures whose consecutive type-1 Wasserstein
/// distances are at most the given schedule.
///
/// Weights stay fixed along the path; at each step every atom moves along a
/// random direction with magnitudes scaled so the weighted total displacement
/// equals `eta_schedule[t]`. The identity coupling then certifies the drift
/// bound (with equality for a single atom).
pub fn make_discrete_drift(
    atom_count: usize,
    dimension: usize,
    horizon: usize,
    eta_schedule: &[f64],
    rng: &mut impl Rng,
) -> Result<Vec<DiscreteDistribution>> {
    if atom_count == 0 {
        return Err(Error::arg("atom_count must be >= 1"));
    }
    if dimension == 0 {
        return Err(Error::arg("dimension must be >= 1"));
    }
    if horizon == 0 {
        return Err(Error::arg("horizon must be >= 1"));
    }
    if eta_schedule.len() != horizon - 1 {
        return Err(Error::arg(format!(
            "eta schedule has length {}, expected horizon - 1 = {}",
            eta_schedule.len(),
            horizon - 1
        )));
    }
    if eta_schedule.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::arg("eta schedule entries must be >= 0"));
    }

    let weights = if atom_count == 1 {
        vec![1.0]
    } else {
        let raw: Vec<f64> = (0..atom_count).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let correction = 1.0 - w.iter().sum::<f64>();
        w[atom_count - 1] += correction;
        w
    };

    let mut atoms: Vec<Vec<f64>> = (0..atom_count)
        .map(|_| (0..dimension).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    let mut path = Vec::with_capacity(horizon);
    path.push(DiscreteDistribution::new(atoms.clone(), weights.clone())?);

    for &eta in eta_schedule {
        if eta > 0.0 {
            let dirs: Vec<Vec<f64>> = (0..atom_count)
                .map(|_| unit_direction(dimension, rng))
                .collect();
            let raw_mags: Vec<f64> = (0..atom_count).map(|_| rng.gen_range(0.5..1.0)).collect();
            let weighted: f64 = raw_mags.iter().zip(&weights).map(|(r, w)| r * w).sum();
            let scale = eta / weighted;
            for ((atom, dir), raw) in atoms.iter_mut().zip(&dirs).zip(&raw_mags) {
                let mag = scale * raw;
                for (a, d) in atom.iter_mut().zip(dir) {
                    *a += mag * d;
                }
            }
        }
        path.push(DiscreteDistribution::new(atoms.clone(), weights.clone())?);
    }
    Ok(path)
}

fn unit_direction(dimension: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dimension).map(|_| standard_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
