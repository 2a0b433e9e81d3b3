//! Feed-forward network whose first layer computes dimensionless groups.
//!
//! The first layer maps log-inputs through a bias-free linear map `Φ_p` and
//! exponentiates, so its outputs are `exp(log(P)·Φ_p)`, products of powers of
//! the inputs. ELU hidden layers and a linear output layer follow. Training
//! minimises
//!
//! ```text
//! MSE + λ_null‖D_p·Φ_p‖² + λ₁‖Φ_p‖₁ + λ₂‖Φ_p‖²
//! ```
//!
//! with hand-written backpropagation and Adam.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nullspace::{nearest_member, CandidateSet};
use crate::pitransform::{normalize_exponents, Dataset, PiExponents};
use crate::units::{Role, UnitsMatrix};

/// Dense layer with `weights[o * inputs + i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuckiNetModel {
    pub inputs: Vec<String>,
    pub n_groups: usize,
    /// `phi[i * n_groups + j]`: exponent of input `i` in group `j`.
    pub phi: Vec<f64>,
    /// Hidden layers followed by the linear output layer.
    pub layers: Vec<Dense>,
}

pub fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

fn elu_prime(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

impl BuckiNetModel {
    /// Random initial model: `Φ_p ~ N(0, 1/n)`, dense weights uniform in
    /// `±1/√fan_in`, zero biases.
    pub fn new(
        inputs: Vec<String>,
        n_groups: usize,
        hidden: &[usize],
        n_outputs: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let n = inputs.len();
        let sd = 1.0 / (n as f64).sqrt();
        let phi = (0..n * n_groups)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut layers = Vec::new();
        let mut width = n_groups;
        for &h in hidden.iter().chain(std::iter::once(&n_outputs)) {
            let mut layer = Dense::zeros(width, h);
            let bound = 1.0 / (width as f64).sqrt();
            layer
                .weights
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-bound..bound));
            layers.push(layer);
            width = h;
        }
        Self {
            inputs,
            n_groups,
            phi,
            layers,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.outputs)
            .collect()
    }

    /// Column `j` of `Φ_p`.
    pub fn group(&self, j: usize) -> Vec<f64> {
        (0..self.n_inputs())
            .map(|i| self.phi[i * self.n_groups + j])
            .collect()
    }

    pub fn groups(&self) -> Vec<PiExponents> {
        (0..self.n_groups)
            .map(|j| {
                PiExponents::new(self.inputs.clone(), self.group(j))
                    .with_label(format!("pi_{}", j + 1))
            })
            .collect()
    }

    /// First-layer output for one row of log-inputs.
    pub fn pi_layer(&self, log_p: &[f64]) -> Vec<f64> {
        (0..self.n_groups)
            .map(|j| {
                (0..self.n_inputs())
                    .map(|i| log_p[i] * self.phi[i * self.n_groups + j])
                    .sum::<f64>()
                    .exp()
            })
            .collect()
    }

    fn forward_log(&self, log_p: &[f64]) -> Vec<f64> {
        let mut a = self.pi_layer(log_p);
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.apply(&a, &mut z);
            if k < last {
                a = z.iter().map(|&v| elu(v)).collect();
            } else {
                a = z.clone();
            }
        }
        a
    }

    /// Network output for positive input rows.
    pub fn forward(&self, p: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let logs = log_rows(&self.inputs, p)?;
        let out: Vec<Vec<f64>> = logs.iter().map(|l| self.forward_log(l)).collect();
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(out)
    }

    pub fn parameter_count(&self) -> usize {
        self.phi.len()
            + self
                .layers
                .iter()
                .map(|l| l.weights.len() + l.bias.len())
                .sum::<usize>()
    }

    /// All weights in a fixed order: `Φ_p`, then per layer weights and bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.phi.clone();
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn assign(&mut self, flat: &[f64]) {
        let mut k = self.phi.len();
        self.phi.copy_from_slice(&flat[..k]);
        for l in &mut self.layers {
            let w = l.weights.len();
            l.weights.copy_from_slice(&flat[k..k + w]);
            k += w;
            let b = l.bias.len();
            l.bias.copy_from_slice(&flat[k..k + b]);
            k += b;
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut width = m.n_groups;
        if m.phi.len() != m.inputs.len() * m.n_groups || m.layers.is_empty() {
            return Err(Error::Config("checkpoint shape mismatch".into()));
        }
        for l in &m.layers {
            if l.inputs != width || l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Config("checkpoint shape mismatch".into()));
            }
            width = l.outputs;
        }
        Ok(m)
    }
}

fn log_rows(names: &[String], p: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    p.iter()
        .enumerate()
        .map(|(r, row)| {
            if row.len() != names.len() {
                return Err(Error::LengthMismatch {
                    expected: names.len(),
                    got: row.len(),
                });
            }
            row.iter()
                .zip(names)
                .map(|(&v, n)| {
                    if v > 0.0 {
                        Ok(v.ln())
                    } else {
                        Err(Error::NonPositive {
                            column: n.clone(),
                            row: r,
                            value: v,
                        })
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub null_weight: f64,
    pub l1: f64,
    pub l2: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop after this many epochs without improving the epoch loss.
    pub patience: Option<usize>,
    pub hidden: Vec<usize>,
    /// Number of groups; defaults to the nullspace dimension of `D_p`.
    pub n_groups: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            null_weight: 1.0,
            l1: 1e-3,
            l2: 1e-3,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 2000,
            seed: 0,
            patience: None,
            hidden: vec![8, 8, 8],
            n_groups: None,
        }
    }
}

/// Log-inputs and targets in row-major form.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub inputs: Vec<String>,
    pub log_p: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl TrainingSet {
    pub fn from_arrays(inputs: Vec<String>, p: &[Vec<f64>], targets: Vec<Vec<f64>>) -> Result<Self> {
        if p.len() != targets.len() {
            return Err(Error::LengthMismatch {
                expected: p.len(),
                got: targets.len(),
            });
        }
        if p.is_empty() {
            return Err(Error::Data("empty training set".into()));
        }
        let log_p = log_rows(&inputs, p)?;
        Ok(Self {
            inputs,
            log_p,
            targets,
        })
    }

    /// Inputs are the columns of `d_p`; targets are the dimensionless outputs.
    pub fn from_dataset(data: &Dataset, d_p: &UnitsMatrix) -> Result<Self> {
        let inputs = d_p.names().to_vec();
        let cols: Vec<&[f64]> = inputs.iter().map(|n| data.column(n)).collect::<Result<_>>()?;
        let outputs = data.registry().names_with_role(Role::Output);
        if outputs.is_empty() {
            return Err(Error::InvalidUnits("dataset declares no output".into()));
        }
        for o in &outputs {
            if !data.registry().omega(o)?.is_dimensionless() {
                return Err(Error::InvalidUnits(format!("output `{o}` must be dimensionless")));
            }
        }
        let ocols: Vec<&[f64]> = outputs.iter().map(|n| data.column(n)).collect::<Result<_>>()?;
        let m = data.nrows();
        let p: Vec<Vec<f64>> = (0..m).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
        let y: Vec<Vec<f64>> = (0..m).map(|r| ocols.iter().map(|c| c[r]).collect()).collect();
        Self::from_arrays(inputs, &p, y)
    }

    pub fn len(&self) -> usize {
        self.log_p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_p.is_empty()
    }

    pub fn n_outputs(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            inputs: self.inputs.clone(),
            log_p: rows.iter().map(|&r| self.log_p[r].clone()).collect(),
            targets: rows.iter().map(|&r| self.targets[r].clone()).collect(),
        }
    }
}

/// Loss weights and the units matrix of the inputs.
#[derive(Clone, Debug)]
pub struct LossSpec<'a> {
    pub d_p: &'a [Vec<f64>],
    pub null_weight: f64,
    pub l1: f64,
    pub l2: f64,
}

/// Decomposed loss value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossParts {
    pub misfit: f64,
    pub null: f64,
    pub l1: f64,
    pub l2: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.misfit + self.null + self.l1 + self.l2
    }
}

/// `‖D_p·Φ_p‖_F`.
pub fn null_norm(model: &BuckiNetModel, d_p: &[Vec<f64>]) -> f64 {
    null_matrix(model, d_p).iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn null_matrix(model: &BuckiNetModel, d_p: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let g = model.n_groups;
    d_p.iter()
        .map(|drow| {
            (0..g)
                .map(|j| {
                    drow.iter()
                        .enumerate()
                        .map(|(i, d)| d * model.phi[i * g + j])
                        .sum()
                })
                .collect()
        })
        .collect()
}

fn penalties(model: &BuckiNetModel, spec: &LossSpec) -> (f64, f64, f64) {
    let nn = null_norm(model, spec.d_p);
    let l1: f64 = model.phi.iter().map(|v| v.abs()).sum();
    let l2: f64 = model.phi.iter().map(|v| v * v).sum();
    (spec.null_weight * nn * nn, spec.l1 * l1, spec.l2 * l2)
}

/// Mean squared misfit over all rows and outputs.
pub fn misfit(model: &BuckiNetModel, set: &TrainingSet) -> f64 {
    let k = set.n_outputs().max(1) as f64;
    let total: f64 = set
        .log_p
        .iter()
        .zip(&set.targets)
        .map(|(l, y)| {
            model
                .forward_log(l)
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    total / (set.len() as f64 * k)
}

pub fn loss(model: &BuckiNetModel, set: &TrainingSet, spec: &LossSpec) -> LossParts {
    let (null, l1, l2) = penalties(model, spec);
    LossParts {
        misfit: misfit(model, set),
        null,
        l1,
        l2,
    }
}

/// Analytic gradient of the full loss on the rows `batch`, flattened like
/// [`BuckiNetModel::flatten`], together with the loss value.
pub fn gradients(
    model: &BuckiNetModel,
    set: &TrainingSet,
    batch: &[usize],
    spec: &LossSpec,
) -> (Vec<f64>, LossParts) {
    let n = model.n_inputs();
    let g = model.n_groups;
    let nl = model.layers.len();
    let k = model.n_outputs() as f64;
    let scale = 2.0 / (batch.len() as f64 * k);

    let mut d_phi = vec![0.0; model.phi.len()];
    let mut d_layers: Vec<Dense> = model
        .layers
        .iter()
        .map(|l| Dense::zeros(l.inputs, l.outputs))
        .collect();
    let mut sse = 0.0;

    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(nl + 1);
    let mut pres: Vec<Vec<f64>> = Vec::with_capacity(nl);
    for &r in batch {
        let lp = &set.log_p[r];
        acts.clear();
        pres.clear();
        acts.push(model.pi_layer(lp));
        for (li, layer) in model.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(&acts[li], &mut z);
            let a = if li + 1 < nl {
                z.iter().map(|&v| elu(v)).collect()
            } else {
                z.clone()
            };
            pres.push(z);
            acts.push(a);
        }
        let out = &acts[nl];
        let mut delta: Vec<f64> = out
            .iter()
            .zip(&set.targets[r])
            .map(|(a, y)| {
                sse += (a - y) * (a - y);
                scale * (a - y)
            })
            .collect();
        for li in (0..nl).rev() {
            let layer = &model.layers[li];
            if li + 1 < nl {
                delta
                    .iter_mut()
                    .zip(&pres[li])
                    .for_each(|(d, &z)| *d *= elu_prime(z));
            }
            let input = &acts[li];
            let dl = &mut d_layers[li];
            for o in 0..layer.outputs {
                dl.bias[o] += delta[o];
                let row = &mut dl.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(w, x)| *w += delta[o] * x);
            }
            let mut prev = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += w * delta[o]);
            }
            delta = prev;
        }
        // through exp: d pi / d z = pi
        for j in 0..g {
            let dz = delta[j] * acts[0][j];
            for i in 0..n {
                d_phi[i * g + j] += lp[i] * dz;
            }
        }
    }

    let nm = null_matrix(model, spec.d_p);
    for (drow, nrow) in spec.d_p.iter().zip(&nm) {
        for (i, d) in drow.iter().enumerate() {
            for j in 0..g {
                d_phi[i * g + j] += 2.0 * spec.null_weight * d * nrow[j];
            }
        }
    }
    for (dp, &p) in d_phi.iter_mut().zip(&model.phi) {
        *dp += spec.l1 * sign(p) + 2.0 * spec.l2 * p;
    }

    let (null, l1, l2) = penalties(model, spec);
    let parts = LossParts {
        misfit: sse / (batch.len() as f64 * k),
        null,
        l1,
        l2,
    };
    let mut flat = d_phi;
    for l in d_layers {
        flat.extend(l.weights);
        flat.extend(l.bias);
    }
    (flat, parts)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adam with the usual defaults `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(learning_rate: f64, n: usize) -> Self {
        Self {
            learning_rate,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= self.learning_rate * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub history: Vec<f64>,
    pub final_loss: LossParts,
    pub null_norm: f64,
    pub epochs_run: usize,
}

/// Trains a fresh model from `cfg.seed`.
pub fn train_set(set: &TrainingSet, d_p: &UnitsMatrix, cfg: &TrainConfig) -> Result<(BuckiNetModel, TrainReport)> {
    validate(cfg)?;
    if d_p.names() != set.inputs.as_slice() {
        return Err(Error::InvalidArgument("units matrix columns differ from the inputs".into()));
    }
    let n_groups = match cfg.n_groups {
        Some(g) => g,
        None => crate::nullspace::rational_nullspace(d_p).pi_count(),
    };
    if n_groups == 0 {
        return Err(Error::InvalidArgument("number of groups must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = BuckiNetModel::new(set.inputs.clone(), n_groups, &cfg.hidden, set.n_outputs(), &mut rng);
    train_from(model, set, d_p, cfg, &mut rng)
}

/// Continues training `model`; `rng` drives batch shuffling.
pub fn train_from(
    mut model: BuckiNetModel,
    set: &TrainingSet,
    d_p: &UnitsMatrix,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<(BuckiNetModel, TrainReport)> {
    validate(cfg)?;
    let d = d_p.to_f64();
    let spec = LossSpec {
        d_p: &d,
        null_weight: cfg.null_weight,
        l1: cfg.l1,
        l2: cfg.l2,
    };
    let mut params = model.flatten();
    let mut adam = Adam::new(cfg.learning_rate, params.len());
    let mut order: Vec<usize> = (0..set.len()).collect();
    let full_batch = cfg.batch_size >= set.len();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut last_stable = 0;
    for epoch in 0..cfg.epochs {
        if !full_batch {
            order.shuffle(rng);
        }
        let mut acc = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let (grad, parts) = gradients(&model, set, chunk, &spec);
            let total = parts.total();
            if !total.is_finite() || grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { epoch, last_stable });
            }
            acc += total;
            batches += 1;
            adam.step(&mut params, &grad);
            model.assign(&params);
        }
        let epoch_loss = acc / batches as f64;
        history.push(epoch_loss);
        last_stable = epoch;
        if epoch_loss < best - 1e-12 {
            best = epoch_loss;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    let final_loss = loss(&model, set, &spec);
    if !final_loss.total().is_finite() {
        return Err(Error::Diverged {
            epoch: history.len(),
            last_stable,
        });
    }
    let nn = null_norm(&model, &d);
    if cfg.null_weight > 0.0 && nn > 1e-2 {
        log::warn!("training ended with ‖D_p·Φ_p‖ = {nn:.3e} > 1e-2");
    }
    let report = TrainReport {
        epochs_run: history.len(),
        history,
        final_loss,
        null_norm: nn,
    };
    Ok((model, report))
}

/// Trains on the dimensionless outputs of `data` with inputs `D_p`'s columns.
pub fn train(data: &Dataset, d_p: &UnitsMatrix, cfg: &TrainConfig) -> Result<(BuckiNetModel, TrainReport)> {
    let set = TrainingSet::from_dataset(data, d_p)?;
    train_set(&set, d_p, cfg)
}

fn validate(cfg: &TrainConfig) -> Result<()> {
    if !(cfg.learning_rate > 0.0) || cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidArgument(
            "learning rate, batch size and epochs must be positive".into(),
        ));
    }
    if cfg.null_weight < 0.0 || cfg.l1 < 0.0 || cfg.l2 < 0.0 {
        return Err(Error::InvalidArgument("loss weights must be >= 0".into()));
    }
    Ok(())
}

/// Hyperparameter grid, crossed in full.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub null_weights: Vec<f64>,
    pub l1_weights: Vec<f64>,
    pub seeds: Vec<u64>,
    pub validation_fraction: f64,
    /// Seed of the train/validation split.
    pub split_seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            null_weights: vec![0.1, 1.0, 10.0],
            l1_weights: vec![1e-4, 1e-3],
            seeds: (0..5).collect(),
            validation_fraction: 0.2,
            split_seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialReport {
    pub null_weight: f64,
    pub l1: f64,
    pub seed: u64,
    pub train_loss: f64,
    pub validation_misfit: f64,
    pub null_norm: f64,
    pub phi: Vec<PiExponents>,
}

#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub trials: Vec<TrialReport>,
    pub best: usize,
    pub model: BuckiNetModel,
}

/// Trains every grid point on a common split and keeps the trial with the
/// lowest validation misfit. Trials run in parallel; results keep grid order.
pub fn grid_search(
    set: &TrainingSet,
    d_p: &UnitsMatrix,
    base: &TrainConfig,
    grid: &GridConfig,
) -> Result<GridOutcome> {
    if !(0.0..1.0).contains(&grid.validation_fraction) {
        return Err(Error::InvalidArgument("validation fraction must be in [0, 1)".into()));
    }
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(grid.split_seed));
    let n_val = ((set.len() as f64) * grid.validation_fraction).round() as usize;
    let (val_idx, train_idx) = idx.split_at(n_val);
    let train_part = set.select(train_idx);
    let val_part = if n_val > 0 {
        set.select(val_idx)
    } else {
        train_part.clone()
    };

    let mut points = Vec::new();
    for &nw in &grid.null_weights {
        for &l1 in &grid.l1_weights {
            for &seed in &grid.seeds {
                points.push((nw, l1, seed));
            }
        }
    }
    if points.is_empty() {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    let runs: Vec<Result<(BuckiNetModel, TrialReport)>> = points
        .par_iter()
        .map(|&(nw, l1, seed)| {
            let cfg = TrainConfig {
                null_weight: nw,
                l1,
                seed,
                ..base.clone()
            };
            let (model, rep) = train_set(&train_part, d_p, &cfg)?;
            let trial = TrialReport {
                null_weight: nw,
                l1,
                seed,
                train_loss: rep.final_loss.total(),
                validation_misfit: misfit(&model, &val_part),
                null_norm: rep.null_norm,
                phi: model.groups(),
            };
            Ok((model, trial))
        })
        .collect();
    let mut trials = Vec::new();
    let mut models = Vec::new();
    for r in runs {
        match r {
            Ok((m, t)) => {
                models.push(Some(m));
                trials.push(t);
            }
            Err(e) if e.is_numerical() => {
                log::warn!("grid trial failed: {e}");
                models.push(None);
                trials.push(TrialReport {
                    null_weight: f64::NAN,
                    l1: f64::NAN,
                    seed: 0,
                    train_loss: f64::INFINITY,
                    validation_misfit: f64::INFINITY,
                    null_norm: f64::INFINITY,
                    phi: Vec::new(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let best = (0..trials.len())
        .filter(|&i| models[i].is_some())
        .min_by(|&a, &b| trials[a].validation_misfit.total_cmp(&trials[b].validation_misfit))
        .ok_or_else(|| Error::Numerical("every grid trial diverged".into()))?;
    let model = models[best].take().expect("selected trial has a model");
    Ok(GridOutcome { trials, best, model })
}

/// One first-layer column next to its nearest homogeneous candidate.
#[derive(Clone, Debug, Serialize)]
pub struct SnappedGroup {
    pub raw: Vec<f64>,
    pub anchored: Option<Vec<f64>>,
    pub candidate: Vec<i64>,
    pub cosine: f64,
    /// Candidate scaled to the projection of `raw` onto it.
    pub scaled: Vec<f64>,
}

pub fn snap_groups(model: &BuckiNetModel, set: &CandidateSet, anchor: Option<&str>) -> Vec<SnappedGroup> {
    (0..model.n_groups)
        .filter_map(|j| {
            let raw = model.group(j);
            let (candidate, cosine) = nearest_member(&raw, set)?;
            let cf: Vec<f64> = candidate.iter().map(|&v| v as f64).collect();
            let dot: f64 = raw.iter().zip(&cf).map(|(a, b)| a * b).sum();
            let nn: f64 = cf.iter().map(|v| v * v).sum();
            let scaled = cf.iter().map(|v| v * dot / nn).collect();
            let anchored = anchor.and_then(|a| {
                normalize_exponents(&PiExponents::new(model.inputs.clone(), raw.clone()), a)
                    .ok()
                    .map(|e| e.values)
            });
            Some(SnappedGroup {
                raw,
                anchored,
                candidate,
                cosine,
                scaled,
            })
        })
        .collect()
}

/// Copy of `model` with its first layer replaced by the scaled candidates.
pub fn with_snapped(model: &BuckiNetModel, snapped: &[SnappedGroup]) -> BuckiNetModel {
    let mut out = model.clone();
    let g = model.n_groups;
    for (j, s) in snapped.iter().enumerate() {
        for (i, v) in s.scaled.iter().enumerate() {
            out.phi[i * g + j] = *v;
        }
    }
    out
}

/// Principal angles (radians, ascending) between the column spans of `a`
/// and `b`, each given as a list of vectors.
pub fn principal_angles(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    use nalgebra::DMatrix;
    let qa = orthonormal(a);
    let qb = orthonormal(b);
    let ma = DMatrix::from_fn(qa[0].len(), qa.len(), |i, j| qa[j][i]);
    let mb = DMatrix::from_fn(qb[0].len(), qb.len(), |i, j| qb[j][i]);
    let s = (ma.transpose() * mb).singular_values();
    let mut out: Vec<f64> = s.iter().map(|v| v.clamp(-1.0, 1.0).acos()).collect();
    out.sort_by(f64::total_cmp);
    out
}

fn orthonormal(vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for u in &q {
            let d: f64 = w.iter().zip(u).map(|(a, b)| a * b).sum();
            w.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            q.push(w.into_iter().map(|x| x / n).collect());
        }
    }
    q
}
