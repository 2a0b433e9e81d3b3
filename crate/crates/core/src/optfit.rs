//! Nullspace-constrained exponent search scored by kernel ridge regression.
//!
//! Exponents are parameterised as `Φ_p = N·C` with `N` the nullspace basis of
//! the input units matrix, so every evaluated candidate is homogeneous. The
//! objective is
//!
//! ```text
//! ‖Π_q − KRR(Π_p)‖₂ + λ₁‖Φ_p‖₁ + λ₂‖Φ_p‖₂
//! ```
//!
//! with the regression refit on a fixed training subsample for every
//! evaluation. The misfit is the leave-one-out error of the regression on
//! standardised group values, so it does not depend on the overall scale of
//! a group; the penalties set that scale.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nullspace::NullspaceBasis;
use crate::pitransform::{normalize_exponents, to_pi, Dataset, PiExponents, LOG_LIMIT};
use crate::regress::KrrModel;
use crate::units::Role;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    pub l1: f64,
    pub l2: f64,
    pub krr_scale: f64,
    pub krr_ridge: f64,
    pub n_starts: usize,
    pub n_train: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tolerance: f64,
    /// Quantity whose exponent is scaled to 1 in the reported groups.
    pub anchor: Option<String>,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            l1: 1e-4,
            l2: 1e-4,
            krr_scale: 1.0,
            krr_ridge: 1e-4,
            n_starts: 20,
            n_train: 100,
            seed: 0,
            max_iter: 500,
            tolerance: 1e-6,
            anchor: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StartRecord {
    pub start: usize,
    pub initial: Vec<f64>,
    pub coords: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptResult {
    pub exponents: Vec<PiExponents>,
    /// Groups rescaled to a unit anchor exponent; `None` where the anchor
    /// does not appear in a group.
    pub anchored: Vec<Option<PiExponents>>,
    pub objective: f64,
    pub best_start: usize,
    pub starts: Vec<StartRecord>,
    /// `max |D_p·Φ_p|` of the returned exponents.
    pub null_residual: f64,
    pub train_rows: Vec<usize>,
}

/// The optimisation problem over nullspace coordinates.
pub struct OptProblem {
    /// `n_in × pi_count`.
    basis: Vec<Vec<f64>>,
    inputs: Vec<String>,
    log_inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    n_groups: usize,
    cfg: OptConfig,
}

impl OptProblem {
    pub fn new(
        data: &Dataset,
        basis: &NullspaceBasis,
        n_groups: usize,
        rows: &[usize],
        cfg: &OptConfig,
    ) -> Result<Self> {
        let pi_count = basis.pi_count();
        if pi_count == 0 {
            return Err(Error::InvalidArgument(
                "the inputs admit no dimensionless group".into(),
            ));
        }
        if n_groups == 0 || n_groups > pi_count {
            return Err(Error::InvalidArgument(format!(
                "number of groups must be in 1..={pi_count}, got {n_groups}"
            )));
        }
        let inputs = basis.columns().to_vec();
        let mut log_inputs = vec![Vec::with_capacity(inputs.len()); rows.len()];
        for name in &inputs {
            let col = data.column(name)?;
            if let Some(&row) = rows.iter().find(|&&r| col[r] <= 0.0) {
                return Err(Error::NonPositive {
                    column: name.clone(),
                    row,
                    value: col[row],
                });
            }
            if col.iter().all(|&v| v == col[0]) {
                log::warn!("input `{name}` is constant; its exponent is not identifiable");
            }
            for (dst, &r) in log_inputs.iter_mut().zip(rows) {
                dst.push(col[r].ln());
            }
        }
        let outputs = data.registry().names_with_role(Role::Output);
        if outputs.is_empty() {
            return Err(Error::InvalidUnits("dataset declares no output".into()));
        }
        let mut targets = Vec::new();
        for name in &outputs {
            if !data.registry().omega(name)?.is_dimensionless() {
                return Err(Error::InvalidUnits(format!(
                    "output `{name}` must be dimensionless"
                )));
            }
            let col = data.column(name)?;
            targets.push(rows.iter().map(|&r| col[r]).collect());
        }
        let cols = basis.to_f64_columns();
        let basis_rows = (0..inputs.len())
            .map(|i| cols.iter().map(|v| v[i]).collect())
            .collect();
        Ok(Self {
            basis: basis_rows,
            inputs,
            log_inputs,
            targets,
            n_groups,
            cfg: cfg.clone(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.basis[0].len() * self.n_groups
    }

    /// `Φ_p` for flattened coordinates, one inner vector per group.
    pub fn exponents(&self, coords: &[f64]) -> Vec<Vec<f64>> {
        let k = self.basis[0].len();
        (0..self.n_groups)
            .map(|g| {
                let c = &coords[g * k..(g + 1) * k];
                self.basis
                    .iter()
                    .map(|row| row.iter().zip(c).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect()
    }

    /// Leave-one-out kernel ridge misfit on standardised group values plus
    /// the exponent penalties.
    pub fn objective(&self, coords: &[f64]) -> f64 {
        let phi = self.exponents(coords);
        let mut features = Vec::with_capacity(self.log_inputs.len());
        for lrow in &self.log_inputs {
            let mut f = Vec::with_capacity(self.n_groups);
            for p in &phi {
                let s: f64 = lrow.iter().zip(p).map(|(a, b)| a * b).sum();
                if !s.is_finite() || s.abs() > LOG_LIMIT {
                    return f64::INFINITY;
                }
                f.push(s.exp());
            }
            features.push(f);
        }
        standardize(&mut features);
        let Ok(model) =
            KrrModel::fit_columns(&features, &self.targets, self.cfg.krr_scale, self.cfg.krr_ridge)
        else {
            return f64::INFINITY;
        };
        let misfit: f64 = model
            .loo_residuals()
            .iter()
            .flatten()
            .map(|r| r * r)
            .sum::<f64>()
            .sqrt();
        let flat = phi.iter().flatten();
        let l1: f64 = flat.clone().map(|v| v.abs()).sum();
        let l2: f64 = flat.map(|v| v * v).sum::<f64>().sqrt();
        misfit + self.cfg.l1 * l1 + self.cfg.l2 * l2
    }

    /// Standard normal coordinates rescaled so `‖Φ_p‖₂² ` equals the number
    /// of nonzero exponents.
    pub fn initial_guess(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut c: Vec<f64> = (0..self.dimension()).map(|_| rng.sample(StandardNormal)).collect();
        let phi = self.exponents(&c);
        let flat: Vec<f64> = phi.into_iter().flatten().collect();
        let norm = flat.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nnz = flat.iter().filter(|v| v.abs() > 1e-12).count() as f64;
        if norm > 0.0 {
            let s = nnz.sqrt() / norm;
            c.iter_mut().for_each(|v| *v *= s);
        }
        c
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }
}

/// Centres each column and scales it to unit variance; constant columns
/// are only centred. Returns the means and scales used.
pub fn standardize(rows: &mut [Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = rows.len() as f64;
    let k = rows.first().map_or(0, Vec::len);
    let mut means = Vec::with_capacity(k);
    let mut scales = Vec::with_capacity(k);
    for j in 0..k {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / m;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / m;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for r in rows.iter_mut() {
            r[j] = (r[j] - mean) / sd;
        }
        means.push(mean);
        scales.push(sd);
    }
    (means, scales)
}

/// The regressor behind the objective: kernel ridge regression of the
/// outputs on standardised group values.
#[derive(Clone, Debug)]
pub struct GroupModel {
    pub exponents: Vec<PiExponents>,
    pub outputs: Vec<String>,
    means: Vec<f64>,
    scales: Vec<f64>,
    krr: KrrModel,
}

impl GroupModel {
    pub fn fit(data: &Dataset, exponents: &[PiExponents], rows: &[usize], cfg: &OptConfig) -> Result<Self> {
        let outputs = data.registry().names_with_role(Role::Output);
        if outputs.is_empty() {
            return Err(Error::InvalidUnits("dataset declares no output".into()));
        }
        let subset = data.select_rows(rows);
        let mut features = to_pi(&subset, exponents)?.rows();
        let (means, scales) = standardize(&mut features);
        let targets = outputs
            .iter()
            .map(|n| subset.column(n).map(<[f64]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        let krr = KrrModel::fit_columns(&features, &targets, cfg.krr_scale, cfg.krr_ridge)?;
        Ok(Self {
            exponents: exponents.to_vec(),
            outputs,
            means,
            scales,
            krr,
        })
    }

    /// Standardised group values of every row of `data`.
    pub fn features(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        let mut rows = to_pi(data, &self.exponents)?.rows();
        for r in &mut rows {
            for (j, v) in r.iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.scales[j];
            }
        }
        Ok(rows)
    }

    /// Predicted outputs, one vector per output column.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        self.krr.predict_columns(&self.features(data)?)
    }
}

/// Multistart search for `n_groups` input groups.
pub fn optfit_discover(
    data: &Dataset,
    basis: &NullspaceBasis,
    n_groups: usize,
    cfg: &OptConfig,
) -> Result<OptResult> {
    if cfg.n_starts == 0 || cfg.n_train == 0 {
        return Err(Error::InvalidArgument("n_starts and n_train must be >= 1".into()));
    }
    if cfg.l1 < 0.0 || cfg.l2 < 0.0 {
        return Err(Error::InvalidArgument("penalty weights must be >= 0".into()));
    }
    let m = data.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = if cfg.n_train >= m {
        (0..m).collect()
    } else {
        sample(&mut rng, m, cfg.n_train).into_vec()
    };
    rows.sort_unstable();
    let problem = OptProblem::new(data, basis, n_groups, &rows, cfg)?;

    let starts: Vec<StartRecord> = (0..cfg.n_starts)
        .into_par_iter()
        .map(|s| {
            let mut srng = ChaCha8Rng::seed_from_u64(cfg.seed);
            srng.set_stream(s as u64 + 1);
            let x0 = problem.initial_guess(&mut srng);
            let out = nelder_mead(|c| problem.objective(c), &x0, cfg.max_iter, cfg.tolerance);
            StartRecord {
                start: s,
                initial: x0,
                coords: out.x,
                objective: out.value,
                iterations: out.iterations,
                converged: out.converged,
            }
        })
        .collect();

    let best = starts
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("at least one start");
    if !best.objective.is_finite() {
        return Err(Error::Numerical("every start overflowed the pi transform".into()));
    }
    let phi = problem.exponents(&best.coords);
    let d_p = basis.matrix();
    let mut null_residual: f64 = 0.0;
    for p in &phi {
        for v in d_p.mul_f64(p)? {
            null_residual = null_residual.max(v.abs());
        }
    }
    let scale = phi.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
    assert!(
        null_residual <= 1e-12 * scale,
        "nullspace parameterisation broke homogeneity: {null_residual}"
    );
    let exponents: Vec<PiExponents> = phi
        .into_iter()
        .enumerate()
        .map(|(j, v)| PiExponents::new(problem.inputs.clone(), v).with_label(format!("pi_{}", j + 1)))
        .collect();
    let anchored = exponents
        .iter()
        .map(|e| cfg.anchor.as_deref().and_then(|a| normalize_exponents(e, a).ok()))
        .collect();
    Ok(OptResult {
        exponents,
        anchored,
        objective: best.objective,
        best_start: best.start,
        starts: starts.clone(),
        null_residual,
        train_rows: rows,
    })
}

#[derive(Clone, Debug)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Derivative-free simplex minimisation.
///
/// Stops when the spread of objective values over the simplex drops below
/// `tolerance` or after `max_iter` iterations.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    max_iter: usize,
    tolerance: f64,
) -> SimplexOutcome {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if x0[i] != 0.0 { 0.1 * x0[i].abs().max(0.05) } else { 0.05 };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[n] - values[0]).abs() <= tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(0.5);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = f(&xc);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let p: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            values[i] = f(&p);
            simplex[i] = p;
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty simplex");
    SimplexOutcome {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}
