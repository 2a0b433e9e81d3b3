//! Sparse identification of dimensionless dynamics over candidate groups.
//!
//! For each combination of dimensionless parameter groups and a timescale
//! `T`, time is rescaled to `τ = t/T`, the runs are stacked, and sequentially
//! thresholded least squares fits the highest derivative of the state on the
//! library
//!
//! ```text
//! Θ = g(π_p) ⊗ [1, q, q², …, q^deg (, dq/dτ)]
//! ```
//!
//! The combination with the lowest ranking loss wins.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{rk4_step, RunRecord};
use crate::error::{Error, Result};
use crate::nullspace::CandidateSet;
use crate::regress::fd_derivative;

/// Shape of the separable library.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibraryConfig {
    /// Highest power of the state.
    pub degree: usize,
    /// 1: fit `dq/dτ`; 2: fit `d²q/dτ²` with `dq/dτ` in the library.
    pub order: u8,
    /// Highest total degree of parameter-group monomials.
    pub param_degree: usize,
    /// Include the constant 1 among the parameter monomials.
    pub constant: bool,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self {
            degree: 7,
            order: 2,
            param_degree: 1,
            constant: false,
        }
    }
}

impl LibraryConfig {
    fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.order) {
            return Err(Error::InvalidArgument(format!(
                "derivative order must be 1 or 2, got {}",
                self.order
            )));
        }
        if self.param_degree == 0 && !self.constant {
            return Err(Error::InvalidArgument(
                "parameter dictionary is empty; enable the constant or raise its degree".into(),
            ));
        }
        Ok(())
    }

    /// Exponent tuples of the parameter monomials, constant first, then by
    /// total degree, then lexicographically descending.
    pub fn param_monomials(&self, groups: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        if self.constant {
            out.push(vec![0; groups]);
        }
        for deg in 1..=self.param_degree {
            let mut level = Vec::new();
            compositions(groups, deg, &mut vec![0; groups], 0, &mut level);
            out.extend(level);
        }
        out
    }

    /// Column labels in Kronecker order, e.g. `pi_1*x^3`.
    pub fn labels(&self, groups: usize, state: &str) -> Vec<String> {
        let state_terms = self.state_labels(state);
        let mut out = Vec::new();
        for mono in self.param_monomials(groups) {
            let g = monomial_label(&mono);
            for s in &state_terms {
                out.push(match (g.as_str(), s.as_str()) {
                    ("1", s) => s.to_string(),
                    (g, "1") => g.to_string(),
                    (g, s) => format!("{g}*{s}"),
                });
            }
        }
        out
    }

    fn state_labels(&self, state: &str) -> Vec<String> {
        let mut v: Vec<String> = (0..=self.degree)
            .map(|k| match k {
                0 => "1".to_string(),
                1 => state.to_string(),
                k => format!("{state}^{k}"),
            })
            .collect();
        if self.order == 2 {
            v.push(format!("{state}'"));
        }
        v
    }

    /// One library row.
    pub fn row(&self, q: f64, dq: f64, pi: &[f64]) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.degree + 2);
        let mut p = 1.0;
        for _ in 0..=self.degree {
            theta.push(p);
            p *= q;
        }
        if self.order == 2 {
            theta.push(dq);
        }
        let mut out = Vec::new();
        for mono in self.param_monomials(pi.len()) {
            let g: f64 = mono.iter().zip(pi).map(|(&e, &v)| v.powi(e as i32)).product();
            out.extend(theta.iter().map(|t| g * t));
        }
        out
    }
}

fn compositions(groups: usize, left: usize, cur: &mut Vec<usize>, i: usize, out: &mut Vec<Vec<usize>>) {
    if i + 1 == groups {
        cur[i] = left;
        out.push(cur.clone());
        cur[i] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[i] = e;
        compositions(groups, left - e, cur, i + 1, out);
    }
    cur[i] = 0;
}

fn monomial_label(mono: &[usize]) -> String {
    let parts: Vec<String> = mono
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(i, &e)| {
            if e == 1 {
                format!("pi_{}", i + 1)
            } else {
                format!("pi_{}^{e}", i + 1)
            }
        })
        .collect();
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("*")
    }
}

/// Library matrix with one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SindyLibrary {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

/// Library for one run: `tau` must be uniform, `pi` holds the run's group
/// values and `dq` is required for second-order libraries.
pub fn build_library(
    tau: &[f64],
    q: &[f64],
    dq: Option<&[f64]>,
    pi: &[f64],
    cfg: &LibraryConfig,
    state: &str,
) -> Result<SindyLibrary> {
    cfg.validate()?;
    if q.len() != tau.len() {
        return Err(Error::LengthMismatch {
            expected: tau.len(),
            got: q.len(),
        });
    }
    if q.len() < cfg.degree + 2 {
        return Err(Error::InvalidArgument(format!(
            "series of length {} is too short for degree {}",
            q.len(),
            cfg.degree
        )));
    }
    let dt = tau[1] - tau[0];
    if !(dt > 0.0) || tau.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::Data("time grid is not uniform".into()));
    }
    let dq = match (cfg.order, dq) {
        (2, Some(d)) => {
            if d.len() != q.len() {
                return Err(Error::LengthMismatch {
                    expected: q.len(),
                    got: d.len(),
                });
            }
            d
        }
        (2, None) => return Err(Error::InvalidArgument("second-order library needs dq/dτ".into())),
        _ => &[][..],
    };
    let rows = (0..q.len())
        .map(|i| cfg.row(q[i], dq.get(i).copied().unwrap_or(0.0), pi))
        .collect();
    Ok(SindyLibrary {
        rows,
        labels: cfg.labels(pi.len(), state),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StlsqConfig {
    pub threshold: f64,
    pub max_iter: usize,
    /// Ridge weight used while the support is being selected; the final
    /// coefficients are refit without it.
    pub ridge: f64,
}

impl Default for StlsqConfig {
    fn default() -> Self {
        Self {
            threshold: 1e-3,
            max_iter: 20,
            ridge: 0.0,
        }
    }
}

/// Sparse coefficients for one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SindyFit {
    pub coefficients: Vec<f64>,
    pub support: Vec<bool>,
    /// `‖y − Θξ‖² / rows`.
    pub residual: f64,
    /// `‖y − Θξ‖² / ‖y‖²`.
    pub normalized_residual: f64,
    pub threshold: f64,
    pub iterations: usize,
    /// A rank-deficient active set forced a jittered ridge solve.
    pub ridge_fallback: bool,
    pub labels: Vec<String>,
}

impl SindyFit {
    pub fn support_size(&self) -> usize {
        self.support.iter().filter(|&&s| s).count()
    }

    /// Labels of the active terms.
    pub fn active_labels(&self) -> Vec<String> {
        self.labels
            .iter()
            .zip(&self.support)
            .filter(|(_, &s)| s)
            .map(|(l, _)| l.clone())
            .collect()
    }

    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.coefficients[i])
    }

    /// `lhs = c₁ term₁ + …` with four significant digits.
    pub fn equation(&self, lhs: &str) -> String {
        let mut s = format!("{lhs} =");
        let mut first = true;
        for (l, (&c, &on)) in self.labels.iter().zip(self.coefficients.iter().zip(&self.support)) {
            if !on {
                continue;
            }
            let sign = if c < 0.0 { "-" } else { "+" };
            let mag = format!("{:.4e}", c.abs());
            let term = if l == "1" { mag } else { format!("{mag} {l}") };
            if first {
                s.push_str(&format!(" {}{term}", if c < 0.0 { "-" } else { "" }));
                first = false;
            } else {
                s.push_str(&format!(" {sign} {term}"));
            }
        }
        if first {
            s.push_str(" 0");
        }
        s
    }
}

/// Least squares restricted to `active` columns. Returns the coefficients and
/// whether a jittered ridge solve was needed.
fn solve_active(a: &DMatrix<f64>, y: &DVector<f64>, active: &[usize], ridge: f64) -> (Vec<f64>, bool) {
    let sub = a.select_columns(active);
    if ridge > 0.0 {
        return (ridge_solve(&sub, y, ridge), false);
    }
    if sub.nrows() >= sub.ncols() {
        let qr = sub.clone().qr();
        let r = qr.r();
        let diag_max = (0..r.ncols()).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let full_rank = (0..r.ncols()).all(|i| r[(i, i)].abs() > 1e-12 * diag_max.max(f64::MIN_POSITIVE));
        if full_rank {
            let qty = qr.q().transpose() * y;
            if let Some(x) = r.solve_upper_triangular(&qty) {
                if x.iter().all(|v| v.is_finite()) {
                    return (x.iter().copied().collect(), false);
                }
            }
        }
    }
    (ridge_solve(&sub, y, 1e-10), true)
}

fn ridge_solve(a: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Vec<f64> {
    let n = a.ncols();
    let mut ata = a.transpose() * a;
    for i in 0..n {
        ata[(i, i)] += ridge;
    }
    let aty = a.transpose() * y;
    ata.clone().cholesky()
        .map(|c| c.solve(&aty))
        .or_else(|| ata.lu().solve(&aty))
        .map(|x| x.iter().copied().collect())
        .unwrap_or_else(|| vec![0.0; n])
}

/// Sequentially thresholded least squares.
pub fn stlsq(theta: &[Vec<f64>], y: &[f64], cfg: &StlsqConfig) -> Result<SindyFit> {
    stlsq_labeled(theta, y, cfg, None)
}

pub fn stlsq_labeled(
    theta: &[Vec<f64>],
    y: &[f64],
    cfg: &StlsqConfig,
    labels: Option<&[String]>,
) -> Result<SindyFit> {
    if !(cfg.threshold >= 0.0) || cfg.ridge < 0.0 {
        return Err(Error::InvalidArgument("threshold and ridge must be >= 0".into()));
    }
    let m = theta.len();
    if m != y.len() {
        return Err(Error::LengthMismatch { expected: m, got: y.len() });
    }
    let n = theta.first().map_or(0, Vec::len);
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("empty library".into()));
    }
    if m < n {
        log::warn!("library has more columns ({n}) than rows ({m})");
    }
    if theta.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("library or target".into()));
    }
    let a = DMatrix::from_fn(m, n, |i, j| theta[i][j]);
    let yv = DVector::from_column_slice(y);
    let mut active: Vec<usize> = (0..n).collect();
    let mut xi = vec![0.0; n];
    let mut fallback = false;
    let mut iterations = 0;
    loop {
        iterations += 1;
        xi.iter_mut().for_each(|v| *v = 0.0);
        if active.is_empty() {
            break;
        }
        let (coef, fb) = solve_active(&a, &yv, &active, cfg.ridge);
        fallback |= fb;
        for (&j, c) in active.iter().zip(coef) {
            xi[j] = c;
        }
        let next: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&j| xi[j].abs() >= cfg.threshold)
            .collect();
        if next.len() == active.len() || iterations >= cfg.max_iter {
            for j in 0..n {
                if xi[j].abs() < cfg.threshold {
                    xi[j] = 0.0;
                }
            }
            break;
        }
        active = next;
    }
    if cfg.ridge > 0.0 {
        // unregularized refit on the selected support
        let chosen: Vec<usize> = (0..n).filter(|&j| xi[j] != 0.0).collect();
        if !chosen.is_empty() {
            let (coef, fb) = solve_active(&a, &yv, &chosen, 0.0);
            fallback |= fb;
            for (&j, c) in chosen.iter().zip(coef) {
                xi[j] = c;
            }
        }
    }
    let support: Vec<bool> = xi.iter().map(|&v| v != 0.0).collect();
    let pred = &a * DVector::from_column_slice(&xi);
    let sse = (&yv - pred).norm_squared();
    let yn = yv.norm_squared();
    Ok(SindyFit {
        coefficients: xi,
        support,
        residual: sse / m as f64,
        normalized_residual: if yn > 0.0 { sse / yn } else { sse },
        threshold: cfg.threshold,
        iterations,
        ridge_fallback: fallback,
        labels: labels
            .map(<[String]>::to_vec)
            .unwrap_or_else(|| (0..n).map(|j| format!("f{j}")).collect()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub library: LibraryConfig,
    pub stlsq: StlsqConfig,
    /// Number of parameter groups per combination.
    pub pick_k: usize,
    /// Weight of the support size in the ranking loss.
    pub rank_weight: f64,
    /// Largest admissible number of combinations.
    pub cap: u64,
    /// Keep every `decimate`-th sample after differentiation.
    pub decimate: usize,
    /// Drop this many samples at each end of every run after
    /// differentiation.
    pub trim: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            library: LibraryConfig::default(),
            stlsq: StlsqConfig::default(),
            pick_k: 2,
            rank_weight: 1e-3,
            cap: 100_000,
            decimate: 1,
            trim: 0,
        }
    }
}

/// One evaluated combination.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepEntry {
    pub pi: Vec<Vec<i64>>,
    pub timescale: Vec<i64>,
    pub loss: f64,
    pub fit: SindyFit,
}

impl SweepEntry {
    fn id(&self) -> (Vec<Vec<i64>>, Vec<i64>) {
        (self.pi.clone(), self.timescale.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub parameters: Vec<String>,
    pub state: String,
    /// Sorted by loss, ties by candidate exponents.
    pub entries: Vec<SweepEntry>,
}

impl SweepResult {
    pub fn winner(&self) -> &SweepEntry {
        &self.entries[0]
    }
}

/// Per-run data shared by every combination.
struct Prepared {
    values: Vec<f64>,
    q: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

fn prepare(runs: &[RunRecord], parameters: &[String], cfg: &SweepConfig) -> Result<(String, Vec<Prepared>)> {
    let first = runs.first().ok_or_else(|| Error::Data("no runs".into()))?;
    if first.states.len() != 1 {
        return Err(Error::Data("runs must carry exactly one state series".into()));
    }
    let state = first.state_names[0].clone();
    let step = cfg.decimate.max(1);
    let mut out = Vec::with_capacity(runs.len());
    for r in runs {
        r.validate()?;
        if r.state_names != first.state_names {
            return Err(Error::Data(format!("run {} has different state columns", r.id)));
        }
        let values = parameters
            .iter()
            .map(|p| {
                let v = r
                    .parameter(p)
                    .ok_or_else(|| Error::Data(format!("run {} lacks parameter `{p}`", r.id)))?;
                if v > 0.0 {
                    Ok(v)
                } else {
                    Err(Error::NonPositive {
                        column: p.clone(),
                        row: r.id,
                        value: v,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let dt = r.dt();
        let q = &r.states[0];
        let d1 = fd_derivative(q, dt, 1)?;
        let d2 = fd_derivative(q, dt, 2)?;
        let n = q.len();
        if n <= 2 * cfg.trim {
            return Err(Error::Data(format!("run {} is shorter than the trim", r.id)));
        }
        let keep: Vec<usize> = (cfg.trim..n - cfg.trim).step_by(step).collect();
        out.push(Prepared {
            values,
            q: keep.iter().map(|&i| q[i]).collect(),
            d1: keep.iter().map(|&i| d1[i]).collect(),
            d2: keep.iter().map(|&i| d2[i]).collect(),
        });
    }
    Ok((state, out))
}

fn power_product(values: &[f64], exps: &[i64]) -> f64 {
    values
        .iter()
        .zip(exps)
        .map(|(v, &e)| v.powi(e as i32))
        .product()
}

/// Fits one combination of groups and timescale on stacked runs.
fn fit_combination(
    prepared: &[Prepared],
    pis: &[Vec<i64>],
    timescale: &[i64],
    cfg: &SweepConfig,
    labels: &[String],
) -> Result<SindyFit> {
    let mut theta = Vec::new();
    let mut y = Vec::new();
    for run in prepared {
        let t = power_product(&run.values, timescale);
        let pi: Vec<f64> = pis.iter().map(|e| power_product(&run.values, e)).collect();
        for k in 0..run.q.len() {
            let dq = t * run.d1[k];
            let target = if cfg.library.order == 2 { t * t * run.d2[k] } else { dq };
            theta.push(cfg.library.row(run.q[k], dq, &pi));
            y.push(target);
        }
    }
    stlsq_labeled(&theta, &y, &cfg.stlsq, Some(labels))
}

/// Number of (group combination, timescale) pairs the sweep would evaluate.
pub fn combination_count(candidates: &CandidateSet, pick_k: usize) -> u128 {
    let members = candidates.pi_members();
    let per_line: Vec<u128> = (0..candidates.pi_candidates.len())
        .map(|l| members.iter().filter(|m| m.line == l).count() as u128)
        .collect();
    // elementary symmetric polynomial of degree pick_k
    let mut e = vec![0u128; pick_k + 1];
    e[0] = 1;
    for c in per_line {
        for k in (1..=pick_k).rev() {
            e[k] = e[k].saturating_add(e[k - 1].saturating_mul(c));
        }
    }
    e[pick_k].saturating_mul(candidates.timescale_candidates.len() as u128)
}

/// All `pick_k`-subsets of distinct lines, with every admissible multiple
/// of each line.
fn group_combinations(candidates: &CandidateSet, pick_k: usize) -> Vec<Vec<Vec<i64>>> {
    let members = candidates.pi_members();
    let lines = candidates.pi_candidates.len();
    let by_line: Vec<Vec<Vec<i64>>> = (0..lines)
        .map(|l| {
            members
                .iter()
                .filter(|m| m.line == l)
                .map(|m| m.exponents.clone())
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut chosen = Vec::new();
    fn rec(
        by_line: &[Vec<Vec<i64>>],
        start: usize,
        left: usize,
        chosen: &mut Vec<usize>,
        out: &mut Vec<Vec<Vec<i64>>>,
    ) {
        if left == 0 {
            let mut acc: Vec<Vec<Vec<i64>>> = vec![Vec::new()];
            for &l in chosen.iter() {
                let mut next = Vec::new();
                for partial in &acc {
                    for m in &by_line[l] {
                        let mut p = partial.clone();
                        p.push(m.clone());
                        next.push(p);
                    }
                }
                acc = next;
            }
            out.extend(acc);
            return;
        }
        for l in start..by_line.len() {
            chosen.push(l);
            rec(by_line, l + 1, left - 1, chosen, out);
            chosen.pop();
        }
    }
    rec(&by_line, 0, pick_k, &mut chosen, &mut out);
    out
}

/// Evaluates every combination of `pick_k` candidate groups and one
/// timescale on the stacked runs.
pub fn sweep(runs: &[RunRecord], candidates: &CandidateSet, cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.library.validate()?;
    if cfg.pick_k == 0 && !cfg.library.constant {
        return Err(Error::InvalidArgument("pick_k = 0 needs the constant term".into()));
    }
    if candidates.timescale_candidates.is_empty() {
        return Err(Error::EmptyCandidates {
            bound: candidates.power_bound,
            what: "no timescale candidates".into(),
        });
    }
    if cfg.pick_k > candidates.pi_candidates.len() {
        return Err(Error::EmptyCandidates {
            bound: candidates.power_bound,
            what: format!(
                "{} groups requested but only {} candidate lines exist",
                cfg.pick_k,
                candidates.pi_candidates.len()
            ),
        });
    }
    let count = combination_count(candidates, cfg.pick_k);
    if count > cfg.cap as u128 {
        return Err(Error::CombinatorialCap { count, cap: cfg.cap as u128 });
    }
    let (state, prepared) = prepare(runs, &candidates.columns, cfg)?;
    let labels = cfg.library.labels(cfg.pick_k, &state);
    let groups = group_combinations(candidates, cfg.pick_k);
    let jobs: Vec<(&Vec<Vec<i64>>, &Vec<i64>)> = groups
        .iter()
        .flat_map(|g| candidates.timescale_candidates.iter().map(move |t| (g, t)))
        .collect();
    let entries: Vec<Result<SweepEntry>> = jobs
        .par_iter()
        .map(|(pis, ts)| {
            let fit = fit_combination(&prepared, pis, ts, cfg, &labels)?;
            let loss = fit.normalized_residual + cfg.rank_weight * fit.support_size() as f64;
            Ok(SweepEntry {
                pi: (*pis).clone(),
                timescale: (*ts).clone(),
                loss: if loss.is_finite() { loss } else { f64::INFINITY },
                fit,
            })
        })
        .collect();
    let mut entries: Vec<SweepEntry> = entries
        .into_iter()
        .filter_map(|e| match e {
            Ok(e) => Some(Ok(e)),
            Err(err) if err.is_numerical() => {
                log::warn!("combination skipped: {err}");
                None
            }
            Err(err) => Some(Err(err)),
        })
        .collect::<Result<_>>()?;
    if entries.is_empty() {
        return Err(Error::Numerical("no combination could be fitted".into()));
    }
    entries.sort_by(|a, b| a.loss.total_cmp(&b.loss).then_with(|| a.id().cmp(&b.id())));
    Ok(SweepResult {
        parameters: candidates.columns.clone(),
        state,
        entries,
    })
}

/// Refits a single combination, e.g. the sweep winner at another threshold.
pub fn fit_runs(
    runs: &[RunRecord],
    parameters: &[String],
    pis: &[Vec<i64>],
    timescale: &[i64],
    cfg: &SweepConfig,
) -> Result<SindyFit> {
    cfg.library.validate()?;
    let (state, prepared) = prepare(runs, parameters, cfg)?;
    let labels = cfg.library.labels(pis.len(), &state);
    fit_combination(&prepared, pis, timescale, cfg, &labels)
}

/// Group values and timescale of one parameter sample.
pub fn evaluate_candidate(values: &[f64], pis: &[Vec<i64>], timescale: &[i64]) -> (Vec<f64>, f64) {
    (
        pis.iter().map(|e| power_product(values, e)).collect(),
        power_product(values, timescale),
    )
}

/// Integrated model trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub tau: Vec<f64>,
    /// `q`, and `dq/dτ` for second-order models, per sample.
    pub states: Vec<Vec<f64>>,
    /// Integration stopped because the state exceeded [`BLOW_UP`].
    pub blew_up: bool,
}

pub const BLOW_UP: f64 = 1e6;

/// Integrates the identified model with RK4. `initial` is `[q]` or
/// `[q, dq/dτ]` depending on the library order.
pub fn simulate_fit(
    fit: &SindyFit,
    library: &LibraryConfig,
    pi: &[f64],
    initial: &[f64],
    tau_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    library.validate()?;
    let dim = library.order as usize;
    if initial.len() != dim {
        return Err(Error::LengthMismatch {
            expected: dim,
            got: initial.len(),
        });
    }
    if !(dt > 0.0) || !(tau_end > 0.0) {
        return Err(Error::InvalidArgument("dt and tau_end must be > 0".into()));
    }
    if fit.coefficients.len() != library.labels(pi.len(), "q").len() {
        return Err(Error::InvalidArgument("fit does not match the library shape".into()));
    }
    let coef = fit.coefficients.clone();
    let lib = library.clone();
    let pi = pi.to_vec();
    let rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
        let dq = if lib.order == 2 { y[1] } else { 0.0 };
        let row = lib.row(y[0], dq, &pi);
        let acc: f64 = row.iter().zip(&coef).map(|(a, b)| a * b).sum();
        if lib.order == 2 {
            dy[0] = y[1];
            dy[1] = acc;
        } else {
            dy[0] = acc;
        }
    };
    let steps = (tau_end / dt).round() as usize;
    let mut y = initial.to_vec();
    let mut tau = vec![0.0];
    let mut states = vec![y.clone()];
    let mut blew_up = false;
    for k in 0..steps {
        rk4_step(&rhs, k as f64 * dt, &mut y, dt);
        if y.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP) {
            blew_up = true;
            break;
        }
        tau.push((k + 1) as f64 * dt);
        states.push(y.clone());
    }
    Ok(Trajectory { tau, states, blew_up })
}
