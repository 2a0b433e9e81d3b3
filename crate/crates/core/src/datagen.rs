//! Benchmark data: pendulum, bead on a rotating hoop, Blasius boundary layer
//! and a Landau pitchfork surrogate for convection onset, plus CSV ingestion
//! of externally produced runs.
//!
//! Every generator is seed-deterministic. Run `i` draws its parameters from a
//! ChaCha stream derived from the master seed and `i`, so runs can be made in
//! parallel without changing the output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pitransform::{write_table, Dataset};
use crate::units::{Registry, Role};

/// One classical fourth-order Runge-Kutta step of `y' = f(t, y)`.
pub fn rk4_step(f: &impl Fn(f64, &[f64], &mut [f64]), t: f64, y: &mut [f64], h: f64) {
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(t, y, &mut k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4);
    for i in 0..n {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// States at `t0 + k·dt_out` for `k = 0..samples`, taking `substeps` RK4
/// steps per output interval.
pub fn rk4_grid(
    f: &impl Fn(f64, &[f64], &mut [f64]),
    y0: &[f64],
    t0: f64,
    dt_out: f64,
    samples: usize,
    substeps: usize,
) -> Vec<Vec<f64>> {
    let h = dt_out / substeps as f64;
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(samples);
    out.push(y.clone());
    for k in 1..samples {
        let base = t0 + (k - 1) as f64 * dt_out;
        for s in 0..substeps {
            rk4_step(f, base + s as f64 * h, &mut y, h);
        }
        out.push(y.clone());
    }
    out
}

/// Relative change tolerated between a trajectory and its half-step rerun.
pub const STEP_TOLERANCE: f64 = 1e-6;

/// Like [`rk4_grid`] but doubles the substep count until halving the step
/// moves no sample by more than [`STEP_TOLERANCE`] relative to the
/// trajectory's magnitude.
pub fn rk4_converged(
    f: &impl Fn(f64, &[f64], &mut [f64]),
    y0: &[f64],
    t0: f64,
    dt_out: f64,
    samples: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut substeps = 1;
    let mut coarse = rk4_grid(f, y0, t0, dt_out, samples, substeps);
    for _ in 0..16 {
        substeps *= 2;
        let fine = rk4_grid(f, y0, t0, dt_out, samples, substeps);
        let scale = fine
            .iter()
            .flatten()
            .fold(1.0f64, |a, v| a.max(v.abs()));
        let gap = coarse
            .iter()
            .flatten()
            .zip(fine.iter().flatten())
            .fold(0.0f64, |a, (c, d)| a.max((c - d).abs()));
        if !gap.is_finite() {
            break;
        }
        if gap <= STEP_TOLERANCE * scale {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(Error::Numerical("time step refinement did not converge".into()))
}

/// Uniform sampling ranges keyed by quantity name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub seed: u64,
    pub samples: usize,
    pub ranges: BTreeMap<String, [f64; 2]>,
}

impl SamplerSpec {
    pub fn validate(&self, names: &[&str]) -> Result<()> {
        for n in names {
            let [lo, hi] = self
                .ranges
                .get(*n)
                .ok_or_else(|| Error::Config(format!("missing range for `{n}`")))?;
            if !(lo < hi) || !(*lo > 0.0) {
                return Err(Error::Config(format!(
                    "range for `{n}` must satisfy 0 < lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        if self.samples == 0 {
            return Err(Error::Config("sample count must be >= 1".into()));
        }
        Ok(())
    }

    /// Parameter values of sample `index`, ordered like `names`.
    pub fn draw(&self, names: &[&str], index: usize) -> Vec<f64> {
        let mut rng = run_rng(self.seed, index);
        names
            .iter()
            .map(|n| {
                let [lo, hi] = self.ranges[*n];
                rng.random_range(lo..hi)
            })
            .collect()
    }
}

/// Random stream for run `index` under `seed`.
pub fn run_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub generator: String,
    pub seed: u64,
    /// Ground-truth constants injected by the generator.
    #[serde(default)]
    pub truth: BTreeMap<String, f64>,
}

/// One parameter sample and its time series.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub id: usize,
    pub parameters: Vec<String>,
    pub values: Vec<f64>,
    pub time_name: String,
    pub time: Vec<f64>,
    pub state_names: Vec<String>,
    pub states: Vec<Vec<f64>>,
    pub meta: RunMeta,
}

impl RunRecord {
    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn dt(&self) -> f64 {
        self.time[1] - self.time[0]
    }

    /// Checks finite states and a uniform time grid.
    pub fn validate(&self) -> Result<()> {
        if self.time.len() < 2 {
            return Err(Error::Data(format!("run {} has fewer than 2 samples", self.id)));
        }
        let dt = self.dt();
        if !(dt > 0.0) {
            return Err(Error::Data(format!("run {} has a non-increasing time grid", self.id)));
        }
        for (k, w) in self.time.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return Err(Error::Data(format!(
                    "run {} time grid is not uniform at sample {}",
                    self.id,
                    k + 1
                )));
            }
        }
        for (name, s) in self.state_names.iter().zip(&self.states) {
            if s.len() != self.time.len() {
                return Err(Error::Data(format!(
                    "run {} state `{name}` has {} samples, expected {}",
                    self.id,
                    s.len(),
                    self.time.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("run {} state `{name}` is not finite", self.id)));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Pendulum

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumSpec {
    pub sampler: SamplerSpec,
    /// Time samples per parameter combination, on `(0, t_end]`.
    pub times: usize,
    pub t_end: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl Default for PendulumSpec {
    fn default() -> Self {
        Self {
            sampler: SamplerSpec {
                seed: 0,
                samples: 100,
                ranges: BTreeMap::from([
                    ("g".into(), [5.0, 15.0]),
                    ("m".into(), [0.1, 1.0]),
                    ("L".into(), [0.5, 2.0]),
                ]),
            },
            times: 100,
            t_end: 1.0,
            amplitude: 1.0,
            phase: 0.0,
        }
    }
}

/// Small-angle pendulum `α(t) = α₀ cos(√(g/L)·t + θ)`.
pub fn pendulum_angle(g: f64, length: f64, t: f64, amplitude: f64, phase: f64) -> f64 {
    amplitude * ((g / length).sqrt() * t + phase).cos()
}

/// Rows `(g, m, L, t, alpha)`, one per parameter sample and time.
pub fn gen_pendulum(spec: &PendulumSpec) -> Result<Dataset> {
    let names = ["g", "m", "L"];
    spec.sampler.validate(&names)?;
    if spec.times == 0 || !(spec.t_end > 0.0) {
        return Err(Error::Config("pendulum needs times >= 1 and t_end > 0".into()));
    }
    let dt = spec.t_end / spec.times as f64;
    let mut rows = Vec::with_capacity(spec.sampler.samples * spec.times);
    for s in 0..spec.sampler.samples {
        let p = spec.sampler.draw(&names, s);
        for k in 1..=spec.times {
            let t = k as f64 * dt;
            let a = pendulum_angle(p[0], p[2], t, spec.amplitude, spec.phase);
            rows.push(vec![p[0], p[1], p[2], t, a]);
        }
    }
    Dataset::from_rows(Registry::pendulum(), &rows)
}

// ---------------------------------------------------------------------------
// Rotating hoop

/// How the hoop runs are sampled in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeGrid {
    /// Seconds, identical for every run.
    Dimensional { end: f64, samples: usize },
    /// Multiples of each run's `√(R/g)`, so all runs share a
    /// dimensionless grid.
    Scaled { end: f64, samples: usize },
}

impl TimeGrid {
    fn parts(&self) -> (f64, usize) {
        match *self {
            TimeGrid::Dimensional { end, samples } | TimeGrid::Scaled { end, samples } => (end, samples),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoopSpec {
    pub sampler: SamplerSpec,
    /// Initial angle range in radians; the initial rate is zero.
    pub x0: [f64; 2],
    /// Negate the initial angle of every second run.
    #[serde(default)]
    pub mirror: bool,
    pub time: TimeGrid,
}

impl HoopSpec {
    /// Defaults for the sparse-regression experiment: 20 runs in seconds.
    pub fn dsindy() -> Self {
        Self {
            sampler: SamplerSpec {
                seed: 0,
                samples: 20,
                ranges: hoop_ranges(4.0),
            },
            x0: [0.1, 1.0],
            mirror: true,
            time: TimeGrid::Dimensional {
                end: 10.0,
                samples: 2001,
            },
        }
    }

    /// Defaults for the network experiment: 3000 runs on a shared scaled
    /// grid from a fixed initial angle.
    pub fn buckinet() -> Self {
        Self {
            sampler: SamplerSpec {
                seed: 0,
                samples: 3000,
                ranges: hoop_ranges(6.0),
            },
            x0: [0.5, 0.5],
            mirror: false,
            time: TimeGrid::Scaled {
                end: 20.0,
                samples: 101,
            },
        }
    }
}

fn hoop_ranges(omega_max: f64) -> BTreeMap<String, [f64; 2]> {
    BTreeMap::from([
        ("m".into(), [0.5, 1.5]),
        ("R".into(), [0.5, 1.5]),
        ("b".into(), [1.0, 3.0]),
        ("g".into(), [9.0, 10.6]),
        ("omega".into(), [1.0, omega_max]),
    ])
}

pub const HOOP_PARAMETERS: [&str; 5] = ["m", "R", "b", "g", "omega"];

/// Right-hand side of `m R x'' = -b x' - m g sin x + m R ω² sin x cos x`
/// with state `(x, x')`.
pub fn hoop_rhs(p: [f64; 5]) -> impl Fn(f64, &[f64], &mut [f64]) {
    let [m, r, b, g, w] = p;
    move |_t, y, dy| {
        let (s, c) = y[0].sin_cos();
        dy[0] = y[1];
        dy[1] = (-b * y[1] - m * g * s + m * r * w * w * s * c) / (m * r);
    }
}

/// Integrates one hoop run; returns times and `(x, x')` samples.
pub fn hoop_trajectory(p: [f64; 5], x0: f64, dt: f64, samples: usize) -> Result<Vec<Vec<f64>>> {
    rk4_converged(&hoop_rhs(p), &[x0, 0.0], 0.0, dt, samples)
}

pub fn gen_hoop(spec: &HoopSpec) -> Result<Vec<RunRecord>> {
    spec.sampler.validate(&HOOP_PARAMETERS)?;
    let (end, samples) = spec.time.parts();
    if samples < 2 || !(end > 0.0) || !(spec.x0[0] <= spec.x0[1]) {
        return Err(Error::Config("hoop needs samples >= 2, end > 0 and an ordered x0 range".into()));
    }
    (0..spec.sampler.samples)
        .into_par_iter()
        .map(|i| {
            let v = spec.sampler.draw(&HOOP_PARAMETERS, i);
            let p = [v[0], v[1], v[2], v[3], v[4]];
            let mut rng = run_rng(spec.sampler.seed ^ 0x5eed_0f_a4, i);
            let mut x0 = if spec.x0[0] < spec.x0[1] {
                rng.random_range(spec.x0[0]..spec.x0[1])
            } else {
                spec.x0[0]
            };
            if spec.mirror && i % 2 == 1 {
                x0 = -x0;
            }
            let unit = match spec.time {
                TimeGrid::Dimensional { .. } => 1.0,
                TimeGrid::Scaled { .. } => (p[1] / p[3]).sqrt(),
            };
            let dt = end * unit / (samples - 1) as f64;
            let traj = hoop_trajectory(p, x0, dt, samples)?;
            let record = RunRecord {
                id: i + 1,
                parameters: HOOP_PARAMETERS.iter().map(|s| s.to_string()).collect(),
                values: v,
                time_name: "t".into(),
                time: (0..samples).map(|k| k as f64 * dt).collect(),
                state_names: vec!["x".into()],
                states: vec![traj.iter().map(|s| s[0]).collect()],
                meta: RunMeta {
                    generator: "hoop".into(),
                    seed: spec.sampler.seed,
                    truth: BTreeMap::from([("x0".into(), x0)]),
                },
            };
            record.validate()?;
            Ok(record)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Blasius boundary layer

/// Tabulated solution of `f''' + f f''/2 = 0`, `f(0) = f'(0) = 0`,
/// `f'(∞) = 1`.
#[derive(Clone, Debug)]
pub struct BlasiusProfile {
    pub wall_shear: f64,
    pub step: f64,
    /// Rows `(f, f', f'')` at `η = k·step`.
    pub table: Vec<[f64; 3]>,
}

fn blasius_rhs(_t: f64, y: &[f64], dy: &mut [f64]) {
    dy[0] = y[1];
    dy[1] = y[2];
    dy[2] = -0.5 * y[0] * y[2];
}

/// `f'(η_max)` for wall shear `s`.
pub fn blasius_edge_velocity(s: f64, eta_max: f64, step: f64) -> f64 {
    let n = (eta_max / step).round() as usize;
    let mut y = [0.0, 0.0, s];
    for k in 0..n {
        rk4_step(&blasius_rhs, k as f64 * step, &mut y, step);
    }
    y[1]
}

impl BlasiusProfile {
    /// Shooting on `f''(0)` by bisection in `[0.1, 1]`.
    pub fn solve(eta_max: f64, step: f64) -> Result<Self> {
        if !(eta_max > 0.0) || !(step > 0.0) {
            return Err(Error::InvalidArgument("eta_max and step must be > 0".into()));
        }
        let (mut lo, mut hi) = (0.1, 1.0);
        let res = |s: f64| blasius_edge_velocity(s, eta_max, step) - 1.0;
        if res(lo) > 0.0 || res(hi) < 0.0 {
            return Err(Error::ShootingFailed("initial bracket does not straddle f'(inf) = 1".into()));
        }
        let mut s = 0.5 * (lo + hi);
        let mut r = res(s);
        let mut iterations = 0;
        while r.abs() > 1e-8 {
            if r > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            s = 0.5 * (lo + hi);
            r = res(s);
            iterations += 1;
            if iterations > 200 || hi - lo < 1e-16 {
                return Err(Error::ShootingFailed(format!(
                    "edge velocity residual {r:.3e} after {iterations} bisections"
                )));
            }
        }
        let n = (eta_max / step).round() as usize;
        let mut y = [0.0, 0.0, s];
        let mut table = Vec::with_capacity(n + 1);
        table.push(y);
        for k in 0..n {
            rk4_step(&blasius_rhs, k as f64 * step, &mut y, step);
            table.push(y);
        }
        Ok(Self {
            wall_shear: s,
            step,
            table,
        })
    }

    pub fn eta_max(&self) -> f64 {
        (self.table.len() - 1) as f64 * self.step
    }

    /// `f'(η)` by cubic Hermite interpolation on `(f', f'')`; 1 beyond the
    /// table and 0 at or below the wall.
    pub fn velocity(&self, eta: f64) -> f64 {
        if eta <= 0.0 {
            return 0.0;
        }
        if eta >= self.eta_max() {
            return 1.0;
        }
        let x = eta / self.step;
        let k = (x.floor() as usize).min(self.table.len() - 2);
        let t = x - k as f64;
        let (a, b) = (self.table[k], self.table[k + 1]);
        let h = self.step;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * a[1]
            + (t3 - 2.0 * t2 + t) * h * a[2]
            + (-2.0 * t3 + 3.0 * t2) * b[1]
            + (t3 - t2) * h * b[2]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlasiusSpec {
    pub u_inf: f64,
    pub nu: f64,
    pub x_range: [f64; 2],
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
    pub n_train: usize,
    pub seed: u64,
    pub eta_max: f64,
    pub step: f64,
}

impl Default for BlasiusSpec {
    fn default() -> Self {
        Self {
            u_inf: 0.01,
            nu: 1e-6,
            x_range: [0.1, 1.0],
            y_max: 0.08,
            nx: 100,
            ny: 100,
            n_train: 100,
            seed: 0,
            eta_max: 10.0,
            step: 1e-3,
        }
    }
}

/// Velocity field on an `nx × ny` grid and a random training subset.
#[derive(Clone, Debug)]
pub struct BlasiusField {
    pub profile: BlasiusProfile,
    pub field: Dataset,
    pub train_rows: Vec<usize>,
}

impl BlasiusField {
    pub fn training(&self) -> Dataset {
        self.field.select_rows(&self.train_rows)
    }
}

/// Similarity variable `y·√(U/(ν x))`.
pub fn blasius_eta(x: f64, y: f64, u_inf: f64, nu: f64) -> f64 {
    y * (u_inf / (nu * x)).sqrt()
}

pub fn gen_blasius(spec: &BlasiusSpec) -> Result<BlasiusField> {
    if !(spec.u_inf > 0.0) || !(spec.nu > 0.0) {
        return Err(Error::Config("U_inf and nu must be > 0".into()));
    }
    if !(spec.x_range[0] > 0.0 && spec.x_range[0] < spec.x_range[1]) || !(spec.y_max > 0.0) {
        return Err(Error::Config("need 0 < x_min < x_max and y_max > 0".into()));
    }
    if spec.nx < 2 || spec.ny < 1 || spec.n_train == 0 {
        return Err(Error::Config("grid and training sizes must be positive".into()));
    }
    let profile = BlasiusProfile::solve(spec.eta_max, spec.step)?;
    let mut rows = Vec::with_capacity(spec.nx * spec.ny);
    for i in 0..spec.nx {
        let x = spec.x_range[0] + (spec.x_range[1] - spec.x_range[0]) * i as f64 / (spec.nx - 1) as f64;
        for j in 1..=spec.ny {
            let y = spec.y_max * j as f64 / spec.ny as f64;
            let u = profile.velocity(blasius_eta(x, y, spec.u_inf, spec.nu));
            rows.push(vec![x, y, spec.u_inf, spec.nu, u]);
        }
    }
    let field = Dataset::from_rows(Registry::blasius(), &rows)?;
    let m = field.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train_rows = rand::seq::index::sample(&mut rng, m, spec.n_train.min(m)).into_vec();
    train_rows.sort_unstable();
    Ok(BlasiusField {
        profile,
        field,
        train_rows,
    })
}

// ---------------------------------------------------------------------------
// Landau surrogate for convection onset

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandauSpec {
    pub rayleigh: Vec<f64>,
    pub critical_rayleigh: f64,
    pub mu: f64,
    pub prandtl: f64,
    pub gravity: f64,
    pub kappa: [f64; 2],
    pub delta_t: [f64; 2],
    pub alpha: [f64; 2],
    pub q0: f64,
    /// Run length in e-folding times of the linear growth or decay.
    pub span: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for LandauSpec {
    fn default() -> Self {
        Self {
            rayleigh: vec![2000.0, 2600.0, 3200.0, 3800.0, 4400.0],
            critical_rayleigh: 1700.0,
            mu: 1.0,
            prandtl: 0.7,
            gravity: 9.8,
            kappa: [0.5, 0.7],
            delta_t: [50.0, 80.0],
            alpha: [1e-4, 5e-4],
            q0: 0.01,
            span: 12.0,
            samples: 600,
            seed: 0,
        }
    }
}

pub const LANDAU_PARAMETERS: [&str; 6] = ["Lz", "g", "alpha", "dT", "nu", "kappa"];

/// `g α ΔT L_z³ / (ν κ)`.
pub fn rayleigh_number(lz: f64, g: f64, alpha: f64, dt: f64, nu: f64, kappa: f64) -> f64 {
    g * alpha * dt * lz.powi(3) / (nu * kappa)
}

/// Fixed-point amplitude `√((Ra/Ra_c − 1)/μ)`, or 0 below onset.
pub fn landau_amplitude(ra: f64, ra_c: f64, mu: f64) -> f64 {
    ((ra / ra_c - 1.0) / mu).max(0.0).sqrt()
}

/// Integrates `Ra dq/dτ = (Ra/Ra_c − 1) q − μ q³` and dimensionalises each
/// run with `t = τ · L_z²/κ`.
pub fn gen_landau(spec: &LandauSpec) -> Result<Vec<RunRecord>> {
    if !(spec.critical_rayleigh > 0.0) || !(spec.mu > 0.0) || !(spec.prandtl > 0.0) || !(spec.gravity > 0.0) {
        return Err(Error::Config("Ra_c, mu, Pr and g must be > 0".into()));
    }
    if spec.samples < 5 || !(spec.span > 0.0) {
        return Err(Error::Config("need samples >= 5 and span > 0".into()));
    }
    for (name, [lo, hi]) in [("kappa", spec.kappa), ("dT", spec.delta_t), ("alpha", spec.alpha)] {
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::Config(format!("range for `{name}` must satisfy 0 < lower < upper")));
        }
    }
    spec.rayleigh
        .par_iter()
        .enumerate()
        .map(|(i, &ra)| {
            if !(ra > 0.0) {
                return Err(Error::Config(format!("Rayleigh number must be > 0, got {ra}")));
            }
            let mut rng = run_rng(spec.seed, i);
            let kappa = rng.random_range(spec.kappa[0]..spec.kappa[1]);
            let dt_temp = rng.random_range(spec.delta_t[0]..spec.delta_t[1]);
            let alpha = rng.random_range(spec.alpha[0]..spec.alpha[1]);
            let nu = spec.prandtl * kappa;
            let lz3 = ra * nu * kappa / (spec.gravity * alpha * dt_temp);
            if !(lz3 > 0.0) || !lz3.is_finite() {
                return Err(Error::Config(format!("run {} gives non-positive Lz^3", i + 1)));
            }
            let lz = lz3.cbrt();
            let growth = (ra / spec.critical_rayleigh - 1.0).abs().max(1e-3) / ra;
            let tau_end = spec.span / growth;
            let dtau = tau_end / (spec.samples - 1) as f64;
            let (rc, mu) = (spec.critical_rayleigh, spec.mu);
            let rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
                dy[0] = ((ra / rc - 1.0) * y[0] - mu * y[0].powi(3)) / ra;
            };
            let traj = rk4_converged(&rhs, &[spec.q0], 0.0, dtau, spec.samples)?;
            let t_unit = lz * lz / kappa;
            let record = RunRecord {
                id: i + 1,
                parameters: LANDAU_PARAMETERS.iter().map(|s| s.to_string()).collect(),
                values: vec![lz, spec.gravity, alpha, dt_temp, nu, kappa],
                time_name: "t".into(),
                time: (0..spec.samples).map(|k| k as f64 * dtau * t_unit).collect(),
                state_names: vec!["q".into()],
                states: vec![traj.iter().map(|s| s[0]).collect()],
                meta: RunMeta {
                    generator: "landau".into(),
                    seed: spec.seed,
                    truth: BTreeMap::from([
                        ("Ra".into(), ra),
                        ("Ra_c".into(), spec.critical_rayleigh),
                        ("mu".into(), spec.mu),
                    ]),
                },
            };
            record.validate()?;
            Ok(record)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Run directories

/// File name of run `id`: `run_0001.csv`, ...
pub fn run_file_name(id: usize) -> String {
    format!("run_{id:04}.csv")
}

/// Contents of a run directory: `run_XXXX.csv` per run, `params.csv` and
/// `units.toml`, as `(file name, bytes)`.
pub fn run_files(runs: &[RunRecord], registry: &Registry) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::with_capacity(runs.len() + 2);
    for r in runs {
        let mut header = vec![r.time_name.clone()];
        header.extend(r.state_names.iter().cloned());
        let mut cols = vec![r.time.clone()];
        cols.extend(r.states.iter().cloned());
        let mut buf = Vec::new();
        write_table(&mut buf, &header, &cols)?;
        out.push((run_file_name(r.id), buf));
    }
    let mut buf = Vec::new();
    write_params(&mut buf, runs)?;
    out.push(("params.csv".into(), buf));
    out.push(("units.toml".into(), registry.to_toml_string().into_bytes()));
    Ok(out)
}

/// Writes [`run_files`] into `dir`.
pub fn write_runs(dir: &Path, runs: &[RunRecord], registry: &Registry) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in run_files(runs, registry)? {
        fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn write_params<W: Write>(w: W, runs: &[RunRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let Some(first) = runs.first() else {
        out.write_record(["run"])?;
        out.flush()?;
        return Ok(());
    };
    let mut header = vec!["run".to_string()];
    header.extend(first.parameters.iter().cloned());
    out.write_record(&header)?;
    for r in runs {
        let mut rec = vec![r.id.to_string()];
        rec.extend(r.values.iter().map(f64::to_string));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Summary of an ingested table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IngestReport {
    pub rows: usize,
    pub columns: Vec<String>,
    /// Whether each column is strictly positive.
    pub positive: Vec<bool>,
}

pub fn describe(data: &Dataset) -> IngestReport {
    IngestReport {
        rows: data.nrows(),
        columns: data.names(),
        positive: data.columns().iter().map(|c| c.iter().all(|&v| v > 0.0)).collect(),
    }
}

/// Reads a single CSV table checked against `registry`.
pub fn ingest_table(path: &Path, registry: &Registry) -> Result<(Dataset, IngestReport)> {
    let file = fs::File::open(path)?;
    let data = Dataset::read_csv(registry, file)?;
    let report = describe(&data);
    Ok((data, report))
}

/// Reads a run directory written by [`write_runs`] or produced externally
/// in the same layout.
pub fn ingest_runs(dir: &Path, registry: &Registry) -> Result<Vec<RunRecord>> {
    let params_path = dir.join("params.csv");
    let mut rdr = csv::Reader::from_path(&params_path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.first().map(String::as_str) != Some("run") {
        return Err(Error::Data("params.csv must start with a `run` column".into()));
    }
    let parameters: Vec<String> = header[1..].to_vec();
    for p in &parameters {
        let decl = registry.get(p)?;
        if decl.role != Role::Parameter {
            return Err(Error::Data(format!("`{p}` in params.csv is not declared as a parameter")));
        }
    }
    let time_names = registry.names_with_role(Role::IndependentVariable);
    let mut runs = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Data(format!("params.csv row {} is ragged", line + 1)));
        }
        let id: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("params.csv row {}: bad run id", line + 1)))?;
        let values = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("params.csv row {}: `{f}` is not a number", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let path = dir.join(run_file_name(id));
        let mut rr = csv::Reader::from_path(&path)?;
        let cols: Vec<String> = rr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let time_name = cols
            .first()
            .cloned()
            .ok_or_else(|| Error::Data(format!("{} has no header", path.display())))?;
        if !time_names.contains(&time_name) {
            return Err(Error::Data(format!(
                "{}: first column `{time_name}` is not an independent variable",
                path.display()
            )));
        }
        for c in &cols[1..] {
            registry.get(c)?;
        }
        let mut series = vec![Vec::new(); cols.len()];
        for (k, row) in rr.records().enumerate() {
            let row = row?;
            if row.len() != cols.len() {
                return Err(Error::Data(format!("{} row {} is ragged", path.display(), k + 1)));
            }
            for (c, f) in row.iter().enumerate() {
                series[c].push(f.trim().parse::<f64>().map_err(|_| {
                    Error::Data(format!("{} row {}: `{f}` is not a number", path.display(), k + 1))
                })?);
            }
        }
        let time = series.remove(0);
        let run = RunRecord {
            id,
            parameters: parameters.clone(),
            values,
            time_name,
            time,
            state_names: cols[1..].to_vec(),
            states: series,
            meta: RunMeta {
                generator: "ingest".into(),
                seed: 0,
                truth: BTreeMap::new(),
            },
        };
        run.validate()?;
        runs.push(run);
    }
    if runs.is_empty() {
        return Err(Error::Data(format!("{} lists no runs", params_path.display())));
    }
    Ok(runs)
}

/// Spec file for `simulate`, one table per system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Pendulum(PendulumSpec),
    Hoop(HoopSpec),
    Blasius(BlasiusSpec),
    Landau(LandauSpec),
}

impl SystemSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serialises")
    }
}
