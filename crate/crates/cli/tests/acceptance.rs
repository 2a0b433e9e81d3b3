//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p pi-forge-cli --test acceptance`; set `ACCEPTANCE_ONLY=2,4`
//! to run a subset.

use std::cell::OnceCell;
use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use pi_forge::buckinet::{
    gradients, grid_search, loss, BuckiNetModel, GridConfig, LossSpec, TrainConfig,
    TrainingSet,
};
use pi_forge::datagen::{
    gen_blasius, gen_hoop, gen_landau, gen_pendulum, hoop_trajectory, landau_amplitude, rk4_step, BlasiusProfile,
    BlasiusSpec, HoopSpec, LandauSpec, PendulumSpec,
};
use pi_forge::dsindy::{
    evaluate_candidate, simulate_fit, stlsq, sweep, LibraryConfig, StlsqConfig, SweepConfig, SweepResult,
};
use pi_forge::nullspace::{enumerate_candidates, rational_nullspace};
use pi_forge::optfit::{optfit_discover, GroupModel, OptConfig};
use pi_forge::pitransform::{normalize_exponents, to_pi};
use pi_forge::regress::{pca_reduce, spearman};
use pi_forge::units::{Registry, UnitsMatrix};
use pi_forge::Rational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot pass as specified; see the project notes.
/// 1: the Blasius inputs (x, y, U_inf, nu) have units rank 2, so d - rank is
/// 2 (eta and Re_x), not 1.
const KNOWN_RED: &[u32] = &[1];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("({})", parts.join(", "))
}

fn within(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

// 1 ------------------------------------------------------------------------

fn pi_counts() -> Outcome {
    let t0 = Instant::now();
    let count = |d: UnitsMatrix| rational_nullspace(&d).pi_count();
    let pendulum = count(Registry::pendulum().units_matrix().unwrap());
    let hoop = count(Registry::hoop().units_matrix().unwrap().parameters());
    let blasius = count(Registry::blasius().units_matrix().unwrap().d_p());
    let elapsed = t0.elapsed().as_secs_f64();
    check(
        pendulum == 2 && hoop == 2 && blasius == 1 && elapsed < 1.0,
        format!(
            "pendulum {pendulum} (want 2), hoop inputs {hoop} (want 2), Blasius x,y,U_inf,nu {blasius} (want 1), {elapsed:.4} s"
        ),
    )
}

// 2 ------------------------------------------------------------------------

fn pendulum_buckinet() -> Outcome {
    let data = gen_pendulum(&PendulumSpec::default()).map_err(|e| e.to_string())?;
    let d_p = Registry::pendulum().units_matrix().unwrap().d_p();
    let set = TrainingSet::from_dataset(&data, &d_p).map_err(|e| e.to_string())?;
    let base = TrainConfig {
        null_weight: 0.0,
        epochs: 300,
        n_groups: Some(1),
        ..TrainConfig::default()
    };
    let grid = GridConfig {
        null_weights: vec![0.0],
        l1_weights: vec![1e-4, 1e-3],
        seeds: vec![0, 1],
        ..GridConfig::default()
    };
    let out = grid_search(&set, &d_p, &base, &grid).map_err(|e| e.to_string())?;
    let group = &out.model.groups()[0];
    let anchored = normalize_exponents(group, "g").map_err(|e| e.to_string())?;
    let want = [1.0, 0.0, -1.0, 2.0];
    check(
        within(&anchored.values, &want, 0.05),
        format!(
            "g-anchored (g, m, L, t) = {} (want (1, 0, -1, 2) +/- 0.05), best of {} trials",
            fmt_vec(&anchored.values),
            out.trials.len()
        ),
    )
}

// 3 ------------------------------------------------------------------------

fn hoop_buckinet() -> Outcome {
    let runs = gen_hoop(&HoopSpec::buckinet()).map_err(|e| e.to_string())?;
    let samples: Vec<Vec<f64>> = runs.iter().map(|r| r.states[0].clone()).collect();
    let (pca, coeffs) = pca_reduce(&samples, 3).map_err(|e| e.to_string())?;
    let d_p = Registry::hoop().units_matrix().unwrap().parameters();
    let p: Vec<Vec<f64>> = runs.iter().map(|r| r.values.clone()).collect();
    let set = TrainingSet::from_arrays(d_p.names().to_vec(), &p, coeffs).map_err(|e| e.to_string())?;
    let base = TrainConfig {
        n_groups: Some(2),
        epochs: 2000,
        ..TrainConfig::default()
    };
    // Any basis of the group plane fits equally well, so the grid leans on
    // the stronger L1 weight to separate single groups.
    let grid = GridConfig {
        null_weights: vec![1.0, 10.0],
        l1_weights: vec![1e-3],
        ..GridConfig::default()
    };
    let out = grid_search(&set, &d_p, &base, &grid).map_err(|e| e.to_string())?;
    // (m, R, b, g, omega)
    let gamma = [0.0, 1.0, 0.0, -1.0, 2.0];
    let epsilon = [2.0, 1.0, -2.0, 1.0, 0.0];
    let anchored: Vec<Vec<f64>> = out
        .model
        .groups()
        .iter()
        .map(|g| normalize_exponents(g, "R").map(|e| e.values).unwrap_or_default())
        .collect();
    let matches = |want: &[f64]| anchored.iter().position(|a| within(a, want, 0.05));
    let (gi, ei) = (matches(&gamma), matches(&epsilon));
    check(
        gi.is_some() && ei.is_some() && gi != ei,
        format!(
            "R-anchored columns {} and {} (want gamma (0, 1, 0, -1, 2), epsilon (2, 1, -2, 1, 0) +/- 0.05), PCA captures {:.4}, best trial {} of {}",
            fmt_vec(&anchored[0]),
            fmt_vec(anchored.get(1).map_or(&[][..], Vec::as_slice)),
            pca.captured_variance(),
            out.best,
            out.trials.len()
        ),
    )
}

// 4 and 5 --------------------------------------------------------------------

/// `1/epsilon` and `gamma/epsilon` over (m, R, b, g, omega).
const INV_EPSILON: [i64; 5] = [-2, -1, 2, -1, 0];
const GAMMA_OVER_EPSILON: [i64; 5] = [-2, 0, 2, -2, 2];

/// Sweeps at the cubic (0.1) and seventh-order (1e-3) thresholds.
struct HoopSweep {
    d: UnitsMatrix,
    cubic: SweepResult,
    seventh: SweepResult,
}

fn hoop_sweep_setup() -> Result<HoopSweep, String> {
    let runs = gen_hoop(&HoopSpec::dsindy()).map_err(|e| e.to_string())?;
    let reg = Registry::hoop();
    let d = reg.units_matrix().unwrap().parameters();
    let basis = rational_nullspace(&d);
    let candidates = enumerate_candidates(&basis, 2, Some(&reg.time_dimension().unwrap())).map_err(|e| e.to_string())?;
    let cubic = sweep(&runs, &candidates, &hoop_cfg(0.1)).map_err(|e| e.to_string())?;
    let seventh = sweep(&runs, &candidates, &hoop_cfg(1e-3)).map_err(|e| e.to_string())?;
    Ok(HoopSweep { d, cubic, seventh })
}

fn hoop_cfg(threshold: f64) -> SweepConfig {
    SweepConfig {
        stlsq: StlsqConfig {
            threshold,
            ..StlsqConfig::default()
        },
        decimate: 4,
        pick_k: 2,
        ..SweepConfig::default()
    }
}

fn rank(vectors: &[Vec<f64>]) -> usize {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for b in &basis {
            let dot: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in w.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            basis.push(w.iter().map(|x| x / n).collect());
        }
    }
    basis.len()
}

fn active(fit: &pi_forge::dsindy::SindyFit) -> BTreeSet<String> {
    fit.labels
        .iter()
        .zip(&fit.support)
        .filter(|(_, &on)| on)
        .map(|(l, _)| l.clone())
        .collect()
}

fn hoop_dsindy(hs: &HoopSweep) -> Outcome {
    let w = hs.cubic.winner();
    let as_f = |v: &[i64]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let mut all: Vec<Vec<f64>> = w.pi.iter().map(|v| as_f(v)).collect();
    let span_ok = w.pi.len() == 2
        && rank(&all) == 2
        && {
            all.push(as_f(&INV_EPSILON));
            all.push(as_f(&GAMMA_OVER_EPSILON));
            rank(&all) == 2
        };
    // timescale b/(m g) up to a dimensionless factor
    let diff: Vec<Rational> = w
        .timescale
        .iter()
        .zip([-1i64, 0, 1, -1, 0])
        .map(|(a, b)| Rational::from_integer(a - b))
        .collect();
    let time_ok = hs.d.mul_vec(&diff).unwrap().iter().all(|v| *v == Rational::from_integer(0));

    let idx = |line: &[i64; 5]| w.pi.iter().position(|p| p.as_slice() == line).map(|i| i + 1);
    let (Some(p1), Some(p2)) = (idx(&INV_EPSILON), idx(&GAMMA_OVER_EPSILON)) else {
        return Err(format!("winner {:?} is not (1/epsilon, gamma/epsilon) literally", w.pi));
    };
    // reference order: x' pi1, x pi1, x pi2, x^3 pi2 with pi1 = 1/epsilon
    let cubic_labels = [
        format!("pi_{p1}*x'"),
        format!("pi_{p1}*x"),
        format!("pi_{p2}*x"),
        format!("pi_{p2}*x^3"),
    ];
    let cubic_want = [-0.96, -0.94, 0.86, -0.34];
    let cubic_support: BTreeSet<String> = cubic_labels.iter().cloned().collect();
    let got = active(&w.fit);
    let coefs: Vec<f64> = cubic_labels.iter().map(|l| w.fit.coefficient(l).unwrap_or(0.0)).collect();
    let coef_ok = coefs
        .iter()
        .zip(cubic_want)
        .all(|(c, t): (&f64, f64)| ((c - t) / t).abs() <= 0.2);

    let wf = hs.seventh.winner();
    let same_combo = wf.pi == w.pi && wf.timescale == w.timescale;
    let mut seventh: BTreeSet<String> = BTreeSet::new();
    for t in ["x'", "x", "x^3", "x^5"] {
        seventh.insert(format!("pi_{p1}*{t}"));
    }
    for t in ["x", "x^3", "x^5", "x^7"] {
        seventh.insert(format!("pi_{p2}*{t}"));
    }
    let seventh_ok = same_combo && active(&wf.fit) == seventh;
    check(
        span_ok && time_ok && got == cubic_support && coef_ok && seventh_ok,
        format!(
            "winner pi {:?}, T {:?}; threshold 0.1: {} (coefficients {} vs (-0.96, -0.94, 0.86, -0.34) +/- 20%); threshold 1e-3 support {} seventh-order pattern",
            w.pi,
            w.timescale,
            w.fit.equation("x''"),
            fmt_vec(&coefs),
            if seventh_ok { "matches" } else { "does not match" },
        ),
    )
}

fn hoop_extrapolation(hs: &HoopSweep) -> Outcome {
    let lib = hoop_cfg(0.1).library;
    // (m, R, b, g, omega) outside the training box m, R in [0.5, 1.5], b in [1, 3], omega in [1, 4]
    let cases: [[f64; 5]; 3] = [
        [2.0, 0.6, 3.5, 9.8, 4.5],
        [2.0, 0.4, 3.5, 9.8, 4.5],
        [0.4, 1.7, 0.8, 9.8, 3.0],
    ];
    let (x0, dt, n) = (0.8, 1e-3, 10001);
    let deviation = |res: &SweepResult, p: [f64; 5]| -> Result<f64, String> {
        let truth = hoop_trajectory(p, x0, dt, n).map_err(|e| e.to_string())?;
        let w = res.winner();
        let (pi, scale) = evaluate_candidate(&p, &w.pi, &w.timescale);
        let model = simulate_fit(&w.fit, &lib, &pi, &[x0, 0.0], (n - 1) as f64 * dt / scale, dt / scale)
            .map_err(|e| e.to_string())?;
        if model.blew_up || model.states.len() != n {
            return Ok(f64::INFINITY);
        }
        let amp = truth.iter().fold(0.0f64, |m, s| m.max(s[0].abs()));
        let err = truth
            .iter()
            .zip(&model.states)
            .fold(0.0f64, |m, (a, b)| m.max((a[0] - b[0]).abs()));
        Ok(err / amp)
    };
    let mut dev_c = Vec::new();
    let mut dev_s = Vec::new();
    for p in cases {
        dev_c.push(deviation(&hs.cubic, p)?);
        dev_s.push(deviation(&hs.seventh, p)?);
    }
    let worst = |v: &[f64]| v.iter().copied().fold(0.0f64, f64::max);
    check(
        worst(&dev_s) <= 0.10 && worst(&dev_c) <= 0.30,
        format!(
            "max |x_model - x_true| / max |x_true| on 3 out-of-range parameter sets: seventh-order {} (<= 0.10), cubic {} (<= 0.30)",
            fmt_vec(&dev_s),
            fmt_vec(&dev_c)
        ),
    )
}

// 6 and 7 --------------------------------------------------------------------

fn blasius() -> (Outcome, Outcome) {
    let spec = BlasiusSpec::default();
    let field = match gen_blasius(&spec) {
        Ok(f) => f,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let reg = Registry::blasius();
    let basis = rational_nullspace(&reg.units_matrix().unwrap().d_p());
    let cfg = OptConfig {
        anchor: Some("y".into()),
        ..OptConfig::default()
    };
    let train = field.training();
    let res = match optfit_discover(&train, &basis, 1, &cfg) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let anchored = res.anchored[0].clone().expect("y appears in the group");
    let got = [anchored.get("x").unwrap(), anchored.get("U_inf").unwrap(), anchored.get("nu").unwrap()];
    let held: Vec<usize> = (0..field.field.nrows()).filter(|r| !field.train_rows.contains(r)).collect();
    let held_data = field.field.select_rows(&held);
    let pi = to_pi(&held_data, std::slice::from_ref(&anchored)).unwrap().columns[0].clone();
    let x = held_data.column("x").unwrap();
    let y = held_data.column("y").unwrap();
    let eta: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(x, y)| pi_forge::datagen::blasius_eta(*x, *y, spec.u_inf, spec.nu))
        .collect();
    let rho = spearman(&pi, &eta);
    let c6 = check(
        within(&got, &[-0.5, 0.5, -0.5], 0.1) && rho.abs() >= 0.999,
        format!(
            "y-anchored (x, U_inf, nu) = {} (want (-0.5, 0.5, -0.5) +/- 0.1), Spearman vs eta on {} held-out points {rho:.7}, {} starts",
            fmt_vec(&got),
            held.len(),
            res.starts.len()
        ),
    );
    let c7 = GroupModel::fit(&train, &res.exponents, &res.train_rows, &cfg)
        .and_then(|m| m.predict(&field.field))
        .map_err(|e| e.to_string())
        .and_then(|pred| {
            let u = field.field.column("u_ratio").unwrap();
            let worst = pred[0].iter().zip(u).fold(0.0f64, |m, (p, t)| m.max((p - t).abs()));
            check(
                worst <= 0.05,
                format!("max |psi - u/U_inf| over {} field points {worst:.4} (<= 0.05)", u.len()),
            )
        });
    (c6, c7)
}

// 8 ------------------------------------------------------------------------

fn landau() -> Outcome {
    let reg = Registry::rayleigh_benard();
    let d = reg.units_matrix().unwrap().parameters();
    let cands = enumerate_candidates(&rational_nullspace(&d), 3, Some(&reg.time_dimension().unwrap()))
        .map_err(|e| e.to_string())?;
    let spec = LandauSpec::default();
    let runs = gen_landau(&spec).map_err(|e| e.to_string())?;
    let cfg = SweepConfig {
        library: LibraryConfig {
            degree: 3,
            order: 1,
            param_degree: 1,
            constant: true,
        },
        stlsq: StlsqConfig {
            threshold: 1e-5,
            ..StlsqConfig::default()
        },
        pick_k: 1,
        ..SweepConfig::default()
    };
    let res = sweep(&runs, &cands, &cfg).map_err(|e| e.to_string())?;
    let w = res.winner();
    // Ra^-1 over (Lz, g, alpha, dT, nu, kappa); Pr = nu/kappa is constant in the data
    let shifted: Vec<i64> = w.pi[0].iter().zip([3, 1, 1, 1, -1, -1]).map(|(a, b)| a + b).collect();
    let pr_power = shifted[..4].iter().all(|&v| v == 0) && shifted[4] == -shifted[5];
    let support: BTreeSet<String> = active(&w.fit);
    let want: BTreeSet<String> = ["q", "pi_1*q", "pi_1*q^3"].iter().map(|s| s.to_string()).collect();
    if !pr_power || support != want {
        return Err(format!(
            "winner pi {:?} (want Ra^-1 Pr^k), support {:?} (want {:?})",
            w.pi, support, want
        ));
    }
    let a = w.fit.coefficient("q").unwrap();
    let b = w.fit.coefficient("pi_1*q").unwrap();
    let c = w.fit.coefficient("pi_1*q^3").unwrap();
    let k = {
        let r = &runs[0];
        let (pi, _) = evaluate_candidate(&r.values, &w.pi, &w.timescale);
        pi[0] * r.meta.truth["Ra"]
    };
    let ra_c = -k * b / a;
    let ra_c_err = (ra_c - spec.critical_rayleigh).abs() / spec.critical_rayleigh;

    let withheld = LandauSpec {
        rayleigh: vec![2300.0, 3500.0, 4100.0],
        seed: 7,
        ..LandauSpec::default()
    };
    let mut errs = Vec::new();
    for r in gen_landau(&withheld).map_err(|e| e.to_string())? {
        let ra = r.meta.truth["Ra"];
        let (pi, _) = evaluate_candidate(&r.values, &w.pi, &w.timescale);
        let q2 = -(a + b * pi[0]) / (c * pi[0]);
        let q = q2.max(0.0).sqrt();
        let truth = landau_amplitude(ra, spec.critical_rayleigh, spec.mu);
        errs.push((q - truth).abs() / truth);
    }
    let worst = errs.iter().copied().fold(0.0f64, f64::max);
    check(
        ra_c_err <= 0.05 && worst <= 0.05,
        format!(
            "support {{q, pi q, pi q^3}}, Ra_c {ra_c:.1} (true {}, error {:.4}), withheld amplitude errors {} (<= 0.05)",
            spec.critical_rayleigh,
            ra_c_err,
            fmt_vec(&errs)
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn gradient_check() -> Result<f64, String> {
    let inputs: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let d_p = vec![vec![1.0, 1.0, 1.0]];
    let mut worst: f64 = 0.0;
    for seed in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = BuckiNetModel::new(inputs.clone(), 2, &[4, 3], 2, &mut rng);
        let p: Vec<Vec<f64>> = (0..7).map(|_| (0..3).map(|_| rng.random_range(0.5..2.0)).collect()).collect();
        let y: Vec<Vec<f64>> = p.iter().map(|r| vec![(r[0] * r[2] / (r[1] * r[1])).ln(), r[0] / r[1]]).collect();
        let set = TrainingSet::from_arrays(inputs.clone(), &p, y).map_err(|e| e.to_string())?;
        let spec = LossSpec {
            d_p: &d_p,
            null_weight: 0.7,
            l1: 0.01,
            l2: 0.02,
        };
        let batch: Vec<usize> = (0..set.len()).collect();
        let (grad, _) = gradients(&model, &set, &batch, &spec);
        let base = model.flatten();
        let h = 1e-6;
        for k in 0..base.len() {
            if k < model.phi.len() && base[k].abs() < 1e-4 {
                continue;
            }
            let eval = |delta: f64| {
                let mut v = base.clone();
                v[k] += delta;
                let mut m = model.clone();
                m.assign(&v);
                loss(&m, &set, &spec).total()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Least squares on the columns `cols` via the normal equations.
fn lstsq(theta: &[Vec<f64>], y: &[f64], cols: &[usize]) -> Vec<f64> {
    let k = cols.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, row) in theta.iter().enumerate() {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += row[cols[i]] * row[cols[j]];
            }
            a[i][k] += row[cols[i]] * y[r];
        }
    }
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        for r in 0..k {
            if r != c {
                let f = a[r][c] / a[c][c];
                for j in c..=k {
                    a[r][j] -= f * a[c][j];
                }
            }
        }
    }
    (0..k).map(|i| a[i][k] / a[i][i]).collect()
}

/// Share of random systems where STLSQ returns a support whose least-squares
/// refit clears the threshold, with matching coefficients.
fn stlsq_oracle() -> (usize, usize) {
    let mut agree = 0;
    let total = 40;
    for seed in 0..total as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let cols = rng.random_range(2..=6);
        let theta: Vec<Vec<f64>> = (0..40).map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let truth: Vec<f64> = (0..cols)
            .map(|_| if rng.random_bool(0.5) { rng.random_range(0.5..2.0) } else { 0.0 })
            .collect();
        let y: Vec<f64> = theta
            .iter()
            .map(|r| r.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + 0.05 * rng.random_range(-1.0..1.0))
            .collect();
        let threshold = 0.2;
        let fit = stlsq(&theta, &y, &StlsqConfig { threshold, ..StlsqConfig::default() }).unwrap();
        let support: Vec<usize> = (0..cols).filter(|&j| fit.support[j]).collect();
        let fixed_points: Vec<(Vec<usize>, Vec<f64>)> = (1u32..(1 << cols))
            .filter_map(|mask| {
                let s: Vec<usize> = (0..cols).filter(|j| mask & (1 << j) != 0).collect();
                let c = lstsq(&theta, &y, &s);
                c.iter().all(|v| v.abs() >= threshold).then_some((s, c))
            })
            .collect();
        let ok = support.is_empty()
            || fixed_points.iter().any(|(s, c)| {
                *s == support
                    && s.iter()
                        .zip(c)
                        .all(|(&j, v)| (fit.coefficients[j] - v).abs() <= 1e-9 * v.abs().max(1.0))
            });
        agree += ok as usize;
    }
    (agree, total)
}

fn rk4_order() -> f64 {
    let f = |_t: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = -y[0] - 0.1 * y[1];
    };
    let err = |h: f64| {
        let n = (2.0 / h).round() as usize;
        let mut y = vec![1.0, 0.0];
        for k in 0..n {
            rk4_step(&f, k as f64 * h, &mut y, h);
        }
        let wd = (1.0f64 - 0.0025).sqrt();
        let t = 2.0f64;
        let exact = (-0.05 * t).exp() * ((wd * t).cos() + 0.05 / wd * (wd * t).sin());
        (y[0] - exact).abs()
    };
    (err(0.1) / err(0.05)).log2()
}

/// Independent shooting: fixed-step RK4 on (f, f', f'') to eta = 12 with
/// bisection on f''(0) until f'(eta_max) = 1.
fn blasius_oracle() -> f64 {
    let edge = |s: f64| {
        let h = 5e-4;
        let mut y = [0.0f64, 0.0, s];
        let rhs = |y: [f64; 3]| [y[1], y[2], -0.5 * y[0] * y[2]];
        for _ in 0..(12.0 / h) as usize {
            let k1 = rhs(y);
            let k2 = rhs([0, 1, 2].map(|i| y[i] + 0.5 * h * k1[i]));
            let k3 = rhs([0, 1, 2].map(|i| y[i] + 0.5 * h * k2[i]));
            let k4 = rhs([0, 1, 2].map(|i| y[i] + h * k3[i]));
            y = [0, 1, 2].map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        }
        y[1] - 1.0
    };
    let (mut lo, mut hi) = (0.2, 0.5);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if edge(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn exact_homogeneity() -> Result<usize, String> {
    let mut checked = 0;
    let zero = Rational::from_integer(0);
    let cases: Vec<(Registry, UnitsMatrix, i64)> = vec![
        (Registry::pendulum(), Registry::pendulum().units_matrix().unwrap().d_p(), 2),
        (Registry::hoop(), Registry::hoop().units_matrix().unwrap().parameters(), 2),
        (Registry::blasius(), Registry::blasius().units_matrix().unwrap().d_p(), 2),
        (Registry::rayleigh_benard(), Registry::rayleigh_benard().units_matrix().unwrap().parameters(), 3),
    ];
    for (reg, d, bound) in cases {
        let basis = rational_nullspace(&d);
        for v in basis.basis() {
            if d.mul_vec(v).map_err(|e| e.to_string())?.iter().any(|x| *x != zero) {
                return Err(format!("basis vector {v:?} is not homogeneous"));
            }
            checked += 1;
        }
        let time = reg.time_dimension().ok();
        let set = enumerate_candidates(&basis, bound, time.as_ref()).map_err(|e| e.to_string())?;
        for member in set.pi_members() {
            let r: Vec<Rational> = member.exponents.iter().map(|&x| Rational::from_integer(x)).collect();
            if d.mul_vec(&r).map_err(|e| e.to_string())?.iter().any(|x| *x != zero) {
                return Err(format!("candidate {:?} is not homogeneous", member.exponents));
            }
            checked += 1;
        }
        if let Some(t) = time {
            for ts in &set.timescale_candidates {
                let r: Vec<Rational> = ts.iter().map(|&x| Rational::from_integer(x)).collect();
                if d.mul_vec(&r).map_err(|e| e.to_string())? != t.exponents() {
                    return Err(format!("timescale {ts:?} does not have units of time"));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

fn kernel_suite() -> Outcome {
    let grad = gradient_check()?;
    let (agree, total) = stlsq_oracle();
    let order = rk4_order();
    let shear = BlasiusProfile::solve(10.0, 1e-3).map_err(|e| e.to_string())?.wall_shear;
    let oracle = blasius_oracle();
    let homogeneous = exact_homogeneity()?;
    check(
        grad <= 1e-5
            && agree == total
            && order >= 3.5
            && (shear - 0.33206).abs() <= 1e-4
            && (oracle - 0.33206).abs() <= 1e-4
            && (shear - oracle).abs() <= 1e-4,
        format!(
            "gradient rel error {grad:.2e}; STLSQ vs exhaustive supports {agree}/{total}; RK4 order {order:.2}; f''(0) {shear:.6} (oracle {oracle:.6}); {homogeneous} exact rational vectors with D x = 0 or time"
        ),
    )
}

// 10 -----------------------------------------------------------------------

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pi-forge"))
        .args(args)
        .env_remove("PI_FORGE_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

/// Every file under `dir` except the manifest, which holds timestamps.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let p = |s: &str| root.join(s).display().to_string();
    fs::write(root.join("bn.toml"), "[buckinet.train]\nepochs = 40\n").unwrap();
    fs::write(root.join("ds.toml"), "[dsindy]\ndecimate = 4\n").unwrap();
    let mut compared = 0;
    for system in ["pendulum", "hoop", "blasius", "landau"] {
        cli(&["simulate", "--system", system, "--out", &p(system)])?;
    }
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("nullspace", vec!["nullspace".into(), "--units".into(), p("pendulum/units.toml"), "--bound".into(), "2".into()]),
        ("simulate-hoop", vec!["simulate".into(), "--system".into(), "hoop".into()]),
        ("simulate-blasius", vec!["simulate".into(), "--system".into(), "blasius".into()]),
        (
            "optfit",
            [
                "discover", "--engine", "optfit", "--units", &p("blasius/units.toml"), "--data", &p("blasius/train.csv"),
                "--groups", "1", "--anchor", "y", "--export-plot", "--field", &p("blasius/field.csv"),
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        ),
        (
            "buckinet",
            [
                "discover", "--engine", "buckinet", "--units", &p("pendulum/units.toml"), "--data", &p("pendulum/data.csv"),
                "--config", &p("bn.toml"), "--anchor", "g", "--export-plot",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        ),
        (
            "dsindy",
            [
                "discover", "--engine", "dsindy", "--units", &p("hoop/units.toml"), "--runs", &p("hoop"), "--config",
                &p("ds.toml"), "--threshold", "0.1", "--export-plot",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        ),
    ];
    let mut results = Vec::new();
    for (name, args) in &commands {
        let mut snaps = Vec::new();
        for (k, jobs) in ["1", "2"].iter().enumerate() {
            let out = p(&format!("{name}-{k}"));
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            full.extend(["--seed", "11", "--jobs", jobs, "--out", &out]);
            cli(&full)?;
            snaps.push(snapshot(Path::new(&out)));
        }
        if snaps[0] != snaps[1] {
            return Err(format!("{name}: outputs differ between repeated runs"));
        }
        compared += snaps[0].len();
        results.push(name.to_string());
    }
    let mut snaps = Vec::new();
    for k in 0..2 {
        let out = p(&format!("export-{k}"));
        cli(&[
            "export-plot",
            "--result",
            &p("dsindy-0/result.json"),
            "--units",
            &p("hoop/units.toml"),
            "--runs",
            &p("hoop"),
            "--out",
            &out,
        ])?;
        snaps.push(snapshot(Path::new(&out)));
    }
    if snaps[0] != snaps[1] {
        return Err("export-plot: outputs differ between repeated runs".into());
    }
    compared += snaps[0].len();
    results.push("export-plot".into());
    Ok(format!(
        "{} byte-identical across repeats and --jobs 1/2 ({compared} files: {})",
        results.len(),
        results.join(", ")
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().map_or(true, |s| s.contains(&n));
    let mut lines: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut run = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let t0 = Instant::now();
        let outcome = f();
        let secs = t0.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("[{tag}] {n:>2} {name}: {detail} [{secs:.1} s]");
        lines.push((n, name, outcome, secs));
    };

    run(1, "Buckingham Pi counts", &mut pi_counts);
    run(2, "Pendulum BuckiNet", &mut pendulum_buckinet);
    run(3, "Hoop BuckiNet", &mut hoop_buckinet);
    let hs = OnceCell::new();
    let hoop = || hs.get_or_init(hoop_sweep_setup).as_ref().map_err(Clone::clone);
    run(4, "Hoop dsindy", &mut || hoop_dsindy(hoop()?));
    run(5, "Hoop extrapolation", &mut || hoop_extrapolation(hoop()?));
    let bl = OnceCell::new();
    run(6, "Blasius optfit", &mut || bl.get_or_init(blasius).0.clone());
    run(7, "Blasius self-similarity", &mut || bl.get_or_init(blasius).1.clone());
    run(8, "Landau onset", &mut landau);
    run(9, "Numerical kernels", &mut kernel_suite);
    run(10, "CLI determinism", &mut determinism);

    let passed = lines.iter().filter(|l| l.2.is_ok()).count();
    println!("acceptance: {passed}/{} passed", lines.len());
    let unexpected: Vec<u32> = lines
        .iter()
        .filter(|l| l.2.is_err() && !KNOWN_RED.contains(&l.0))
        .map(|l| l.0)
        .collect();
    let known: Vec<u32> = lines
        .iter()
        .filter(|l| l.2.is_err() && KNOWN_RED.contains(&l.0))
        .map(|l| l.0)
        .collect();
    if !known.is_empty() {
        println!("known failures (documented): {known:?}");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
