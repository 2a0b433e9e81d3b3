//! Plot data: tidy `series,run,x,y` tables plus a `plots.json` index.

use std::fmt::Write as _;

use pi_forge::datagen::{ingest_table, RunRecord};
use pi_forge::dsindy::{evaluate_candidate, simulate_fit};
use pi_forge::optfit::GroupModel;
use pi_forge::pitransform::Dataset;
use pi_forge::regress::fd_derivative;
use pi_forge::units::{Registry, Role};
use pi_forge::Error;
use serde::Serialize;

use crate::args::ExportArgs;
use crate::discover::{
    buckinet_set, load_source, BuckiNetPayload, DiscoveryResult, DsindyPayload, OptfitPayload, Payload, Source,
};
use crate::error::CliError;
use crate::output::{digest_inputs, to_json, Staged};
use crate::Ctx;

#[derive(Serialize)]
struct PlotIndexEntry {
    file: String,
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<String>,
}

#[derive(Default)]
struct Tidy {
    text: String,
    series: Vec<String>,
}

impl Tidy {
    fn new() -> Self {
        Self {
            text: "series,run,x,y\n".into(),
            series: Vec::new(),
        }
    }

    fn push(&mut self, series: &str, run: usize, x: f64, y: f64) {
        if !self.series.iter().any(|s| s == series) {
            self.series.push(series.to_string());
        }
        writeln!(self.text, "{series},{run},{x},{y}").expect("write to string");
    }
}

struct Plot {
    file: &'static str,
    title: String,
    x_label: String,
    y_label: String,
    data: Tidy,
}

/// Plot files for a discovery result, named relative to the plot directory.
pub fn plot_files(
    result: &DiscoveryResult,
    reg: &Registry,
    source: &Source,
    field: Option<&Dataset>,
) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let plots = match &result.payload {
        Payload::Dsindy(p) => dsindy_plots(p, source)?,
        Payload::Optfit(p) => vec![optfit_collapse(p, result, source, field)?],
        Payload::Buckinet(p) => vec![buckinet_collapse(p, result, reg, source, field)?],
    };
    let mut files = Vec::new();
    let mut index = Vec::new();
    for p in plots {
        index.push(PlotIndexEntry {
            file: p.file.into(),
            title: p.title,
            x_label: p.x_label,
            y_label: p.y_label,
            series: p.data.series,
        });
        files.push((p.file.to_string(), p.data.text.into_bytes()));
    }
    files.push(("plots.json".into(), to_json(&index)));
    Ok(files)
}

fn runs_of<'a>(source: &'a Source, what: &str) -> Result<&'a [RunRecord], CliError> {
    match source {
        Source::Runs(r) => Ok(r),
        Source::Table(_) => Err(CliError::Usage(format!("{what} needs --runs"))),
    }
}

fn dsindy_plots(p: &DsindyPayload, source: &Source) -> Result<Vec<Plot>, CliError> {
    let runs = runs_of(source, "dsindy plot export")?;
    let mut traj = Tidy::new();
    for run in runs {
        let values: Vec<f64> = p
            .parameters
            .iter()
            .map(|n| {
                run.parameter(n)
                    .ok_or_else(|| Error::Data(format!("run {} lacks parameter `{n}`", run.id)))
            })
            .collect::<Result<_, _>>()?;
        let (pi, scale) = evaluate_candidate(&values, &p.pi, &p.timescale);
        let q = &run.states[0];
        let dtau = run.dt() / scale;
        for (t, v) in run.time.iter().zip(q) {
            traj.push("truth", run.id, (t - run.time[0]) / scale, *v);
        }
        let mut initial = vec![q[0]];
        if p.library.order == 2 {
            initial.push(fd_derivative(q, dtau, 1)?[0]);
        }
        let tau_end = (q.len() - 1) as f64 * dtau;
        let model = simulate_fit(&p.fit, &p.library, &pi, &initial, tau_end, dtau)?;
        if model.blew_up {
            log::warn!("model trajectory for run {} diverged", run.id);
        }
        for (t, s) in model.tau.iter().zip(&model.states) {
            traj.push("model", run.id, *t, s[0]);
        }
    }
    let mut plots = vec![Plot {
        file: "trajectories.csv",
        title: "Observed and identified trajectories".into(),
        x_label: "tau".into(),
        y_label: p.state.clone(),
        data: traj,
    }];
    if p.library.order == 1 && p.pi.len() == 1 {
        plots.push(bifurcation(p, runs)?);
    }
    Ok(plots)
}

/// Fixed points of the identified first-order model against the single
/// parameter group, next to the observed final states.
fn bifurcation(p: &DsindyPayload, runs: &[RunRecord]) -> Result<Plot, CliError> {
    let mut data = Tidy::new();
    let mut pis = Vec::new();
    let mut qmax: f64 = 0.0;
    for run in runs {
        let values: Vec<f64> = p.parameters.iter().filter_map(|n| run.parameter(n)).collect();
        let (pi, _) = evaluate_candidate(&values, &p.pi, &p.timescale);
        let last = *run.states[0].last().expect("validated run");
        data.push("observed", run.id, pi[0], last);
        pis.push(pi[0]);
        qmax = qmax.max(run.states[0].iter().fold(0.0, |m: f64, v| m.max(v.abs())));
    }
    let lo = pis.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(lo.abs() * 0.1).max(f64::MIN_POSITIVE);
    let (lo, hi) = (lo - 0.25 * span, hi + 0.25 * span);
    let qmax = 1.5 * qmax.max(1e-12);
    let rhs = |q: f64, pi: f64| -> f64 {
        p.library
            .row(q, 0.0, &[pi])
            .iter()
            .zip(&p.fit.coefficients)
            .map(|(a, b)| a * b)
            .sum()
    };
    const STEPS: usize = 200;
    const Q_GRID: usize = 2000;
    for k in 0..=STEPS {
        let pi = lo + (hi - lo) * k as f64 / STEPS as f64;
        let mut prev_q = -qmax;
        let mut prev_f = rhs(prev_q, pi);
        for i in 1..=Q_GRID {
            let q = -qmax + 2.0 * qmax * i as f64 / Q_GRID as f64;
            let f = rhs(q, pi);
            if prev_f == 0.0 || prev_f.signum() != f.signum() {
                let root = bisect(|x| rhs(x, pi), prev_q, q);
                let h = 1e-6 * qmax;
                let slope = (rhs(root + h, pi) - rhs(root - h, pi)) / (2.0 * h);
                let series = if slope < 0.0 { "model_stable" } else { "model_unstable" };
                data.push(series, 0, pi, root);
            }
            prev_q = q;
            prev_f = f;
        }
    }
    Ok(Plot {
        file: "bifurcation.csv",
        title: "Fixed points of the identified model".into(),
        x_label: p.groups[0].clone(),
        y_label: format!("{} (steady)", p.state),
        data,
    })
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa0 = f(a);
    if fa0 == 0.0 {
        return a;
    }
    let mut fa = fa0;
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa.signum() == fm.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn table<'a>(source: &'a Source, field: Option<&'a Dataset>, what: &str) -> Result<&'a Dataset, CliError> {
    match (field, source) {
        (Some(f), _) => Ok(f),
        (None, Source::Table(d)) => Ok(d),
        (None, Source::Runs(_)) => Err(CliError::Usage(format!("{what} needs --data or --field"))),
    }
}

/// Power product of the positive inputs in `data` for each row.
fn group_values(data: &Dataset, over: &[String], exps: &[f64]) -> Result<Vec<f64>, CliError> {
    let cols: Vec<&[f64]> = over.iter().map(|n| data.column(n)).collect::<Result<_, _>>()?;
    Ok((0..data.nrows())
        .map(|r| cols.iter().zip(exps).map(|(c, e)| c[r].powf(*e)).product())
        .collect())
}

fn optfit_collapse(
    p: &OptfitPayload,
    result: &DiscoveryResult,
    source: &Source,
    field: Option<&Dataset>,
) -> Result<Plot, CliError> {
    let train = match source {
        Source::Table(d) => d,
        Source::Runs(_) => return Err(CliError::Usage("optfit plot export needs --data".into())),
    };
    let target = table(source, field, "optfit plot export")?;
    let model = GroupModel::fit(train, &p.exponents, &p.train_rows, &result.config.optfit)?;
    let predicted = model.predict(target)?;
    let shown = p.anchored[0].as_ref().unwrap_or(&p.exponents[0]);
    let x = group_values(target, &shown.over, &shown.values)?;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut data = Tidy::new();
    for (o, name) in model.outputs.iter().enumerate() {
        let observed = target.column(name)?;
        for &r in &order {
            data.push(&format!("data:{name}"), 0, x[r], observed[r]);
        }
        for &r in &order {
            data.push(&format!("model:{name}"), 0, x[r], predicted[o][r]);
        }
    }
    Ok(Plot {
        file: "collapse.csv",
        title: "Outputs against the discovered group".into(),
        x_label: shown.display_product(),
        y_label: model.outputs.join(", "),
        data,
    })
}

fn buckinet_collapse(
    p: &BuckiNetPayload,
    result: &DiscoveryResult,
    reg: &Registry,
    source: &Source,
    field: Option<&Dataset>,
) -> Result<Plot, CliError> {
    let inputs = &p.model.inputs;
    let exps: Vec<f64> = match p.snapped.first() {
        Some(s) => s.candidate.iter().map(|&v| v as f64).collect(),
        None => p.groups[0].values.clone(),
    };
    let label = pi_forge::pitransform::PiExponents::new(inputs.clone(), exps.clone()).display_product();
    let mut data = Tidy::new();
    let (rows, targets, names): (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<String>) = match (field, source) {
        (None, Source::Runs(runs)) => {
            let (set, _, _) = buckinet_set(source, reg, result.config.buckinet.pca_rank)?;
            let rows = runs.iter().map(|r| r.values.clone()).collect();
            let names = (1..=set.n_outputs()).map(|k| format!("c{k}")).collect();
            (rows, set.targets, names)
        }
        _ => {
            let d = table(source, field, "buckinet plot export")?;
            let cols: Vec<&[f64]> = inputs.iter().map(|n| d.column(n)).collect::<Result<_, _>>()?;
            let rows = (0..d.nrows()).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
            let names = reg.names_with_role(Role::Output);
            let ocols: Vec<&[f64]> = names.iter().map(|n| d.column(n)).collect::<Result<_, _>>()?;
            let targets = (0..d.nrows()).map(|r| ocols.iter().map(|c| c[r]).collect()).collect();
            (rows, targets, names)
        }
    };
    let predicted = p.model.forward(&rows)?;
    let x: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().zip(&exps).map(|(v, e)| v.powf(*e)).product())
        .collect();
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    for (o, name) in names.iter().enumerate() {
        for &r in &order {
            data.push(&format!("data:{name}"), r, x[r], targets[r][o]);
        }
        for &r in &order {
            data.push(&format!("model:{name}"), r, x[r], predicted[r][o]);
        }
    }
    Ok(Plot {
        file: "collapse.csv",
        title: "Targets against the leading learned group".into(),
        x_label: label,
        y_label: names.join(", "),
        data,
    })
}

pub fn cmd_export_plot(ctx: &Ctx, a: &ExportArgs) -> Result<(), CliError> {
    let reg = Registry::load(&a.units)?;
    let text = std::fs::read_to_string(&a.result)?;
    let result: DiscoveryResult = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", a.result.display())))?;
    let mut inputs = digest_inputs(&a.result)?;
    inputs.extend(digest_inputs(&a.units)?);
    let data_path = a.source.data.as_deref();
    let runs_path = a.source.runs.as_deref();
    inputs.extend(digest_inputs(data_path.or(runs_path).expect("clap enforces a source"))?);
    let source = load_source(data_path, runs_path, &reg)?;
    let field = match &a.field {
        Some(p) => {
            inputs.extend(digest_inputs(p)?);
            Some(ingest_table(p, &reg)?.0)
        }
        None => None,
    };
    let mut staged = Staged::default();
    for (name, bytes) in plot_files(&result, &reg, &source, field.as_ref())? {
        staged.add(name, bytes);
    }
    let config_json = serde_json::to_vec(&result.config).expect("serialisable config");
    ctx.finish(staged, &a.out, &config_json, (result.seed, "result"), inputs)
}
