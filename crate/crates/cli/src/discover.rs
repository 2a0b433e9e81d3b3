//! `discover`: runs one engine and writes `result.json`.

use std::path::Path;

use pi_forge::buckinet::{self, BuckiNetModel, GridConfig, TrainingSet};
use pi_forge::datagen::{ingest_runs, ingest_table, RunRecord};
use pi_forge::dsindy::{self, LibraryConfig, SindyFit, SweepEntry};
use pi_forge::nullspace::{enumerate_candidates, rational_nullspace};
use pi_forge::optfit::optfit_discover;
use pi_forge::pitransform::{Dataset, PiExponents};
use pi_forge::regress::pca_reduce;
use pi_forge::units::{Registry, UnitsMatrix};
use pi_forge::Error;
use serde::{Deserialize, Serialize};

use crate::args::{DiscoverArgs, Engine};
use crate::config::DiscoverConfig;
use crate::error::CliError;
use crate::output::{digest_inputs, to_json, Staged};
use crate::{plot, Ctx};

/// Contents of `result.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscoveryResult {
    pub engine: Engine,
    pub seed: u64,
    /// Effective configuration after flags and seed resolution.
    pub config: DiscoverConfig,
    pub payload: Payload,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payload {
    Optfit(OptfitPayload),
    Buckinet(Box<BuckiNetPayload>),
    Dsindy(DsindyPayload),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptfitPayload {
    pub groups: Vec<String>,
    pub exponents: Vec<PiExponents>,
    pub anchored: Vec<Option<PiExponents>>,
    pub objective: f64,
    pub null_residual: f64,
    pub best_start: usize,
    pub start_objectives: Vec<f64>,
    pub train_rows: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnappedPayload {
    pub candidate: Vec<i64>,
    pub group: String,
    pub cosine: f64,
    pub anchored: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PcaPayload {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub captured_variance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuckiNetPayload {
    pub groups: Vec<PiExponents>,
    pub anchored: Vec<Option<PiExponents>>,
    pub snapped: Vec<SnappedPayload>,
    pub misfit: f64,
    /// Misfit with the first layer replaced by the snapped candidates.
    pub snapped_misfit: Option<f64>,
    pub null_norm: f64,
    /// Grid trials, when a grid was searched.
    pub trials: Option<serde_json::Value>,
    pub best_trial: Option<usize>,
    pub pca: Option<PcaPayload>,
    pub model: BuckiNetModel,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankedEntry {
    pub pi: Vec<Vec<i64>>,
    pub timescale: Vec<i64>,
    pub loss: f64,
    pub support: usize,
    pub normalized_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DsindyPayload {
    pub parameters: Vec<String>,
    pub state: String,
    pub library: LibraryConfig,
    pub combinations: usize,
    pub ranking: Vec<RankedEntry>,
    pub pi: Vec<Vec<i64>>,
    pub timescale: Vec<i64>,
    pub groups: Vec<String>,
    pub timescale_group: String,
    pub equation: String,
    pub fit: SindyFit,
}

impl DsindyPayload {
    pub fn lhs(&self) -> String {
        match self.library.order {
            2 => format!("d2{}/dtau2", self.state),
            _ => format!("d{}/dtau", self.state),
        }
    }
}

/// Measurements named by `--data` or `--runs`.
pub enum Source {
    Table(Dataset),
    Runs(Vec<RunRecord>),
}

pub fn load_source(data: Option<&Path>, runs: Option<&Path>, reg: &Registry) -> Result<Source, CliError> {
    match (data, runs) {
        (Some(p), None) => Ok(Source::Table(ingest_table(p, reg)?.0)),
        (None, Some(p)) => Ok(Source::Runs(ingest_runs(p, reg)?)),
        _ => Err(CliError::Usage("pass exactly one of --data and --runs".into())),
    }
}

/// Units matrix over the run parameters, in `params.csv` order.
pub fn run_parameters(runs: &[RunRecord], reg: &Registry) -> Result<UnitsMatrix, CliError> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Data("run directory holds no runs".into()))?;
    Ok(reg.units_matrix()?.columns(&first.parameters)?)
}

fn apply_flags(cfg: &mut DiscoverConfig, a: &DiscoverArgs) {
    if a.groups.is_some() {
        cfg.groups = a.groups;
    }
    if a.anchor.is_some() {
        cfg.anchor = a.anchor.clone();
    }
    if let Some(n) = a.starts {
        cfg.optfit.n_starts = n;
    }
    if let Some(r) = a.pca {
        cfg.buckinet.pca_rank = r;
    }
    if a.grid && cfg.buckinet.grid.is_none() {
        cfg.buckinet.grid = Some(GridConfig::default());
    }
    if let Some(t) = a.threshold {
        cfg.dsindy.stlsq.threshold = t;
    }
    if let Some(d) = a.deg {
        cfg.dsindy.library.degree = d;
    }
    if let Some(o) = a.order {
        cfg.dsindy.library.order = o;
    }
    if let Some(b) = a.bound {
        cfg.dsindy.bound = b;
        cfg.buckinet.snap_bound = b;
    }
    if let Some(k) = a.pick_k {
        cfg.dsindy.pick_k = k;
    }
}

pub fn cmd_discover(ctx: &Ctx, a: &DiscoverArgs) -> Result<(), CliError> {
    let reg = Registry::load(&a.units)?;
    let mut inputs = digest_inputs(&a.units)?;
    let mut cfg = match &a.config {
        Some(p) => {
            inputs.extend(digest_inputs(p)?);
            DiscoverConfig::from_toml_str(&std::fs::read_to_string(p)?)?
        }
        None => DiscoverConfig::default(),
    };
    apply_flags(&mut cfg, a);
    let seed = ctx.resolve_seed(cfg.seed)?;
    cfg.seed = Some(seed.0);
    cfg.optfit.seed = seed.0;
    cfg.buckinet.train.seed = seed.0;
    if let Some(g) = &mut cfg.buckinet.grid {
        g.split_seed = seed.0;
    }
    if cfg.anchor.is_some() {
        cfg.optfit.anchor = cfg.anchor.clone();
    }

    let data_path = a.source.data.as_deref();
    let runs_path = a.source.runs.as_deref();
    inputs.extend(digest_inputs(data_path.or(runs_path).expect("clap enforces a source"))?);
    let source = load_source(data_path, runs_path, &reg)?;
    log::info!("engine {:?}, seed {}", a.engine, seed.0);

    let payload = match a.engine {
        Engine::Optfit => Payload::Optfit(run_optfit(&cfg, &reg, &source)?),
        Engine::Buckinet => Payload::Buckinet(Box::new(run_buckinet(&cfg, &reg, &source)?)),
        Engine::Dsindy => Payload::Dsindy(run_dsindy(&cfg, &reg, &source)?),
    };
    let result = DiscoveryResult {
        engine: a.engine,
        seed: seed.0,
        config: cfg,
        payload,
    };

    let mut staged = Staged::default();
    staged.add("result.json", to_json(&result));
    if let Payload::Buckinet(b) = &result.payload {
        staged.add("model.json", format!("{}\n", b.model.to_json()).into_bytes());
    }
    if a.export_plot {
        let field = match &a.field {
            Some(p) => {
                inputs.extend(digest_inputs(p)?);
                Some(ingest_table(p, &reg)?.0)
            }
            None => None,
        };
        for (name, bytes) in plot::plot_files(&result, &reg, &source, field.as_ref())? {
            staged.add(Path::new("plots").join(name), bytes);
        }
    }
    let config_json = serde_json::to_vec(&result.config).expect("serialisable config");
    ctx.finish(staged, &a.out, &config_json, seed, inputs)
}

fn table<'a>(source: &'a Source, engine: &str) -> Result<&'a Dataset, CliError> {
    match source {
        Source::Table(d) => Ok(d),
        Source::Runs(_) => Err(CliError::Usage(format!("{engine} needs --data"))),
    }
}

fn run_optfit(cfg: &DiscoverConfig, reg: &Registry, source: &Source) -> Result<OptfitPayload, CliError> {
    let data = table(source, "optfit")?;
    let basis = rational_nullspace(&reg.units_matrix()?.d_p());
    let n_groups = cfg.groups.unwrap_or(basis.pi_count());
    let res = optfit_discover(data, &basis, n_groups, &cfg.optfit)?;
    Ok(OptfitPayload {
        groups: res
            .anchored
            .iter()
            .zip(&res.exponents)
            .map(|(a, e)| a.as_ref().unwrap_or(e).display_product())
            .collect(),
        exponents: res.exponents,
        anchored: res.anchored,
        objective: res.objective,
        null_residual: res.null_residual,
        best_start: res.best_start,
        start_objectives: res.starts.iter().map(|s| s.objective).collect(),
        train_rows: res.train_rows,
    })
}

/// Training set for the network: table rows, or run parameters against the
/// leading principal components of each run's first state.
pub fn buckinet_set(
    source: &Source,
    reg: &Registry,
    pca_rank: usize,
) -> Result<(TrainingSet, UnitsMatrix, Option<PcaPayload>), CliError> {
    match source {
        Source::Table(data) => {
            let d_p = reg.units_matrix()?.d_p();
            Ok((TrainingSet::from_dataset(data, &d_p)?, d_p, None))
        }
        Source::Runs(runs) => {
            let d_p = run_parameters(runs, reg)?;
            let samples: Vec<Vec<f64>> = runs.iter().map(|r| r.states[0].clone()).collect();
            if samples.iter().any(|s| s.len() != samples[0].len()) {
                return Err(Error::Data("runs must share one time grid for PCA".into()).into());
            }
            let (pca, coeffs) = pca_reduce(&samples, pca_rank)?;
            let p: Vec<Vec<f64>> = runs.iter().map(|r| r.values.clone()).collect();
            let set = TrainingSet::from_arrays(d_p.names().to_vec(), &p, coeffs)?;
            let payload = PcaPayload {
                captured_variance: pca.captured_variance(),
                mean: pca.mean,
                components: pca.components,
            };
            Ok((set, d_p, Some(payload)))
        }
    }
}

fn run_buckinet(cfg: &DiscoverConfig, reg: &Registry, source: &Source) -> Result<BuckiNetPayload, CliError> {
    let sec = &cfg.buckinet;
    let (set, d_p, pca) = buckinet_set(source, reg, sec.pca_rank)?;
    let mut train = sec.train.clone();
    if cfg.groups.is_some() {
        train.n_groups = cfg.groups;
    }
    let (model, trials, best_trial) = match &sec.grid {
        Some(grid) => {
            let out = buckinet::grid_search(&set, &d_p, &train, grid)?;
            let trials = serde_json::to_value(&out.trials).expect("serialisable trials");
            (out.model, Some(trials), Some(out.best))
        }
        None => (buckinet::train_set(&set, &d_p, &train)?.0, None, None),
    };
    let anchor = cfg.anchor.as_deref();
    let basis = rational_nullspace(&d_p);
    let snapped = match enumerate_candidates(&basis, sec.snap_bound, None) {
        Ok(c) => buckinet::snap_groups(&model, &c, anchor),
        Err(Error::EmptyCandidates { .. }) => {
            log::warn!("no candidates within bound {}; groups left unsnapped", sec.snap_bound);
            Vec::new()
        }
        Err(e) => return Err(e.into()),
    };
    let snapped_misfit = (!snapped.is_empty())
        .then(|| buckinet::misfit(&buckinet::with_snapped(&model, &snapped), &set));
    let groups = model.groups();
    let anchored = groups
        .iter()
        .map(|g| anchor.and_then(|a| pi_forge::pitransform::normalize_exponents(g, a).ok()))
        .collect();
    Ok(BuckiNetPayload {
        anchored,
        snapped: snapped
            .iter()
            .map(|s| SnappedPayload {
                group: PiExponents::from_ints(d_p.names().iter().cloned(), &s.candidate).display_product(),
                candidate: s.candidate.clone(),
                cosine: s.cosine,
                anchored: s.anchored.clone(),
            })
            .collect(),
        misfit: buckinet::misfit(&model, &set),
        snapped_misfit,
        null_norm: buckinet::null_norm(&model, &d_p.to_f64()),
        trials,
        best_trial,
        pca,
        groups,
        model,
    })
}

fn run_dsindy(cfg: &DiscoverConfig, reg: &Registry, source: &Source) -> Result<DsindyPayload, CliError> {
    let runs = match source {
        Source::Runs(r) => r,
        Source::Table(_) => return Err(CliError::Usage("dsindy needs --runs".into())),
    };
    let sec = &cfg.dsindy;
    let d = run_parameters(runs, reg)?;
    let basis = rational_nullspace(&d);
    let time = reg.time_dimension()?;
    let cands = enumerate_candidates(&basis, sec.bound, Some(&time))?;
    let sweep_cfg = sec.sweep();
    let result = dsindy::sweep(runs, &cands, &sweep_cfg)?;
    let winner: &SweepEntry = result.winner();
    let names = d.names().iter().cloned();
    let display = |v: &[i64]| PiExponents::from_ints(names.clone(), v).display_product();
    let mut payload = DsindyPayload {
        parameters: result.parameters.clone(),
        state: result.state.clone(),
        library: sweep_cfg.library.clone(),
        combinations: result.entries.len(),
        ranking: result
            .entries
            .iter()
            .take(sec.report)
            .map(|e| RankedEntry {
                pi: e.pi.clone(),
                timescale: e.timescale.clone(),
                loss: e.loss,
                support: e.fit.support_size(),
                normalized_residual: e.fit.normalized_residual,
            })
            .collect(),
        pi: winner.pi.clone(),
        timescale: winner.timescale.clone(),
        groups: winner.pi.iter().map(|v| display(v)).collect(),
        timescale_group: display(&winner.timescale),
        equation: String::new(),
        fit: winner.fit.clone(),
    };
    payload.equation = payload.fit.equation(&payload.lhs());
    Ok(payload)
}
