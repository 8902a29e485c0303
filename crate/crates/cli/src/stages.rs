//! Pipeline stages. Each is a pure function of its input files, the
//! configuration and the seed; wall-clock time goes to a separate file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fpuq_nets::{deeponet_train, Checkpoint, DeepOnet, DeepOnetData, GeneratorNet, Mlp, MlpSpec};
use fpuq_numcore::RngStream;
use fpuq_posterior::{
    coverage_fraction, flow_draws, nuts_latent, posterior_summary, vi_train, Batching, FieldObservations,
    NutsConfig, PosteriorSummary, ViConfig,
};
use fpuq_priors::{
    compose_operator_prior, standard_discriminator, train_prior as gan_train, FieldTag, FunctionDataset,
    GeneratorPrior,
};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Problem};
use crate::container::DatasetContainer;
use crate::data::{generate_history, generate_task, sensor_grid, TaskFile};
use crate::error::{format_err, io_err, CliError, Result};
use crate::layout::{run_curves, run_draws, run_flow, run_loss, run_summary, ExperimentDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nf,
    Hmc,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Nf => "nf",
            Method::Hmc => "hmc",
        })
    }
}

/// `full`, positional sizes (`1,5`, one per observed field in field order)
/// or named sizes (`u=1,f=5`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BatchSpec {
    Full,
    Positional(Vec<usize>),
    Named(Vec<(FieldTag, usize)>),
}

impl std::str::FromStr for BatchSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(BatchSpec::Full);
        }
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let size = |v: &str| v.parse::<usize>().map_err(|_| format!("bad batch size `{v}`"));
        if parts.iter().all(|p| p.contains('=')) {
            let named = parts
                .iter()
                .map(|p| {
                    let (k, v) = p.split_once('=').expect("checked");
                    let tag: FieldTag = k.trim().parse().map_err(|e: fpuq_priors::PriorError| e.to_string())?;
                    Ok((tag, size(v.trim())?))
                })
                .collect::<std::result::Result<Vec<_>, String>>()?;
            Ok(BatchSpec::Named(named))
        } else {
            Ok(BatchSpec::Positional(parts.into_iter().map(size).collect::<std::result::Result<_, _>>()?))
        }
    }
}

impl BatchSpec {
    pub fn resolve(&self, observed: &[FieldTag]) -> Result<Batching> {
        let sizes = match self {
            BatchSpec::Full => return Ok(Batching::Full),
            BatchSpec::Positional(v) => {
                if v.len() != observed.len() {
                    return Err(CliError::Config(format!(
                        "{} batch sizes for {} observed fields ({})",
                        v.len(),
                        observed.len(),
                        observed.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(",")
                    )));
                }
                observed.iter().copied().zip(v.iter().copied()).collect()
            }
            BatchSpec::Named(v) => {
                if let Some((t, _)) = v.iter().find(|(t, _)| !observed.contains(t)) {
                    return Err(CliError::Config(format!("field `{t}` is not observed")));
                }
                let mut v = v.clone();
                v.sort_by_key(|(t, _)| *t);
                v
            }
        };
        Ok(Batching::PerField(sizes))
    }
}

/// Directory name of an inference run.
pub fn run_name(method: Method, batching: &Batching, observations: &[FieldObservations]) -> String {
    let sizes: Vec<String> = match batching {
        Batching::Full => Vec::new(),
        Batching::PerField(_) => observations
            .iter()
            .filter(|o| batching.size_for(o) != o.len())
            .map(|o| format!("{}{}", o.field, batching.size_for(o)))
            .collect(),
    };
    if method == Method::Hmc {
        "hmc".into()
    } else if sizes.is_empty() {
        "nf-full".into()
    } else {
        format!("nf-{}", sizes.join("-"))
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(())
}

fn guard(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(CliError::Exists(path.into()));
    }
    Ok(())
}

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(CliError::Missing(path.into()));
    }
    Ok(())
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| format_err(path, e))? + "\n";
    fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    require(path)?;
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e))
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| format_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| format_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    require(path)?;
    let mut r = csv::Reader::from_path(path).map_err(|e| format_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| format_err(path, e))).collect()
}

fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    ensure_parent(path)?;
    ck.save(path).map_err(|e| format_err(path, e))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    require(path)?;
    Checkpoint::load(path).map_err(|e| format_err(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

fn record_timing(dir: &ExperimentDir, stage: &str, start: Instant) -> Result<()> {
    let t = StageTiming {
        stage: stage.into(),
        seconds: start.elapsed().as_secs_f64(),
    };
    log::info!("{stage} finished in {:.1} s", t.seconds);
    write_json(&dir.timing(stage), &t)
}

/// Configuration for a stage after the first: an explicit file, otherwise
/// the one recorded by `gen-data`.
pub fn stage_config(dir: &ExperimentDir, explicit: Option<&Path>) -> Result<ExperimentConfig> {
    ExperimentConfig::load(explicit.unwrap_or(&dir.config()))
}

/// Writes the configuration, the historical dataset and the test task.
pub fn gen_data(config: &ExperimentConfig, dir: &ExperimentDir, force: bool) -> Result<()> {
    config.validate()?;
    guard(&dir.history(), force)?;
    guard(&dir.task(), force)?;
    let start = Instant::now();
    ensure_parent(&dir.history())?;
    fs::write(dir.config(), config.to_json()).map_err(io_err(dir.config()))?;
    let history = generate_history(config)?;
    DatasetContainer::from_dataset(&history, config.seed, "data/history").save(&dir.history())?;
    write_json(&dir.task(), &generate_task(config)?)?;
    record_timing(dir, "gen-data", start)
}

fn load_history(dir: &ExperimentDir) -> Result<FunctionDataset> {
    let path = dir.history();
    Ok(DatasetContainer::load(&path)?.to_dataset().map_err(|e| format_err(&path, e))?)
}

fn new_prior(config: &ExperimentConfig, rng: &RngStream) -> Result<GeneratorPrior> {
    let grid = sensor_grid(config)?;
    let p = &config.prior;
    let gen = |name: &str| GeneratorNet::new(grid.dim(), p.latent_dim, p.hidden, p.depth, &mut rng.child(name));
    Ok(match config.problem {
        Problem::Function1d => GeneratorPrior::plain(grid.clone(), FieldTag::U, gen("gen")?)?,
        Problem::Reaction1d => GeneratorPrior::reaction(grid.clone(), gen("u")?, gen("k")?, config.data.diffusion)?,
        Problem::Darcy2d => GeneratorPrior::plain(grid.clone(), FieldTag::Lambda, gen("lambda")?)?,
    })
}

fn prior_checkpoint(prior: &GeneratorPrior, critic: &Mlp, config: &ExperimentConfig, step: usize) -> Checkpoint {
    prior
        .to_checkpoint(json!({"seed": config.seed, "step": step, "critic": critic.spec}))
        .with_group("critic", &critic.params)
}

/// Adversarial training of the functional prior.
pub fn train_prior(config: &ExperimentConfig, dir: &ExperimentDir, force: bool) -> Result<()> {
    config.validate()?;
    guard(&dir.prior(), force)?;
    let history = load_history(dir)?;
    let start = Instant::now();
    let rng = RngStream::new(config.seed, "prior/init");
    let prior = new_prior(config, &rng)?;
    let data = if history.fields == prior.data_fields() {
        history
    } else {
        let fields = prior.data_fields();
        let blocks: Vec<_> = fields
            .iter()
            .map(|&t| history.field(t).ok_or(CliError::Incompatible(format!("dataset lacks field `{t}`"))))
            .collect::<Result<_>>()?;
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        let values = ndarray::concatenate(ndarray::Axis(1), &views).expect("equal rows");
        FunctionDataset::new(history.grid.clone(), fields, values)?
    };
    let critic = standard_discriminator(prior.sample_width(), &mut rng.child("critic"))?;
    let gan = fpuq_priors::GanTrainConfig {
        seed: config.seed,
        ..config.prior.gan.clone()
    };
    let mut on_checkpoint = |step: usize, p: &GeneratorPrior, c: &Mlp| -> fpuq_priors::Result<()> {
        let path = dir.prior_checkpoint(step);
        save_checkpoint(&path, &prior_checkpoint(p, c, config, step))
            .map_err(|e| fpuq_priors::PriorError::Checkpoint(e.to_string()))
    };
    let (prior, critic, records) = gan_train(prior, critic, &data, &gan, &mut on_checkpoint)?;
    write_csv(&dir.prior_loss(), &records)?;
    save_checkpoint(&dir.prior(), &prior_checkpoint(&prior, &critic, config, gan.steps))?;
    record_timing(dir, "train-prior", start)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LossRow {
    step: usize,
    loss: f64,
}

/// Trains the parameter-to-solution operator on the paired dataset.
pub fn train_deeponet(config: &ExperimentConfig, dir: &ExperimentDir, force: bool) -> Result<()> {
    config.validate()?;
    let op_config = config.operator.as_ref().ok_or_else(|| {
        CliError::Incompatible(format!("{} has no operator surrogate", config.problem.as_str()))
    })?;
    guard(&dir.operator(), force)?;
    let history = load_history(dir)?;
    let start = Instant::now();
    let missing = |t: FieldTag| CliError::Incompatible(format!("dataset lacks field `{t}`"));
    let data = DeepOnetData {
        sensors: history.field(FieldTag::Lambda).ok_or_else(|| missing(FieldTag::Lambda))?,
        points: history.grid.points().clone(),
        targets: history.field(FieldTag::U).ok_or_else(|| missing(FieldTag::U))?,
    };
    let net = DeepOnet::new(
        history.grid.len(),
        history.grid.dim(),
        op_config.width,
        op_config.hidden,
        op_config.depth,
        &mut RngStream::new(config.seed, "deeponet/init"),
    )?;
    let train = fpuq_nets::DeepOnetTrainConfig {
        seed: config.seed,
        ..op_config.train.clone()
    };
    let (net, report) = deeponet_train(net, &data, &train)?;
    let rows: Vec<LossRow> = report
        .loss_history
        .iter()
        .enumerate()
        .map(|(i, &loss)| LossRow { step: i + 1, loss })
        .collect();
    write_csv(&dir.operator_loss(), &rows)?;
    write_json(
        &dir.operator_metrics(),
        &json!({
            "seed": config.seed,
            "test_mse": report.test_mse,
            "test_rel_l2": report.test_rel_l2,
            "train_count": report.train_count,
            "test_count": report.test_count,
        }),
    )?;
    let ck = Checkpoint::new(json!({"branch": net.branch.spec, "trunk": net.trunk.spec, "seed": config.seed}))
        .with_group("branch", &net.branch.params)
        .with_group("trunk", &net.trunk.params);
    save_checkpoint(&dir.operator(), &ck)?;
    record_timing(dir, "train-deeponet", start)
}

/// The trained prior, composed with the operator where the problem has one.
pub fn load_model(config: &ExperimentConfig, dir: &ExperimentDir) -> Result<GeneratorPrior> {
    let path = dir.prior();
    let prior = GeneratorPrior::from_checkpoint(&load_checkpoint(&path)?)?;
    if prior.latent_dim() != config.prior.latent_dim {
        return Err(CliError::Incompatible(format!(
            "checkpoint latent dimension {} != configured {}",
            prior.latent_dim(),
            config.prior.latent_dim
        )));
    }
    if !config.problem.needs_operator() {
        return Ok(prior);
    }
    let path = dir.operator();
    let ck = load_checkpoint(&path)?;
    let spec = |k: &str| -> Result<MlpSpec> { serde_json::from_value(ck.meta[k].clone()).map_err(|e| format_err(&path, e)) };
    let op = DeepOnet::from_parts(
        Mlp::from_params(spec("branch")?, ck.group("branch")?.clone())?,
        Mlp::from_params(spec("trunk")?, ck.group("trunk")?.clone())?,
    )?;
    Ok(compose_operator_prior(&prior, op)?)
}

/// Metrics of one field against the exact reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMetrics {
    pub field: FieldTag,
    pub rmse: f64,
    pub mean_std: f64,
    pub coverage_2sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldResult {
    pub summary: PosteriorSummary,
    pub reference: Array1<f64>,
    pub metrics: FieldMetrics,
}

/// Contents of `summary.json`; its presence marks a completed run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub method: Method,
    pub batching: Batching,
    pub seed: u64,
    pub draws: usize,
    pub latent_dim: usize,
    pub fields: Vec<FieldResult>,
    pub diagnostics: Value,
    pub config: ExperimentConfig,
}

impl RunSummary {
    pub fn field(&self, tag: FieldTag) -> Option<&FieldResult> {
        self.fields.iter().find(|f| f.summary.field == tag)
    }
}

pub fn field_metrics(summary: &PosteriorSummary, reference: &Array1<f64>) -> Result<FieldMetrics> {
    Ok(FieldMetrics {
        field: summary.field,
        rmse: fpuq_posterior::rms_difference(&summary.mean, reference),
        mean_std: summary.std.mean().unwrap_or(0.0),
        coverage_2sigma: coverage_fraction(summary, reference, 2.0)?,
    })
}

/// Plot-ready row: coordinates, mean, two-sigma band and reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub run: String,
    pub field: FieldTag,
    pub x: f64,
    pub y: Option<f64>,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub reference: f64,
}

pub fn curve_rows(run: &str, results: &[FieldResult]) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for r in results {
        let s = &r.summary;
        for (k, p) in s.points.rows().into_iter().enumerate() {
            rows.push(CurveRow {
                run: run.into(),
                field: s.field,
                x: p[0],
                y: p.get(1).copied(),
                mean: s.mean[k],
                lower: s.mean[k] - 2.0 * s.std[k],
                upper: s.mean[k] + 2.0 * s.std[k],
                reference: r.reference[k],
            });
        }
    }
    rows
}

/// Posterior inference with a flow or NUTS; returns the run directory.
pub fn infer(
    config: &ExperimentConfig,
    dir: &ExperimentDir,
    method: Method,
    batch: &BatchSpec,
    force: bool,
) -> Result<PathBuf> {
    config.validate()?;
    let task: TaskFile = read_json(&dir.task())?;
    let observed: Vec<FieldTag> = task.observations.iter().map(|o| o.field).collect();
    let batching = batch.resolve(&observed)?;
    if method == Method::Hmc && batching != Batching::Full {
        let full = task.observations.iter().all(|o| batching.size_for(o) == o.len());
        if !full {
            return Err(CliError::Incompatible("NUTS uses the full likelihood; minibatches need --method nf".into()));
        }
    }
    let name = run_name(method, &batching, &task.observations);
    let run = dir.run(&name);
    guard(&run_summary(&run), force)?;
    let model = load_model(config, dir)?;
    let start = Instant::now();
    fs::create_dir_all(&run).map_err(io_err(&run))?;
    let (draws, diagnostics) = match method {
        Method::Nf => {
            let vi = ViConfig {
                samples_per_step: config.flow.samples_per_step,
                batching: batching.clone(),
                steps: config.flow.steps,
                adam: config.flow.adam,
                flow: config.flow.spec(model.latent_dim()),
                seed: config.seed,
                checkpoint_every: config.flow.checkpoint_every,
            };
            let result = vi_train(&model, &task.observations, &vi, &mut |_, _| Ok(()))?;
            let rows: Vec<LossRow> = result
                .history
                .iter()
                .enumerate()
                .map(|(i, &loss)| LossRow { step: i + 1, loss })
                .collect();
            write_csv(&run_loss(&run), &rows)?;
            let ck = Checkpoint::new(json!({"flow": result.flow.spec, "seed": config.seed, "steps": vi.steps}))
                .with_group("flow", &result.flow.params);
            save_checkpoint(&run_flow(&run), &ck)?;
            let draws = flow_draws(&result.flow, config.draws, &mut RngStream::new(config.seed, "infer/draws"))?;
            let last = rows.last().map_or(f64::NAN, |r| r.loss);
            (draws, json!({"steps": vi.steps, "final_loss": if last.is_finite() { json!(last) } else { Value::Null }}))
        }
        Method::Hmc => {
            let nuts = NutsConfig {
                draws: config.draws,
                seed: config.seed,
                ..config.hmc.clone()
            };
            let r = nuts_latent(&model, &task.observations, &nuts)?;
            let diag = json!({
                "step_size": r.step_size,
                "mean_accept": r.mean_accept,
                "divergences": r.divergences,
                "mean_tree_depth": r.mean_tree_depth,
            });
            (r.draws, diag)
        }
    };
    DatasetContainer::from_rows(draws.clone(), config.seed, &format!("infer/{name}")).save(&run_draws(&run))?;
    let mut fields = Vec::new();
    for &tag in config.problem.report_fields() {
        let reference = task
            .reference(tag)
            .ok_or_else(|| format_err(dir.task(), format!("no reference for `{tag}`")))?
            .clone();
        let summary = posterior_summary(&model, &draws, tag, &task.report_points)?;
        let metrics = field_metrics(&summary, &reference)?;
        fields.push(FieldResult {
            summary,
            reference,
            metrics,
        });
    }
    write_csv(&run_curves(&run), &curve_rows(&name, &fields))?;
    let summary = RunSummary {
        run: name.clone(),
        method,
        batching,
        seed: config.seed,
        draws: draws.nrows(),
        latent_dim: model.latent_dim(),
        fields,
        diagnostics,
        config: config.clone(),
    };
    write_json(&run_summary(&run), &summary)?;
    record_timing(dir, &format!("infer-{name}"), start)?;
    Ok(run)
}
