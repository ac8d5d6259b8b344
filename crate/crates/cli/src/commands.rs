use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use tmoe::attention::AttentionVariant;
use tmoe::data::{synth_series, write_csv, AnomalyKind, AnomalySpec, Dataset, Split, SynthSpec};
use tmoe::eval::{
    ablate_attention, ablate_share, anchors, anomaly_harness, config_digest, evaluate, gradient_suite,
    lag_correlation_map, sweep_topk, write_json, write_rows_csv, ComparisonTable, EvalReport, Experiment,
    HorizonMetrics, Predictor, RepeatLastWindow, TrainedModel,
};
use tmoe::model::{Model, ModelVariant};
use tmoe::training::{load_checkpoint, save_checkpoint, train};
use tmoe::Error;

use crate::args::{Command, RunArgs, SplitArg};
use crate::config::{read_config, resolve, RunConfig, SEED_ENV};

/// Largest relative error `gradcheck` accepts.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    /// The command ran but its check did not pass.
    Failed(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Failed(msg) => f.write_str(msg),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a RunConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
    seed: u64,
    workers: usize,
    outputs: Vec<String>,
    elapsed_secs: f64,
}

struct RunLog<'a> {
    command: &'a str,
    dir: PathBuf,
    start: Instant,
    outputs: Vec<String>,
}

impl<'a> RunLog<'a> {
    fn new(command: &'a str, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(RunLog {
            command,
            dir: dir.to_path_buf(),
            start: Instant::now(),
            outputs: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    fn finish(self, config: Option<&RunConfig>, seed: u64, workers: usize) -> Result<()> {
        let manifest = Manifest {
            tool: "tmoe",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            argv: std::env::args().collect(),
            config,
            config_digest: config.map(config_digest).transpose()?,
            seed,
            workers,
            outputs: self.outputs,
            elapsed_secs: self.start.elapsed().as_secs_f64(),
        };
        write_json(self.dir.join("run.json"), &manifest)?;
        Ok(())
    }
}

struct Prepared {
    cfg: RunConfig,
    dataset: Dataset,
}

fn prepare(run: &RunArgs) -> Result<Prepared> {
    let cfg = resolve(run)?;
    let series = cfg.load_series()?;
    let dataset = Dataset::new(&series, cfg.split)?;
    Ok(Prepared { cfg, dataset })
}

fn experiment<'a>(cfg: &RunConfig, dataset: &'a Dataset) -> Experiment<'a> {
    let mut exp = Experiment::new(dataset, cfg.model.clone(), cfg.train.clone(), cfg.horizons.clone());
    exp.train_stride = cfg.train_stride;
    exp.eval_stride = cfg.eval_stride;
    exp
}

fn fmt_metric(x: f64) -> String {
    format!("{x:.6}")
}

fn print_table(table: &ComparisonTable) {
    println!("{:<10} {:>8} {:>10} {:>10}", "arm", "horizon", "mse", "mae");
    for r in &table.rows {
        println!("{:<10} {:>8} {:>10} {:>10}", r.arm, r.horizon, fmt_metric(r.mse), fmt_metric(r.mae));
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(run) => cmd_train(&run),
        Command::Eval { run, checkpoint } => cmd_eval(&run, &checkpoint),
        Command::Predict {
            run,
            checkpoint,
            split,
            stride,
        } => cmd_predict(&run, &checkpoint, split, stride),
        Command::AblateAttention(run) => cmd_ablate(&run, "ablate_attention", ablate_attention),
        Command::AblateShare(run) => cmd_ablate(&run, "ablate_share", ablate_share),
        Command::SweepTopk {
            run,
            ks,
            reference_seeds,
        } => cmd_sweep(&run, &ks, reference_seeds),
        Command::AnomalyBench {
            run,
            kinds,
            position,
            length,
            magnitude,
            period,
            seeds,
            max_windows,
        } => {
            let kinds: Vec<AnomalyKind> = if kinds.is_empty() {
                AnomalyKind::ALL.to_vec()
            } else {
                kinds.into_iter().map(Into::into).collect()
            };
            let specs = kinds
                .into_iter()
                .map(|kind| AnomalySpec {
                    kind,
                    position,
                    length,
                    magnitude,
                    period,
                    seed: 0,
                })
                .collect::<Vec<_>>();
            cmd_anomaly(&run, &specs, &seeds, max_windows)
        }
        Command::Synth {
            periods,
            amplitudes,
            noise,
            length,
            channels,
            seed,
            out,
        } => cmd_synth(periods, amplitudes, noise, length, channels, seed, &out),
        Command::Gradcheck { tiny, config, seed, out } => cmd_gradcheck(tiny, config.as_deref(), seed, out),
        Command::Lagmap {
            run,
            patch_len,
            lookback,
            stride,
        } => cmd_lagmap(&run, patch_len, lookback, stride),
    }
}

fn cmd_train(run: &RunArgs) -> Result<()> {
    let Prepared { cfg, dataset } = prepare(run)?;
    let mut log = RunLog::new("train", &cfg.output_dir)?;
    let model = Model::new(cfg.model.clone())?;
    let (l, h) = (cfg.model.patch.lookback, cfg.model.horizon);
    let train_w = dataset.windows(Split::Train, l, h, cfg.train_stride)?;
    let val_w = dataset.windows(Split::Val, l, h, cfg.eval_stride)?;
    println!(
        "training {} on {} ({} train / {} val windows, {} channels)",
        model.config().attention_variant().label(),
        dataset.name(),
        train_w.len(),
        val_w.len(),
        dataset.num_channels()
    );
    let (params, history) = train(&model, model.init_params(cfg.seed()), &train_w, &val_w, &cfg.train)?;
    for e in &history.epochs {
        println!("epoch {:>3}  train {}  val {}", e.epoch, fmt_metric(e.train_loss), fmt_metric(e.val_loss));
    }
    let ckpt = log.path("model.ckpt");
    save_checkpoint(&ckpt, &params, model.config())?;
    write_json(log.path("history.json"), &history)?;
    if let Some(best) = history.best_epoch {
        println!("best val mse {} at epoch {best}", fmt_metric(history.epochs[best].val_loss));
    }
    println!("checkpoint written to {}", ckpt.display());
    log.finish(Some(&cfg), cfg.seed(), cfg.train.workers)
}

fn load_trained(cfg: &RunConfig, checkpoint: &Path) -> Result<TrainedModel> {
    let ck = load_checkpoint(checkpoint)?;
    let (model, params) = if cfg.model_explicit {
        ck.into_model_matching(&cfg.model)?
    } else {
        ck.into_model()?
    };
    Ok(TrainedModel { model, params })
}

fn eval_horizons(cfg: &RunConfig, model: &Model) -> Vec<usize> {
    match model.variant() {
        ModelVariant::TimeExpert => vec![model.config().horizon],
        ModelVariant::TimeExpertG => cfg.horizons.clone(),
    }
}

#[derive(Serialize)]
struct EvalOutput {
    model: EvalReport,
    baseline: EvalReport,
}

#[derive(Serialize)]
struct MetricRow<'a> {
    variant: &'a str,
    horizon: usize,
    mse: f64,
    mae: f64,
}

fn cmd_eval(run: &RunArgs, checkpoint: &Path) -> Result<()> {
    let Prepared { cfg, dataset } = prepare(run)?;
    let trained = load_trained(&cfg, checkpoint)?;
    let mut log = RunLog::new("eval", &cfg.output_dir)?;
    let lookback = trained.model.config().patch.lookback;
    let digest = config_digest(&(trained.model.config(), dataset.name(), cfg.split, cfg.eval_stride))?;
    let mut rows = (Vec::new(), Vec::new());
    let start = Instant::now();
    for h in eval_horizons(&cfg, &trained.model) {
        let test = dataset.windows(Split::Test, lookback, h, cfg.eval_stride)?;
        for (predictor, out) in [
            (&trained as &dyn Predictor, &mut rows.0),
            (&RepeatLastWindow as &dyn Predictor, &mut rows.1),
        ] {
            let m = evaluate(predictor, &test, cfg.train.workers)?;
            out.push(HorizonMetrics {
                horizon: h,
                mse: m.mse,
                mae: m.mae,
                windows: m.windows,
            });
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let label = trained.model.config().attention_variant().label();
    let output = EvalOutput {
        model: EvalReport::new(dataset.name(), label, digest.clone(), cfg.seed(), rows.0, elapsed)
            .with_reference(Some(anchors::timeexpert_etth1())),
        baseline: EvalReport::new(dataset.name(), "repeat_last", digest, cfg.seed(), rows.1, elapsed),
    };
    let mut csv_rows = Vec::new();
    for r in [&output.model, &output.baseline] {
        for h in &r.horizons {
            println!("{:<12} horizon {:>4}  mse {}  mae {}", r.variant, h.horizon, fmt_metric(h.mse), fmt_metric(h.mae));
            csv_rows.push(MetricRow {
                variant: &r.variant,
                horizon: h.horizon,
                mse: h.mse,
                mae: h.mae,
            });
        }
    }
    write_rows_csv(log.path("eval.csv"), &csv_rows)?;
    write_json(log.path("eval.json"), &output)?;
    log.finish(Some(&cfg), cfg.seed(), cfg.train.workers)
}

#[derive(Serialize)]
struct ForecastRow<'a> {
    window_id: usize,
    channel: &'a str,
    step: usize,
    prediction: f32,
    truth: Option<f32>,
}

fn cmd_predict(run: &RunArgs, checkpoint: &Path, split: SplitArg, stride: usize) -> Result<()> {
    let Prepared { cfg, dataset } = prepare(run)?;
    let trained = load_trained(&cfg, checkpoint)?;
    let mut log = RunLog::new("predict", &cfg.output_dir)?;
    let lookback = trained.model.config().patch.lookback;
    let horizon = eval_horizons(&cfg, &trained.model)[0];
    let windows = dataset.windows(split.into(), lookback, horizon, stride)?;
    let channels = &dataset.series.channels;
    let mut rows = Vec::with_capacity(windows.len() * horizon * channels.len());
    for (id, w) in windows.iter().enumerate() {
        let y = dataset.scaler.invert(&trained.forecast(&w.lookback, horizon)?);
        let truth = dataset.scaler.invert(&w.target);
        for (c, name) in channels.iter().enumerate() {
            for step in 0..horizon {
                rows.push(ForecastRow {
                    window_id: id,
                    channel: name,
                    step,
                    prediction: y.at(step, c),
                    truth: Some(truth.at(step, c)),
                });
            }
        }
    }
    let path = log.path("forecast.csv");
    write_rows_csv(&path, &rows)?;
    println!("{} windows forecast, written to {}", windows.len(), path.display());
    log.finish(Some(&cfg), cfg.seed(), cfg.train.workers)
}

fn cmd_ablate(
    run: &RunArgs,
    name: &'static str,
    ablation: fn(&Experiment) -> tmoe::Result<ComparisonTable>,
) -> Result<()> {
    let Prepared { cfg, dataset } = prepare(run)?;
    let mut log = RunLog::new(name, &cfg.output_dir)?;
    let table = ablation(&experiment(&cfg, &dataset))?;
    print_table(&table);
    write_rows_csv(log.path(&format!("{name}.csv")), &table.rows)?;
    write_json(log.path(&format!("{name}.json")), &table)?;
    log.finish(Some(&cfg), cfg.seed(), cfg.train.workers)
}

#[derive(Serialize)]
struct EnvelopeRow {
    horizon: usize,
    seeds: usize,
    mse_mean: f64,
    mse_std: f64,
    mae_mean: f64,
    mae_std: f64,
}

fn cmd_sweep(run: &RunArgs, ks: &[usize], reference_seeds: usize) -> Result<()> {
    let Prepared { cfg, dataset } = prepare(run)?;
    let mut log = RunLog::new("sweep_topk", &cfg.output_dir)?;
    let sweep = sweep_topk(&experiment(&cfg, &dataset), ks, reference_seeds)?;
    println!("{:>4} {:>8} {:>10} {:>10}", "k", "horizon", "mse", "mae");
    for r in &sweep.rows {
        println!("{:>4} {:>8} {:>10} {:>10}", r.k, r.horizon, fmt_metric(r.mse), fmt_metric(r.mae));
    }
    for e in &sweep.reference {
        println!(
            "full attention, horizon {}: mse {} +- {} over {} seeds",
            e.horizon,
            fmt_metric(e.mse_mean),
            fmt_metric(e.mse_std),
            e.seeds.len()
        );
    }
    write_rows_csv(log.path("sweep_topk.csv"), &sweep.rows)?;
    let reference: Vec<EnvelopeRow> = sweep
        .reference
        .iter()
        .map(|e| EnvelopeRow {
            horizon: e.horizon,
            seeds: e.seeds.len(),
            mse_mean: e.mse_mean,
            mse_std: e.mse_std,
            mae_mean: e.mae_mean,
            mae_std: e.mae_std,
        })
        .collect();
    write_rows_csv(log.path("sweep_topk_reference.csv"), &reference)?;
    write_json(log.path("sweep_topk.json"), &sweep)?;
    log.finish(Some(&cfg), cfg.seed(), cfg.train.workers)
}

#[derive(Serialize)]
struct RobustnessRow<'a> {
    variant: &'a str,
    anomaly: &'static str,
    seed: u64,
    windows: usize,
    clean_mse: f64,
    corrupted_mse: f64,
    deviation: f64,
    selection_fraction: Option<f64>,
}

fn cmd_anomaly(run: &RunArgs, specs: &[AnomalySpec], seeds: &[u64], max_windows: usize) -> Result<()> {
    let Prepared { cfg, dataset } = prepare(run)?;
    let lookback = cfg.model.patch.lookback;
    for s in specs {
        if s.position + s.length > lookback {
            return Err(Error::Config(format!(
                "anomaly region {}..{} does not fit in a lookback of {lookback}",
                s.position,
                s.position + s.length
            ))
            .into());
        }
    }
    let seeds = if seeds.is_empty() { vec![cfg.seed()] } else { seeds.to_vec() };
    let mut log = RunLog::new("anomaly_bench", &cfg.output_dir)?;
    let exp = experiment(&cfg, &dataset);
    let h = cfg.model.horizon;
    let mut variants = Vec::new();
    for v in [AttentionVariant::Full, AttentionVariant::Random, AttentionVariant::Tmoe] {
        let mut m = cfg.model.clone();
        m.tmoe.variant = v;
        println!("training {} attention", v.label());
        variants.push((v.label().to_string(), exp.fit(&m, h)?.predictor));
    }
    let test = dataset.windows(Split::Test, lookback, h, cfg.eval_stride)?;
    let reports = anomaly_harness(&variants, &test, specs, &seeds, max_windows)?;
    let rows: Vec<RobustnessRow> = reports
        .iter()
        .map(|r| RobustnessRow {
            variant: &r.variant,
            anomaly: r.anomaly.label(),
            seed: r.seed,
            windows: r.windows,
            clean_mse: r.clean_mse,
            corrupted_mse: r.corrupted_mse,
            deviation: r.deviation,
            selection_fraction: r.selection_fraction,
        })
        .collect();
    println!(
        "{:<8} {:<22} {:>5} {:>10} {:>10} {:>10} {:>9}",
        "variant", "anomaly", "seed", "clean", "corrupted", "deviation", "in-mask"
    );
    for r in &rows {
        println!(
            "{:<8} {:<22} {:>5} {:>10} {:>10} {:>10} {:>9}",
            r.variant,
            r.anomaly,
            r.seed,
            fmt_metric(r.clean_mse),
            fmt_metric(r.corrupted_mse),
            fmt_metric(r.deviation),
            r.selection_fraction.map_or("n/a".to_string(), |f| format!("{f:.3}"))
        );
    }
    write_rows_csv(log.path("robustness.csv"), &rows)?;
    write_json(log.path("robustness.json"), &reports)?;
    log.finish(Some(&cfg), cfg.seed(), cfg.train.workers)
}

fn env_or(seed: Option<u64>) -> Result<u64> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")).into()),
        Err(_) => Ok(0),
    }
}

fn cmd_synth(
    periods: Vec<f64>,
    amplitudes: Vec<f64>,
    noise: f64,
    length: usize,
    channels: usize,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let seed = env_or(seed)?;
    let amplitudes = if amplitudes.is_empty() { vec![1.0; periods.len()] } else { amplitudes };
    let spec = SynthSpec {
        periods,
        amplitudes,
        noise,
        length,
        channels,
        seed,
    };
    let series = synth_series(&spec)?;
    let dir = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut log = RunLog::new("synth", &dir)?;
    write_csv(&series, out)?;
    log.outputs.push(out.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default());
    println!("wrote {} rows x {} channels to {}", length, channels, out.display());
    log.finish(None, seed, 1)
}

fn cmd_gradcheck(tiny: bool, config: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let file = config.map(read_config).transpose()?;
    let seed = env_or(seed.or(file.as_ref().and_then(|c| c.seed)))?;
    let model = match (&file, tiny) {
        (Some(c), false) => Some(c.model.clone()),
        _ => None,
    };
    let dir = out
        .or_else(|| file.as_ref().map(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let mut log = RunLog::new("gradcheck", &dir)?;
    let suite = gradient_suite(model.as_ref(), seed)?;
    for c in &suite.checks {
        println!(
            "{:<14} {:>6} entries  max rel. error {:.3e}  (worst: {})",
            c.name, c.checked, c.max_rel_error, c.worst_param
        );
    }
    let worst = suite.max_rel_error();
    println!("max rel. error {worst:.3e}");
    write_json(log.path("gradcheck.json"), &suite)?;
    log.finish(file.as_ref(), seed, 1)?;
    if worst > GRADCHECK_TOLERANCE {
        return Err(CliError::Failed(format!(
            "gradient check failed: {worst:.3e} exceeds {GRADCHECK_TOLERANCE:e}"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct LagRow {
    input_patch: usize,
    output_patch: usize,
    lag: usize,
    correlation: f64,
    count: usize,
}

fn cmd_lagmap(run: &RunArgs, patch_len: usize, lookback: Option<usize>, stride: usize) -> Result<()> {
    let cfg = resolve(run)?;
    let series = cfg.load_series()?;
    let lookback = lookback.unwrap_or(cfg.model.patch.lookback);
    let horizon = cfg.horizons[0];
    let mut log = RunLog::new("lagmap", &cfg.output_dir)?;
    let map = lag_correlation_map(&series.values, lookback, horizon, patch_len, stride)?;
    let mut rows = Vec::new();
    for (i, row) in map.matrix.iter().enumerate() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:+.3}")).collect();
        println!("in {i:>3}: {}", line.join(" "));
        for (j, &v) in row.iter().enumerate() {
            rows.push(LagRow {
                input_patch: i,
                output_patch: j,
                lag: map.lag(i, j),
                correlation: v,
                count: map.counts[i][j],
            });
        }
    }
    write_rows_csv(log.path("lagmap.csv"), &rows)?;
    write_json(log.path("lagmap.json"), &map)?;
    log.finish(Some(&cfg), cfg.seed(), cfg.train.workers)
}
