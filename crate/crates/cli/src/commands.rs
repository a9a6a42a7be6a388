use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use adformer::clustering::{build_hierarchy, similarity_matrix, HierarchyFile};
use adformer::diffcore::Real;
use adformer::evaluation::{persistence_baseline, EvaluationReport, HistoricalAverage, MetricReport, DEFAULT_THRESHOLD};
use adformer::model::AdFormer;
use adformer::pipeline::{
    chronological_split, ingest_trips, make_windows, parse_timestamp, read_trips_csv, DemandTensor, ForecastBatch,
    Splits, DEFAULT_RATIOS,
};
use adformer::pipeline::Normalizer;
use adformer::training::{
    evaluate_windows, predict_windows, train, Checkpoint, EpochRecord, Precision, TrainObserver,
    TrainingData,
};
use anyhow::{anyhow, bail, Context, Result};
use chrono::DateTime;
use serde_json::json;

use crate::config::{require, RunConfig};

const EVAL_HORIZONS: [usize; 3] = [1, 3, 6];

fn load_archive(config: &RunConfig) -> Result<DemandTensor> {
    require(&config.paths.archive)?;
    let tensor = DemandTensor::read_archive(&config.paths.archive)
        .with_context(|| format!("reading {}", config.paths.archive.display()))?;
    if tensor.bin_width() != config.pipeline.bin_width_secs {
        bail!(
            "archive bin width {}s differs from pipeline.bin_width_secs {}s; re-run ingest",
            tensor.bin_width(),
            config.pipeline.bin_width_secs
        );
    }
    Ok(tensor)
}

fn split(tensor: &DemandTensor) -> Result<Splits> {
    Ok(chronological_split(tensor, DEFAULT_RATIOS)?)
}

fn ensure_output_dir(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.paths.output_dir)
        .with_context(|| format!("creating {}", config.paths.output_dir.display()))
}

pub fn ingest(config: &RunConfig) -> Result<()> {
    require(&config.paths.trips)?;
    let offset = config.offset()?;
    let file = File::open(&config.paths.trips).with_context(|| format!("opening {}", config.paths.trips.display()))?;
    let records =
        read_trips_csv(file, &offset).with_context(|| format!("reading {}", config.paths.trips.display()))?;
    let tensor = ingest_trips(records, config.pipeline.bin_width_secs, offset)?;
    if let Some(dir) = config.paths.archive.parent() {
        fs::create_dir_all(dir)?;
    }
    tensor.write_archive(&config.paths.archive)?;
    println!(
        "ingested {} steps x {} regions, {} trips -> {}",
        tensor.steps(),
        tensor.n_regions(),
        tensor.total(),
        config.paths.archive.display()
    );
    Ok(())
}

pub fn cluster(config: &RunConfig) -> Result<()> {
    let tensor = load_archive(config)?;
    let splits = split(&tensor)?;
    let sim = similarity_matrix(&splits.train)?;
    let factor = config.clustering.threshold_factor;
    let hierarchy = build_hierarchy(&sim, &config.clustering.level_counts, factor)?;
    let file = HierarchyFile::new(&hierarchy, tensor.n_regions(), factor, splits.train.fingerprint());
    if let Some(dir) = config.paths.hierarchy.parent() {
        fs::create_dir_all(dir)?;
    }
    file.save(&config.paths.hierarchy)?;
    println!(
        "clustered {} regions into levels {:?} -> {}",
        tensor.n_regions(),
        hierarchy.level_counts(),
        config.paths.hierarchy.display()
    );
    Ok(())
}

fn load_hierarchy(config: &RunConfig, train_split: &DemandTensor) -> Result<HierarchyFile> {
    require(&config.paths.hierarchy)?;
    let file = HierarchyFile::load(&config.paths.hierarchy)
        .with_context(|| format!("reading {}", config.paths.hierarchy.display()))?;
    if file.fingerprint != train_split.fingerprint() {
        bail!(
            "hierarchy {} was built from different training data (fingerprint mismatch); re-run cluster",
            config.paths.hierarchy.display()
        );
    }
    if file.level_counts != config.clustering.level_counts {
        bail!(
            "hierarchy has levels {:?} but clustering.level_counts is {:?}; re-run cluster",
            file.level_counts,
            config.clustering.level_counts
        );
    }
    Ok(file)
}

struct CliObserver {
    history: BufWriter<File>,
    checkpoint_path: PathBuf,
    template: Checkpoint,
    saved: bool,
}

impl CliObserver {
    fn write_line(&mut self, line: &str) -> adformer::Result<()> {
        writeln!(self.history, "{line}")?;
        self.history.flush()?;
        Ok(())
    }
}

impl<T: Real> TrainObserver<T> for CliObserver {
    fn on_epoch(&mut self, record: &EpochRecord) -> adformer::Result<()> {
        self.write_line(&record.to_json_line())?;
        eprintln!(
            "epoch {:>3}  lr {:.2e}  train {:.4}  val mae {}",
            record.epoch,
            record.lr,
            record.train_loss,
            record.val_mae.map_or("n/a".into(), |v| format!("{v:.4}"))
        );
        Ok(())
    }

    fn on_improvement(&mut self, model: &AdFormer<T>, record: &EpochRecord) -> adformer::Result<()> {
        self.template.epoch = record.epoch;
        self.template.val_score = record.val_mae;
        self.template.params = model.params().cast();
        let tmp = self.checkpoint_path.with_extension("tmp");
        self.template.save(&tmp)?;
        fs::rename(&tmp, &self.checkpoint_path)?;
        self.saved = true;
        Ok(())
    }

    fn on_abort(&mut self, epoch: usize, reason: &str) -> adformer::Result<()> {
        let line = json!({"event": "abort", "epoch": epoch, "reason": reason}).to_string();
        self.write_line(&line)?;
        if self.saved {
            fs::rename(&self.checkpoint_path, partial_path(&self.checkpoint_path))?;
        }
        Ok(())
    }
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".partial");
    PathBuf::from(name)
}

pub fn history_path(config: &RunConfig) -> PathBuf {
    config.paths.output_dir.join("history.jsonl")
}

pub fn train_cmd(config: &RunConfig) -> Result<()> {
    let tensor = load_archive(config)?;
    let splits = split(&tensor)?;
    let hierarchy_file = load_hierarchy(config, &splits.train)?;
    let hierarchy = hierarchy_file.hierarchy()?;
    let normalizer = Normalizer::fit(&splits.train);
    let (t, h) = (config.pipeline.input_steps, config.pipeline.horizon);
    let train_w = make_windows(&splits.train, t, h, &normalizer)?;
    let val_w = make_windows(&splits.val, t, h, &normalizer)?;
    ensure_output_dir(config)?;
    if let Some(dir) = config.paths.checkpoint.parent() {
        fs::create_dir_all(dir)?;
    }
    let _ = fs::remove_file(partial_path(&config.paths.checkpoint));
    let history = BufWriter::new(File::create(history_path(config))?);
    let template = Checkpoint {
        model: config.model.clone(),
        train: config.train.clone(),
        region_ids: tensor.region_ids().to_vec(),
        normalizer: normalizer.clone(),
        hierarchy: hierarchy_file,
        epoch: 0,
        val_score: None,
        params: Default::default(),
    };
    let mut observer = CliObserver {
        history,
        checkpoint_path: config.paths.checkpoint.clone(),
        template,
        saved: false,
    };
    let data = TrainingData {
        train: &train_w,
        val: &val_w,
        normalizer: &normalizer,
    };
    eprintln!(
        "training on {} windows ({} validation), {} regions, precision {:?}",
        train_w.len(),
        val_w.len(),
        tensor.n_regions(),
        config.train.precision
    );
    let summary = match config.train.precision {
        Precision::F64 => run_train::<f64>(config, &hierarchy, tensor.n_regions(), data, &mut observer),
        Precision::F32 => run_train::<f32>(config, &hierarchy, tensor.n_regions(), data, &mut observer),
    };
    let (best_epoch, best_score, epochs, early) = summary.map_err(|e| {
        anyhow!(e).context(format!(
            "training aborted; history in {}, partial checkpoint (if any) labelled .partial",
            history_path(config).display()
        ))
    })?;
    println!(
        "trained {epochs} epochs{}; best epoch {best_epoch} (val masked MAE {best_score:.4}) -> {}",
        if early { " (early stop)" } else { "" },
        config.paths.checkpoint.display()
    );
    Ok(())
}

fn run_train<T: Real>(
    config: &RunConfig,
    hierarchy: &adformer::clustering::ClusterHierarchy,
    n_regions: usize,
    data: TrainingData<'_>,
    observer: &mut CliObserver,
) -> adformer::Result<(usize, f64, usize, bool)> {
    let model = AdFormer::<T>::new(&config.model, n_regions, hierarchy, config.seed)?;
    let out = train(model, data, &config.train, observer)?;
    Ok((out.best_epoch, out.best_score, out.history.len(), out.stopped_early))
}

fn load_checkpoint(config: &RunConfig) -> Result<Checkpoint> {
    require(&config.paths.checkpoint)?;
    let ckpt = Checkpoint::load(&config.paths.checkpoint)
        .with_context(|| format!("reading {}", config.paths.checkpoint.display()))?;
    let (t, h) = (config.pipeline.input_steps, config.pipeline.horizon);
    if ckpt.model.input_steps != t || ckpt.model.horizon != h {
        bail!(
            "checkpoint was trained with T={} H={} but the config asks for T={t} H={h}",
            ckpt.model.input_steps,
            ckpt.model.horizon
        );
    }
    Ok(ckpt)
}

fn check_regions(ckpt: &Checkpoint, tensor: &DemandTensor) -> Result<()> {
    if ckpt.region_ids != tensor.region_ids() {
        bail!(
            "checkpoint covers {} regions, archive has {}; region ids must match in order",
            ckpt.region_ids.len(),
            tensor.n_regions()
        );
    }
    Ok(())
}

enum AnyModel {
    F64(AdFormer<f64>),
    F32(AdFormer<f32>),
}

impl AnyModel {
    fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(match ckpt.train.precision {
            Precision::F64 => AnyModel::F64(ckpt.build_model()?),
            Precision::F32 => AnyModel::F32(ckpt.build_model()?),
        })
    }

    fn evaluate(&self, windows: &[ForecastBatch], norm: &Normalizer, batch: usize, threshold: f64) -> Result<MetricReport> {
        Ok(match self {
            AnyModel::F64(m) => evaluate_windows(m, windows, norm, batch, threshold)?,
            AnyModel::F32(m) => evaluate_windows(m, windows, norm, batch, threshold)?,
        })
    }

    fn predict(&self, windows: &[ForecastBatch], norm: &Normalizer) -> Result<Vec<f64>> {
        Ok(match self {
            AnyModel::F64(m) => predict_windows(m, windows, norm, 1)?,
            AnyModel::F32(m) => predict_windows(m, windows, norm, 1)?,
        })
    }
}

pub fn report_horizons(horizon: usize) -> Vec<usize> {
    let mut hs: Vec<usize> = EVAL_HORIZONS.iter().copied().filter(|&s| s <= horizon).collect();
    hs.push(horizon);
    hs.dedup();
    hs
}

pub fn eval(config: &RunConfig) -> Result<()> {
    let ckpt = load_checkpoint(config)?;
    let tensor = load_archive(config)?;
    check_regions(&ckpt, &tensor)?;
    let splits = split(&tensor)?;
    if ckpt.hierarchy.fingerprint != splits.train.fingerprint() {
        bail!("checkpoint was trained on different data (training split fingerprint mismatch)");
    }
    let threshold = if ckpt.train.threshold > 0.0 { ckpt.train.threshold } else { DEFAULT_THRESHOLD };
    let model = AnyModel::from_checkpoint(&ckpt)?;
    let (t, h) = (config.pipeline.input_steps, config.pipeline.horizon);
    let windows = make_windows(&splits.test, t, h, &ckpt.normalizer)?;
    let all = ForecastBatch::stack(&windows.iter().collect::<Vec<_>>())?;
    let shape = all.target_shape();
    let mut report = EvaluationReport::new(
        config.paths.archive.file_name().map_or("test".into(), |n| n.to_string_lossy().into_owned()),
        threshold,
        report_horizons(h),
    );
    report.push("adformer", model.evaluate(&windows, &ckpt.normalizer, ckpt.train.batch_size, threshold)?);
    report.push(
        "persistence",
        MetricReport::compute(&persistence_baseline(&all), &all.targets, shape, threshold)?,
    );
    let ha = HistoricalAverage::fit(&splits.train)?;
    report.push(
        "historical-average",
        MetricReport::compute(&ha.predict(&all)?, &all.targets, shape, threshold)?,
    );
    ensure_output_dir(config)?;
    let json_path = config.paths.output_dir.join("eval.json");
    let table_path = config.paths.output_dir.join("eval.txt");
    fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
    let table = report.to_table();
    fs::write(&table_path, &table)?;
    print!("{table}");
    eprintln!("wrote {} and {}", json_path.display(), table_path.display());
    Ok(())
}

pub fn forecast(config: &RunConfig, start: &str, output: Option<&Path>) -> Result<()> {
    let ckpt = load_checkpoint(config)?;
    let tensor = load_archive(config)?;
    check_regions(&ckpt, &tensor)?;
    let offset = tensor.utc_offset();
    let start_ts = parse_timestamp(start, &offset)
        .or_else(|| start.trim().parse::<i64>().ok())
        .ok_or_else(|| anyhow!("unparseable start timestamp {start:?}"))?;
    let (t, h) = (config.pipeline.input_steps, config.pipeline.horizon);
    let bin = tensor.bin_width();
    let delta = start_ts - tensor.start();
    if delta % bin != 0 {
        bail!("start {start} is not aligned to the {bin}s bin grid");
    }
    let step = delta.div_euclid(bin);
    if step < t as i64 || step > tensor.steps() as i64 {
        bail!(
            "insufficient history: forecasting from {start} needs the {t} steps before it, archive covers steps 0..{}",
            tensor.steps()
        );
    }
    let step = step as usize;
    let cell = tensor.n_regions() * tensor.n_features();
    let mut values = tensor.values()[(step - t) * cell..step * cell].to_vec();
    values.resize((t + h) * cell, 0.0);
    let span = DemandTensor::new(
        values,
        t + h,
        tensor.region_ids().to_vec(),
        tensor.n_features(),
        tensor.timestamp(step - t),
        bin,
        offset.local_minus_utc(),
    )?;
    let window = make_windows(&span, t, h, &ckpt.normalizer)?;
    let model = AnyModel::from_checkpoint(&ckpt)?;
    let pred = model.predict(&window, &ckpt.normalizer)?;

    let path = match output {
        Some(p) => p.to_path_buf(),
        None => {
            ensure_output_dir(config)?;
            config.paths.output_dir.join("forecast.csv")
        }
    };
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["region_id", "horizon_step", "timestamp", "predicted_demand"])?;
    let features = tensor.n_features();
    for (r, id) in tensor.region_ids().iter().enumerate() {
        for k in 0..h {
            let ts = start_ts + k as i64 * bin;
            let stamp = DateTime::from_timestamp(ts, 0)
                .ok_or_else(|| anyhow!("timestamp {ts} out of range"))?
                .with_timezone(&offset)
                .to_rfc3339();
            let v = pred[k * cell + r * features].max(0.0);
            w.write_record([id.clone(), (k + 1).to_string(), stamp, format!("{v}")])?;
        }
    }
    w.flush()?;
    println!("wrote {} rows -> {}", tensor.n_regions() * h, path.display());
    Ok(())
}

